import numpy as np
import pytest

from platelayout.field import GridMismatchError, GridSpec, HoleSpec, LayoutSpec, builtin_case
from platelayout.nn import checkpoint
from platelayout.nn.adam import TrainingError
from platelayout.nn.unet import UNetConfig, build_network
from platelayout.train import Surrogate, TrainingConfig, TrainingHistory, make_batch, predict, train

SMALL = UNetConfig(depth=3, base_channels=4)


def small_config(**kw):
    base = dict(case=builtin_case(1, GridSpec(32, 32)), network=SMALL, batch=2, epochs=3, seed=0)
    base.update(kw)
    return TrainingConfig(**base)


def test_make_batch_case1_shapes_and_channels():
    inputs, masks = make_batch(builtin_case(1), 10, np.random.default_rng(0))
    assert inputs.shape == (10, 2, 128, 128)
    for k in range(10):
        zeros = int((inputs[k, 1] == 0).sum())
        assert 360 <= zeros <= 440
        assert np.all(inputs[k, 0, :, 0] == 1.0) and np.all(inputs[k, 0, :, 1:] == 0.0)
        assert np.array_equal(inputs[k, 1], masks[k].values)


def test_make_batch_fixed_layout_deterministic():
    layout = LayoutSpec((HoleSpec(64, 64, 10, 10),))
    a, _ = make_batch(builtin_case(1), 1, np.random.default_rng(5), fixed_layout=layout)
    b, _ = make_batch(builtin_case(1), 1, np.random.default_rng(5), fixed_layout=layout)
    assert np.array_equal(a, b)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(batch=0)
    with pytest.raises(ValueError):
        small_config(lr=0.0)


def test_zero_epochs_returns_initialization():
    net, history = train(small_config(epochs=0))
    init_seq = np.random.SeedSequence(0).spawn(3)[0]
    ref = build_network(SMALL, np.random.default_rng(init_seq))
    assert len(history) == 0
    for k, v in ref.state().items():
        assert np.array_equal(net.state()[k], v)


def test_training_deterministic(tmp_path):
    _, h1 = train(small_config(seed=7))
    _, h2 = train(small_config(seed=7))
    assert h1.loss == h2.loss and h1.epochs == [1, 2, 3]
    h1.to_csv(tmp_path / "a.csv")
    h2.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_training_reduces_loss_on_fixed_layout():
    layout = LayoutSpec((HoleSpec(8, 8, 4, 4),))
    _, history = train(small_config(epochs=60, batch=1, fixed_layout=layout, network=UNetConfig(depth=3, base_channels=8)))
    assert history.loss[-1] < history.loss[0]


def test_checkpoint_written_with_metadata(tmp_path):
    path = tmp_path / "ck.bin"
    net, _ = train(small_config(epochs=2), checkpoint_path=path)
    loaded, meta, adam = checkpoint.load(path)
    assert meta["grid"] == [32, 32] and meta["epoch"] == 2
    assert adam.step == 2
    assert all(np.array_equal(a, b) for a, b in zip(net.state().values(), loaded.state().values()))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_aborts_with_last_good(tmp_path):
    with pytest.raises(TrainingError) as info:
        train(small_config(lr=1e300, epochs=20), checkpoint_path=tmp_path / "ck.bin")
    assert info.value.params is not None
    assert (tmp_path / "ck.bin").exists()


def test_history_epochs_strictly_increase():
    h = TrainingHistory()
    h.record(1, 0.5, 0.0)
    with pytest.raises(ValueError):
        h.record(1, 0.4, 0.0)


def test_history_csv_timing_is_opt_in(tmp_path):
    h = TrainingHistory()
    h.record(1, 0.25, 1.5)
    h.to_csv(tmp_path / "h.csv")
    h.to_csv(tmp_path / "t.csv", timing=True)
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,loss,rms_residual", "1,0.25,0.5"]
    assert (tmp_path / "t.csv").read_text().splitlines()[0].endswith("seconds")


def test_predict_is_deterministic_and_overwrites_holes():
    grid = GridSpec(16, 16)
    net = build_network(UNetConfig(depth=3, base_channels=4, dropout=0.2), np.random.default_rng(0))
    layout = LayoutSpec((HoleSpec(8, 8, 4, 6),))
    a = predict(net, layout, grid)
    b = predict(net, layout, grid)
    assert np.array_equal(a.values, b.values)
    assert np.all(a.values[6:10, 5:11] == 0.0)
    assert np.all(a.values[:, 0] == 1.0)


def test_predict_grid_mismatch():
    net = build_network(UNetConfig(depth=4, base_channels=2), np.random.default_rng(0))
    with pytest.raises(GridMismatchError):
        predict(net, LayoutSpec(), GridSpec(24, 24))


def test_surrogate_from_checkpoint(tmp_path):
    path = tmp_path / "ck.bin"
    net, _ = train(small_config(epochs=1), checkpoint_path=path)
    sur = Surrogate.from_checkpoint(path)
    assert sur.grid == GridSpec(32, 32)
    layout = LayoutSpec((HoleSpec(8, 8, 2, 2),))
    assert np.array_equal(sur.predict(layout).values, predict(net, layout, GridSpec(32, 32)).values)
