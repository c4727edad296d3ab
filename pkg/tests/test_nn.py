import numpy as np
import pytest

from layer_cases import layer_losses
from platelayout.nn import functional as F
from platelayout.nn import tensor as T
from platelayout.nn.adam import Adam, AdamState, TrainingError, adam_step
from platelayout.nn.checkpoint import CheckpointError, dumps, loads
from platelayout.nn.gradcheck import grad_check, network_grad_check
from platelayout.nn.tensor import Tensor
from platelayout.nn.unet import UNetConfig, build_network, check_skip_shapes, unet_forward


def naive_conv2d(x, w, b, stride, pad):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = (H + 2 * pad - k) // stride + 1, (W + 2 * pad - k) // stride + 1
    out = np.zeros((B, O, ho, wo))
    for n in range(B):
        for o in range(O):
            for i in range(ho):
                for j in range(wo):
                    acc = b[o]
                    for c in range(C):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[n, c, i * stride + di, j * stride + dj] * w[o, c, di, dj]
                    out[n, o, i, j] = acc
    return out


def naive_conv_transpose2d(x, w, b, stride, pad):
    B, Ci, H, W = x.shape
    _, Co, k, _ = w.shape
    ho, wo = (H - 1) * stride - 2 * pad + k, (W - 1) * stride - 2 * pad + k
    full = np.zeros((B, Co, ho + 2 * pad, wo + 2 * pad))
    for n in range(B):
        for c in range(Ci):
            for i in range(H):
                for j in range(W):
                    for o in range(Co):
                        full[n, o, i * stride:i * stride + k, j * stride:j * stride + k] += x[n, c, i, j] * w[c, o]
    out = full[:, :, pad:pad + ho, pad:pad + wo]
    return out + b[None, :, None, None]


def test_conv_ones_gives_nine():
    y = F.conv2d_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert y.shape == (1, 1, 1, 1) and y[0, 0, 0, 0] == 9.0


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 6, 5))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    assert np.array_equal(F.conv2d_forward(x, w, None, 1, 1), x)


@pytest.mark.parametrize("k,stride,pad", [(3, 1, 0), (3, 1, 1), (4, 2, 1), (3, 2, 1), (4, 1, 2)])
def test_conv_matches_naive(k, stride, pad):
    rng = np.random.default_rng(k * 10 + stride + pad)
    x = rng.normal(size=(2, 3, 9, 8))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    assert np.abs(F.conv2d_forward(x, w, b, stride, pad) - naive_conv2d(x, w, b, stride, pad)).max() <= 1e-12


@pytest.mark.parametrize("k,stride,pad", [(4, 2, 1), (3, 1, 1), (3, 2, 0)])
def test_conv_transpose_matches_naive(k, stride, pad):
    rng = np.random.default_rng(7 + k + stride)
    x = rng.normal(size=(2, 3, 4, 5))
    w = rng.normal(size=(3, 2, k, k))
    b = rng.normal(size=2)
    got = F.conv_transpose2d_forward(x, w, b, stride, pad)
    assert np.abs(got - naive_conv_transpose2d(x, w, b, stride, pad)).max() <= 1e-12


def test_conv_shape_errors():
    with pytest.raises(ValueError):
        F.conv2d_forward(np.ones((1, 2, 5, 5)), np.ones((1, 3, 3, 3)))
    with pytest.raises(ValueError):
        F.conv2d_forward(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))


def test_conv_backward_zero_upstream():
    rng = np.random.default_rng(0)
    x, w = rng.normal(size=(1, 2, 6, 6)), rng.normal(size=(3, 2, 4, 4))
    gx, gw, gb = F.conv2d_backward(np.zeros((1, 3, 3, 3)), x, w, 2, 1)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_scalar_output_is_scaled_kernel():
    rng = np.random.default_rng(1)
    x, w = rng.normal(size=(1, 1, 3, 3)), rng.normal(size=(1, 1, 3, 3))
    gx, gw, _ = F.conv2d_backward(np.full((1, 1, 1, 1), 2.5), x, w)
    assert np.allclose(gx, 2.5 * w)
    assert np.allclose(gw, 2.5 * x)


def _fd_relative_error(f, arr, analytic, eps=1e-4):
    worst = 0.0
    flat = arr.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + eps
        up = f()
        flat[k] = old - eps
        down = f()
        flat[k] = old
        fd = (up - down) / (2 * eps)
        a = analytic.reshape(-1)[k]
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
    return worst


@pytest.mark.parametrize("transposed", [False, True])
def test_conv_backward_matches_finite_differences(transposed):
    rng = np.random.default_rng(3)
    if transposed:
        x, w, b = rng.normal(size=(2, 2, 3, 3)), rng.normal(size=(2, 3, 4, 4)), rng.normal(size=3)
        fwd, bwd = F.conv_transpose2d_forward, F.conv_transpose2d_backward
    else:
        x, w, b = rng.normal(size=(2, 2, 6, 6)), rng.normal(size=(3, 2, 4, 4)), rng.normal(size=3)
        fwd, bwd = F.conv2d_forward, F.conv2d_backward
    probe = rng.normal(size=fwd(x, w, b, 2, 1).shape)

    def loss():
        return float(np.sum(fwd(x, w, b, 2, 1) * probe))

    gx, gw, gb = bwd(probe, x, w, 2, 1)
    for arr, g in ((x, gx), (w, gw), (b, gb)):
        assert _fd_relative_error(loss, arr, g) <= 1e-4


def test_batch_norm_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 2, 4, 4))
    scale, shift = rng.normal(size=2), rng.normal(size=2)
    probe = rng.normal(size=x.shape)

    def loss():
        return float(np.sum(F.batch_norm_forward(x, scale, shift)[0] * probe))

    _, cache, _, _ = F.batch_norm_forward(x, scale, shift)
    gx, gs, gb = F.batch_norm_backward(probe, cache, scale)
    for arr, g in ((x, gx), (scale, gs), (shift, gb)):
        assert _fd_relative_error(loss, arr, g) <= 1e-4


@pytest.mark.parametrize("layer", sorted(layer_losses(np.random.default_rng(0))))
def test_layer_grad_check_many_seeds(layer):
    for seed in range(20):
        loss, params = layer_losses(np.random.default_rng(seed))[layer]
        err = grad_check(loss, params, eps=1e-4, max_probes=12, rng=np.random.default_rng(seed))
        assert err <= 1e-4, (layer, seed, err)


def test_linear_layer_grad_check_tight():
    rng = np.random.default_rng(5)
    x, w, b = Tensor(rng.normal(size=(4, 3)), True), Tensor(rng.normal(size=(2, 3)), True), Tensor(rng.normal(size=2), True)
    probe = rng.normal(size=(4, 2))
    err = grad_check(lambda: T.sum_all(T.mul(T.linear(x, w, b), probe)), [x, w, b], max_probes=None)
    assert err <= 1e-7


def test_two_block_net_grad_check_many_seeds():
    cfg = UNetConfig(depth=2, base_channels=3, normalization=False)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = build_network(cfg, rng)
        x = rng.normal(size=(2, 2, 4, 4))
        stats = {}
        assert network_grad_check(net, x, eps=1e-4, max_probes=8, rng=rng, stats=stats) <= 1e-4
        assert stats["kinks"] <= 0.1 * stats["probes"]


def test_grad_check_skips_probe_across_relu_kink():
    x = Tensor(np.array([5e-5, 1.0]), True)
    stats = {}
    err = grad_check(lambda: T.sum_all(T.relu(x)), [x], eps=1e-4, max_probes=None, stats=stats)
    assert stats == {"probes": 1, "kinks": 1}
    assert err <= 1e-8


def test_normalized_net_grad_check():
    cfg = UNetConfig(depth=3, base_channels=2)
    rng = np.random.default_rng(9)
    net = build_network(cfg, rng)
    for blk in net.blocks():
        if blk.running_mean is not None:
            blk.running_mean[:] = rng.normal(size=blk.running_mean.shape)
            blk.running_var[:] = rng.uniform(0.5, 2, blk.running_var.shape)
    assert network_grad_check(net, rng.normal(size=(1, 2, 8, 8)), max_probes=6, rng=rng) <= 1e-4


def test_grad_check_refuses_training_mode():
    net = build_network(UNetConfig(depth=2, base_channels=2, dropout=0.5), np.random.default_rng(0))
    with pytest.raises(ValueError):
        network_grad_check(net, np.zeros((1, 2, 4, 4)), training=True)


def test_unet_output_shape_paper_input():
    net = build_network(UNetConfig(depth=7), np.random.default_rng(0))
    out = unet_forward(Tensor(np.zeros((10, 2, 128, 128))), net, training=False)
    assert out.shape == (10, 1, 128, 128)


def test_unet_inference_deterministic():
    net = build_network(UNetConfig(depth=4, dropout=0.3), np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(3, 2, 16, 16))
    a = unet_forward(Tensor(x), net, training=False).data
    b = unet_forward(Tensor(x), net, training=False).data
    assert np.array_equal(a, b)


def test_dropout_only_in_training():
    net = build_network(UNetConfig(depth=3, base_channels=4, dropout=0.5, normalization=False),
                        np.random.default_rng(1))
    x = Tensor(np.random.default_rng(2).normal(size=(1, 2, 8, 8)))
    eval_out = unet_forward(x, net, training=False).data
    train_out = unet_forward(x, net, training=True, rng=np.random.default_rng(3)).data
    assert not np.array_equal(eval_out, train_out)


def test_zero_weights_give_last_bias_everywhere():
    net = build_network(UNetConfig(depth=3, base_channels=4, normalization=False), np.random.default_rng(0))
    for p in net.parameters():
        p.data[...] = 0.0
    x = Tensor(np.random.default_rng(1).normal(size=(2, 2, 8, 8)))
    assert not unet_forward(x, net).data.any()
    net.decoder[-1].bias.data[...] = 0.125
    for blk in net.blocks()[:-1]:
        blk.bias.data[...] = 0.7
    assert np.all(unet_forward(x, net).data == 0.125)


def test_unet_rejects_indivisible_size():
    net = build_network(UNetConfig(depth=4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        unet_forward(Tensor(np.zeros((1, 2, 24, 24))), net)


@pytest.mark.parametrize("depth", range(1, 9))
def test_skip_connection_shape_law(depth):
    net = build_network(UNetConfig(depth=depth, base_channels=2, max_channels=16), np.random.default_rng(0))
    check_skip_shapes(net)
    assert net.skips[0] is None
    for j, blk in enumerate(net.decoder[1:], 1):
        assert blk.in_channels == 2 * net.encoder[net.skips[j]].out_channels
    assert net.decoder[-1].out_channels == 1


def test_channel_schedule_default():
    assert UNetConfig(depth=7).channels() == [8, 16, 32, 64, 128, 256, 256]
    assert UNetConfig.paper_scale().channels()[0] == 64


def test_adam_zero_gradient_leaves_params():
    p = np.array([1.0, -2.0])
    state = AdamState()
    adam_step([p], [np.zeros(2)], state)
    assert np.array_equal(p, [1.0, -2.0]) and state.step == 1


def test_adam_first_step_is_lr_against_gradient():
    for g in (3.0, -0.01):
        p = np.array([0.5])
        adam_step([p], [np.array([g])], AdamState(lr=1e-3))
        assert p[0] - 0.5 == pytest.approx(-np.sign(g) * 1e-3, rel=1e-4)


def test_adam_quadratic_descends():
    w = np.array([1.0])
    state = AdamState(lr=1e-3)
    for _ in range(200):
        adam_step([w], [2 * w.copy()], state)
    assert abs(w[0]) < 1.0
    # Reference: the same recurrence written out in scalars.
    ref, m, v = 1.0, 0.0, 0.0
    for t in range(1, 201):
        g = 2 * ref
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 1e-3 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert w[0] == pytest.approx(ref, rel=1e-12)


def test_adam_large_parameter_matches_closed_form():
    rng = np.random.default_rng(3)
    p, g = rng.normal(size=(3, 20001)), rng.normal(size=(3, 20001))
    expected = p - 1e-3 * (0.1 * g / 0.1) / (np.sqrt(0.001 * g * g / 0.001) + 1e-8)
    adam_step([p], [g], AdamState(lr=1e-3))
    assert np.allclose(p, expected, rtol=1e-12, atol=1e-15)


def test_adam_dead_moments_reach_exact_zero():
    p = np.array([1.0, 1.0])
    state = AdamState()
    adam_step([p], [np.array([1.0, 1.0])], state)
    for _ in range(8000):
        adam_step([p], [np.array([0.0, 1.0])], state)
    assert state.m[0][0] == 0.0
    assert state.m[0][1] == pytest.approx(1.0)


def test_adam_rejects_non_contiguous_params():
    p = np.zeros((4, 4))[:, ::2]
    state = AdamState()
    with pytest.raises(ValueError):
        adam_step([p], [np.ones_like(p)], state)
    assert state.step == 0


def test_adam_nonfinite_gradient_names_block():
    p = [np.zeros(2), np.zeros(3)]
    with pytest.raises(TrainingError) as info:
        adam_step(p, [np.zeros(2), np.array([0.0, np.inf, 0.0])], AdamState(), block_index=[0, 4])
    assert info.value.block_index == 4
    assert not p[1].any()


def test_adam_wrapper_steps_tensors():
    t = Tensor(np.ones(3), True)
    opt = Adam([(0, t)], lr=0.1)
    t.grad = np.ones(3)
    opt.step()
    assert np.allclose(t.data, 0.9)


def test_checkpoint_round_trip_bit_exact():
    net = build_network(UNetConfig(depth=3, base_channels=4), np.random.default_rng(4))
    net.encoder[1].running_mean[:] = [0.1, -0.2, 0.3, 1e-300, -7.0, 2.5, 0.0, 5.0][:net.encoder[1].running_mean.size]
    data = dumps(net, {"grid": [8, 8]})
    clone, meta, adam = loads(data)
    assert meta == {"grid": [8, 8]} and adam is None
    assert clone.config == net.config
    a, b = net.state(), clone.state()
    assert list(a) == list(b)
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()
    assert dumps(clone, {"grid": [8, 8]}) == data


def test_decoder_activation_choice():
    with pytest.raises(ValueError):
        UNetConfig(decoder_activation="tanh")
    cfg = UNetConfig(depth=3, base_channels=4, normalization=False, decoder_activation="leaky")
    net = build_network(cfg, np.random.default_rng(0))
    assert {blk.activation for blk in net.decoder} == {"leaky"}
    assert loads(dumps(net))[0].config == cfg


def test_checkpoint_with_adam_state():
    net = build_network(UNetConfig(depth=2, base_channels=2), np.random.default_rng(0))
    opt = Adam(net.named_parameters())
    for p in net.parameters():
        p.grad = np.ones_like(p.data)
    opt.step()
    _, _, adam = loads(dumps(net, adam=opt.state))
    assert adam.step == 1
    assert all(np.array_equal(x, y) for x, y in zip(adam.m, opt.state.m))


def test_checkpoint_rejects_garbage():
    with pytest.raises(CheckpointError):
        loads(b"not a checkpoint at all")
    net = build_network(UNetConfig(depth=2, base_channels=2), np.random.default_rng(0))
    with pytest.raises(CheckpointError):
        loads(dumps(net)[:-3])


def test_backward_accumulates_through_shared_nodes():
    x = Tensor(np.array([2.0, -1.0]), True)
    y = T.mul(x, x)
    z = T.sum_all(T.add(y, T.mul(y, 3.0)))
    z.backward()
    assert np.allclose(x.grad, 8 * x.data)
