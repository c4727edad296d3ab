"""Symmetric encoder-decoder with concatenating skip connections.

Every block applies, in order: batch normalization, activation, a 4x4
stride-2 (transposed) convolution and dropout.  The encoder halves the
spatial size down to a 1x1 bottleneck; the decoder mirrors it and each
decoder block after the first sees ``[decoder features, encoder features]``
of the same resolution.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 7
    base_channels: int = 8
    max_channels: int = 256
    in_channels: int = 2
    out_channels: int = 1
    kernel: int = 4
    normalization: bool = True
    dropout: float = 0.0
    leaky_slope: float = 0.2
    decoder_activation: str = "relu"
    momentum: float = 0.1
    eps: float = 1e-5

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.kernel != 4:
            # 4x4 with stride 2 and padding 1 halves and doubles sizes exactly.
            raise ValueError("the U-net uses 4x4 kernels")
        if self.decoder_activation not in ("relu", "leaky"):
            raise ValueError("decoder_activation must be 'relu' or 'leaky'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout probability must lie in [0, 1)")

    @classmethod
    def paper_scale(cls, **kw) -> "UNetConfig":
        return cls(**{"depth": 7, "base_channels": 64, "max_channels": 512, **kw})

    def channels(self) -> list[int]:
        return [min(self.base_channels * 2 ** i, self.max_channels) for i in range(self.depth)]

    def padding(self) -> int:
        return 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConvBlock:
    """One convolutional block: optional norm, activation, (transposed) conv, dropout."""

    name: str
    weight: Tensor
    bias: Tensor
    transposed: bool
    activation: str | None = None
    norm_scale: Tensor | None = None
    norm_shift: Tensor | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None
    dropout: float = 0.0
    stride: int = 2
    padding: int = 1

    @property
    def in_channels(self) -> int:
        return self.weight.shape[0] if self.transposed else self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[1] if self.transposed else self.weight.shape[0]

    def parameters(self) -> list[Tensor]:
        ps = [self.weight, self.bias]
        if self.norm_scale is not None:
            ps += [self.norm_scale, self.norm_shift]
        return ps

    def forward(self, x: Tensor, cfg: UNetConfig, training: bool, rng=None) -> Tensor:
        if self.norm_scale is not None:
            x = T.batch_norm(x, self.norm_scale, self.norm_shift, self.running_mean, self.running_var,
                             training, cfg.momentum, cfg.eps)
        if self.activation == "leaky":
            x = T.leaky_relu(x, cfg.leaky_slope)
        elif self.activation == "relu":
            x = T.relu(x)
        if self.transposed:
            x = T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)
        else:
            x = T.conv2d(x, self.weight, self.bias, self.stride, self.padding)
        return T.dropout(x, self.dropout, rng, training)


@dataclass
class NetworkParams:
    config: UNetConfig
    encoder: list[ConvBlock]
    decoder: list[ConvBlock]
    # skips[j] is the encoder index concatenated into decoder block j (None for the first).
    skips: list[int | None] = field(default_factory=list)

    def blocks(self) -> list[ConvBlock]:
        return self.encoder + self.decoder

    def parameters(self) -> list[Tensor]:
        return [p for blk in self.blocks() for p in blk.parameters()]

    def named_parameters(self) -> list[tuple[int, Tensor]]:
        """``(block index, tensor)`` pairs in a fixed order."""
        return [(i, p) for i, blk in enumerate(self.blocks()) for p in blk.parameters()]

    def state(self) -> dict[str, np.ndarray]:
        """All tensors and buffers by name, parameters first."""
        out = {}
        for blk in self.blocks():
            for p in blk.parameters():
                out[p.name] = p.data
        for blk in self.blocks():
            if blk.running_mean is not None:
                out[f"{blk.name}.running_mean"] = blk.running_mean
                out[f"{blk.name}.running_var"] = blk.running_var
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        own = self.state()
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, arr in own.items():
            if arr.shape != state[name].shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {arr.shape}")
            arr[...] = state[name]

    def copy(self) -> "NetworkParams":
        clone = build_network(self.config, np.random.default_rng(0))
        clone.load_state(self.state())
        return clone

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _uniform(rng, shape, fan_in):
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _make_block(name, cin, cout, cfg, rng, transposed, activation, norm):
    k = cfg.kernel
    shape = (cin, cout, k, k) if transposed else (cout, cin, k, k)
    fan_in = cin * k * k
    blk = ConvBlock(
        name=name,
        weight=Tensor(_uniform(rng, shape, fan_in), True, f"{name}.weight"),
        bias=Tensor(_uniform(rng, (cout,), fan_in), True, f"{name}.bias"),
        transposed=transposed,
        activation=activation,
        dropout=cfg.dropout,
        padding=cfg.padding(),
    )
    if norm and cfg.normalization:
        blk.norm_scale = Tensor(np.ones(cin), True, f"{name}.norm_scale")
        blk.norm_shift = Tensor(np.zeros(cin), True, f"{name}.norm_shift")
        blk.running_mean = np.zeros(cin)
        blk.running_var = np.ones(cin)
    return blk


def build_network(cfg: UNetConfig, rng: np.random.Generator) -> NetworkParams:
    """Initialize a network; weights and biases are uniform in +-sqrt(1/fan_in).

    The first encoder block sees the raw input and the first decoder block
    the 1x1 bottleneck, so neither normalizes (batch statistics of a single
    pixel are degenerate) and the first encoder block has no activation.
    """
    ch = cfg.channels()
    d = cfg.depth
    encoder = []
    cin = cfg.in_channels
    for i in range(d):
        encoder.append(_make_block(f"enc{i}", cin, ch[i], cfg, rng, False,
                                   None if i == 0 else "leaky", i > 0))
        cin = ch[i]
    decoder, skips = [], []
    for j in range(d):
        level = d - 1 - j
        if j == 0:
            cin, skip = ch[level], None
        else:
            cin, skip = ch[level] + encoder[level].out_channels, level
        cout = cfg.out_channels if level == 0 else ch[level - 1]
        decoder.append(_make_block(f"dec{j}", cin, cout, cfg, rng, True, cfg.decoder_activation, j > 0))
        skips.append(skip)
    net = NetworkParams(cfg, encoder, decoder, skips)
    check_skip_shapes(net)
    return net


def check_skip_shapes(net: NetworkParams) -> None:
    """Verify each decoder block's declared input width equals what it will receive."""
    prev = net.encoder[-1].out_channels
    for j, blk in enumerate(net.decoder):
        skip = net.skips[j]
        got = prev if skip is None else prev + net.encoder[skip].out_channels
        if got != blk.in_channels:
            raise ValueError(f"decoder block {j} declares {blk.in_channels} inputs but receives {got}")
        prev = blk.out_channels


def unet_forward(x: Tensor, net: NetworkParams, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Map ``(B, 2, N, N)`` inputs to ``(B, 1, N, N)`` predictions."""
    if not isinstance(x, Tensor):
        x = Tensor(x)
    cfg = net.config
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(f"expected input (B, {cfg.in_channels}, N, N), got {x.shape}")
    n = 2 ** cfg.depth
    if x.shape[2] % n or x.shape[3] % n:
        raise ValueError(f"spatial size {x.shape[2:]} not divisible by 2**depth = {n}")
    feats = []
    h = x
    for blk in net.encoder:
        h = blk.forward(h, cfg, training, rng)
        feats.append(h)
    for blk, skip in zip(net.decoder, net.skips):
        if skip is not None:
            h = T.concat([h, feats[skip]], axis=1)
        h = blk.forward(h, cfg, training, rng)
    return h
