"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_CHUNK = 1 << 14
# Moments of parameters whose gradient has died decay into subnormals, where
# 0.9 * smallest rounds back to itself and every later step runs ~100x slower.
_FLUSH_EVERY = 16
_SMALLEST_NORMAL = np.finfo(np.float64).tiny


class TrainingError(RuntimeError):
    def __init__(self, message: str, block_index: int | None = None):
        super().__init__(message)
        self.block_index = block_index


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params, grads, state: AdamState, block_index=None) -> AdamState:
    """Update ``params`` (numpy arrays) in place from ``grads``; missing grads count as zero.

    ``block_index`` maps each parameter to the block reported when a
    gradient is not finite.  Nothing is modified in that case.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params) or len(grads) != len(params):
        raise ValueError("params, grads and optimizer state disagree in length")
    if not all(p.flags.c_contiguous for p in params):
        raise ValueError("parameters must be C-contiguous arrays")
    for k, g in enumerate(grads):
        # a finite sum rules out inf/nan in one read; overflow falls through to the exact test
        if g is not None and not np.isfinite(g.sum()) and not np.all(np.isfinite(g)):
            blk = None if block_index is None else block_index[k]
            raise TrainingError(f"non-finite gradient in block {blk}", blk)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    step_size = state.lr / (1.0 - b1 ** t)
    inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - b2 ** t)
    flush = t % _FLUSH_EVERY == 0
    for p, g, m, v in zip(params, grads, state.m, state.v):
        pf, mf, vf = p.reshape(-1), m.reshape(-1), v.reshape(-1)
        gf = None if g is None else np.ascontiguousarray(g).reshape(-1)
        # cache-sized chunks keep the dozen elementwise passes out of main memory
        for lo in range(0, pf.size, _CHUNK):
            sl = slice(lo, lo + _CHUNK)
            mc, vc = mf[sl], vf[sl]
            mc *= b1
            vc *= b2
            tmp = np.empty_like(mc)
            if flush:
                for buf in (mc, vc):
                    np.abs(buf, out=tmp)
                    np.copyto(buf, 0.0, where=tmp < _SMALLEST_NORMAL)
            if gf is not None:
                np.multiply(gf[sl], 1.0 - b1, out=tmp)
                mc += tmp
                np.square(gf[sl], out=tmp)
                tmp *= 1.0 - b2
                vc += tmp
            # p -= lr * mhat / (sqrt(vhat) + eps)
            np.sqrt(vc, out=tmp)
            tmp *= inv_sqrt_c2
            tmp += state.eps
            np.divide(mc, tmp, out=tmp)
            tmp *= step_size
            pf[sl] -= tmp
    return state


class Adam:
    """Optimizer bound to a list of ``(block index, Tensor)`` pairs."""

    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.blocks = [b for b, _ in named_params]
        self.params = [p for _, p in named_params]
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self) -> None:
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state, self.blocks)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
