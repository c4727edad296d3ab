"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, record_activation_patterns


def _same_patterns(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
               max_probes: int | None = 64, rng: np.random.Generator | None = None,
               stats: dict | None = None) -> float:
    """Max relative error between backprop and central differences.

    ``loss_fn`` must build a fresh scalar graph on every call and be
    deterministic.  Up to ``max_probes`` entries per tensor are probed
    (all of them when ``None``); the error per entry is
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``.

    A probe whose ``±eps`` perturbation flips any ReLU on or off straddles a
    point where the loss is not differentiable; it is skipped and counted in
    ``stats["kinks"]``.  ``stats["probes"]`` counts the compared entries.
    """
    rng = rng or np.random.default_rng(0)
    stats = {} if stats is None else stats
    stats.update(probes=0, kinks=0)
    for p in params:
        p.grad = None
    with record_activation_patterns() as base:
        loss_fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if max_probes is None or n <= max_probes else rng.choice(n, max_probes, replace=False)
        for k in idx:
            saved = flat[k]
            flat[k] = saved + eps
            with record_activation_patterns() as up_pattern:
                up = float(loss_fn().data)
            flat[k] = saved - eps
            with record_activation_patterns() as down_pattern:
                down = float(loss_fn().data)
            flat[k] = saved
            if not (_same_patterns(base, up_pattern) and _same_patterns(base, down_pattern)):
                stats["kinks"] += 1
                continue
            stats["probes"] += 1
            fd = (up - down) / (2.0 * eps)
            a = ga.reshape(-1)[k]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
    return worst


def network_grad_check(net, x: np.ndarray, eps: float = 1e-4, training: bool = False,
                       max_probes: int | None = 16, rng: np.random.Generator | None = None,
                       target: np.ndarray | None = None, stats: dict | None = None) -> float:
    """Gradient check of a U-net against a fixed random linear functional of its output.

    Dropout makes the forward pass stochastic, so only inference mode is
    accepted.
    """
    from .unet import unet_forward
    from . import tensor as T

    if training:
        raise ValueError("gradient checking requires training=False; dropout is stochastic")
    rng = rng or np.random.default_rng(0)
    xin = Tensor(x)
    out_shape = unet_forward(xin, net, training=False).shape
    w = target if target is not None else rng.standard_normal(out_shape)

    def loss():
        return T.sum_all(T.mul(unet_forward(xin, net, training=False), w))

    return grad_check(loss, net.parameters(), eps=eps, max_probes=max_probes, rng=rng, stats=stats)
