"""
Checking backpropagation
========================

Compare reverse-mode gradients of a strided convolution and of a tiny
U-net against central finite differences.
"""

import numpy as np

from platelayout.nn import Tensor, UNetConfig, build_network, grad_check, network_grad_check
from platelayout.nn import tensor as T

rng = np.random.default_rng(0)

# A single downsampling convolution with a random linear read-out.
x = Tensor(rng.normal(size=(2, 2, 8, 8)), requires_grad=True)
w = Tensor(rng.normal(size=(4, 2, 4, 4)), requires_grad=True)
b = Tensor(rng.normal(size=4), requires_grad=True)
probe = rng.normal(size=(2, 4, 4, 4))
err = grad_check(lambda: T.sum_all(T.mul(T.conv2d(x, w, b, 2, 1), probe)), [x, w, b])
print(f"conv2d: max relative error {err:.2e}")

# Two encoder and two decoder blocks with a skip connection.
net = build_network(UNetConfig(depth=2, base_channels=3), rng)
stats = {}
err = network_grad_check(net, rng.normal(size=(1, 2, 4, 4)), stats=stats)
print(f"2-block U-net: max relative error {err:.2e} over {stats['probes']} probes "
      f"({stats['kinks']} skipped at ReLU kinks)")
