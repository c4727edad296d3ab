"""Numpy tensor engine and the encoder-decoder surrogate network."""

from .adam import Adam, AdamState, TrainingError, adam_step
from .gradcheck import grad_check, network_grad_check
from .tensor import Tensor
from .unet import ConvBlock, NetworkParams, UNetConfig, build_network, check_skip_shapes, unet_forward

__all__ = [
    "Adam", "AdamState", "TrainingError", "adam_step", "grad_check", "network_grad_check",
    "Tensor", "ConvBlock", "NetworkParams", "UNetConfig", "build_network", "check_skip_shapes",
    "unet_forward",
]
