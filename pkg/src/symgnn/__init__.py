"""Skeleton-sequence graph networks: joint action recognition and motion
prediction over learned and structural body graphs, on a self-contained
numpy autodiff core."""

from . import tensor
from .tensor import Tensor, gradients, gradient_check
from .nn import Parameter, Module
from .optim import SGD, Adam, sgd_step, adam_step

__all__ = [
    "tensor", "Tensor", "gradients", "gradient_check",
    "Parameter", "Module", "SGD", "Adam", "sgd_step", "adam_step",
]

__version__ = "0.1.0"
