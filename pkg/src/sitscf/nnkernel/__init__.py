"""Small numpy reverse-mode autodiff kernel: tensors, layers, Adam."""
from . import ops
from .gradcheck import check_gradients, numerical_grad, relative_error
from .layers import LAYER_KINDS, Layer, LayerSpec, Sequential
from .optim import Adam, ParameterSet, adam_step
from .tensor import GraphStateError, ShapeError, Tensor, grad_enabled, no_grad

__all__ = [
    "Adam",
    "GraphStateError",
    "LAYER_KINDS",
    "Layer",
    "LayerSpec",
    "ParameterSet",
    "Sequential",
    "ShapeError",
    "Tensor",
    "adam_step",
    "check_gradients",
    "grad_enabled",
    "no_grad",
    "numerical_grad",
    "ops",
    "relative_error",
]
