"""Tensor arithmetic with taped reverse-mode differentiation and FD oracles."""

from . import ops
from .fd import fd_gradient, fd_jacobian_logdet
from .module import Conv1x1, Conv3x3, Linear, Module, ModuleList
from .rng import Rng
from .stats import gaussian_logp, gaussian_logp_per_sample, sample_gaussian
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    as_tensor,
    check_finite,
    grad,
    set_check_finite,
    set_layer_checks,
)

__all__ = [
    "ops",
    "Tensor",
    "Parameter",
    "Tape",
    "grad",
    "as_tensor",
    "check_finite",
    "set_check_finite",
    "set_layer_checks",
    "Rng",
    "fd_gradient",
    "fd_jacobian_logdet",
    "gaussian_logp",
    "gaussian_logp_per_sample",
    "sample_gaussian",
    "Module",
    "ModuleList",
    "Linear",
    "Conv1x1",
    "Conv3x3",
]
