"""Diagonal-Gaussian log density and temperature-scaled sampling."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeMismatch
from . import ops
from .rng import Rng
from .tensor import Tensor, as_tensor

LOG_2PI = math.log(2.0 * math.pi)


def _cast_like(value, ref: Tensor) -> Tensor:
    """Wrap non-Tensor values, adopting the reference float dtype; existing
    Tensors pass through untouched to keep their tape linkage."""
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value)
    if ref.dtype.kind == "f" and arr.dtype != ref.dtype:
        arr = arr.astype(ref.dtype)
    return Tensor(arr)


def _logp_elem(z, mean, log_std) -> Tensor:
    z = as_tensor(z)
    mean = _cast_like(mean, z)
    log_std = _cast_like(log_std, z)
    try:
        np.broadcast_shapes(z.shape, mean.shape, log_std.shape)
    except ValueError as exc:
        raise ShapeMismatch(
            f"gaussian_logp: z {z.shape}, mean {mean.shape}, log_std {log_std.shape}"
        ) from exc
    u = ops.mul(ops.sub(z, mean), ops.exp(ops.neg(log_std)))
    quad = ops.scale(ops.mul(u, u), -0.5)
    return ops.add(ops.sub(quad, log_std), -0.5 * LOG_2PI)


def gaussian_logp(z, mean, log_std) -> Tensor:
    """Sum over all entries of the elementwise diagonal-Gaussian log density."""
    return ops.sum_(_logp_elem(z, mean, log_std))


def gaussian_logp_per_sample(z, mean, log_std) -> Tensor:
    """Per-sample log density: sums every axis except the leading batch axis."""
    elem = _logp_elem(z, mean, log_std)
    axes = tuple(range(1, elem.ndim))
    return ops.sum_(elem, axis=axes) if axes else elem


def sample_gaussian(shape, mean, log_std, temperature: float, rng: Rng, dtype=np.float32) -> Tensor:
    """mean + temperature * exp(log_std) * eps with eps ~ N(0, I)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    mean_arr = mean.data if isinstance(mean, Tensor) else np.asarray(mean)
    ls_arr = log_std.data if isinstance(log_std, Tensor) else np.asarray(log_std)
    eps = rng.normal(shape, dtype=np.float64).astype(dtype)
    data = (mean_arr + temperature * np.exp(ls_arr) * eps).astype(dtype, copy=False)
    return Tensor(data)
