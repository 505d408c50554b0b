"""Finite-difference oracles, independent of the taped gradients they check."""

from __future__ import annotations

import math

import numpy as np

from ..errors import SingularJacobian


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def fd_jacobian_logdet(f, x: np.ndarray, h: float = 1e-5) -> float:
    """log|det J| of a vector map R^k -> R^k via a central-difference Jacobian.

    The determinant is evaluated through an LU factorization with partial
    pivoting (LAPACK via numpy.linalg.slogdet).
    """
    x = np.asarray(x, dtype=np.float64)
    k = x.size
    if k > 64:
        raise ValueError(f"jacobian oracle limited to k <= 64, got {k}")
    jac = np.zeros((k, k), dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(k):
        orig = flat[i]
        flat[i] = orig + h
        fp = np.array(f(x), dtype=np.float64, copy=True).reshape(-1)
        flat[i] = orig - h
        fm = np.array(f(x), dtype=np.float64, copy=True).reshape(-1)
        flat[i] = orig
        jac[:, i] = (fp - fm) / (2.0 * h)
    sign, logabsdet = np.linalg.slogdet(jac)
    if sign == 0 or logabsdet < math.log(1e-12):
        raise SingularJacobian(f"|det J| below 1e-12 (log|det| = {logabsdet:.3f})")
    return float(logabsdet)
