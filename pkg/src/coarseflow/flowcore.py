"""Invertible layers with exact log-determinants.

Every layer exposes `forward(x, ...) -> (y, logdet)` and `inverse(y, ...) -> x`
where logdet is per-sample (batch-shaped or scalar-broadcastable). Stacks
compose by adding logdets.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import OddSpatialDim, OddSplitAxis, ZeroScale, ZeroStd
from .numerics import (
    Conv1x1,
    Linear,
    Module,
    Rng,
    Tensor,
    as_tensor,
    gaussian_logp_per_sample,
    ops,
    sample_gaussian,
)


def rescale(u) -> Tensor:
    """Bounded coupling rescale r(u) = 2 * sigmoid(swish(u)); r(0) = 1."""
    return ops.scale(ops.sigmoid(ops.swish(u)), 2.0)


def _rescale_np(u: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-np.clip(u, -60.0, 60.0)))
    return 2.0 / (1.0 + np.exp(-u * s))


class AffineCoupling(Module):
    """y1 = x1, y2 = x2 * r(s(x1, ctx)) + t(x1, ctx), split along `axis`.

    `net(x1, ctx) -> (s, t)` must return tensors shaped like x2. With
    swap=True the second half conditions and the first half transforms.
    """

    def __init__(self, net: Module, axis: int, swap: bool = False):
        super().__init__()
        self.net = net
        self.axis = axis
        self.swap = swap

    def _halves(self, x):
        a, b = ops.split(x, 2, self.axis)
        return (b, a) if self.swap else (a, b)

    def _join(self, cond, trans):
        parts = [trans, cond] if self.swap else [cond, trans]
        return ops.concat(parts, self.axis)

    def forward(self, x, ctx=None):
        x1, x2 = self._halves(x)
        s, t = self.net(x1, ctx)
        r = rescale(s)
        if float(np.abs(r.data).min()) < 1e-7:
            raise ZeroScale("coupling rescale collapsed below 1e-7")
        y2 = ops.add(ops.mul(x2, r), t)
        logdet = ops.sum_(ops.log(r), axis=tuple(range(1, r.ndim)))
        return self._join(x1, y2), logdet

    def inverse(self, y, ctx=None):
        y1, y2 = self._halves(y)
        s, t = self.net(y1, ctx)
        r = rescale(s)
        if float(np.abs(r.data).min()) < 1e-7:
            raise ZeroScale("coupling rescale collapsed below 1e-7")
        x2 = ops.div(ops.sub(y2, t), r)
        return self._join(y1, x2)


class ActNorm(Module):
    """Per-channel affine y = scale * (x + bias) for (B, C, H, W) inputs.

    Parameters are data-initialized on the first forward call so that batch
    has zero mean and unit variance per channel.
    """

    def __init__(self, channels: int, dtype=np.float32):
        super().__init__()
        from .numerics import Parameter

        self.scale = Parameter(np.ones((1, channels, 1, 1), dtype=dtype))
        self.bias = Parameter(np.zeros((1, channels, 1, 1), dtype=dtype))
        self.register_buffer("initialized", np.zeros((), dtype=np.float64))

    def _axes(self):
        return (0, 2, 3)

    def initialize_from(self, x: np.ndarray) -> None:
        mean = x.mean(axis=self._axes(), keepdims=True)
        std = x.std(axis=self._axes(), keepdims=True)
        if std.min() < 1e-6:
            raise ZeroStd(f"init batch channel std {std.min():.2e} below 1e-6")
        self.bias.data = (-mean).astype(x.dtype).reshape(self.bias.data.shape)
        self.scale.data = (1.0 / std).astype(x.dtype).reshape(self.scale.data.shape)
        self.initialized[...] = 1.0

    def _spatial_count(self, shape) -> int:
        return int(shape[2] * shape[3])

    def forward(self, x, ctx=None):
        x = as_tensor(x)
        if self.initialized == 0:
            self.initialize_from(x.data)
        y = ops.mul(ops.add(x, self.bias), self.scale)
        logdet = ops.scale(ops.sum_(ops.logabs(self.scale)), float(self._spatial_count(x.shape)))
        return y, logdet

    def inverse(self, y, ctx=None):
        return ops.sub(ops.div(y, self.scale), self.bias)


class ActNorm2D(ActNorm):
    """Per-feature actnorm for (B, n, d) node-feature matrices."""

    def __init__(self, features: int, dtype=np.float32):
        Module.__init__(self)
        from .numerics import Parameter

        self.scale = Parameter(np.ones((1, 1, features), dtype=dtype))
        self.bias = Parameter(np.zeros((1, 1, features), dtype=dtype))
        self.register_buffer("initialized", np.zeros((), dtype=np.float64))

    def _axes(self):
        return (0, 1)

    def _spatial_count(self, shape) -> int:
        return int(shape[1])  # one scale application per node row


class InvPermuteLU(Module):
    """Learnable invertible channel mixing W = P L (U + diag(sign * exp(log_s))).

    P and the diagonal signs are fixed at construction (LU factorization of a
    random orthogonal matrix, or of the identity); the strict triangles of L
    and U plus log|s| train, stored packed. Applies W to the last axis of
    (B, n, d) matrices or as a 1x1 convolution over the channels of
    (B, C, H, W) images.
    """

    def __init__(self, dim: int, rng: Rng | None = None, identity_init: bool = False, dtype=np.float32):
        super().__init__()
        from .numerics import Parameter

        if identity_init:
            w0 = np.eye(dim)
        else:
            if rng is None:
                raise ValueError("random init needs an rng")
            w0, _ = np.linalg.qr(rng.normal((dim, dim)))
        p, l, u = scipy.linalg.lu(w0)
        s = np.diag(u).copy()
        self.dim = dim
        rows_l, cols_l = np.tril_indices(dim, -1)
        rows_u, cols_u = np.triu_indices(dim, 1)
        self._idx_l = rows_l * dim + cols_l
        self._idx_u = rows_u * dim + cols_u
        self._idx_d = np.arange(dim) * (dim + 1)
        self._eye = np.eye(dim, dtype=dtype)
        self.register_buffer("perm", p.astype(dtype))
        self.register_buffer("sign", np.sign(s).astype(dtype))
        self.lower = Parameter(l[rows_l, cols_l].astype(dtype))
        self.upper = Parameter(u[rows_u, cols_u].astype(dtype))
        self.log_s = Parameter(np.log(np.abs(s)).astype(dtype))

    def weight(self) -> Tensor:
        d = self.dim
        l_full = ops.add(ops.reshape(ops.scatter(self.lower, self._idx_l, d * d), (d, d)), self._eye)
        diag = ops.scatter(ops.mul(ops.exp(self.log_s), self.sign), self._idx_d, d * d)
        u_full = ops.reshape(ops.add(ops.scatter(self.upper, self._idx_u, d * d), diag), (d, d))
        return ops.matmul(as_tensor(self.perm), ops.matmul(l_full, u_full))

    def _triangles_np(self) -> tuple[np.ndarray, np.ndarray]:
        d = self.dim
        l_full = self._eye.astype(np.float64).copy()
        l_full.ravel()[self._idx_l] = self.lower.data
        u_full = np.zeros((d, d))
        u_full.ravel()[self._idx_u] = self.upper.data
        u_full.ravel()[self._idx_d] = self.sign * np.exp(self.log_s.data)
        return l_full, u_full

    def weight_np(self) -> np.ndarray:
        l_full, u_full = self._triangles_np()
        return self.perm @ l_full @ u_full

    def _count(self, shape) -> int:
        return int(shape[1]) if len(shape) == 3 else int(shape[2] * shape[3])

    def forward(self, x, ctx=None):
        x = as_tensor(x)
        w = self.weight()
        if x.ndim == 3:
            y = ops.bmm(x, ops.transpose(w, (1, 0)))
        else:
            y = ops.conv1x1(x, w)
        logdet = ops.scale(ops.sum_(self.log_s), float(self._count(x.shape)))
        return y, logdet

    def inverse(self, y, ctx=None):
        """Solve W x = y by permutation + two triangular solves."""
        y = as_tensor(y)
        data = y.data
        if y.ndim == 3:
            b, n, d = data.shape
            rhs = data.reshape(b * n, d).T  # (d, b*n)
        else:
            b, c, h, w = data.shape
            rhs = data.transpose(1, 0, 2, 3).reshape(c, b * h * w)
        l_full, u_full = self._triangles_np()
        z = self.perm.T @ rhs
        z = scipy.linalg.solve_triangular(l_full, z, lower=True, unit_diagonal=True)
        z = scipy.linalg.solve_triangular(u_full, z, lower=False)
        if y.ndim == 3:
            out = z.T.reshape(b, n, d)
        else:
            out = z.reshape(c, b, h, w).transpose(1, 0, 2, 3)
        return Tensor(np.ascontiguousarray(out.astype(data.dtype)))


def squeeze2x2(x) -> Tensor:
    """Space-to-depth: (B, C, H, W) -> (B, 4C, H/2, W/2), sub-pixel order
    top-left, top-right, bottom-left, bottom-right. Volume preserving."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise OddSpatialDim(f"squeeze needs even spatial dims, got {h}x{w}")
    r = ops.reshape(x, (b, c, h // 2, 2, w // 2, 2))
    r = ops.transpose(r, (0, 1, 3, 5, 2, 4))
    return ops.reshape(r, (b, c * 4, h // 2, w // 2))


def unsqueeze2x2(x) -> Tensor:
    x = as_tensor(x)
    b, c4, h, w = x.shape
    if c4 % 4:
        raise OddSpatialDim(f"unsqueeze needs channels divisible by 4, got {c4}")
    c = c4 // 4
    r = ops.reshape(x, (b, c, 2, 2, h, w))
    r = ops.transpose(r, (0, 1, 4, 2, 5, 3))
    return ops.reshape(r, (b, c, h * 2, w * 2))


class MatrixPriorNet(Module):
    """Zero-initialized per-node linear map h -> (mu, log_std) for matrix latents."""

    def __init__(self, d_keep: int, d_z: int, dtype=np.float32):
        super().__init__()
        self.lin = Linear(d_keep, 2 * d_z, zero_init=True, dtype=dtype)

    def __call__(self, h):
        return ops.split(self.lin(h), 2, -1)


class ImagePriorNet(Module):
    """Zero-initialized 1x1-conv map h -> (mu, log_std) for image latents."""

    def __init__(self, c_keep: int, c_z: int, dtype=np.float32):
        super().__init__()
        self.conv = Conv1x1(c_keep, 2 * c_z, zero_init=True, dtype=dtype)

    def __call__(self, h):
        return ops.split(self.conv(h), 2, 1)


class SplitPrior(Module):
    """Halve along `axis`: the first half becomes a latent scored under a
    conditional Gaussian parameterized from the kept half."""

    def __init__(self, prior_net: Module, axis: int):
        super().__init__()
        self.net = prior_net
        self.axis = axis

    def forward(self, x):
        x = as_tensor(x)
        if x.shape[self.axis] % 2:
            raise OddSplitAxis(f"axis {self.axis} extent {x.shape[self.axis]} is odd")
        z, h = ops.split(x, 2, self.axis)
        mu, log_std = self.net(h)
        logp = gaussian_logp_per_sample(z, mu, log_std)
        return h, z, logp

    def inverse(self, h, z=None, rng: Rng | None = None, temperature: float = 1.0):
        h = as_tensor(h)
        mu, log_std = self.net(h)
        if z is None:
            z = sample_gaussian(mu.shape, mu, log_std, temperature, rng, dtype=h.dtype)
        return ops.concat([as_tensor(z), h], self.axis)
