"""Invertibility and log-determinant conformance checks for every layer.

Each case builds a layer (or full flow) at float64 on a tiny shape, measures
the inverse(forward) round-trip error in the infinity norm, and compares the
analytic log-determinant against a central finite-difference Jacobian oracle.
Used by the test suite and the `conformance` CLI subcommand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .atomflow import AtomFlow, ScaleConfig
from .bondflow import CCACouplingNet, CCGlow, CCGlowConfig
from .flowcore import (
    ActNorm,
    ActNorm2D,
    AffineCoupling,
    InvPermuteLU,
    squeeze2x2,
    unsqueeze2x2,
)
from .numerics import Rng, Tensor, fd_jacobian_logdet

ROUNDTRIP_TOL = 1e-4
LOGDET_REL_TOL = 1e-3


@dataclass
class LayerCheck:
    name: str
    roundtrip_err: float
    logdet_analytic: float
    logdet_fd: float

    @property
    def logdet_err(self) -> float:
        scale = max(abs(self.logdet_fd), 1.0)
        return abs(self.logdet_analytic - self.logdet_fd) / scale

    @property
    def passed(self) -> bool:
        return self.roundtrip_err <= ROUNDTRIP_TOL and self.logdet_err <= LOGDET_REL_TOL


def _check(name: str, forward, inverse, x0: np.ndarray) -> LayerCheck:
    """forward: flat array -> (flat array, logdet scalar); inverse undoes it."""
    y0, logdet = forward(x0)
    x_back = inverse(y0)
    roundtrip = float(np.abs(x_back - x0).max())
    fd = fd_jacobian_logdet(lambda v: forward(v)[0], x0.copy(), h=1e-5)
    return LayerCheck(name, roundtrip, float(logdet), fd)


def _flat_io(layer, shape, ctx=None):
    """Adapt a layer to flat-vector forward/inverse callables."""

    def forward(flat):
        x = Tensor(flat.reshape(shape))
        y, ld = (layer.forward(x, ctx) if ctx is not None else layer.forward(x))
        return y.data.ravel(), float(np.asarray(ld.data).reshape(-1)[0])

    def inverse(flat):
        y = Tensor(flat.reshape(shape))
        x = (layer.inverse(y, ctx) if ctx is not None else layer.inverse(y))
        return x.data.ravel()

    return forward, inverse


def _freeze_actnorms(module) -> None:
    stack = [module]
    while stack:
        m = stack.pop()
        if isinstance(m, ActNorm):
            m.initialized[...] = 1.0
        stack.extend(m._children.values())


def _jitter_params(module, rng: Rng, scale: float = 0.2) -> None:
    """Move every parameter off its init so logdets are non-trivial."""
    for i, p in enumerate(module.parameters()):
        p.data = p.data + scale * rng.child(i).normal(p.data.shape)


def layer_cases(seed: int = 0) -> list[LayerCheck]:
    rng = Rng(seed)
    checks = []

    norm = ActNorm(2, dtype=np.float64)
    norm.initialize_from(rng.child(0).normal((8, 2, 2, 2)) * 1.7 + 0.3)
    fwd, inv = _flat_io(norm, (1, 2, 2, 2))
    checks.append(_check("actnorm", fwd, inv, rng.child(1).normal(8)))

    norm2d = ActNorm2D(4, dtype=np.float64)
    norm2d.initialize_from(rng.child(2).normal((16, 5, 4)) * 0.8 - 0.2)
    fwd, inv = _flat_io(norm2d, (1, 5, 4))
    checks.append(_check("actnorm2D", fwd, inv, rng.child(3).normal(20)))

    perm_m = InvPermuteLU(4, rng=rng.child(4), dtype=np.float64)
    _jitter_params(perm_m, rng.child(40))
    fwd, inv = _flat_io(perm_m, (1, 5, 4))
    checks.append(_check("inv_permute_lu(matrix)", fwd, inv, rng.child(5).normal(20)))

    perm_i = InvPermuteLU(4, rng=rng.child(6), dtype=np.float64)
    _jitter_params(perm_i, rng.child(60))
    fwd, inv = _flat_io(perm_i, (1, 4, 2, 2))
    checks.append(_check("inv_permute_lu(1x1conv)", fwd, inv, rng.child(7).normal(16)))

    coupling = AffineCoupling(CCACouplingNet(2, 3, rng.child(8), dtype=np.float64), axis=1)
    jitter = rng.child(9)
    for p in coupling.parameters():  # lift the zero-init so the logdet is non-trivial
        if np.all(p.data == 0):
            p.data = jitter.normal(p.data.shape) * 0.3
    fwd, inv = _flat_io(coupling, (1, 4, 2, 2))
    checks.append(_check("affine_coupling(cca)", fwd, inv, rng.child(10).normal(16)))

    def squeeze_fwd(flat):
        return squeeze2x2(Tensor(flat.reshape(1, 2, 4, 4))).data.ravel(), 0.0

    def squeeze_inv(flat):
        return unsqueeze2x2(Tensor(flat.reshape(1, 8, 2, 2))).data.ravel()

    checks.append(_check("squeeze", squeeze_fwd, squeeze_inv, rng.child(11).normal(32)))

    checks.append(_atomflow_case(rng))
    checks.append(_ccglow_case(rng))
    return checks


def _atomflow_case(rng: Rng) -> LayerCheck:
    flow = AtomFlow(4, 4, ScaleConfig(num_blocks=2, coarsen_factors=(2,), steps=1,
                                      rgcn_layers=1, hidden=6), rng.child(12), dtype=np.float64)
    _jitter_params(flow, rng.child(120))
    _freeze_actnorms(flow)
    a_onehot = np.zeros((1, 4, 4, 4), dtype=np.uint8)
    for i, j in [(0, 1), (1, 2), (2, 3)]:
        a_onehot[0, 1, i, j] = a_onehot[0, 1, j, i] = 1
    a_onehot[0, 0] = 1 - a_onehot[0, 1:].sum(axis=0)
    log_sigma = Tensor(np.zeros((), dtype=np.float64))
    shapes = flow.latent_shapes

    def forward(flat):
        zs, _, logdet = flow.forward_parts(Tensor(flat.reshape(1, 4, 4)), a_onehot, log_sigma)
        out = np.concatenate([z.data.reshape(-1) for z in zs])
        return out, float(logdet.data[0])

    def inverse(flat):
        zs, off = [], 0
        for n_i, d_i in shapes:
            size = n_i * d_i
            zs.append(flat[off : off + size].reshape(1, n_i, d_i))
            off += size
        return flow.inverse(a_onehot, log_sigma, latents=zs).data.ravel()

    return _check("atomflow(full)", forward, inverse, rng.child(13).normal(16))


def _ccglow_case(rng: Rng) -> LayerCheck:
    flow = CCGlow(4, 2, CCGlowConfig(num_blocks=1, steps=1, hidden=3),
                  rng.child(14), dtype=np.float64)
    _jitter_params(flow, rng.child(140))
    _freeze_actnorms(flow)
    log_sigma = Tensor(np.zeros((), dtype=np.float64))
    shapes = flow.latent_shapes

    def forward(flat):
        zs, _, logdet = flow.forward_parts(Tensor(flat.reshape(1, 2, 4, 4)), log_sigma)
        out = np.concatenate([z.data.reshape(-1) for z in zs])
        return out, float(logdet.data[0])

    def inverse(flat):
        zs, off = [], 0
        for c_i, n_i in shapes:
            size = c_i * n_i * n_i
            zs.append(flat[off : off + size].reshape(1, c_i, n_i, n_i))
            off += size
        return flow.inverse(log_sigma, latents=zs).data.ravel()

    return _check("ccglow(full)", forward, inverse, rng.child(15).normal(32))


def format_table(checks: list[LayerCheck]) -> str:
    lines = [f"{'layer':26s} {'roundtrip':>12s} {'logdet':>12s} {'fd_logdet':>12s} {'rel_err':>10s} {'status':>7s}"]
    for c in checks:
        lines.append(
            f"{c.name:26s} {c.roundtrip_err:12.3e} {c.logdet_analytic:12.6f} "
            f"{c.logdet_fd:12.6f} {c.logdet_err:10.3e} {'ok' if c.passed else 'FAIL':>7s}"
        )
    return "\n".join(lines)
