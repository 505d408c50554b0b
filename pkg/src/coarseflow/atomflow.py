"""Coarsened-graph conditional flow over the atom matrix.

A multi-scale stack: each block (optionally) merges every k consecutive nodes
into a cluster, runs K flow steps of actnorm2D -> invertible permutation ->
graph coupling conditioned on the coarsened bond structure of that scale, and
(except at the coarsest block) splits half the features off as latents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndivisibleN, ShapeMismatch
from .flowcore import (
    ActNorm2D,
    AffineCoupling,
    InvPermuteLU,
    MatrixPriorNet,
    SplitPrior,
)
from .numerics import (
    Linear,
    Module,
    ModuleList,
    Parameter,
    Rng,
    Tensor,
    as_tensor,
    gaussian_logp_per_sample,
    ops,
    sample_gaussian,
)
from .numerics.tensor import check_finite, layer_checks_enabled

N_BOND_CHANNELS = 4
N_REAL_BOND_CHANNELS = 3  # aggregation skips the no-bond channel


@dataclass(frozen=True)
class ScaleConfig:
    """Architecture of the atom flow.

    coarsen_factors has num_blocks - 1 entries; block 0 (the finest scale)
    never coarsens. Feature width halves at every split and multiplies by k at
    every merge, and must stay even wherever a split happens.
    """

    num_blocks: int = 3
    coarsen_factors: tuple[int, ...] = (2, 2)
    steps: int = 2
    rgcn_layers: int = 2
    hidden: int = 64
    identity_init: bool = False

    def validate(self, n: int, d: int) -> None:
        if self.num_blocks < 1:
            raise ValueError("need at least one block")
        if len(self.coarsen_factors) != self.num_blocks - 1:
            raise ValueError(
                f"{self.num_blocks} blocks need {self.num_blocks - 1} coarsen factors, "
                f"got {len(self.coarsen_factors)}"
            )
        for k in self.coarsen_factors:
            if k not in (2, 3, 4):
                raise ValueError(f"coarsen factor {k} outside supported range {{2,3,4}}")
        total = 1
        for k in self.coarsen_factors:
            total *= k
        if n % total != 0:
            raise IndivisibleN(f"n={n} not divisible by product of coarsen factors {total}")
        for n_i, d_i, _ in self.level_shapes(n, d)[:-1]:
            if d_i % 2 != 0:
                raise ValueError(f"feature width {d_i} odd at a split")

    def level_shapes(self, n: int, d: int) -> list[tuple[int, int, int]]:
        """Per-block (nodes, features-after-merge, k) walked through the stack."""
        shapes = []
        n_i, d_i = n, d
        for b in range(self.num_blocks):
            k = 1 if b == 0 else self.coarsen_factors[b - 1]
            n_i //= k
            d_i *= k
            shapes.append((n_i, d_i, k))
            if b < self.num_blocks - 1:
                d_i //= 2  # split keeps the second half
        return shapes


def assignment_matrix(n: int, k: int, dtype=np.float64) -> np.ndarray:
    """Block-contiguous hard assignment: column c owns rows [c*k, (c+1)*k)."""
    if n % k != 0:
        raise IndivisibleN(f"n={n} not divisible by k={k}")
    s = np.zeros((n, n // k), dtype=dtype)
    for c in range(n // k):
        s[c * k : (c + 1) * k, c] = 1
    return s


def coarsen_structure(a_prev: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Cluster connectivity counts S^T A S, applied per channel.

    Accepts (..., n, n); returns (..., n/k, n/k) with int64 counts.
    """
    a_prev = np.asarray(a_prev)
    if a_prev.shape[-1] != s.shape[0] or a_prev.shape[-2] != s.shape[0]:
        raise ShapeMismatch(f"A {a_prev.shape} vs S {s.shape}")
    a64 = a_prev.astype(np.int64)
    s64 = s.astype(np.int64)
    return s64.T @ a64 @ s64


def merge_features(h, k: int):
    """Concatenate every k consecutive node rows: (B, n, d) -> (B, n/k, d*k).

    Block-contiguous clusters make this a pure reshape, so the inverse
    (unmerge) is exact.
    """
    h = as_tensor(h)
    b, n, d = h.shape
    if n % k != 0:
        raise IndivisibleN(f"n={n} not divisible by k={k}")
    return ops.reshape(h, (b, n // k, d * k))


def unmerge_features(h, k: int):
    h = as_tensor(h)
    b, m, dk = h.shape
    if dk % k != 0:
        raise IndivisibleN(f"feature width {dk} not divisible by k={k}")
    return ops.reshape(h, (b, m * k, dk // k))


class GraphContext:
    """Per-scale conditioning: real-bond channel slices and inverse degrees."""

    def __init__(self, a_scale: np.ndarray, dtype=np.float32):
        # a_scale: (B, 4, m, m) counts; no-bond channel excluded from messages
        real = a_scale[:, 1 : 1 + N_REAL_BOND_CHANNELS].astype(dtype)
        deg = real.sum(axis=(1, 2))  # D_jj = sum over channels and rows
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-30), 0.0).astype(dtype)
        self.channels = [Tensor(np.ascontiguousarray(real[:, c])) for c in range(N_REAL_BOND_CHANNELS)]
        self.deg_inv = Tensor(inv[:, :, None])


class RGCNConv(Module):
    """Relational graph convolution H' = sum_i D^-1 A_i H W_i + H W_0."""

    def __init__(self, d_in: int, d_out: int, rng: Rng, dtype=np.float32):
        super().__init__()
        def init():
            return Parameter((rng.normal((d_in, d_out)) / np.sqrt(d_in)).astype(dtype))

        self.w_self = init()
        self.w_single = init()
        self.w_double = init()
        self.w_triple = init()

    def __call__(self, h, ctx: GraphContext):
        out = ops.bmm(h, self.w_self)
        for a_c, w in zip(ctx.channels, (self.w_single, self.w_double, self.w_triple)):
            msg = ops.mul(ops.bmm(a_c, h), ctx.deg_inv)
            out = ops.add(out, ops.bmm(msg, w))
        return out


class GraphCouplingNet(Module):
    """R-GCN stack over the conditioning half followed by a per-node MLP
    emitting (s, t); the final layer starts at zero."""

    def __init__(self, d_half: int, hidden: int, rgcn_layers: int, rng: Rng, dtype=np.float32):
        super().__init__()
        convs = []
        d = d_half
        for i in range(rgcn_layers):
            convs.append(RGCNConv(d, hidden, rng.child(i), dtype=dtype))
            d = hidden
        self.convs = ModuleList(convs)
        self.mid = Linear(hidden, hidden, rng.child(100), dtype=dtype)
        self.out = Linear(hidden, 2 * d_half, zero_init=True, dtype=dtype)

    def __call__(self, x1, ctx: GraphContext):
        h = x1
        for conv in self.convs:
            h = ops.swish(conv(h, ctx))
        h = ops.swish(self.mid(h))
        return ops.split(self.out(h), 2, -1)


class AtomFlowStep(Module):
    """actnorm2D -> invertible permutation -> graph coupling."""

    def __init__(self, d: int, hidden: int, rgcn_layers: int, rng: Rng,
                 identity_init: bool = False, dtype=np.float32):
        super().__init__()
        self.norm = ActNorm2D(d, dtype=dtype)
        self.perm = InvPermuteLU(d, rng=rng.child(0), identity_init=identity_init, dtype=dtype)
        self.coupling = AffineCoupling(
            GraphCouplingNet(d // 2, hidden, rgcn_layers, rng.child(1), dtype=dtype), axis=-1
        )

    def forward(self, h, ctx):
        h, ld0 = self.norm.forward(h)
        h, ld1 = self.perm.forward(h)
        h, ld2 = self.coupling.forward(h, ctx)
        return h, ops.add(ops.add(ld0, ld1), ld2)

    def inverse(self, h, ctx):
        h = self.coupling.inverse(h, ctx)
        h = self.perm.inverse(h)
        return self.norm.inverse(h)


class AtomBlock(Module):
    def __init__(self, d: int, k: int, steps: int, hidden: int, rgcn_layers: int,
                 rng: Rng, has_split: bool, identity_init: bool = False, dtype=np.float32):
        super().__init__()
        self.k = k
        self.steps = ModuleList(
            AtomFlowStep(d, hidden, rgcn_layers, rng.child(i), identity_init, dtype)
            for i in range(steps)
        )
        self.has_split = has_split
        if has_split:
            self.split = SplitPrior(MatrixPriorNet(d // 2, d // 2, dtype=dtype), axis=-1)


class AtomFlow(Module):
    """f_{X|A}: hierarchical flow over (B, n, d) atom matrices conditioned on
    the discrete one-hot bond tensor coarsened per scale."""

    def __init__(self, n: int, d: int, cfg: ScaleConfig, rng: Rng, dtype=np.float32):
        super().__init__()
        cfg.validate(n, d)
        self.n, self.d, self.cfg = n, d, cfg
        self.dtype = dtype
        shapes = cfg.level_shapes(n, d)
        blocks = []
        for b, (n_i, d_i, k) in enumerate(shapes):
            has_split = b < cfg.num_blocks - 1
            blocks.append(
                AtomBlock(d_i, k, cfg.steps, cfg.hidden, cfg.rgcn_layers,
                          rng.child(b), has_split, cfg.identity_init, dtype)
            )
        self.blocks = ModuleList(blocks)
        # latent shapes per level: split halves for levels 0..L-1, full final
        self.latent_shapes = [
            (n_i, d_i // 2) for (n_i, d_i, _) in shapes[:-1]
        ] + [(shapes[-1][0], shapes[-1][1])]

    def structures(self, a_onehot: np.ndarray) -> list[GraphContext]:
        """Coarsened conditioning per block from the discrete bond tensor."""
        contexts = []
        a_i = np.asarray(a_onehot, dtype=np.int64)
        for block in self.blocks:
            if block.k > 1:
                s = assignment_matrix(a_i.shape[-1], block.k)
                a_i = coarsen_structure(a_i, s)
            contexts.append(GraphContext(a_i, dtype=self.dtype))
        return contexts

    def forward_parts(self, x, a_onehot: np.ndarray, log_sigma):
        """Returns (latents z0..zL, per-sample prior logp, per-sample logdet)."""
        x = as_tensor(x)
        contexts = self.structures(a_onehot)
        h = x
        logdet = Tensor(np.zeros(x.shape[0], dtype=x.dtype))
        prior = Tensor(np.zeros(x.shape[0], dtype=x.dtype))
        zs = []
        for i, block in enumerate(self.blocks):
            if block.k > 1:
                h = merge_features(h, block.k)
            for j, step in enumerate(block.steps):
                h, ld = step.forward(h, contexts[i])
                if layer_checks_enabled():
                    check_finite(h, f"atomflow block {i} step {j}")
                logdet = ops.add(logdet, ld)
            if block.has_split:
                h, z, logp = block.split.forward(h)
                zs.append(z)
                prior = ops.add(prior, logp)
        zs.append(h)
        prior = ops.add(prior, gaussian_logp_per_sample(h, 0.0, log_sigma))
        return zs, prior, logdet

    def forward(self, x, a_onehot: np.ndarray, log_sigma):
        """Returns (latents z0..zL as Tensors, per-sample logp)."""
        zs, prior, logdet = self.forward_parts(x, a_onehot, log_sigma)
        return zs, ops.add(prior, logdet)

    def inverse(self, a_onehot: np.ndarray, log_sigma, latents=None,
                rng: Rng | None = None, temperature: float = 1.0,
                batch: int | None = None):
        """Exact inverse from recorded latents, or generative where latents are
        missing (None entries are sampled from the per-scale priors at the
        given temperature)."""
        contexts = self.structures(a_onehot)
        if batch is None and latents is not None:
            for z in latents:
                if z is not None:
                    batch = as_tensor(z).shape[0]
                    break
        if batch is None:
            raise ValueError("need a batch size when sampling all levels")
        final = latents[-1] if latents is not None else None
        if final is None:
            n_l, d_l = self.latent_shapes[-1]
            h = sample_gaussian((batch, n_l, d_l), 0.0, log_sigma, temperature,
                                rng.child(self.cfg.num_blocks - 1), dtype=self.dtype)
        else:
            h = as_tensor(final)
        for i in range(self.cfg.num_blocks - 1, -1, -1):
            block = self.blocks[i]
            if block.has_split:
                z = latents[i] if latents is not None else None
                z = as_tensor(z) if z is not None else None
                child = rng.child(i) if rng is not None else None
                h = block.split.inverse(h, z=z, rng=child, temperature=temperature)
            for step in reversed(list(block.steps)):
                h = step.inverse(h, contexts[i])
            if block.k > 1:
                h = unmerge_features(h, block.k)
        return h
