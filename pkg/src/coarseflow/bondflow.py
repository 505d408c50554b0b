"""Multi-scale Glow over the bond tensor treated as a 4-channel square image,
with criss-cross attention inside the coupling networks.

Each block: squeeze -> K steps of (actnorm -> invertible 1x1 permutation ->
channel-split affine coupling) -> split prior, except no split at the last
block. Coupling halves alternate between consecutive steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndivisibleN
from .flowcore import (
    ActNorm,
    AffineCoupling,
    ImagePriorNet,
    InvPermuteLU,
    SplitPrior,
    squeeze2x2,
    unsqueeze2x2,
)
from .numerics import (
    Conv1x1,
    Conv3x3,
    Module,
    ModuleList,
    Rng,
    Tensor,
    as_tensor,
    gaussian_logp_per_sample,
    ops,
    sample_gaussian,
)
from .numerics.tensor import check_finite, layer_checks_enabled

NEG_BIG = -1.0e9  # finite mask; exp underflows to exactly 0 in the softmax


@dataclass(frozen=True)
class CCGlowConfig:
    """Architecture of the bond flow. Spatial size halves per block, so the
    image side must be divisible by 2**num_blocks."""

    num_blocks: int = 2
    steps: int = 2
    hidden: int = 32
    identity_init: bool = False

    def validate(self, n: int) -> None:
        if self.num_blocks < 1:
            raise ValueError("need at least one block")
        if n % (2 ** self.num_blocks) != 0:
            raise IndivisibleN(f"n={n} not divisible by 2^{self.num_blocks}")


class CrissCrossAttention(Module):
    """Per-pixel attention over the pixel's row and column (2N-1 positions).

    Queries/keys project to `qk_width` channels, values keep the input width;
    the aggregated context goes through an output projection and is added back
    to the input.
    """

    def __init__(self, channels: int, qk_width: int, rng: Rng, dtype=np.float32, zero_init: bool = False):
        super().__init__()
        self.qk_width = qk_width
        self.query = Conv1x1(channels, qk_width, rng.child(0), zero_init=zero_init, dtype=dtype)
        self.key = Conv1x1(channels, qk_width, rng.child(1), zero_init=zero_init, dtype=dtype)
        self.value = Conv1x1(channels, channels, rng.child(2), zero_init=zero_init, dtype=dtype)
        self.out = Conv1x1(channels, channels, rng.child(3), zero_init=zero_init, dtype=dtype)

    def attention_weights(self, x):
        """(B, N, N, 2N) softmax weights; first N are row, last N column
        positions with the duplicate (own) column logit masked out."""
        x = as_tensor(x)
        b, c, n, _ = x.shape
        cq = self.qk_width
        q = self.query(x)
        k = self.key(x)
        q_row = ops.reshape(ops.transpose(q, (0, 2, 3, 1)), (b * n, n, cq))
        k_row = ops.reshape(ops.transpose(k, (0, 2, 1, 3)), (b * n, cq, n))
        e_row = ops.reshape(ops.bmm(q_row, k_row), (b, n, n, n))  # [b,i,j,j']
        q_col = ops.reshape(ops.transpose(q, (0, 3, 2, 1)), (b * n, n, cq))
        k_col = ops.reshape(ops.transpose(k, (0, 3, 1, 2)), (b * n, cq, n))
        e_col = ops.bmm(q_col, k_col)  # [(b,j), i, i']
        mask = Tensor((NEG_BIG * np.eye(n, dtype=x.dtype))[None])
        e_col = ops.add(e_col, mask)
        e_col = ops.transpose(ops.reshape(e_col, (b, n, n, n)), (0, 2, 1, 3))  # [b,i,j,i']
        return ops.softmax(ops.concat([e_row, e_col], 3), 3)

    def __call__(self, x):
        x = as_tensor(x)
        b, c, n, _ = x.shape
        attn = self.attention_weights(x)
        w_row, w_col = ops.split(attn, 2, 3)
        v = self.value(x)
        v_row = ops.reshape(ops.transpose(v, (0, 2, 3, 1)), (b * n, n, c))
        out_row = ops.bmm(ops.reshape(w_row, (b * n, n, n)), v_row)
        out_row = ops.transpose(ops.reshape(out_row, (b, n, n, c)), (0, 3, 1, 2))
        v_col = ops.reshape(ops.transpose(v, (0, 3, 2, 1)), (b * n, n, c))
        w_col_t = ops.reshape(ops.transpose(w_col, (0, 2, 1, 3)), (b * n, n, n))
        out_col = ops.bmm(w_col_t, v_col)
        out_col = ops.transpose(ops.reshape(out_col, (b, n, n, c)), (0, 3, 2, 1))
        agg = ops.add(out_row, out_col)
        return ops.add(self.out(agg), x)


class CCACouplingNet(Module):
    """3x3 conv -> criss-cross attention -> zero-initialized 3x3 conv emitting
    (s, t) for the transformed channel half."""

    def __init__(self, c_half: int, hidden: int, rng: Rng, dtype=np.float32):
        super().__init__()
        self.conv_in = Conv3x3(c_half, hidden, rng.child(0), dtype=dtype)
        self.cca = CrissCrossAttention(hidden, max(1, hidden // 8), rng.child(1), dtype=dtype)
        self.conv_out = Conv3x3(hidden, 2 * c_half, zero_init=True, dtype=dtype)

    def __call__(self, x1, ctx=None):
        h = ops.swish(self.conv_in(x1))
        h = self.cca(h)
        return ops.split(self.conv_out(h), 2, 1)


class BondFlowStep(Module):
    """actnorm -> invertible 1x1 permutation -> CCA affine coupling."""

    def __init__(self, channels: int, hidden: int, rng: Rng, swap: bool,
                 identity_init: bool = False, dtype=np.float32):
        super().__init__()
        self.norm = ActNorm(channels, dtype=dtype)
        self.perm = InvPermuteLU(channels, rng=rng.child(0), identity_init=identity_init, dtype=dtype)
        self.coupling = AffineCoupling(
            CCACouplingNet(channels // 2, hidden, rng.child(1), dtype=dtype), axis=1, swap=swap
        )

    def forward(self, h):
        h, ld0 = self.norm.forward(h)
        h, ld1 = self.perm.forward(h)
        h, ld2 = self.coupling.forward(h)
        return h, ops.add(ops.add(ld0, ld1), ld2)

    def inverse(self, h):
        h = self.coupling.inverse(h)
        h = self.perm.inverse(h)
        return self.norm.inverse(h)


class BondBlock(Module):
    def __init__(self, channels: int, steps: int, hidden: int, rng: Rng,
                 has_split: bool, identity_init: bool = False, dtype=np.float32):
        super().__init__()
        self.steps = ModuleList(
            BondFlowStep(channels, hidden, rng.child(i), swap=bool(i % 2), identity_init=identity_init, dtype=dtype)
            for i in range(steps)
        )
        self.has_split = has_split
        if has_split:
            self.split = SplitPrior(ImagePriorNet(channels // 2, channels // 2, dtype=dtype), axis=1)


class CCGlow(Module):
    """f_A: multi-scale flow over (B, 4, n, n) dequantized bond tensors."""

    def __init__(self, n: int, channels: int, cfg: CCGlowConfig, rng: Rng, dtype=np.float32):
        super().__init__()
        cfg.validate(n)
        self.n, self.channels, self.cfg = n, channels, cfg
        self.dtype = dtype
        blocks = []
        shapes = []
        c_i, n_i = channels, n
        for b in range(cfg.num_blocks):
            c_i, n_i = c_i * 4, n_i // 2
            has_split = b < cfg.num_blocks - 1
            blocks.append(BondBlock(c_i, cfg.steps, cfg.hidden, rng.child(b), has_split, cfg.identity_init, dtype))
            shapes.append((c_i // 2 if has_split else c_i, n_i))
            if has_split:
                c_i //= 2
        self.blocks = ModuleList(blocks)
        self.latent_shapes = shapes  # per-level (channels, spatial)

    def forward_parts(self, a, log_sigma):
        """Returns (latents z1..zL, per-sample prior logp, per-sample logdet)."""
        h = as_tensor(a)
        logdet = Tensor(np.zeros(h.shape[0], dtype=h.dtype))
        prior = Tensor(np.zeros(h.shape[0], dtype=h.dtype))
        zs = []
        for i, block in enumerate(self.blocks):
            h = squeeze2x2(h)
            for j, step in enumerate(block.steps):
                h, ld = step.forward(h)
                if layer_checks_enabled():
                    check_finite(h, f"bondflow block {i} step {j}")
                logdet = ops.add(logdet, ld)
            if block.has_split:
                h, z, logp = block.split.forward(h)
                zs.append(z)
                prior = ops.add(prior, logp)
        zs.append(h)
        prior = ops.add(prior, gaussian_logp_per_sample(h, 0.0, log_sigma))
        return zs, prior, logdet

    def forward(self, a, log_sigma):
        """Returns (latents z1..zL as Tensors, per-sample logp)."""
        zs, prior, logdet = self.forward_parts(a, log_sigma)
        return zs, ops.add(prior, logdet)

    def inverse(self, log_sigma, latents=None, rng: Rng | None = None,
                temperature: float = 1.0, batch: int | None = None):
        if batch is None and latents is not None:
            for z in latents:
                if z is not None:
                    batch = as_tensor(z).shape[0]
                    break
        if batch is None:
            raise ValueError("need a batch size when sampling all levels")
        final = latents[-1] if latents is not None else None
        if final is None:
            c_l, n_l = self.latent_shapes[-1]
            h = sample_gaussian((batch, c_l, n_l, n_l), 0.0, log_sigma, temperature,
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
                h = step.inverse(h)
            h = unsqueeze2x2(h)
        return h
