"""The joint flow model: a bond flow paired with a conditional atom flow and a
shared learnable prior standard deviation for the coarsest latents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atomflow import AtomFlow, ScaleConfig
from .bondflow import CCGlow, CCGlowConfig
from .encoding import BOND_CHANNELS
from .numerics import Module, Parameter, Rng, Tensor, ops


@dataclass
class LatentPack:
    """Per-scale latents for one batch, finest level first, with enough shape
    metadata to invert. Arrays are (B, ...) numpy."""

    bond: list[np.ndarray]
    atom: list[np.ndarray]

    def flatten(self) -> np.ndarray:
        """(B, total_dim) view of all levels, bond levels first."""
        batch = self.bond[0].shape[0]
        parts = [z.reshape(batch, -1) for z in self.bond + self.atom]
        return np.concatenate(parts, axis=1)

    def shapes(self) -> tuple[list[tuple], list[tuple]]:
        return [z.shape[1:] for z in self.bond], [z.shape[1:] for z in self.atom]

    @classmethod
    def unflatten(cls, flat: np.ndarray, bond_shapes, atom_shapes) -> "LatentPack":
        batch = flat.shape[0]
        out, offset = [], 0
        for shape in list(bond_shapes) + list(atom_shapes):
            size = int(np.prod(shape))
            out.append(flat[:, offset : offset + size].reshape((batch,) + tuple(shape)))
            offset += size
        if offset != flat.shape[1]:
            raise ValueError(f"flat latent width {flat.shape[1]} != expected {offset}")
        return cls(out[: len(bond_shapes)], out[len(bond_shapes) :])


class FlowModel(Module):
    """(f_A, f_{X|A}) with a shared learnable prior std sigma (trained in log
    space) applied to the final-level priors of both flows."""

    def __init__(self, n: int, d: int, atom_cfg: ScaleConfig, bond_cfg: CCGlowConfig,
                 rng: Rng, dtype=np.float32):
        super().__init__()
        self.n, self.d = n, d
        self.dtype = dtype
        self.bond_flow = CCGlow(n, BOND_CHANNELS, bond_cfg, rng.child(0), dtype=dtype)
        self.atom_flow = AtomFlow(n, d, atom_cfg, rng.child(1), dtype=dtype)
        self.log_sigma = Parameter(np.zeros((), dtype=dtype))

    def forward(self, x_deq, a_deq, a_onehot: np.ndarray):
        """Encode a dequantized batch; returns (LatentPack tensors, logp_A, logp_X)."""
        z_a, logp_a = self.bond_flow.forward(a_deq, self.log_sigma)
        z_x, logp_x = self.atom_flow.forward(x_deq, a_onehot, self.log_sigma)
        return (z_a, z_x), logp_a, logp_x

    def encode_latents(self, x_deq, a_deq, a_onehot: np.ndarray) -> LatentPack:
        (z_a, z_x), _, _ = self.forward(x_deq, a_deq, a_onehot)
        return LatentPack([z.data.copy() for z in z_a], [z.data.copy() for z in z_x])

    def decode_bonds(self, latents: list | None = None, rng: Rng | None = None,
                     temperature: float = 1.0, batch: int | None = None) -> np.ndarray:
        """Inverse bond flow -> dequantized-continuous bond tensor (B,4,n,n)."""
        a = self.bond_flow.inverse(self.log_sigma, latents=latents, rng=rng,
                                   temperature=temperature, batch=batch)
        return a.data

    def decode_atoms(self, a_onehot: np.ndarray, latents: list | None = None,
                     rng: Rng | None = None, temperature: float = 1.0,
                     batch: int | None = None) -> np.ndarray:
        x = self.atom_flow.inverse(a_onehot, self.log_sigma, latents=latents, rng=rng,
                                   temperature=temperature, batch=batch)
        return x.data

    def latent_shapes(self) -> tuple[list[tuple], list[tuple]]:
        bond = [(c, s, s) for c, s in self.bond_flow.latent_shapes]
        atom = [(n_i, d_i) for n_i, d_i in self.atom_flow.latent_shapes]
        return bond, atom


def build_model(cfg) -> FlowModel:
    """Construct a model from a TrainConfig, seeded from cfg.seed."""
    from .config import INIT_STREAM

    rng = Rng(cfg.seed).child(INIT_STREAM)
    return FlowModel(cfg.n, cfg.d_pad, cfg.atom, cfg.bond, rng, dtype=cfg.dtype)
