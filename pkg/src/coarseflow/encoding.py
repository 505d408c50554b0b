"""One-hot encoding of molecular graphs into padded atom/bond tensors.

Atoms become an n x d one-hot matrix X (element channels, then one virtual-pad
channel, then zero-filled null channels up to d). Bonds become a 4 x n x n
one-hot tensor A with channel 0 = no bond and channels 1..3 = bond order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import ElementTable
from .errors import TooManyAtoms
from .graph import MolGraph

BOND_CHANNELS = 4  # no-bond, single, double, triple


@dataclass(frozen=True)
class EncodedGraph:
    X: np.ndarray  # (n, d) uint8, rows one-hot
    A: np.ndarray  # (4, n, n) uint8, one-hot over channel axis, symmetric

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def encode(g: MolGraph, n: int, d_pad: int, table: ElementTable) -> EncodedGraph:
    """Encode a BFS-ordered graph with padding to n atoms and d_pad channels."""
    d_min = len(table) + 1
    if d_pad < d_min:
        raise ValueError(f"d_pad {d_pad} below element channels + pad channel ({d_min})")
    if g.n_atoms > n:
        raise TooManyAtoms(f"{g.n_atoms} atoms exceed padded size {n}")

    X = np.zeros((n, d_pad), dtype=np.uint8)
    for i, sym in enumerate(g.atoms):
        X[i, table.channel(sym)] = 1
    X[g.n_atoms :, len(table)] = 1  # virtual-pad channel

    A = np.zeros((BOND_CHANNELS, n, n), dtype=np.uint8)
    for i, j, order in g.bonds:
        A[order, i, j] = 1
        A[order, j, i] = 1
    A[0] = 1 - A[1:].sum(axis=0)
    return EncodedGraph(X, A)


def decode(X_real: np.ndarray, A_real: np.ndarray, table: ElementTable) -> MolGraph:
    """Argmax-decode real-valued tensors back to a raw (possibly invalid) graph.

    A is symmetrized channel-wise as (A + A^T)/2 before the per-pair argmax.
    Rows decoding to the pad or a null channel are dropped; ties go to the
    lowest channel index.
    """
    A_sym = 0.5 * (A_real + np.transpose(A_real, (0, 2, 1)))
    row_ch = np.argmax(X_real, axis=1)
    keep = [i for i, c in enumerate(row_ch) if c < len(table)]
    atoms = tuple(table.symbols[row_ch[i]] for i in keep)

    bond_ch = np.argmax(A_sym, axis=0)
    bonds = []
    for a, i in enumerate(keep):
        for b_idx in range(a + 1, len(keep)):
            j = keep[b_idx]
            c = int(bond_ch[i, j])
            if 1 <= c <= 3:
                bonds.append((a, b_idx, c))
    return MolGraph(atoms, frozenset(bonds))
