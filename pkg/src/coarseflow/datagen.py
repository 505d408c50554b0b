"""Synthetic chain/ring molecule sets for smoke tests and demos."""

from __future__ import annotations

from .config import TOY_TABLE
from .graph import MolGraph
from .numerics import Rng
from .smiles import write_smiles


def _random_chain(length: int, rng: Rng) -> MolGraph:
    atoms = []
    for _ in range(length):
        roll = int(rng.integers(0, 10))
        atoms.append("C" if roll < 8 else ("N" if roll == 8 else "O"))
    bonds = []
    for i in range(length - 1):
        order = 1
        # an occasional double bond, only between carbons with valence room
        if atoms[i] == "C" and atoms[i + 1] == "C" and int(rng.integers(0, 5)) == 0:
            order = 2
        bonds.append((i, i + 1, order))
    return MolGraph(tuple(atoms), frozenset(bonds))


def _random_ring(length: int, rng: Rng) -> MolGraph:
    atoms = ["C"] * length
    hetero = int(rng.integers(0, length))
    if int(rng.integers(0, 2)) == 0:
        atoms[hetero] = "O" if int(rng.integers(0, 2)) == 0 else "N"
    bonds = [(i, (i + 1) % length, 1) for i in range(length)]
    return MolGraph.from_lists(atoms, bonds)


def synthetic_dataset(count: int, seed: int, max_atoms: int = 14) -> list[MolGraph]:
    """Chains and rings over C/N/O with single plus occasional double bonds."""
    rng = Rng(seed)
    graphs = []
    for i in range(count):
        r = rng.child(i)
        if int(r.integers(0, 10)) < 6:
            length = int(r.integers(3, max_atoms + 1))
            graphs.append(_random_chain(length, r.child(0)))
        else:
            length = int(r.integers(5, min(8, max_atoms) + 1))
            graphs.append(_random_ring(length, r.child(0)))
    return graphs


def write_dataset(graphs: list[MolGraph], path: str, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for g in graphs:
            fh.write(write_smiles(g) + "\n")


TOY_ELEMENTS = TOY_TABLE
