"""Molecular graph data model: element-labeled atoms plus typed bonds.

Bond orders are 1 (single), 2 (double), 3 (triple); aromatic systems must be
kekulized upstream. Graphs are immutable value objects; every operation here
returns a new graph.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .elements import ElementTable
from .errors import EmptyGraph


@dataclass(frozen=True)
class MolGraph:
    """Atoms as ordered element symbols, bonds as (i, j, order) with i < j."""

    atoms: tuple[str, ...]
    bonds: frozenset[tuple[int, int, int]]
    _adj: dict[int, dict[int, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        adj: dict[int, dict[int, int]] = {i: {} for i in range(n)}
        for i, j, order in self.bonds:
            if i == j:
                raise ValueError(f"self-bond on atom {i}")
            if not (0 <= i < j < n):
                raise ValueError(f"bond ({i},{j}) out of range or not i<j")
            if (i, j) in seen:
                raise ValueError(f"duplicate bond ({i},{j})")
            if order not in (1, 2, 3):
                raise ValueError(f"bond order {order} not in {{1,2,3}}")
            seen.add((i, j))
            adj[i][j] = order
            adj[j][i] = order
        object.__setattr__(self, "_adj", adj)

    @classmethod
    def from_lists(cls, atoms, bonds) -> "MolGraph":
        norm = frozenset((min(i, j), max(i, j), o) for i, j, o in bonds)
        return cls(tuple(atoms), norm)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> dict[int, int]:
        """Neighbor index -> bond order."""
        return self._adj[i]

    def valence(self, i: int) -> int:
        return sum(self._adj[i].values())

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by smallest member."""
        n = self.n_atoms
        seen = [False] * n
        comps = []
        for start in range(n):
            if seen[start]:
                continue
            comp = []
            stack = [start]
            seen[start] = True
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self._adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return self.n_atoms > 0 and len(self.components()) == 1

    def subgraph(self, indices) -> "MolGraph":
        """Induced subgraph; atoms renumbered to the order given in `indices`."""
        remap = {old: new for new, old in enumerate(indices)}
        atoms = tuple(self.atoms[i] for i in indices)
        bonds = []
        for i, j, o in self.bonds:
            if i in remap and j in remap:
                a, b = remap[i], remap[j]
                bonds.append((min(a, b), max(a, b), o))
        return MolGraph(atoms, frozenset(bonds))


def bfs_order(g: MolGraph) -> list[int]:
    """Breadth-first visiting order from atom 0, neighbors by ascending index.

    Remaining components are appended in ascending smallest-index order, each
    traversed the same way.
    """
    if g.n_atoms == 0:
        raise EmptyGraph("cannot order an empty graph")
    order = []
    seen = [False] * g.n_atoms
    for start in range(g.n_atoms):
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in sorted(g.neighbors(u)):
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
    return order


def reorder(g: MolGraph, order) -> MolGraph:
    """Relabel atoms so that new index k holds old atom order[k]."""
    remap = {old: new for new, old in enumerate(order)}
    atoms = tuple(g.atoms[i] for i in order)
    bonds = frozenset(
        (min(remap[i], remap[j]), max(remap[i], remap[j]), o) for i, j, o in g.bonds
    )
    return MolGraph(atoms, bonds)


def bfs_reorder(g: MolGraph) -> MolGraph:
    return reorder(g, bfs_order(g))


def check_valence(g: MolGraph, table: ElementTable) -> bool:
    """True iff every atom is within its max valence and the graph is connected."""
    if g.n_atoms == 0:
        return False
    for i, sym in enumerate(g.atoms):
        if g.valence(i) > table.valence(sym):
            return False
    return g.is_connected()


def correct_validity(g: MolGraph, table: ElementTable) -> MolGraph:
    """Enforce valence limits and connectivity on a (possibly invalid) graph.

    Repeatedly picks the atom with the largest valence excess (ties to the
    lowest index), then its highest-order incident bond (ties to the lowest
    neighbor index), and decrements that bond order by one, deleting singles.
    Finally keeps the largest connected component (ties to the component
    containing the lowest atom index).
    """
    if g.n_atoms == 0:
        raise EmptyGraph("cannot correct an empty graph")
    bonds = {(i, j): o for i, j, o in g.bonds}
    valence = [0] * g.n_atoms
    for (i, j), o in bonds.items():
        valence[i] += o
        valence[j] += o
    limits = [table.valence(s) for s in g.atoms]

    while True:
        worst, excess = -1, 0
        for i in range(g.n_atoms):
            e = valence[i] - limits[i]
            if e > excess:
                worst, excess = i, e
        if worst < 0:
            break
        incident = [(i, j) for (i, j) in bonds if i == worst or j == worst]
        # highest order first, then lowest neighbor index
        pick = max(incident, key=lambda ij: (bonds[ij], -(ij[1] if ij[0] == worst else ij[0])))
        i, j = pick
        valence[i] -= 1
        valence[j] -= 1
        if bonds[pick] == 1:
            del bonds[pick]
        else:
            bonds[pick] -= 1

    pruned = MolGraph(g.atoms, frozenset((i, j, o) for (i, j), o in bonds.items()))
    comps = pruned.components()
    best = max(comps, key=lambda c: (len(c), -c[0]))
    return pruned.subgraph(best)
