"""Kekulized-SMILES parsing and writing.

Supported grammar: uppercase organic-subset element symbols from the active
element table, bond symbols ``-``, ``=``, ``#``, branches ``(...)``, and ring
closures ``1``..``9`` / ``%nn``. Aromatic lowercase atoms, brackets, charges,
stereo markers and dot-disconnections are rejected; inputs must be kekulized.
"""

from __future__ import annotations

from .elements import ElementTable
from .errors import (
    DisconnectedGraph,
    UnknownElement,
    UnmatchedParenthesis,
    UnmatchedRingClosure,
    UnsupportedToken,
)
from .graph import MolGraph, bfs_reorder

_BOND_CHARS = {"-": 1, "=": 2, "#": 3}
_BOND_SYMBOL = {1: "", 2: "=", 3: "#"}
_REJECT = set("[]@+.\\/:*~$")


def parse_smiles(text: str, table: ElementTable) -> MolGraph:
    """Parse a kekulized SMILES string into a MolGraph.

    Atoms appear in token order; ring closures bond with the symbol preceding
    the closure digit (single by default).
    """
    text = text.strip()
    if not text:
        raise UnsupportedToken("empty SMILES string")

    atoms: list[str] = []
    bonds: dict[tuple[int, int], int] = {}
    stack: list[int] = []
    prev: int | None = None
    pending: int | None = None
    ring_open: dict[int, tuple[int, int | None]] = {}

    def add_bond(i: int, j: int, order: int, what: str) -> None:
        if i == j:
            raise UnmatchedRingClosure(f"{what} bonds atom {i} to itself")
        key = (min(i, j), max(i, j))
        if key in bonds:
            raise UnmatchedRingClosure(f"{what} duplicates bond {key}")
        bonds[key] = order

    def close_ring(num: int) -> None:
        nonlocal pending
        if prev is None:
            raise UnmatchedRingClosure(f"ring number {num} before any atom")
        if num in ring_open:
            open_atom, open_order = ring_open.pop(num)
            if open_order is not None and pending is not None and open_order != pending:
                raise UnmatchedRingClosure(f"ring {num} opened with conflicting bond order")
            order = open_order if open_order is not None else (pending if pending is not None else 1)
            add_bond(open_atom, prev, order, f"ring closure {num}")
        else:
            ring_open[num] = (prev, pending)
        pending = None

    pos = 0
    while pos < len(text):
        ch = text[pos]
        if ch.isspace():
            raise UnsupportedToken(f"whitespace inside SMILES at position {pos}")
        if ch in _REJECT:
            raise UnsupportedToken(f"unsupported token {ch!r} at position {pos}")
        if ch.islower():
            raise UnsupportedToken(f"aromatic/lowercase atom {ch!r} at position {pos}; input must be kekulized")
        if ch in _BOND_CHARS:
            if pending is not None:
                raise UnsupportedToken(f"double bond symbol at position {pos}")
            pending = _BOND_CHARS[ch]
            pos += 1
            continue
        if ch == "(":
            if prev is None:
                raise UnmatchedParenthesis("branch before any atom")
            if pending is not None:
                raise UnsupportedToken(f"bond symbol before '(' at position {pos}")
            stack.append(prev)
            pos += 1
            continue
        if ch == ")":
            if pending is not None:
                raise UnsupportedToken(f"dangling bond symbol before ')' at position {pos}")
            if not stack:
                raise UnmatchedParenthesis(f"unmatched ')' at position {pos}")
            prev = stack.pop()
            pos += 1
            continue
        if ch.isdigit():
            close_ring(int(ch))
            pos += 1
            continue
        if ch == "%":
            if len(text) < pos + 3 or not text[pos + 1 : pos + 3].isdigit():
                raise UnmatchedRingClosure(f"'%' needs two digits at position {pos}")
            close_ring(int(text[pos + 1 : pos + 3]))
            pos += 3
            continue
        if ch.isupper():
            # longest-match element symbol (two-letter symbols like Cl, Br, Si first)
            two = text[pos : pos + 2]
            if len(two) == 2 and two[1].islower() and two in table:
                symbol, width = two, 2
            elif ch in table:
                symbol, width = ch, 1
            elif len(two) == 2 and two[1].islower():
                raise UnknownElement(f"element {two!r} not in table")
            else:
                raise UnknownElement(f"element {ch!r} not in table")
            atoms.append(symbol)
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending if pending is not None else 1, "chain")
            prev = idx
            pending = None
            pos += width
            continue
        raise UnsupportedToken(f"unsupported token {ch!r} at position {pos}")

    if stack:
        raise UnmatchedParenthesis(f"{len(stack)} unclosed '('")
    if ring_open:
        raise UnmatchedRingClosure(f"unclosed ring numbers {sorted(ring_open)}")
    if pending is not None:
        raise UnsupportedToken("dangling bond symbol at end of string")
    return MolGraph(tuple(atoms), frozenset((i, j, o) for (i, j), o in bonds.items()))


def write_smiles(g: MolGraph) -> str:
    """Serialize a connected graph to SMILES via a DFS spanning tree from atom 0.

    Ring-closure numbers are assigned in emission discovery order; the bond
    symbol of a ring bond is written at its opening digit.
    """
    if g.n_atoms == 0:
        raise DisconnectedGraph("empty graph")
    if not g.is_connected():
        raise DisconnectedGraph("graph has multiple components")

    # pass 1: spanning tree (DFS, ascending neighbor index)
    tree: dict[int, list[int]] = {i: [] for i in range(g.n_atoms)}
    visited = [False] * g.n_atoms
    visited[0] = True
    stack = [(0, iter(sorted(g.neighbors(0))))]
    while stack:
        u, it = stack[-1]
        for v in it:
            if not visited[v]:
                visited[v] = True
                tree[u].append(v)
                stack.append((v, iter(sorted(g.neighbors(v)))))
                break
        else:
            stack.pop()
    tree_pairs = {(min(u, v), max(u, v)) for u, kids in tree.items() for v in kids}
    ring_pairs = {(i, j) for i, j, _ in g.bonds if (i, j) not in tree_pairs}

    ring_num: dict[tuple[int, int], int] = {}
    emitted = [False] * g.n_atoms
    next_num = 1
    out: list[str] = []

    def digit(num: int) -> str:
        return str(num) if num <= 9 else f"%{num:02d}"

    def emit(u: int) -> None:
        nonlocal next_num
        emitted[u] = True
        out.append(g.atoms[u])
        for v in sorted(g.neighbors(u)):
            pair = (min(u, v), max(u, v))
            if pair not in ring_pairs:
                continue
            if pair in ring_num:
                out.append(digit(ring_num[pair]))
            elif not emitted[v]:
                ring_num[pair] = next_num
                out.append(_BOND_SYMBOL[g.neighbors(u)[v]] + digit(next_num))
                next_num += 1
        kids = tree[u]
        for k, v in enumerate(kids):
            bond = _BOND_SYMBOL[g.neighbors(u)[v]]
            if k < len(kids) - 1:
                out.append("(" + bond)
                emit(v)
                out.append(")")
            else:
                out.append(bond)
                emit(v)

    emit(0)
    return "".join(out)


def canonical_smiles(g: MolGraph) -> str:
    """Internal canonical form: SMILES of the BFS-reordered graph."""
    return write_smiles(bfs_reorder(g))


def read_smiles_file(path: str, table: ElementTable) -> list[MolGraph]:
    """Load a dataset file: one kekulized SMILES per line, '#' comments skipped."""
    graphs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            graphs.append(parse_smiles(line, table))
    return graphs
