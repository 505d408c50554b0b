import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarseflow.errors import EmptyGraph
from coarseflow.graph import MolGraph, bfs_order, check_valence, correct_validity, reorder
from coarseflow.smiles import parse_smiles


def test_molgraph_rejects_bad_bonds():
    with pytest.raises(ValueError):
        MolGraph(("C", "C"), frozenset({(0, 0, 1)}))  # self-bond
    with pytest.raises(ValueError):
        MolGraph(("C", "C"), frozenset({(1, 0, 1)}))  # not i<j
    with pytest.raises(ValueError):
        MolGraph(("C", "C"), frozenset({(0, 2, 1)}))  # out of range
    with pytest.raises(ValueError):
        MolGraph(("C", "C"), frozenset({(0, 1, 4)}))  # bad order


def test_bfs_order_chain(toy_table):
    g = parse_smiles("CCO", toy_table)
    assert bfs_order(g) == [0, 1, 2]


def test_bfs_order_branch(toy_table):
    # C(O)N over the zinc set: edges 0-1, 0-2; ascending-index tie-break
    g = MolGraph(("C", "O", "N"), frozenset({(0, 1, 1), (0, 2, 1)}))
    assert bfs_order(g) == [0, 1, 2]


def test_bfs_order_components():
    # components appended by smallest index: chain 0..2 then pair {3,4}
    g = MolGraph(("C",) * 5, frozenset({(0, 1, 1), (1, 2, 1), (3, 4, 1)}))
    assert bfs_order(g) == [0, 1, 2, 3, 4]


def test_bfs_order_empty():
    with pytest.raises(EmptyGraph):
        bfs_order(MolGraph((), frozenset()))


def test_bfs_is_permutation_and_adjacency_conjugates(toy_table):
    g = parse_smiles("C1CC1CCO", toy_table)
    order = bfs_order(g)
    assert sorted(order) == list(range(g.n_atoms))
    relabeled = reorder(g, order)
    # conjugation: bond (i,j) maps to (pos(i), pos(j)) with the same order
    pos = {old: new for new, old in enumerate(order)}
    expected = {(min(pos[i], pos[j]), max(pos[i], pos[j]), o) for i, j, o in g.bonds}
    assert set(relabeled.bonds) == expected


def test_check_valence_examples(zinc_table):
    assert check_valence(parse_smiles("C=O", zinc_table), zinc_table)
    # central O with two double bonds: valence 4 > 2
    bad = MolGraph(("O", "O", "O"), frozenset({(0, 1, 2), (1, 2, 2)}))
    assert not check_valence(bad, zinc_table)
    assert check_valence(parse_smiles("C", zinc_table), zinc_table)


def test_check_valence_requires_connectivity(zinc_table):
    g = MolGraph(("C", "C"), frozenset())
    assert not check_valence(g, zinc_table)


def test_correct_validity_ozone_trace(zinc_table):
    # O=O=O: central O exceeds by 2. Pick (0,1) (order tie, lowest neighbor),
    # decrement to single; then (1,2) has the highest order, decrement to
    # single. Result stays connected: O-O-O.
    g = MolGraph(("O", "O", "O"), frozenset({(0, 1, 2), (1, 2, 2)}))
    fixed = correct_validity(g, zinc_table)
    assert fixed.atoms == ("O", "O", "O")
    assert fixed.bonds == frozenset({(0, 1, 1), (1, 2, 1)})
    assert check_valence(fixed, zinc_table)


def test_correct_validity_keeps_valid_graph(zinc_table):
    g = parse_smiles("C1CCCCC1", zinc_table)
    assert correct_validity(g, zinc_table) == g


def test_correct_validity_nitrogen_trace(zinc_table):
    # N bonded singly to four C: deletes the bond to the lowest neighbor
    # (atom 1), then keeps the 4-atom component
    g = MolGraph(("N", "C", "C", "C", "C"),
                 frozenset({(0, 1, 1), (0, 2, 1), (0, 3, 1), (0, 4, 1)}))
    fixed = correct_validity(g, zinc_table)
    assert fixed.n_atoms == 4
    assert fixed.atoms == ("N", "C", "C", "C")
    assert fixed.bonds == frozenset({(0, 1, 1), (0, 2, 1), (0, 3, 1)})


def test_correct_validity_empty_graph(zinc_table):
    with pytest.raises(EmptyGraph):
        correct_validity(MolGraph((), frozenset()), zinc_table)


@st.composite
def random_graphs(draw):
    n = draw(st.integers(1, 8))
    atoms = tuple(draw(st.sampled_from(["C", "N", "O"])) for _ in range(n))
    bonds = set()
    for i in range(n):
        for j in range(i + 1, n):
            if draw(st.booleans()):
                bonds.add((i, j, draw(st.integers(1, 3))))
    return MolGraph(atoms, frozenset(bonds))


@settings(max_examples=60, deadline=None)
@given(random_graphs())
def test_correct_validity_idempotent_and_valid(g):
    from coarseflow.elements import ZINC_TABLE as table

    fixed = correct_validity(g, table)
    assert check_valence(fixed, table)
    assert correct_validity(fixed, table) == fixed
