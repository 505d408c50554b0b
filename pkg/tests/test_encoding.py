import numpy as np
import pytest

from coarseflow.encoding import decode, encode
from coarseflow.errors import TooManyAtoms
from coarseflow.graph import MolGraph
from coarseflow.smiles import parse_smiles


def test_encode_formaldehyde(zinc_table):
    g = parse_smiles("C=O", zinc_table)
    e = encode(g, 4, 16, zinc_table)
    # rows: C-hot, O-hot, then two pad rows (pad channel = 9)
    assert e.X[0, zinc_table.channel("C")] == 1
    assert e.X[1, zinc_table.channel("O")] == 1
    assert e.X[2, 9] == 1 and e.X[3, 9] == 1
    assert e.X.sum() == 4  # one-hot rows
    assert e.A[2, 0, 1] == 1 and e.A[2, 1, 0] == 1
    # all other pairs and the diagonal sit in the no-bond channel
    others = e.A[0].copy()
    assert others[0, 1] == 0 and others[1, 0] == 0
    assert others.sum() == 16 - 2


def test_encode_no_null_channels(zinc_table):
    g = parse_smiles("C", zinc_table)
    e = encode(g, 2, len(zinc_table) + 1, zinc_table)
    assert e.d == 10


def test_encode_channel_sum_completeness(zinc_table):
    g = parse_smiles("C1CC1CO", zinc_table)
    e = encode(g, 8, 16, zinc_table)
    assert (e.A.sum(axis=0) == 1).all()
    assert (e.A == np.transpose(e.A, (0, 2, 1))).all()
    # virtual rows/columns carry only no-bond entries
    assert (e.A[0, 5:, :] == 1).all() and (e.A[0, :, 5:] == 1).all()


def test_encode_too_many_atoms(zinc_table):
    g = parse_smiles("CCCCC", zinc_table)
    with pytest.raises(TooManyAtoms):
        encode(g, 4, 16, zinc_table)


def test_decode_exact_roundtrip(zinc_table):
    g = parse_smiles("CC(=O)N", zinc_table)
    e = encode(g, 8, 16, zinc_table)
    assert decode(e.X.astype(np.float64), e.A.astype(np.float64), zinc_table) == g


def test_decode_noise_roundtrip(zinc_table, rng64):
    g = parse_smiles("C1CCCCC1O", zinc_table)
    e = encode(g, 10, 16, zinc_table)
    x = e.X + 0.9 * rng64.random(e.X.shape)
    a = e.A + 0.9 * rng64.random(e.A.shape)
    assert decode(x, a, zinc_table) == g


def test_decode_tie_breaks_to_lowest_channel(zinc_table):
    x = np.zeros((1, 16))  # all-equal row: argmax -> channel 0 -> carbon
    a = np.zeros((4, 1, 1))
    g = decode(x, a, zinc_table)
    assert g.atoms == ("C",)


def test_decode_symmetrizes_bonds(zinc_table):
    # asymmetric logits: the average decides the bond type
    x = np.zeros((2, 16))
    x[0, 0] = x[1, 0] = 1.0
    a = np.zeros((4, 2, 2))
    a[2, 0, 1] = 3.0  # strong double-bond vote one way
    a[1, 1, 0] = 1.0  # weak single-bond vote the other way
    g = decode(x, a, zinc_table)
    assert g.bonds == frozenset({(0, 1, 2)})


def test_decode_drops_pad_and_null_rows(zinc_table):
    x = np.zeros((3, 16))
    x[0, 0] = 1.0   # C
    x[1, 9] = 1.0   # pad channel
    x[2, 12] = 1.0  # null channel row is dropped too
    a = np.zeros((4, 3, 3))
    g = decode(x, a, zinc_table)
    assert g.atoms == ("C",)
