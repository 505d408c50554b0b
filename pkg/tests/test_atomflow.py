import numpy as np
import pytest

from coarseflow.atomflow import (
    AtomFlow,
    GraphContext,
    RGCNConv,
    ScaleConfig,
    assignment_matrix,
    coarsen_structure,
    merge_features,
    unmerge_features,
)
from coarseflow.errors import IndivisibleN, ShapeMismatch
from coarseflow.numerics import Rng, Tensor, gaussian_logp_per_sample, ops


def coarsen_reference(a: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Triple-loop oracle for S^T A S (single channel)."""
    n, m = s.shape
    out = np.zeros((m, m), dtype=np.int64)
    for ci in range(m):
        for cj in range(m):
            acc = 0
            for p in range(n):
                for q in range(n):
                    acc += int(s[p, ci]) * int(a[p, q]) * int(s[q, cj])
            out[ci, cj] = acc
    return out


def test_assignment_matrix_blocks():
    s = assignment_matrix(6, 3)
    assert s.shape == (6, 2)
    assert (s.sum(axis=1) == 1).all()
    assert (s[:3, 0] == 1).all() and (s[3:, 1] == 1).all()
    with pytest.raises(IndivisibleN):
        assignment_matrix(5, 2)


def test_coarsen_path_example():
    # n=4, k=2, edges (0,1),(1,2),(2,3): S^T A S = [[2,1],[1,2]]
    a = np.zeros((4, 4), dtype=np.int64)
    for i, j in [(0, 1), (1, 2), (2, 3)]:
        a[i, j] = a[j, i] = 1
    s = assignment_matrix(4, 2)
    out = coarsen_structure(a, s)
    assert np.array_equal(out, [[2, 1], [1, 2]])
    assert np.array_equal(out, coarsen_reference(a, s))


def test_coarsen_empty_channel():
    s = assignment_matrix(4, 2)
    assert np.array_equal(coarsen_structure(np.zeros((4, 4)), s), np.zeros((2, 2)))


def test_coarsen_block_diagonal_is_diagonal():
    s = assignment_matrix(4, 2)
    a = np.zeros((4, 4), dtype=np.int64)
    a[0, 1] = a[1, 0] = 1  # inside cluster 0
    a[2, 3] = a[3, 2] = 1  # inside cluster 1
    out = coarsen_structure(a, s)
    assert out[0, 1] == 0 and out[1, 0] == 0
    assert out[0, 0] == 2 and out[1, 1] == 2


def test_coarsen_matches_reference_randomized(rng64):
    for trial in range(25):
        k = int(rng64.integers(2, 5))
        m = int(rng64.integers(1, 4))
        n = k * m
        a = (rng64.random((n, n)) < 0.4).astype(np.int64)
        a = np.triu(a, 1)
        a = a + a.T
        s = assignment_matrix(n, k)
        assert np.array_equal(coarsen_structure(a, s), coarsen_reference(a, s))


def test_coarsen_batched_channels(rng64):
    a = (rng64.random((3, 4, 6, 6)) < 0.3).astype(np.int64)
    s = assignment_matrix(6, 2)
    out = coarsen_structure(a, s)
    assert out.shape == (3, 4, 3, 3)
    assert np.array_equal(out[1, 2], coarsen_reference(a[1, 2], s))


def test_coarsen_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        coarsen_structure(np.zeros((4, 4)), assignment_matrix(6, 2))


def test_coarsen_path_stays_path():
    # BFS + block-contiguous S: a path of length n coarsens to a path of n/k
    for n in (4, 8, 16):
        a = np.zeros((n, n), dtype=np.int64)
        for i in range(n - 1):
            a[i, i + 1] = a[i + 1, i] = 1
        out = coarsen_structure(a, assignment_matrix(n, 2))
        m = n // 2
        off_diag = out - np.diag(np.diag(out))
        expected = np.zeros((m, m), dtype=np.int64)
        for i in range(m - 1):
            expected[i, i + 1] = expected[i + 1, i] = 1
        assert np.array_equal(off_diag, expected)


def test_merge_features_identity_k1(rng64):
    h = Tensor(rng64.standard_normal((2, 4, 3)))
    assert np.array_equal(merge_features(h, 1).data, h.data)


def test_merge_features_concatenates_rows(rng64):
    h = rng64.standard_normal((1, 4, 2))
    merged = merge_features(Tensor(h), 2)
    assert merged.data.shape == (1, 2, 4)
    assert np.array_equal(merged.data[0, 0], np.concatenate([h[0, 0], h[0, 1]]))
    assert np.array_equal(merged.data[0, 1], np.concatenate([h[0, 2], h[0, 3]]))


def test_unmerge_merge_bitwise(rng64):
    h = Tensor(rng64.standard_normal((3, 6, 4)))
    assert np.array_equal(unmerge_features(merge_features(h, 3), 3).data, h.data)


def _ctx_from_dense(a_channels: np.ndarray) -> GraphContext:
    return GraphContext(a_channels, dtype=np.float64)


def test_rgcn_isolated_node_self_term_only():
    rng = Rng(0)
    conv = RGCNConv(2, 2, rng, dtype=np.float64)
    conv.w_self.data = np.eye(2)
    for w in (conv.w_single, conv.w_double, conv.w_triple):
        w.data = np.zeros((2, 2))
    a = np.zeros((1, 4, 1, 1), dtype=np.int64)
    h = Tensor(np.array([[[3.0, -1.0]]]))
    out = conv(h, _ctx_from_dense(a))
    assert np.allclose(out.data, h.data)


def test_rgcn_two_node_example():
    # A=[[0,1],[1,0]] single-bond channel, H=[[1],[0]], W1=[[1]], W0=[[0]]:
    # degrees are 1, output swaps the rows -> [[0],[1]]
    rng = Rng(0)
    conv = RGCNConv(1, 1, rng, dtype=np.float64)
    conv.w_self.data = np.array([[0.0]])
    conv.w_single.data = np.array([[1.0]])
    conv.w_double.data = np.array([[0.0]])
    conv.w_triple.data = np.array([[0.0]])
    a = np.zeros((1, 4, 2, 2), dtype=np.int64)
    a[0, 1, 0, 1] = a[0, 1, 1, 0] = 1
    out = conv(Tensor(np.array([[[1.0], [0.0]]])), _ctx_from_dense(a))
    assert np.allclose(out.data, [[[0.0], [1.0]]])


def test_rgcn_excludes_no_bond_channel():
    rng = Rng(0)
    conv = RGCNConv(1, 1, rng, dtype=np.float64)
    conv.w_self.data = np.array([[0.0]])
    conv.w_single.data = np.array([[1.0]])
    conv.w_double.data = np.array([[1.0]])
    conv.w_triple.data = np.array([[1.0]])
    a = np.zeros((1, 4, 2, 2), dtype=np.int64)
    a[0, 0] = 1  # only no-bond entries
    out = conv(Tensor(np.ones((1, 2, 1))), _ctx_from_dense(a))
    assert np.allclose(out.data, 0.0)


def _tiny_flow(identity=False, dtype=np.float64, rng_seed=3):
    cfg = ScaleConfig(num_blocks=2, coarsen_factors=(2,), steps=1, rgcn_layers=1,
                      hidden=6, identity_init=identity)
    return AtomFlow(8, 4, cfg, Rng(rng_seed), dtype=dtype)


def _chain_bonds(n, batch=1):
    a = np.zeros((batch, 4, n, n), dtype=np.uint8)
    for i in range(n - 1):
        a[:, 1, i, i + 1] = a[:, 1, i + 1, i] = 1
    a[:, 0] = 1 - a[:, 1:].sum(axis=1)
    return a


def test_atomflow_shape_trace_spec_example():
    # n=8, d=4, k=(2,2), 3 blocks: z0 8x2, z1 4x2, z2 2x4
    cfg = ScaleConfig(num_blocks=3, coarsen_factors=(2, 2), steps=1, rgcn_layers=1, hidden=4)
    flow = AtomFlow(8, 4, cfg, Rng(0), dtype=np.float64)
    assert flow.latent_shapes == [(8, 2), (4, 2), (2, 4)]
    a = _chain_bonds(8)
    zs, logp = flow.forward(Tensor(np.random.default_rng(0).standard_normal((1, 8, 4))),
                            a, Tensor(np.zeros(())))
    assert [z.data.shape[1:] for z in zs] == [(8, 2), (4, 2), (2, 4)]
    assert np.isfinite(logp.data).all()


def test_atomflow_zero_init_is_rearrangement(rng64):
    flow = _tiny_flow(identity=True)
    for block in flow.blocks:
        for step in block.steps:
            step.norm.initialized[...] = 1.0
    x = rng64.standard_normal((2, 8, 4))
    a = _chain_bonds(8, batch=2)
    log_sigma = Tensor(np.zeros(()))
    zs, logp = flow.forward(Tensor(x), a, log_sigma)
    flat_in = np.sort(x.reshape(2, -1), axis=1)
    flat_out = np.sort(np.concatenate([z.data.reshape(2, -1) for z in zs], axis=1), axis=1)
    assert np.allclose(flat_in, flat_out, atol=1e-12)  # pure rearrangement
    expected = sum(
        gaussian_logp_per_sample(Tensor(z.data), 0.0, 0.0).data for z in zs
    )
    assert np.allclose(logp.data, expected, atol=1e-9)


def test_atomflow_roundtrip(rng64):
    flow = _tiny_flow()
    x = rng64.standard_normal((3, 8, 4))
    a = _chain_bonds(8, batch=3)
    log_sigma = Tensor(np.zeros(()))
    zs, _ = flow.forward(Tensor(x), a, log_sigma)
    back = flow.inverse(a, log_sigma, latents=[z.data for z in zs])
    assert np.abs(back.data - x).max() < 1e-10


def test_atomflow_sampling_deterministic():
    flow = _tiny_flow()
    a = _chain_bonds(8, batch=2)
    log_sigma = Tensor(np.zeros(()))
    s1 = flow.inverse(a, log_sigma, rng=Rng(5), temperature=0.7, batch=2)
    s2 = flow.inverse(a, log_sigma, rng=Rng(5), temperature=0.7, batch=2)
    assert np.array_equal(s1.data, s2.data)


def test_graph_coupling_permutation_equivariance(rng64):
    """Relabeling nodes and conjugating A commutes with the coupling."""
    from coarseflow.atomflow import GraphCouplingNet
    from coarseflow.flowcore import AffineCoupling

    net = GraphCouplingNet(3, 8, 1, Rng(2), dtype=np.float64)
    coupling = AffineCoupling(net, axis=-1)
    n = 6
    h = rng64.standard_normal((1, n, 6))
    a = np.zeros((1, 4, n, n), dtype=np.int64)
    for i, j, c in [(0, 1, 1), (1, 2, 2), (2, 3, 1), (3, 4, 1), (4, 5, 3), (1, 4, 1)]:
        a[0, c, i, j] = a[0, c, j, i] = 1
    a[0, 0] = 1 - a[0, 1:].sum(axis=0)

    perm = np.random.default_rng(9).permutation(n)
    h_p = h[:, perm]
    a_p = a[:, :, perm][:, :, :, perm]

    y, ld = coupling.forward(Tensor(h), GraphContext(a, dtype=np.float64))
    y_p, ld_p = coupling.forward(Tensor(h_p), GraphContext(a_p, dtype=np.float64))
    assert np.abs(y_p.data - y.data[:, perm]).max() < 1e-6
    assert np.allclose(ld.data, ld_p.data, atol=1e-9)


def test_scale_config_validation():
    with pytest.raises(IndivisibleN):
        ScaleConfig(num_blocks=2, coarsen_factors=(3,), steps=1).validate(8, 4)
    with pytest.raises(ValueError):
        ScaleConfig(num_blocks=2, coarsen_factors=(5,), steps=1).validate(10, 4)
    with pytest.raises(ValueError):
        ScaleConfig(num_blocks=2, coarsen_factors=(2, 2), steps=1).validate(8, 4)
    ScaleConfig(num_blocks=2, coarsen_factors=(2,), steps=1).validate(8, 4)


def test_atomflow_low_temperature_zero_init_gives_zeros():
    flow = _tiny_flow(identity=True)
    for block in flow.blocks:
        for step in block.steps:
            step.norm.initialized[...] = 1.0
    a = _chain_bonds(8, batch=2)
    out = flow.inverse(a, Tensor(np.zeros(())), rng=Rng(0), temperature=1e-12, batch=2)
    assert np.allclose(out.data, 0.0, atol=1e-9)
