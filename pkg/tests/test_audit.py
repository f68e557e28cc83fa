from itertools import permutations

import numpy as np
import pytest
import torch
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from pairlat.audit import (
    DEFICIENT,
    IDENTIFIABLE,
    analytic_partial_jacobian,
    audit_modality,
    audit_world,
    block_rotation,
    conjugate_sparsity_test,
    dedup_sparsity,
    lemma1_audit,
    named_nullspace,
    neighbor_jacobians,
    partial_jacobian,
    random_block_permutation,
    scm_jacobian_field,
    scm_jacobian_field_fd,
)
from pairlat.errors import ContractError, GraphError
from pairlat.world import build_scm_spec, dag_arrows, sample_latents


@pytest.fixture(scope="module")
def points(fig2):
    return fig2.sample_latents(4, seed=123)


@pytest.mark.parametrize("propagate", [True, False])
def test_central_difference_matches_chain_rule(fig2, points, propagate):
    for edge in [(3, 1), (3, 2), (2, 1), (1, 2)]:
        fd = partial_jacobian(fig2, edge, points[0], step=1e-5, propagate=propagate)
        exact = analytic_partial_jacobian(fig2, edge, points[0], propagate=propagate)
        assert fd.shape == (fig2.latent.d_x(edge[1]), fig2.latent.d_c(edge[0]))
        torch.testing.assert_close(fd.matrix, exact.matrix, rtol=1e-6, atol=1e-8)


def test_partial_jacobian_shapes_and_errors(fig2, points):
    jacobians = neighbor_jacobians(fig2, 2, points[0])
    assert [a.neighbor for a in jacobians] == [1, 3]
    assert [a.shape for a in jacobians] == [(2, 2), (3, 2)]

    with pytest.raises(GraphError):
        partial_jacobian(fig2, (2, 2), points[0])
    with pytest.raises(ContractError):
        partial_jacobian(fig2, (2, 1), points[0][:3])
    with pytest.raises(ContractError):
        partial_jacobian(fig2, (2, 1), points[0], step=0.0)


def test_fig2_every_modality_identifiable(fig2, points):
    for m in fig2.graph.modalities:
        result = audit_modality(fig2, m, points)
        assert result["verdict"] == IDENTIFIABLE, m
        assert result["criteria_agree"]
        assert result["nullspace"] == []


def test_dropped_edge_leaves_modality3_deficient(fig2_dropedge, points):
    result = audit_modality(fig2_dropedge, 3, points)

    assert result["verdict"] == DEFICIENT
    assert result["criteria_agree"]
    assert len(result["nullspace"]) == 1
    assert set(result["nullspace"][0]) == {"c3", "c4"}

    assert audit_modality(fig2_dropedge, 2, points)["verdict"] == IDENTIFIABLE


def test_collective_rank_known_matrices():
    full = lemma1_audit([np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]])])
    assert full.identifiable and full.agree
    np.testing.assert_allclose(full.eigenvalues, [1.0, 4.0])
    assert full.residual < 1e-12
    np.testing.assert_allclose(full.left_inverses[0], [[1.0], [0.0]], atol=1e-12)
    np.testing.assert_allclose(full.left_inverses[1], [[0.0], [0.5]], atol=1e-12)

    parallel = lemma1_audit([np.array([[1.0, 1.0]]), np.array([[2.0, 2.0]])])
    assert not parallel.identifiable and parallel.agree
    (direction,) = named_nullspace(parallel, ["c3", "c4"])
    assert direction["c3"] == pytest.approx(-direction["c4"])
    assert abs(direction["c3"]) == pytest.approx(np.sqrt(0.5))


def test_collective_rank_input_contract():
    with pytest.raises(ContractError):
        lemma1_audit([])
    with pytest.raises(ContractError):
        lemma1_audit([np.ones((2, 2)), np.ones((2, 3))])
    with pytest.raises(ContractError):
        lemma1_audit([np.ones((2, 2))], rank_tol=0.0)


@settings(max_examples=1000, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    d=st.integers(min_value=1, max_value=8),
    rows=st.lists(st.integers(min_value=1, max_value=8), min_size=1, max_size=4),
    deficient=st.booleans(),
)
def test_collective_rank_criteria_agree(seed, d, rows, deficient):
    rng = np.random.default_rng(seed)
    blocks = [rng.normal(size=(r, d)) for r in rows]
    if deficient:
        # Remove one common direction from every block
        v = rng.normal(size=d)
        v /= np.linalg.norm(v)
        blocks = [b - np.outer(b @ v, v) for b in blocks]

    # Spectra within two decades of the rank threshold are ill-posed for any tolerance
    low, high = np.linalg.eigvalsh(sum(b.T @ b for b in blocks))[[0, -1]]
    assume(not 1e-10 * high < low < 1e-6 * high)

    report = lemma1_audit(blocks)
    assert report.agree
    if deficient:
        assert report.verdict == DEFICIENT
        assert report.residual >= 1e-8
    if report.identifiable:
        assert report.residual < 1e-8
        total = sum(L @ A for L, A in zip(report.left_inverses, blocks))
        np.testing.assert_allclose(total, np.eye(d), atol=1e-8)


def test_fig2_sparsity(fig2):
    field_ = scm_jacobian_field(fig2.scm, fig2.sample_latents(16, seed=9))

    report = dedup_sparsity(field_, fig2.latent)
    assert report.total == 5
    assert report.counts[(2, 3)] == 0
    assert report.counts[(3, 2)] == 1
    assert report.edge_total == 5
    assert report.off_edge_support == ()

    one_edge = dedup_sparsity(field_, fig2.latent, edges=[(1, 2)])
    assert one_edge.edge_total == 2
    assert set(one_edge.off_edge_support) == {(1, 3), (3, 1), (3, 2)}


def test_sparsity_threshold_and_probes(fig2):
    field_ = scm_jacobian_field(fig2.scm, fig2.sample_latents(4, seed=9))
    assert dedup_sparsity(field_, fig2.latent, tau0=1e3).total == 0
    assert dedup_sparsity(field_, fig2.latent, n_probe=1).n_probe == 1

    with pytest.raises(ContractError):
        dedup_sparsity(field_, fig2.latent, tau0=0.0)
    with pytest.raises(ContractError):
        dedup_sparsity(field_, fig2.latent, n_probe=5)


def test_fd_field_matches_analytic(fig2):
    probes = fig2.sample_latents(6, seed=2)
    torch.testing.assert_close(
        scm_jacobian_field_fd(fig2.scm, probes),
        scm_jacobian_field(fig2.scm, probes),
        rtol=1e-6,
        atol=1e-8,
    )


def _random_arrows(latent, rng):
    # Random acyclic arrows over the shared factors: forward pairs of a shuffled order
    order = [f"c{r}" for r in rng.permutation(latent.n_shared) + 1]
    return [
        (order[a], order[b])
        for a in range(len(order))
        for b in range(a + 1, len(order))
        if rng.random() < 0.4
    ]


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1), use_chain5=st.booleans())
def test_block_permutation_keeps_sparsity_of_random_scms(fig2, chain5, seed, use_chain5):
    latent = (chain5 if use_chain5 else fig2).latent
    scm = build_scm_spec(latent, _random_arrows(latent, np.random.default_rng(seed)), seed)
    field_ = scm_jacobian_field(scm, sample_latents(scm, 8, seed))

    t = random_block_permutation(latent, seed)
    before, after = conjugate_sparsity_test(field_, latent, t)
    assert before == after


def test_block_permutation_keeps_sparsity(fig2):
    field_ = scm_jacobian_field(fig2.scm, fig2.sample_latents(16, seed=9))
    for seed in range(5):
        t = random_block_permutation(fig2.latent, seed)
        before, after = conjugate_sparsity_test(field_, fig2.latent, t)
        assert before == after == 5


def test_rotation_inside_a_block_changes_sparsity(fig2):
    field_ = scm_jacobian_field(fig2.scm, fig2.sample_latents(16, seed=9))
    # Rotating c3 (overlap with modality 2) into c4 inside modality 3
    t = block_rotation(fig2.latent, 3, 4, 5)
    before, after = conjugate_sparsity_test(field_, fig2.latent, t)
    assert before == 5
    assert after > before


def _single_entry_rotations(latent):
    """``(u, v, block, a, b)``: one supported entry ``G[u, v]`` and a rotation of
    coordinates ``a, b`` of ``block`` that spreads it within the same block pair."""

    cases = []
    for m, n in permutations(latent.graph.modalities, 2):
        rows, cols = latent.non_overlap_set(m, n), latent.non_overlap_set(n, m)
        if not rows or not cols:
            continue
        for a, b in permutations(cols, 2):
            cases.append((rows[0], a, n, a, b))
        for a, b in permutations(rows, 2):
            cases.append((a, cols[0], m, a, b))
    return cases


@settings(max_examples=200, deadline=None)
@given(
    pick=st.integers(min_value=0, max_value=10**6),
    weight=st.floats(min_value=0.5, max_value=2.0),
    negative=st.booleans(),
    angle=st.floats(min_value=0.1, max_value=np.pi / 2 - 0.1),
)
def test_dense_rotation_spreads_a_single_entry(fig2, pick, weight, negative, angle):
    cases = _single_entry_rotations(fig2.latent)
    u, v, block, a, b = cases[pick % len(cases)]

    field_ = np.zeros((1, fig2.latent.d_e, fig2.latent.d_e))
    field_[0, u - 1, v - 1] = -weight if negative else weight

    t = block_rotation(fig2.latent, block, a, b, angle=angle)
    before, after = conjugate_sparsity_test(field_, fig2.latent, t)
    assert before == 1
    assert after > before


@pytest.mark.parametrize("world", ["fig2", "fig2_dropedge"])
def test_chain_scm_stays_on_edges(world, request):
    generator = request.getfixturevalue(world)
    latent = generator.latent
    scm = build_scm_spec(latent, dag_arrows("chain", latent), seed=0)
    field_ = scm_jacobian_field(scm, sample_latents(scm, 16, seed=9))

    report = dedup_sparsity(field_, latent)
    assert report.total == report.edge_total == 1
    assert report.counts[(2, 1)] == 1
    assert report.off_edge_support == ()


def test_conjugation_contract(fig2):
    field_ = scm_jacobian_field(fig2.scm, fig2.sample_latents(4, seed=9))
    across_blocks = np.eye(5)
    across_blocks[0, 1] = 1.0
    with pytest.raises(ContractError):
        conjugate_sparsity_test(field_, fig2.latent, across_blocks)
    with pytest.raises(ContractError):
        conjugate_sparsity_test(field_, fig2.latent, np.diag([1.0, 1.0, 0.0, 1.0, 1.0]))
    with pytest.raises(ContractError):
        block_rotation(fig2.latent, 3, 1, 4)


def test_audit_world_fig2(fig2):
    report = audit_world(fig2, seed=0, n_points=2, n_probe=8)

    assert {m: v["verdict"] for m, v in report["collective_rank"].items()} == {
        "1": IDENTIFIABLE,
        "2": IDENTIFIABLE,
        "3": IDENTIFIABLE,
    }
    assert report["sparsity"]["total"] == 5
    assert report["edge_coverage"] is True
    assert report["generator_fingerprint"] == fig2.fingerprint


def test_audit_world_dropedge(fig2_dropedge):
    report = audit_world(fig2_dropedge, seed=0, n_points=2, n_probe=8)

    assert report["collective_rank"]["3"]["verdict"] == DEFICIENT
    assert report["sparsity"]["edge_total"] < report["sparsity"]["total"]
    assert report["edge_coverage"] is False
