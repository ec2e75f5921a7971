import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import csr_matrix

from spillover.errors import DataError, NumericalError
from spillover.graph import Graph, erdos_renyi
from spillover.outcomes import (
    ExposureModel,
    LinearModel,
    WeightMatrix,
    effective_weight_row,
    effective_weights,
    generate_instance,
    ground_truth_tte,
    load_outcome_vector,
    make_link,
    realize,
    realize_many,
    solve_exposure,
    surrogate_gap,
)


def weight_matrix(arr):
    return WeightMatrix(matrix=csr_matrix(np.asarray(arr, dtype=float)))


def two_node_model(link="identity"):
    P = csr_matrix(np.array([[0.0, 0.5], [0.5, 0.0]]))
    return ExposureModel(delta=np.ones(2), alpha=np.zeros(2), sharing=P, link=link)


@st.composite
def random_exposure_models(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    P = rng.random((n, n)) * (rng.random((n, n)) < 0.3)
    np.fill_diagonal(P, 0.0)
    rs = P.sum(axis=1, keepdims=True)
    scale = draw(st.floats(min_value=0.0, max_value=0.85))
    P = np.divide(P * scale, rs, out=np.zeros_like(P), where=rs > 0)
    delta = rng.random(n)
    alpha = rng.random(n)
    return ExposureModel(delta=delta, alpha=alpha, sharing=csr_matrix(P))


class TestSolveExposure:
    def test_no_sharing_identity(self):
        m = ExposureModel(
            delta=np.ones(3), alpha=np.zeros(3), sharing=csr_matrix((3, 3))
        )
        e = solve_exposure(m, np.ones(3))
        assert e == pytest.approx(np.ones(3))

    def test_two_node_exact(self):
        e = solve_exposure(two_node_model(), np.array([1, 0]))
        assert e == pytest.approx([4 / 3, 2 / 3], abs=1e-9)

    def test_homogeneous_zero(self):
        m = two_node_model()
        e = solve_exposure(m, np.zeros(2))
        assert e == pytest.approx(np.zeros(2), abs=1e-12)

    def test_residual_contract(self):
        m = two_node_model()
        z = np.array([1, 1])
        e = solve_exposure(m, z)
        res = m.delta * z + m.sharing.dot(e) + m.alpha - e
        assert np.max(np.abs(res)) <= 1e-10

    def test_non_convergence_reports_residual(self):
        m = two_node_model()
        with pytest.raises(NumericalError, match="did not converge"):
            solve_exposure(m, np.ones(2), max_iter=1)

    @settings(max_examples=50, deadline=None)
    @given(random_exposure_models())
    def test_matches_dense_solve(self, m):
        rng = np.random.default_rng(0)
        z = (rng.random(m.n) < 0.5).astype(float)
        e = solve_exposure(m, z)
        dense = np.linalg.solve(
            np.eye(m.n) - m.sharing.toarray(), m.delta * z + m.alpha
        )
        assert np.max(np.abs(e - dense)) < 1e-8

    @settings(max_examples=25, deadline=None)
    @given(random_exposure_models())
    def test_superposition(self, m):
        # e(z) - e(0) must be the sum of single-unit responses
        rng = np.random.default_rng(1)
        z = (rng.random(m.n) < 0.4).astype(float)
        base = solve_exposure(m, np.zeros(m.n))
        total = solve_exposure(m, z) - base
        acc = np.zeros(m.n)
        for k in np.flatnonzero(z):
            unit = np.zeros(m.n)
            unit[k] = 1.0
            acc += solve_exposure(m, unit) - base
        assert np.max(np.abs(total - acc)) < 1e-7


class TestEffectiveWeights:
    def test_no_sharing_gives_diagonal(self):
        m = ExposureModel(
            delta=np.array([2.0, 3.0]), alpha=np.zeros(2), sharing=csr_matrix((2, 2))
        )
        w = effective_weights(m)
        assert w.matrix.toarray() == pytest.approx(np.diag([2.0, 3.0]))

    def test_two_node_closed_form(self):
        w = effective_weights(two_node_model())
        expect = np.array([[4 / 3, 2 / 3], [2 / 3, 4 / 3]])
        assert w.matrix.toarray() == pytest.approx(expect, abs=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(random_exposure_models())
    def test_one_norm_inequality(self, m):
        w = effective_weights(m)
        col_sums = np.asarray(np.abs(w.matrix).sum(axis=0)).ravel()
        p1 = np.asarray(np.abs(m.sharing).sum(axis=0)).ravel().max() if m.sharing.nnz else 0.0
        if p1 < 1.0:
            bound = m.delta.max() / (1.0 - p1)
            assert col_sums.max() <= bound + 1e-8

    def test_row_oracle_matches_materialized(self):
        g = erdos_renyi(40, 4, seed=3)
        m = generate_instance(g, 1.0, 0.5, "identity", seed=4)
        w = effective_weights(m).matrix.toarray()
        for i in (0, 7, 39):
            row = effective_weight_row(m, i)
            assert row == pytest.approx(w[i], abs=1e-9)

    def test_size_refusal(self):
        g = erdos_renyi(50, 2, seed=5)
        m = generate_instance(g, 1.0, 0.3, "identity", seed=6)
        with pytest.raises(ValueError, match="effective_weight_row"):
            effective_weights(m, max_n=10)


class TestRealize:
    def test_linear_example(self):
        m = LinearModel(baseline=np.zeros(2), weights=weight_matrix([[0, 1], [1, 0]]))
        y = realize(m, np.array([1, 1]))
        assert y == pytest.approx([1.0, 1.0])

    def test_threshold_link_from_exposure(self):
        m = two_node_model(link="threshold:1")
        y = realize(m, np.array([1, 0]))
        assert y == pytest.approx([1.0, 0.0])

    def test_sqrt_link_pointwise(self):
        name, fn = make_link("sqrt")
        assert fn(np.array([4.0, 9.0])) == pytest.approx([2.0, 3.0])

    def test_threshold_is_strict(self):
        _, fn = make_link("threshold:1")
        assert fn(np.array([1.0, 1.0 + 1e-12]))[0] == 0.0
        assert fn(np.array([1.0, 1.0 + 1e-12]))[1] == 1.0

    def test_non_finite_rejected(self):
        m = LinearModel(
            baseline=np.zeros(2), weights=weight_matrix([[0, np.inf], [1, 0]])
        )
        with pytest.raises(NumericalError, match="non-finite"):
            realize(m, np.array([1, 1]))

    def test_realize_many_matches_single(self):
        g = erdos_renyi(12, 3, seed=9)
        m = generate_instance(g, 1.0, 0.4, "sqrt", seed=10)
        Z = np.array([[0] * 12, [1] * 12, [1, 0] * 6])
        Y = realize_many(m, Z)
        for row, z in zip(Y, Z):
            assert row == pytest.approx(realize(m, np.array(z)), abs=1e-9)


class TestGroundTruthTTE:
    def test_linear_swap_matrix(self):
        m = LinearModel(
            baseline=np.array([5.0, -2.0]), weights=weight_matrix([[0, 1], [1, 0]])
        )
        assert ground_truth_tte(m) == 1.0

    def test_constant_outcomes_zero(self):
        g = erdos_renyi(30, 3, seed=11)
        m = generate_instance(g, 0.0, 0.5, "sqrt", seed=12)
        assert ground_truth_tte(m) == pytest.approx(0.0, abs=1e-9)

    def test_linear_equals_mean_row_sum(self):
        rng = np.random.default_rng(13)
        w = rng.random((6, 6)) * (rng.random((6, 6)) < 0.5)
        m = LinearModel(baseline=rng.normal(size=6), weights=weight_matrix(w))
        assert ground_truth_tte(m) == pytest.approx(w.sum(axis=1).mean(), rel=1e-15)
        diff = realize(m, np.ones(6)) - realize(m, np.zeros(6))
        assert ground_truth_tte(m) == pytest.approx(diff.mean(), rel=1e-12)

    def test_simulation_instance_scale(self):
        # frozen reference bands for the stock simulation instances;
        # the threshold value sits at 0.5 by construction of the model
        g = erdos_renyi(10_000, 10, seed=101)
        sqrt_tte = ground_truth_tte(
            generate_instance(g, 1.0, 0.5, "sqrt", seed=102)
        )
        thr_tte = ground_truth_tte(
            generate_instance(g, 1.0, 0.5, "threshold:1", seed=102)
        )
        assert 0.39 <= sqrt_tte <= 0.45
        assert 0.45 <= thr_tte <= 0.55


class TestSurrogateGap:
    def test_superset_support_zero(self):
        g = Graph.from_edges(2, [0], [1])
        w = weight_matrix([[0.5, 0.5], [0.5, 0.5]])
        assert surrogate_gap(w, g) == 0.0

    def test_self_loops_only_half_missed(self):
        g = Graph.from_edges(2, [], [])
        w = weight_matrix([[0.5, 0.5], [0.5, 0.5]])
        assert surrogate_gap(w, g) == pytest.approx(0.5)

    def test_single_removed_edge(self):
        rng = np.random.default_rng(17)
        n = 12
        dense = rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        dense = np.triu(dense, 1)
        dense = dense + dense.T
        us, vs = np.nonzero(np.triu(dense, 1))
        drop = 3  # remove one support edge from the surrogate
        keep = np.ones(us.size, dtype=bool)
        keep[drop] = False
        g = Graph.from_edges(n, us[keep], vs[keep])
        w = weight_matrix(dense)
        i, j = us[drop], vs[drop]
        expected = max(
            dense[i, j] / dense[i].sum(), dense[j, i] / dense[j].sum()
        )
        assert surrogate_gap(w, g) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_in_added_edges(self, seed):
        rng = np.random.default_rng(seed)
        n = 10
        dense = rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        np.fill_diagonal(dense, rng.random(n))
        w = weight_matrix(dense)
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        rng.shuffle(pairs)
        cut = rng.integers(0, len(pairs))
        small = pairs[:cut]
        big = pairs[: cut + max(1, (len(pairs) - cut) // 2)]
        g_small = Graph.from_edges(n, *zip(*small)) if small else Graph.from_edges(n, [], [])
        g_big = Graph.from_edges(n, *zip(*big))
        assert surrogate_gap(w, g_big) <= surrogate_gap(w, g_small) + 1e-12


class TestGenerateInstance:
    def test_gamma2_zero_no_sharing(self):
        g = erdos_renyi(20, 3, seed=19)
        m = generate_instance(g, 1.0, 0.0, "identity", seed=20)
        assert m.sharing.nnz == 0

    def test_row_normalization(self):
        g = Graph.from_edges(3, [0, 0], [1, 2])  # node 0 has two neighbors
        m = generate_instance(g, 1.0, 0.5, "identity", seed=21)
        row = m.sharing.getrow(0).toarray().ravel()
        assert row[1] == pytest.approx(0.25)
        assert row[2] == pytest.approx(0.25)

    def test_row_sums_exact(self):
        g = erdos_renyi(50, 4, seed=22)
        m = generate_instance(g, 1.0, 0.7, "identity", seed=23)
        sums = np.asarray(m.sharing.sum(axis=1)).ravel()
        deg = np.diff(g.offsets)
        assert sums[deg > 0] == pytest.approx(0.7)
        assert np.all(sums[deg == 0] == 0)

    def test_gamma2_cap(self):
        g = erdos_renyi(10, 2, seed=24)
        with pytest.raises(ValueError, match="gamma2"):
            generate_instance(g, 1.0, 0.9, "sqrt", seed=25)

    def test_deterministic(self):
        g = erdos_renyi(25, 3, seed=26)
        a = generate_instance(g, 1.0, 0.5, "sqrt", seed=27)
        b = generate_instance(g, 1.0, 0.5, "sqrt", seed=27)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(a.delta, b.delta)
        assert (a.sharing != b.sharing).nnz == 0


class TestOutcomeIO:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "y.tsv"
        p.write_text("0\t1.5\n2\t-3.25\n1\t0\n")
        y = load_outcome_vector(p, 3)
        assert y == pytest.approx([1.5, 0.0, -3.25])

    def test_missing_node(self, tmp_path):
        p = tmp_path / "y.tsv"
        p.write_text("0\t1\n")
        with pytest.raises(DataError, match="node 1"):
            load_outcome_vector(p, 2)

    def test_duplicate_node(self, tmp_path):
        p = tmp_path / "y.tsv"
        p.write_text("0\t1\n0\t2\n")
        with pytest.raises(DataError, match="duplicate"):
            load_outcome_vector(p, 1)
