import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spillover.errors import NumericalError
from spillover.estimators import (
    difference_in_means,
    interference_contrast,
    pseudo_inverse,
    unit_statistics,
)
from spillover.graph import Graph, erdos_renyi
from spillover.randomization import Assignment


def assignment(z, p=0.5):
    return Assignment(z=np.asarray(z), p=p)


@pytest.fixture
def worked_example():
    # 3 nodes, single edge {0,1}, p = 1/2, z = (1,0,1), y = (2,1,3)
    g = Graph.from_edges(3, [0], [1])
    return g, np.array([2.0, 1.0, 3.0]), assignment([1, 0, 1])


class TestPseudoInverse:
    def test_worked_example(self, worked_example):
        g, y, a = worked_example
        assert pseudo_inverse(g, y, a) == pytest.approx(2.0)

    def test_zero_outcomes(self, worked_example):
        g, _, a = worked_example
        assert pseudo_inverse(g, np.zeros(3), a) == 0.0

    def test_self_loops_only_equals_dim(self):
        g = Graph.from_edges(4, [], [])
        rng = np.random.default_rng(3)
        y = rng.normal(size=4)
        a = assignment([1, 0, 0, 1], p=0.3)
        assert pseudo_inverse(g, y, a) == pytest.approx(difference_in_means(y, a))

    def test_non_finite_rejected(self, worked_example):
        g, _, a = worked_example
        with pytest.raises(NumericalError):
            pseudo_inverse(g, np.array([1.0, np.nan, 0.0]), a)


class TestDifferenceInMeans:
    def test_symmetric_cancellation(self):
        assert difference_in_means(np.ones(2), assignment([1, 0])) == 0.0

    def test_direct_evaluation(self):
        assert difference_in_means(np.array([1.0, 0.0]), assignment([1, 0])) == 1.0

    def test_all_treated(self):
        y = np.array([1.0, 2.0, 3.0])
        got = difference_in_means(y, assignment([1, 1, 1]))
        assert got == pytest.approx(2 * y.sum() / 3)


class TestContrast:
    def test_self_loops_only_zero(self):
        g = Graph.from_edges(3, [], [])
        y = np.array([1.0, -2.0, 0.5])
        assert interference_contrast(g, y, assignment([1, 0, 1])) == 0.0

    def test_worked_example(self, worked_example):
        g, y, a = worked_example
        assert interference_contrast(g, y, a) == pytest.approx(-2 / 3)

    def test_equals_difference_of_estimators(self):
        g = erdos_renyi(60, 4, seed=5)
        rng = np.random.default_rng(6)
        y = rng.normal(size=60)
        a = assignment((rng.random(60) < 0.3).astype(int), p=0.3)
        lhs = interference_contrast(g, y, a)
        rhs = pseudo_inverse(g, y, a) - difference_in_means(y, a)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestUnitStatistics:
    def test_worked_example_vectors(self, worked_example):
        g, y, a = worked_example
        s = unit_statistics(g, y, a)
        assert s.t == pytest.approx([0.0, 0.0, 6.0])
        assert s.t_prime == pytest.approx([-4.0, 2.0, 0.0])
        assert np.mean(s.t) == pytest.approx(pseudo_inverse(g, y, a))
        assert np.mean(s.t_prime) == pytest.approx(-2 / 3)

    def test_identity_relation(self):
        g = erdos_renyi(40, 3, seed=7)
        rng = np.random.default_rng(8)
        y = rng.normal(size=40)
        a = assignment((rng.random(40) < 0.5).astype(int))
        s = unit_statistics(g, y, a)
        assert s.t == pytest.approx(s.t_prime + y * s.d)

    def test_d_takes_two_values(self):
        g = Graph.from_edges(2, [0], [1])
        s = unit_statistics(g, np.ones(2), assignment([1, 0], p=0.25))
        assert sorted(s.d) == pytest.approx([-4 / 3, 4.0])


@st.composite
def graph_outcome_assignment(draw):
    n = draw(st.integers(min_value=2, max_value=25))
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    g = erdos_renyi(n, min(3.0, n - 1), seed=seed)
    y = rng.normal(size=n)
    p = draw(st.sampled_from([0.3, 0.5, 0.7]))
    z = (rng.random(n) < p).astype(int)
    return g, y, Assignment(z=z, p=p)


class TestEquivariance:
    @settings(max_examples=40, deadline=None)
    @given(graph_outcome_assignment(), st.floats(-5, 5))
    def test_scaling(self, goa, c):
        g, y, a = goa
        assert pseudo_inverse(g, c * y, a) == pytest.approx(
            c * pseudo_inverse(g, y, a), abs=1e-9
        )

    @settings(max_examples=40, deadline=None)
    @given(graph_outcome_assignment())
    def test_permutation(self, goa):
        g, y, a = goa
        rng = np.random.default_rng(123)
        perm = rng.permutation(g.n)
        # relabel: node i becomes perm[i]
        row_of = np.repeat(np.arange(g.n), np.diff(g.offsets))
        g2 = Graph.from_edges(
            g.n,
            perm[row_of[row_of < g.neighbors]],
            perm[g.neighbors[row_of < g.neighbors]],
        )
        y2 = np.empty_like(y)
        y2[perm] = y
        z2 = np.empty_like(a.z)
        z2[perm] = a.z
        a2 = Assignment(z=z2, p=a.p)
        for f1, f2 in [
            (pseudo_inverse(g, y, a), pseudo_inverse(g2, y2, a2)),
            (difference_in_means(y, a), difference_in_means(y2, a2)),
            (interference_contrast(g, y, a), interference_contrast(g2, y2, a2)),
        ]:
            assert f1 == pytest.approx(f2, abs=1e-10)
