"""Exact small-instance ground truth by full enumeration.

Everything here enumerates all 2^n assignments (or all subsets of a unit's
dependency neighborhood) with exact Bernoulli weights, so the estimator's
expectation and variance identities can be verified to float precision
instead of by Monte Carlo. The exponential caps fail loudly; nothing in
this module approximates.
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .estimators import unit_statistics
from .graph import closed_neighborhood
from .outcomes import ground_truth_tte, realize_many, true_neighborhoods
from .randomization import Assignment

__all__ = [
    "EnumerationResult",
    "JointEffects",
    "CallableModel",
    "enumerate_assignments",
    "assignment_weights",
    "enumerate_estimator",
    "expected_psi_matrix",
    "psi",
    "phi",
    "joint_effects",
    "endogenous_bias_check",
    "constant_outcome_variance",
]

MAX_ENUM_N = 20
MAX_NEIGHBORHOOD = 20
ESTIMATOR_KINDS = ("pseudo_inverse", "dim", "contrast")


@dataclass(frozen=True)
class EnumerationResult:
    """Exact mean/variance of an estimator over all assignments, plus the
    exact per-unit means of its T_i statistic."""

    mean: float
    variance: float
    per_unit_means: np.ndarray


@dataclass(frozen=True)
class JointEffects:
    """Moebius coefficients a_{i,S} of each unit's outcome polynomial.

    coefficients[i] maps a sorted tuple S (subset of unit i's dependency
    neighborhood) to its joint treatment effect. beta_sums[b] aggregates
    (1/n) sum_i sum_{|S|=b} a_{i,S}; the empty-set coefficient is the
    baseline, which cancels in any treatment contrast, so beta_sums[0] is
    zero by convention and the order sums telescope to the TTE.
    """

    coefficients: list
    beta_sums: np.ndarray


@dataclass(frozen=True)
class CallableModel:
    """Adapter for oracle tests: an arbitrary outcome map with declared
    dependency neighborhoods."""

    n: int
    fn: Callable
    nbhds: Sequence

    def realize(self, z):
        return np.asarray(self.fn(np.asarray(z, dtype=np.float64)), dtype=np.float64)

    def neighborhoods(self):
        return [np.asarray(sorted(s), dtype=np.int64) for s in self.nbhds]


def _check_enum_size(n):
    if n > MAX_ENUM_N:
        raise ValueError(
            f"full enumeration refused for n={n} (cap {MAX_ENUM_N}): 2^n assignments"
        )


def enumerate_assignments(n):
    """(2^n, n) matrix of every binary assignment; column j is bit j."""
    _check_enum_size(n)
    count = 1 << n
    idx = np.arange(count, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.float64)


def assignment_weights(Z, p):
    """Exact Bernoulli(p) probability of each assignment row."""
    ones = Z.sum(axis=1)
    n = Z.shape[1]
    return p ** ones * (1.0 - p) ** (n - ones)


def _per_unit_stats(model, g, p, kind):
    if kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    n = model.n
    _check_enum_size(n)
    Z = enumerate_assignments(n)
    w = assignment_weights(Z, p)
    Y = realize_many(model, Z)
    D = Z / p - (1.0 - Z) / (1.0 - p)
    if kind == "dim":
        T = Y * D
    else:
        S = D + (g.scipy_adjacency().dot(D.T)).T  # closed-neighborhood sums
        T = Y * S
        if kind == "contrast":
            T = T - Y * D
    return Z, w, T


def enumerate_estimator(model, g, p, kind="pseudo_inverse"):
    """Exact weighted mean and variance of the chosen estimator, enumerating
    every assignment of the model's population."""
    _, w, T = _per_unit_stats(model, g, p, kind)
    values = T.mean(axis=1)
    mean = float(w @ values)
    variance = float(w @ (values - mean) ** 2)
    return EnumerationResult(
        mean=mean, variance=variance, per_unit_means=w @ T
    )


def psi(model, i, k, z_rest):
    """Exact outcome change for unit i when z_k flips 0 -> 1, holding the
    rest of z_rest fixed."""
    z0 = np.array(getattr(z_rest, "z", z_rest), dtype=np.float64)
    z1 = z0.copy()
    z0[k] = 0.0
    z1[k] = 1.0
    Y = realize_many(model, np.stack([z0, z1]))
    return float(Y[1, i] - Y[0, i])


def phi(model, i, k, l, z_rest):
    """Second difference psi_i^k(z_l=0) - psi_i^k(z_l=1)."""
    if k == l:
        raise ValueError("phi needs two distinct switch indices")
    z = np.array(getattr(z_rest, "z", z_rest), dtype=np.float64)
    lo, hi = z.copy(), z.copy()
    lo[l] = 0.0
    hi[l] = 1.0
    return psi(model, i, k, lo) - psi(model, i, k, hi)


def expected_psi_matrix(model, p):
    """(n, n) matrix of E(psi_i^k) under Bernoulli(p), by exact enumeration.

    Entry (i, k) averages the flip response of unit i to unit k over all
    assignments of the other units, which is the expected marginal
    interference the network estimator aggregates.
    """
    n = model.n
    _check_enum_size(n)
    Z = enumerate_assignments(n)
    Y = realize_many(model, Z)
    out = np.zeros((n, n))
    idx = np.arange(1 << n, dtype=np.uint64)
    for k in range(n):
        bit = np.uint64(1) << np.uint64(k)
        low = (idx & bit) == 0
        rest = Z[low].copy()
        rest[:, k] = 0.0
        w_rest = assignment_weights(np.delete(rest, k, axis=1), p)
        diff = Y[~low] - Y[low]  # rows pair up: m and m | bit
        out[:, k] = w_rest @ diff
    return out


def joint_effects(model, neighborhoods=None):
    """All joint treatment effects a_{i,S} via the subset Moebius transform.

    neighborhoods defaults to the model's own dependency neighborhoods;
    each must contain at most MAX_NEIGHBORHOOD units.
    """
    if neighborhoods is None:
        neighborhoods = true_neighborhoods(model)
    n = model.n
    coefficients = []
    max_order = 0
    sums = {}
    for i in range(n):
        nb = np.asarray(neighborhoods[i], dtype=np.int64)
        m = nb.size
        if m > MAX_NEIGHBORHOOD:
            raise ValueError(
                f"unit {i} has {m} dependency neighbors (cap {MAX_NEIGHBORHOOD})"
            )
        # outcomes of unit i on every subset of its neighborhood
        count = 1 << m
        sub = np.arange(count, dtype=np.uint32)
        Z = np.zeros((count, n))
        Z[:, nb] = (sub[:, None] >> np.arange(m, dtype=np.uint32)) & 1
        f = realize_many(model, Z)[:, i].copy()
        for b in range(m):
            bit = 1 << b
            has = (sub & bit) != 0
            f[has] -= f[sub[has] ^ bit]
        coeffs = {}
        orders = np.zeros(count, dtype=np.int64)
        for b in range(m):
            orders += (sub >> b) & 1
        for mask in range(count):
            val = f[mask]
            if val != 0.0 or mask == 0:
                members = tuple(int(nb[b]) for b in range(m) if mask & (1 << b))
                coeffs[members] = float(val)
            order = int(orders[mask])
            if order > 0:
                sums[order] = sums.get(order, 0.0) + float(f[mask])
                max_order = max(max_order, order)
        coefficients.append(coeffs)
    beta_sums = np.zeros(max_order + 1)
    for order, total in sums.items():
        beta_sums[order] = total / n
    return JointEffects(coefficients=coefficients, beta_sums=beta_sums)


def endogenous_bias_check(model, g, p):
    """Exact two-sided evaluation of the low-order expectation identity.

    Requires the model's dependency neighborhoods to coincide with the
    graph's closed neighborhoods; returns (enumerated mean, the order-sum
    prediction sum_b b p^(b-1) abar_b).
    """
    nbhds = true_neighborhoods(model)
    for i in range(model.n):
        if not np.array_equal(
            np.union1d(nbhds[i], [i]), closed_neighborhood(g, i)
        ):
            raise ValueError(
                f"unit {i}: dependency neighborhood differs from the graph; "
                "the identity only holds when the two networks coincide"
            )
    lhs = enumerate_estimator(model, g, p, "pseudo_inverse").mean
    je = joint_effects(model, nbhds)
    orders = np.arange(je.beta_sums.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = np.where(orders >= 1, orders * p ** (orders - 1.0), 0.0)
    rhs = float(factors @ je.beta_sums)
    return lhs, rhs


def constant_outcome_variance(g, p, c=1.0):
    """Exact estimator variance when every outcome equals the constant c:
    c^2 / (n^2 p (1-p)) * sum_k |M_k|^2."""
    cdeg = g.closed_degrees().astype(np.float64)
    return float(c * c * np.sum(cdeg * cdeg) / (g.n * g.n * p * (1.0 - p)))
