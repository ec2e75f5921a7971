"""Point estimators for the total treatment effect.

The network estimator weights each observed outcome by the signed
inverse-propensity sum over its closed surrogate neighborhood; shrinking
the neighborhood to the unit itself recovers the inverse-propensity
difference-in-means, and the gap between the two is the interference
contrast that the SUTVA test works with. All sums use numpy's pairwise
accumulation so large populations do not leak rounding error.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

__all__ = [
    "UnitStatistics",
    "unit_statistics",
    "pseudo_inverse",
    "difference_in_means",
    "interference_contrast",
]


@dataclass(frozen=True)
class UnitStatistics:
    """Per-unit ingredients of the estimators.

    t[i]       = Y_i * sum of D_j over the closed neighborhood M_i
    t_prime[i] = same sum with the unit's own D_i removed
    d[i]       = z_i/p - (1-z_i)/(1-p)
    """

    t: np.ndarray
    t_prime: np.ndarray
    d: np.ndarray


def _checked_outcomes(y, n):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ValueError(f"outcome vector length {y.shape} does not match n={n}")
    if not np.isfinite(y).all():
        raise NumericalError("outcome vector contains non-finite values")
    return y


def unit_statistics(g, y, assignment):
    """T_i, T_i' and D_i for one realized experiment."""
    if assignment.n != g.n:
        raise ValueError("assignment length does not match graph")
    y = _checked_outcomes(y, g.n)
    d = assignment.ip_weights()
    t = y * g.closed_neighbor_sums(d)
    t_prime = t - y * d
    return UnitStatistics(t=t, t_prime=t_prime, d=d)


def pseudo_inverse(g, y, assignment):
    """(1/n) sum_i Y_i sum_{j in M_i} (z_j/p - (1-z_j)/(1-p))."""
    return float(np.mean(unit_statistics(g, y, assignment).t))


def difference_in_means(y, assignment):
    """Inverse-propensity mean contrast (1/n) sum_i Y_i D_i.

    This is the estimator the interference test needs: the weighted form,
    not the raw treated-minus-control group means (the two agree in
    expectation but differ sample by sample).
    """
    y = _checked_outcomes(y, assignment.n)
    return float(np.mean(y * assignment.ip_weights()))


def interference_contrast(g, y, assignment):
    """Network estimator minus difference-in-means, computed from the
    self-excluded statistics so the subtraction happens per unit."""
    return float(np.mean(unit_statistics(g, y, assignment).t_prime))
