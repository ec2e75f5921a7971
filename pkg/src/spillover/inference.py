"""Variance estimation, confidence intervals, and the interference test.

The dependency-aware variance estimator restricts the double sum of
centered per-unit statistics to pairs whose closed neighborhoods overlap;
the mask is exactly the two-hop pair set the graph module enumerates. The
same machinery with self-excluded statistics yields the variance of the
interference contrast, which is what the SUTVA test reports.
"""

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import ndtr, ndtri

from .estimators import unit_statistics
from .graph import DEFAULT_COST_CAP, two_hop_quadratic

__all__ = [
    "VarianceEstimate",
    "EstimateReport",
    "variance_estimate",
    "neyman_variance",
    "normal_test",
    "chebyshev_test",
    "chebyshev_pvalue",
    "sutva_test",
    "build_report",
]

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class VarianceEstimate:
    """Variance estimate clipped at zero; raw keeps the unclipped value and
    clipped flags when the clip actually fired."""

    value: float
    raw: float

    @property
    def clipped(self):
        return self.raw < 0.0


@dataclass(frozen=True)
class EstimateReport:
    """One estimator on one metric: point, variance, CI and test results."""

    estimator: str
    point: float
    var_hat: float
    ci_low: float
    ci_high: float
    p_normal: float
    p_chebyshev: float
    n: int
    d_max: int
    var_clipped: bool = False

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def variance_estimate(g, stats, point, mode="full", cost_cap=DEFAULT_COST_CAP):
    """Masked double sum (1/n^2) sum_{ij} (T_i - point)(T_j - point) I_ij.

    mode 'full' uses T_i (pairs with the network estimator), 'no_self' uses
    the self-excluded T_i' (pairs with the interference contrast). The sum
    is not positive semidefinite, so a negative value is clipped to zero
    with the flag raised.
    """
    if mode == "full":
        t = stats.t
    elif mode == "no_self":
        t = stats.t_prime
    else:
        raise ValueError(f"unknown variance mode {mode!r}")
    centered = t - point
    raw = two_hop_quadratic(g, centered, cost_cap=cost_cap) / (g.n * g.n)
    return VarianceEstimate(value=max(raw, 0.0), raw=raw)


def neyman_variance(y, assignment):
    """Classical two-group conservative estimate s1^2/n1 + s0^2/n0.

    Pairs with the difference-in-means column of the analysis report; both
    groups need at least two units for the sample variances to exist.
    """
    y = np.asarray(y, dtype=np.float64)
    z = assignment.z.astype(bool)
    n1 = int(z.sum())
    n0 = z.size - n1
    if n1 < 2 or n0 < 2:
        raise ValueError(
            f"both groups need >= 2 units for sample variances (n1={n1}, n0={n0})"
        )
    s1 = float(np.var(y[z], ddof=1))
    s0 = float(np.var(y[~z], ddof=1))
    return s1 / n1 + s0 / n0


def normal_test(point, var_hat, alpha=DEFAULT_ALPHA):
    """Normal-approximation CI and two-sided p-value.

    Degenerate var_hat = 0 collapses the CI to the point and sends the
    p-value to 1 or 0 according to whether the point itself is zero.
    """
    if var_hat < 0:
        raise ValueError("variance must be non-negative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0,1)")
    sigma = math.sqrt(var_hat)
    if sigma == 0.0:
        p = 1.0 if point == 0.0 else 0.0
        return point, point, p
    zq = float(ndtri(1.0 - alpha / 2.0))
    p = 2.0 * (1.0 - float(ndtr(abs(point) / sigma)))
    return point - zq * sigma, point + zq * sigma, p


def chebyshev_pvalue(point, var_hat):
    """Distribution-free bound min(1, var / point^2)."""
    if point == 0.0:
        return 1.0
    if var_hat == 0.0:
        return 0.0
    return min(1.0, var_hat / (point * point))


def chebyshev_test(point, var_hat, alpha=DEFAULT_ALPHA):
    """Reject the zero null when |point| > sqrt(var_hat / alpha)."""
    if var_hat < 0:
        raise ValueError("variance must be non-negative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0,1)")
    return abs(point) > math.sqrt(var_hat / alpha)


def build_report(estimator, point, var_hat, n, d_max, alpha=DEFAULT_ALPHA, clipped=False):
    ci_low, ci_high, p = normal_test(point, var_hat, alpha)
    return EstimateReport(
        estimator=estimator,
        point=point,
        var_hat=var_hat,
        ci_low=ci_low,
        ci_high=ci_high,
        p_normal=p,
        p_chebyshev=chebyshev_pvalue(point, var_hat),
        n=n,
        d_max=d_max,
        var_clipped=clipped,
    )


def sutva_test(g, y, assignment, alpha=DEFAULT_ALPHA, cost_cap=DEFAULT_COST_CAP):
    """Interference test: the contrast between the network estimator and
    difference-in-means, with its self-excluded dependency-aware variance.
    Under no interference the contrast has mean zero whatever the surrogate
    looks like, so a small p-value flags spillover."""
    stats = unit_statistics(g, y, assignment)
    point = float(np.mean(stats.t_prime))
    ve = variance_estimate(g, stats, point, mode="no_self", cost_cap=cost_cap)
    return build_report(
        "contrast",
        point,
        ve.value,
        n=g.n,
        d_max=g.degree_stats().max_closed_degree,
        alpha=alpha,
        clipped=ve.clipped,
    )
