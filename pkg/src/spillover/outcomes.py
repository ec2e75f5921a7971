"""Potential-outcome models: linear weights and equilibrium-exposure links.

The exposure model solves e = Delta z + P e + alpha for the equilibrium
exposure vector and maps it through a pointwise link. Because everything
downstream of the link is a fixed function of e, the induced weight matrix
is W = (I - P)^{-1} Delta, whose support acts as the true dependency
network (self column always counted in).
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import csr_matrix

from .errors import NumericalError
from .graph import closed_neighborhood
from .seeds import derive_rng

__all__ = [
    "WeightMatrix",
    "ExposureModel",
    "LinearModel",
    "make_link",
    "solve_exposure",
    "effective_weights",
    "effective_weight_row",
    "realize",
    "realize_many",
    "ground_truth_tte",
    "surrogate_gap",
    "generate_instance",
    "true_neighborhoods",
    "load_outcome_vector",
]

EXPOSURE_TOL = 1e-10
EXPOSURE_MAX_ITER = 1000
WEIGHT_DROP_TOL = 1e-12
NORM_CAP = 0.9


@dataclass(frozen=True)
class WeightMatrix:
    """Sparse non-negative interference weights; support defines the true
    network (with the self convention applied by consumers)."""

    matrix: csr_matrix

    def __post_init__(self):
        m = self.matrix.tocsr()
        if m.shape[0] != m.shape[1]:
            raise ValueError("weight matrix must be square")
        if m.nnz and m.data.min() < 0:
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self):
        return self.matrix.shape[0]

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def total(self):
        return float(self.matrix.sum())


def _as_z(z, n):
    """Accept an Assignment or a plain 0/1 vector."""
    vec = getattr(z, "z", z)
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (n,):
        raise ValueError(f"assignment length {vec.shape} does not match n={n}")
    return vec


def make_link(spec):
    """Resolve a link specification to (name, vectorized callable).

    Accepts 'identity', 'sqrt', 'threshold' or 'threshold:<t>' (strict
    inequality), or a user callable, which must be a pure pointwise function
    of a single real so the exposure-link structure is preserved.
    """
    if callable(spec):
        return getattr(spec, "__name__", "custom"), spec
    name = str(spec)
    if name == "identity":
        return name, lambda x: np.asarray(x, dtype=np.float64)
    if name == "sqrt":
        return name, np.sqrt
    if name == "threshold" or name.startswith("threshold:"):
        t = float(name.split(":", 1)[1]) if ":" in name else 1.0
        return f"threshold:{t:g}", lambda x, _t=t: (np.asarray(x) > _t).astype(np.float64)
    raise ValueError(f"unknown link {spec!r}")


@dataclass(frozen=True)
class ExposureModel:
    """Equilibrium-exposure outcomes y = f(e), e = Delta z + P e + alpha."""

    delta: np.ndarray
    alpha: np.ndarray
    sharing: csr_matrix
    link: object = "identity"
    link_name: str = field(init=False)
    link_fn: Callable = field(init=False)

    def __post_init__(self):
        delta = np.ascontiguousarray(self.delta, dtype=np.float64)
        alpha = np.ascontiguousarray(self.alpha, dtype=np.float64)
        P = self.sharing.tocsr()
        n = delta.size
        if alpha.size != n or P.shape != (n, n):
            raise ValueError("delta, alpha and sharing matrix sizes disagree")
        if not np.isfinite(delta).all() or delta.min() < 0:
            raise ValueError("direct effects must be finite and non-negative")
        if not np.isfinite(alpha).all():
            raise ValueError("baselines must be finite")
        if P.diagonal().any():
            raise ValueError("sharing matrix must have a zero diagonal")
        if P.nnz and P.data.min() < 0:
            raise ValueError("sharing probabilities must be non-negative")
        row_norm = float(np.abs(P).sum(axis=1).max()) if P.nnz else 0.0
        if row_norm >= NORM_CAP:
            raise ValueError(
                f"sharing matrix infinity norm {row_norm:.4f} >= {NORM_CAP}; "
                "the fixed-point solve is not guaranteed to converge"
            )
        # The solve only needs the row norm. Heavy columns (a node whose
        # low-degree neighbors all lean on it) are unavoidable in sparse
        # random instances, so the 1-norm is recorded, not enforced.
        col_norm = float(np.abs(P).sum(axis=0).max()) if P.nnz else 0.0
        object.__setattr__(self, "sharing_inf_norm", row_norm)
        object.__setattr__(self, "sharing_one_norm", col_norm)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sharing", P)
        name, fn = make_link(self.link)
        object.__setattr__(self, "link_name", name)
        object.__setattr__(self, "link_fn", fn)

    @property
    def n(self):
        return self.delta.size


@dataclass(frozen=True)
class LinearModel:
    """y_i = baseline_i + sum_j w_ij z_j."""

    baseline: np.ndarray
    weights: WeightMatrix

    def __post_init__(self):
        baseline = np.ascontiguousarray(self.baseline, dtype=np.float64)
        if not np.isfinite(baseline).all():
            raise ValueError("baselines must be finite")
        if baseline.size != self.weights.n:
            raise ValueError("baseline length does not match weight matrix")
        object.__setattr__(self, "baseline", baseline)

    @property
    def n(self):
        return self.baseline.size


def _fixed_point(P, const, tol, max_iter, what):
    """Solve x = const + P x by iteration; requires spectral radius < 1."""
    x = const.copy()
    for _ in range(max_iter):
        x_next = const + P.dot(x)
        diff = float(np.max(np.abs(x_next - x))) if x.size else 0.0
        x = x_next
        if diff <= tol:
            return x
    raise NumericalError(
        f"{what} did not converge after {max_iter} iterations "
        f"(last update {diff:.3e}, tolerance {tol:.1e})"
    )


def solve_exposure(model, z, tol=EXPOSURE_TOL, max_iter=EXPOSURE_MAX_ITER):
    """Equilibrium exposure vector for one assignment.

    The returned e satisfies e = Delta z + P e + alpha with sup-norm
    residual at most tol; geometric convergence is guaranteed by the
    row-norm cap on the sharing matrix.
    """
    zvec = _as_z(z, model.n)
    const = model.delta * zvec + model.alpha
    return _fixed_point(model.sharing, const, tol, max_iter, "exposure solve")


def _solve_exposure_many(model, Z, tol=EXPOSURE_TOL, max_iter=EXPOSURE_MAX_ITER):
    """Exposure columns for an (m, n) block of assignments at once."""
    Z = np.asarray(Z, dtype=np.float64)
    const = model.delta[:, None] * Z.T + model.alpha[:, None]
    return _fixed_point(model.sharing, const, tol, max_iter, "exposure solve")


def realize(model, z):
    """Outcome vector for one assignment; rejects non-finite results."""
    if isinstance(model, LinearModel):
        y = model.baseline + model.weights.matrix.dot(_as_z(z, model.n))
    elif isinstance(model, ExposureModel):
        y = model.link_fn(solve_exposure(model, z))
    else:  # anything exposing .realize(z) works (oracle test models)
        y = np.asarray(model.realize(z), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(y).all():
        raise NumericalError("model produced a non-finite outcome")
    return y


def realize_many(model, Z):
    """(m, n) outcome matrix for m assignments; used by enumeration oracles."""
    Z = np.asarray(Z, dtype=np.float64)
    if isinstance(model, LinearModel):
        Y = (model.weights.matrix.dot(Z.T)).T + model.baseline
    elif isinstance(model, ExposureModel):
        Y = model.link_fn(_solve_exposure_many(model, Z)).T
    else:
        Y = np.stack([np.asarray(model.realize(row), dtype=np.float64) for row in Z])
    if not np.isfinite(Y).all():
        raise NumericalError("model produced a non-finite outcome")
    return Y


def effective_weights(model, drop_tol=WEIGHT_DROP_TOL, max_n=4000):
    """Materialize W = (I - P)^{-1} Delta as a sparse WeightMatrix.

    Entries below drop_tol are pruned; the surviving support is what the
    package treats as the true dependency network of an exposure model.
    Dense intermediate storage limits this to moderate n; use
    effective_weight_row for single rows of a large model.
    """
    n = model.n
    if n > max_n:
        raise ValueError(
            f"materializing an {n} x {n} weight matrix is refused (max_n={max_n}); "
            "use effective_weight_row instead"
        )
    X = np.diag(model.delta)
    P = model.sharing
    for _ in range(EXPOSURE_MAX_ITER):
        X_next = P.dot(X)
        np.fill_diagonal(X_next, X_next.diagonal() + model.delta)
        diff = float(np.max(np.abs(X_next - X)))
        X = X_next
        if diff <= drop_tol * 0.01:
            break
    else:
        raise NumericalError("weight materialization did not converge")
    X[np.abs(X) < drop_tol] = 0.0
    return WeightMatrix(matrix=csr_matrix(X))


def effective_weight_row(model, i, drop_tol=WEIGHT_DROP_TOL):
    """Row i of W = (I - P)^{-1} Delta without materializing W.

    Solves (I - P^T) v = e_i by iteration (the spectral radius equals that
    of P, so this converges for any valid model) and returns the dense row
    v * delta with sub-drop_tol entries zeroed.
    """
    if not 0 <= i < model.n:
        raise ValueError(f"row {i} out of range")
    e = np.zeros(model.n)
    e[i] = 1.0
    PT = model.sharing.T.tocsr()
    v = _fixed_point(PT, e, drop_tol * 0.01, 5000, "weight row solve")
    row = v * model.delta
    row[np.abs(row) < drop_tol] = 0.0
    return row


def ground_truth_tte(model):
    """(1/n) sum_i [Y_i(all ones) - Y_i(all zeros)].

    For a linear model this reduces to the mean row sum of the weight
    matrix, which is used directly so the value is exact.
    """
    if isinstance(model, LinearModel):
        return float(model.weights.row_sums().mean())
    ones = np.ones(model.n)
    zeros = np.zeros(model.n)
    return float(np.mean(realize(model, ones) - realize(model, zeros)))


def surrogate_gap(w, g):
    """Smallest delta with (missed row weight) <= delta * (row weight) for
    all rows: the worst relative weight of true edges absent from the
    surrogate. Self entries are never missed; zero-weight rows are skipped.
    """
    m = w.matrix
    if m.shape[0] != g.n:
        raise ValueError("weight matrix and graph sizes disagree")
    worst = 0.0
    indptr, indices, data = m.indptr, m.indices, m.data
    for i in range(g.n):
        lo, hi = indptr[i], indptr[i + 1]
        if lo == hi:
            continue
        cols = indices[lo:hi]
        vals = data[lo:hi]
        row_weight = float(vals.sum())
        if row_weight <= 0.0:
            continue
        mi = closed_neighborhood(g, i)
        pos = np.searchsorted(mi, cols)
        pos[pos == mi.size] = 0
        covered = mi[pos] == cols
        missed = float(vals[~covered].sum())
        worst = max(worst, missed / row_weight)
    return min(1.0, worst)


def generate_instance(g, gamma1, gamma2, link, seed):
    """Simulation-study instance on a surrogate graph.

    Baselines are i.i.d. U(0,1), direct effects i.i.d. U(0, gamma1), and the
    sharing matrix spreads gamma2 uniformly over each node's open neighbors,
    so its row sums equal gamma2 exactly wherever a node has a neighbor.
    """
    if gamma2 >= NORM_CAP:
        raise ValueError(f"gamma2 must be < {NORM_CAP} for a solvable sharing matrix")
    if gamma2 < 0 or gamma1 < 0:
        raise ValueError("gamma parameters must be non-negative")
    rng = derive_rng(seed)
    n = g.n
    alpha = rng.random(n)
    delta = rng.random(n) * gamma1
    deg = np.diff(g.offsets)
    share = np.where(deg > 0, gamma2 / np.maximum(deg, 1), 0.0)
    data = np.repeat(share, deg)
    P = csr_matrix((data, g.neighbors.copy(), g.offsets.copy()), shape=(n, n))
    P.eliminate_zeros()
    return ExposureModel(delta=delta, alpha=alpha, sharing=P, link=link)


def true_neighborhoods(model, drop_tol=WEIGHT_DROP_TOL):
    """Per-unit sorted dependency neighborhoods N_i (self always included)."""
    if isinstance(model, LinearModel):
        m = model.weights.matrix
    elif isinstance(model, ExposureModel):
        m = effective_weights(model, drop_tol=drop_tol).matrix
    else:
        return [np.asarray(nbrs, dtype=np.int64) for nbrs in model.neighborhoods()]
    out = []
    for i in range(m.shape[0]):
        cols = m.indices[m.indptr[i] : m.indptr[i + 1]]
        out.append(np.union1d(cols, [i]).astype(np.int64))
    return out


def load_outcome_vector(path, n):
    """Read 'node_id \\t y' TSV covering every node exactly once."""
    from .errors import DataError

    y = np.full(n, np.nan)
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'node_id<TAB>value'")
            try:
                node = int(parts[0])
                val = float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad field")
            if not 0 <= node < n:
                raise DataError(f"{path}:{lineno}: unknown node id {node}")
            if not math.isnan(y[node]):
                raise DataError(f"{path}:{lineno}: duplicate value for node {node}")
            y[node] = val
    missing = np.flatnonzero(np.isnan(y))
    if missing.size:
        raise DataError(f"{path}: node {int(missing[0])} has no outcome")
    if not np.isfinite(y).all():
        raise DataError(f"{path}: non-finite outcome value")
    return y
