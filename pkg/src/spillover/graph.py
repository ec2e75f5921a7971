"""Immutable sparse undirected graphs with closed-neighborhood primitives.

A graph stores open adjacency in CSR form (offsets + concatenated sorted
neighbor lists, self entries excluded). Every unit is conventionally its own
neighbor, so the iteration helpers work with closed neighborhoods: node i
merged into its neighbor list. All estimator math in this package runs on
closed neighborhoods.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .seeds import derive_rng

__all__ = [
    "Graph",
    "DegreeStats",
    "closed_neighborhood",
    "intersection_nonempty",
    "two_hop_pairs",
    "two_hop_pair_array",
    "two_hop_quadratic",
    "two_hop_cost",
    "erdos_renyi",
    "ring_lattice",
    "load_edge_list",
    "save_edge_list",
]

# Abort threshold for the two-hop machinery: sum_i |M_i|^2 above this is
# refused rather than ground through (configurable per call).
DEFAULT_COST_CAP = 10_000_000_000

# Target number of candidate (i, k, j) expansions per processed block.
_BLOCK_COST = 4_000_000

# Below this expansion cost the masked quadratic goes through one sparse
# matmul (fast, ~12 bytes per candidate pair); above it, through the
# streaming block path that never materializes the pair set.
_MATMUL_COST_LIMIT = 40_000_000


@dataclass(frozen=True)
class DegreeStats:
    """Closed-degree summary: |M_i| counts the node itself."""

    max_closed_degree: int
    mean_closed_degree: float
    edge_count: int


class Graph:
    """Symmetric sparse graph over nodes 0..n-1, immutable after construction.

    offsets: int64 array of length n+1
    neighbors: int64 array of open neighbor lists, each sorted ascending,
        no duplicates, no self entries.
    """

    def __init__(self, n, offsets, neighbors, validate=True):
        self.n = int(n)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        self._closed = None
        self._spadj = None
        if validate:
            self.validate()

    @classmethod
    def from_edges(cls, n, u, v, validate=True):
        """Build from distinct undirected non-self edges given as id arrays."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        both_u = np.concatenate([u, v])
        both_v = np.concatenate([v, u])
        order = np.lexsort((both_v, both_u))
        both_u = both_u[order]
        both_v = both_v[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, both_u + 1, 1)
        np.cumsum(offsets, out=offsets)
        return cls(n, offsets, both_v, validate=validate)

    def validate(self):
        n, off, nbr = self.n, self.offsets, self.neighbors
        if n < 1:
            raise ValueError("graph needs at least one node")
        if off.shape != (n + 1,) or off[0] != 0 or off[-1] != nbr.size:
            raise ValueError("malformed CSR offsets")
        if np.any(np.diff(off) < 0):
            raise ValueError("CSR offsets must be non-decreasing")
        if nbr.size:
            if nbr.min() < 0 or nbr.max() >= n:
                raise ValueError("neighbor id out of range")
            row_of = np.repeat(np.arange(n, dtype=np.int64), np.diff(off))
            if np.any(row_of == nbr):
                raise ValueError("self entries are not stored explicitly")
            interior = np.ones(nbr.size, dtype=bool)
            row_starts = off[:-1][np.diff(off) > 0]
            interior[row_starts] = False
            if np.any((nbr[1:] <= nbr[:-1]) & interior[1:]):
                raise ValueError("neighbor lists must be sorted strictly ascending")
            # symmetry: the multiset of (i, j) equals the multiset of (j, i)
            fwd = np.sort(row_of * self.n + nbr)
            rev = np.sort(nbr * self.n + row_of)
            if not np.array_equal(fwd, rev):
                raise ValueError("adjacency is not symmetric")

    @property
    def edge_count(self):
        return self.neighbors.size // 2

    def degree(self, i=None):
        """Open degree (self excluded)."""
        if i is None:
            return np.diff(self.offsets)
        return int(self.offsets[i + 1] - self.offsets[i])

    def closed_degrees(self):
        return np.diff(self.offsets) + 1

    def degree_stats(self):
        cdeg = self.closed_degrees()
        return DegreeStats(
            max_closed_degree=int(cdeg.max()),
            mean_closed_degree=float(cdeg.mean()),
            edge_count=self.edge_count,
        )

    def neighbor_row(self, i):
        self._check_node(i)
        return self.neighbors[self.offsets[i] : self.offsets[i + 1]]

    def _check_node(self, i):
        if not 0 <= i < self.n:
            raise ValueError(f"node id {i} out of range [0, {self.n})")

    def closed_csr(self):
        """(offsets, indices) of adjacency with the self entry merged in."""
        if self._closed is None:
            n = self.n
            cdeg = self.closed_degrees()
            coff = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(cdeg, out=coff[1:])
            cnbr = np.empty(coff[-1], dtype=np.int64)
            row_of = np.repeat(np.arange(n, dtype=np.int64), cdeg - 1)
            # open neighbors keep their rank; those past the self slot shift by 1
            pos = np.arange(self.neighbors.size, dtype=np.int64)
            pos += coff[row_of] - self.offsets[row_of]
            pos += self.neighbors > row_of
            cnbr[pos] = self.neighbors
            # the self slot sits after the neighbors smaller than i
            smaller = np.zeros(n, dtype=np.int64)
            np.add.at(smaller, row_of, (self.neighbors < row_of).astype(np.int64))
            cnbr[coff[:-1] + smaller] = np.arange(n, dtype=np.int64)
            self._closed = (coff, cnbr)
        return self._closed

    def scipy_adjacency(self):
        """Open adjacency as a scipy CSR with unit float weights, cached."""
        if self._spadj is None:
            from scipy.sparse import csr_matrix

            data = np.ones(self.neighbors.size, dtype=np.float64)
            self._spadj = csr_matrix(
                (data, self.neighbors.copy(), self.offsets.copy()),
                shape=(self.n, self.n),
            )
        return self._spadj

    def closed_neighbor_sums(self, x):
        """Vector of sum_{j in M_i} x_j, one spmv plus the self term."""
        x = np.asarray(x, dtype=np.float64)
        return x + self.scipy_adjacency().dot(x)

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.neighbors, other.neighbors)
        )

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edge_count})"


def closed_neighborhood(g, i):
    """Sorted ids of M_i = {i} union open neighbors of i."""
    g._check_node(i)
    coff, cnbr = g.closed_csr()
    return cnbr[coff[i] : coff[i + 1]]


def intersection_nonempty(g, i, j):
    """True iff M_i and M_j share at least one node. Always true for i == j."""
    g._check_node(i)
    g._check_node(j)
    if i == j:
        return True
    a = closed_neighborhood(g, i)
    b = closed_neighborhood(g, j)
    return bool(np.intersect1d(a, b, assume_unique=True).size)


def two_hop_cost(g):
    """Exact work estimate sum_i |M_i|^2 for the pair enumeration."""
    cdeg = g.closed_degrees()
    return int(np.sum(cdeg * cdeg))


def _two_hop_ordered_blocks(g, cost_cap):
    """Yield (src, dst) blocks covering every ordered pair with I_ij = 1.

    Each source node is fully handled inside one block and every ordered
    pair appears exactly once (per-block dedup by sorted pair key).
    """
    cost = two_hop_cost(g)
    if cost > cost_cap:
        raise NumericalError(
            f"two-hop enumeration refused: sum_i |M_i|^2 = {cost:.3e} "
            f"exceeds cost cap {cost_cap:.3e}"
        )
    n = g.n
    coff, cnbr = g.closed_csr()
    cdeg = np.diff(coff)
    # expansion cost per source node: sum over k in M_i of |M_k|
    node_cost = np.add.reduceat(cdeg[cnbr], coff[:-1])
    start = 0
    while start < n:
        end = start + 1
        acc = node_cost[start]
        while end < n and acc + node_cost[end] <= _BLOCK_COST:
            acc += node_cost[end]
            end += 1
        k_nodes = cnbr[coff[start] : coff[end]]
        src1 = np.repeat(np.arange(start, end, dtype=np.int64), cdeg[start:end])
        lens = cdeg[k_nodes]
        starts = coff[k_nodes]
        total = int(lens.sum())
        cum = np.cumsum(lens)
        idx = np.arange(total, dtype=np.int64) - np.repeat(cum - lens, lens)
        idx += np.repeat(starts, lens)
        dst = cnbr[idx]
        src = np.repeat(src1, lens)
        keys = np.unique(src * n + dst)
        yield keys // n, keys % n
        start = end


def two_hop_pairs(g, cost_cap=DEFAULT_COST_CAP):
    """Stream of (i, j) id-array blocks, i <= j, one block entry per
    unordered pair with M_i intersecting M_j; diagonal pairs included."""
    for src, dst in _two_hop_ordered_blocks(g, cost_cap):
        keep = dst >= src
        yield src[keep], dst[keep]


def two_hop_pair_array(g, cost_cap=DEFAULT_COST_CAP):
    """Materialized (m, 2) array of the two_hop_pairs stream."""
    blocks = [np.column_stack(b) for b in two_hop_pairs(g, cost_cap)]
    if not blocks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(blocks, axis=0)


def two_hop_quadratic(g, values, cost_cap=DEFAULT_COST_CAP, method="auto"):
    """sum over ordered pairs (i, j) with I_ij = 1 of values_i * values_j.

    This is the masked double sum the dependency-aware variance estimator
    needs; both methods cover the exact pair set of two_hop_pairs.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (g.n,):
        raise ValueError("values must have one entry per node")
    cost = two_hop_cost(g)
    if cost > cost_cap:
        raise NumericalError(
            f"masked quadratic refused: sum_i |M_i|^2 = {cost:.3e} "
            f"exceeds cost cap {cost_cap:.3e}"
        )
    if method == "auto":
        method = "matmul" if cost <= _MATMUL_COST_LIMIT else "blocked"
    if method == "matmul":
        from scipy.sparse import identity

        closed = g.scipy_adjacency() + identity(g.n, format="csr")
        mask = closed @ closed  # entries count |M_i cap M_j| >= 1
        mask.data[:] = 1.0
        return float(v @ (mask @ v))
    if method != "blocked":
        raise ValueError(f"unknown method {method!r}")
    partials = []
    for src, dst in _two_hop_ordered_blocks(g, cost_cap):
        partials.append(float(np.dot(v[src], v[dst])))
    return math.fsum(partials)


def erdos_renyi(n, mean_degree, seed):
    """Uniform graph with exactly round(n * mean_degree / 2) distinct edges.

    Edges are sampled without replacement by batched rejection, so the
    result is uniform over all graphs with that node and edge count and is
    a pure function of the seed.
    """
    n = int(n)
    if n < 2:
        raise ValueError("erdos_renyi needs n >= 2")
    if mean_degree < 0:
        raise ValueError("mean_degree must be non-negative")
    m = int(round(n * mean_degree / 2.0))
    max_edges = n * (n - 1) // 2
    if m > max_edges:
        raise ValueError(f"edge count {m} exceeds maximum {max_edges} for n={n}")
    rng = derive_rng(seed)
    chosen = np.empty(0, dtype=np.int64)
    seen_sorted = np.empty(0, dtype=np.int64)
    while chosen.size < m:
        need = m - chosen.size
        draw = max(need + need // 8 + 16, 64)
        u = rng.integers(0, n, size=draw, dtype=np.int64)
        v = rng.integers(0, n, size=draw, dtype=np.int64)
        ok = u != v
        lo = np.minimum(u[ok], v[ok])
        hi = np.maximum(u[ok], v[ok])
        keys = lo * n + hi
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]  # order preserved within the batch
        if seen_sorted.size:
            keys = keys[~np.isin(keys, seen_sorted)]
        keys = keys[:need]
        chosen = np.concatenate([chosen, keys])
        seen_sorted = np.sort(chosen)
    return Graph.from_edges(n, chosen // n, chosen % n)


def ring_lattice(n, degree):
    """Ring where each node links to the degree/2 nearest on each side.

    degree must be even and < n; every node ends up with the same open
    degree, which makes the closed-form variance checks exact.
    """
    if degree % 2 != 0:
        raise ValueError("ring_lattice degree must be even")
    if not 0 <= degree < n:
        raise ValueError("ring_lattice needs 0 <= degree < n")
    half = degree // 2
    base = np.arange(n, dtype=np.int64)
    us, vs = [], []
    for k in range(1, half + 1):
        us.append(base)
        vs.append((base + k) % n)
    if not us:
        return Graph.from_edges(n, [], [])
    return Graph.from_edges(n, np.concatenate(us), np.concatenate(vs))


def load_edge_list(path):
    """Read a two-column TSV of undirected edges, 0-based ids.

    '#' lines are comments; a '# nodes: N' comment pins the node count so
    trailing isolated nodes survive a round trip. Self-loops and duplicate
    edges are dropped with a summary warning.
    """
    us, vs = [], []
    n_hint = 0
    self_loops = 0
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("nodes:"):
                    try:
                        n_hint = int(body.split(":", 1)[1])
                    except ValueError:
                        raise DataError(f"{path}:{lineno}: bad node-count comment")
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DataError(
                    f"{path}:{lineno}: expected two integer columns, got {len(parts)}"
                )
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node id")
            if a < 0 or b < 0:
                raise DataError(f"{path}:{lineno}: negative node id")
            if a == b:
                self_loops += 1
                n_hint = max(n_hint, a + 1)
                continue
            us.append(a)
            vs.append(b)
    u = np.asarray(us, dtype=np.int64)
    v = np.asarray(vs, dtype=np.int64)
    n = int(max(n_hint, (max(u.max(), v.max()) + 1) if u.size else 1))
    lo = np.minimum(u, v)
    hi = np.maximum(u, v)
    keys = np.unique(lo * n + hi)
    duplicates = u.size - keys.size
    if self_loops or duplicates:
        warnings.warn(
            f"{path}: dropped {self_loops} self-loop(s) and "
            f"{duplicates} duplicate edge(s)",
            stacklevel=2,
        )
    return Graph.from_edges(n, keys // n, keys % n)


def save_edge_list(g, path):
    """Write one 'u\\tv' line per undirected edge (u < v), plus a node count."""
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write(f"# nodes: {g.n}\n")
        row_of = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.offsets))
        keep = row_of < g.neighbors
        for a, b in zip(row_of[keep], g.neighbors[keep]):
            fh.write(f"{a}\t{b}\n")
