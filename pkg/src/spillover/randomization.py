"""Treatment assignment designs and cluster handling.

Both designs are driven by explicit seeds through the shared stream
derivation, so an assignment is a pure function of (inputs, seed) on every
platform. Following the estimator's own guidance, the default marginal
treatment probability used across the harness is p = 0.5.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .seeds import derive_rng

__all__ = [
    "Assignment",
    "Clustering",
    "bernoulli_assign",
    "cluster_assign",
    "load_clusters",
    "balanced_partition",
    "label_propagation",
]

DEFAULT_P = 0.5


@dataclass(frozen=True)
class Assignment:
    """Binary treatment vector plus its design probability."""

    z: np.ndarray
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"treatment probability must be in (0,1), got {self.p}")
        z = np.ascontiguousarray(self.z, dtype=np.int8)
        if z.ndim != 1 or not np.isin(z, (0, 1)).all():
            raise ValueError("z must be a 1-d 0/1 vector")
        object.__setattr__(self, "z", z)

    @property
    def n(self):
        return self.z.size

    def ip_weights(self):
        """Centered inverse-propensity weights z/p - (1-z)/(1-p)."""
        z = self.z.astype(np.float64)
        return z / self.p - (1.0 - z) / (1.0 - self.p)


@dataclass(frozen=True)
class Clustering:
    """Cluster label per node; labels are compact ids in [0, k)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-d vector")
        if labels.size == 0 or self.k < 1:
            raise ValueError("clustering must cover at least one node")
        if labels.min() < 0 or labels.max() >= self.k:
            raise ValueError("cluster labels out of range")
        if np.unique(labels).size != self.k:
            raise ValueError("every cluster must be non-empty")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.labels.size


def bernoulli_assign(n, p, seed):
    """Independent Bernoulli(p) coin per unit."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"treatment probability must be in (0,1), got {p}")
    rng = derive_rng(seed)
    z = (rng.random(n) < p).astype(np.int8)
    return Assignment(z=z, p=p)


def cluster_assign(clustering, p, seed):
    """One Bernoulli(p) coin per cluster, inherited by all members."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"treatment probability must be in (0,1), got {p}")
    rng = derive_rng(seed)
    coins = (rng.random(clustering.k) < p).astype(np.int8)
    return Assignment(z=coins[clustering.labels], p=p)


def load_clusters(path, n):
    """Read 'node_id \\t cluster_id' TSV covering every node exactly once.

    Input cluster ids may be arbitrary integers; they are compacted to
    0..k-1 in order of first appearance.
    """
    raw = np.full(n, -1, dtype=np.int64)
    with open(path, "rt", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'node_id<TAB>cluster_id'")
            try:
                node, cid = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field")
            if not 0 <= node < n:
                raise DataError(f"{path}:{lineno}: unknown node id {node} (n={n})")
            if raw[node] != -1:
                raise DataError(f"{path}:{lineno}: duplicate assignment for node {node}")
            raw[node] = cid
    missing = np.flatnonzero(raw == -1)
    if missing.size:
        raise DataError(f"{path}: node {int(missing[0])} has no cluster")
    _, labels = np.unique(raw, return_inverse=True)
    # re-rank by first appearance so labels are stable against input order
    order = {}
    compact = np.empty(n, dtype=np.int64)
    nxt = 0
    for i, c in enumerate(raw.tolist()):
        if c not in order:
            order[c] = nxt
            nxt += 1
        compact[i] = order[c]
    return Clustering(labels=compact, k=nxt)


def balanced_partition(n, k, seed):
    """Seeded random split into k near-equal clusters (demo plumbing)."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    rng = derive_rng(seed)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[perm] = np.arange(n, dtype=np.int64) % k
    return Clustering(labels=labels, k=k)


def label_propagation(g, seed, max_rounds=50):
    """Seeded label-propagation clustering, provided purely as a demo
    fallback when no externally computed clustering is available. It is a
    heuristic, not a published community-detection algorithm, and manifests
    record it as such.
    """
    rng = derive_rng(seed)
    n = g.n
    labels = np.arange(n, dtype=np.int64)
    order = np.arange(n)
    for _ in range(max_rounds):
        rng.shuffle(order)
        changed = 0
        for i in order:
            nbrs = g.neighbor_row(i)
            if nbrs.size == 0:
                continue
            counts = {}
            for lab in labels[nbrs]:
                counts[lab] = counts.get(lab, 0) + 1
            best = max(counts.values())
            candidates = sorted(lab for lab, c in counts.items() if c == best)
            pick = candidates[int(rng.integers(len(candidates)))]
            if pick != labels[i]:
                labels[i] = pick
                changed += 1
        if changed == 0:
            break
    _, compact = np.unique(labels, return_inverse=True)
    return Clustering(labels=compact.astype(np.int64), k=int(compact.max()) + 1)
