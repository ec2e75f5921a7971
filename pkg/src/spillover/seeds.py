"""Deterministic random stream derivation.

Every stochastic routine in the package draws from a PCG64 generator keyed
by an explicit integer tuple through numpy's SeedSequence. Streams derived
from (master_seed, *path) are independent of each other and of the order in
which replications execute, so parallel experiment runs are bit-reproducible.
"""

import numpy as np

__all__ = ["derive_rng", "derive_seed"]


def derive_rng(master_seed, *path):
    """Return a Generator for the stream keyed by (master_seed, *path).

    path entries are small non-negative integers naming the consumer, e.g.
    (arm_index, replication_index). The same key always yields the same
    stream on every platform.
    """
    key = (int(master_seed),) + tuple(int(x) for x in path)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def derive_seed(master_seed, *path):
    """64-bit integer fingerprint of the stream key, for manifests and logs."""
    key = (int(master_seed),) + tuple(int(x) for x in path)
    state = np.random.SeedSequence(key).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
