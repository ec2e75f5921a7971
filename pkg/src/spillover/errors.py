"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class SpilloverError(Exception):
    pass


class UsageError(SpilloverError):
    """Bad arguments, invalid configuration keys, infeasible parameters."""


class DataError(SpilloverError):
    """Malformed input files: edge lists, cluster maps, metric tables."""


class NumericalError(SpilloverError):
    """Solver non-convergence, non-finite outcomes, cost caps exceeded."""
