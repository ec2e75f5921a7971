"""Design-based total treatment effect estimation on surrogate networks.

Estimate treatment effects under network spillover with the
inverse-propensity neighborhood estimator, quantify uncertainty with a
dependency-aware variance estimator, and test for interference by
contrasting against difference-in-means.
"""

__version__ = "0.1.0"

from .errors import DataError, NumericalError, SpilloverError, UsageError
from .graph import (
    DegreeStats,
    Graph,
    closed_neighborhood,
    erdos_renyi,
    intersection_nonempty,
    load_edge_list,
    ring_lattice,
    save_edge_list,
    two_hop_pairs,
)
from .randomization import (
    Assignment,
    Clustering,
    bernoulli_assign,
    cluster_assign,
    load_clusters,
)
from .outcomes import (
    ExposureModel,
    LinearModel,
    WeightMatrix,
    effective_weights,
    generate_instance,
    ground_truth_tte,
    realize,
    solve_exposure,
    surrogate_gap,
)
from .estimators import (
    UnitStatistics,
    difference_in_means,
    interference_contrast,
    pseudo_inverse,
    unit_statistics,
)
from .inference import (
    EstimateReport,
    chebyshev_test,
    neyman_variance,
    normal_test,
    sutva_test,
    variance_estimate,
)
from .experiments import ExperimentConfig, analyze
