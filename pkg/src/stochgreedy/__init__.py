"""Fast monotone submodular maximization under a cardinality constraint."""
from .core import (
    GroundSet,
    InvalidInputError,
    NumericDomainError,
    Objective,
    OracleCounter,
    SelectionContext,
    Solution,
)
from .objectives import (
    FacilityLocationObjective,
    LogDetObjective,
    PenaltyReductionObjective,
    WeightedCoverage,
)
from .solvers import (
    ALGORITHMS,
    SolverConfig,
    lazy_greedy,
    naive_greedy,
    random_selection,
    sample_greedy,
    sample_size,
    stochastic_greedy,
    stochastic_greedy_lazy,
    threshold_greedy,
)

__version__ = "0.1.0"
