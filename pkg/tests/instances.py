"""Small random instances shared by the test modules."""
import numpy as np

from stochgreedy.core import Objective
from stochgreedy.dataio import DistanceSource, ScenarioTable, random_coverage
from stochgreedy.objectives import (
    CappedLinearPenalty,
    FacilityLocationObjective,
    LogDetObjective,
    PenaltyReductionObjective,
    StepPenalty,
    WeightedCoverage,
)

# universe {a, b, c, d} = {0, 1, 2, 3}
EXAMPLE_C_COVERS = [[0, 1], [1, 2], [2], [3]]


def example_c():
    return WeightedCoverage(EXAMPLE_C_COVERS, universe_size=4)


def modular(weights):
    return WeightedCoverage([[i] for i in range(len(weights))], weights, len(weights))


def coverage(seed, n=12, universe=20, density=0.25):
    covers, weights = random_coverage(n, universe, seed=seed, density=density)
    return WeightedCoverage(covers, weights, universe)


def psd_kernel(n, seed, rank=None):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, rank or n))
    K = B @ B.T / (rank or n)
    return (K + K.T) / 2


def logdet(seed, n=8, sigma=None):
    rng = np.random.default_rng(seed + 10_000)
    return LogDetObjective(psd_kernel(n, seed), sigma or float(rng.uniform(0.5, 2.0)))


def facility(seed, n=30, dim=3):
    X = np.random.default_rng(seed).standard_normal((n, dim))
    return FacilityLocationObjective(DistanceSource(vectors=X))


def penalty(seed, sensors=10, scenarios=20, step=False):
    rng = np.random.default_rng(seed)
    T = rng.uniform(0, 10, size=(sensors, scenarios))
    T[rng.random(T.shape) < 0.3] = np.inf
    table = ScenarioTable(T, rng.random(scenarios) + 0.1)
    pen = StepPenalty(tau=4.0, z=3.0) if step else CappedLinearPenalty(8.0)
    return PenaltyReductionObjective(table, pen)


OBJECTIVE_FACTORIES = {
    "coverage": coverage,
    "logdet": logdet,
    "facility": facility,
    "penalty": penalty,
}


class CountingObjective(Objective):
    """Wraps another objective and tallies every gain/eval it actually computes."""

    def __init__(self, inner: Objective):
        super().__init__(inner.ground, workers=1)
        self.inner = inner
        self.calls = 0

    def _initial_state(self):
        return self.inner._initial_state()

    def _gains(self, state, elements):
        self.calls += len(elements)
        return self.inner._gains(state, elements)

    def _commit(self, state, e):
        return self.inner._commit(state, e)

    def eval(self, A):
        self.calls += 1
        return super().eval(A)
