"""The four shipped objectives: weighted coverage, log-det information gain,
facility location and sensor penalty reduction.

Each keeps an incremental cache so that a marginal query never recomputes
f from scratch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import GroundSet, InvalidInputError, NumericDomainError, Objective
from .dataio import DistanceSource, KernelMatrix, ScenarioTable

__all__ = [
    "WeightedCoverage",
    "LogDetObjective",
    "FacilityLocationObjective",
    "PenaltyReductionObjective",
    "CappedLinearPenalty",
    "StepPenalty",
    "penalty_from_spec",
    "PSD_TOL",
]

#: Schur complements in [-PSD_TOL, 0] are rounding noise and clamp to zero
PSD_TOL = 1e-10


class WeightedCoverage(Objective):
    """f(A) = total weight of the universe items covered by A."""

    def __init__(
        self,
        covers: Sequence[Sequence[int]],
        weights: Optional[Sequence[float]] = None,
        universe_size: Optional[int] = None,
        labels=None,
        workers=None,
    ):
        covers = [np.unique(np.asarray(list(c), dtype=np.intp)) for c in covers]
        if universe_size is None:
            universe_size = 1 + max((int(c.max()) for c in covers if c.size), default=-1)
        for e, c in enumerate(covers):
            if c.size and (c[0] < 0 or c[-1] >= universe_size):
                raise InvalidInputError(
                    f"element {e} covers an item outside universe [0, {universe_size})"
                )
        w = np.ones(universe_size) if weights is None else np.array(weights, dtype=float)
        if w.shape != (universe_size,):
            raise InvalidInputError(f"need {universe_size} weights, got {w.shape}")
        if not np.isfinite(w).all() or (w < 0).any():
            raise InvalidInputError("coverage weights must be finite and non-negative")
        super().__init__(GroundSet(len(covers), labels), workers)
        self.covers = covers
        self.weights = w
        self.universe_size = universe_size

    def _initial_state(self):
        return np.zeros(self.universe_size, dtype=bool)

    def _gain(self, covered, e) -> float:
        items = self.covers[e]
        return float(self.weights[items[~covered[items]]].sum())

    def _gains(self, covered, elements):
        return np.array([self._gain(covered, int(e)) for e in elements])

    def _commit(self, covered, e):
        gain = self._gain(covered, e)
        covered[self.covers[e]] = True
        return gain


class _LogDetState:
    """Cholesky factor of I + K_AA / sigma^2 plus the forward-solved columns
    of every element against it."""

    def __init__(self, n: int, diag_scaled: np.ndarray):
        self.L = np.zeros((0, 0))
        self.proj = np.zeros((0, n))  # L^{-1} M_{A, .}
        # noise-scaled posterior variance of every element: sigma^-2 * schur(e | A)
        self.resid = diag_scaled.copy()


class LogDetObjective(Objective):
    """Information gain f(A) = 1/2 log det(I + sigma^-2 K_AA).

    The Cholesky factor of ``I + sigma^-2 K_AA`` grows by one row per commit.
    The same commit forward-solves every element's kernel column against the
    new row, so each element's Schur complement is available in O(1) and a
    marginal is ``1/2 log(1 + sigma^-2 schur(e | A))``.
    """

    def __init__(self, kernel: Union[KernelMatrix, np.ndarray], sigma: float = 1.0, labels=None,
                 workers=None):
        if not isinstance(kernel, KernelMatrix):
            kernel = KernelMatrix(matrix=kernel)
        if not (sigma > 0 and math.isfinite(sigma)):
            raise InvalidInputError(f"sigma must be > 0, got {sigma}")
        super().__init__(GroundSet(kernel.n, labels), workers)
        self.kernel = kernel
        self.sigma = float(sigma)
        self._inv_var = 1.0 / (self.sigma * self.sigma)

    def _initial_state(self):
        return _LogDetState(self.n, self.kernel.diagonal() * self._inv_var)

    def _check_psd(self, resid: np.ndarray, elements: np.ndarray) -> np.ndarray:
        schur = resid * (self.sigma * self.sigma)
        bad = schur < -PSD_TOL
        if bad.any():
            e = int(np.asarray(elements)[bad][0])
            raise NumericDomainError(
                f"kernel is not PSD: Schur complement of element {e} is {schur[bad][0]:.3e}"
            )
        return np.maximum(resid, 0.0)

    def _gains(self, state, elements):
        return 0.5 * np.log1p(self._check_psd(state.resid[elements], elements))

    def _commit(self, state, e):
        c = self._check_psd(state.resid[[e]], [e])[0]
        gain = 0.5 * math.log1p(c)
        pivot = math.sqrt(1.0 + c)
        col = self.kernel.row(e) * self._inv_var  # M_{e, .} off the diagonal
        prev = state.proj[:, e]
        new_row = (col - prev @ state.proj) / pivot
        new_row[e] = pivot
        m = state.L.shape[0]
        L = np.zeros((m + 1, m + 1))
        L[:m, :m] = state.L
        L[m, :m] = prev
        L[m, m] = pivot
        state.L = L
        state.proj = np.vstack([state.proj, new_row])
        state.resid = state.resid - new_row * new_row
        state.resid[e] = 0.0
        return gain


class FacilityLocationObjective(Objective):
    """Exemplar clustering f(A) = L({e0}) - L(A + {e0}).

    ``L(S) = mean over v of min_{u in S} d(v, u)``. ``auxiliary`` holds
    d(v, e0) for every v; by default e0 is the origin of the vector space.
    """

    def __init__(
        self,
        distances: DistanceSource,
        auxiliary: Optional[np.ndarray] = None,
        labels=None,
        workers=None,
    ):
        if auxiliary is None:
            auxiliary = distances.to_point()
        aux = np.array(auxiliary, dtype=float)
        if aux.shape != (distances.n,):
            raise InvalidInputError(f"need {distances.n} auxiliary distances, got {aux.shape}")
        if np.isnan(aux).any() or (aux < 0).any():
            raise InvalidInputError("auxiliary distances must be non-negative")
        super().__init__(GroundSet(distances.n, labels), workers)
        self.distances = distances
        self.auxiliary = aux
        aux.setflags(write=False)

    @property
    def baseline_loss(self) -> float:
        """L({e0}), the upper bound on f."""
        return float(self.auxiliary.mean())

    def _initial_state(self):
        return self.auxiliary.copy()

    def _gains(self, mincache, elements):
        d = self.distances.rows(elements)
        if (d < 0).any():
            raise InvalidInputError("negative distance in source")
        return np.maximum(mincache[None, :] - d, 0.0).sum(axis=1) / self.n

    def _commit(self, mincache, e):
        d = self.distances.rows([e])
        gain = float(np.maximum(mincache[None, :] - d, 0.0).sum(axis=1)[0] / self.n)
        np.minimum(mincache, d[0], out=mincache)
        return gain


@dataclass(frozen=True)
class CappedLinearPenalty:
    """pi(t) = min(t, t_max); an undetected scenario costs t_max."""

    t_max: float

    @property
    def at_infinity(self) -> float:
        return float(self.t_max)

    def __call__(self, t):
        return np.minimum(t, self.t_max)


@dataclass(frozen=True)
class StepPenalty:
    """pi(t) = 0 if t <= tau else z."""

    tau: float
    z: float

    @property
    def at_infinity(self) -> float:
        return float(self.z)

    def __call__(self, t):
        return np.where(np.asarray(t) <= self.tau, 0.0, self.z)


def penalty_from_spec(spec: dict):
    model = spec.get("model")
    if model == "capped_linear":
        return CappedLinearPenalty(float(spec["t_max"]))
    if model == "step":
        return StepPenalty(float(spec["tau"]), float(spec["z"]))
    raise InvalidInputError(f"unknown penalty model {model!r}")


class PenaltyReductionObjective(Objective):
    """Expected penalty reduction R(A) = sum_i P(i) (pi_i(inf) - pi_i(T(A, i))).

    ``penalty`` is a single model shared by all scenarios or one per scenario;
    a model must expose ``at_infinity`` and be vectorized over times. Later
    detection must never cost less, otherwise R is not monotone.
    """

    def __init__(self, table: ScenarioTable, penalty=None, labels=None, workers=None):
        super().__init__(GroundSet(table.num_sensors, labels), workers)
        self.table = table
        if penalty is None:
            penalty = penalty_from_spec(table.penalty_spec)
        self.penalties = (
            list(penalty) if isinstance(penalty, (list, tuple)) else [penalty] * table.num_scenarios
        )
        if len(self.penalties) != table.num_scenarios:
            raise InvalidInputError(
                f"{len(self.penalties)} penalty models for {table.num_scenarios} scenarios"
            )
        self._shared = all(p is self.penalties[0] for p in self.penalties)
        self._pi_inf = np.array([p.at_infinity for p in self.penalties], dtype=float)
        if not np.isfinite(self._pi_inf).all():
            raise InvalidInputError("pi(inf) must be finite")
        self._validate_penalties()

    def _validate_penalties(self):
        T = self.table.detection_times
        for i, pen in enumerate(self.penalties if not self._shared else self.penalties[:1]):
            col = T if self._shared else T[:, i]
            grid = np.unique(np.concatenate([[0.0], col[np.isfinite(col)].ravel()]))
            vals = np.append(np.asarray(pen(grid), dtype=float), pen.at_infinity)
            if (np.diff(vals) < 0).any():
                raise InvalidInputError(
                    f"penalty for scenario {i} decreases with detection time; "
                    "the penalty reduction would not be monotone"
                )

    def _pi(self, times: np.ndarray) -> np.ndarray:
        # times: (..., num_scenarios); inf maps to pi(inf)
        if self._shared:
            out = np.asarray(self.penalties[0](times), dtype=float)
        else:
            out = np.stack(
                [np.asarray(p(times[..., i]), dtype=float) for i, p in enumerate(self.penalties)],
                axis=-1,
            )
        return np.where(np.isinf(times), self._pi_inf, out)

    @property
    def best_possible(self) -> float:
        """R(V): every scenario detected as early as any sensor can."""
        best = self.table.detection_times.min(axis=0)
        return float(((self._pi_inf - self._pi(best)) * self.table.probabilities).sum())

    def _initial_state(self):
        return np.full(self.table.num_scenarios, np.inf)

    def _gains(self, tcache, elements):
        T = self.table.detection_times[elements]
        before = self._pi(tcache)[None, :]
        after = self._pi(np.minimum(tcache[None, :], T))
        return ((before - after) * self.table.probabilities).sum(axis=1)

    def _commit(self, tcache, e):
        gain = float(self._gains(tcache, np.array([e]))[0])
        np.minimum(tcache, self.table.detection_times[e], out=tcache)
        return gain
