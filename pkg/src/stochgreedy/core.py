"""Ground set, counted objective oracle, selection context and solution types.

Every objective answers two kinds of queries, ``eval(A)`` and
``marginal(e, ctx)``. Each query increments the objective's
:class:`OracleCounter` by exactly one, regardless of how cheaply the
objective computes it. ``commit`` only maintains caches and is free.
"""
from __future__ import annotations

import os
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "InvalidInputError",
    "NumericDomainError",
    "GroundSet",
    "OracleCounter",
    "SelectionContext",
    "Solution",
    "Objective",
    "default_workers",
    "GAIN_RTOL",
]

#: relative tolerance for equality-of-gain checks
GAIN_RTOL = 1e-9

THREADS_ENV = "STOCHGREEDY_THREADS"


class InvalidInputError(ValueError):
    """Raised for out-of-range elements, duplicates and bad parameters."""


class NumericDomainError(ArithmeticError):
    """Raised when data violates a numeric precondition (e.g. a non-PSD kernel)."""


def default_workers() -> int:
    """Thread count for batch scoring, read from ``STOCHGREEDY_THREADS``."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        workers = int(raw)
    except ValueError:
        raise InvalidInputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, workers)


@dataclass(frozen=True)
class GroundSet:
    size: int
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.size < 0:
            raise InvalidInputError(f"ground set size must be >= 0, got {self.size}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != self.size:
                raise InvalidInputError(
                    f"{len(self.labels)} labels for a ground set of size {self.size}"
                )

    def __len__(self) -> int:
        return self.size

    def check(self, e: int) -> int:
        e = int(e)
        if not 0 <= e < self.size:
            raise InvalidInputError(f"element {e} outside ground set [0, {self.size})")
        return e

    def check_set(self, elements: Iterable[int]) -> list[int]:
        out = [self.check(e) for e in elements]
        if len(set(out)) != len(out):
            raise InvalidInputError(f"duplicate elements in {out}")
        return out


class OracleCounter:
    """Thread-safe count of objective queries."""

    def __init__(self):
        self._lock = threading.Lock()
        self._evaluations = 0

    @property
    def evaluations(self) -> int:
        return self._evaluations

    def increment(self, amount: int = 1) -> None:
        if amount < 0:
            raise ValueError("counter is monotone")
        with self._lock:
            self._evaluations += amount

    def __repr__(self):
        return f"OracleCounter(evaluations={self._evaluations})"


@dataclass
class SelectionContext:
    """Current set ``A`` plus the objective-specific cache that makes marginals cheap.

    ``value`` tracks f(A) as it is built up through commits.
    """

    objective: "Objective"
    state: Any
    selected: list[int] = field(default_factory=list)
    value: float = 0.0

    def __post_init__(self):
        self._members = set(self.selected)

    @property
    def counter(self) -> OracleCounter:
        return self.objective.counter

    def __contains__(self, e) -> bool:
        return int(e) in self._members

    def __len__(self) -> int:
        return len(self.selected)

    def _add(self, e: int, gain: float) -> None:
        self.selected.append(e)
        self._members.add(e)
        self.value += gain


@dataclass
class Solution:
    """Ordered picks with per-step utility and cumulative oracle cost.

    ``reporting_evals`` counts evaluations made only to fill in
    ``utility_trace``; they are not part of ``total_cost``.
    """

    selected: list[int]
    utility_trace: list[float]
    cost_trace: list[int]
    total_cost: int
    reporting_evals: int = 0
    warning: Optional[str] = None

    @property
    def final_utility(self) -> float:
        return self.utility_trace[-1] if self.utility_trace else 0.0

    @classmethod
    def empty(cls, warning: Optional[str] = None) -> "Solution":
        return cls([], [], [], 0, warning=warning)


class Objective(ABC):
    """Counted oracle for a monotone submodular set function.

    Subclasses implement :meth:`_initial_state`, :meth:`_gains` and
    :meth:`_commit`. ``eval`` replays commits from an empty state, so one
    code path produces every value the solvers see.

    ``_gains`` must compute each element's gain with the same floating-point
    operations whether it is asked for one element or many; the lazy and
    non-lazy solvers rely on that for identical argmax ties.
    """

    def __init__(self, ground: GroundSet, workers: Optional[int] = None):
        self.ground = ground
        self.counter = OracleCounter()
        self.workers = default_workers() if workers is None else max(1, int(workers))

    @property
    def n(self) -> int:
        return self.ground.size

    # -- subclass hooks -------------------------------------------------
    @abstractmethod
    def _initial_state(self) -> Any:
        """Cache for A = {} (f({}) is 0 for every shipped objective)."""

    @abstractmethod
    def _gains(self, state: Any, elements: np.ndarray) -> np.ndarray:
        """Marginal gains of ``elements`` given the cached state; read-only."""

    @abstractmethod
    def _commit(self, state: Any, e: int) -> float:
        """Add ``e`` to the cached state in place and return its gain."""

    # -- public oracle --------------------------------------------------
    def context(self) -> SelectionContext:
        return SelectionContext(self, self._initial_state())

    def eval(self, A: Iterable[int]) -> float:
        """f(A); costs one oracle call."""
        A = self.ground.check_set(A)
        self.counter.increment()
        return self._value(A)

    def value(self, A: Iterable[int]) -> float:
        """f(A) without touching the counter (reporting only)."""
        return self._value(self.ground.check_set(A))

    def _value(self, A: Sequence[int]) -> float:
        state = self._initial_state()
        total = 0.0
        for e in A:
            total += self._commit(state, e)
        return total

    def marginal(self, e: int, ctx: SelectionContext) -> float:
        """f(A + e) - f(A) for the context's A; costs one oracle call."""
        e = self.ground.check(e)
        if e in ctx:
            raise InvalidInputError(f"element {e} is already selected")
        self.counter.increment()
        return float(self._gains(ctx.state, np.array([e], dtype=np.intp))[0])

    def marginals(self, elements: Sequence[int], ctx: SelectionContext) -> np.ndarray:
        """Gains for several candidates; costs one oracle call per candidate.

        Scoring may be spread over ``self.workers`` threads; results come back
        in input order, so scheduling never affects the outcome.
        """
        elems = np.asarray(elements, dtype=np.intp)
        if elems.size == 0:
            return np.zeros(0)
        if elems.min() < 0 or elems.max() >= self.n:
            bad = elems[(elems < 0) | (elems >= self.n)][0]
            raise InvalidInputError(f"element {bad} outside ground set [0, {self.n})")
        if len(np.unique(elems)) != elems.size:
            raise InvalidInputError("duplicate candidates in batch")
        taken = [int(e) for e in elems if int(e) in ctx]
        if taken:
            raise InvalidInputError(f"element {taken[0]} is already selected")
        self.counter.increment(int(elems.size))
        if self.workers == 1 or elems.size < 2 * self.workers:
            return np.asarray(self._gains(ctx.state, elems), dtype=float)
        chunks = np.array_split(elems, self.workers)
        with ThreadPoolExecutor(self.workers) as pool:
            parts = list(pool.map(lambda c: self._gains(ctx.state, c), chunks))
        return np.concatenate(parts).astype(float, copy=False)

    def commit(self, e: int, ctx: SelectionContext) -> SelectionContext:
        """Add ``e`` to the context. Free: no oracle call is counted."""
        e = self.ground.check(e)
        if e in ctx:
            raise InvalidInputError(f"element {e} committed twice")
        gain = self._commit(ctx.state, e)
        ctx._add(e, gain)
        return ctx
