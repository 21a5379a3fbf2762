"""Independent verification oracles.

Nothing here is used by the solvers. ``definitional_recompute`` evaluates each
objective straight from its closed form on the raw data, with no incremental
caches, so it can check the objectives' fast paths.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import singledispatch
from typing import Iterable, Optional

import numpy as np

from .core import InvalidInputError, Objective
from .objectives import (
    FacilityLocationObjective,
    LogDetObjective,
    PenaltyReductionObjective,
    WeightedCoverage,
)
from .solvers import sample_size

__all__ = [
    "BruteForceResult",
    "brute_force_opt",
    "definitional_recompute",
    "hit_probability_probe",
    "hit_probability_bound",
    "three_se",
    "sample_triples",
    "check_submodular",
]

ENUMERATION_GUARD = 10**7


@dataclass(frozen=True)
class BruteForceResult:
    opt_set: tuple[int, ...]
    opt_value: float
    enumerated: int


def brute_force_opt(obj: Objective, k: int, at_most: bool = False,
                    guard: int = ENUMERATION_GUARD) -> BruteForceResult:
    """Exact maximum of f over subsets of size k (or size <= k with ``at_most``).

    Subsets are enumerated lexicographically; among equal values the first
    one found wins. Values come from uncounted ``Objective.value`` calls.
    """
    n = obj.n
    if not 0 <= k <= n:
        raise InvalidInputError(f"need 0 <= k <= n, got k={k}, n={n}")
    sizes = range(k + 1) if at_most else [k]
    total = sum(math.comb(n, r) for r in sizes)
    if total > guard:
        raise InvalidInputError(
            f"refusing to enumerate C({n}, {k}) = {math.comb(n, k)} subsets (guard {guard})"
        )
    best_set: tuple[int, ...] = ()
    best = -math.inf
    count = 0
    for r in sizes:
        for S in itertools.combinations(range(n), r):
            count += 1
            v = obj.value(S)
            if v > best:
                best, best_set = v, S
    return BruteForceResult(best_set, float(best), count)


@singledispatch
def definitional_recompute(obj, A: Iterable[int]) -> float:
    """f(A) straight from the objective's formula, ignoring its caches."""
    raise TypeError(f"no definitional oracle for {type(obj).__name__}")


@definitional_recompute.register
def _(obj: WeightedCoverage, A):
    covered = set()
    for e in A:
        covered |= {int(x) for x in obj.covers[e]}
    return float(sum(obj.weights[i] for i in sorted(covered)))


@definitional_recompute.register
def _(obj: LogDetObjective, A):
    A = list(A)
    if not A:
        return 0.0
    K = obj.kernel.submatrix(A)
    M = np.eye(len(A)) + K / obj.sigma**2
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise ArithmeticError("I + K_AA / sigma^2 is not positive definite")
    return 0.5 * float(logdet)


@definitional_recompute.register
def _(obj: FacilityLocationObjective, A):
    A = list(A)
    n = obj.n
    baseline = 0.0
    loss = 0.0
    for v in range(n):
        best = float(obj.auxiliary[v])
        baseline += best
        for a in A:
            d = float(obj.distances.pair(v, a))
            if d < best:
                best = d
        loss += best
    return baseline / n - loss / n


@definitional_recompute.register
def _(obj: PenaltyReductionObjective, A):
    A = list(A)
    T = obj.table.detection_times
    total = 0.0
    for i in range(obj.table.num_scenarios):
        pen = obj.penalties[i]
        t = min((float(T[s, i]) for s in A), default=math.inf)
        pi_t = pen.at_infinity if math.isinf(t) else float(pen(np.array([t]))[0])
        total += obj.table.probabilities[i] * (pen.at_infinity - pi_t)
    return float(total)


def hit_probability_probe(n: int, k: int, epsilon: float, m: int, trials: int,
                          seed: int = 0, chunk: int = 10_000) -> float:
    """Fraction of uniform s-subsets of an n-set that hit m marked elements.

    ``s = sample_size(n, k, epsilon)``; subsets are drawn without replacement
    by keeping the s smallest of n uniform keys.
    """
    if not 0 <= m <= k <= n:
        raise InvalidInputError(f"need 0 <= m <= k <= n, got m={m}, k={k}, n={n}")
    if trials < 10_000:
        raise InvalidInputError(f"need at least 10^4 trials, got {trials}")
    s = sample_size(n, k, epsilon)
    if m == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        keys = rng.random((b, n))
        if s < n:
            R = np.argpartition(keys, s - 1, axis=1)[:, :s]
        else:
            R = np.broadcast_to(np.arange(n), (b, n))
        hits += int((R < m).any(axis=1).sum())
        done += b
    return hits / trials


def hit_probability_bound(k: int, epsilon: float, m: int) -> float:
    """Lower bound (1 - epsilon) m / k on the hit probability."""
    return (1.0 - epsilon) * m / k


def three_se(q: float, trials: int) -> float:
    return 3.0 * math.sqrt(q * (1.0 - q) / trials)


def sample_triples(n: int, count: int, rng: np.random.Generator,
                   max_size: Optional[int] = None):
    """Random (A, B, e) with A a subset of B and e outside B."""
    max_size = n - 1 if max_size is None else min(max_size, n - 1)
    for _ in range(count):
        perm = [int(x) for x in rng.permutation(n)]
        b = int(rng.integers(0, max_size + 1))
        a = int(rng.integers(0, b + 1))
        B = perm[:b]
        yield perm[:a], B, perm[b]


def check_submodular(obj: Objective, triples: int = 1000, seed: int = 0,
                     tol: float = 1e-9, max_size: Optional[int] = None) -> list[str]:
    """Sampled monotonicity/submodularity/non-negativity check.

    Gains go through ``Objective.marginal`` on contexts built by commits;
    returns a list of violations.
    """
    rng = np.random.default_rng(seed)
    problems = []
    for A, B, e in sample_triples(obj.n, triples, rng, max_size):
        ctx_a, ctx_b = obj.context(), obj.context()
        for x in A:
            obj.commit(x, ctx_a)
        for x in B:
            obj.commit(x, ctx_b)
        fA, fB = ctx_a.value, ctx_b.value
        gA = obj.marginal(e, ctx_a)
        gB = obj.marginal(e, ctx_b)
        if fA < -tol or fB < -tol:
            problems.append(f"negative value on A={A} or B={B}")
        if fA > fB + tol * max(1.0, abs(fB)):
            problems.append(f"not monotone: f({A})={fA} > f({B})={fB}")
        if gA < gB - tol * max(1.0, abs(gB)):
            problems.append(f"not submodular at e={e}: {gA} < {gB}")
    return problems
