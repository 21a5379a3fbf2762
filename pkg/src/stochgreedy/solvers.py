"""Cardinality-constrained maximizers.

All solvers share the same conventions:

* cost is the number of oracle calls (``Objective.counter``) issued during
  the run; ``commit`` is free;
* ties between equal marginal gains go to the lowest element id;
* randomness comes from numpy's PCG64 seeded through ``SeedSequence`` with
  the run seed as entropy and ``(stream, iteration)`` as spawn key, so each
  iteration's draw depends only on the seed and the iteration index.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import InvalidInputError, Objective, SelectionContext, Solution

__all__ = [
    "SolverConfig",
    "LazyBound",
    "sample_size",
    "make_rng",
    "draw_sample",
    "stochastic_greedy",
    "stochastic_greedy_lazy",
    "naive_greedy",
    "lazy_greedy",
    "threshold_greedy",
    "sample_greedy",
    "random_selection",
    "ALGORITHMS",
    "RANDOMIZED",
    "USES_EPSILON",
    "USES_P",
]

# spawn-key streams
_SAMPLE_STREAM = 1
_SUBSAMPLE_STREAM = 2
_RANDOM_SELECTION_STREAM = 3


@dataclass(frozen=True)
class SolverConfig:
    k: int
    epsilon: float = 0.1
    p: float = 1.0
    seed: int = 0
    tie_break: str = "lowest-id"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise InvalidInputError(f"k must be a non-negative integer, got {self.k}")
        if not 0 < self.epsilon < 1:
            raise InvalidInputError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.p <= 1:
            raise InvalidInputError(f"p must lie in (0, 1], got {self.p}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.tie_break != "lowest-id":
            raise InvalidInputError(f"unsupported tie-break policy {self.tie_break!r}")


@dataclass
class LazyBound:
    """Upper bound ``rho`` on an element's marginal gain, fresh at iteration ``stamp``."""

    element: int
    rho: float = math.inf
    stamp: int = -1


def sample_size(n: int, k: int, epsilon: float) -> int:
    """Per-round sample size ``ceil((n / k) ln(1 / epsilon))`` clamped to [1, n]."""
    if n < 1 or not 1 <= k <= n:
        raise InvalidInputError(f"need n >= 1 and 1 <= k <= n, got n={n}, k={k}")
    if not 0 < epsilon < 1:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    s = math.ceil(n / k * math.log(1.0 / epsilon))
    return min(max(s, 1), n)


def make_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream, index)))
    )


class _Pool:
    """Unselected elements, supporting an O(s) partial Fisher-Yates draw."""

    def __init__(self, elements: Sequence[int]):
        self.items = [int(e) for e in elements]
        self.pos = {e: i for i, e in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def draw(self, s: int, rng: np.random.Generator) -> list[int]:
        items, pos = self.items, self.pos
        m = len(items)
        s = min(s, m)
        # j_t uniform in [t, m): the first s slots become a uniform s-subset
        picks = rng.integers(np.arange(s), m) if s else []
        for t, j in enumerate(picks):
            j = int(j)
            if j != t:
                items[t], items[j] = items[j], items[t]
                pos[items[t]] = t
                pos[items[j]] = j
        return sorted(items[:s])

    def remove(self, e: int):
        i = self.pos.pop(e)
        last = self.items.pop()
        if last != e:
            self.items[i] = last
            self.pos[last] = i


def draw_sample(pool_elements: Sequence[int], s: int, seed: int, iteration: int) -> list[int]:
    """The sample a fresh pool would produce at ``iteration``; mostly for tests."""
    return _Pool(pool_elements).draw(s, make_rng(seed, _SAMPLE_STREAM, iteration))


class _Run:
    """Cost and utility bookkeeping shared by the solvers."""

    def __init__(self, obj: Objective):
        self.obj = obj
        self.ctx = obj.context()
        self.start = obj.counter.evaluations
        self.utility: list[float] = []
        self.cost: list[int] = []

    @property
    def spent(self) -> int:
        return self.obj.counter.evaluations - self.start

    def pick(self, e: int):
        self.obj.commit(e, self.ctx)
        self.utility.append(self.ctx.value)
        self.cost.append(self.spent)

    def solution(self, warning: Optional[str] = None) -> Solution:
        return Solution(list(self.ctx.selected), self.utility, self.cost, self.spent,
                        warning=warning)


def _argmax_lowest(candidates: Sequence[int], gains: np.ndarray) -> int:
    best = gains.max()
    return min(e for e, g in zip(candidates, gains) if g == best)


def _check_k(obj: Objective, cfg: SolverConfig):
    if cfg.k > obj.n:
        raise InvalidInputError(f"k={cfg.k} exceeds ground set size {obj.n}")


def stochastic_greedy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Each round scores a uniform sample of s unselected elements and keeps the best."""
    _check_k(obj, cfg)
    run = _Run(obj)
    if cfg.k == 0:
        return run.solution()
    s = sample_size(obj.n, cfg.k, cfg.epsilon)
    pool = _Pool(range(obj.n))
    for i in range(cfg.k):
        R = pool.draw(s, make_rng(cfg.seed, _SAMPLE_STREAM, i))
        e = _argmax_lowest(R, obj.marginals(R, run.ctx))
        pool.remove(e)
        run.pick(e)
    return run.solution()


class _LazyBounds:
    """Global upper bounds rho(e), initially +inf, that persist across rounds."""

    def __init__(self, n: int):
        self.rho = np.full(n, math.inf)
        self.stamp = np.full(n, -1, dtype=np.int64)

    def bound(self, e: int) -> LazyBound:
        return LazyBound(e, float(self.rho[e]), int(self.stamp[e]))

    def heap(self, members: Sequence[int]) -> list:
        heap = [(-self.rho[e], e) for e in members]
        heapq.heapify(heap)
        return heap

    def pop_best(self, obj: Objective, ctx: SelectionContext, heap: list, it: int) -> int:
        """Pop the member with the largest true gain (ties to the lowest id).

        Heap entries are (-rho, id); a top whose bound was refreshed in round
        ``it`` dominates every other bound, and bounds never underestimate.
        """
        rho, stamp = self.rho, self.stamp
        while True:
            neg, e = heap[0]
            if stamp[e] == it:
                heapq.heappop(heap)
                return e
            if neg == -math.inf:
                # every never-scored member must be scored before anything can win
                fresh = [x for _, x in heap if rho[x] == math.inf]
                rho[fresh] = obj.marginals(fresh, ctx)
                stamp[fresh] = it
                heap[:] = [(-rho[x], x) for _, x in heap]
                heapq.heapify(heap)
                continue
            rho[e] = obj.marginal(e, ctx)
            stamp[e] = it
            heapq.heapreplace(heap, (-rho[e], e))


def stochastic_greedy_lazy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Stochastic greedy whose per-sample argmax is found lazily.

    Draws exactly the samples :func:`stochastic_greedy` draws for the same
    seed, so it selects the same elements; it only skips gains that a stale
    upper bound already rules out.
    """
    _check_k(obj, cfg)
    run = _Run(obj)
    if cfg.k == 0:
        return run.solution()
    s = sample_size(obj.n, cfg.k, cfg.epsilon)
    pool = _Pool(range(obj.n))
    bounds = _LazyBounds(obj.n)
    for i in range(cfg.k):
        R = pool.draw(s, make_rng(cfg.seed, _SAMPLE_STREAM, i))
        e = bounds.pop_best(obj, run.ctx, bounds.heap(R), i)
        pool.remove(e)
        run.pick(e)
    return run.solution()


def naive_greedy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Classic greedy: score every unselected element each round."""
    _check_k(obj, cfg)
    run = _Run(obj)
    remaining = list(range(obj.n))
    for _ in range(cfg.k):
        e = _argmax_lowest(remaining, obj.marginals(remaining, run.ctx))
        remaining.remove(e)
        run.pick(e)
    return run.solution()


def _lazy_greedy_over(obj: Objective, k: int, candidates: Sequence[int],
                      warning: Optional[str] = None) -> Solution:
    run = _Run(obj)
    bounds = _LazyBounds(obj.n)
    heap = bounds.heap(sorted(int(e) for e in candidates))
    for i in range(min(k, len(heap))):
        run.pick(bounds.pop_best(obj, run.ctx, heap, i))
    return run.solution(warning)


def lazy_greedy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Greedy with stale upper bounds; same picks as :func:`naive_greedy`."""
    _check_k(obj, cfg)
    return _lazy_greedy_over(obj, cfg.k, range(obj.n))


def threshold_greedy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Descending-threshold greedy with lazy bound skipping.

    d = max singleton value; thresholds d, d(1-eps), d(1-eps)^2, ... down to
    eps d / n, with a final pass at eps d / n itself. At each threshold the
    unselected elements are scanned in id order and any element whose gain
    reaches the threshold is taken. An element whose last computed gain is
    already below the threshold is skipped without a query. May return fewer
    than k elements.
    """
    _check_k(obj, cfg)
    run = _Run(obj)
    if cfg.k == 0 or obj.n == 0:
        return run.solution()
    eps = cfg.epsilon
    rho = obj.marginals(range(obj.n), run.ctx)
    fresh_at = np.zeros(obj.n, dtype=np.int64)  # |A| when rho was computed
    d = float(rho.max())
    if d <= 0:
        return run.solution()
    floor = eps / obj.n * d
    log_step = math.log1p(-eps)

    def threshold(level: int) -> float:
        return d * math.exp(level * log_step)

    level = 0
    w = d
    chosen = np.zeros(obj.n, dtype=bool)
    while w >= floor and len(run.ctx) < cfg.k:
        # only these can reach w: bounds never underestimate
        for e in np.flatnonzero(~chosen & (rho >= w)):
            e = int(e)
            if rho[e] < w:
                continue
            if fresh_at[e] != len(run.ctx):
                rho[e] = obj.marginal(e, run.ctx)
                fresh_at[e] = len(run.ctx)
            if rho[e] >= w:
                chosen[e] = True
                run.pick(e)
                if len(run.ctx) == cfg.k:
                    break
        top = rho[~chosen].max(initial=-math.inf)
        if top <= 0:
            break
        # thresholds above every remaining bound would scan nothing: skip them
        level += 1
        if top < threshold(level):
            level = max(level, math.ceil(math.log(top / d) / log_step))
            while threshold(level) > top:
                level += 1
        prev, w = w, threshold(level)
        if w < floor < prev:
            w = floor  # one last pass exactly at the floor
    return run.solution()


def sample_greedy(obj: Objective, cfg: SolverConfig) -> Solution:
    """Lazy greedy on an independent Bernoulli(p) subsample of the ground set."""
    if cfg.k < 0:
        raise InvalidInputError("k must be >= 0")
    rng = make_rng(cfg.seed, _SUBSAMPLE_STREAM)
    # one uniform per element, so subsamples are nested as p grows
    keep = np.flatnonzero(rng.random(obj.n) < cfg.p)
    if keep.size == 0:
        return _Run(obj).solution(warning="empty subsample")
    warning = None
    if keep.size < cfg.k:
        warning = f"subsample of {keep.size} elements is smaller than k={cfg.k}"
    return _lazy_greedy_over(obj, cfg.k, keep, warning)


def random_selection(obj: Objective, cfg: SolverConfig) -> Solution:
    """k uniform elements; the single counted query is f on the final set.

    Prefix utilities are filled in with uncounted reporting evaluations.
    """
    _check_k(obj, cfg)
    if cfg.k == 0:
        return Solution.empty()
    rng = make_rng(cfg.seed, _RANDOM_SELECTION_STREAM)
    selected = [int(e) for e in rng.choice(obj.n, size=cfg.k, replace=False)]
    start = obj.counter.evaluations
    final = obj.eval(selected)
    cost = obj.counter.evaluations - start
    # prefix utilities from one uncounted replay; reported as k - 1 evaluations
    ctx = obj.context()
    trace = []
    for e in selected[:-1]:
        obj.commit(e, ctx)
        trace.append(ctx.value)
    trace.append(final)
    return Solution(selected, trace, [0] * (cfg.k - 1) + [cost], cost,
                    reporting_evals=cfg.k - 1)


ALGORITHMS: dict[str, Callable[[Objective, SolverConfig], Solution]] = {
    "stochastic_greedy": stochastic_greedy,
    "stochastic_greedy_lazy": stochastic_greedy_lazy,
    "naive_greedy": naive_greedy,
    "lazy_greedy": lazy_greedy,
    "threshold_greedy": threshold_greedy,
    "sample_greedy": sample_greedy,
    "random_selection": random_selection,
}
RANDOMIZED = frozenset({"stochastic_greedy", "stochastic_greedy_lazy", "sample_greedy",
                        "random_selection"})
USES_EPSILON = frozenset({"stochastic_greedy", "stochastic_greedy_lazy", "threshold_greedy"})
USES_P = frozenset({"sample_greedy"})
