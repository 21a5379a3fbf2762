"""Benchmark sweeps: run solvers over (k, epsilon, p, seed) grids and write CSV.

Records CSV
-----------
One header row, then one row per run, then ``mean`` and ``std`` rows per
cell. Columns, in order::

    row, algorithm, dataset, n, k, epsilon, p, seed,
    final_utility, total_cost, reporting_evals, wall_time_ms, warning

``row`` is ``run``, ``mean`` or ``std``. Empty cells mean "not applicable"
(``epsilon`` for algorithms without one, ``seed`` on summary rows). For
``sample_greedy`` rows produced by ``match_p``, ``epsilon`` names the
stochastic-greedy setting the ``p`` was matched against. Floats
are written with ``repr`` so they round-trip exactly; ``std`` is the sample
standard deviation over seeds (0 for a single seed).

Curve CSV
---------
``algorithm, epsilon, p, k, x, utility_mean, utility_std, cost_mean,
cost_std, runs`` with one row per (algorithm, epsilon, p, k) cell, sorted by
algorithm, epsilon, p and then x.
"""
from __future__ import annotations

import csv
import math
import os
import statistics
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dataio
from .core import InvalidInputError, Objective
from .objectives import (
    FacilityLocationObjective,
    LogDetObjective,
    PenaltyReductionObjective,
    WeightedCoverage,
    penalty_from_spec,
)
from .solvers import ALGORITHMS, USES_EPSILON, USES_P, SolverConfig, sample_size

__all__ = [
    "RECORD_FIELDS",
    "CURVE_FIELDS",
    "RunRecord",
    "SweepSpec",
    "build_objective",
    "run_one",
    "run_sweep",
    "write_records",
    "read_records",
    "summarize",
    "match_p_to_cost",
    "emit_curve",
    "stochastic_cost_bound",
]

RECORD_FIELDS = [
    "row", "algorithm", "dataset", "n", "k", "epsilon", "p", "seed",
    "final_utility", "total_cost", "reporting_evals", "wall_time_ms", "warning",
]
CURVE_FIELDS = [
    "algorithm", "epsilon", "p", "k", "x", "utility_mean", "utility_std",
    "cost_mean", "cost_std", "runs",
]


@dataclass
class RunRecord:
    algorithm: str
    dataset: str
    n: int
    k: int
    epsilon: Optional[float]
    p: Optional[float]
    seed: Optional[int]
    final_utility: float
    total_cost: float
    reporting_evals: float
    wall_time_ms: float
    warning: Optional[str] = None
    row: str = "run"

    @property
    def cell(self) -> tuple:
        return (self.algorithm, self.dataset, self.n, self.k, self.epsilon, self.p)


@dataclass
class SweepSpec:
    dataset: dict
    objective: dict
    algorithms: list[str]
    k_values: list[int]
    epsilons: list[float] = field(default_factory=lambda: [0.1])
    p_values: list[float] = field(default_factory=list)
    seeds: int = 1
    seed_base: int = 0
    match_p: bool = False
    output: Optional[Path] = None
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Union[str, Path, None] = None) -> "SweepSpec":
        run = dict(raw.get("run", {}))
        unknown = set(run) - {"algorithms", "k", "epsilon", "p", "seeds", "seed_base",
                              "match_p", "output"}
        if unknown:
            raise InvalidInputError(f"unknown [run] keys: {sorted(unknown)}")
        base = Path(base_dir) if base_dir else Path.cwd()
        output = run.get("output")
        return cls(
            dataset=dict(raw.get("dataset", {})),
            objective=dict(raw.get("objective", {})),
            algorithms=list(run.get("algorithms", [])),
            k_values=[int(k) for k in run.get("k", [])],
            epsilons=[float(e) for e in run.get("epsilon", [0.1])],
            p_values=[float(p) for p in run.get("p", [])],
            seeds=int(run.get("seeds", 1)),
            seed_base=int(run.get("seed_base", 0)),
            match_p=bool(run.get("match_p", False)),
            output=(base / output) if output else None,
            base_dir=base,
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "SweepSpec":
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise InvalidInputError(f"{path}: {exc}") from None
        return cls.from_dict(raw, base_dir=path.parent)

    def validate(self, n: int) -> None:
        if not self.algorithms:
            raise InvalidInputError("no algorithms listed")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise InvalidInputError(f"unknown algorithm(s): {unknown}; known: {sorted(ALGORITHMS)}")
        if not self.k_values:
            raise InvalidInputError("no k values listed")
        for k in self.k_values:
            if not 0 <= k <= n:
                raise InvalidInputError(f"k={k} outside [0, n={n}]")
        if self.seeds < 1:
            raise InvalidInputError("seeds must be >= 1")
        if any(a in USES_EPSILON for a in self.algorithms) and not self.epsilons:
            raise InvalidInputError("epsilon list is empty")
        if "sample_greedy" in self.algorithms and not (self.p_values or self.match_p):
            raise InvalidInputError("sample_greedy needs p values or match_p = true")
        for eps in self.epsilons:
            if not 0 < eps < 1:
                raise InvalidInputError(f"epsilon={eps} outside (0, 1)")
        for p in self.p_values:
            if not 0 < p <= 1:
                raise InvalidInputError(f"p={p} outside (0, 1]")


# ---------------------------------------------------------------------------
# dataset / objective construction


def _resolve(base: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


def _load_vectors(ds: dict, base: Path) -> dataio.VectorDataset:
    source = ds.get("source", "gaussian_mixture")
    norm = ds.get("normalization", "per_vector_unit_norm")
    if source == "gaussian_mixture":
        rows = dataio.gaussian_mixture(
            int(ds.get("n", 2000)), int(ds.get("dim", 22)), int(ds.get("clusters", 10)),
            int(ds.get("seed", 0)), float(ds.get("spread", 1.0)),
        )
        return dataio.VectorDataset(dataio.normalize(rows, norm), norm, ds.get("name", "gmm"))
    if source in ("csv", "binary"):
        if "path" not in ds:
            raise InvalidInputError(f"dataset source {source!r} needs a path")
        return dataio.load_vectors(_resolve(base, ds["path"]), source, norm, ds.get("name"))
    raise InvalidInputError(f"dataset source {source!r} does not provide vectors")


def build_objective(dataset: dict, objective: dict,
                    base_dir: Union[str, Path, None] = None) -> tuple[str, Objective]:
    """Construct the objective a sweep config describes; returns (dataset name, objective)."""
    base = Path(base_dir) if base_dir else Path.cwd()
    family = objective.get("family", "logdet")
    if family == "logdet":
        data = _load_vectors(dataset, base)
        params = dataio.KernelParams(float(objective.get("bandwidth", 0.75)),
                                     float(objective.get("sigma", 1.0)))
        return data.name, LogDetObjective(dataio.build_kernel(data, params), params.sigma)
    if family == "facility":
        data = _load_vectors(dataset, base)
        dist = dataio.DistanceSource.from_dataset(data)
        aux = objective.get("auxiliary")
        point = None if aux in (None, "origin") else np.asarray(aux, dtype=float)
        return data.name, FacilityLocationObjective(dist, dist.to_point(point))
    if family == "penalty":
        source = dataset.get("source", "generate")
        if source == "generate":
            table = dataio.generate_scenarios(
                int(dataset.get("num_sensors", 500)), int(dataset.get("num_scenarios", 1000)),
                int(dataset.get("seed", 0)), never_fraction=float(dataset.get("never_fraction", 0.1)),
            )
        elif source == "scenarios":
            table = dataio.load_scenarios(_resolve(base, dataset["path"]))
        else:
            raise InvalidInputError(f"dataset source {source!r} does not provide scenarios")
        penalty = objective.get("penalty")
        obj = PenaltyReductionObjective(table, penalty_from_spec(penalty) if penalty else None)
        return dataset.get("name", "scenarios"), obj
    if family == "coverage":
        covers, weights = dataio.random_coverage(
            int(dataset.get("n", 100)), int(dataset.get("universe", 200)),
            int(dataset.get("seed", 0)), float(dataset.get("density", 0.05)),
        )
        return dataset.get("name", "coverage"), WeightedCoverage(covers, weights, len(weights))
    raise InvalidInputError(f"unknown objective family {family!r}")


# ---------------------------------------------------------------------------
# running


def run_one(obj: Objective, algorithm: str, cfg: SolverConfig, dataset: str = "") -> RunRecord:
    solver = ALGORITHMS[algorithm]
    t0 = time.perf_counter()
    sol = solver(obj, cfg)
    wall = int(round((time.perf_counter() - t0) * 1000))
    return RunRecord(
        algorithm=algorithm,
        dataset=dataset,
        n=obj.n,
        k=cfg.k,
        epsilon=cfg.epsilon if algorithm in USES_EPSILON else None,
        p=cfg.p if algorithm in USES_P else None,
        seed=cfg.seed,
        final_utility=float(sol.final_utility),
        total_cost=sol.total_cost,
        reporting_evals=sol.reporting_evals,
        wall_time_ms=wall,
        warning=sol.warning,
    )


def _cells(spec: SweepSpec, matched: dict) -> Iterable[tuple[str, int, Optional[float], Optional[float]]]:
    for k in spec.k_values:
        for algo in spec.algorithms:
            if algo in USES_EPSILON:
                for eps in spec.epsilons:
                    yield algo, k, eps, None
            elif algo in USES_P:
                for p in spec.p_values:
                    yield algo, k, None, p
                for eps in spec.epsilons if spec.match_p else ():
                    if (k, eps) in matched:
                        yield algo, k, eps, matched[(k, eps)]
            else:
                yield algo, k, None, None


def run_sweep(spec: SweepSpec, output: Union[str, Path, None] = None) -> list[RunRecord]:
    """Run every (cell, seed) of the sweep in order and write the records CSV.

    Everything that can fail on bad input is checked before the first run,
    and the CSV is written to a temporary file that only replaces ``output``
    once the sweep has finished.
    """
    output = Path(output) if output else spec.output
    name, obj = build_objective(spec.dataset, spec.objective, spec.base_dir)
    spec.validate(obj.n)
    seeds = list(range(spec.seed_base, spec.seed_base + spec.seeds))

    matched: dict[tuple[int, float], float] = {}
    if spec.match_p and "sample_greedy" in spec.algorithms:
        for k in spec.k_values:
            for eps in spec.epsilons:
                if k > 0:
                    matched[(k, eps)] = match_p_to_cost(obj, k, eps, seeds)

    records = []
    for algo, k, eps, p in _cells(spec, matched):
        for seed in seeds:
            cfg = SolverConfig(k=k, epsilon=eps if eps is not None else 0.1,
                               p=p if p is not None else 1.0, seed=seed)
            rec = run_one(obj, algo, cfg, name)
            if eps is not None and algo in USES_P:
                rec.epsilon = eps  # the epsilon this p was matched against
            records.append(rec)
    if output is not None:
        write_records(output, records)
    return records


def summarize(records: Sequence[RunRecord]) -> list[RunRecord]:
    """Per-cell mean and sample-std rows, in first-appearance order."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        if r.row == "run":
            groups.setdefault(r.cell, []).append(r)
    out = []
    for cell, rs in groups.items():
        stats = {}
        for col in ("final_utility", "total_cost", "reporting_evals", "wall_time_ms"):
            vals = [float(getattr(r, col)) for r in rs]
            stats[col] = (statistics.fmean(vals), statistics.stdev(vals) if len(vals) > 1 else 0.0)
        algorithm, dataset, n, k, eps, p = cell
        for i, kind in enumerate(("mean", "std")):
            out.append(RunRecord(algorithm, dataset, n, k, eps, p, None,
                                 *(stats[c][i] for c in ("final_utility", "total_cost",
                                                          "reporting_evals", "wall_time_ms")),
                                 warning=None, row=kind))
    return out


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(path: Union[str, Path], records: Sequence[RunRecord],
                  summaries: bool = True) -> None:
    path = Path(path)
    rows = list(records) + (summarize(records) if summaries else [])
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_FIELDS)
            for r in rows:
                w.writerow([_fmt(getattr(r, f)) for f in RECORD_FIELDS])
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _parse(value: str, kind):
    if value == "":
        return None
    if kind is int:
        f = float(value)
        return int(f) if f.is_integer() else f
    if kind is float:
        return float(value)
    return value


_COLUMN_TYPES = {
    "n": int, "k": int, "epsilon": float, "p": float, "seed": int,
    "final_utility": float, "total_cost": int, "reporting_evals": int, "wall_time_ms": int,
}


def read_records(path: Union[str, Path], include_summaries: bool = False) -> list[RunRecord]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RECORD_FIELDS:
            raise InvalidInputError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            values = dict(zip(RECORD_FIELDS, row))
            if values["row"] != "run" and not include_summaries:
                continue
            kwargs = {f: _parse(values[f], _COLUMN_TYPES.get(f, str)) for f in RECORD_FIELDS}
            kwargs["row"] = values["row"]
            out.append(RunRecord(**kwargs))
    return out


# ---------------------------------------------------------------------------
# cost matching and curves


def stochastic_cost_bound(n: int, k: int, epsilon: float) -> int:
    """k * ceil((n / k) ln(1 / epsilon)), the per-run cost ceiling of stochastic greedy."""
    return k * sample_size(n, k, epsilon) if k else 0


def _mean_cost(obj: Objective, algorithm: str, cfg_kw: dict, seeds: Sequence[int]) -> float:
    solver = ALGORITHMS[algorithm]
    return statistics.fmean(solver(obj, SolverConfig(seed=s, **cfg_kw)).total_cost for s in seeds)


def match_p_to_cost(obj: Objective, k: int, epsilon: float, seeds: Sequence[int],
                    algorithm: str = "stochastic_greedy", rel_tol: float = 0.05,
                    max_iter: int = 30) -> float:
    """Bisect p so sample greedy's mean cost is within ``rel_tol`` of the target's.

    The target is ``algorithm``'s mean cost at (k, epsilon) over ``seeds``. If
    no p in (0, 1] gets close enough, warns and returns the closest p seen.
    """
    if k < 1:
        raise InvalidInputError("cost matching needs k >= 1")
    seeds = list(seeds)
    if not seeds:
        raise InvalidInputError("cost matching needs at least one seed")
    target = _mean_cost(obj, algorithm, {"k": k, "epsilon": epsilon}, seeds)

    def cost(p):
        return _mean_cost(obj, "sample_greedy", {"k": k, "p": p}, seeds)

    best_p, best_gap = 1.0, math.inf
    lo, hi = 0.0, 1.0
    p = 1.0
    for _ in range(max_iter):
        c = cost(p)
        gap = abs(c - target) / target
        if gap < best_gap:
            best_p, best_gap = p, gap
        if gap <= rel_tol:
            return p
        if c > target:
            hi = p
        else:
            if p == 1.0:
                break  # even the full ground set is cheaper than the target
            lo = p
        p = 0.5 * (lo + hi)
    warnings.warn(
        f"could not match sample_greedy cost to {algorithm} within {rel_tol:.0%} "
        f"(closest p={best_p:.4g}, gap {best_gap:.1%})",
        RuntimeWarning,
        stacklevel=2,
    )
    return best_p


def emit_curve(records: Sequence[RunRecord], x: str = "k",
               path: Union[str, Path, None] = None) -> list[dict]:
    """Aggregate run records into one (mean, std) point per algorithm cell.

    ``x`` is ``"k"`` or ``"cost"`` (the cell's mean total cost).
    """
    if x not in ("k", "cost"):
        raise InvalidInputError(f"x must be 'k' or 'cost', got {x!r}")
    runs = [r for r in records if r.row == "run"]
    if not runs:
        raise InvalidInputError("no run records to aggregate")
    groups: dict[tuple, list[RunRecord]] = {}
    for r in runs:
        groups.setdefault((r.algorithm, r.epsilon, r.p, r.k), []).append(r)

    def sd(vals):
        return statistics.stdev(vals) if len(vals) > 1 else 0.0

    rows = []
    for (algo, eps, p, k), rs in groups.items():
        u = [r.final_utility for r in rs]
        c = [float(r.total_cost) for r in rs]
        rows.append({
            "algorithm": algo, "epsilon": eps, "p": p, "k": k,
            "x": k if x == "k" else statistics.fmean(c),
            "utility_mean": statistics.fmean(u), "utility_std": sd(u),
            "cost_mean": statistics.fmean(c), "cost_std": sd(c), "runs": len(rs),
        })
    none_low = lambda v: (v is not None, v if v is not None else 0.0)
    rows.sort(key=lambda r: (r["algorithm"], none_low(r["epsilon"]), none_low(r["p"]), r["x"]))
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_FIELDS)
            for r in rows:
                w.writerow([_fmt(r[f]) for f in CURVE_FIELDS])
    return rows
