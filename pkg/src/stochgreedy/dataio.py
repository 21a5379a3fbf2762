"""Vector datasets, kernel/distance backings and sensor scenario tables.

File formats
------------
Vector CSV
    Comma separated, ``.`` as decimal mark, one vector per line. A first
    line containing any non-numeric cell is treated as a header.
Vector binary (``.f64``)
    8-byte magic ``b"SGVEC001"``, then ``n`` and ``dim`` as little-endian
    uint64, then ``n * dim`` little-endian float64 values in row-major order.
Scenario CSV
    Header ``sensor,scenario,time``; ``time`` is a non-negative float or the
    token ``inf``. Pairs that do not appear are never detected (``inf``).
Scenario sidecar (``<stem>.spec.json``)
    ``{"schema": "stochgreedy.scenarios/1", "num_sensors": int,
    "num_scenarios": int, "probabilities": [..] | "uniform",
    "penalty": {"model": "capped_linear", "t_max": float}}``.
    ``penalty`` may also be ``{"model": "step", "tau": float, "z": float}``.
    The sidecar is optional; without it sizes are inferred from the CSV,
    probabilities are uniform and the penalty is capped-linear at the largest
    finite detection time.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .core import InvalidInputError, NumericDomainError

__all__ = [
    "DataLoadError",
    "NORMALIZATIONS",
    "VectorDataset",
    "normalize",
    "load_vectors",
    "save_vectors",
    "gaussian_mixture",
    "random_coverage",
    "KernelParams",
    "DistanceSource",
    "KernelMatrix",
    "build_kernel",
    "ScenarioTable",
    "generate_scenarios",
    "load_scenarios",
    "save_scenarios",
    "scenario_sidecar_path",
]

PathLike = Union[str, Path]

NORMALIZATIONS = ("none", "per_vector_unit_norm", "per_feature_zscore", "centered_unit_norm")
MATERIALIZE_LIMIT = 20_000
ROW_CACHE_SIZE = 4096
BINARY_MAGIC = b"SGVEC001"
SCENARIO_SCHEMA = "stochgreedy.scenarios/1"


class DataLoadError(InvalidInputError):
    pass


# ---------------------------------------------------------------------------
# vectors


@dataclass(frozen=True)
class VectorDataset:
    rows: np.ndarray
    normalization: str = "none"
    name: str = "vectors"

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise InvalidInputError(f"expected a 2-d array of vectors, got shape {rows.shape}")
        if not np.isfinite(rows).all():
            bad = int(np.argwhere(~np.isfinite(rows))[0, 0])
            raise InvalidInputError(f"non-finite value in row {bad}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def normalize(rows: np.ndarray, mode: str) -> np.ndarray:
    """Apply one of :data:`NORMALIZATIONS` and return a new array.

    ``centered_unit_norm`` subtracts each vector's own mean before scaling it
    to unit length; ``per_feature_zscore`` centres and scales columns.
    """
    rows = np.array(rows, dtype=np.float64)
    if mode == "none":
        return rows
    if mode == "per_feature_zscore":
        std = rows.std(axis=0)
        std[std == 0] = 1.0
        return (rows - rows.mean(axis=0)) / std
    if mode == "centered_unit_norm":
        rows = rows - rows.mean(axis=1, keepdims=True)
    elif mode != "per_vector_unit_norm":
        raise InvalidInputError(f"unknown normalization {mode!r}; choose from {NORMALIZATIONS}")
    norms = np.sqrt((rows * rows).sum(axis=1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DataLoadError(f"row {int(zero[0])} has zero norm and cannot be unit-normalized")
    return rows / norms[:, None]


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _read_csv_vectors(path: Path) -> np.ndarray:
    text = path.read_text()
    lines = list(csv.reader(io.StringIO(text)))
    lines = [(i, row) for i, row in enumerate(lines) if row and any(c.strip() for c in row)]
    if not lines:
        raise DataLoadError(f"{path}: no data rows")
    if not all(_is_number(c) for c in lines[0][1]):
        lines = lines[1:]
        if not lines:
            raise DataLoadError(f"{path}: header but no data rows")
    width = len(lines[0][1])
    values = []
    for row_idx, (_, cells) in enumerate(lines):
        if len(cells) != width:
            raise DataLoadError(
                f"{path}: row {row_idx} has {len(cells)} columns, expected {width}"
            )
        try:
            values.append([float(c) for c in cells])
        except ValueError:
            raise DataLoadError(f"{path}: non-numeric cell in row {row_idx}") from None
    return np.array(values, dtype=np.float64)


def _read_binary_vectors(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:8] != BINARY_MAGIC:
        raise DataLoadError(f"{path}: missing {BINARY_MAGIC!r} header")
    n, dim = struct.unpack("<QQ", raw[8:24])
    body = raw[24:]
    if len(body) != 8 * n * dim:
        raise DataLoadError(f"{path}: expected {n}x{dim} float64 values, found {len(body)} bytes")
    if n == 0:
        raise DataLoadError(f"{path}: no data rows")
    return np.frombuffer(body, dtype="<f8").reshape(n, dim).astype(np.float64)


def _guess_format(path: Path) -> str:
    return "binary" if path.suffix in (".f64", ".bin") else "csv"


def load_vectors(
    path: PathLike,
    format: Optional[str] = None,
    normalization: str = "none",
    name: Optional[str] = None,
) -> VectorDataset:
    path = Path(path)
    fmt = format or _guess_format(path)
    if fmt == "csv":
        rows = _read_csv_vectors(path)
    elif fmt == "binary":
        rows = _read_binary_vectors(path)
    else:
        raise InvalidInputError(f"unknown vector format {fmt!r}")
    bad = np.argwhere(~np.isfinite(rows))
    if bad.size:
        raise DataLoadError(f"{path}: non-finite value in row {int(bad[0, 0])}")
    return VectorDataset(normalize(rows, normalization), normalization, name or path.stem)


def save_vectors(path: PathLike, rows: np.ndarray, format: Optional[str] = None) -> None:
    path = Path(path)
    rows = np.asarray(rows, dtype=np.float64)
    if (format or _guess_format(path)) == "binary":
        header = BINARY_MAGIC + struct.pack("<QQ", rows.shape[0], rows.shape[1])
        path.write_bytes(header + rows.astype("<f8").tobytes(order="C"))
    else:
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows([[repr(float(v)) for v in r] for r in rows])


def gaussian_mixture(
    n: int, dim: int = 10, clusters: int = 10, seed: int = 0, spread: float = 0.35
) -> np.ndarray:
    """Isotropic Gaussian blobs around uniformly drawn centres in [-1, 1]^dim."""
    if n < 1 or dim < 1 or clusters < 1:
        raise InvalidInputError("n, dim and clusters must be positive")
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-1.0, 1.0, size=(clusters, dim))
    labels = rng.integers(clusters, size=n)
    return centres[labels] + spread * rng.standard_normal((n, dim))


def random_coverage(
    n: int, universe: int, seed: int = 0, density: float = 0.3, max_weight: int = 5
) -> tuple[list[list[int]], np.ndarray]:
    """Random set system: each element covers each item with prob ``density``;
    item weights are integers in [1, max_weight] so unions sum exactly."""
    if n < 0 or universe < 1 or not 0 < density <= 1:
        raise InvalidInputError("bad coverage instance parameters")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, universe)) < density
    covers = [[int(i) for i in np.flatnonzero(row)] for row in mask]
    weights = rng.integers(1, max_weight + 1, size=universe).astype(float)
    return covers, weights


# ---------------------------------------------------------------------------
# distance and kernel backings


def _sq_dist_rows(X: np.ndarray, idx: np.ndarray, point_block: int = 1 << 22) -> np.ndarray:
    # coordinate-by-coordinate accumulation: d(i, j) and d(j, i) run through the
    # same float operations in the same order, so the result is exactly symmetric
    # and independent of how rows are batched
    out = np.empty((idx.size, X.shape[0]))
    step = max(1, point_block // max(1, X.shape[0]))
    for start in range(0, idx.size, step):
        sub = X[idx[start:start + step]]
        acc = np.zeros((sub.shape[0], X.shape[0]))
        for k in range(X.shape[1]):
            diff = X[None, :, k] - sub[:, None, k]
            acc += diff * diff
        out[start:start + step] = acc
    return out


class _RowCache:
    def __init__(self, compute, maxsize: int):
        self._compute = compute
        self._maxsize = maxsize
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, idx: np.ndarray) -> np.ndarray:
        with self._lock:
            missing = [int(i) for i in idx if int(i) not in self._rows]
        if missing:
            fresh = self._compute(np.array(missing, dtype=np.intp))
        with self._lock:
            for i, row in zip(missing, fresh if missing else ()):
                row.setflags(write=False)
                self._rows[i] = row
            out = np.stack([self._rows[int(i)] for i in idx]) if len(idx) else np.zeros((0, 0))
            for i in idx:
                self._rows.move_to_end(int(i))
            while len(self._rows) > self._maxsize:
                self._rows.popitem(last=False)
        return out


class DistanceSource:
    """Non-negative dissimilarities d(u, v) over a ground set.

    Built either from vectors (squared Euclidean, materialized up to
    ``MATERIALIZE_LIMIT`` points and computed row-by-row with an LRU cache
    beyond that) or from an explicit square matrix.
    """

    def __init__(
        self,
        vectors: Optional[np.ndarray] = None,
        matrix: Optional[np.ndarray] = None,
        materialize: Optional[bool] = None,
    ):
        if (vectors is None) == (matrix is None):
            raise InvalidInputError("give exactly one of vectors or matrix")
        self.vectors = None if vectors is None else np.ascontiguousarray(vectors, dtype=float)
        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise InvalidInputError(f"distance matrix must be square, got {matrix.shape}")
            if np.isnan(matrix).any():
                raise InvalidInputError("distance matrix contains NaN")
            if (matrix < 0).any():
                i, j = np.argwhere(matrix < 0)[0]
                raise InvalidInputError(f"negative distance d({i}, {j}) = {matrix[i, j]}")
            self.n = matrix.shape[0]
            self._dense = matrix
        else:
            self.n = self.vectors.shape[0]
            if materialize is None:
                materialize = self.n <= MATERIALIZE_LIMIT
            self._dense = (
                _sq_dist_rows(self.vectors, np.arange(self.n)) if materialize else None
            )
        if self._dense is not None:
            self._dense.setflags(write=False)
        self._cache = _RowCache(self._compute_rows, ROW_CACHE_SIZE)

    @classmethod
    def from_dataset(cls, data: VectorDataset, materialize: Optional[bool] = None):
        return cls(vectors=data.rows, materialize=materialize)

    @property
    def materialized(self) -> bool:
        return self._dense is not None

    def _compute_rows(self, idx: np.ndarray) -> np.ndarray:
        return _sq_dist_rows(self.vectors, idx)

    def rows(self, idx: Sequence[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        if self._dense is not None:
            return self._dense[idx]
        return self._cache.get(idx)

    def row(self, i: int) -> np.ndarray:
        return self.rows([i])[0]

    def pair(self, i: int, j: int) -> float:
        return float(self.row(i)[j])

    def to_point(self, point: Optional[np.ndarray] = None) -> np.ndarray:
        """Squared distance from every element to an external point (default origin)."""
        if self.vectors is None:
            raise InvalidInputError("explicit distance matrices need explicit auxiliary distances")
        X = self.vectors
        point = np.zeros(X.shape[1]) if point is None else np.asarray(point, dtype=float)
        if point.shape != (X.shape[1],):
            raise InvalidInputError(f"auxiliary point must have dimension {X.shape[1]}")
        acc = np.zeros(X.shape[0])
        for k in range(X.shape[1]):
            diff = X[:, k] - point[k]
            acc += diff * diff
        return acc


@dataclass(frozen=True)
class KernelParams:
    bandwidth: float = 0.75
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise InvalidInputError(f"bandwidth must be > 0, got {self.bandwidth}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidInputError(f"sigma must be > 0, got {self.sigma}")


class KernelMatrix:
    """Symmetric PSD covariance over the ground set.

    Either an explicit matrix, or the squared-exponential kernel
    ``exp(-d(i, j) / h^2)`` on top of a :class:`DistanceSource`, which keeps
    the kernel and the facility-location distances consistent entry by entry.
    """

    def __init__(
        self,
        matrix: Optional[np.ndarray] = None,
        distances: Optional[DistanceSource] = None,
        bandwidth: Optional[float] = None,
    ):
        if matrix is not None:
            matrix = np.array(matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise InvalidInputError(f"kernel must be square, got {matrix.shape}")
            if not np.isfinite(matrix).all():
                raise NumericDomainError("kernel contains non-finite entries")
            if np.abs(matrix - matrix.T).max(initial=0.0) > 1e-12:
                raise InvalidInputError("kernel matrix is not symmetric")
            self.n = matrix.shape[0]
            self.distances = None
            self.bandwidth = None
            self._dense = matrix
            self._diag = np.diag(matrix).copy()
        else:
            if distances is None or bandwidth is None:
                raise InvalidInputError("need a matrix, or distances plus a bandwidth")
            self.n = distances.n
            self.distances = distances
            self.bandwidth = float(bandwidth)
            self._dense = None
            if distances.materialized:
                self._dense = self._from_dist(distances.rows(np.arange(self.n)))
            self._diag = np.ones(self.n)
        if self._dense is not None:
            self._dense.setflags(write=False)
        self._diag.setflags(write=False)

    def _from_dist(self, d: np.ndarray) -> np.ndarray:
        if not np.isfinite(d).all():
            raise NumericDomainError("non-finite distance while building kernel")
        return np.exp(-d / (self.bandwidth * self.bandwidth))

    @property
    def dense(self) -> Optional[np.ndarray]:
        return self._dense

    def rows(self, idx: Sequence[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        if self._dense is not None:
            return self._dense[idx]
        return self._from_dist(self.distances.rows(idx))

    def row(self, i: int) -> np.ndarray:
        return self.rows([i])[0]

    def diagonal(self) -> np.ndarray:
        return self._diag

    def submatrix(self, idx: Sequence[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.intp)
        return self.rows(idx)[:, idx]

    def to_array(self) -> np.ndarray:
        return self.rows(np.arange(self.n))


def build_kernel(
    data: Union[VectorDataset, DistanceSource],
    params: KernelParams,
    materialize: Optional[bool] = None,
) -> KernelMatrix:
    """Squared-exponential kernel ``K[i, j] = exp(-||x_i - x_j||^2 / h^2)``."""
    if isinstance(data, VectorDataset):
        if data.n < 1:
            raise InvalidInputError("kernel needs at least one vector")
        data = DistanceSource.from_dataset(data, materialize=materialize)
    return KernelMatrix(distances=data, bandwidth=params.bandwidth)


# ---------------------------------------------------------------------------
# sensor scenarios


@dataclass
class ScenarioTable:
    """Detection times ``T[s, i]`` (``inf`` = never) with scenario probabilities."""

    detection_times: np.ndarray
    probabilities: np.ndarray
    penalty_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        T = np.array(self.detection_times, dtype=float)
        if T.ndim != 2:
            raise InvalidInputError("detection_times must be sensors x scenarios")
        if np.isnan(T).any() or (T < 0).any():
            raise InvalidInputError("detection times must be >= 0 or inf")
        P = np.array(self.probabilities, dtype=float).reshape(-1)
        if P.size != T.shape[1]:
            raise InvalidInputError(f"{P.size} probabilities for {T.shape[1]} scenarios")
        P = _normalize_probs(P)
        T.setflags(write=False)
        P.setflags(write=False)
        self.detection_times = T
        self.probabilities = P
        if not self.penalty_spec:
            finite = T[np.isfinite(T)]
            t_max = float(finite.max()) if finite.size else 1.0
            self.penalty_spec = {"model": "capped_linear", "t_max": t_max}

    @property
    def num_sensors(self) -> int:
        return self.detection_times.shape[0]

    @property
    def num_scenarios(self) -> int:
        return self.detection_times.shape[1]


def _normalize_probs(P: np.ndarray) -> np.ndarray:
    if not np.isfinite(P).all() or (P < 0).any():
        raise InvalidInputError("scenario probabilities must be finite and non-negative")
    total = P.sum()
    if total <= 0:
        raise InvalidInputError("scenario probabilities sum to zero")
    return P / total


def generate_scenarios(
    num_sensors: int,
    num_scenarios: int,
    seed: int = 0,
    model: str = "geometric",
    never_fraction: float = 0.1,
    probabilities: Optional[Sequence[float]] = None,
    penalty_spec: Optional[dict] = None,
) -> ScenarioTable:
    """Synthetic detection times on a random geometric network.

    Nodes are dropped uniformly in the unit square and linked when closer
    than ``1.5 * sqrt(log n / (pi n))``; each link's delay is its length
    times a U(0.5, 1.5) factor. Scenario ``i`` injects at a random node and
    ``T[s, i]`` is the shortest-path delay to node ``s`` (``inf`` when
    unreachable). A further ``never_fraction`` of pairs is marked as never
    detecting.
    """
    if model != "geometric":
        raise InvalidInputError(f"unknown scenario model {model!r}")
    if num_sensors < 1 or num_scenarios < 1:
        raise InvalidInputError("need at least one sensor and one scenario")
    if not 0 <= never_fraction < 1:
        raise InvalidInputError("never_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(size=(num_sensors, 2))
    radius = 1.5 * math.sqrt(math.log(max(num_sensors, 2)) / (math.pi * num_sensors))
    pairs = cKDTree(pos).query_pairs(radius, output_type="ndarray")
    length = np.linalg.norm(pos[pairs[:, 0]] - pos[pairs[:, 1]], axis=1)
    delay = length * rng.uniform(0.5, 1.5, size=length.size)
    graph = coo_matrix(
        (np.concatenate([delay, delay]),
         (np.concatenate([pairs[:, 0], pairs[:, 1]]), np.concatenate([pairs[:, 1], pairs[:, 0]]))),
        shape=(num_sensors, num_sensors),
    ).tocsr()
    sources = rng.integers(num_sensors, size=num_scenarios)
    T = dijkstra(graph, directed=False, indices=sources).T
    T[rng.uniform(size=T.shape) < never_fraction] = np.inf
    P = np.ones(num_scenarios) if probabilities is None else np.asarray(probabilities, float)
    return ScenarioTable(T, P, dict(penalty_spec) if penalty_spec else {})


def scenario_sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".spec.json")


def load_scenarios(path: PathLike, spec_path: Optional[PathLike] = None) -> ScenarioTable:
    path = Path(path)
    spec_path = Path(spec_path) if spec_path else scenario_sidecar_path(path)
    spec = {}
    if spec_path.exists():
        spec = json.loads(spec_path.read_text())
        if spec.get("schema", SCENARIO_SCHEMA) != SCENARIO_SCHEMA:
            raise DataLoadError(f"{spec_path}: unsupported schema {spec.get('schema')!r}")

    entries: dict[tuple[int, int], float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["sensor", "scenario", "time"]:
            raise DataLoadError(f"{path}: header must be 'sensor,scenario,time'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataLoadError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                s, i, t = int(row[0]), int(row[1]), float(row[2])
            except ValueError:
                raise DataLoadError(f"{path}:{lineno}: unparseable row {row}") from None
            if s < 0 or i < 0:
                raise DataLoadError(f"{path}:{lineno}: negative index")
            if math.isnan(t) or t < 0:
                raise DataLoadError(f"{path}:{lineno}: detection time must be >= 0, got {row[2]}")
            if (s, i) in entries:
                raise DataLoadError(f"{path}:{lineno}: duplicate pair ({s}, {i})")
            entries[(s, i)] = t

    max_s = max((s for s, _ in entries), default=-1) + 1
    max_i = max((i for _, i in entries), default=-1) + 1
    num_sensors = int(spec.get("num_sensors", max_s))
    num_scenarios = int(spec.get("num_scenarios", max_i))
    if num_sensors < max_s or num_scenarios < max_i:
        raise DataLoadError(f"{path}: indices exceed the sizes declared in {spec_path}")
    if num_sensors < 1 or num_scenarios < 1:
        raise DataLoadError(f"{path}: empty scenario table")
    T = np.full((num_sensors, num_scenarios), np.inf)
    for (s, i), t in entries.items():
        T[s, i] = t

    probs = spec.get("probabilities", "uniform")
    P = np.ones(num_scenarios) if probs == "uniform" else np.asarray(probs, dtype=float)
    if P.shape != (num_scenarios,):
        raise DataLoadError(f"{spec_path}: expected {num_scenarios} probabilities")
    try:
        return ScenarioTable(T, P, dict(spec.get("penalty", {})))
    except InvalidInputError as exc:
        raise DataLoadError(f"{spec_path}: {exc}") from None


def save_scenarios(table: ScenarioTable, path: PathLike, spec_path: Optional[PathLike] = None):
    path = Path(path)
    spec_path = Path(spec_path) if spec_path else scenario_sidecar_path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sensor", "scenario", "time"])
        for s, i in zip(*np.nonzero(np.isfinite(table.detection_times))):
            w.writerow([int(s), int(i), repr(float(table.detection_times[s, i]))])
    spec_path.write_text(json.dumps({
        "schema": SCENARIO_SCHEMA,
        "num_sensors": table.num_sensors,
        "num_scenarios": table.num_scenarios,
        "probabilities": [float(p) for p in table.probabilities],
        "penalty": table.penalty_spec,
    }, indent=2))
