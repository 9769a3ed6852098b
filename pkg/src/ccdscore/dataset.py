"""Point sets, CSV ingestion, robust normalization, and neighbor queries.

All geometry in the package runs through this module so that every caller
sees the same distance arithmetic and the same deterministic tie rules.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    BadKError,
    DataIOError,
    DegenerateDataError,
    LabelError,
    ParseError,
)

# Normal-consistency constant: Med(|X - Med|) of a standard normal, so that
# MADN estimates the standard deviation for Gaussian data.
MADN_CONSTANT = 0.6745

DEFAULT_LABEL_VOCAB = {"0": 0, "1": 1}


@dataclass(frozen=True)
class PointSet:
    """An immutable batch of points with optional ground-truth labels.

    points is an (n, d) float64 array; labels, when present, is an (n,)
    int array with 0 = inlier and 1 = outlier.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-d, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"need at least one row and one column, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.ascontiguousarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError(
                    f"labels shape {lab.shape} does not match {pts.shape[0]} points"
                )
            bad = set(np.unique(lab)) - {0, 1}
            if bad:
                raise ValueError(f"labels must be 0 or 1, got {sorted(bad)}")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)
        if self.feature_names is not None and len(self.feature_names) != pts.shape[1]:
            raise ValueError("feature_names length does not match dimension")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def load_csv(
    path,
    has_header: bool = True,
    label_column: str | int | None = None,
    label_vocab: dict[str, int] | None = None,
) -> PointSet:
    """Read a comma-separated, dot-decimal, UTF-8 file into a PointSet.

    label_column may be a header name (requires has_header) or a 0-based
    column index. Label cells are looked up in label_vocab (default maps
    "0" to inlier and "1" to outlier); anything else raises LabelError.
    """
    vocab = DEFAULT_LABEL_VOCAB if label_vocab is None else label_vocab
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataIOError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ParseError(f"{path} is empty")

    header: list[str] | None = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path} has a header but no data rows")

    ncol = len(rows[0])
    label_idx: int | None = None
    if label_column is not None:
        if isinstance(label_column, str):
            if header is None:
                raise LabelError("label column by name requires a header row")
            if label_column not in header:
                raise LabelError(f"label column {label_column!r} not in header {header}")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column)
            if not 0 <= label_idx < ncol:
                raise LabelError(f"label column index {label_idx} out of range")

    feature_cols = [c for c in range(ncol) if c != label_idx]
    data = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64) if label_idx is not None else None
    header_offset = 2 if has_header else 1
    for r, row in enumerate(rows):
        if len(row) != ncol:
            raise ParseError(
                f"expected {ncol} cells, got {len(row)}", row=r + header_offset, col=1
            )
        for out_c, c in enumerate(feature_cols):
            try:
                data[r, out_c] = float(row[c])
            except ValueError:
                raise ParseError(
                    f"cannot parse {row[c]!r} as a number",
                    row=r + header_offset,
                    col=c + 1,
                ) from None
        if labels is not None:
            cell = row[label_idx].strip()
            if cell not in vocab:
                raise LabelError(
                    f"unknown label {cell!r} at row {r + header_offset}; "
                    f"expected one of {sorted(vocab)}"
                )
            labels[r] = vocab[cell]
    if not np.isfinite(data).all():
        raise ParseError(f"{path} holds non-finite values")

    names = None
    if header is not None:
        names = [header[c] for c in feature_cols]
    return PointSet(points=data, labels=labels, feature_names=names)


def write_csv(ps: PointSet, path) -> None:
    """Write a PointSet in the same dialect load_csv reads.

    Floats are written with repr so a reload reproduces the array bit for bit.
    """
    names = ps.feature_names or [f"x{j}" for j in range(ps.d)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        head = list(names)
        if ps.labels is not None:
            head.append("label")
        writer.writerow(head)
        for i in range(ps.n):
            row = [repr(float(v)) for v in ps.points[i]]
            if ps.labels is not None:
                row.append(str(int(ps.labels[i])))
            writer.writerow(row)


def madn(x: np.ndarray) -> float:
    """Median absolute deviation rescaled to be consistent for normal data."""
    x = np.asarray(x, dtype=np.float64)
    med = float(np.median(x))
    return float(np.median(np.abs(x - med))) / MADN_CONSTANT


def column_robust_stats(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column median, MADN, and a mask of columns whose MADN is zero."""
    med = np.median(points, axis=0)
    mad = np.median(np.abs(points - med), axis=0)
    madn_col = mad / MADN_CONSTANT
    return med, madn_col, madn_col == 0.0


def robust_normalize(ps: PointSet) -> PointSet:
    """Center each column at its median and scale by its MADN.

    Columns with zero MADN are centered only, with a warning; if every
    column is degenerate and all rows are identical the data carries no
    information and DegenerateDataError is raised.
    """
    if ps.n < 2:
        raise DegenerateDataError("normalization needs at least 2 points")
    med, madn_col, degenerate = column_robust_stats(ps.points)
    if degenerate.all() and (ps.points == ps.points[0]).all():
        raise DegenerateDataError("all points are identical")
    if degenerate.any():
        cols = np.flatnonzero(degenerate).tolist()
        warnings.warn(
            f"zero MADN in column(s) {cols}; centering those without scaling",
            RuntimeWarning,
            stacklevel=2,
        )
    scale = np.where(degenerate, 1.0, madn_col)
    out = (ps.points - med) / scale
    return PointSet(points=out, labels=ps.labels, feature_names=ps.feature_names)


def _distances_to(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    # The one distance formula every membership decision goes through.
    diff = points - x
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@dataclass
class NeighborIndex:
    """Neighbor queries over a PointSet with deterministic tie handling.

    Both backends answer through the same distance arithmetic, so query
    results are identical regardless of backend.
    """

    ps: PointSet
    backend: str = "kdtree"
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.backend not in ("kdtree", "brute"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "kdtree":
            self._tree = cKDTree(self.ps.points)

    @property
    def n(self) -> int:
        return self.ps.n

    def knn(self, i: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Ids and distances of the k nearest neighbors of point i.

        The query point itself is excluded. Distances sort ascending;
        exact ties are broken by ascending point id. Asking for more
        neighbors than exist returns them all (empty for a lone point).
        """
        n = self.n
        if not 0 <= i < n:
            raise IndexError(f"point id {i} out of range")
        if k < 1:
            raise BadKError(f"k={k} must be at least 1")
        k = min(k, n - 1)
        if k == 0:
            empty = np.array([], dtype=np.int64)
            return empty, np.array([], dtype=np.float64)
        x = self.ps.points[i]
        if self.backend == "brute":
            cand = np.arange(n)
            dists = _distances_to(self.ps.points, x)
        else:
            qd, _ = self._tree.query(x, k=k + 1)
            radius = float(np.max(qd)) * (1.0 + 1e-9) + 1e-300
            cand = np.asarray(self._tree.query_ball_point(x, radius), dtype=np.int64)
            dists = _distances_to(self.ps.points[cand], x)
        keep = cand != i
        cand = cand[keep]
        dists = dists[keep]
        order = np.lexsort((cand, dists))[:k]
        return cand[order], dists[order]

    def range_query(self, center, r: float) -> np.ndarray:
        """Sorted ids of all points within the closed ball B(center, r).

        center is a point id or an explicit coordinate vector; when it is
        an id, that point is itself a member (distance zero).
        """
        if r < 0:
            raise ValueError("radius must be non-negative")
        if np.isscalar(center) or isinstance(center, (int, np.integer)):
            x = self.ps.points[int(center)]
        else:
            x = np.asarray(center, dtype=np.float64)
        if self.backend == "brute":
            cand = np.arange(self.n)
        else:
            cand = np.asarray(
                self._tree.query_ball_point(x, r * (1.0 + 1e-9) + 1e-300),
                dtype=np.int64,
            )
            if cand.size == 0:
                return cand
        dists = _distances_to(self.ps.points[cand], x)
        return np.sort(cand[dists <= r])

    def kth_distances(self, k: int) -> np.ndarray:
        """Distance from each point to its k-th nearest neighbor (self excluded).

        Distances come from the same arithmetic on both backends so the
        values agree to the last bit.
        """
        n = self.n
        if not 1 <= k <= n - 1:
            raise BadKError(f"k={k} must be in [1, {n - 1}]")
        if self.backend == "kdtree":
            out = np.empty(n, dtype=np.float64)
            for i in range(n):
                out[i] = self.knn(i, k)[1][k - 1]
            return out
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            d = _distances_to(self.ps.points, self.ps.points[i])
            d[i] = np.inf
            out[i] = np.partition(d, k - 1)[k - 1]
        return out


def build_index(ps: PointSet, backend: str = "kdtree") -> NeighborIndex:
    """Build a NeighborIndex over ps with the chosen backend."""
    return NeighborIndex(ps=ps, backend=backend)
