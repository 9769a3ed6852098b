"""Reference detectors the bench compares against: LOF and ODIN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import NeighborIndex, PointSet
from .errors import BadKError


@dataclass(frozen=True)
class LofParams:
    """Neighborhood range for the local outlier factor.

    The reported score is the maximum over every integer k in
    [k_min, k_max]; scores above threshold are flagged.
    """

    k_min: int = 11
    k_max: int = 30
    threshold: float = 1.5


@dataclass(frozen=True)
class OdinParams:
    """In-degree detector parameters. k and t default to round(n**0.5)
    and round(n**0.33) when left unset.
    """

    k: int | None = None
    t: int | None = None


def _knn_table(ps: PointSet, idx: NeighborIndex, kmax: int):
    ids = np.empty((ps.n, kmax), dtype=np.int64)
    dists = np.empty((ps.n, kmax), dtype=np.float64)
    for i in range(ps.n):
        ids[i], dists[i] = idx.knn(i, kmax)
    return ids, dists


def lof(
    ps: PointSet, idx: NeighborIndex, params: LofParams = LofParams()
) -> tuple[np.ndarray, np.ndarray]:
    """Local outlier factor, maximized over the configured k range.

    Neighborhoods are exactly k points, ties broken by ascending id, the
    same convention the rest of the package uses. Returns (scores, flags).
    """
    if params.k_min < 1 or params.k_min > params.k_max:
        raise BadKError(f"bad k range [{params.k_min}, {params.k_max}]")
    if ps.n <= params.k_max:
        raise BadKError(f"need n > {params.k_max}, got n={ps.n}")
    nbr_ids, nbr_dists = _knn_table(ps, idx, params.k_max)
    best = np.full(ps.n, -np.inf)
    for k in range(params.k_min, params.k_max + 1):
        ids_k = nbr_ids[:, :k]
        d_k = nbr_dists[:, :k]
        kdist = nbr_dists[:, k - 1]
        reach = np.maximum(kdist[ids_k], d_k)
        with np.errstate(divide="ignore"):
            lrd = 1.0 / np.mean(reach, axis=1)
        lof_k = np.mean(lrd[ids_k], axis=1) / lrd
        best = np.maximum(best, lof_k)
    return best, best > params.threshold


def odin(
    ps: PointSet, idx: NeighborIndex, params: OdinParams = OdinParams()
) -> tuple[np.ndarray, np.ndarray]:
    """In-degree of the directed kNN graph; low in-degree means outlying.

    Returns (in_degrees, flags) with flags set where in-degree <= t.
    """
    n = ps.n
    k = params.k if params.k is not None else int(round(n**0.5))
    t = params.t if params.t is not None else int(round(n**0.33))
    if not 1 <= k <= n - 1:
        raise BadKError(f"k={k} out of range for n={n}")
    indeg = np.zeros(n, dtype=np.int64)
    for i in range(n):
        ids, _ = idx.knn(i, k)
        indeg[ids] += 1
    return indeg, indeg <= t
