"""Covering radii, the catch digraph, and mutual-coverage clustering.

Point i reaches point j when j lies inside the closed ball B(x_i, r_i).
The digraph of those reaches drives every score downstream; clusters are
the connected components of its mutual (bidirectional) subgraph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import norm

from .dataset import NeighborIndex, PointSet, _distances_to
from .errors import ConfigError, DegenerateDataError

FIXED_K = "fixed-k"
RK_APPROX = "rk-approx"
UN_APPROX = "un-approx"

# How far (in multiples of its own radius) an isolated vertex may look for
# a cluster to join.
ATTACH_FACTOR = 3.0


@dataclass(frozen=True)
class RadiusStrategy:
    """How per-point covering radii are estimated.

    kind is one of fixed-k, rk-approx, un-approx. k defaults to
    max(2, round(sqrt(n))) at estimation time when left unset.
    """

    kind: str
    k: int | None = None
    significance: float = 0.01
    quantile: float = 0.5
    multiplier: float = 2.0

    def __post_init__(self):
        if self.kind not in (FIXED_K, RK_APPROX, UN_APPROX):
            raise ConfigError(f"unknown radius strategy {self.kind!r}")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be positive")
        if not 0 < self.significance < 1:
            raise ConfigError("significance must be in (0, 1)")
        if not 0 <= self.quantile <= 1:
            raise ConfigError("quantile must be in [0, 1]")
        if self.multiplier <= 0:
            raise ConfigError("multiplier must be positive")


def fixed_k(k: int | None = None) -> RadiusStrategy:
    return RadiusStrategy(kind=FIXED_K, k=k)


def rk_approx(significance: float = 0.01, k: int | None = None) -> RadiusStrategy:
    return RadiusStrategy(kind=RK_APPROX, significance=significance, k=k)


def un_approx(
    quantile: float = 0.5, multiplier: float = 2.0, k: int | None = None
) -> RadiusStrategy:
    return RadiusStrategy(kind=UN_APPROX, quantile=quantile, multiplier=multiplier, k=k)


def default_k(n: int) -> int:
    return max(2, int(round(math.sqrt(n))))


def unit_ball_volume(d: int) -> float:
    return math.exp(0.5 * d * math.log(math.pi) - math.lgamma(0.5 * d + 1.0))


def _positive_floor(ps: PointSet, radii: np.ndarray) -> np.ndarray:
    """Replace zero radii by the point's smallest positive neighbor distance."""
    if (radii > 0).all():
        return radii
    out = radii.copy()
    for i in np.flatnonzero(radii == 0):
        d = _distances_to(ps.points, ps.points[i])
        pos = d[d > 0]
        if pos.size == 0:
            raise DegenerateDataError("all points coincide; radii are undefined")
        out[i] = pos.min()
    return out


def estimate_radii(
    ps: PointSet, idx: NeighborIndex, strategy: RadiusStrategy
) -> np.ndarray:
    """Per-point covering radii under the given strategy. Always positive."""
    n = ps.n
    if n < 2:
        raise DegenerateDataError("radius estimation needs at least 2 points")
    k = strategy.k if strategy.k is not None else default_k(n)
    k = min(k, n - 1)

    if strategy.kind == FIXED_K:
        radii = idx.kth_distances(k)
    elif strategy.kind == UN_APPROX:
        nnd = idx.kth_distances(1)
        radii = np.empty(n, dtype=np.float64)
        for i in range(n):
            ids, _ = idx.knn(i, k)
            radii[i] = strategy.multiplier * float(
                np.quantile(nnd[ids], strategy.quantile)
            )
    else:
        radii = _rk_radii(ps, idx, k, strategy.significance)
    return _positive_floor(ps, radii)


def _rk_radii(
    ps: PointSet, idx: NeighborIndex, k: int, significance: float
) -> np.ndarray:
    """Largest of each point's k nearest-neighbor distances at which the
    local count still reaches the count expected under complete spatial
    randomness, up to a binomial envelope. Falls back to the 1-NN distance
    when nothing passes. Candidates stop at the k-th neighbor so radii stay
    on the local scale instead of swallowing the whole window.
    """
    n, d = ps.n, ps.d
    sides = ps.points.max(axis=0) - ps.points.min(axis=0)
    volume = float(np.prod(sides))
    vball = unit_ball_volume(d)
    z = float(norm.ppf(1.0 - significance))
    radii = np.empty(n, dtype=np.float64)
    log_lam_ball = (
        math.log(n) - math.log(volume) + math.log(vball) if volume > 0 else None
    )
    for i in range(n):
        _, cand = idx.knn(i, k)
        fallback = cand[0]
        if log_lam_ball is None:
            radii[i] = fallback
            continue
        with np.errstate(divide="ignore", over="ignore"):
            log_expected = log_lam_ball + d * np.log(cand)
            expected = np.exp(log_expected)
        observed = np.arange(2, cand.size + 2, dtype=np.float64)
        p = np.clip(expected / n, 0.0, 1.0)
        envelope = z * np.sqrt(n * p * (1.0 - p))
        passing = observed >= expected - envelope
        radii[i] = cand[np.flatnonzero(passing)[-1]] if passing.any() else fallback
    return radii


@dataclass
class CatchDigraph:
    """Directed coverage structure: i -> j when j is inside B(x_i, r_i).

    covers[i] lists the targets of i (i itself excluded, ascending ids);
    covered_by[i] lists the sources reaching i; covered_count[i] is the
    ball occupancy including the center itself.
    """

    radii: np.ndarray
    covers: list[np.ndarray]
    covered_by: list[np.ndarray]
    covered_count: np.ndarray
    dim: int

    @property
    def n(self) -> int:
        return len(self.covers)


def build_catch_digraph(
    ps: PointSet, idx: NeighborIndex, radii: np.ndarray
) -> CatchDigraph:
    radii = np.asarray(radii, dtype=np.float64)
    if radii.shape != (ps.n,):
        raise ValueError("radii must have one entry per point")
    if not (radii > 0).all():
        raise ValueError("radii must be positive")
    covers: list[np.ndarray] = []
    sources: list[list[int]] = [[] for _ in range(ps.n)]
    for i in range(ps.n):
        members = idx.range_query(i, float(radii[i]))
        members = members[members != i]
        covers.append(members)
        for j in members:
            sources[j].append(i)
    covered_by = [np.asarray(s, dtype=np.int64) for s in sources]
    counts = np.asarray([len(c) + 1 for c in covers], dtype=np.int64)
    return CatchDigraph(
        radii=radii, covers=covers, covered_by=covered_by, covered_count=counts,
        dim=ps.d,
    )


def outbound_neighbors(dg: CatchDigraph, i: int) -> np.ndarray:
    """Points inside i's own ball, i excluded."""
    return dg.covers[i]


@dataclass
class Clustering:
    """Partition of the points: cluster_of[i] gives the cluster id of i.

    Ids run 0..n_clusters-1 in decreasing cluster size, ties broken by the
    smallest member id.
    """

    cluster_of: np.ndarray
    members: list[np.ndarray]

    @property
    def n_clusters(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray([m.size for m in self.members], dtype=np.int64)


def cluster_digraph(
    dg: CatchDigraph, ps: PointSet, attach_factor: float = ATTACH_FACTOR
) -> Clustering:
    """Connected components of the mutual-coverage graph.

    Vertices with no mutual edge join the cluster of their nearest point
    that sits in a component of size >= 2, provided that point lies within
    attach_factor times their own radius; otherwise they stay singletons.
    """
    n = dg.n
    cover_sets = [set(c.tolist()) for c in dg.covers]
    rows, cols = [], []
    for i in range(n):
        for j in dg.covers[i]:
            if j > i and i in cover_sets[j]:
                rows.append(i)
                cols.append(j)
    adj = sparse.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n)
    )
    n_comp, comp = connected_components(adj, directed=False)
    comp_sizes = np.bincount(comp, minlength=n_comp)

    labels = comp.copy()
    anchored = np.flatnonzero(comp_sizes[comp] >= 2)
    isolated = np.flatnonzero(comp_sizes[comp] == 1)
    next_label = n_comp
    for v in isolated:
        if anchored.size:
            d = _distances_to(ps.points[anchored], ps.points[v])
            best = int(np.argmin(d))  # argmin takes the first, so smallest id on ties
            if d[best] <= attach_factor * dg.radii[v]:
                labels[v] = comp[anchored[best]]
                continue
        labels[v] = next_label
        next_label += 1

    used = np.unique(labels)
    groups = [np.flatnonzero(labels == u) for u in used]
    order = sorted(range(len(groups)), key=lambda g: (-groups[g].size, groups[g][0]))
    members = [groups[g] for g in order]
    cluster_of = np.empty(n, dtype=np.int64)
    for cid, mem in enumerate(members):
        cluster_of[mem] = cid
    return Clustering(cluster_of=cluster_of, members=members)


def inbound_neighbors(dg: CatchDigraph, cl: Clustering, i: int) -> np.ndarray:
    """Same-cluster points whose ball contains i, i excluded."""
    src = dg.covered_by[i]
    return src[cl.cluster_of[src] == cl.cluster_of[i]]
