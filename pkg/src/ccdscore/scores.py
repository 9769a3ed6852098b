"""Outlyingness scores on the catch digraph.

Two complementary scores per point. The outbound score compares the
density of a point's ball against the densities seen inside it, so lone
points surrounded by dense neighborhoods stand out. The inbound score
inverts the total density of the same-cluster points whose balls reach
the point, so points that nothing much covers stand out, including
members of small colluding groups once the cluster-size filter is on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    MADN_CONSTANT,
    NeighborIndex,
    PointSet,
    build_index,
)
from .errors import ConfigError
from .graph import (
    ATTACH_FACTOR,
    CatchDigraph,
    Clustering,
    RadiusStrategy,
    build_catch_digraph,
    cluster_digraph,
    estimate_radii,
    fixed_k,
)

RATIO_ROOT = "ratio-root"
COUNT_OVER_RD = "count-over-rd"


def vicinity_density(dg: CatchDigraph, mode: str = RATIO_ROOT) -> np.ndarray:
    """Density of each point's covering ball.

    The default mode takes the d-th root of occupancy over radius. The
    alternative divides occupancy by radius to the d-th power, for the
    reading where only the radius carries the dimension exponent.
    """
    counts = dg.covered_count.astype(np.float64)
    if mode == RATIO_ROOT:
        return (counts / dg.radii) ** (1.0 / dg.dim)
    if mode == COUNT_OVER_RD:
        return counts / dg.radii**dg.dim
    raise ConfigError(f"unknown density mode {mode!r}")


def oos(dg: CatchDigraph, rho: np.ndarray) -> np.ndarray:
    """Outbound outlyingness: mean density over the points a ball covers,
    divided by the ball's own density. Empty balls score +inf.
    """
    out = np.empty(dg.n, dtype=np.float64)
    for i in range(dg.n):
        nbrs = dg.covers[i]
        if nbrs.size == 0:
            out[i] = np.inf
        else:
            out[i] = float(np.mean(rho[nbrs])) / rho[i]
    return out


def cumulative_influence(
    dg: CatchDigraph, cl: Clustering, rho: np.ndarray
) -> np.ndarray:
    """Summed density of the same-cluster points whose balls reach each point."""
    out = np.zeros(dg.n, dtype=np.float64)
    for i in range(dg.n):
        src = dg.covered_by[i]
        same = src[cl.cluster_of[src] == cl.cluster_of[i]]
        if same.size:
            out[i] = float(np.sum(rho[same]))
    return out


def ios_raw(dg: CatchDigraph, cl: Clustering, rho: np.ndarray) -> np.ndarray:
    """Inbound outlyingness before standardization: 1 / (influence + own density).

    The denominator sums over the in-neighborhood plus the point itself in
    ascending id order, so points whose balls all cover one another get
    bitwise-identical values, not merely equal-up-to-rounding ones; the
    tie-break pass depends on that.
    """
    out = np.empty(dg.n, dtype=np.float64)
    for i in range(dg.n):
        src = dg.covered_by[i]
        same = src[cl.cluster_of[src] == cl.cluster_of[i]]
        ids = np.sort(np.append(same, i))
        out[i] = 1.0 / float(np.sum(rho[ids]))
    return out


def standardize_ios(cl: Clustering, ios: np.ndarray) -> np.ndarray:
    """Center each cluster's values at the median and scale by MADN.

    A cluster with zero MADN (singletons, or heavily tied values) gets 0
    for every member; the tie-break pass downstream still separates them.
    """
    out = np.empty_like(ios)
    for mem in cl.members:
        vals = ios[mem]
        med = float(np.median(vals))
        madn = float(np.median(np.abs(vals - med))) / MADN_CONSTANT
        out[mem] = (vals - med) / madn if madn > 0 else 0.0
    return out


def standardize_naive(cl: Clustering, ios: np.ndarray) -> np.ndarray:
    """Mean/SD standardization per cluster. Comparison output only; the
    robust variant above is what flagging uses.
    """
    out = np.empty_like(ios)
    for mem in cl.members:
        vals = ios[mem]
        sd = float(np.std(vals))
        out[mem] = (vals - float(np.mean(vals))) / (sd if sd > 0 else 1.0)
    return out


def break_ties(cl: Clustering, ios_std: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Separate exactly tied standardized values inside each cluster.

    A run of m >= 2 equal values is spread between its neighboring
    distinct values: each member moves from the upper bracket toward the
    lower one in proportion to its share of the group's density, so denser
    points land lower. Runs at the extremes reuse their own value as the
    missing bracket. Values with no exact duplicate never move.
    """
    out = ios_std.copy()
    for mem in cl.members:
        vals = ios_std[mem]
        order = np.lexsort((mem, vals))
        sorted_ids = mem[order]
        sorted_vals = vals[order]
        distinct, starts, counts = np.unique(
            sorted_vals, return_index=True, return_counts=True
        )
        for g in range(distinct.size):
            m = counts[g]
            if m < 2:
                continue
            lo = distinct[g - 1] if g > 0 else distinct[g]
            hi = distinct[g + 1] if g + 1 < distinct.size else distinct[g]
            ids = sorted_ids[starts[g] : starts[g] + m]
            weights = rho[ids] / float(np.sum(rho[ids]))
            out[ids] = hi - (hi - lo) * weights
    return out


# Calibrated score cutoffs, one per (score, radius family, cluster shape,
# dimension). Lookups snap to the nearest tabulated dimension, preferring
# the smaller one on ties; the mixed shape averages the other two.
TABULATED_DIMS = (2, 3, 5, 10, 20, 50, 100)

THRESHOLDS: dict[tuple[str, str, str], dict[int, float]] = {
    ("oos", "rk", "uniform"): {2: 6, 3: 6.5, 5: 5, 10: 4, 20: 4, 50: 14, 100: 13},
    ("oos", "un", "uniform"): {2: 4, 3: 4, 5: 4, 10: 3, 20: 3, 50: 5, 100: 13},
    ("ios", "rk", "uniform"): {2: 4.5, 3: 4, 5: 4.5, 10: 5, 20: 4.5, 50: 6, 100: 7},
    ("ios", "un", "uniform"): {2: 6, 3: 4.5, 5: 4, 10: 3.5, 20: 4.5, 50: 3.5, 100: 6},
    ("oos", "rk", "gaussian"): {2: 6, 3: 5.5, 5: 4.5, 10: 3.5, 20: 3.5, 50: 6.5, 100: 10},
    ("oos", "un", "gaussian"): {2: 5.5, 3: 4.5, 5: 4, 10: 3.5, 20: 3, 50: 3, 100: 2.5},
    ("ios", "rk", "gaussian"): {2: 35, 3: 17, 5: 13, 10: 6.5, 20: 2.5, 50: 2.5, 100: 2.5},
    ("ios", "un", "gaussian"): {2: 35, 3: 17, 5: 13, 10: 6.5, 20: 6, 50: 2.5, 100: 2.5},
}

# The fixed-k strategy builds balls from plain neighbor distances, which
# behaves like the un family, so it borrows that column.
_DIGRAPH_FAMILY = {
    "rk": "rk",
    "un": "un",
    "rk-approx": "rk",
    "un-approx": "un",
    "fixed-k": "un",
}


def nearest_tabulated_dim(d: int) -> int:
    best = TABULATED_DIMS[0]
    for cand in TABULATED_DIMS:
        if abs(cand - d) < abs(best - d):
            best = cand
    return best


def default_threshold(
    score_kind: str,
    digraph_kind: str,
    cluster_shape: str,
    d: int,
    override: float | None = None,
) -> float:
    """Cutoff for flagging, resolved from the calibration tables.

    An explicit override always wins.
    """
    if override is not None:
        return float(override)
    if score_kind not in ("oos", "ios"):
        raise ConfigError(f"unknown score kind {score_kind!r}")
    family = _DIGRAPH_FAMILY.get(digraph_kind)
    if family is None:
        raise ConfigError(f"unknown digraph kind {digraph_kind!r}")
    if cluster_shape not in ("uniform", "gaussian", "mixed"):
        raise ConfigError(f"unknown cluster shape {cluster_shape!r}")
    dt = nearest_tabulated_dim(d)
    if cluster_shape == "mixed":
        u = THRESHOLDS[(score_kind, family, "uniform")][dt]
        g = THRESHOLDS[(score_kind, family, "gaussian")][dt]
        return (u + g) / 2.0
    return float(THRESHOLDS[(score_kind, family, cluster_shape)][dt])


def flag_outliers(
    scores: np.ndarray,
    threshold: float,
    clustering: Clustering | None = None,
    s_min: float = 0.0,
) -> np.ndarray:
    """Boolean flags: score above threshold, or membership in a cluster
    whose share of the points falls below s_min (pass a clustering only
    for the inbound score, where tiny colluding clusters hide).
    """
    flags = scores > threshold
    if clustering is not None and s_min > 0:
        n = scores.shape[0]
        for mem in clustering.members:
            if mem.size / n < s_min:
                flags[mem] = True
    return flags


def _descending_ranks(scores: np.ndarray) -> np.ndarray:
    order = np.lexsort((np.arange(scores.size), -scores))
    ranks = np.empty(scores.size, dtype=np.int64)
    ranks[order] = np.arange(1, scores.size + 1)
    return ranks


@dataclass
class ScoreReport:
    """Everything the scoring pipeline produced for one point set."""

    rho: np.ndarray
    oos: np.ndarray
    ios_raw: np.ndarray
    ios_std: np.ndarray
    ios_std_naive: np.ndarray
    cluster_of: np.ndarray
    oos_flag: np.ndarray
    ios_flag: np.ndarray
    oos_rank: np.ndarray
    ios_rank: np.ndarray
    oos_threshold: float
    ios_threshold: float
    s_min: float
    params: dict = field(default_factory=dict)
    digraph: CatchDigraph | None = field(default=None, repr=False)
    clustering: Clustering | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def flags_for(self, score_kind: str) -> np.ndarray:
        return self.ios_flag if score_kind == "ios" else self.oos_flag

    def write_csv(self, path, method: str = "ios") -> None:
        score, flag, rank = {
            "oos": (self.oos, self.oos_flag, self.oos_rank),
            "ios": (self.ios_std, self.ios_flag, self.ios_rank),
        }[method]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for i in range(self.n):
                writer.writerow(
                    [
                        i,
                        int(self.cluster_of[i]),
                        repr(float(self.rho[i])),
                        _fmt(self.oos[i]),
                        repr(float(self.ios_raw[i])),
                        repr(float(self.ios_std[i])),
                        int(self.oos_rank[i]),
                        int(self.ios_rank[i]),
                        int(self.oos_flag[i]),
                        int(self.ios_flag[i]),
                        _fmt(score[i]),
                        int(flag[i]),
                        int(rank[i]),
                    ]
                )

    def to_json_dict(self, method: str = "ios") -> dict:
        return {
            "n": self.n,
            "method": method,
            "thresholds": {"oos": self.oos_threshold, "ios": self.ios_threshold},
            "s_min": self.s_min,
            "params": self.params,
            "cluster_sizes": np.bincount(self.cluster_of).tolist(),
            "digraph": {
                "radii": self.digraph.radii.tolist(),
                "covers": [c.tolist() for c in self.digraph.covers],
            },
            "points": {
                "cluster": self.cluster_of.tolist(),
                "rho": self.rho.tolist(),
                "oos": [_json_float(v) for v in self.oos],
                "ios_raw": self.ios_raw.tolist(),
                "ios_std": self.ios_std.tolist(),
                "ios_std_naive": self.ios_std_naive.tolist(),
                "oos_flag": self.oos_flag.astype(int).tolist(),
                "ios_flag": self.ios_flag.astype(int).tolist(),
                "oos_rank": self.oos_rank.tolist(),
                "ios_rank": self.ios_rank.tolist(),
            },
        }

    def write_json(self, path, method: str = "ios") -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(method), fh, indent=2)
            fh.write("\n")


REPORT_COLUMNS = [
    "id",
    "cluster",
    "rho",
    "oos",
    "ios_raw",
    "ios_std",
    "oos_rank",
    "ios_rank",
    "oos_flag",
    "ios_flag",
    "score",
    "flag",
    "rank",
]


def _fmt(v: float) -> str:
    return "inf" if np.isinf(v) else repr(float(v))


def _json_float(v: float):
    return "inf" if np.isinf(v) else float(v)


def score_point_set(
    ps: PointSet,
    strategy: RadiusStrategy | None = None,
    *,
    backend: str = "kdtree",
    density_mode: str = RATIO_ROOT,
    attach_factor: float = ATTACH_FACTOR,
    cluster_shape: str = "uniform",
    oos_threshold: float | None = None,
    ios_threshold: float | None = None,
    s_min: float = 0.0,
    idx: NeighborIndex | None = None,
) -> ScoreReport:
    """Run the whole scoring pipeline on one point set.

    Radii, digraph, clustering, both scores, standardization with tie
    separation, threshold resolution, and flags, in one pass.
    """
    strategy = strategy or fixed_k()
    if idx is None:
        idx = build_index(ps, backend=backend)
    radii = estimate_radii(ps, idx, strategy)
    dg = build_catch_digraph(ps, idx, radii)
    cl = cluster_digraph(dg, ps, attach_factor=attach_factor)
    rho = vicinity_density(dg, mode=density_mode)
    oos_scores = oos(dg, rho)
    ios_scores = ios_raw(dg, cl, rho)
    ios_std = break_ties(cl, standardize_ios(cl, ios_scores), rho)
    thr_oos = default_threshold("oos", strategy.kind, cluster_shape, ps.d, oos_threshold)
    thr_ios = default_threshold("ios", strategy.kind, cluster_shape, ps.d, ios_threshold)
    return ScoreReport(
        rho=rho,
        oos=oos_scores,
        ios_raw=ios_scores,
        ios_std=ios_std,
        ios_std_naive=standardize_naive(cl, ios_scores),
        cluster_of=cl.cluster_of,
        oos_flag=flag_outliers(oos_scores, thr_oos),
        ios_flag=flag_outliers(ios_std, thr_ios, clustering=cl, s_min=s_min),
        oos_rank=_descending_ranks(oos_scores),
        ios_rank=_descending_ranks(ios_std),
        oos_threshold=thr_oos,
        ios_threshold=thr_ios,
        s_min=s_min,
        params={
            "strategy": strategy.kind,
            "k": strategy.k,
            "density_mode": density_mode,
            "cluster_shape": cluster_shape,
            "attach_factor": attach_factor,
            "backend": backend,
        },
        digraph=dg,
        clustering=cl,
    )
