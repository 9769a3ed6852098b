"""Evaluation metrics and the Monte Carlo comparison harness.

Every (config, replicate) cell derives its own seed from the master seed
and the cell coordinates, so results do not depend on scheduling: any
worker count, and any ordering of the methods list, produces the same
numbers.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .baselines import lof, odin
from .dataset import PointSet, build_index
from .errors import ConfigError, DegenerateLabelsError
from .graph import fixed_k, rk_approx, un_approx
from .scores import default_threshold, flag_outliers, score_point_set
from .simgen import SimConfig, generate

BETA = 2.0

CCD_METHODS = ("oos-fixed", "ios-fixed", "oos-rk", "ios-rk", "oos-un", "ios-un")
BASELINE_METHODS = ("lof", "odin")
ALL_METHODS = CCD_METHODS + BASELINE_METHODS

_STRATEGY_BY_SUFFIX = {"fixed": fixed_k, "rk": rk_approx, "un": un_approx}
_SHAPE_BY_REGIME = {
    "uniform": "uniform",
    "matern": "uniform",
    "gaussian": "gaussian",
    "thomas": "gaussian",
    "mixed": "mixed",
}

# Fraction below which a cluster counts as too small to be real; applied
# to the inbound score only.
DEFAULT_S_MIN = 0.04


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @staticmethod
    def from_flags(labels: np.ndarray, flags: np.ndarray) -> "Confusion":
        labels = np.asarray(labels).astype(bool)
        flags = np.asarray(flags).astype(bool)
        if labels.shape != flags.shape:
            raise ValueError("labels and flags must have the same length")
        if not labels.any() or labels.all():
            raise DegenerateLabelsError(
                "need at least one outlier and one inlier label"
            )
        return Confusion(
            tp=int(np.sum(labels & flags)),
            fp=int(np.sum(~labels & flags)),
            tn=int(np.sum(~labels & ~flags)),
            fn=int(np.sum(labels & ~flags)),
        )


@dataclass(frozen=True)
class MetricSet:
    tpr: float
    tnr: float
    ba: float
    f_beta: float


def metrics(c: Confusion, beta: float = BETA) -> MetricSet:
    """Detection metrics from a confusion. Precision is defined as zero
    when nothing was flagged, and F_beta as zero when the numerator is.
    """
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise DegenerateLabelsError("confusion lacks a positive or negative class")
    tpr = c.tp / (c.tp + c.fn)
    tnr = c.tn / (c.tn + c.fp)
    ba = (tpr + tnr) / 2.0
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    num = (1.0 + beta * beta) * precision * tpr
    f_beta = num / (beta * beta * precision + tpr) if num > 0 else 0.0
    return MetricSet(tpr=tpr, tnr=tnr, ba=ba, f_beta=f_beta)


def evaluate_method(
    method: str,
    ps: PointSet,
    regime: str,
    s_min: float = DEFAULT_S_MIN,
) -> np.ndarray:
    """Run one named method on a labeled point set; returns boolean flags."""
    if method in BASELINE_METHODS:
        idx = build_index(ps)
        if method == "lof":
            return lof(ps, idx)[1]
        return odin(ps, idx)[1]
    if method not in CCD_METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {ALL_METHODS}")
    score_kind, suffix = method.split("-")
    report = _ccd_report(ps, suffix, regime, s_min)
    return report.flags_for(score_kind)


def _ccd_report(ps: PointSet, suffix: str, regime: str, s_min: float):
    shape = _SHAPE_BY_REGIME[regime]
    return score_point_set(
        ps,
        _STRATEGY_BY_SUFFIX[suffix](),
        cluster_shape=shape,
        s_min=s_min,
    )


@dataclass
class BenchRow:
    """One method on one generated replicate."""

    config_index: int
    replicate: int
    method: str
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    tpr: float = float("nan")
    tnr: float = float("nan")
    ba: float = float("nan")
    f2: float = float("nan")
    error: str = ""
    wall_time: float = 0.0


def _derive_seed(master_seed: int, config_index: int, replicate: int) -> int:
    ss = np.random.SeedSequence([master_seed, config_index, replicate])
    return int(ss.generate_state(1, np.uint64)[0])


def _run_cell(args) -> list[BenchRow]:
    cfg_dict, ci, ri, master_seed, methods, s_min = args
    cfg = SimConfig.from_dict(
        {**cfg_dict, "seed": _derive_seed(master_seed, ci, ri)}
    )
    try:
        ps = generate(cfg)
    except Exception as exc:  # noqa: BLE001 - one bad cell must not sink the run
        return [
            BenchRow(config_index=ci, replicate=ri, method=m, error=str(exc))
            for m in methods
        ]
    rows = []
    reports: dict[str, object] = {}
    for m in methods:
        t0 = time.perf_counter()
        try:
            if m in CCD_METHODS:
                score_kind, suffix = m.split("-")
                if suffix not in reports:
                    reports[suffix] = _ccd_report(ps, suffix, cfg.regime, s_min)
                flags = reports[suffix].flags_for(score_kind)
            else:
                flags = evaluate_method(m, ps, cfg.regime, s_min)
            conf = Confusion.from_flags(ps.labels, flags)
            ms = metrics(conf)
            rows.append(
                BenchRow(
                    config_index=ci,
                    replicate=ri,
                    method=m,
                    tp=conf.tp,
                    fp=conf.fp,
                    tn=conf.tn,
                    fn=conf.fn,
                    tpr=ms.tpr,
                    tnr=ms.tnr,
                    ba=ms.ba,
                    f2=ms.f_beta,
                    wall_time=time.perf_counter() - t0,
                )
            )
        except Exception as exc:  # noqa: BLE001
            rows.append(
                BenchRow(
                    config_index=ci,
                    replicate=ri,
                    method=m,
                    error=str(exc),
                    wall_time=time.perf_counter() - t0,
                )
            )
    return rows


def run_monte_carlo(
    configs: list[SimConfig | dict],
    methods: list[str] | None = None,
    replicates: int = 10,
    master_seed: int = 0,
    workers: int = 1,
    s_min: float = DEFAULT_S_MIN,
) -> list[BenchRow]:
    """All methods on all configs, `replicates` fresh datasets each.

    Raw rows come back sorted by (config, replicate, method position);
    per-cell failures are recorded in their rows, not raised.
    """
    methods = list(methods) if methods is not None else list(ALL_METHODS)
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {ALL_METHODS}")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    cfg_dicts = []
    for c in configs:
        d = c.to_dict() if isinstance(c, SimConfig) else SimConfig.from_dict(c).to_dict()
        cfg_dicts.append(d)
    tasks = [
        (cfg_dicts[ci], ci, ri, master_seed, methods, s_min)
        for ci in range(len(cfg_dicts))
        for ri in range(replicates)
    ]
    if workers <= 1:
        per_cell = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_cell = list(pool.map(_run_cell, tasks))
    rows: list[BenchRow] = []
    for cell in per_cell:
        rows.extend(cell)
    return rows


@dataclass
class AggregateRow:
    config_index: int
    method: str
    replicates_ok: int
    tpr: float
    tnr: float
    ba: float
    f2: float
    tpr_sd: float
    tnr_sd: float
    ba_sd: float
    f2_sd: float


def aggregate(rows: list[BenchRow], methods: list[str]) -> list[AggregateRow]:
    """Mean metrics per (config, method) over the successful replicates."""
    out = []
    config_ids = sorted({r.config_index for r in rows})
    for ci in config_ids:
        for m in methods:
            ok = [
                r
                for r in rows
                if r.config_index == ci and r.method == m and not r.error
            ]
            if not ok:
                nan = float("nan")
                out.append(AggregateRow(ci, m, 0, nan, nan, nan, nan,
                                        nan, nan, nan, nan))
                continue
            cols = {
                name: np.array([getattr(r, name) for r in ok])
                for name in ("tpr", "tnr", "ba", "f2")
            }
            out.append(
                AggregateRow(
                    config_index=ci,
                    method=m,
                    replicates_ok=len(ok),
                    tpr=float(np.mean(cols["tpr"])),
                    tnr=float(np.mean(cols["tnr"])),
                    ba=float(np.mean(cols["ba"])),
                    f2=float(np.mean(cols["f2"])),
                    tpr_sd=float(np.std(cols["tpr"])),
                    tnr_sd=float(np.std(cols["tnr"])),
                    ba_sd=float(np.std(cols["ba"])),
                    f2_sd=float(np.std(cols["f2"])),
                )
            )
    return out


@dataclass
class RankRow:
    config_index: int
    method: str
    f2: float
    rank: int
    top3: bool


def rank_methods(agg: list[AggregateRow]) -> list[RankRow]:
    """Dense rank per config by descending mean F2; ties share the better
    rank, and the top three ranks are marked.
    """
    out = []
    config_ids = sorted({a.config_index for a in agg})
    for ci in config_ids:
        group = [a for a in agg if a.config_index == ci and not np.isnan(a.f2)]
        distinct = sorted({a.f2 for a in group}, reverse=True)
        rank_of = {v: i + 1 for i, v in enumerate(distinct)}
        for a in group:
            r = rank_of[a.f2]
            out.append(RankRow(ci, a.method, a.f2, r, r <= 3))
    return out


def _w(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_raw_csv(rows: list[BenchRow], path) -> None:
    cols = ["config_index", "replicate", "method", "tp", "fp", "tn", "fn",
            "tpr", "tnr", "ba", "f2", "error"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow(
                [r.config_index, r.replicate, r.method, r.tp, r.fp, r.tn, r.fn,
                 _w(r.tpr), _w(r.tnr), _w(r.ba), _w(r.f2), r.error]
            )


def write_timings_csv(rows: list[BenchRow], path) -> None:
    # Kept apart from the result files, which must be reproducible byte
    # for byte; wall clock readings are not.
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config_index", "replicate", "method", "wall_time"])
        for r in rows:
            writer.writerow([r.config_index, r.replicate, r.method, _w(r.wall_time)])


def write_aggregate_csv(agg: list[AggregateRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["config_index", "method", "replicates_ok", "tpr", "tnr", "ba",
             "f2", "tpr_sd", "tnr_sd", "ba_sd", "f2_sd"]
        )
        for a in agg:
            writer.writerow(
                [a.config_index, a.method, a.replicates_ok,
                 _w(a.tpr), _w(a.tnr), _w(a.ba), _w(a.f2),
                 _w(a.tpr_sd), _w(a.tnr_sd), _w(a.ba_sd), _w(a.f2_sd)]
            )


def write_results_json(
    rows: list[BenchRow], agg: list[AggregateRow], path
) -> None:
    """Raw and aggregate tables in one JSON document. Wall time is left
    out, like in the CSVs, so reruns produce the same bytes."""
    doc = {
        "raw": [
            {
                "config_index": r.config_index,
                "replicate": r.replicate,
                "method": r.method,
                "tp": r.tp, "fp": r.fp, "tn": r.tn, "fn": r.fn,
                "tpr": r.tpr, "tnr": r.tnr, "ba": r.ba, "f2": r.f2,
                "error": r.error,
            }
            for r in rows
        ],
        "aggregate": [asdict(a) for a in agg],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_ranking_csv(ranks: list[RankRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config_index", "method", "f2", "rank", "top3"])
        for r in ranks:
            writer.writerow([r.config_index, r.method, _w(r.f2), r.rank, int(r.top3)])
