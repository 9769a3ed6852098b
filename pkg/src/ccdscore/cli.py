"""Command line entry point: generate data, score files, run the bench,
and evaluate flag files against labeled data.

Exit codes: 0 success, 2 bad configuration or usage, 3 unreadable or
invalid data, 4 bench finished with no successful cell.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .bench import (
    ALL_METHODS,
    DEFAULT_S_MIN,
    Confusion,
    aggregate,
    metrics,
    rank_methods,
    run_monte_carlo,
    write_aggregate_csv,
    write_ranking_csv,
    write_raw_csv,
    write_results_json,
    write_timings_csv,
)
from .baselines import lof, odin
from .dataset import build_index, column_robust_stats, load_csv, robust_normalize, write_csv
from .errors import (
    CcdScoreError,
    ConfigError,
    BadKError,
    DegenerateLabelsError,
)
from .graph import fixed_k, rk_approx, un_approx
from .scores import REPORT_COLUMNS, score_point_set
from .simgen import SimConfig, generate, masking_fixture

_STRATEGIES = {"fixed-k": fixed_k, "rk-approx": rk_approx, "un-approx": un_approx}


def _manifest(path, command: str, params: dict) -> None:
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "params": params,
        "versions": {
            "ccdscore": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")


def _label_column(value: str | None):
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        return value


def _out_prefix(out: str) -> str:
    """Output arguments name a prefix; a trailing .csv is forgiven."""
    return out[:-4] if out.endswith(".csv") else out


def cmd_gen(args) -> int:
    raw = {
        "regime": args.regime,
        "d": args.d,
        "n": args.n,
        "seed": args.seed,
        "n_clusters": args.n_clusters,
        "parent_intensity": args.parent_intensity,
        "cluster_radius": args.cluster_radius,
        "gaussian_scale": args.gaussian_scale,
        "correlation": args.correlation,
        "outlier_fraction": args.outlier_fraction,
        "outlier_min_separation": args.min_separation,
        "collective_group": args.collective,
    }
    cfg = SimConfig.from_dict(raw)
    ps = generate(cfg)
    out = _out_prefix(args.out)
    write_csv(ps, f"{out}.csv")
    with open(f"{out}.config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
        fh.write("\n")
    _manifest(f"{out}.manifest.json", "gen", cfg.to_dict())
    print(f"wrote {ps.n} points ({int(ps.labels.sum())} outliers) to {out}.csv")
    return 0


def cmd_fixture(args) -> int:
    fx = masking_fixture(seed=args.seed)
    out = _out_prefix(args.out)
    write_csv(fx.ps, f"{out}.csv")
    with open(f"{out}.roles.json", "w", encoding="utf-8") as fh:
        json.dump({"roles": fx.roles, "threshold_shape": fx.threshold_shape}, fh)
        fh.write("\n")
    _manifest(f"{out}.manifest.json", "fixture", {"seed": args.seed})
    print(f"wrote fixture ({fx.ps.n} points, 9 outliers) to {out}.csv")
    return 0


def _write_baseline_report(path, scores, flags, ranks) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for i in range(len(scores)):
            writer.writerow(
                [i, "", "", "", "", "", "", "", "", "",
                 repr(float(scores[i])), int(flags[i]), int(ranks[i])]
            )


def _sniff_label_column(path: str) -> str | None:
    """Peek at the header row and report a literal "label" column, so
    scoring a generated file does not treat the labels as a coordinate."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            first = next(csv.reader(fh), None)
    except OSError:
        return None
    if first and "label" in [c.strip() for c in first]:
        return "label"
    return None


def cmd_score(args) -> int:
    label_column = _label_column(args.label_column)
    if label_column is None and not args.no_header:
        label_column = _sniff_label_column(args.input)
    ps = load_csv(
        args.input,
        has_header=not args.no_header,
        label_column=label_column,
    )
    norm_report = None
    if not args.no_normalize:
        med, madn_col, fallback = column_robust_stats(ps.points)
        norm_report = {
            "median": med.tolist(),
            "madn": madn_col.tolist(),
            "centered_only": np.flatnonzero(fallback).tolist(),
        }
        ps = robust_normalize(ps)

    params = {
        "input": args.input,
        "method": args.method,
        "normalize": not args.no_normalize,
        "normalization": norm_report,
    }
    if args.method in ("oos", "ios"):
        strategy = _STRATEGIES[args.digraph](k=args.k)
        report = score_point_set(
            ps,
            strategy,
            backend=args.backend,
            density_mode=args.density_mode,
            cluster_shape=args.shape,
            oos_threshold=args.threshold,
            ios_threshold=args.threshold,
            s_min=args.s_min,
        )
        out = _out_prefix(args.out)
        report.write_csv(f"{out}.scores.csv", method=args.method)
        report.write_json(f"{out}.scores.json", method=args.method)
        params.update(report.params)
        params["thresholds"] = {
            "oos": report.oos_threshold,
            "ios": report.ios_threshold,
        }
        params["s_min"] = args.s_min
        n_flagged = int(report.flags_for(args.method).sum())
        if args.plot_data:
            _write_plot_data(out, report)
    else:
        idx = build_index(ps, backend=args.backend)
        if args.method == "lof":
            scores, flags = lof(ps, idx)
            order = np.lexsort((np.arange(ps.n), -scores))
        else:
            scores, flags = odin(ps, idx)
            order = np.lexsort((np.arange(ps.n), scores))
        ranks = np.empty(ps.n, dtype=np.int64)
        ranks[order] = np.arange(1, ps.n + 1)
        out = _out_prefix(args.out)
        _write_baseline_report(f"{out}.scores.csv", scores, flags, ranks)
        with open(f"{out}.scores.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "n": ps.n,
                    "method": args.method,
                    "points": {
                        "score": scores.tolist(),
                        "flag": flags.astype(int).tolist(),
                        "rank": ranks.tolist(),
                    },
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        n_flagged = int(flags.sum())
    _manifest(f"{out}.manifest.json", "score", params)
    print(f"scored {ps.n} points with {args.method}; {n_flagged} flagged")
    return 0


def _write_plot_data(prefix: str, report) -> None:
    with open(f"{prefix}.hist.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score_kind", "bin_lo", "bin_hi", "count"])
        for kind, vals in (("oos", report.oos), ("ios_std", report.ios_std)):
            finite = vals[np.isfinite(vals)]
            if finite.size == 0:
                continue
            counts, edges = np.histogram(finite, bins=30)
            for b in range(counts.size):
                writer.writerow(
                    [kind, repr(float(edges[b])), repr(float(edges[b + 1])),
                     int(counts[b])]
                )
    with open(f"{prefix}.clusters.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster", "size", "median_ios_raw", "n_oos_flagged",
                         "n_ios_flagged"])
        for cid in np.unique(report.cluster_of):
            mem = report.cluster_of == cid
            writer.writerow(
                [int(cid), int(mem.sum()),
                 repr(float(np.median(report.ios_raw[mem]))),
                 int(report.oos_flag[mem].sum()), int(report.ios_flag[mem].sum())]
            )


def cmd_bench(args) -> int:
    try:
        with open(args.grid, "r", encoding="utf-8") as fh:
            grid = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open grid file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid file is not valid JSON: {exc}") from exc
    if "configs" not in grid or not isinstance(grid["configs"], list):
        raise ConfigError('grid file needs a "configs" list')
    configs = [SimConfig.from_dict(c) for c in grid["configs"]]
    methods = args.methods.split(",") if args.methods else grid.get("methods")
    replicates = args.replicates or int(grid.get("replicates", 10))
    s_min = args.s_min if args.s_min is not None else float(
        grid.get("s_min", DEFAULT_S_MIN)
    )
    rows = run_monte_carlo(
        configs,
        methods=methods,
        replicates=replicates,
        master_seed=args.seed,
        workers=args.workers,
        s_min=s_min,
    )
    import os

    os.makedirs(args.out, exist_ok=True)
    used_methods = methods if methods else list(ALL_METHODS)
    agg = aggregate(rows, used_methods)
    write_raw_csv(rows, os.path.join(args.out, "raw.csv"))
    write_aggregate_csv(agg, os.path.join(args.out, "aggregate.csv"))
    write_ranking_csv(rank_methods(agg), os.path.join(args.out, "ranking.csv"))
    write_timings_csv(rows, os.path.join(args.out, "timings.csv"))
    write_results_json(rows, agg, os.path.join(args.out, "results.json"))
    _manifest(
        os.path.join(args.out, "manifest.json"),
        "bench",
        {
            "grid": args.grid,
            "configs": [c.to_dict() for c in configs],
            "methods": used_methods,
            "replicates": replicates,
            "master_seed": args.seed,
            "workers": args.workers,
            "s_min": s_min,
        },
    )
    n_ok = sum(1 for r in rows if not r.error)
    print(f"bench wrote {len(rows)} rows to {args.out} ({n_ok} successful)")
    if n_ok == 0:
        return 4
    return 0


def cmd_eval(args) -> int:
    ps = load_csv(
        args.data,
        has_header=not args.no_header,
        label_column=_label_column(args.label_column),
    )
    if ps.labels is None:
        raise ConfigError("eval needs a labeled dataset; pass --label-column")
    out_rows = []
    for report_path in args.reports:
        try:
            with open(report_path, "r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or "flag" not in reader.fieldnames:
                    raise ConfigError(f"{report_path} has no 'flag' column")
                flags = np.asarray([int(row["flag"]) for row in reader], dtype=bool)
        except OSError as exc:
            raise ConfigError(f"cannot open report: {exc}") from exc
        if flags.shape[0] != ps.n:
            raise ConfigError(
                f"{report_path} has {flags.shape[0]} rows for {ps.n} points"
            )
        conf = Confusion.from_flags(ps.labels, flags)
        ms = metrics(conf, beta=args.beta)
        out_rows.append((report_path, conf, ms))
    out = _out_prefix(args.out)
    with open(f"{out}.metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["report", "tp", "fp", "tn", "fn", "tpr", "tnr", "ba",
                         f"f{args.beta:g}"])
        for path, conf, ms in out_rows:
            writer.writerow(
                [path, conf.tp, conf.fp, conf.tn, conf.fn,
                 repr(ms.tpr), repr(ms.tnr), repr(ms.ba), repr(ms.f_beta)]
            )
    for path, conf, ms in out_rows:
        print(
            f"{path}: tpr={ms.tpr:.4f} tnr={ms.tnr:.4f} "
            f"ba={ms.ba:.4f} f{args.beta:g}={ms.f_beta:.4f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccdscore",
        description="Outlier scoring on cluster catch digraphs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic labeled dataset")
    g.add_argument("--regime", required=True,
                   choices=["uniform", "gaussian", "matern", "thomas", "mixed"])
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-clusters", type=int, default=3)
    g.add_argument("--parent-intensity", type=float, default=5.0)
    g.add_argument("--cluster-radius", type=float, default=0.15)
    g.add_argument("--gaussian-scale", type=float, default=0.06)
    g.add_argument("--correlation", type=float, default=0.0)
    g.add_argument("--outlier-fraction", type=float, default=0.0)
    g.add_argument("--min-separation", type=float, default=2.0)
    g.add_argument("--collective", type=int, default=0)
    g.add_argument("--out", required=True, help="output path prefix")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fixture", help="write the fixed 2-d masking scenario")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", required=True, help="output path prefix")
    f.set_defaults(func=cmd_fixture)

    s = sub.add_parser("score", help="score a CSV of points")
    s.add_argument("--input", required=True)
    s.add_argument("--no-header", action="store_true")
    s.add_argument("--label-column", default=None,
                   help="name or 0-based index of a label column to set aside")
    s.add_argument("--method", default="ios", choices=["oos", "ios", "lof", "odin"])
    s.add_argument("--digraph", default="fixed-k", choices=sorted(_STRATEGIES))
    s.add_argument("--shape", default="uniform",
                   choices=["uniform", "gaussian", "mixed"],
                   help="cluster shape assumption for threshold lookup")
    s.add_argument("--threshold", type=float, default=None,
                   help="override the tabulated threshold")
    s.add_argument("--s-min", type=float, default=DEFAULT_S_MIN,
                   help="small-cluster fraction filter for ios (0 disables)")
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--density-mode", default="ratio-root",
                   choices=["ratio-root", "count-over-rd"])
    s.add_argument("--backend", default="kdtree", choices=["kdtree", "brute"])
    s.add_argument("--no-normalize", action="store_true")
    s.add_argument("--plot-data", action="store_true",
                   help="also write histogram and per-cluster CSVs")
    s.add_argument("--out", required=True, help="output path prefix")
    s.set_defaults(func=cmd_score)

    b = sub.add_parser("bench", help="run the Monte Carlo comparison")
    b.add_argument("--grid", required=True, help="JSON file with a configs list")
    b.add_argument("--replicates", type=int, default=None)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--methods", default=None,
                   help=f"comma-separated subset of {','.join(ALL_METHODS)}")
    b.add_argument("--s-min", type=float, default=None)
    b.add_argument("--out", required=True, help="output directory")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("eval", help="score flag files against labeled data")
    e.add_argument("--data", required=True)
    e.add_argument("--no-header", action="store_true")
    e.add_argument("--label-column", default="label")
    e.add_argument("--beta", type=float, default=2.0)
    e.add_argument("--out", required=True, help="output path prefix")
    e.add_argument("reports", nargs="+", help="score-report CSVs with a flag column")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, BadKError) as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CcdScoreError as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
