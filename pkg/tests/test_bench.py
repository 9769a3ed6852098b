import numpy as np
import pytest

from ccdscore.bench import (
    AggregateRow,
    Confusion,
    aggregate,
    metrics,
    rank_methods,
    run_monte_carlo,
    write_aggregate_csv,
    write_raw_csv,
    write_results_json,
    write_timings_csv,
)
from ccdscore.errors import ConfigError, DegenerateLabelsError

CFG_A = {"regime": "uniform", "d": 2, "n": 80, "outlier_fraction": 0.05}
CFG_B = {"regime": "gaussian", "d": 2, "n": 70, "outlier_fraction": 0.05}


def test_metrics_worked_confusion():
    ms = metrics(Confusion(tp=8, fp=5, tn=85, fn=2))
    assert ms.tpr == pytest.approx(0.8)
    assert ms.tnr == pytest.approx(85 / 90)
    assert ms.ba == pytest.approx((0.8 + 85 / 90) / 2)
    assert ms.f_beta == pytest.approx(0.7547169811320755, abs=1e-5)


def test_confusion_from_flags():
    labels = np.array([1, 1, 0, 0, 0, 1])
    flags = np.array([True, False, True, False, False, True])
    c = Confusion.from_flags(labels, flags)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 2, 1)


def test_metrics_match_formulas_on_random_confusions():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 40, size=4))
        if tp + fn == 0 or tn + fp == 0:
            continue
        ms = metrics(Confusion(tp=tp, fp=fp, tn=tn, fn=fn))
        tpr = tp / (tp + fn)
        tnr = tn / (tn + fp)
        assert ms.ba == pytest.approx((tpr + tnr) / 2, abs=1e-15)
        p = tp / (tp + fp) if tp + fp else 0.0
        want = 5 * p * tpr / (4 * p + tpr) if p * tpr > 0 else 0.0
        assert ms.f_beta == pytest.approx(want, abs=1e-15)


def test_metrics_zero_flag_guards():
    ms = metrics(Confusion(tp=0, fp=0, tn=90, fn=10))
    assert ms.f_beta == 0.0 and ms.tpr == 0.0
    ms = metrics(Confusion(tp=0, fp=5, tn=85, fn=10))
    assert ms.f_beta == 0.0


def test_degenerate_labels_raise():
    with pytest.raises(DegenerateLabelsError):
        metrics(Confusion(tp=0, fp=3, tn=7, fn=0))
    with pytest.raises(DegenerateLabelsError):
        Confusion.from_flags(np.zeros(5), np.zeros(5, dtype=bool))
    with pytest.raises(DegenerateLabelsError):
        Confusion.from_flags(np.ones(5), np.zeros(5, dtype=bool))


def test_monte_carlo_row_counts_and_order():
    methods = ["oos-fixed", "ios-fixed", "odin"]
    rows = run_monte_carlo([CFG_A, CFG_B], methods, replicates=3, master_seed=7)
    assert len(rows) == 2 * 3 * 3
    keys = [(r.config_index, r.replicate, methods.index(r.method)) for r in rows]
    assert keys == sorted(keys)
    assert all(not r.error for r in rows)


def test_aggregate_means_and_spreads():
    methods = ["oos-fixed", "odin"]
    rows = run_monte_carlo([CFG_A], methods, replicates=4, master_seed=1)
    agg = aggregate(rows, methods)
    assert len(agg) == 2
    for a in agg:
        sub = [r for r in rows if r.method == a.method]
        assert a.replicates_ok == 4
        assert a.f2 == pytest.approx(np.mean([r.f2 for r in sub]), abs=1e-12)
        assert a.f2_sd == pytest.approx(np.std([r.f2 for r in sub]), abs=1e-12)
        assert a.ba == pytest.approx(np.mean([r.ba for r in sub]), abs=1e-12)


def test_replicate_data_independent_of_method_list():
    wide = run_monte_carlo([CFG_A], ["oos-fixed", "lof", "odin"], replicates=2,
                           master_seed=5)
    narrow = run_monte_carlo([CFG_A], ["odin"], replicates=2, master_seed=5)
    pick = lambda rows: [
        (r.replicate, r.tp, r.fp, r.tn, r.fn) for r in rows if r.method == "odin"
    ]
    assert pick(wide) == pick(narrow)
    other = run_monte_carlo([CFG_A], ["odin"], replicates=2, master_seed=6)
    assert pick(other) != pick(narrow)


def test_worker_pool_matches_inline():
    methods = ["ios-fixed", "odin"]
    a = run_monte_carlo([CFG_A, CFG_B], methods, replicates=2, master_seed=3)
    b = run_monte_carlo([CFG_A, CFG_B], methods, replicates=2, master_seed=3,
                        workers=2)
    strip = lambda rows: [
        (r.config_index, r.replicate, r.method, r.tp, r.fp, r.tn, r.fn, r.error)
        for r in rows
    ]
    assert strip(a) == strip(b)


def test_monte_carlo_validation():
    with pytest.raises(ConfigError):
        run_monte_carlo([CFG_A], ["knn-mean"], replicates=2)
    with pytest.raises(ConfigError):
        run_monte_carlo([CFG_A], ["odin"], replicates=0)


def test_failed_cell_is_recorded_not_raised():
    # lof needs n > 30; n=25 makes every lof row an error row
    cfg = {"regime": "uniform", "d": 2, "n": 25, "outlier_fraction": 0.08}
    rows = run_monte_carlo([cfg], ["lof", "odin"], replicates=2, master_seed=2)
    lof_rows = [r for r in rows if r.method == "lof"]
    assert all(r.error for r in lof_rows)
    assert all(not r.error for r in rows if r.method == "odin")
    agg = aggregate(rows, ["lof", "odin"])
    lof_agg = next(a for a in agg if a.method == "lof")
    assert lof_agg.replicates_ok == 0
    assert np.isnan(lof_agg.f2)


def test_rank_dense_with_ties():
    agg = [
        AggregateRow(0, "a", 3, 0, 0, 0, 0.9, 0, 0, 0, 0),
        AggregateRow(0, "b", 3, 0, 0, 0, 0.7, 0, 0, 0, 0),
        AggregateRow(0, "c", 3, 0, 0, 0, 0.9, 0, 0, 0, 0),
    ]
    got = {r.method: r.rank for r in rank_methods(agg)}
    assert got == {"a": 1, "b": 2, "c": 1}


def test_rank_orders_descending_and_marks_top3():
    agg = [
        AggregateRow(0, m, 3, 0, 0, 0, f2, 0, 0, 0, 0)
        for m, f2 in [("a", 0.5), ("b", 0.6), ("c", 0.2), ("d", 0.1), ("e", 0.05)]
    ]
    rows = rank_methods(agg)
    by = {r.method: r for r in rows}
    assert by["b"].rank == 1 and by["a"].rank == 2 and by["c"].rank == 3
    assert by["b"].top3 and by["c"].top3 and not by["d"].top3
    allsame = [AggregateRow(0, m, 3, 0, 0, 0, 0.4, 0, 0, 0, 0) for m in "abc"]
    assert {r.rank for r in rank_methods(allsame)} == {1}


def test_rank_skips_all_failed_methods():
    agg = [
        AggregateRow(0, "a", 3, 0, 0, 0, 0.8, 0, 0, 0, 0),
        AggregateRow(0, "b", 0, *([float("nan")] * 8)),
    ]
    rows = rank_methods(agg)
    assert [r.method for r in rows] == ["a"]


def test_writers_are_deterministic(tmp_path):
    methods = ["oos-fixed", "odin"]
    rows = run_monte_carlo([CFG_A], methods, replicates=2, master_seed=9)
    agg = aggregate(rows, methods)
    ranks = rank_methods(agg)
    for name, writer, arg in [
        ("raw.csv", write_raw_csv, rows),
        ("agg.csv", write_aggregate_csv, agg),
        ("timings.csv", write_timings_csv, rows),
    ]:
        p1, p2 = tmp_path / name, tmp_path / ("b_" + name)
        writer(arg, p1)
        writer(arg, p2)
        if name == "timings.csv":
            continue  # wall clock is the one column allowed to move
        assert p1.read_bytes() == p2.read_bytes()
    from ccdscore.bench import write_ranking_csv

    write_ranking_csv(ranks, tmp_path / "rank.csv")
    head = (tmp_path / "rank.csv").read_text().splitlines()[0]
    assert head == "config_index,method,f2,rank,top3"
    raw_head = (tmp_path / "raw.csv").read_text().splitlines()[0]
    assert "wall_time" not in raw_head
    assert "wall_time" in (tmp_path / "timings.csv").read_text().splitlines()[0]


def test_results_json_layout(tmp_path):
    methods = ["ios-fixed"]
    rows = run_monte_carlo([CFG_A], methods, replicates=2, master_seed=4)
    agg = aggregate(rows, methods)
    path = tmp_path / "results.json"
    write_results_json(rows, agg, path)
    import json

    got = json.loads(path.read_text())
    assert set(got) == {"raw", "aggregate"}
    assert len(got["raw"]) == 2 and len(got["aggregate"]) == 1
    assert got["aggregate"][0]["method"] == "ios-fixed"
    assert "wall_time" not in got["raw"][0]
    write_results_json(rows, agg, tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()
