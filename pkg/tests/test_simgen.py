import numpy as np
import pytest

from ccdscore.errors import ConfigError
from ccdscore.simgen import (
    SimConfig,
    cluster_scale,
    gen_clusters,
    gen_neyman_scott,
    generate,
    masking_fixture,
    planned_outliers,
    with_seed,
)


def test_generate_is_deterministic():
    cfg = SimConfig(
        regime="uniform", d=3, n=150, seed=42, outlier_fraction=0.05, collective_group=4
    )
    a = generate(cfg)
    b = generate(cfg)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.labels, b.labels)
    c = generate(with_seed(cfg, 43))
    assert not np.array_equal(a.points, c.points)


def test_generate_budget_and_label_counts():
    cfg = SimConfig(
        regime="uniform", d=2, n=200, seed=1, outlier_fraction=0.05, collective_group=4
    )
    ps = generate(cfg)
    assert ps.n == 200
    assert planned_outliers(cfg) == 14
    assert int(ps.labels.sum()) == 14


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(regime="spiral", d=2, n=100)
    with pytest.raises(ConfigError):
        SimConfig(regime="uniform", d=0, n=100)
    with pytest.raises(ConfigError):
        SimConfig(regime="uniform", d=2, n=1)
    with pytest.raises(ConfigError):
        SimConfig(regime="gaussian", d=2, n=100, correlation=1.0)
    with pytest.raises(ConfigError):
        SimConfig(regime="uniform", d=2, n=100, outlier_fraction=0.6)
    with pytest.raises(ConfigError):
        SimConfig(regime="uniform", d=2, n=100, outlier_fraction=0.001)


def test_config_from_dict_rejects_unknown_and_missing_keys():
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"regime": "uniform", "d": 2, "n": 50, "sigma": 1.0})
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"regime": "uniform", "d": 2})
    cfg = SimConfig.from_dict({"regime": "thomas", "d": 3, "n": 80, "seed": 7})
    assert cfg.seed == 7


def test_uniform_cluster_stays_inside_its_ball():
    cfg = SimConfig(
        regime="uniform", d=2, n=1000, seed=5, n_clusters=1, cluster_radius=1.0
    )
    ps = gen_clusters(cfg)
    center = ps.points.mean(axis=0)
    dists = np.linalg.norm(ps.points - center, axis=1)
    assert dists.max() <= 1.0 + 0.05
    assert (dists <= 1.0).mean() >= 0.99


def test_gaussian_cluster_has_requested_correlation():
    cfg = SimConfig(
        regime="gaussian", d=2, n=5000, seed=8, n_clusters=1, correlation=0.5
    )
    ps = gen_clusters(cfg)
    r = np.corrcoef(ps.points[:, 0], ps.points[:, 1])[0, 1]
    assert 0.45 <= r <= 0.55


def test_matern_offspring_stay_within_parent_radius():
    cfg = SimConfig(
        regime="matern", d=2, n=2000, seed=11, parent_intensity=15, cluster_radius=0.08
    )
    ps, parents, kinds, counts = gen_neyman_scott(cfg, return_parts=True)
    assert np.all(kinds == 0)
    gaps = np.min(
        np.linalg.norm(ps.points[:, None, :] - parents[None, :, :], axis=2), axis=1
    )
    assert gaps.max() <= 0.08 + 1e-12


def test_thomas_offspring_concentrate_near_parents():
    cfg = SimConfig(
        regime="thomas", d=2, n=4000, seed=13, parent_intensity=20, gaussian_scale=0.03
    )
    ps, parents, kinds, counts = gen_neyman_scott(cfg, return_parts=True)
    assert np.all(kinds == 1)
    gaps = np.min(
        np.linalg.norm(ps.points[:, None, :] - parents[None, :, :], axis=2), axis=1
    )
    assert (gaps <= 3 * 0.03).mean() >= 0.97


def test_mixed_regime_splits_parent_kinds_evenly():
    cfg = SimConfig(regime="mixed", d=2, n=20000, seed=3, parent_intensity=10000)
    _, parents, kinds, _ = gen_neyman_scott(cfg, return_parts=True)
    assert 0.47 <= kinds.mean() <= 0.53


def test_solitary_outliers_respect_min_separation():
    cfg = SimConfig(
        regime="uniform", d=2, n=200, seed=17, outlier_fraction=0.05,
        outlier_min_separation=2.0,
    )
    ps = generate(cfg)
    out = ps.points[ps.labels == 1]
    inl = ps.points[ps.labels == 0]
    assert len(out) == 10
    sep = 2.0 * cluster_scale(cfg)
    for o in out:
        assert np.min(np.linalg.norm(inl - o, axis=1)) >= sep


def test_collective_group_is_tight_and_far():
    cfg = SimConfig(
        regime="gaussian", d=2, n=150, seed=19, collective_group=4
    )
    ps = generate(cfg)
    grp = ps.points[ps.labels == 1]
    inl = ps.points[ps.labels == 0]
    assert len(grp) == 4
    diam = max(
        np.linalg.norm(a - b) for i, a in enumerate(grp) for b in grp[i + 1 :]
    )
    nearest = min(np.min(np.linalg.norm(inl - g, axis=1)) for g in grp)
    assert diam < nearest


def test_zero_fraction_means_no_outliers():
    cfg = SimConfig(regime="uniform", d=2, n=120, seed=23)
    ps = generate(cfg)
    assert ps.n == 120
    assert int(ps.labels.sum()) == 0
    assert np.array_equal(ps.points, gen_clusters(cfg).points)


def test_fixture_shape_and_roles():
    fx = masking_fixture()
    assert fx.ps.n == 199
    assert fx.ps.d == 2
    assert int(fx.ps.labels.sum()) == 9
    assert len(fx.roles) == 199
    assert fx.ids_of("c1").size == 60
    assert fx.ids_of("c2").size == 80
    assert fx.ids_of("c3").size == 50
    for r in ("o1", "o2", "o3", "o4", "o5", "o6", "o7", "o8", "o9"):
        assert fx.ids_of(r).size == 1
    assert np.all(fx.ps.labels[fx.ids_of("o1")[0] :] == 1)


def test_fixture_axis_pair_equidistant_but_not_in_mahalanobis():
    fx = masking_fixture()
    p7 = fx.ps.points[fx.ids_of("o7")[0]]
    p8 = fx.ps.points[fx.ids_of("o8")[0]]
    d7 = np.linalg.norm(p7 - fx.gaussian_center)
    d8 = np.linalg.norm(p8 - fx.gaussian_center)
    assert abs(d7 - d8) <= 1e-9
    inv = np.linalg.inv(fx.gaussian_cov)
    m7 = (p7 - fx.gaussian_center) @ inv @ (p7 - fx.gaussian_center)
    m8 = (p8 - fx.gaussian_center) @ inv @ (p8 - fx.gaussian_center)
    # the off-axis single is farther once the covariance is accounted for
    assert m7 > m8


def test_fixture_collective_group_is_tight():
    fx = masking_fixture()
    ids = [fx.ids_of(r)[0] for r in ("o1", "o2", "o3", "o4")]
    grp = fx.ps.points[ids]
    diam = max(
        np.linalg.norm(a - b) for i, a in enumerate(grp) for b in grp[i + 1 :]
    )
    assert diam <= 2 * 0.012 + 1e-12
    rest = np.delete(fx.ps.points, ids, axis=0)
    assert min(np.min(np.linalg.norm(rest - g, axis=1)) for g in grp) > 4 * diam


def test_fixture_deterministic_per_seed():
    a = masking_fixture()
    b = masking_fixture()
    assert np.array_equal(a.ps.points, b.ps.points)
    c = masking_fixture(seed=1)
    assert not np.array_equal(a.ps.points, c.ps.points)
