import json

import numpy as np
import pytest

from reflect_sim.errors import ConfigurationError
from reflect_sim.harness import (StudyConfig, bound_validation_study, driver_paths, fit_loglog_slope,
                                 moment_growth_study, strong_error_study, write_plot)
from reflect_sim.paths import SampledPath, TimeGrid, brownian_batch, wong_zakai_interpolant

ORTHANT = {"variant": "Box", "lower": [0.0, 0.0], "upper": [None, None]}
FAR = {"variant": "Box", "lower": [-1e3, -1e3], "upper": [1e3, 1e3]}
DIAG = {"name": "diag_sin", "params": {"dim": 2, "amplitude": 0.5}}


def small(**kw):
    base = dict(domain=ORTHANT, coefficients=DIAG, x0=[0.1, 0.1], levels=[8, 16, 32, 64],
                reference_level=512, paths=200, substeps=4, seed=3)
    base.update(kw)
    return StudyConfig(**base)


# ---------------------------------------------------------------- slope fitting

def test_fit_exact_power_laws():
    d = 2.0 ** -np.arange(3, 9)
    s, _, r2 = fit_loglog_slope(d, 3 * d ** 2)
    assert s == pytest.approx(2, abs=1e-12) and r2 == pytest.approx(1, abs=1e-12)
    s, _, _ = fit_loglog_slope(d, 0.7 * d ** 0.5)
    assert s == pytest.approx(0.5, abs=1e-12)
    s, _, _ = fit_loglog_slope(d, d)
    assert s == pytest.approx(1.0, abs=1e-12)


def test_fit_noisy():
    rng = np.random.default_rng(12)
    d = 2.0 ** -np.arange(3, 9)
    s, _, _ = fit_loglog_slope(d, d * (1 + 0.01 * rng.standard_normal(d.size)))
    assert abs(s - 1) < 0.05


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_loglog_slope([0.1, 0.2, 0.0], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_loglog_slope([0.1, 0.2, 0.3], [1, -2, 3])
    with pytest.raises(ValueError):
        fit_loglog_slope([0.1, 0.2], [1, 2])


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ConfigurationError):
        small(reference_level=256)
    with pytest.raises(ConfigurationError):
        small(levels=[8, 24])
    with pytest.raises(ConfigurationError):
        small(paths=99)
    with pytest.raises(ConfigurationError):
        small(version=2)
    with pytest.raises(ConfigurationError):
        StudyConfig.from_dict(dict(small().to_dict(), typo=1))
    cfg = small(levels=[64, 8, 32])
    assert cfg.levels == [8, 32, 64]
    assert StudyConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_coupling_restriction():
    cfg = small()
    B = driver_paths(cfg, [0, 1], 2)
    fine = TimeGrid(cfg.T, cfg.reference_level)
    coarse = brownian_batch(2, TimeGrid(cfg.T, cfg.levels[0]), cfg.seed, [0, 1])
    assert np.array_equal(B[:, :: cfg.reference_level // cfg.levels[0]], coarse)
    for N in cfg.levels:
        r = cfg.reference_level // N
        interp = wong_zakai_interpolant(SampledPath(fine, B[0]), N)
        assert np.array_equal(interp.values[::r], B[0, ::r])


# ---------------------------------------------------------------- strong error

def test_no_reflection_constant_sigma_zero_error():
    cfg = small(domain=FAR, coefficients={"name": "constant", "params": {"sigma": [[1.0, 0.0], [0.0, 1.0]]}},
                x0=[0.0, 0.0], paths=100)
    rep = strong_error_study(cfg)
    for lv in rep.levels:
        assert lv["e_pt"] <= 1e-24 and lv["e_sup"] <= 1e-24


def test_small_orthant_study(tmp_path):
    rep = strong_error_study(small())
    assert rep.aborted == 0
    assert [lv["N"] for lv in rep.levels] == [8, 16, 32, 64]
    e = [lv["e_pt"] for lv in rep.levels]
    assert all(x > 0 for x in e)
    assert sum(a > b for a, b in zip(e, e[1:])) >= 2
    assert rep.pointwise_fit["slope"] > 0.45 and rep.sup_fit["slope"] > 0.17
    csv = rep.levels_csv().splitlines()
    assert csv[0] == "N,delta,e_pt,se_pt,e_sup,se_sup" and len(csv) == 5
    write_plot(rep, tmp_path / "plot.svg")
    assert (tmp_path / "plot.svg").read_text().lstrip().startswith("<?xml")


def test_two_levels_have_no_fit():
    rep = strong_error_study(small(levels=[32, 64]))
    assert rep.pointwise_fit is None and rep.sup_fit is None


def test_worker_invariance():
    cfg = small(paths=1100)
    a = json.dumps(strong_error_study(cfg, workers=1).to_dict(), sort_keys=True)
    b = json.dumps(strong_error_study(cfg, workers=3).to_dict(), sort_keys=True)
    assert a == b


# ---------------------------------------------------------------- bound validation

def test_bounds_no_contact():
    cfg = small(domain={"variant": "TruncatedDomain", "base": FAR, "center": [0.0, 0.0],
                        "radius": 500.0, "inner_radius": 400.0},
                coefficients={"name": "constant", "params": {"sigma": [[1.0, 0.0], [0.0, 1.0]]}},
                x0=[0.0, 0.0], paths=100, windows=5)
    rep = bound_validation_study(cfg)
    assert rep.windows_tested == 500 and rep.violations == 0 and rep.worst_ratio == 0.0
    assert all(r["local_time"] == 0.0 for r in rep.records)


def test_bounds_uncertified():
    with pytest.raises(ConfigurationError):
        bound_validation_study(small())
    with pytest.raises(ConfigurationError):
        bound_validation_study(small(domain={"variant": "BallComplement", "center": [0, 0], "radius": 1},
                                     x0=[1.5, 0.0], bound={"kind": "convex", "center": [2, 0],
                                                           "inner_radius": 0.5}))


def test_bounds_explicit_AB_on_box():
    cfg = small(domain={"variant": "Box", "lower": [0, 0], "upper": [1, 1]}, x0=[0.5, 0.5],
                bound={"kind": "AB", "beta": 2 ** 0.5, "delta": 0.5}, paths=100, windows=10)
    rep = bound_validation_study(cfg)
    assert rep.violations == 0 and 0 < rep.worst_ratio < 1


# ---------------------------------------------------------------- moments

def test_moments_free_brownian():
    cfg = small(domain=FAR, coefficients={"name": "constant", "params": {"sigma": [[1.0, 0.0], [0.0, 1.0]]}},
                x0=[0.0, 0.0], levels=[256], reference_level=2048, paths=1000, substeps=1)
    rep = moment_growth_study(cfg)
    assert abs(rep["increment_fit"]["slope"] - 1) < 0.05
    for w in rep["windows"]:
        assert w["increment_moment"] == pytest.approx(2 * w["width"], rel=0.1)
    assert rep["checks"]["increment_bound_from_largest_window"]
    assert rep["checks"]["local_time_slope_at_least_0.9"] is None


def test_moments_drift_only():
    cfg = small(domain=FAR, coefficients={"name": "constant",
                                          "params": {"sigma": [[0.0, 0.0], [0.0, 0.0]], "drift": [1.0, 2.0]}},
                x0=[0.0, 0.0], levels=[64], reference_level=512, paths=100, substeps=1)
    rep = moment_growth_study(cfg)
    assert rep["increment_fit"]["slope"] == pytest.approx(2.0, abs=1e-9)


def test_moments_reflected_orthant():
    rep = moment_growth_study(small(levels=[128], reference_level=1024, paths=400))
    assert rep["increment_fit"]["slope"] >= 0.9
    assert rep["checks"]["local_time_slope_at_least_0.9"]
