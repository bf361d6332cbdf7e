import math

import numpy as np
import pytest
from scipy import integrate

from ogttsde.girsanov import (
    autonomous_drift,
    b1_increments,
    cross_variation,
    girsanov_integrand,
    girsanov_log_density,
    log_density_paths,
    martingale_check,
    quadratic_variation,
    reweighted_expectation,
    shifted_increments,
    terminal_log_density,
)
from ogttsde.model import ZERO_PROTOCOL, MealProtocol, ModelError, drift, ogtt_rate
from ogttsde.simulate import SimulationConfig, simulate_path


def full_path(theta, protocol, y0, cfg, index=0):
    rec = simulate_path(cfg, theta, protocol, y0, path_index=index)
    return rec, b1_increments(cfg.seed, index, cfg.n_steps, cfg.dt)


def test_no_meal_gives_unit_density(theta, y0):
    cfg = SimulationConfig(0.0, 20.0, 0.1, seed=1)
    rec, dB = full_path(theta, ZERO_PROTOCOL, y0, cfg)
    dp = girsanov_log_density(rec, dB, theta, ZERO_PROTOCOL)
    assert np.all(dp.log_density == 0.0)
    assert dp.terminal_density == 1.0


def test_single_step_formula(theta):
    p = MealProtocol(values=(200.0, 250.0, 180.0, 0.0))
    G = np.array([100.0, 104.0])
    dB, dt = np.array([0.03]), 0.1
    log_D, flagged = log_density_paths(np.array([0.0, dt]), G, dB, theta, p)
    c = ogtt_rate(0.0, p) / (theta.alpha1 * 100.0)
    assert log_D[0] == 0.0
    assert log_D[1] == pytest.approx(c * 0.03 - 0.5 * c * c * dt, rel=1e-15)
    assert flagged == 0


def test_density_process_shape_and_positivity(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 120.0, 0.1, seed=2)
    rec, dB = full_path(theta, protocol, y0, cfg, index=5)
    dp = girsanov_log_density(rec, dB, theta, protocol)
    assert dp.log_density[0] == 0.0 and np.all(np.isfinite(dp.log_density))
    assert dp.terminal_density == math.exp(dp.log_density[-1]) > 0


def test_errors(theta, protocol):
    t = np.array([0.0, 0.1, 0.2])
    with pytest.raises(ModelError):
        girsanov_integrand(t, np.array([1.0, 1.0, 1.0]), theta.replace(alpha1=0.0), protocol)
    with pytest.raises(ModelError):
        girsanov_integrand(t, np.array([1.0, 0.0, 1.0]), theta, protocol)
    with pytest.raises(ValueError):
        log_density_paths(t, np.ones(3), np.zeros(5), theta, protocol)


def test_novikov_guard_flags_large_integrand(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 60.0, 0.1, seed=3)
    rec, dB = full_path(theta, protocol, y0, cfg)
    dp = girsanov_log_density(rec, dB, theta, protocol, threshold=0.1)
    assert dp.flagged_steps > 0
    assert girsanov_log_density(rec, dB, theta, protocol).flagged_steps == 0


def test_increments_match_the_simulator(theta, protocol, y0):
    # B1 increments re-derived from the stream reproduce the first Euler step
    cfg = SimulationConfig(0.0, 0.1, 0.1, "euler", seed=9)
    rec, dB = full_path(theta, protocol, y0, cfg, index=2)
    f = drift(0.0, y0, theta, protocol)
    assert rec.states[1, 0] == pytest.approx(y0[0] + f[0] * 0.1 + theta.alpha1 * y0[0] * dB[0],
                                             rel=1e-14)


def test_quadratic_variation_examples(theta, protocol, y0):
    assert quadratic_variation(np.zeros(50)) == 0.0
    with pytest.raises(ValueError):
        quadratic_variation([])
    dt = 1e-4
    cfg = SimulationConfig(30.0, 31.0, dt, "log_euler", seed=4)
    rec, dB = full_path(theta, protocol, y0, cfg)
    assert abs(quadratic_variation(dB, dt) - 1.0) < 0.05
    shifted = shifted_increments(rec.times, rec.states[:, 0], dB, theta, protocol)
    assert not np.allclose(shifted, dB)
    assert abs(quadratic_variation(shifted, dt) - 1.0) < 0.05


def test_cross_variation_recovers_meal_integral(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 120.0, 0.01, seed=5)
    vals = []
    for p in range(4):
        rec, dB = full_path(theta, protocol, y0, cfg, index=p)
        vals.append(cross_variation(rec.times, rec.states[:, 0], dB, theta, protocol))
    t = np.linspace(0, 120, 120_001)
    exact = integrate.trapezoid(ogtt_rate(t, protocol), t)
    assert abs(np.mean(vals) / exact - 1) < 0.05


def test_autonomous_drift(theta, protocol, y0):
    for t in (-5.0, 10.0, 45.0, 119.0, 150.0):
        auto = autonomous_drift(t, y0, theta)
        np.testing.assert_array_equal(auto, drift(t, y0, theta, ZERO_PROTOCOL))
        diff = drift(t, y0, theta, protocol) - auto
        np.testing.assert_allclose(diff, [ogtt_rate(t, protocol), 0, 0, 0, 0], atol=1e-12)
    assert np.all(drift(150.0, y0, theta, protocol) == autonomous_drift(150.0, y0, theta))


def test_martingale_mean_small_run(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 120.0, 0.1, seed=77, n_paths=2000, record_stride=1200)
    out = martingale_check(theta, protocol, y0, cfg)
    assert out["n_paths"] == 2000 and out["flagged_steps"] == 0
    assert abs(out["mean_D_T"] - 1) < 3 * out["se_D_T"]


def test_online_density_matches_path_density(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 60.0, 0.1, seed=8, n_paths=3)
    log_D, _ = terminal_log_density(theta, protocol, y0, cfg)
    for p in range(3):
        rec, dB = full_path(theta, protocol, y0, cfg, index=p)
        dp = girsanov_log_density(rec, dB, theta, protocol)
        assert log_D[p] == pytest.approx(dp.log_density[-1], rel=1e-12, abs=1e-14)


def test_zero_meal_martingale_is_exact(theta, y0):
    cfg = SimulationConfig(0.0, 10.0, 0.1, seed=1, n_paths=50)
    out = martingale_check(theta, ZERO_PROTOCOL, y0, cfg)
    assert out["mean_D_T"] == 1.0 and out["se_D_T"] == 0.0


def test_reweighting_autonomous_paths(theta, protocol, y0):
    # mid-meal horizon, where the meal still shifts the glucose law
    cfg = SimulationConfig(0.0, 45.0, 0.1, seed=12, n_paths=4000)
    out = reweighted_expectation(theta, protocol, y0, cfg, lambda Y: np.tanh(Y[:, 0] / 100.0))
    band = 3 * math.hypot(out["reweighted_se"], out["direct_se"])
    assert abs(out["reweighted_mean"] - out["direct_mean"]) < band
    # without the weights the meal-free law is clearly different
    assert abs(out["unweighted_mean"] - out["direct_mean"]) > 5 * out["direct_se"]
