import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from ogttsde.model import ZERO_PROTOCOL, drift
from ogttsde.noise import NoiseStream
from ogttsde.simulate import (
    BLOCK_SIZE,
    EnsembleError,
    LinearSDE,
    OGTTSystem,
    PathAbortError,
    SimulationConfig,
    exact_gbm_path,
    integrate,
    simulate_ensemble,
    simulate_path,
    step_euler,
    step_log_euler,
)


def gbm(mu, s):
    return LinearSDE(0.0, mu, s)


# ------------------------------------------------------------- single steps

def test_euler_identity_and_deterministic_step(theta, protocol, y0):
    Y = np.array([2.0, 3.0])
    out, bad = step_euler(0.0, Y, 0.1, LinearSDE(0.0, 0.0, 0.0), dW=np.array([0.3, -0.2]))
    np.testing.assert_array_equal(out, Y)
    assert not bad.any()
    out, _ = step_euler(30.0, y0, 0.1, theta, protocol)
    np.testing.assert_allclose(out, y0 + 0.1 * drift(30.0, y0, theta, protocol), rtol=1e-15)


def test_euler_gbm_step():
    out, _ = step_euler(0.0, np.array([5.0]), 0.01, gbm(0.3, 0.4), dW=np.array([0.05]))
    assert out[0] == pytest.approx(5.0 * (1 + 0.3 * 0.01 + 0.4 * 0.05), rel=1e-15)


def test_euler_flags_negative_components():
    out, bad = step_euler(0.0, np.array([1.0, 1.0]), 1.0, gbm(0.0, 1.0), dW=np.array([-2.0, 0.5]))
    assert bad.tolist() == [True, False]


def test_log_euler_matches_exact_gbm_step():
    mu, s, dt, dW = 0.3, 0.4, 0.01, 0.05
    out = step_log_euler(0.0, np.array([5.0]), dt, gbm(mu, s), dW=np.array([dW]))
    assert out[0] == pytest.approx(5.0 * math.exp((mu - s * s / 2) * dt + s * dW), rel=1e-15)
    out = step_log_euler(0.0, np.array([5.0]), dt, gbm(-2.0, 0.0))
    assert out[0] == pytest.approx(5.0 * math.exp(-2.0 * dt), rel=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=5, max_size=5),
       st.lists(st.floats(1e-6, 1e4), min_size=5, max_size=5),
       st.floats(1e-4, 5.0))
def test_log_euler_keeps_positivity(dW, Y, dt):
    from ogttsde import config
    th = config.load_default().theta()
    out = step_log_euler(10.0, np.array(Y), dt, th, config.load_default().protocol(),
                         dW=np.array(dW))
    assert np.all(out >= 0)
    # strict positivity whenever the exponent does not underflow
    if np.max(np.abs(dW)) < 10 and dt < 1:
        assert np.all(out > 0)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [dict(dt=0.0), dict(t_end=-1.0), dict(dt=0.07, t_end=1.0),
                                dict(scheme="rk4"), dict(n_paths=0), dict(seed=-1),
                                dict(euler_policy="ignore")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimulationConfig(**kw)


def test_record_stride():
    cfg = SimulationConfig(0.0, 1.0, 0.1, record_stride=3)
    assert cfg.n_steps == 10
    assert cfg.record_indices().tolist() == [0, 3, 6, 9]
    np.testing.assert_allclose(cfg.record_times(), [0.0, 0.3, 0.6, 0.9])


# ----------------------------------------------------------------- paths

def test_zero_step_window_returns_initial_state(theta, protocol, y0):
    rec = simulate_path(SimulationConfig(5.0, 5.0, 0.1), theta, protocol, y0)
    assert rec.times.tolist() == [5.0]
    np.testing.assert_array_equal(rec.states, y0[None, :])


def test_same_seed_is_bitwise_identical(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 12.0, 0.1, seed=99)
    a = simulate_path(cfg, theta, protocol, y0, path_index=3)
    b = simulate_path(cfg, theta, protocol, y0, path_index=3)
    assert a == b
    c = simulate_path(cfg, theta, protocol, y0, path_index=4)
    assert not np.array_equal(a.states, c.states)


def test_noise_free_path_matches_ode_reference(theta, protocol, y0):
    quiet = theta.replace(alpha1=0, alpha2=0, alpha3=0, alpha4=0, alpha5=0)
    dt = 0.1
    for scheme in ("euler", "log_euler"):
        rec = simulate_path(SimulationConfig(0.0, 120.0, dt, scheme), quiet, protocol, y0)
        # high-accuracy reference, restarted at the kinks of the meal input
        y = np.array(y0)
        edges = protocol.breakpoints
        for a, b in zip(edges, edges[1:]):
            y = solve_ivp(lambda t, v: drift(t, v, quiet, protocol), (a, b), y,
                          method="DOP853", rtol=1e-11, atol=1e-12).y[:, -1]
        rel = np.abs(rec.final - y) / np.abs(y)
        assert np.all(rel < 10 * dt), scheme


def test_abort_policy_reports_step():
    cfg = SimulationConfig(0.0, 10.0, 0.5, "euler", seed=3, euler_policy="abort")
    with pytest.raises(PathAbortError) as info:
        simulate_path(cfg, gbm(0.0, 3.0), None, np.array([1.0]))
    assert info.value.step >= 1


def test_clamp_policy_counts_and_keeps_positive():
    cfg = SimulationConfig(0.0, 10.0, 0.5, "euler", seed=3)
    rec = simulate_path(cfg, gbm(0.0, 3.0), None, np.array([1.0]))
    assert rec.clamp_count > 0
    assert np.all(rec.states > 0)


def test_ensemble_errors_name_paths():
    cfg = SimulationConfig(0.0, 10.0, 0.5, "euler", seed=3, n_paths=20, euler_policy="abort")
    with pytest.raises(EnsembleError) as info:
        simulate_ensemble(cfg, gbm(0.0, 3.0), None, np.array([1.0]))
    assert info.value.errors and all(isinstance(p, int) for p in info.value.errors)


def test_ensemble_of_one_is_simulate_path(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 6.0, 0.1, n_paths=1, seed=8)
    assert simulate_ensemble(cfg, theta, protocol, y0)[0] == simulate_path(cfg, theta, protocol, y0)


def test_ensemble_independent_of_workers_and_blocking(theta, protocol, y0):
    cfg = SimulationConfig(0.0, 2.0, 0.1, n_paths=BLOCK_SIZE + 5, seed=21, record_stride=4)
    one = simulate_ensemble(cfg, theta, protocol, y0, workers=1)
    four = simulate_ensemble(cfg, theta, protocol, y0, workers=4)
    assert all(a == b for a, b in zip(one, four))
    # a path computed alone equals the same path inside a block
    alone = simulate_path(cfg, theta, protocol, y0, path_index=BLOCK_SIZE + 2)
    assert alone == one[BLOCK_SIZE + 2]


def test_stream_continuation_with_step_offset(theta, y0):
    system = OGTTSystem(theta)
    whole = integrate(system, y0, SimulationConfig(0.0, 4.0, 0.1, seed=4, n_paths=3))
    first = integrate(system, y0, SimulationConfig(0.0, 2.0, 0.1, seed=4, n_paths=3))
    second = integrate(system, first.states[:, -1], SimulationConfig(2.0, 4.0, 0.1, seed=4, n_paths=3),
                       step_offset=20)
    np.testing.assert_array_equal(second.states, whole.states[:, 20:])


def test_gbm_ensemble_mean():
    mu, s, T = 0.5, 0.4, 1.0
    cfg = SimulationConfig(0.0, T, 0.01, "log_euler", seed=2, n_paths=10_000, record_stride=100)
    X = integrate(gbm(mu, s), np.array([2.0]), cfg).states[:, -1, 0]
    se = X.std(ddof=1) / math.sqrt(X.size)
    assert abs(X.mean() - 2.0 * math.exp(mu * T)) < 3 * se


def test_linear_equation_first_moment():
    a, b, alpha, x0, T = 1.0, 2.0, 0.5, 3.0, 1.0
    cfg = SimulationConfig(0.0, T, 0.001, "euler", seed=6, n_paths=10_000, record_stride=1000)
    X = integrate(LinearSDE(a, -b, alpha), np.array([x0]), cfg).states[:, -1, 0]
    exact = a / b + (x0 - a / b) * math.exp(-b * T)
    # Euler bias is O(dt) = 1e-3, well inside the Monte Carlo band
    assert abs(X.mean() - exact) < 3 * X.std(ddof=1) / math.sqrt(X.size) + 2e-3


def test_schemes_agree_as_dt_shrinks(theta, protocol, y0):
    rms = []
    for dt in (0.4, 0.1, 0.025):
        res = {}
        for scheme in ("euler", "log_euler"):
            cfg = SimulationConfig(0.0, 60.0, dt, scheme, seed=13, n_paths=200,
                                   record_stride=int(round(60.0 / dt)))
            res[scheme] = integrate(OGTTSystem(theta, protocol), y0, cfg).states[:, -1]
        rel = (res["euler"] - res["log_euler"]) / y0
        rms.append(math.sqrt(np.mean(rel**2)))
    assert rms[0] > rms[1] > rms[2]


# ------------------------------------------------------------ exact GBM

def test_exact_gbm_special_cases():
    t = np.linspace(0, 2, 201)
    X = exact_gbm_path(0.7, 0.0, 3.0, t, NoiseStream(1))
    np.testing.assert_allclose(X, 3.0 * np.exp(0.7 * t), rtol=1e-14)
    s = 0.6
    dB = math.sqrt(0.01) * NoiseStream(2).normals(np.arange(200), paths=np.arange(4001))
    X = exact_gbm_path(s * s / 2, s, 3.0, t, dB)
    B = np.concatenate([np.zeros((4001, 1)), np.cumsum(dB, axis=1)], axis=1)
    np.testing.assert_allclose(X, 3.0 * np.exp(s * B), rtol=1e-12)
    assert abs(np.median(X[:, -1]) - 3.0) < 0.1


def test_exact_gbm_rejects_nonpositive_start():
    with pytest.raises(ValueError):
        exact_gbm_path(0.1, 0.2, 0.0, np.linspace(0, 1, 3), np.zeros(2))


def strong_error(dt, n_paths=1000, mu=0.5, s=0.8, T=1.0, seed=31):
    cfg = SimulationConfig(0.0, T, dt, "euler", seed=seed, n_paths=n_paths,
                           record_stride=int(round(T / dt)))
    X = integrate(gbm(mu, s), np.array([1.0]), cfg).states[:, -1, 0]
    dB = NoiseStream(seed).increments(cfg.n_steps, dt, paths=np.arange(n_paths))
    exact = exact_gbm_path(mu, s, 1.0, np.array([0.0, T]), dB.sum(axis=1, keepdims=True))[:, -1]
    return math.sqrt(np.mean((X - exact) ** 2))


def test_strong_error_halving_dt():
    e1, e2 = strong_error(2**-6), strong_error(2**-7)
    assert 1.2 < e1 / e2 < 1.7     # sqrt(2) = 1.414
