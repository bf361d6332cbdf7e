"""Invariant-measure estimation and its diagnostics.

The long-run law is estimated on the meal-free (autonomous) system. The
one-dimensional test equation ``dX = (a - b X) dt + alpha X dB`` has the
stationary density

    rho(x) ~ x**(-2 - 2 b / alpha**2) * exp(-2 a / (alpha**2 x)),

an inverse-gamma law with shape ``1 + 2 b / alpha**2`` and scale
``2 a / alpha**2``; it follows from integrating the zero-flux condition
``(alpha**2 x**2 rho / 2)' = (a - b x) rho`` once.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .model import ZERO_PROTOCOL, ModelParameters, check_state
from .simulate import (
    DEFAULT_SEED,
    LinearSDE,
    OGTTSystem,
    SimulationConfig,
    integrate,
)

KS_THRESHOLD = 0.05


class InsufficientSamplesError(ValueError):
    pass


@dataclass
class EmpiricalMeasure:
    samples: np.ndarray               # (n, d), chain-major within each sampling time
    histogram: list                   # per dimension: (edges, counts)
    burn_in: float
    thinning: float
    sample_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_chains: int = 1

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def marginal(self, j) -> np.ndarray:
        return self.samples[:, j]


@dataclass
class StationarityReport:
    window_ks: np.ndarray
    threshold: float
    passed: np.ndarray

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    def as_dict(self, names=None) -> dict:
        names = names or [f"x{j}" for j in range(len(self.window_ks))]
        return {
            "threshold": self.threshold,
            "window_ks": {n: float(v) for n, v in zip(names, self.window_ks)},
            "passed": {n: bool(v) for n, v in zip(names, self.passed)},
            "all_passed": self.all_passed,
        }


def histogram(samples, bins=50):
    """Per-dimension histograms on equal-width edges spanning the sample range."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    out = []
    for j in range(samples.shape[1]):
        lo, hi = samples[:, j].min(), samples[:, j].max()
        if hi <= lo:
            hi = lo + max(abs(lo), 1.0) * 1e-9
        counts, edges = np.histogram(samples[:, j], bins=bins, range=(lo, hi))
        out.append((edges, counts))
    return out


def relaxation_time(theta: ModelParameters) -> float:
    return max(theta.tau_beta, theta.tau_gamma, theta.tau_sigma, 1.0 / min(theta.E_G0, theta.k))


def default_burn_in(theta: ModelParameters) -> float:
    """Ten times the slowest relaxation scale of the parameter set."""
    return 10.0 * relaxation_time(theta)


def _derived_seed(seed, salt):
    return (int(seed) * 0x9E3779B97F4A7C15 + salt) % 2**64


def long_run_sample(theta, Y0, t_total, burn_in=None, thinning=None, seed=DEFAULT_SEED, dt=0.5,
                    n_chains=1, workers=1, bins=50, system=None, warn=True) -> EmpiricalMeasure:
    """Empirical invariant measure from long log-Euler trajectories.

    Each of ``n_chains`` trajectories (path indices ``0 .. n_chains - 1``)
    starts at ``Y0``, runs through ``burn_in`` and is then sampled every
    ``thinning`` time units up to ``t_total``. ``system`` replaces the
    meal-free model, e.g. by a :class:`LinearSDE`.
    """
    if system is None:
        system = OGTTSystem(theta, ZERO_PROTOCOL)
        Y0 = check_state(Y0, "initial state")
        burn_in = default_burn_in(theta) if burn_in is None else burn_in
        thinning = relaxation_time(theta) if thinning is None else thinning
    if burn_in is None or thinning is None:
        raise ValueError("burn_in and thinning are required for a custom system")
    if not 0 <= burn_in < t_total:
        raise ValueError("burn_in must lie in [0, t_total)")
    if thinning <= 0:
        raise ValueError("thinning must be > 0")
    n_burn = int(round(burn_in / dt))
    thin_steps = max(int(round(thinning / dt)), 1)
    n_samples = int(round((t_total - burn_in) / dt)) // thin_steps
    if n_samples < 1:
        raise InsufficientSamplesError("no sample falls after the burn-in")
    Y0 = np.atleast_1d(np.asarray(Y0, dtype=float))

    if n_burn:
        cfg = SimulationConfig(0.0, n_burn * dt, dt, "log_euler", seed, n_chains, n_burn)
        Y = integrate(system, Y0, cfg, workers=workers).states[:, -1]
    else:
        Y = np.broadcast_to(Y0, (n_chains, Y0.size))
    cfg = SimulationConfig(n_burn * dt, (n_burn + n_samples * thin_steps) * dt, dt, "log_euler",
                           seed, n_chains, thin_steps)
    states = integrate(system, Y, cfg, workers=workers, step_offset=n_burn).states[:, 1:]
    samples = np.ascontiguousarray(states.transpose(1, 0, 2)).reshape(-1, Y0.size)
    measure = EmpiricalMeasure(samples, histogram(samples, bins), n_burn * dt, thin_steps * dt,
                               cfg.record_times()[1:], n_chains)
    if warn and samples.shape[0] >= 4:
        report = stationarity_report(measure)
        if not report.all_passed:
            warnings.warn(f"stationarity check failed: window KS {report.window_ks}")
    return measure


def stationarity_report(measure: EmpiricalMeasure, threshold=KS_THRESHOLD) -> StationarityReport:
    """KS distance between the first and second half (in time) of every marginal."""
    s = measure.samples
    if s.shape[0] < 4:
        raise InsufficientSamplesError(f"need at least 4 samples, have {s.shape[0]}")
    half = (s.shape[0] // measure.n_chains // 2) * measure.n_chains
    if half == 0:
        half = s.shape[0] // 2
    ks = np.array([ks_distance(s[:half, j], s[half:, j]) for j in range(s.shape[1])])
    return StationarityReport(ks, threshold, ks < threshold)


def ks_distance(samples_a, samples_b_or_cdf) -> float:
    """Sup-distance between an empirical CDF and a second sample or a CDF callable."""
    a = np.asarray(samples_a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("empty sample")
    if callable(samples_b_or_cdf):
        return float(stats.kstest(a, samples_b_or_cdf).statistic)
    b = np.asarray(samples_b_or_cdf, dtype=float).ravel()
    if b.size == 0:
        raise ValueError("empty sample")
    return float(stats.ks_2samp(a, b).statistic)


# ---------------------------------------------------------- 1-D test problem

@dataclass(frozen=True)
class StationaryDensity1D:
    """Inverse-gamma stationary law of ``dX = (a - b X) dt + alpha X dB``."""

    a: float
    b: float
    alpha: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.alpha > 0):
            raise ValueError("a, b and alpha must be positive")

    @property
    def shape(self) -> float:
        return 1.0 + 2.0 * self.b / self.alpha**2

    @property
    def scale(self) -> float:
        return 2.0 * self.a / self.alpha**2

    @property
    def mode(self) -> float:
        return self.scale / (self.shape + 1.0)

    @property
    def mean(self) -> float:
        return self.scale / (self.shape - 1.0)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, s = self.shape, self.scale
        with np.errstate(divide="ignore"):
            out = k * np.log(s) - special.gammaln(k) - (k + 1.0) * np.log(x) - s / x
        return np.where(x > 0, out, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, special.gammaincc(self.shape, self.scale / x), 0.0)

    def __call__(self, x):
        return self.pdf(x)


def analytic_stationary_1d(a, b, alpha) -> StationaryDensity1D:
    return StationaryDensity1D(float(a), float(b), float(alpha))


def linear_test_system(a, b, alpha) -> LinearSDE:
    return LinearSDE(a, -b, alpha)


def fpk_residual_1d(density, a, b, alpha, grid) -> float:
    """Max-abs stationary Fokker-Planck residual on the interior of a uniform grid.

    ``density`` is either the gridded values or a callable evaluated on ``grid``.
    The operator is ``(alpha**2 x**2 rho / 2)'' - ((a - b x) rho)'``, discretised
    with second-order central differences.
    """
    x = np.asarray(grid, dtype=float)
    if x.size < 5:
        raise ValueError("grid too coarse: need at least 5 points")
    if np.any(x <= 0):
        raise ValueError("grid must lie inside (0, inf)")
    h = np.diff(x)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("grid must be uniform")
    h = h[0]
    rho = density(x) if callable(density) else np.asarray(density, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("density must be positive on the grid")
    diff = 0.5 * alpha**2 * x**2 * rho
    flux = (a - b * x) * rho
    second = (diff[2:] - 2.0 * diff[1:-1] + diff[:-2]) / h**2
    first = (flux[2:] - flux[:-2]) / (2.0 * h)
    return float(np.max(np.abs(second - first)))


# ------------------------------------------------------------ invariance tests

def propagate(system, samples, delta, dt, seed, workers=1) -> np.ndarray:
    """Push every sample forward by ``delta`` with fresh, independent noise."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n_steps = int(round(delta / dt))
    cfg = SimulationConfig(0.0, n_steps * dt, dt, "log_euler", seed, samples.shape[0],
                           max(n_steps, 1))
    return integrate(system, samples, cfg, workers=workers).states[:, -1]


def kernel_invariance(measure: EmpiricalMeasure, theta=None, delta=None, dt=0.5, seed=None,
                      system=None, workers=1) -> np.ndarray:
    """Per-dimension KS distance between the samples and their one-kernel-step images."""
    if system is None:
        system = OGTTSystem(theta, ZERO_PROTOCOL)
        delta = relaxation_time(theta) if delta is None else delta
    seed = _derived_seed(DEFAULT_SEED if seed is None else seed, 0x51)
    moved = propagate(system, measure.samples, delta, dt, seed, workers)
    return np.array([ks_distance(measure.samples[:, j], moved[:, j])
                     for j in range(measure.samples.shape[1])])


def seed_independence(measure_a: EmpiricalMeasure, measure_b: EmpiricalMeasure) -> np.ndarray:
    return np.array([ks_distance(measure_a.samples[:, j], measure_b.samples[:, j])
                     for j in range(measure_a.samples.shape[1])])


# ------------------------------------------------------- eps-regularisation

def epsilon_regularization_experiment(theta, Y0, epsilons, T, n_paths, seed=DEFAULT_SEED,
                                      dt=0.01, protocol=ZERO_PROTOCOL, workers=1):
    """Mean squared distance between the regularised and the original solution at ``T``.

    The regularised system adds ``eps`` to every diagonal diffusion entry. Both
    solutions use Euler-Maruyama with identical increments. Returns rows
    ``(eps, mean, standard_error)``.
    """
    eps = np.asarray(epsilons, dtype=float)
    if np.any(eps < 0) or np.any(np.diff(eps) > 0):
        raise ValueError("epsilons must be non-negative and decreasing")
    system = OGTTSystem(theta, protocol)
    cfg = SimulationConfig(0.0, T, dt, "euler", seed, n_paths, int(round(T / dt)))
    Y0 = check_state(Y0, "initial state")
    base = integrate(system, Y0, cfg, workers=workers).states[:, -1]
    rows = []
    for e in eps:
        if e == 0:
            rows.append((0.0, 0.0, 0.0))
            continue
        Ye = integrate(system, Y0, cfg, workers=workers, extra_noise=float(e)).states[:, -1]
        d2 = np.sum((Ye - base) ** 2, axis=1)
        rows.append((float(e), float(d2.mean()), float(d2.std(ddof=1) / math.sqrt(n_paths))))
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
