"""Change of measure that removes the meal input from the glucose equation.

With ``c(s) = OGTT(s) / (alpha1 G(s))`` the density process is::

    D(t) = exp( int_0^t c dB1 - 1/2 int_0^t c^2 ds )

and ``B1_tilde = B1 + int c ds`` has the same quadratic variation as ``B1``.
Both integrals are discretised with left-endpoint sums.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ModelError, ModelParameters, MealProtocol, ZERO_PROTOCOL, drift, ogtt_rate
from .simulate import OGTTSystem, PathRecord, SimulationConfig, integrate
from .noise import NoiseStream

NOVIKOV_THRESHOLD = 1e6


@dataclass
class DensityProcess:
    times: np.ndarray
    log_density: np.ndarray
    terminal_density: float
    flagged_steps: int = 0


def girsanov_integrand(times, G, theta: ModelParameters, protocol: MealProtocol):
    """``c(t_i) = OGTT(t_i) / (alpha1 G(t_i))`` on every left endpoint."""
    if theta.alpha1 <= 0:
        raise ModelError("the measure change needs alpha1 > 0")
    G = np.asarray(G, dtype=float)
    if np.any(~(G > 0)):
        raise ModelError("glucose must stay strictly positive along the path")
    return ogtt_rate(np.asarray(times)[:-1], protocol) / (theta.alpha1 * G[..., :-1])


def log_density_paths(times, G, dB1, theta, protocol, threshold=NOVIKOV_THRESHOLD):
    """Vectorised log D over paths.

    ``G`` has shape ``(..., n_times)`` and ``dB1`` ``(..., n_times - 1)``.
    Returns ``(log_D, flagged)`` with ``log_D`` of the same shape as ``G`` and
    ``flagged`` the number of steps per path where ``|c|`` exceeded ``threshold``.
    """
    times = np.asarray(times, dtype=float)
    dB1 = np.asarray(dB1, dtype=float)
    if dB1.shape[-1] != times.size - 1:
        raise ValueError("need one Brownian increment per time step")
    c = girsanov_integrand(times, G, theta, protocol)
    ds = np.diff(times)
    terms = c * dB1 - 0.5 * c * c * ds
    log_D = np.concatenate([np.zeros(terms.shape[:-1] + (1,)), np.cumsum(terms, axis=-1)], axis=-1)
    flagged = np.count_nonzero(np.abs(c) > threshold, axis=-1)
    return log_D, flagged


def girsanov_log_density(path: PathRecord, increments, theta: ModelParameters,
                         protocol: MealProtocol, threshold=NOVIKOV_THRESHOLD) -> DensityProcess:
    """Density process along one recorded path and the B1 increments that drove it."""
    log_D, flagged = log_density_paths(path.times, path.states[:, 0], increments, theta,
                                       protocol, threshold)
    return DensityProcess(path.times, log_D, float(np.exp(log_D[-1])), int(flagged))


def b1_increments(seed, path_index, n_steps, dt, step_offset=0):
    """Increments of B1 used by the simulator for ``(seed, path_index)``."""
    return NoiseStream(seed, path_index, 0).increments(n_steps, dt, start_step=step_offset)


def shifted_increments(times, G, dB1, theta, protocol):
    """Increments of ``B1_tilde = B1 + int c ds``."""
    c = girsanov_integrand(times, G, theta, protocol)
    return np.asarray(dB1) + c * np.diff(np.asarray(times, dtype=float))


def quadratic_variation(increment_series, dt=None) -> float:
    """Realised quadratic variation ``sum(dX_i ** 2)``.

    ``dt`` is accepted for symmetry with the increment generators and unused.
    """
    x = np.asarray(increment_series, dtype=float)
    if x.size == 0:
        raise ValueError("empty increment series")
    return float(np.sum(x * x))


def cross_variation(times, G, dB1, theta, protocol) -> float:
    """Realised bracket of ``dC = c dB1`` with the glucose path.

    Converges to ``int OGTT ds`` because ``d<C, G> = c * alpha1 * G dt``.
    """
    c = girsanov_integrand(times, G, theta, protocol)
    return float(np.sum(c * np.asarray(dB1) * np.diff(np.asarray(G, dtype=float))))


def autonomous_drift(t, Y, theta: ModelParameters, forms=None):
    """Drift of the transformed system: the original drift with no meal input."""
    return drift(t, Y, theta, ZERO_PROTOCOL, forms)


# ------------------------------------------------------------- Monte Carlo

def _b1_block(config: SimulationConfig, paths):
    return NoiseStream(config.seed).increments(config.n_steps, config.dt, paths=np.asarray(paths))


class _LogDensityObserver:
    """Accumulates log D and flagged steps online while paths are integrated."""

    def __init__(self, n, theta, protocol, threshold):
        self.theta, self.protocol, self.threshold = theta, protocol, threshold
        self.log_D = np.zeros(n)
        self.flagged = np.zeros(n)

    def update(self, t, Y, dW, dt):
        G = Y[:, 0]
        if np.any(~(G > 0)):
            raise ModelError("glucose must stay strictly positive along the path")
        c = ogtt_rate(t, self.protocol) / (self.theta.alpha1 * G)
        self.log_D += c * dW[:, 0] - 0.5 * c * c * dt
        self.flagged += np.abs(c) > self.threshold

    def value(self):
        return np.stack([self.log_D, self.flagged], axis=1)


def terminal_log_density(theta, protocol, Y0, config: SimulationConfig, workers=1,
                         threshold=NOVIKOV_THRESHOLD, forms=None, paths=None):
    """``(log D(T), flagged steps)`` per path of the full model, accumulated online."""
    if theta.alpha1 <= 0:
        raise ModelError("the measure change needs alpha1 > 0")
    config = _with(config, record_stride=max(config.n_steps, 1))
    paths = np.arange(config.n_paths) if paths is None else np.asarray(paths)
    res = integrate(OGTTSystem(theta, protocol, forms), np.asarray(Y0, dtype=float), config,
                    paths=paths, workers=workers,
                    observer=lambda n: _LogDensityObserver(n, theta, protocol, threshold))
    return res.observed[:, 0], res.observed[:, 1].astype(np.int64)


def martingale_check(theta, protocol, Y0, config: SimulationConfig, workers=1,
                     threshold=NOVIKOV_THRESHOLD, forms=None) -> dict:
    """Monte Carlo estimate of ``E[D(T)]`` along full-model paths (should be 1)."""
    log_D_T, flagged = terminal_log_density(theta, protocol, Y0, config, workers, threshold, forms)
    D_T = np.exp(log_D_T)
    return {
        "mean_D_T": float(D_T.mean()),
        "se_D_T": float(D_T.std(ddof=1) / math.sqrt(D_T.size)) if D_T.size > 1 else 0.0,
        "n_paths": int(D_T.size),
        "flagged_steps": int(flagged.sum()),
    }


def reweighted_expectation(theta, protocol, Y0, config: SimulationConfig, functional,
                           workers=1, forms=None) -> dict:
    """Compare ``E[D(T) phi(Y_auto(T))]`` with ``E[phi(Y_full(T))]``.

    ``Y_auto`` solves the meal-free system; reweighting it by the density built
    from its own B1 increments reproduces the law of the full system. The
    Euler scheme is used, for which the identity holds exactly step by step.
    """
    config = _with(config, scheme="euler", record_stride=1)
    paths = np.arange(config.n_paths)
    auto = integrate(OGTTSystem(theta, ZERO_PROTOCOL, forms), np.asarray(Y0, dtype=float), config,
                     paths=paths, workers=workers)
    full_cfg = _with(config, seed=(config.seed + 1) % 2**64)
    full = integrate(OGTTSystem(theta, protocol, forms), np.asarray(Y0, dtype=float), full_cfg,
                     paths=paths, workers=workers)
    times = config.record_times()
    log_D, _ = log_density_paths(times, auto.states[:, :, 0], _b1_block(config, paths), theta,
                                 protocol)
    phi_auto = functional(auto.states[:, -1])
    weighted = np.exp(log_D[:, -1]) * phi_auto
    plain = functional(full.states[:, -1])
    n = paths.size
    return {
        "reweighted_mean": float(weighted.mean()),
        "reweighted_se": float(weighted.std(ddof=1) / math.sqrt(n)),
        "direct_mean": float(plain.mean()),
        "direct_se": float(plain.std(ddof=1) / math.sqrt(n)),
        "unweighted_mean": float(phi_auto.mean()),
    }


def _with(config, **changes):
    return replace(config, **changes)
