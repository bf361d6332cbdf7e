"""Euler-transition maximum likelihood for fully observed paths.

For observations ``Y(t_1), ..., Y(t_n)`` the increments are approximated as
independent Gaussians with mean ``h(Y(t_{i-1})) dt_i`` and covariance
``A(Y(t_{i-1})) dt_i``, ``A = diag(alpha_j^2 Y_j^2)``. The log-likelihood is
the conditional one given ``Y(t_1)`` and omits the ``2 pi`` constant::

    l(theta) = -1/2 sum_{i=2}^{n} ( delta_i' Sigma_i^{-1} delta_i + ln |Sigma_i| )
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .model import ModelError, ModelParameters, ZERO_PROTOCOL, diffusion_diag, drift
from .simulate import LinearSDE, OGTTSystem


class A1Error(ModelError):
    """The diffusion matrix is not positive definite at an observation."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class GBMParameters:
    """Scalar geometric Brownian motion ``dX = mu X dt + sigma X dB``."""

    mu: float
    sigma: float

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def system(self):
        return LinearSDE(0.0, self.mu, self.sigma)


@dataclass
class Observations:
    times: np.ndarray
    states: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise ValueError("need one state row per observation time")
        if self.times.size < 2:
            raise ValueError("at least two observations are required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if not np.all(np.isfinite(self.states)) or np.any(self.states <= 0):
            raise ValueError("observed states must be finite and positive")

    @property
    def n(self) -> int:
        return self.times.size

    @classmethod
    def from_path(cls, path, source="synthetic"):
        return cls(path.times, path.states, source or f"seed={path.seed} path={path.path_index}")


def _system(theta, protocol):
    if isinstance(theta, ModelParameters):
        return OGTTSystem(theta, protocol)
    if isinstance(theta, GBMParameters):
        return theta.system()
    return theta


def delta_i(theta, obs: Observations, i: int, protocol=ZERO_PROTOCOL) -> np.ndarray:
    """Euler residual of the ``i``-th observation (1-based, ``2 <= i <= n``)."""
    if not 2 <= i <= obs.n:
        raise IndexError(f"delta index {i} outside 2..{obs.n}")
    system = _system(theta, protocol)
    t0, t1 = obs.times[i - 2], obs.times[i - 1]
    y0, y1 = obs.states[i - 2], obs.states[i - 1]
    b, phi = system.split(t0, y0)
    return y1 - y0 - (b + phi * y0) * (t1 - t0)


def transition_covariance(Y, theta, dt) -> np.ndarray:
    """``diag(alpha_j^2 Y_j^2) * dt``; raises :class:`A1Error` unless positive definite."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    noise = _system(theta, ZERO_PROTOCOL).noise
    diag = (noise * np.asarray(Y, dtype=float)) ** 2 * dt
    if not np.all(diag > 0):
        raise A1Error("diffusion matrix is not positive definite")
    return np.diag(diag)


def _increment_terms(system, times, states):
    Y0, Y1 = states[:-1], states[1:]
    t0 = times[:-1]
    dt = np.diff(times)[:, None]
    b, phi = system.split(t0, Y0)
    delta = Y1 - Y0 - (b + phi * Y0) * dt
    var = (system.noise * Y0) ** 2 * dt
    bad = ~(var > 0)
    if bad.any():
        i = int(np.flatnonzero(bad.any(axis=1))[0]) + 2
        raise A1Error(f"diffusion matrix not positive definite at observation {i}", index=i)
    return delta * delta / var + np.log(var)


def log_likelihood(theta, obs: Observations, protocol=ZERO_PROTOCOL) -> float:
    """Euler-transition log-likelihood; higher is better."""
    system = _system(theta, protocol)
    terms = _increment_terms(system, obs.times, obs.states)
    # np.sum reduces contiguous float arrays pairwise in a fixed order
    return -0.5 * float(np.sum(np.ascontiguousarray(terms)))


def gbm_log_likelihood(mu, sigma, times, x) -> float:
    """One-dimensional reduction for geometric Brownian motion."""
    return log_likelihood(GBMParameters(mu, sigma), Observations(times, x))


def gbm_closed_form_mle(times, x, dt=None):
    """Exact-transition MLE of GBM from log-increments: ``(mu_hat, sigma_hat)``."""
    x = np.asarray(x, dtype=float)
    dt = float(np.mean(np.diff(times))) if dt is None else dt
    r = np.diff(np.log(x))
    s2 = np.var(r) / dt
    return float(np.mean(r) / dt + 0.5 * s2), float(math.sqrt(s2))


# ------------------------------------------------------------------- fitting

@dataclass
class FitResult:
    theta_hat: object
    log_likelihood: float
    n_evaluations: int
    converged: bool
    free_params: tuple
    bounds: dict
    initial_log_likelihood: float
    trace: list = field(default_factory=list)   # (iteration, best log-likelihood)
    message: str = ""

    def free_values(self) -> dict:
        return {name: getattr(self.theta_hat, name) for name in self.free_params}


@dataclass(frozen=True)
class FitOptions:
    xatol: float = 1e-6
    max_evaluations: int = 100_000
    initial_step: float = 0.1


def fit_mle(obs: Observations, free_params: Sequence[str], theta_init, bounds=None,
            options: Optional[FitOptions] = None, protocol=ZERO_PROTOCOL) -> FitResult:
    """Maximise :func:`log_likelihood` over ``free_params`` with Nelder-Mead in log space.

    ``bounds`` maps parameter names to ``(low, high)`` with ``0 < low < high``;
    the default box is two decades either side of the initial value. Free
    parameters are ordered lexically, which fixes the simplex construction and
    makes the search deterministic. Points where the likelihood is undefined
    count as ``-inf``.
    """
    options = options or FitOptions()
    names = tuple(sorted(free_params))
    if len(set(names)) != len(names):
        raise ValueError("duplicate free parameter")
    for name in names:
        if not hasattr(theta_init, name):
            raise ValueError(f"unknown parameter {name!r}")
    bounds = dict(bounds or {})
    box = {}
    for name in names:
        v0 = float(getattr(theta_init, name))
        if v0 <= 0:
            raise ValueError(f"log-space search needs a positive initial {name}")
        lo, hi = bounds.get(name, (v0 / 100.0, v0 * 100.0))
        if not 0 < lo < hi:
            raise ValueError(f"bounds for {name} must satisfy 0 < low < high")
        if not lo <= v0 <= hi:
            raise ValueError(f"initial {name} = {v0} outside its bounds")
        box[name] = (float(lo), float(hi))

    ll0 = log_likelihood(theta_init, obs, protocol)
    if not names:
        return FitResult(theta_init, ll0, 1, True, names, box, ll0, [(0, ll0)])

    def theta_at(z):
        return theta_init.replace(**{n: float(math.exp(v)) for n, v in zip(names, z)})

    def objective(z):
        try:
            value = log_likelihood(theta_at(z), obs, protocol)
        except (ModelError, ValueError, FloatingPointError):
            return math.inf
        return -value if math.isfinite(value) else math.inf

    z0 = np.array([math.log(getattr(theta_init, n)) for n in names])
    log_box = [(math.log(box[n][0]), math.log(box[n][1])) for n in names]
    simplex = [z0]
    for j, (lo, hi) in enumerate(log_box):
        v = z0.copy()
        v[j] = z0[j] + options.initial_step if z0[j] + options.initial_step <= hi else z0[j] - options.initial_step
        simplex.append(v)
    trace = [(0, ll0)]

    def record(intermediate_result):
        trace.append((len(trace), -float(intermediate_result.fun)))

    with np.errstate(all="ignore"):
        res = optimize.minimize(
            objective, z0, method="Nelder-Mead", bounds=log_box, callback=record,
            options={"initial_simplex": np.array(simplex), "xatol": options.xatol,
                     "fatol": math.inf, "maxfev": options.max_evaluations,
                     "maxiter": options.max_evaluations},
        )
    best_z, best_ll = res.x, -float(res.fun)
    if not best_ll >= ll0:
        best_z, best_ll = z0, ll0
    return FitResult(theta_at(best_z), best_ll, int(res.nfev), res.status == 0, names, box,
                     ll0, trace, str(res.message))


def profile_likelihood(obs: Observations, theta, param_name: str, grid,
                       protocol=ZERO_PROTOCOL) -> np.ndarray:
    """Log-likelihood along ``grid`` for one parameter, the others held fixed."""
    out = np.empty(len(grid))
    for j, value in enumerate(grid):
        try:
            out[j] = log_likelihood(theta.replace(**{param_name: float(value)}), obs, protocol)
        except ModelError as err:
            raise type(err)(f"grid point {j} ({param_name}={value}): {err}") from err
    return out


# ------------------------------------------------------------- assumption A2

@dataclass
class SmoothnessReport:
    drift_jacobian_max: float
    diffusion_jacobian_max: float
    diffusion_jacobian_error: float   # max |J_g - diag(alpha)|
    nonfinite_entries: int

    @property
    def ok(self) -> bool:
        return self.nonfinite_entries == 0


def _jacobian(fn, y, rel_step):
    h = rel_step * np.maximum(np.abs(y), 1.0)
    cols = []
    for j in range(y.size):
        e = np.zeros_like(y)
        e[j] = h[j]
        cols.append((fn(y + e) - fn(y - e)) / (2.0 * h[j]))
    return np.stack(cols, axis=1)


def check_a2_smoothness(theta: ModelParameters, sample_states, protocol=ZERO_PROTOCOL, t=0.0,
                        rel_step=1e-6) -> SmoothnessReport:
    """Central finite-difference Jacobians of drift and diffusion at every sample state."""
    Y = np.atleast_2d(np.asarray(sample_states, dtype=float))
    drift_max = diff_max = diff_err = 0.0
    nonfinite = 0
    for y in Y:
        Jf = _jacobian(lambda v: drift(t, v, theta, protocol), y, rel_step)
        Jg = _jacobian(lambda v: diffusion_diag(v, theta), y, rel_step)
        nonfinite += int(np.count_nonzero(~np.isfinite(Jf)) + np.count_nonzero(~np.isfinite(Jg)))
        drift_max = max(drift_max, float(np.nanmax(np.abs(Jf))))
        diff_max = max(diff_max, float(np.nanmax(np.abs(Jg))))
        diff_err = max(diff_err, float(np.nanmax(np.abs(Jg - np.diag(theta.noise)))))
    return SmoothnessReport(drift_max, diff_max, diff_err, nonfinite)
