"""Euler-Maruyama and positivity-preserving log-Euler integration.

Paths are integrated in fixed blocks of :data:`BLOCK_SIZE` paths, each block
vectorised over its paths. Noise for path ``p``, component ``j`` and step
``n`` is ``sqrt(dt) * gaussian(seed, p, j, n)``, so a path's trajectory does
not depend on which block or worker integrates it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    N_STATE,
    CoefficientForms,
    MealProtocol,
    ModelError,
    ModelParameters,
    ZERO_PROTOCOL,
    check_state,
    drift_split,
    isr_clamp_events,
)
from .noise import NoiseStream, gaussian

DEFAULT_SEED = 20240917
BLOCK_SIZE = 2048
SCHEMES = ("euler", "log_euler")
POLICIES = ("clamp", "abort")
CLAMP_FLOOR = 1e-12


class SimulationError(RuntimeError):
    pass


class PathAbortError(SimulationError):
    def __init__(self, path_index, step):
        super().__init__(f"path {path_index}: non-positive Euler state at step {step}")
        self.path_index = path_index
        self.step = step


class EnsembleError(SimulationError):
    def __init__(self, errors):
        self.errors = dict(errors)
        listing = ", ".join(f"path {p} (step {e.step})" for p, e in sorted(self.errors.items()))
        super().__init__(f"{len(self.errors)} path(s) aborted: {listing}")


@dataclass(frozen=True)
class SimulationConfig:
    t_start: float = 0.0
    t_end: float = 120.0
    dt: float = 0.1
    scheme: str = "log_euler"
    seed: int = DEFAULT_SEED
    n_paths: int = 1
    record_stride: int = 1
    euler_policy: str = "clamp"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.t_end >= self.t_start:
            raise ValueError("t_end must not precede t_start")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.euler_policy not in POLICIES:
            raise ValueError(f"unknown Euler policy {self.euler_policy!r}")
        if int(self.n_paths) < 1 or int(self.record_stride) < 1:
            raise ValueError("n_paths and record_stride must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        span = (self.t_end - self.t_start) / self.dt
        if abs(span - round(span)) > 1e-9 * max(1.0, span):
            raise ValueError("(t_end - t_start) must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    def record_indices(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.record_stride)

    def record_times(self) -> np.ndarray:
        return self.t_start + self.record_indices() * self.dt


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    seed: int
    path_index: int
    scheme: str = "log_euler"
    clamp_count: int = 0
    isr_clamp_count: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise ValueError("states must have one row per recorded time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __eq__(self, other):
        if not isinstance(other, PathRecord):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
            and (self.seed, self.path_index, self.scheme, self.clamp_count, self.isr_clamp_count)
            == (other.seed, other.path_index, other.scheme, other.clamp_count, other.isr_clamp_count)
        )


# ------------------------------------------------------------------ systems

class OGTTSystem:
    """The five-dimensional model bound to a parameter set and meal protocol."""

    n_dim = N_STATE

    def __init__(self, theta: ModelParameters, protocol: MealProtocol = ZERO_PROTOCOL,
                 forms: Optional[CoefficientForms] = None):
        self.theta = theta
        self.protocol = protocol
        self.forms = forms
        self.noise = theta.noise

    def split(self, t, Y):
        return drift_split(t, Y, self.theta, self.protocol, self.forms)


class LinearSDE:
    """Componentwise ``dZ = (source + rate Z) dt + noise Z dB``.

    ``source = 0`` gives geometric Brownian motion, ``rate < 0`` with a positive
    source the mean-reverting test equation of the stationary analysis.
    """

    def __init__(self, source, rate, noise):
        self.source = np.atleast_1d(np.asarray(source, dtype=float))
        self.rate = np.atleast_1d(np.asarray(rate, dtype=float))
        self.noise = np.atleast_1d(np.asarray(noise, dtype=float))
        self.source, self.rate, self.noise = np.broadcast_arrays(self.source, self.rate, self.noise)
        self.n_dim = self.noise.size

    def split(self, t, Y):
        Y = np.asarray(Y, dtype=float)
        return np.broadcast_to(self.source, Y.shape), np.broadcast_to(self.rate, Y.shape)


def as_system(theta, protocol=None, forms=None):
    if isinstance(theta, ModelParameters):
        return OGTTSystem(theta, protocol or ZERO_PROTOCOL, forms)
    return theta


# -------------------------------------------------------------------- steps

def euler_increment(system, t, Y, dt, dW, extra_noise=0.0):
    b, phi = system.split(t, Y)
    return Y + (b + phi * Y) * dt + (system.noise * Y + extra_noise) * dW


def log_euler_increment(system, t, Y, dt, dW):
    b, phi = system.split(t, Y)
    alpha = system.noise
    growth = np.exp((phi - 0.5 * alpha * alpha) * dt + alpha * dW)
    return growth * (Y + b * dt)


def step_euler(t, Y, dt, theta, protocol=None, dW=None, forms=None):
    """One Euler-Maruyama step.

    Returns ``(Y_new, violated)`` where ``violated`` marks components that left
    the positive orthant; the caller applies the clamp/abort policy.
    """
    system = as_system(theta, protocol, forms)
    Y = np.asarray(Y, dtype=float)
    dW = np.zeros_like(Y) if dW is None else np.asarray(dW, dtype=float)
    Y_new = euler_increment(system, t, Y, dt, dW)
    return Y_new, ~(Y_new > 0)


def step_log_euler(t, Y, dt, theta, protocol=None, dW=None, forms=None):
    """One step of the exponential scheme.

    Source and linear rate are frozen at the left endpoint and the frozen
    linear SDE is solved exactly over the step, so a positive state stays
    positive for any Brownian increment.
    """
    system = as_system(theta, protocol, forms)
    Y = np.asarray(Y, dtype=float)
    dW = np.zeros_like(Y) if dW is None else np.asarray(dW, dtype=float)
    return log_euler_increment(system, t, Y, dt, dW)


# ------------------------------------------------------------------ marching

@dataclass
class BlockResult:
    states: np.ndarray          # (n_paths, n_records, d)
    clamp_count: np.ndarray     # (n_paths,)
    isr_clamp_count: np.ndarray
    abort_step: np.ndarray      # -1 when the path completed
    observed: Optional[np.ndarray] = None


def integrate_block(system, Y0, paths, config: SimulationConfig, extra_noise=0.0,
                    noise_seed=None, step_offset=0, observer=None) -> BlockResult:
    """March a block of paths; ``Y0`` has shape ``(len(paths), d)``.

    ``extra_noise`` adds an additive diffusion term on every component (Euler
    scheme only). ``step_offset`` shifts the noise counter, which lets a
    simulation continue a stream. ``observer`` is a factory called with the
    block size; the object it returns gets ``update(t, Y, dW, dt)`` before
    every step and its ``value()`` ends up in ``BlockResult.observed``.
    """
    paths = np.asarray(paths, dtype=np.uint64)
    Y = np.array(Y0, dtype=float, copy=True).reshape(paths.size, system.n_dim)
    seed = config.seed if noise_seed is None else noise_seed
    comps = np.arange(system.n_dim, dtype=np.uint64)
    n_steps, stride, dt = config.n_steps, config.record_stride, config.dt
    sqdt = math.sqrt(dt)
    rec = np.empty((paths.size, n_steps // stride + 1, system.n_dim))
    rec[:, 0] = Y
    clamps = np.zeros(paths.size, dtype=np.int64)
    isr_clamps = np.zeros(paths.size, dtype=np.int64)
    abort = np.full(paths.size, -1, dtype=np.int64)
    alive = np.ones(paths.size, dtype=bool)
    euler = config.scheme == "euler"
    watch = observer(paths.size) if observer is not None else None
    if extra_noise and not euler:
        raise ValueError("additive noise regularisation needs the Euler scheme")
    for n in range(n_steps):
        t = config.t_start + n * dt
        dW = sqdt * gaussian(seed, paths[:, None], comps[None, :], np.uint64(n + step_offset))
        isr_clamps += _row_isr_clamps(system, Y)
        if watch is not None:
            watch.update(t, Y, dW, dt)
        if euler:
            Y_new = euler_increment(system, t, Y, dt, dW, extra_noise)
        else:
            Y_new = log_euler_increment(system, t, Y, dt, dW)
        bad = ~(Y_new > 0)
        if bad.any():
            rows = bad.any(axis=1) & alive
            clamps += bad.sum(axis=1) * alive
            if config.euler_policy == "abort":
                abort[rows] = n + 1
                alive[rows] = False
            floor = CLAMP_FLOOR * Y
            Y_new = np.where(bad, floor, Y_new)
        Y = np.where(alive[:, None], Y_new, Y)
        if (n + 1) % stride == 0:
            rec[:, (n + 1) // stride] = Y
    return BlockResult(rec, clamps, isr_clamps, abort,
                       None if watch is None else np.asarray(watch.value()))


def _row_isr_clamps(system, Y):
    # M(G) >= 0, so the drive M + gamma can only go negative through gamma
    if not isinstance(system, OGTTSystem) or not (Y[:, 3] < 0).any():
        return 0
    return np.array([isr_clamp_events(y, system.theta) for y in Y], dtype=np.int64)


def integrate(system, Y0, config: SimulationConfig, paths=None, workers=1, extra_noise=0.0,
              noise_seed=None, step_offset=0, observer=None) -> BlockResult:
    """Integrate many paths in fixed-size blocks, optionally on a thread pool.

    ``Y0`` is one state (shared by every path) or one state per path.
    """
    paths = np.arange(config.n_paths) if paths is None else np.asarray(paths)
    Y0 = np.asarray(Y0, dtype=float)
    if Y0.ndim == 1:
        Y0 = np.broadcast_to(Y0, (paths.size, Y0.size))
    starts = range(0, paths.size, BLOCK_SIZE)

    def run(s):
        return integrate_block(system, Y0[s:s + BLOCK_SIZE], paths[s:s + BLOCK_SIZE], config,
                               extra_noise, noise_seed, step_offset, observer)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, starts))
    else:
        blocks = [run(s) for s in starts]
    return BlockResult(
        np.concatenate([b.states for b in blocks]),
        np.concatenate([b.clamp_count for b in blocks]),
        np.concatenate([b.isr_clamp_count for b in blocks]),
        np.concatenate([b.abort_step for b in blocks]),
        None if observer is None else np.concatenate([b.observed for b in blocks]),
    )


def _records(result: BlockResult, config: SimulationConfig, paths):
    times = config.record_times()
    return [
        PathRecord(times, result.states[i], int(config.seed), int(p), config.scheme,
                   int(result.clamp_count[i]), int(result.isr_clamp_count[i]))
        for i, p in enumerate(paths)
    ]


def simulate_path(config: SimulationConfig, theta, protocol=None, Y0=None, path_index=0,
                  forms=None) -> PathRecord:
    system = as_system(theta, protocol, forms)
    Y0 = _initial(system, Y0)
    result = integrate(system, Y0[None, :], config, paths=[path_index])
    if result.abort_step[0] >= 0:
        raise PathAbortError(path_index, int(result.abort_step[0]))
    return _records(result, config, [path_index])[0]


def simulate_ensemble(config: SimulationConfig, theta, protocol=None, Y0=None, workers=1,
                      forms=None) -> list:
    """``config.n_paths`` paths using path indices ``0 .. n_paths - 1``."""
    system = as_system(theta, protocol, forms)
    Y0 = _initial(system, Y0)
    paths = np.arange(config.n_paths)
    result = integrate(system, Y0, config, paths=paths, workers=workers)
    aborted = np.flatnonzero(result.abort_step >= 0)
    if aborted.size:
        raise EnsembleError({int(p): PathAbortError(int(p), int(result.abort_step[p]))
                             for p in aborted})
    return _records(result, config, paths)


def _initial(system, Y0):
    if Y0 is None:
        raise ValueError("an initial state is required")
    Y0 = np.asarray(Y0, dtype=float)
    if isinstance(system, OGTTSystem):
        return check_state(Y0, "initial state")
    if Y0.ndim == 0:
        Y0 = Y0[None]
    if not np.all(Y0 > 0) or not np.all(np.isfinite(Y0)):
        raise ModelError("initial state must be finite and positive")
    return Y0


def exact_gbm_path(mu, sigma_coeff, X0, times, noise):
    """Exact geometric Brownian motion on ``times``.

    ``noise`` is either a :class:`NoiseStream` (its increments on the grid are
    drawn from the stream) or the Brownian increments themselves, one per
    interval of ``times``; pass the same increments as the scheme under test
    for a coupled comparison.
    """
    times = np.asarray(times, dtype=float)
    if not X0 > 0:
        raise ValueError("X0 must be positive")
    dt = np.diff(times)
    if isinstance(noise, NoiseStream):
        z = noise.normals(np.arange(dt.size, dtype=np.uint64))
        dB = np.sqrt(dt) * z
    else:
        dB = np.asarray(noise, dtype=float)
    B = np.concatenate([np.zeros(dB.shape[:-1] + (1,)), np.cumsum(dB, axis=-1)], axis=-1)
    elapsed = times - times[0]
    return X0 * np.exp((mu - 0.5 * sigma_coeff**2) * elapsed + sigma_coeff * B)
