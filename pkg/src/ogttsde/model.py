"""Parameters, state space and coefficient functions of the stochastic OGTT model.

The state is ``Y = (G, I, beta, gamma, sigma)``::

    dG     = (OGTT(t) + HGP(S_I, I) - (E_G0 + m S_I I) G) dt + alpha1 G dB1
    dI     = (beta/V ISR(sigma, G) - k I) dt                  + alpha2 I dB2
    dbeta  = (P(ISR) - A(M)) beta / tau_beta dt              + alpha3 beta dB3
    dgamma = (gamma_inf(G) - gamma) / tau_gamma dt           + alpha4 gamma dB4
    dsigma = (sigma_inf(ISR, M) - sigma) / tau_sigma dt      + alpha5 sigma dB5

Every row has the form ``dZ = (b + phi Z) dt + alpha Z dB`` with ``b >= 0``;
:func:`drift_split` returns the pair ``(b, phi)`` and the integrators in
:mod:`ogttsde.simulate` build on it.

All functions accept a single state of shape ``(5,)`` or a stack of states of
shape ``(..., 5)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

STATE_NAMES = ("G", "I", "beta", "gamma", "sigma")
N_STATE = 5


class ModelError(ValueError):
    """Invalid parameters, protocol or state."""


class MonotoneConditionError(ModelError):
    """The growth ratio of the monotone condition diverges along a ray."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class ModelParameters:
    E_G0: float
    m: float
    S_I: float
    k: float
    V: float
    tau_beta: float
    tau_gamma: float
    tau_sigma: float
    k_ISR: float
    alpha_ISR: float
    k_M: float
    alpha_M: float
    hgp_max: float
    alpha_HGP: float
    p_max: float
    alpha_P: float
    k_P: float
    a_max: float
    alpha_A: float
    k_A: float
    gamma_inf_max: float
    alpha_gamma: float
    k_gamma: float
    sigma_inf_max: float
    alpha_sigma_isr: float
    alpha_sigma_m: float
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    alpha5: float

    # strictly positive: rates, volumes, time constants, Hill midpoints
    _POSITIVE = (
        "E_G0", "m", "S_I", "k", "V", "tau_beta", "tau_gamma", "tau_sigma",
        "alpha_ISR", "alpha_M", "alpha_HGP", "alpha_P", "alpha_A",
        "alpha_gamma", "alpha_sigma_isr",
    )
    _EXPONENTS = ("k_ISR", "k_M", "k_P", "k_A", "k_gamma")
    _NONNEGATIVE = (
        "hgp_max", "p_max", "a_max", "gamma_inf_max", "sigma_inf_max",
        "alpha_sigma_m", "alpha1", "alpha2", "alpha3", "alpha4", "alpha5",
    )

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value):
                raise ModelError(f"parameter {f.name} is not finite: {value!r}")
            object.__setattr__(self, f.name, float(value))
        for name in self._POSITIVE:
            if getattr(self, name) <= 0:
                raise ModelError(f"parameter {name} must be > 0")
        for name in self._EXPONENTS:
            if getattr(self, name) < 1:
                raise ModelError(f"Hill exponent {name} must be >= 1")
        for name in self._NONNEGATIVE:
            if getattr(self, name) < 0:
                raise ModelError(f"parameter {name} must be >= 0")

    @classmethod
    def names(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    @property
    def noise(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5])

    def replace(self, **changes) -> "ModelParameters":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class MealProtocol:
    """Piecewise-linear glucose appearance during the OGTT.

    ``values`` are appearance rates in mg/min at ``breakpoints`` (min); the
    rate entering the glucose equation is divided by ``V_G = body_weight * v_bar``.
    """

    breakpoints: tuple = (0.0, 30.0, 60.0, 120.0)
    values: tuple = (0.0, 0.0, 0.0, 0.0)
    body_weight: float = 70.0
    v_bar: float = 1.569

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        vals = tuple(float(x) for x in self.values)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if len(bp) != 4 or len(vals) != 4:
            raise ModelError("meal protocol needs exactly four breakpoints and four values")
        if not all(np.isfinite(bp)) or not all(np.isfinite(vals)):
            raise ModelError("meal protocol entries must be finite")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise ModelError("meal protocol breakpoints must be strictly increasing")
        if any(v < 0 for v in vals):
            raise ModelError("meal protocol values must be non-negative")
        if not self.body_weight * self.v_bar > 0:
            raise ModelError("glucose distribution volume BW * v_bar must be > 0")

    @property
    def volume(self) -> float:
        return self.body_weight * self.v_bar

    @classmethod
    def zero(cls) -> "MealProtocol":
        return cls()

    @property
    def is_zero(self) -> bool:
        return not any(self.values)


ZERO_PROTOCOL = MealProtocol()


def check_state(Y, name="state") -> np.ndarray:
    """Return ``Y`` as a float array after checking positivity and finiteness."""
    Y = np.asarray(Y, dtype=float)
    if Y.shape[-1:] != (N_STATE,):
        raise ModelError(f"{name} must have trailing dimension 5, got shape {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise ModelError(f"{name} has non-finite components")
    if not np.all(Y > 0):
        raise ModelError(f"{name} must be strictly positive")
    return Y


# ---------------------------------------------------------------- coefficients

def _hill(x, exponent, midpoint):
    xk = np.power(x, exponent)
    return xk / (midpoint**exponent + xk)


def hill(x, exponent, midpoint):
    """Hill function ``x**k / (a**k + x**k)``, increasing from 0 towards 1."""
    x = np.asarray(x, dtype=float)
    if not (np.all(np.isfinite(x)) and np.isfinite(exponent) and np.isfinite(midpoint)):
        raise ModelError("hill arguments must be finite")
    if np.any(x < 0):
        raise ModelError("hill is defined for x >= 0 only")
    if exponent < 1 or midpoint <= 0:
        raise ModelError("hill needs exponent >= 1 and midpoint > 0")
    out = _hill(x, exponent, midpoint)
    return float(out) if out.ndim == 0 else out


def metabolic_rate_M(G, theta: ModelParameters):
    return hill(G, theta.k_M, theta.alpha_M)


def insulin_secretion_rate(sigma, gamma, G, theta: ModelParameters):
    """Secretion per unit beta-cell mass, ``sigma * hill(M(G) + gamma)``.

    Raises on a negative drive ``M + gamma``; the simulation path clamps it
    instead (see :func:`drift_split`).
    """
    M = metabolic_rate_M(G, theta)
    drive = np.asarray(M + np.asarray(gamma, dtype=float))
    if np.any(drive < 0):
        raise ModelError("M(G) + gamma is negative")
    if np.any(np.asarray(sigma) < 0):
        raise ModelError("secretory capacity sigma must be >= 0")
    out = np.asarray(sigma) * _hill(drive, theta.k_ISR, theta.alpha_ISR)
    return float(out) if out.ndim == 0 else out


def ogtt_rate(t, protocol: MealProtocol):
    """Glucose appearance rate in mg/dL/min; zero outside the meal window."""
    t = np.asarray(t, dtype=float)
    bp, vals = protocol.breakpoints, protocol.values
    inside = (t >= bp[0]) & (t <= bp[-1])
    out = np.where(inside, np.interp(t, bp, vals), 0.0) / protocol.volume
    return float(out) if out.ndim == 0 else out


def hepatic_glucose_production(S_I, I, theta: ModelParameters):
    return theta.hgp_max / (1.0 + S_I * np.asarray(I, dtype=float) / theta.alpha_HGP)


def proliferation(isr, theta: ModelParameters):
    return theta.p_max * _hill(isr, theta.k_P, theta.alpha_P)


def apoptosis(M, theta: ModelParameters):
    return theta.a_max * _hill(M, theta.k_A, theta.alpha_A)


def beta_net_growth(isr, M, theta: ModelParameters):
    """Net relative growth rate of beta-cell mass, ``(P(ISR) - A(M)) / tau_beta``."""
    return (proliferation(isr, theta) - apoptosis(M, theta)) / theta.tau_beta


def gamma_infinity(G, theta: ModelParameters):
    return theta.gamma_inf_max * _hill(np.asarray(G, dtype=float), theta.k_gamma, theta.alpha_gamma)


def sigma_infinity(isr, M, theta: ModelParameters):
    inc = _hill(np.asarray(isr, dtype=float), 2.0, theta.alpha_sigma_isr)
    return theta.sigma_inf_max * inc * np.maximum(1.0 - np.asarray(M) * theta.alpha_sigma_m, 0.0)


@dataclass(frozen=True)
class CoefficientForms:
    """Swappable closures for the coefficient functions with no canonical form.

    Each callable takes its documented arguments plus ``theta``.
    """

    hgp: Callable = hepatic_glucose_production
    proliferation: Callable = proliferation
    apoptosis: Callable = apoptosis
    gamma_inf: Callable = gamma_infinity
    sigma_inf: Callable = sigma_infinity


DEFAULT_FORMS = CoefficientForms()


# ------------------------------------------------------------- drift / noise

def drift_split(t, Y, theta: ModelParameters, protocol: MealProtocol = ZERO_PROTOCOL,
                forms: Optional[CoefficientForms] = None):
    """Return ``(b, phi)`` with ``drift = b + phi * Y`` row by row.

    ``b`` collects the non-negative source terms, ``phi`` the linear rates.
    """
    forms = forms or DEFAULT_FORMS
    Y = np.asarray(Y, dtype=float)
    G, I, beta, gamma, sigma = (Y[..., j] for j in range(N_STATE))
    M = _hill(G, theta.k_M, theta.alpha_M)
    drive = np.maximum(M + gamma, 0.0)
    isr = sigma * _hill(drive, theta.k_ISR, theta.alpha_ISR)

    b = np.empty(Y.shape)
    phi = np.empty(Y.shape)
    b[..., 0] = ogtt_rate(t, protocol) + forms.hgp(theta.S_I, I, theta)
    phi[..., 0] = -(theta.E_G0 + theta.m * theta.S_I * I)
    b[..., 1] = beta / theta.V * isr
    phi[..., 1] = -theta.k
    b[..., 2] = 0.0
    phi[..., 2] = (forms.proliferation(isr, theta) - forms.apoptosis(M, theta)) / theta.tau_beta
    b[..., 3] = forms.gamma_inf(G, theta) / theta.tau_gamma
    phi[..., 3] = -1.0 / theta.tau_gamma
    b[..., 4] = forms.sigma_inf(isr, M, theta) / theta.tau_sigma
    phi[..., 4] = -1.0 / theta.tau_sigma
    return b, phi


def isr_clamp_events(Y, theta: ModelParameters) -> int:
    """Number of states whose secretion drive ``M + gamma`` had to be clamped at 0."""
    Y = np.asarray(Y, dtype=float)
    M = _hill(np.maximum(Y[..., 0], 0.0), theta.k_M, theta.alpha_M)
    return int(np.count_nonzero(M + Y[..., 3] < 0))


def drift(t, Y, theta: ModelParameters, protocol: MealProtocol = ZERO_PROTOCOL,
          forms: Optional[CoefficientForms] = None) -> np.ndarray:
    b, phi = drift_split(t, Y, theta, protocol, forms)
    out = b + phi * np.asarray(Y, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ModelError("drift evaluated to a non-finite value")
    return out


def diffusion_diag(Y, theta: ModelParameters) -> np.ndarray:
    """Diagonal of the diffusion matrix: each component times its own noise amplitude."""
    return theta.noise * np.asarray(Y, dtype=float)


# ---------------------------------------------------------- numerical checks

def quasi_steady_isr(G, theta: ModelParameters, forms: Optional[CoefficientForms] = None,
                     sigma0=None, n_iter=200):
    """Secretion rate with gamma and sigma relaxed to their targets at fixed glucose.

    ``sigma`` is found by fixed-point iteration from ``sigma0`` (default
    ``sigma_inf_max``), which selects the upper, secreting branch.
    """
    forms = forms or DEFAULT_FORMS
    G = np.asarray(G, dtype=float)
    M = _hill(G, theta.k_M, theta.alpha_M)
    gamma = forms.gamma_inf(G, theta)
    h = _hill(np.maximum(M + gamma, 0.0), theta.k_ISR, theta.alpha_ISR)
    sigma = np.full(G.shape, theta.sigma_inf_max if sigma0 is None else sigma0, dtype=float)
    for _ in range(n_iter):
        sigma = forms.sigma_inf(sigma * h, M, theta)
    return sigma * h, M


def check_beta_growth_shape(theta: ModelParameters, G_grid=None,
                            forms: Optional[CoefficientForms] = None):
    """Check that net beta-cell growth is positive for modest and negative for large glucose.

    Returns ``(G_low, G_high)``; raises :class:`ModelError` if the grid shows no
    positive value followed by a negative one.
    """
    forms = forms or DEFAULT_FORMS
    if G_grid is None:
        G_grid = np.linspace(1.0, 1000.0, 2000)
    G_grid = np.asarray(G_grid, dtype=float)
    isr, M = quasi_steady_isr(G_grid, theta, forms)
    growth = (forms.proliferation(isr, theta) - forms.apoptosis(M, theta)) / theta.tau_beta
    pos = np.flatnonzero(growth > 0)
    if pos.size:
        neg_after = np.flatnonzero((growth < 0) & (np.arange(G_grid.size) > pos[0]))
        if neg_after.size:
            return float(G_grid[pos[0]]), float(G_grid[neg_after[0]])
    raise ModelError(
        "beta-cell net growth lacks the (+ then -) pattern over increasing glucose"
    )


def monotone_ratio(t, Y, theta: ModelParameters, protocol: MealProtocol = ZERO_PROTOCOL,
                   forms: Optional[CoefficientForms] = None):
    """``(y.f(t, y) + |g(y)|^2 / 2) / (1 + |y|^2)`` for each state."""
    Y = np.asarray(Y, dtype=float)
    f = drift(t, Y, theta, protocol, forms)
    g = diffusion_diag(Y, theta)
    sq = np.sum(Y * Y, axis=-1)
    return (np.sum(Y * f, axis=-1) + 0.5 * np.sum(g * g, axis=-1)) / (1.0 + sq)


def check_monotone_condition(theta: ModelParameters, protocol: MealProtocol,
                             sample_states: Sequence, horizon: float, n_times: int = 49,
                             forms: Optional[CoefficientForms] = None) -> float:
    """Empirical constant ``K`` of the monotone growth condition.

    Maximum of :func:`monotone_ratio` over the sample states and a uniform time
    grid on ``[0, horizon]``.
    """
    Y = check_state(np.atleast_2d(sample_states), "sample state")
    times = np.linspace(0.0, horizon, n_times)
    return float(max(np.max(monotone_ratio(t, Y, theta, protocol, forms)) for t in times))


def probe_monotone_rays(theta: ModelParameters, protocol: MealProtocol, directions,
                        radii=(1e2, 1e3, 1e4, 1e5), t=0.0, growth_factor=2.0,
                        forms: Optional[CoefficientForms] = None) -> float:
    """Follow rays ``r * d`` outwards and fail if the monotone ratio keeps growing.

    A ray diverges when the ratio increases by more than ``growth_factor``
    between every pair of consecutive radii. Returns the largest ratio seen
    otherwise.
    """
    directions = check_state(np.atleast_2d(directions), "ray direction")
    radii = np.asarray(radii, dtype=float)
    worst = -np.inf
    for d in directions:
        states = radii[:, None] * d[None, :]
        ratio = monotone_ratio(t, states, theta, protocol, forms)
        if ratio[-1] > 0 and np.all(ratio[1:] > growth_factor * np.maximum(ratio[:-1], 0.0)):
            raise MonotoneConditionError(
                f"monotone ratio diverges along ray; last ratio {ratio[-1]:.3g} at state "
                f"{np.array2string(states[-1], precision=4)}",
                states[-1],
            )
        worst = max(worst, float(np.max(ratio)))
    return worst


def validate_parameters(theta: ModelParameters, forms: Optional[CoefficientForms] = None):
    """Configuration-level checks beyond field ranges (currently the beta growth shape)."""
    check_beta_growth_shape(theta, forms=forms)
