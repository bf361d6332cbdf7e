"""Stochastic glucose-insulin-beta-cell model: simulation, measure change,
invariant-measure diagnostics and Euler-likelihood inference."""

from .model import (
    STATE_NAMES,
    ZERO_PROTOCOL,
    CoefficientForms,
    MealProtocol,
    ModelError,
    ModelParameters,
    MonotoneConditionError,
    diffusion_diag,
    drift,
    validate_parameters,
)
from .noise import NoiseStream, gaussian
from .simulate import (
    DEFAULT_SEED,
    LinearSDE,
    OGTTSystem,
    PathAbortError,
    PathRecord,
    SimulationConfig,
    simulate_ensemble,
    simulate_path,
)
from .girsanov import girsanov_log_density, martingale_check
from .measure import EmpiricalMeasure, StationarityReport, long_run_sample, stationarity_report
from .infer import A1Error, FitResult, GBMParameters, Observations, fit_mle, log_likelihood
from .config import ConfigError, load, load_default

__version__ = "0.1.0"
