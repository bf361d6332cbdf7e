"""Flat ``name = value`` parameter files.

One assignment per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys, duplicates and malformed values are rejected with the line
number; missing required keys are reported by name.

Keys fall into four groups:

* model parameters (every field of :class:`ModelParameters`);
* meal protocol ``t0..t3`` (min), ``a0..a3`` (mg/min), ``bw`` (kg), ``vbar``;
* initial state ``G0, I0, beta0, gamma0, sigma0``;
* run settings (simulation grid, seed, stationary sampling, fitting).

``model`` selects what is simulated: ``ogtt`` (the 5-D system, default),
``linear1d`` (``dX = (a - bX) dt + alpha X dB``) or ``gbm``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .model import STATE_NAMES, MealProtocol, ModelError, ModelParameters
from .simulate import DEFAULT_SEED, POLICIES, SCHEMES, LinearSDE, SimulationConfig

MODELS = ("ogtt", "linear1d", "gbm")
PROTOCOL_KEYS = ("t0", "t1", "t2", "t3", "a0", "a1", "a2", "a3", "bw")
STATE_KEYS = tuple(f"{n}0" for n in STATE_NAMES)


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        where = f"{source or '<config>'}:{line}: " if line else (f"{source}: " if source else "")
        super().__init__(where + message)
        self.line = line


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return value


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


def _names(text):
    return tuple(n.strip() for n in text.split(",") if n.strip())


def _pair(text):
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def _pos_int(text):
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


# key -> (parser, default); a default of ``None`` means optional with no value
SETTINGS = {
    "model": (_choice(MODELS), "ogtt"),
    "vbar": (float, 1.569),
    "t_start": (float, 0.0),
    "t_end": (float, 120.0),
    "dt": (float, 0.1),
    "scheme": (_choice(SCHEMES), "log_euler"),
    "euler_policy": (_choice(POLICIES), "clamp"),
    "seed": (_u64, DEFAULT_SEED),
    "n_paths": (_pos_int, 1),
    "record_stride": (_pos_int, 1),
    # one-dimensional test equations
    "x0": (float, 1.0),
    "lin_a": (float, 1.0),
    "lin_b": (float, 1.0),
    "lin_alpha": (float, 0.5),
    "gbm_mu": (float, 0.1),
    "gbm_sigma": (float, 0.2),
    # stationary sampling
    "t_total": (float, None),
    "burn_in": (float, None),
    "thinning": (float, None),
    "stationary_dt": (float, None),
    "n_chains": (_pos_int, 1),
    "bins": (_pos_int, 50),
    "ks_threshold": (float, 0.05),
    "analytic_ks_threshold": (float, 0.02),
    # measure change
    "novikov_threshold": (float, 1e6),
    "girsanov_paths_written": (int, 10),
    # fitting
    "fit_free": (_names, ()),
    "fit_xatol": (float, 1e-6),
    "fit_max_evals": (_pos_int, 100_000),
}


def _parser(key):
    if key in SETTINGS:
        return SETTINGS[key][0]
    if key.startswith("bound_"):
        return _pair
    return float


def known_key(key) -> bool:
    if key in SETTINGS or key in PROTOCOL_KEYS or key in STATE_KEYS:
        return True
    if key in ModelParameters.names():
        return True
    if key.startswith("bound_"):
        name = key[len("bound_"):]
        return name in ModelParameters.names() or name in ("mu", "sigma")
    return False


def parse_lines(text, source=None) -> dict:
    """``{key: (raw value, line number)}`` with syntax and key checks."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'name = value', got {raw.strip()!r}", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty name or value in {raw.strip()!r}", lineno, source)
        if not known_key(key):
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first on line {entries[key][1]})",
                              lineno, source)
        entries[key] = (value, lineno)
    return entries


@dataclass
class RunConfig:
    values: dict
    lines: dict
    source: str = "<config>"
    digest: str = ""
    text: str = ""
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        value = self.values.get(key)
        return default if value is None else value

    @property
    def model(self) -> str:
        return self.values["model"]

    def _error(self, message, key=None):
        return ConfigError(message, self.lines.get(key), self.source)

    # ---------------------------------------------------------------- builders
    def theta(self) -> ModelParameters:
        kwargs = {n: self.values[n] for n in ModelParameters.names()}
        try:
            return ModelParameters(**kwargs)
        except ModelError as err:
            key = next((n for n in ModelParameters.names() if n in str(err).split()), None)
            raise self._error(str(err), key) from err

    def protocol(self) -> MealProtocol:
        v = self.values
        try:
            return MealProtocol(breakpoints=tuple(v[f"t{i}"] for i in range(4)),
                                values=tuple(v[f"a{i}"] for i in range(4)),
                                body_weight=v["bw"], v_bar=v["vbar"])
        except (ModelError, ValueError) as err:
            raise self._error(f"meal protocol: {err}", "t0") from err

    def y0(self) -> np.ndarray:
        if self.model == "ogtt":
            y = np.array([self.values[k] for k in STATE_KEYS])
            for k, value in zip(STATE_KEYS, y):
                if not value > 0:
                    raise self._error(f"initial state {k} must be > 0", k)
            return y
        if not self.values["x0"] > 0:
            raise self._error("x0 must be > 0", "x0")
        return np.array([self.values["x0"]])

    def system(self):
        """Parameters or equivalent system object for the selected model."""
        if self.model == "ogtt":
            return self.theta()
        if self.model == "linear1d":
            v = self.values
            return LinearSDE(v["lin_a"], -v["lin_b"], v["lin_alpha"])
        return LinearSDE(0.0, self.values["gbm_mu"], self.values["gbm_sigma"])

    def simulation(self, **changes) -> SimulationConfig:
        v = self.values
        kwargs = dict(t_start=v["t_start"], t_end=v["t_end"], dt=v["dt"], scheme=v["scheme"],
                      seed=v["seed"], n_paths=v["n_paths"], record_stride=v["record_stride"],
                      euler_policy=v["euler_policy"])
        kwargs.update(changes)
        try:
            return SimulationConfig(**kwargs)
        except ValueError as err:
            key = next((k for k in kwargs if k in str(err)), "dt")
            raise self._error(str(err), key) from err

    def bounds(self) -> dict:
        return {k[len("bound_"):]: v for k, v in self.values.items() if k.startswith("bound_")}

    def resolved(self) -> dict:
        """JSON-ready view of every resolved value."""
        out = {}
        for key, value in self.values.items():
            out[key] = list(value) if isinstance(value, tuple) else value
        return out


def _required(values) -> list:
    keys = []
    if values.get("model", "ogtt") == "ogtt":
        keys += list(ModelParameters.names()) + list(PROTOCOL_KEYS) + list(STATE_KEYS)
    return keys


def load_text(text, source="<config>", overrides=None) -> RunConfig:
    """Parse ``text``; ``overrides`` (``{key: raw string}``) take precedence."""
    entries = parse_lines(text, source)
    overrides = dict(overrides or {})
    for key, raw in overrides.items():
        if not known_key(key):
            raise ConfigError(f"unknown override key {key!r}", source="command line")
        entries[key] = (str(raw), None)
    values, lines = {}, {}
    for key, (raw, lineno) in entries.items():
        try:
            values[key] = _parser(key)(raw)
        except ValueError as err:
            where = source if lineno else "command line"
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({err})", lineno, where) from None
        if lineno:
            lines[key] = lineno
    for key, (_, default) in SETTINGS.items():
        values.setdefault(key, default)
    missing = [k for k in _required(values) if k not in values]
    if missing:
        raise ConfigError("missing required key(s): " + ", ".join(missing), source=source)
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return RunConfig(values, lines, source, digest, text, overrides)


def load(path, overrides=None) -> RunConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise ConfigError(f"cannot read parameter file: {err}", source=str(path)) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as err:
        raise ConfigError(f"not UTF-8: {err}", source=str(path)) from None
    cfg = load_text(text, str(path), overrides)
    cfg.digest = hashlib.sha256(data).hexdigest()
    return cfg


def default_text(name="default.params") -> str:
    return resources.files("ogttsde").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def load_default(name="default.params", overrides=None) -> RunConfig:
    return load_text(default_text(name), name, overrides)
