"""CSV and JSON artifacts.

Floats are written with ``%.17g`` so every value round-trips exactly; Python
formatting ignores the process locale.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .infer import Observations
from .model import STATE_NAMES

STATE_HEADER = ("t",) + STATE_NAMES


class ObservationFormatError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(f"row {row}: {message}" if row else message)
        self.row = row


def fmt(x) -> str:
    return "%.17g" % x


def atomic_write_text(path, text):
    """Write via a temporary sibling and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def path_header(n_dim):
    return STATE_HEADER if n_dim == len(STATE_NAMES) else ("t",) + tuple(f"x{j}" for j in range(n_dim))


def write_path(path, record):
    states = record.states
    rows = np.column_stack([record.times, states])
    write_csv(path, path_header(states.shape[1]), rows)


def read_path(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def path_filename(index) -> str:
    return f"path_{index:06d}.csv"


def write_ensemble(directory, records, manifest) -> list:
    directory = Path(directory)
    names = []
    for rec in records:
        name = path_filename(rec.path_index)
        write_path(directory / name, rec)
        names.append(name)
    write_json(directory / "ensemble.json", dict(manifest, files=names))
    return names + ["ensemble.json"]


def read_observations(path) -> Observations:
    """Observation CSV with header ``t,G,I,beta,gamma,sigma`` (or ``t,x`` for scalar models)."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise ObservationFormatError(f"cannot read {path}: {err}") from None
    if not lines:
        raise ObservationFormatError("empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 2:
        raise ObservationFormatError(f"header must start with 't', got {lines[0]!r}", 1)
    if len(header) == 6 and tuple(header) != STATE_HEADER:
        raise ObservationFormatError(f"expected header {','.join(STATE_HEADER)}", 1)
    times, states = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise ObservationFormatError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise ObservationFormatError(f"non-numeric field in {line!r}", lineno) from None
        if not all(np.isfinite(values)):
            raise ObservationFormatError("non-finite value", lineno)
        if any(v <= 0 for v in values[1:]):
            bad = header[1 + [v <= 0 for v in values[1:]].index(True)]
            raise ObservationFormatError(f"non-positive state {bad} = {values[header.index(bad)]}",
                                         lineno)
        if times and values[0] <= times[-1]:
            raise ObservationFormatError("times must be strictly increasing", lineno)
        times.append(values[0])
        states.append(values[1:])
    if len(times) < 2:
        raise ObservationFormatError(f"need at least 2 observations, found {len(times)}")
    return Observations(np.array(times), np.array(states), source=str(path))


def write_observations(path, times, states):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    write_csv(path, path_header(states.shape[1]), np.column_stack([times, states]))
