"""CSV reading and writing for states, trajectories and spectra.

Files start with ``#`` comment lines of the form ``# key: value`` (model
hash, grid parameters, scalar state components), followed by a header
row and the data. Floats are written with ``repr`` so that reading a file
back reproduces the numbers exactly. One header line (``# created``)
carries a timestamp; everything else is deterministic.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io as _io
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .delay_engine import HistoryState
from .errors import ConfigError
from .numerics import Grid1D
from .pde_engine import DensityState

DENSITY_COLUMNS = ("x", "n")
HISTORY_COLUMNS = ("theta", "phi", "psi")
TRAJECTORY_COLUMNS = ("t", "S", "b")
SPECTRUM_COLUMNS = ("re_lambda", "im_lambda", "residual")
STEADY_COLUMNS = ("S_star", "b_star", "R_value", "lifetime_consumption")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(
    path: str | os.PathLike,
    columns: Sequence[str],
    rows: Sequence[Sequence],
    meta: Mapping[str, object] | None = None,
    timestamp: bool = True,
) -> Path:
    """Write a commented CSV table atomically."""
    buf = _io.StringIO()
    if timestamp:
        buf.write(f"# created: {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {_fmt(v)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_table(path: str | os.PathLike) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Read a table written by :func:`write_table`; returns ``(meta, columns)``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    meta: dict[str, str] = {}
    body: list[str] = []
    with path.open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    meta[key.strip()] = value.strip()
            elif line.strip():
                body.append(line)
    if not body:
        raise ConfigError(f"{path}: no header row")
    reader = csv.reader(body)
    header = next(reader)
    data: list[list[float]] = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ConfigError(f"{path}: data row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ConfigError(f"{path}: data row {lineno}: {exc}") from None
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return meta, {name: arr[:, i].copy() for i, name in enumerate(header)}


def _require(columns: Mapping[str, np.ndarray], names: Sequence[str], path) -> None:
    missing = [n for n in names if n not in columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")


def _meta_float(meta: Mapping[str, str], key: str, path, default: float | None = None) -> float:
    if key not in meta:
        if default is not None:
            return default
        raise ConfigError(f"{path}: header lacks '# {key}: ...'")
    try:
        return float(meta[key])
    except ValueError:
        raise ConfigError(f"{path}: header value for {key!r} is not a number") from None


def write_density(path, state: DensityState, model_hash: str = "", extra: Mapping[str, object] | None = None, timestamp=True) -> Path:
    meta = {
        "kind": "density",
        "model_hash": model_hash,
        "S0": float(state.S0),
        "kappa0": float(state.kappa0),
        "tail_mass": float(state.tail_mass),
        "n_nodes": state.x_grid.size,
        "x_max": float(state.x_max),
    }
    meta.update(extra or {})
    return write_table(path, DENSITY_COLUMNS, zip(state.nodes, state.n_values), meta, timestamp)


def read_density(path) -> DensityState:
    meta, cols = read_table(path)
    _require(cols, DENSITY_COLUMNS, path)
    kappa0 = _meta_float(meta, "kappa0", path)
    return DensityState(
        Grid1D(cols["x"], kappa0),
        np.maximum(cols["n"], 0.0),
        _meta_float(meta, "S0", path),
        kappa0,
        _meta_float(meta, "tail_mass", path, 0.0),
    )


def write_history(path, h: HistoryState, model_hash: str = "", extra: Mapping[str, object] | None = None, timestamp=True) -> Path:
    meta = {
        "kind": "history",
        "model_hash": model_hash,
        "mu0": float(h.mu0),
        "phi_tail_norm": float(h.phi_tail_norm),
        "psi_tail_mode": h.psi_tail_mode,
        "da": float(h.da),
        "a_max": float(h.a_max),
    }
    meta.update(extra or {})
    return write_table(path, HISTORY_COLUMNS, zip(-h.ages, h.phi_values, h.psi_values), meta, timestamp)


def read_history(path) -> HistoryState:
    meta, cols = read_table(path)
    _require(cols, HISTORY_COLUMNS, path)
    ages = -cols["theta"]
    if ages.size < 2 or ages[0] != 0.0:
        raise ConfigError(f"{path}: history must start at theta = 0")
    return HistoryState(
        Grid1D(ages),
        np.maximum(cols["phi"], 0.0),
        np.maximum(cols["psi"], 0.0),
        _meta_float(meta, "mu0", path),
        _meta_float(meta, "phi_tail_norm", path, 0.0),
        meta.get("psi_tail_mode", "constant-extension"),
    )


def write_trajectory(path, t, S, b, model_hash: str = "", extra=None, timestamp=True) -> Path:
    meta = {"kind": "trajectory", "model_hash": model_hash}
    meta.update(extra or {})
    return write_table(path, TRAJECTORY_COLUMNS, zip(t, S, b), meta, timestamp)


def write_spectrum(path, roots, model_hash: str = "", extra=None, timestamp=True) -> Path:
    meta = {"kind": "spectrum", "model_hash": model_hash}
    meta.update(extra or {})
    rows = [(r.value.real, r.value.imag, r.residual) for r in roots]
    return write_table(path, SPECTRUM_COLUMNS, rows, meta, timestamp)


def read_kind(path) -> str:
    meta, _ = read_table(path)
    return meta.get("kind", "")
