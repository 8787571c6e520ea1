"""Scenario configuration: flat ``key = value`` text with dotted keys.

Lines starting with ``#`` or ``;`` are comments. A line ``[section]``
prefixes the following keys with ``section.``. See the README for the
full schema; :data:`SCHEMA` lists every accepted key with its type.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .errors import ConfigError
from .numerics import DEFAULT_TOLERANCES, TOLERANCE_PROFILES, ToleranceSet

#: Environment variable naming the default tolerance profile.
TOLERANCE_ENV = "SIZESTRUCTURED_TOLERANCE"

RUN_MODES = ("simulate_pde", "simulate_de", "convert", "steady", "spectrum", "validate")
INITIAL_KINDS = ("steady", "expression", "file", "constant")
STRUCTURAL_KEYS = ("x_b", "x_bar", "g_inf", "mu_hat", "g_min", "g_max", "beta_sup", "gamma_sup", "sigma_integral")
EXPRESSION_KEYS = ("g", "mu", "beta", "gamma", "f", "sigma")

#: Fixed keys and their types; prefixes ending in "." accept any suffix.
SCHEMA: dict[str, type] = {
    "run": str,
    "horizon": float,
    "outputs": str,
    "model.family": str,
    "model.box": str,
    "weights.mu0": str,
    "grids.x_max": float,
    "grids.n_x": int,
    "grids.a_max": float,
    "grids.n_a": int,
    "grids.dt": float,
    "grids.record_every": float,
    "initial.kind": str,
    "initial.density": str,
    "initial.S0": float,
    "initial.phi": str,
    "initial.psi": str,
    "initial.b": float,
    "initial.file": str,
    "initial.perturb_S": float,
    "initial.scale_n": float,
    "convert.to": str,
    "spectrum.re_min": float,
    "spectrum.re_max": float,
    "spectrum.im_max": float,
    "spectrum.margin": float,
    "tolerance.profile": str,
    "validate.level": str,
}
PREFIXES: dict[str, type] = {
    "model.param.": float,
    "model.const.": float,
    "model.lipschitz.": float,
    "model.expr.": str,
    "tolerance.": float,
}
for _k in STRUCTURAL_KEYS:
    SCHEMA[f"model.{_k}"] = float


@dataclass(frozen=True)
class ModelSpec:
    family: str | None
    params: Mapping[str, float]
    expressions: Mapping[str, str]
    constants: Mapping[str, float]
    named_constants: Mapping[str, float]
    lipschitz: Mapping[str, float]
    box: tuple[float, float, float, float] | None


@dataclass(frozen=True)
class GridSpec:
    x_max: float | None = None
    n_x: int | None = None
    a_max: float | None = None
    n_a: int | None = None
    dt: float = 1.0 / 128.0
    record_every: float | None = None


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "steady"
    density: str | None = None
    S0: float | None = None
    phi: str | None = None
    psi: str | None = None
    b: float | None = None
    file: str | None = None
    perturb_S: float = 0.0
    scale_n: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario (see the README for the meaning of every key)."""

    run: str | None
    horizon: float
    outputs: str
    model: ModelSpec
    mu0: str | float
    grids: GridSpec
    initial: InitialSpec
    convert_to: str
    spectrum: Mapping[str, float]
    tolerances: ToleranceSet
    validate_level: str
    base_dir: Path = field(default=Path("."))
    values: Mapping[str, object] = field(default_factory=dict, repr=False)

    def resolve_path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p


def _coerce(key: str, raw: str, where: str):
    typ = SCHEMA.get(key)
    if typ is None:
        for prefix, t in PREFIXES.items():
            if key.startswith(prefix) and len(key) > len(prefix):
                typ = t
                break
    if typ is None:
        raise ConfigError(f"{where}: unknown key {key!r}")
    if typ is str:
        return raw
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {typ.__name__}, got {raw!r}") from None


def parse_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse config text into a flat ``{dotted_key: value}`` mapping."""
    values: dict[str, object] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        where = f"{source}:{lineno}"
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if not section:
                raise ConfigError(f"{where}: empty section name")
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        key = key.strip()
        if section:
            key = f"{section}.{key}"
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _coerce(key, raw.strip(), where)
    return values


def apply_overrides(values: Mapping[str, object], overrides: list[str]) -> dict[str, object]:
    """Apply ``key=value`` overrides (later ones win)."""
    out = dict(values)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = _coerce(key.strip(), raw.strip(), f"--override {item}")
    return out


def _tolerances(values: Mapping[str, object], where: str) -> ToleranceSet:
    profile = values.get("tolerance.profile") or os.environ.get(TOLERANCE_ENV) or "default"
    if profile not in TOLERANCE_PROFILES:
        raise ConfigError(f"{where}: unknown tolerance profile {profile!r}; choose one of {sorted(TOLERANCE_PROFILES)}")
    tol = TOLERANCE_PROFILES[profile]
    names = {f.name for f in fields(ToleranceSet)}
    changes = {}
    for k, v in values.items():
        if k.startswith("tolerance.") and k != "tolerance.profile":
            name = k[len("tolerance.") :]
            if name not in names:
                raise ConfigError(f"{where}: unknown tolerance {name!r}")
            changes[name] = int(v) if name == "max_iter" else float(v)
    try:
        return tol.with_(**changes) if changes else tol
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _box(raw: str | None, where: str):
    if raw is None:
        return None
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 4:
        raise ConfigError(f"{where}: model.box needs four numbers x_lo, x_hi, S_lo, S_hi")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{where}: model.box entries must be numbers") from None


def build_config(values: Mapping[str, object], source: str = "<config>", base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a flat mapping and build a :class:`ScenarioConfig`."""
    v = dict(values)

    def sub(prefix):
        return {k[len(prefix) :]: val for k, val in v.items() if k.startswith(prefix)}

    run = v.get("run")
    if run is not None:
        run = str(run).replace("-", "_")
        if run not in RUN_MODES:
            raise ConfigError(f"{source}: run must be one of {RUN_MODES}, got {run!r}")
    horizon = float(v.get("horizon", 1.0))
    if horizon < 0.0:
        raise ConfigError(f"{source}: horizon must be >= 0")
    expressions = sub("model.expr.")
    bad = [k for k in expressions if k not in EXPRESSION_KEYS]
    if bad:
        raise ConfigError(f"{source}: unknown expression keys {bad}; allowed {EXPRESSION_KEYS}")
    family = v.get("model.family")
    if family is None and not expressions:
        family = "constant_coefficient"
    if family is not None and expressions:
        raise ConfigError(f"{source}: give either model.family or model.expr.*, not both")
    model = ModelSpec(
        family=family,
        params=sub("model.param."),
        expressions=expressions,
        constants={k: float(v[f"model.{k}"]) for k in STRUCTURAL_KEYS if f"model.{k}" in v},
        named_constants=sub("model.const."),
        lipschitz=sub("model.lipschitz."),
        box=_box(v.get("model.box"), source),
    )
    mu0_raw = str(v.get("weights.mu0", "auto"))
    if mu0_raw == "auto":
        mu0: str | float = "auto"
    else:
        try:
            mu0 = float(mu0_raw)
        except ValueError:
            raise ConfigError(f"{source}: weights.mu0 must be 'auto' or a number") from None
        if mu0 <= 0.0:
            raise ConfigError(f"{source}: weights.mu0 must be positive")
    grids = GridSpec(
        x_max=v.get("grids.x_max"),
        n_x=v.get("grids.n_x"),
        a_max=v.get("grids.a_max"),
        n_a=v.get("grids.n_a"),
        dt=float(v.get("grids.dt", 1.0 / 128.0)),
        record_every=v.get("grids.record_every"),
    )
    for name in ("x_max", "a_max", "dt", "record_every"):
        val = getattr(grids, name)
        if val is not None and not val > 0.0:
            raise ConfigError(f"{source}: grids.{name} must be positive")
    for name in ("n_x", "n_a"):
        val = getattr(grids, name)
        if val is not None and val < 4:
            raise ConfigError(f"{source}: grids.{name} must be at least 4")
    if grids.a_max is not None and grids.n_a is not None:
        da = grids.a_max / grids.n_a
        if abs(da - grids.dt) > 1e-9 * grids.dt:
            raise ConfigError(f"{source}: grids.a_max/grids.n_a = {da} must equal grids.dt = {grids.dt} (ages step with time)")
    initial = InitialSpec(
        kind=str(v.get("initial.kind", "steady")),
        density=v.get("initial.density"),
        S0=v.get("initial.S0"),
        phi=v.get("initial.phi"),
        psi=v.get("initial.psi"),
        b=v.get("initial.b"),
        file=v.get("initial.file"),
        perturb_S=float(v.get("initial.perturb_S", 0.0)),
        scale_n=float(v.get("initial.scale_n", 1.0)),
    )
    if initial.kind not in INITIAL_KINDS:
        raise ConfigError(f"{source}: initial.kind must be one of {INITIAL_KINDS}")
    if initial.kind == "file" and not initial.file:
        raise ConfigError(f"{source}: initial.kind = file needs initial.file")
    if initial.kind == "constant" and (initial.b is None or initial.S0 is None):
        raise ConfigError(f"{source}: initial.kind = constant needs initial.b and initial.S0")
    if initial.kind == "expression":
        if initial.S0 is None:
            raise ConfigError(f"{source}: initial.kind = expression needs initial.S0")
        if initial.density is None and initial.phi is None:
            raise ConfigError(f"{source}: initial.kind = expression needs initial.density or initial.phi/psi")
    convert_to = str(v.get("convert.to", "history"))
    if convert_to not in ("history", "density"):
        raise ConfigError(f"{source}: convert.to must be 'history' or 'density'")
    level = str(v.get("validate.level", "quick"))
    if level not in ("quick", "full"):
        raise ConfigError(f"{source}: validate.level must be 'quick' or 'full'")
    return ScenarioConfig(
        run=run,
        horizon=horizon,
        outputs=str(v.get("outputs", "out")),
        model=model,
        mu0=mu0,
        grids=grids,
        initial=initial,
        convert_to=convert_to,
        spectrum=sub("spectrum."),
        tolerances=_tolerances(v, source),
        validate_level=level,
        base_dir=base_dir or Path("."),
        values=v,
    )


def load_config(path: str | os.PathLike, overrides: list[str] | None = None) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    values = parse_text(p.read_text(), str(p))
    values = apply_overrides(values, overrides or [])
    return build_config(values, str(p), p.parent)


def default_tolerances() -> ToleranceSet:
    """Tolerances of the profile named by :data:`TOLERANCE_ENV` (default profile otherwise)."""
    name = os.environ.get(TOLERANCE_ENV, "default")
    return TOLERANCE_PROFILES.get(name, DEFAULT_TOLERANCES)
