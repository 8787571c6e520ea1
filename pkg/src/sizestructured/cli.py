"""Command-line front end.

``sizestructured <verb> --config FILE [--out DIR] [--override key=value ...]``
with verbs ``simulate-pde``, ``simulate-de``, ``convert``, ``steady``,
``spectrum`` and ``validate``. Exit codes: 0 success, 2 configuration
error, 3 numerical failure (including failed validation checks), 4
hypothesis-check failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ScenarioConfig, load_config
from .delay_engine import HistoryState, advance_history, constant_history, default_age_horizon, history_norm
from .equilibrium import find_steady_states, reproduction_slope, solve_steady, steady_density_state
from .errors import ConfigError, HypothesisError, NumericalError
from .expressions import compile_expression
from .ingredients import (
    DOCUMENTED_BOXES,
    ModelIngredients,
    WeightPair,
    builtin_family,
    check_hypotheses,
    expression_model,
)
from .intertwine import map_L, map_L_inv
from .numerics import Grid1D, Rectangle
from .pde_engine import (
    DensityState,
    birth_rate_from_density,
    check_tail,
    density_from_function,
    graded_size_grid,
    picard_resource,
    x_max_for_tail,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_HYPOTHESIS = 4

VERBS = ("simulate-pde", "simulate-de", "convert", "steady", "spectrum", "validate")

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunReport:
    status: int
    files: tuple[Path, ...]
    summary: str


# ---------------------------------------------------------------------------
# Building blocks from the configuration
# ---------------------------------------------------------------------------


def build_model(cfg: ScenarioConfig) -> ModelIngredients:
    model_spec = cfg.model
    if model_spec.family is not None:
        if model_spec.constants:
            raise ConfigError(f"structural constants {sorted(model_spec.constants)} only apply to expression models")
        m = builtin_family(model_spec.family, model_spec.params or None)
        if model_spec.lipschitz:
            m = dataclasses.replace(m, lipschitz={**m.lipschitz, **model_spec.lipschitz})
        return m
    if model_spec.params:
        raise ConfigError("model.param.* only applies to builtin families; use model.const.* in expressions")
    return expression_model(model_spec.expressions, model_spec.constants, model_spec.named_constants, model_spec.lipschitz)


def hypothesis_box(cfg: ScenarioConfig, m: ModelIngredients) -> tuple[float, float, float, float]:
    if cfg.model.box is not None:
        return cfg.model.box
    if cfg.model.family in DOCUMENTED_BOXES:
        return DOCUMENTED_BOXES[cfg.model.family]
    return (m.x_b, m.x_bar + (m.x_bar - m.x_b), 0.0, 2.0)


def require_hypotheses(cfg: ScenarioConfig, m: ModelIngredients) -> None:
    report = check_hypotheses(m, hypothesis_box(cfg, m))
    if not report.passed:
        raise HypothesisError(report.summary())


def size_grid(cfg: ScenarioConfig, m: ModelIngredients, kappa0: float) -> Grid1D:
    x_max = cfg.grids.x_max or x_max_for_tail(m, kappa0, cfg.tolerances.tail_tol)
    if x_max <= m.x_b:
        raise ConfigError(f"grids.x_max = {x_max} must exceed the birth size {m.x_b}")
    if cfg.grids.n_x is not None:
        return Grid1D(np.linspace(m.x_b, x_max, cfg.grids.n_x + 1))
    return graded_size_grid(m.x_b, x_max, 0.01, h_max=0.05, growth=1.01, fine_width=max(m.x_bar - m.x_b, 0.0))


def age_horizon(cfg: ScenarioConfig, m: ModelIngredients, mu0: float) -> float:
    if cfg.grids.a_max is not None:
        return cfg.grids.a_max
    if cfg.grids.n_a is not None:
        return cfg.grids.n_a * cfg.grids.dt
    return default_age_horizon(m, mu0, cfg.grids.dt)


def _perturbed_density(cfg: ScenarioConfig, state: DensityState) -> DensityState:
    ini = cfg.initial
    if ini.perturb_S == 0.0 and ini.scale_n == 1.0:
        return state
    S0 = state.S0 + ini.perturb_S
    if S0 < 0.0:
        raise ConfigError("initial.perturb_S makes the initial resource negative")
    return DensityState(state.x_grid, state.n_values * ini.scale_n, S0, state.kappa0, state.tail_mass * ini.scale_n)


def _perturbed_history(cfg: ScenarioConfig, h: HistoryState) -> HistoryState:
    ini = cfg.initial
    if ini.perturb_S == 0.0 and ini.scale_n == 1.0:
        return h
    psi = h.psi_values + ini.perturb_S
    if np.any(psi < 0.0):
        raise ConfigError("initial.perturb_S makes the resource history negative")
    return dataclasses.replace(h, phi_values=h.phi_values * ini.scale_n, psi_values=psi, phi_tail_norm=h.phi_tail_norm * ini.scale_n)


def _read_state(cfg: ScenarioConfig):
    path = cfg.resolve_path(cfg.initial.file)
    kind = io.read_kind(path)
    if kind == "density":
        return io.read_density(path)
    if kind == "history":
        return io.read_history(path)
    raise ConfigError(f"{path}: '# kind:' header must be 'density' or 'history', got {kind!r}")


def initial_density(cfg: ScenarioConfig, m: ModelIngredients, w: WeightPair) -> DensityState:
    ini = cfg.initial
    if ini.kind == "steady":
        ss = solve_steady(m, tol=cfg.tolerances)
        state = steady_density_state(ss, m, w.kappa0, size_grid(cfg, m, w.kappa0))
    elif ini.kind == "expression":
        if ini.density is None:
            state = map_L(initial_history(cfg, m, w, perturb=False), m)
        else:
            fn = compile_expression(ini.density, cfg.model.named_constants, variables=("x", "S"))
            state = density_from_function(lambda x: fn(x, ini.S0), ini.S0, w.kappa0, size_grid(cfg, m, w.kappa0))
    elif ini.kind == "constant":
        state = map_L(constant_history(ini.b, ini.S0, w.mu0, cfg.grids.dt, age_horizon(cfg, m, w.mu0)), m)
    else:
        state = _read_state(cfg)
        if isinstance(state, HistoryState):
            state = map_L(state, m)
    if abs(state.kappa0 - w.kappa0) > 1e-12 * max(1.0, w.kappa0):
        raise ConfigError(f"initial state uses kappa0 = {state.kappa0}, the configured weights give {w.kappa0}")
    return _perturbed_density(cfg, state)


def initial_history(cfg: ScenarioConfig, m: ModelIngredients, w: WeightPair, perturb: bool = True) -> HistoryState:
    ini = cfg.initial
    da = cfg.grids.dt
    if ini.kind == "steady":
        ss = solve_steady(m, tol=cfg.tolerances)
        h = constant_history(ss.b_star, ss.S_star, w.mu0, da, age_horizon(cfg, m, w.mu0))
    elif ini.kind == "constant":
        h = constant_history(ini.b, ini.S0, w.mu0, da, age_horizon(cfg, m, w.mu0))
    elif ini.kind == "expression":
        if ini.phi is None:
            h = map_L_inv(initial_density(cfg, m, w), m, da=da, a_max=cfg.grids.a_max)
        else:
            a_max = age_horizon(cfg, m, w.mu0)
            n = int(round(a_max / da))
            a = da * np.arange(n + 1)
            phi = compile_expression(ini.phi, cfg.model.named_constants, variables=("a", "S"))(a, ini.S0)
            psi_src = ini.psi if ini.psi is not None else repr(float(ini.S0))
            psi = compile_expression(psi_src, cfg.model.named_constants, variables=("a", "S"))(a, ini.S0)
            if np.any(phi < 0.0) or np.any(psi < 0.0):
                raise ConfigError("initial.phi and initial.psi must be non-negative on the age grid")
            h = HistoryState(Grid1D(a), phi, psi, w.mu0)
    else:
        state = _read_state(cfg)
        h = state if isinstance(state, HistoryState) else map_L_inv(state, m, da=da, a_max=cfg.grids.a_max)
        if abs(h.da - da) > 1e-9 * da:
            raise ConfigError(f"history file has age spacing {h.da}, grids.dt is {da}; they must agree")
    if abs(h.mu0 - w.mu0) > 1e-12 * max(1.0, w.mu0):
        raise ConfigError(f"initial history uses mu0 = {h.mu0}, the configured weights give {w.mu0}")
    return _perturbed_history(cfg, h) if perturb else h


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _grid_meta(cfg: ScenarioConfig, w: WeightPair) -> dict:
    return {"mu0": w.mu0, "kappa0": w.kappa0, "dt": cfg.grids.dt, "horizon": cfg.horizon}


def _simulate_pde(cfg, m, w, out):
    state = initial_density(cfg, m, w)
    tag = m.fingerprint()
    files = [io.write_density(out / "density_initial.csv", state, tag, _grid_meta(cfg, w))]
    if cfg.horizon == 0.0:
        final = state
        t, S, b = np.array([0.0]), np.array([state.S0]), np.array([birth_rate_from_density(state, m)])
        iterations = 0
    else:
        bundle = picard_resource(state, cfg.horizon, m, cfg.tolerances, dt=cfg.grids.dt)
        check_tail(bundle.n_final, cfg.tolerances)
        final, t, S, b = bundle.n_final, bundle.times, bundle.env.values, bundle.birth
        iterations = bundle.picard_iterations
    files.append(io.write_density(out / "density_final.csv", final, tag, _grid_meta(cfg, w)))
    files.append(io.write_trajectory(out / "trajectory.csv", *_thin(cfg, t, S, b), model_hash=tag))
    summary = (
        f"simulate-pde: horizon {cfg.horizon:g}, dt {cfg.grids.dt:g}, {iterations} Picard iterations\n"
        f"  final S = {final.S0:.10g}, weighted norm {final.norm():.10g}"
    )
    return files, summary


def _simulate_de(cfg, m, w, out):
    h = initial_history(cfg, m, w)
    tag = m.fingerprint()
    files = [io.write_history(out / "history_initial.csv", h, tag, _grid_meta(cfg, w))]
    h_t, bundle = advance_history(h, cfg.horizon, m, cfg.tolerances)
    if bundle is None:
        t, S, b = np.array([0.0]), np.array([h.S0]), np.array([h.phi_values[0]])
    else:
        t, S, b = bundle.times, bundle.env.values, bundle.birth
    files.append(io.write_history(out / "history_final.csv", h_t, tag, _grid_meta(cfg, w)))
    files.append(io.write_trajectory(out / "trajectory.csv", *_thin(cfg, t, S, b), model_hash=tag))
    summary = (
        f"simulate-de: horizon {cfg.horizon:g}, da {h.da:g}, a_max {h.a_max:g}\n"
        f"  final S = {h_t.S0:.10g}, weighted norm {history_norm(h_t).total:.10g}"
    )
    return files, summary


def _thin(cfg, t, S, b):
    every = cfg.grids.record_every
    if every is None or t.size < 2:
        return t, S, b
    stride = max(1, int(round(every / (t[1] - t[0]))))
    idx = np.arange(0, t.size, stride)
    if idx[-1] != t.size - 1:
        idx = np.append(idx, t.size - 1)
    return t[idx], S[idx], b[idx]


def _convert(cfg, m, w, out):
    tag = m.fingerprint()
    if cfg.convert_to == "history":
        state = initial_density(cfg, m, w)
        h = map_L_inv(state, m, da=cfg.grids.dt, a_max=cfg.grids.a_max)
        path = io.write_history(out / "history.csv", h, tag, _grid_meta(cfg, w))
        return [path], f"convert: density ({state.nodes.size} nodes) -> history ({h.ages.size} ages, a_max {h.a_max:g})"
    h = initial_history(cfg, m, w)
    state = map_L(h, m)
    path = io.write_density(out / "density.csv", state, tag, _grid_meta(cfg, w))
    return [path], f"convert: history ({h.ages.size} ages) -> density ({state.nodes.size} nodes, x_max {state.x_max:.6g})"


def _steady(cfg, m, w, out):
    tag = m.fingerprint()
    roots = find_steady_states(m, grid=size_grid(cfg, m, w.kappa0), tol=cfg.tolerances)
    rows = [(ss.S_star, ss.b_star, ss.R_value, ss.lifetime_consumption) for ss in roots]
    files = [io.write_table(out / "steady.csv", io.STEADY_COLUMNS, rows, {"kind": "steady", "model_hash": tag})]
    files.append(io.write_density(out / "density_steady.csv", steady_density_state(roots[0], m, w.kappa0), tag, _grid_meta(cfg, w)))
    lines = [f"steady: {len(roots)} positive steady state(s)"]
    for ss in roots:
        lines.append(f"  S* = {ss.S_star:.12g}  b* = {ss.b_star:.12g}  R(S*) = {ss.R_value:.12g}  R'(S*) = {reproduction_slope(ss.S_star, m):.6g}")
    return files, "\n".join(lines)


def _spectrum(cfg, m, w, out):
    from .spectral import analyze_stability

    tag = m.fingerprint()
    ss = solve_steady(m, tol=cfg.tolerances)
    sp = cfg.spectrum
    scan = None
    if any(k in sp for k in ("re_min", "re_max", "im_max")):
        missing = [k for k in ("re_min", "re_max", "im_max") if k not in sp]
        if missing:
            raise ConfigError(f"an explicit scan rectangle needs spectrum.{missing}")
        scan = Rectangle(sp["re_min"], sp["re_max"], -sp["im_max"], sp["im_max"])
    rep = analyze_stability(ss, m, scan=scan, margin=sp.get("margin"), weights=w, tol=cfg.tolerances)
    meta = {
        "verdict": rep.verdict,
        "rightmost_real_part": rep.rightmost_real_part,
        "certified": rep.certified,
        "S_star": ss.S_star,
        "b_star": ss.b_star,
        "R_slope": rep.R_slope,
    }
    if rep.rectangle is not None:
        r = rep.rectangle
        meta["rectangle"] = f"[{r.re_lo!r}, {r.re_hi!r}] x [{r.im_lo!r}, {r.im_hi!r}]"
    roots = sorted(rep.roots, key=lambda r: (-r.value.real, r.value.imag))
    files = [io.write_spectrum(out / "spectrum.csv", roots, tag, meta)]
    lines = [f"spectrum: verdict {rep.verdict}, rightmost Re(lambda) = {rep.rightmost_real_part:.10g}"]
    lines += [f"  root {r.value.real:+.10f} {r.value.imag:+.10f}i  (residual {r.residual:.2e})" for r in roots]
    lines += [f"  note: {n}" for n in rep.notes]
    report_text = "\n".join(lines) + "\n"
    files.append(io.atomic_write_text(out / "spectrum_report.txt", report_text))
    return files, report_text.rstrip()


def _validate(cfg, m, w, out):
    from .validation import run_validation

    rep = run_validation(m, hypothesis_box(cfg, m), w.mu0, cfg.grids.dt, cfg.tolerances, cfg.validate_level)
    rows = [(c.name, "pass" if c.passed else "fail", c.value, c.threshold) for c in rep.checks]
    path = io.write_table(out / "validation.csv", ("check", "result", "value", "threshold"), rows, {"kind": "validation", "model_hash": m.fingerprint()})
    return [path], rep.table(), rep.passed


MODES = {
    "simulate_pde": _simulate_pde,
    "simulate_de": _simulate_de,
    "convert": _convert,
    "steady": _steady,
    "spectrum": _spectrum,
    "validate": _validate,
}


def run_scenario(cfg: ScenarioConfig, mode: str | None = None, out_dir: str | Path | None = None) -> RunReport:
    """Dispatch ``cfg`` to a mode and write its outputs.

    Errors propagate as :class:`ConfigError`, :class:`NumericalError` or
    :class:`HypothesisError`; :func:`main` maps them to exit codes.
    """
    mode = (mode or cfg.run or "").replace("-", "_")
    if mode not in MODES:
        raise ConfigError(f"no run mode given (verb or 'run' key); choose one of {sorted(MODES)}")
    m = build_model(cfg)
    if mode != "validate":
        require_hypotheses(cfg, m)
    w = WeightPair.for_model(m, cfg.mu0)
    out = Path(out_dir) if out_dir is not None else cfg.resolve_path(cfg.outputs)
    result = MODES[mode](cfg, m, w, out)
    files, summary = result[0], result[1]
    status = EXIT_OK if len(result) < 3 or result[2] else EXIT_NUMERICAL
    return RunReport(status, tuple(Path(f) for f in files), summary)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sizestructured", description="Size-structured consumer-resource simulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        s = sub.add_parser(verb)
        s.add_argument("--config", required=True, help="scenario file (key = value)")
        s.add_argument("--out", help="output directory (default: the 'outputs' key)")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="override a config key; repeatable")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.override)
        report = run_scenario(cfg, args.verb, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"hypothesis check failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except NumericalError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(report.summary)
    for f in report.files:
        print(f"wrote {f}")
    return report.status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
