"""Built-in invariant suite run by the ``validate`` verb.

Each check exercises one invariant of the library on the configured
model and returns a :class:`CheckResult`. ``level="quick"`` keeps the
suite at a few seconds for the built-in families; ``level="full"`` runs
longer horizons and the spectral checks.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .characteristics import EnvironmentTrajectory, survival
from .delay_engine import advance_history, constant_history, history_difference_norm, history_norm, rhs_F, with_psi
from .equilibrium import SteadyState, reproduction_number, solve_steady, steady_density_state
from .errors import SizeStructuredError
from .ingredients import ModelIngredients, WeightPair, check_hypotheses, survival_bounds
from .intertwine import check_intertwining, map_L, map_L_inv
from .numerics import DEFAULT_TOLERANCES, ToleranceSet, grid_budget
from .pde_engine import picard_resource, state_distance


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{'check':<{width}}  result  {'value':>11}  {'threshold':>11}  detail"]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {mark:<6}  {c.value:11.3e}  {c.threshold:11.3e}  {c.detail}")
        return "\n".join(lines)


def _timed(name: str, fn: Callable[[], tuple[bool, float, float, str]]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, value, threshold, detail = fn()
    except SizeStructuredError as exc:
        ok, value, threshold, detail = False, math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), float(value), float(threshold), detail, time.perf_counter() - t0)


def run_validation(
    m: ModelIngredients,
    box: tuple[float, float, float, float],
    mu0: float | str = "auto",
    dt: float = 1.0 / 128.0,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    level: str = "quick",
    seed: int = 20240601,
) -> ValidationReport:
    """Run the invariant suite; never raises on a failing check."""
    weights = WeightPair.for_model(m, mu0)
    rng = np.random.default_rng(seed)
    horizon = 1.0 if level == "quick" else 5.0
    checks: list[CheckResult] = []
    steady: list[SteadyState] = []

    def hypotheses():
        rep = check_hypotheses(m, box)
        bad = ", ".join(r.name for r in rep.failures())
        return rep.passed, float(len(rep.failures())), 0.0, bad or "all sampled hypotheses hold"

    def steady_root():
        ss = solve_steady(m, tol=tol)
        steady.append(ss)
        err = abs(reproduction_number(ss.S_star, m) - 1.0)
        return err <= 10 * tol.root_tol, err, 10 * tol.root_tol, f"S* = {ss.S_star:.10g}, b* = {ss.b_star:.10g}"

    def survival_check():
        c, C = survival_bounds(m)
        S = steady[0].S_star if steady else 1.0
        worst = 0.0
        for _ in range(40):
            s, span = 0.0, float(rng.uniform(0.1, 5.0))
            amp = float(rng.uniform(0.0, 0.5)) * S
            env = EnvironmentTrajectory.from_function(lambda t: S + amp * np.sin(3.0 * t), s, span, 256)
            F = survival(env, span, s, m.x_b, m, n_steps=400)
            scale = math.exp(-m.mu_hat * span)
            worst = max(worst, c * scale / F - 1.0, F / (C * scale) - 1.0)
        return worst <= 1e-6, max(worst, 0.0), 1e-6, "relative excess over [c, C] e^{-mu_hat t}"

    def pseudo_inverse():
        ss = steady[0] if steady else solve_steady(m, tol=tol)
        n_star = steady_density_state(ss, m, weights.kappa0)
        back = map_L(map_L_inv(n_star, m, da=dt), m)
        err = state_distance(n_star, back)
        bound = 5 * grid_budget(dt, n_star.norm())
        return err <= bound, err, bound, "L(L_ps^-1 n*) against n*"

    def pde_steady_drift():
        ss = steady[0] if steady else solve_steady(m, tol=tol)
        n_star = steady_density_state(ss, m, weights.kappa0)
        bundle = picard_resource(n_star, horizon, m, tol, dt=dt)
        drift = max(float(np.max(np.abs(bundle.env.values - ss.S_star))), float(np.max(np.abs(bundle.birth - ss.b_star))))
        bound = max(1e-6, 5 * grid_budget(dt, ss.b_star + ss.S_star))
        return drift <= bound, drift, bound, f"max |S - S*|, |b - b*| over [0, {horizon:g}]"

    def de_steady_drift():
        ss = steady[0] if steady else solve_steady(m, tol=tol)
        h = constant_history(ss.b_star, ss.S_star, weights.mu0, dt, m=m)
        h_t, _ = advance_history(h, horizon, m, tol)
        drift = history_difference_norm(h_t, h).total
        bound = max(1e-6, 5 * grid_budget(dt, history_norm(h).total))
        return drift <= bound, drift, bound, f"weighted history drift over [0, {horizon:g}]"

    def intertwining():
        ss = steady[0] if steady else solve_steady(m, tol=tol)
        h = constant_history(ss.b_star, ss.S_star, weights.mu0, dt, m=m)
        recent = h.ages <= 1.0
        psi = np.where(recent, ss.S_star * (1.0 + 0.1 * np.cos(2.0 * h.ages)), h.psi_values)
        h = with_psi(h, psi)
        res = check_intertwining(h, 0.5, m, tol)
        return res.discrepancy <= 5 * res.budget, res.discrepancy, 5 * res.budget, "t = 0.5, perturbed recent resource"

    def delay_rhs_at_steady():
        ss = steady[0] if steady else solve_steady(m, tol=tol)
        h = constant_history(ss.b_star, ss.S_star, weights.mu0, dt, m=m)
        F1, F2 = rhs_F(h, m, tol)
        err = max(abs(F1 - ss.b_star) / max(ss.b_star, 1.0), abs(F2))
        bound = 5 * grid_budget(dt, ss.b_star + ss.S_star)
        return err <= bound, err, bound, "F1 = b*, F2 = 0 on the constant steady history"

    checks.append(_timed("hypotheses", hypotheses))
    checks.append(_timed("steady_root", steady_root))
    if m.sigma_integral is not None:
        checks.append(_timed("survival_bounds", survival_check))
    checks.append(_timed("pseudo_inverse", pseudo_inverse))
    checks.append(_timed("delay_rhs", delay_rhs_at_steady))
    checks.append(_timed("pde_steady_drift", pde_steady_drift))
    checks.append(_timed("de_steady_drift", de_steady_drift))
    checks.append(_timed("intertwining", intertwining))
    if level == "full":
        from .spectral import analyze_stability, build_char_data, char_det

        def m11_anchor():
            ss = steady[0] if steady else solve_steady(m, tol=tol)
            val = abs(char_det(0.0, build_char_data(ss, m)).m11)
            return val <= 10 * tol.root_tol, val, 10 * tol.root_tol, "m11(0) at the steady state"

        def verdict_consistency():
            ss = steady[0] if steady else solve_steady(m, tol=tol)
            rep = analyze_stability(ss, m, weights=weights, tol=tol)
            ok = (not rep.instability_shortcut) or rep.verdict == "unstable"
            return ok, rep.rightmost_real_part, 0.0, f"verdict {rep.verdict}, R'(S*) = {rep.R_slope:.4g}"

        checks.append(_timed("m11_at_zero", m11_anchor))
        checks.append(_timed("spectral_verdict", verdict_consistency))
    return ValidationReport(tuple(checks))
