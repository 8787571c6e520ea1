"""Positive steady states: R(S*) = 1, then b* and n* in closed form.

All lifetime integrals are computed in the size variable,

    R(S) = int_{x_b}^inf beta(x,S)/g(x,S) * exp(-E(x,S)) dx,
    E(x,S) = int_{x_b}^x mu(y,S)/g(y,S) dy,

on a fine uniform size grid (cumulative Simpson for ``E``, Simpson for
the outer integral). The grid end is placed where the survival bound
makes the remaining tail negligible; the bound itself is reported.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .errors import BracketError, DomainError
from .ingredients import ModelIngredients
from .numerics import DEFAULT_TOLERANCES, Grid1D, ToleranceSet, find_root_bracketed, simpson_weights

logger = logging.getLogger(__name__)

#: Number of intervals of the size grid used for lifetime integrals.
LIFETIME_INTERVALS = 8192
#: Relative size of the neglected survival tail.
LIFETIME_TAIL = 1e-15


@dataclass(frozen=True)
class LifetimeIntegrals:
    """Lifetime integrals of a newborn at constant resource ``S``."""

    S: float
    reproduction: float
    consumption: float
    tail_bound: float
    nodes: np.ndarray
    cumulative_hazard: np.ndarray


def _lifetime_end(m: ModelIngredients, S: float) -> float:
    """End of the size grid: beyond it the survival bound is below ``LIFETIME_TAIL``."""
    C = math.exp(m.sigma_integral) if m.sigma_integral is not None else 1.0
    slow = m.g_inf / m.mu_hat
    return max(m.x_bar, m.x_b) + slow * math.log(max(C, 1.0) / LIFETIME_TAIL)


def lifetime_integrals(S: float, m: ModelIngredients, intervals: int = LIFETIME_INTERVALS) -> LifetimeIntegrals:
    """``R(S)``, the expected lifetime consumption and the tail bound.

    Raises
    ------
    DomainError
        For negative ``S``.
    """
    if S < 0.0 or not math.isfinite(S):
        raise DomainError(f"resource concentration must be non-negative, got {S}")
    x_end = _lifetime_end(m, S)
    x = np.linspace(m.x_b, x_end, intervals + 1)
    g = m.g(x, S) * np.ones_like(x)
    hazard = m.mu(x, S) / g
    E = np.concatenate(([0.0], cumulative_simpson(hazard, x=x)))
    surv = np.exp(-E) / g
    w = simpson_weights(x)
    R = float(w @ (m.beta(x, S) * surv))
    cons = float(w @ (m.gamma(x, S) * surv))
    C = math.exp(m.sigma_integral) if m.sigma_integral is not None else 1.0
    # beyond x_end: e^{-E} <= e^{-E(x_end)} C e^{-mu_hat (x - x_end)/g_inf}
    rate_sup = max(m.beta_sup or 0.0, m.gamma_sup or 0.0, float(np.max(m.beta(x[-8:], S))), float(np.max(m.gamma(x[-8:], S))))
    tail = rate_sup * C * math.exp(-E[-1]) / m.mu_hat
    return LifetimeIntegrals(float(S), R, cons, tail, x, E)


def reproduction_number(S: float, m: ModelIngredients) -> float:
    """Expected lifetime offspring of a newborn at constant resource ``S``."""
    return lifetime_integrals(S, m).reproduction


def reproduction_slope(S: float, m: ModelIngredients, step: float | None = None) -> float:
    """Central difference of ``R`` at ``S`` (one-sided near zero)."""
    h = 1e-5 * (1.0 + abs(S)) if step is None else step
    if S - h < 0.0:
        return (reproduction_number(S + h, m) - reproduction_number(S, m)) / h
    return (reproduction_number(S + h, m) - reproduction_number(S - h, m)) / (2.0 * h)


@dataclass(frozen=True)
class SteadyState:
    """A steady state ``(n*, S*)`` with its birth rate ``b*``.

    ``n_star`` is sampled on ``x_grid``; :meth:`density` evaluates the
    closed form anywhere.
    """

    S_star: float
    b_star: float
    n_star: np.ndarray
    x_grid: Grid1D
    R_value: float
    lifetime_consumption: float
    degenerate: bool
    model_fingerprint: str
    _hazard_nodes: np.ndarray
    _hazard_values: np.ndarray
    _g_at_birth: float

    def cumulative_hazard(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        spline = CubicSpline(self._hazard_nodes, self._hazard_values, extrapolate=False)
        inside = spline(np.clip(x, self._hazard_nodes[0], self._hazard_nodes[-1]))
        end = self._hazard_nodes[-1]
        slope = (self._hazard_values[-1] - self._hazard_values[-2]) / (self._hazard_nodes[-1] - self._hazard_nodes[-2])
        return np.where(x > end, self._hazard_values[-1] + slope * (x - end), inside)

    def density_function(self, m: ModelIngredients):
        """The closed-form steady density ``x -> b*/g(x,S*) exp(-E(x))``."""

        def n_star(x):
            x = np.asarray(x, dtype=float)
            return self.b_star / (m.g(x, self.S_star) * np.ones_like(x)) * np.exp(-self.cumulative_hazard(x))

        return n_star


def default_size_grid(m: ModelIngredients, kappa0: float, tail_tol: float = 1e-8, h_min: float = 0.01) -> Grid1D:
    """Graded size grid fine near the birth size, reaching far enough that the
    ``kappa0``-weighted steady tail is below ``tail_tol``."""
    from .pde_engine import graded_size_grid, x_max_for_tail

    x_max = x_max_for_tail(m, kappa0, tail_tol)
    return graded_size_grid(m.x_b, x_max, h_min, h_max=max(0.05, 5 * h_min), growth=1.01, fine_width=max(m.x_bar - m.x_b, 0.0))


def _steady_from_root(S_star: float, m: ModelIngredients, grid: Grid1D | None) -> SteadyState:
    life = lifetime_integrals(S_star, m)
    if life.consumption <= 0.0:
        raise DomainError("newborns never consume at S*; the steady birth rate is undefined")
    fS = float(m.f(S_star))
    degenerate = abs(fS) <= 1e-14
    b_star = 0.0 if degenerate else fS / life.consumption
    if b_star < 0.0:
        raise DomainError(f"R(S*)=1 at S*={S_star:.6g} where f(S*)<0; no positive steady state there")
    if degenerate:
        logger.warning("f(S*) = 0: degenerate steady state with b* = 0")
    if grid is None:
        from .ingredients import WeightPair

        grid = default_size_grid(m, WeightPair.for_model(m).kappa0)
    ss = SteadyState(
        S_star=float(S_star),
        b_star=float(b_star),
        n_star=np.empty(0),
        x_grid=grid,
        R_value=life.reproduction,
        lifetime_consumption=life.consumption,
        degenerate=degenerate,
        model_fingerprint=m.fingerprint(),
        _hazard_nodes=life.nodes,
        _hazard_values=life.cumulative_hazard,
        _g_at_birth=float(m.g(m.x_b, S_star)),
    )
    n = ss.density_function(m)(grid.nodes)
    object.__setattr__(ss, "n_star", n)
    return ss


def solve_steady(
    m: ModelIngredients,
    S_bracket: tuple[float, float] | None = None,
    grid: Grid1D | None = None,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
) -> SteadyState:
    """The steady state with ``R(S*) = 1`` inside ``S_bracket``.

    Without a bracket the lowest root found by :func:`find_steady_states`
    is returned.

    Raises
    ------
    BracketError
        If ``R - 1`` does not change sign on the bracket (or nowhere on the
        scan), with the invasion diagnostic in the message.
    """
    if S_bracket is None:
        roots = find_steady_states(m, grid=grid, tol=tol)
        if len(roots) > 1:
            logger.info("%d steady states found; returning the one with smallest S*", len(roots))
        return roots[0]
    lo, hi = map(float, S_bracket)
    r_lo = reproduction_number(lo, m) - 1.0
    r_hi = reproduction_number(hi, m) - 1.0
    if r_lo == 0.0:
        return _steady_from_root(lo, m, grid)
    if r_hi == 0.0:
        return _steady_from_root(hi, m, grid)
    if r_lo * r_hi > 0.0:
        raise BracketError(
            f"R(S)-1 has the same sign at S={lo:.6g} ({r_lo + 1:.6g}) and S={hi:.6g} ({r_hi + 1:.6g}). "
            "A positive steady state needs the invasion condition R(S0) > 1 at the consumer-free resource level."
        )
    S_star = find_root_bracketed(lambda s: reproduction_number(s, m) - 1.0, lo, hi, tol=min(tol.root_tol, 1e-13))
    return _steady_from_root(S_star, m, grid)


def resource_only_level(m: ModelIngredients, S_start: float = 1.0) -> float:
    """Stable equilibrium of ``dS/dt = f(S)``: the smallest ``S > 0`` where ``f``
    changes sign from positive to non-positive."""
    f0 = float(m.f(0.0))
    if f0 <= 0.0:
        return 0.0
    hi = S_start
    for _ in range(200):
        if float(m.f(hi)) <= 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError("dS/dt = f(S) has no equilibrium: f stays positive")
    if float(m.f(hi)) == 0.0:
        return hi
    return find_root_bracketed(lambda s: float(m.f(s)), 0.0, hi, tol=1e-14)


def find_steady_states(
    m: ModelIngredients,
    S_upper: float | None = None,
    n_scan: int = 160,
    grid: Grid1D | None = None,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
) -> list[SteadyState]:
    """All roots of ``R(S) = 1`` on a log-spaced ladder over ``(0, S_upper]``.

    ``S_upper`` defaults to the resource-only equilibrium, the natural
    level at which consumers are introduced.
    """
    if S_upper is None:
        S_upper = resource_only_level(m)
    if S_upper <= 0.0:
        raise BracketError("the consumer-free resource level is zero; no positive steady state")
    ladder = S_upper * np.logspace(-8, 0, n_scan)
    values = np.array([reproduction_number(s, m) - 1.0 for s in ladder])
    roots = []
    for i in range(ladder.size - 1):
        a, b = values[i], values[i + 1]
        if a == 0.0:
            roots.append(_steady_from_root(float(ladder[i]), m, grid))
        elif a * b < 0.0:
            roots.append(solve_steady(m, (float(ladder[i]), float(ladder[i + 1])), grid, tol))
    if values[-1] == 0.0:
        roots.append(_steady_from_root(float(ladder[-1]), m, grid))
    if not roots:
        R_up = values[-1] + 1.0
        raise BracketError(
            f"R(S) - 1 has no sign change on (0, {S_upper:.6g}]; R({S_upper:.6g}) = {R_up:.6g}. "
            + ("The invasion condition R(S0) > 1 fails, so consumers cannot persist." if R_up <= 1.0 else "")
        )
    return roots


@dataclass(frozen=True)
class InvasionResult:
    invades: bool
    R: float
    boundary: bool

    def __bool__(self) -> bool:
        return self.invades


def invasion_check(m: ModelIngredients, S0: float, boundary_tol: float = 1e-9) -> InvasionResult:
    """Whether consumers introduced at resource level ``S0`` grow: ``R(S0) > 1``.

    Values within ``boundary_tol`` of 1 report ``invades=False`` with the
    boundary flag set.
    """
    if abs(float(m.f(S0))) > 1e-8:
        logger.warning("invasion_check at S0=%g where f(S0)=%g is not an equilibrium of the resource", S0, float(m.f(S0)))
    R = reproduction_number(S0, m)
    boundary = abs(R - 1.0) <= boundary_tol
    return InvasionResult(invades=(R > 1.0 and not boundary), R=R, boundary=boundary)


def steady_density_state(ss: SteadyState, m: ModelIngredients, kappa0: float, grid: Grid1D | None = None):
    """``(n*, S*)`` as a :class:`~sizestructured.pde_engine.DensityState`."""
    from .pde_engine import DensityState

    grid = ss.x_grid if grid is None else grid
    values = ss.density_function(m)(grid.nodes)
    return DensityState(Grid1D(grid.nodes, kappa0), values, ss.S_star, kappa0)

