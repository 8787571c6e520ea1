"""The delay semigroup on birth-rate / resource histories.

A history is sampled on a uniform age grid ``a_j = j * da`` (``theta =
-a``). Evolving by ``t`` maps the history to a density (``map_L``), runs
the shared PDE core on ``[0, t]`` with time step ``da`` and splices the
new birth rate and resource values in front of the shifted old history.
Because the time step equals the age spacing the shift is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import TailBudgetError
from .ingredients import ModelIngredients
from .numerics import DEFAULT_TOLERANCES, Grid1D, ToleranceSet, simpson_weights, trapezoid_weights
from .pde_engine import SolutionBundle, picard_resource

PSI_TAIL_MODES = ("constant-extension", "decaying")

#: Relative size of the survival factor ``e^{(mu0 - mu_hat) a_max}`` at the default age horizon.
AGE_TAIL = 1e-10


def default_age_horizon(m: ModelIngredients, mu0: float, da: float) -> float:
    """Age beyond which ``e^{(mu0 - mu_hat) a}`` is below ``AGE_TAIL``, rounded up to the grid."""
    decay = m.mu_hat - mu0
    if decay <= 0.0:
        # mu0 = mu_hat: fall back to the bare survival decay
        decay = m.mu_hat
    a = math.log(1.0 / AGE_TAIL) / decay
    return da * math.ceil(a / da)


@dataclass(frozen=True)
class HistoryState:
    """Birth-rate history ``phi`` and resource history ``psi`` on ages ``[0, a_max]``.

    ``phi_values[j]`` is ``phi(-a_j)``. ``phi_tail_norm`` declares
    ``int_{a_max}^inf e^{-mu0 a} |phi| da``.
    """

    a_grid: Grid1D
    phi_values: np.ndarray
    psi_values: np.ndarray
    mu0: float
    phi_tail_norm: float = 0.0
    psi_tail_mode: str = "constant-extension"

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi_values, dtype=float)
        psi = np.asarray(self.psi_values, dtype=float)
        if phi.shape != self.a_grid.nodes.shape or psi.shape != phi.shape:
            raise ValueError("phi and psi must be sampled on the age grid")
        if abs(self.a_grid.start) > 0.0:
            raise ValueError("the age grid must start at age 0")
        if not self.a_grid.is_uniform():
            raise ValueError("the age grid must be uniform")
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(psi))):
            raise ValueError("history values must be finite")
        if np.any(phi < 0.0) or np.any(psi < 0.0):
            raise ValueError("history values must be non-negative")
        if self.psi_tail_mode not in PSI_TAIL_MODES:
            raise ValueError(f"psi_tail_mode must be one of {PSI_TAIL_MODES}")
        if self.phi_tail_norm < 0.0:
            raise ValueError("phi_tail_norm must be non-negative")
        phi.setflags(write=False)
        psi.setflags(write=False)
        object.__setattr__(self, "phi_values", phi)
        object.__setattr__(self, "psi_values", psi)

    @property
    def da(self) -> float:
        return float(self.a_grid.nodes[1] - self.a_grid.nodes[0])

    @property
    def ages(self) -> np.ndarray:
        return self.a_grid.nodes

    @property
    def a_max(self) -> float:
        return self.a_grid.stop

    @property
    def S0(self) -> float:
        return float(self.psi_values[0])

    def constant_age(self) -> int:
        """Smallest index ``j`` such that ``psi`` is constant on ages ``>= a_j``."""
        psi = self.psi_values
        varying = np.nonzero(psi != psi[-1])[0]
        return 0 if varying.size == 0 else int(varying[-1]) + 1


@dataclass(frozen=True)
class HistoryNorm:
    phi_part: float
    psi_part: float
    total: float


def history_norm(h: HistoryState) -> HistoryNorm:
    """``int e^{-mu0 a} |phi| da`` (trapezoid plus tail) and ``sup e^{-mu0 a} |psi|``."""
    a = h.ages
    decay = np.exp(-h.mu0 * a)
    phi_part = float(trapezoid_weights(a) @ (np.abs(h.phi_values) * decay)) + h.phi_tail_norm
    # with constant extension the weighted psi only decreases beyond a_max
    psi_part = float(np.max(np.abs(h.psi_values) * decay))
    return HistoryNorm(phi_part, psi_part, phi_part + psi_part)


def history_difference_norm(h1: HistoryState, h2: HistoryState, include_tails: bool = False) -> HistoryNorm:
    """Norm of ``h1 - h2`` for histories on grids with the same spacing.

    The shorter grid is padded (phi by zero, psi by constant extension).
    Declared phi tails are not comparable pointwise; with
    ``include_tails`` their sum is added as an upper bound.
    """
    if abs(h1.da - h2.da) > 1e-12 * h1.da or abs(h1.mu0 - h2.mu0) > 1e-15:
        raise ValueError("histories must share age spacing and weight")
    n = max(h1.a_grid.size, h2.a_grid.size)

    def pad(h):
        k = n - h.a_grid.size
        return np.pad(h.phi_values, (0, k)), np.pad(h.psi_values, (0, k), mode="edge")

    p1, s1 = pad(h1)
    p2, s2 = pad(h2)
    a = h1.da * np.arange(n)
    decay = np.exp(-h1.mu0 * a)
    phi_part = float(trapezoid_weights(a) @ (np.abs(p1 - p2) * decay))
    if include_tails:
        phi_part += h1.phi_tail_norm + h2.phi_tail_norm
    psi_part = float(np.max(np.abs(s1 - s2) * decay))
    return HistoryNorm(phi_part, psi_part, phi_part + psi_part)


def constant_history(
    b: float,
    S: float,
    mu0: float,
    da: float,
    a_max: float | None = None,
    m: ModelIngredients | None = None,
) -> HistoryState:
    """History with ``phi = b`` and ``psi = S`` at all ages.

    The part of ``phi`` beyond ``a_max`` is declared as the tail
    ``b e^{-mu0 a_max} / mu0``.
    """
    if a_max is None:
        if m is None:
            raise ValueError("a_max or the model is needed")
        a_max = default_age_horizon(m, mu0, da)
    n = int(round(a_max / da))
    grid = Grid1D(da * np.arange(n + 1))
    tail = b * math.exp(-mu0 * grid.stop) / mu0 if mu0 > 0.0 else (0.0 if b == 0.0 else math.inf)
    return HistoryState(grid, np.full(n + 1, float(b)), np.full(n + 1, float(S)), mu0, tail)


def history_from_functions(phi, psi, mu0: float, da: float, a_max: float) -> HistoryState:
    """Sample ``phi(-a)`` and ``psi(-a)`` given as functions of the age ``a``."""
    n = int(round(a_max / da))
    a = da * np.arange(n + 1)
    return HistoryState(Grid1D(a), np.asarray(phi(a), dtype=float) * np.ones_like(a), np.asarray(psi(a), dtype=float) * np.ones_like(a), mu0)


def _steps(t: float, da: float) -> int:
    n = t / da
    k = int(round(n))
    if abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"evolution time {t} must be a multiple of the age spacing {da}")
    return k


def advance_history(
    h: HistoryState,
    t: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    extend: bool = False,
    window: float | None = None,
) -> tuple[HistoryState, SolutionBundle | None]:
    """Evolve a history by ``t`` and also return the PDE bundle on ``[0, t]``.

    With ``extend=False`` the age horizon stays fixed and ages pushed past
    it are folded into ``phi_tail_norm``; with ``extend=True`` the grid
    grows by ``t`` so that no information is discarded.
    """
    from .intertwine import map_L

    if t < 0.0:
        raise ValueError("evolve_history needs t >= 0")
    k = _steps(t, h.da)
    if k == 0:
        return h, None
    n0 = map_L(h, m)
    bundle = picard_resource(n0, t, m, tol, dt=h.da, window=window)
    # ages 0..k-1 come from the new trajectory, ages k.. from the old history;
    # at age t itself the newborn value b(0) is used (boundary characteristic)
    new_phi_front = bundle.birth[::-1]
    new_psi_front = bundle.env.values[::-1]
    phi = np.concatenate((new_phi_front, h.phi_values[1:]))
    psi = np.concatenate((new_psi_front, h.psi_values[1:]))
    decay_t = math.exp(-h.mu0 * t)
    tail = h.phi_tail_norm * decay_t
    n_keep = h.a_grid.size
    if extend:
        grid = Grid1D(h.da * np.arange(phi.size))
    else:
        dropped = phi[n_keep - 1 :]
        if dropped.size > 1:
            a_drop = h.da * np.arange(n_keep - 1, phi.size)
            tail += float(trapezoid_weights(a_drop) @ (dropped * np.exp(-h.mu0 * a_drop)))
        phi = phi[:n_keep]
        psi = psi[:n_keep]
        grid = h.a_grid
    return HistoryState(grid, np.maximum(phi, 0.0), np.maximum(psi, 0.0), h.mu0, tail, h.psi_tail_mode), bundle


def evolve_history(
    h: HistoryState,
    t: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    extend: bool = False,
    window: float | None = None,
) -> HistoryState:
    """The delay semigroup: shift the history forward by ``t``."""
    return advance_history(h, t, m, tol, extend, window)[0]


def rhs_F(h: HistoryState, m: ModelIngredients, tol: ToleranceSet = DEFAULT_TOLERANCES) -> tuple[float, float]:
    """The right-hand sides ``(F1, F2)`` evaluated on a history.

    ``F1`` is the birth rate the history produces now and ``F2`` the rate of
    change of the resource. Age integrals use Simpson's rule on the
    characteristics of ``psi``.

    Raises
    ------
    TailBudgetError
        If the bound on the neglected age tail exceeds ``tail_tol``.
    """
    from .intertwine import march_history_cohorts

    x, log_surv, _ = march_history_cohorts(h, m, with_jacobian=False)
    S0 = h.S0
    w = simpson_weights(h.ages) * h.phi_values * np.exp(-log_surv)
    F1 = float(w @ (m.beta(x, S0) * np.ones_like(x)))
    consumption = float(w @ (m.gamma(x, S0) * np.ones_like(x)))
    F2 = float(m.f(S0)) - consumption
    if h.phi_tail_norm > 0.0:
        C = math.exp(m.sigma_integral) if m.sigma_integral is not None else 1.0
        rate = max(m.beta_sup or 0.0, m.gamma_sup or 0.0)
        bound = rate * C * math.exp(-(m.mu_hat - h.mu0) * h.a_max) * h.phi_tail_norm
        if bound > tol.tail_tol * max(abs(F1), abs(F2), 1.0):
            raise TailBudgetError(f"age tail contributes up to {bound:.3e} to F1/F2; use a larger a_max")
    return F1, F2


def with_psi(h: HistoryState, psi_values: np.ndarray) -> HistoryState:
    return replace(h, psi_values=np.asarray(psi_values, dtype=float))
