"""Maps between histories and densities.

``map_L`` sends a history ``(phi, psi)`` to the density it produces at
time zero: the cohort born at ``-a_j`` is marched through ``psi`` to time
zero and becomes one node of the output grid, carrying
``phi F / (g(x_b) J)`` with ``F`` the survival and ``J`` the flow Jacobian.
``map_L_inv`` (the pseudo-inverse) builds the history with constant
resource ``psi = S0`` that produces a given density.

Cohort marches use RK4 steps of length ``da`` with the resource varying
linearly between history nodes, exactly as the PDE engine does between
time steps. Both sides of the intertwining identity therefore share
their node sets.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .characteristics import EnvironmentTrajectory, birth_time, cohort_step
from .delay_engine import (
    HistoryState,
    advance_history,
    default_age_horizon,
    history_difference_norm,
)
from .errors import SpanError
from .ingredients import ModelIngredients
from .numerics import DEFAULT_TOLERANCES, Grid1D, ToleranceSet, grid_budget, trapezoid_weights
from .pde_engine import (
    DEFAULT_DT,
    DensityState,
    picard_resource,
    stable_quadrature_weights,
    state_distance,
)


def size_envelope_constants(m: ModelIngredients) -> tuple[float, float]:
    """Constants ``(c1, c2)`` with ``c1 + g_inf a <= X_psi(0, -a, x_b) <= c2 + g_inf a``."""
    c1 = m.x_bar - (m.x_bar - m.x_b) / m.g_min * m.g_inf
    return c1, m.x_bar


def kappa_for(m: ModelIngredients, mu0: float) -> float:
    return (m.mu_hat - mu0) / m.g_inf


_MARCH_CACHE: "OrderedDict[tuple, tuple]" = OrderedDict()
_MARCH_CACHE_SIZE = 16


def _constant_march(m: ModelIngredients, S: float, n: int, da: float, with_jacobian: bool):
    """States of a newborn after ``0..n`` RK4 steps at constant resource ``S``.

    Recent marches are cached per model object (the entry keeps the model
    alive, so its id cannot be reused) and extended on demand.
    """
    key = (id(m), float(S), float(da), bool(with_jacobian))
    hit = _MARCH_CACHE.get(key)
    if hit is not None and hit[0] is m and hit[1].size > n:
        _MARCH_CACHE.move_to_end(key)
        xs, ls, lj = hit[1], hit[2], hit[3]
        return xs[: n + 1].copy(), ls[: n + 1].copy(), (lj[: n + 1].copy() if with_jacobian else None)
    if hit is not None and hit[0] is m:
        start = hit[1].size - 1
        xs = np.concatenate((hit[1], np.empty(n - start)))
        ls = np.concatenate((hit[2], np.empty(n - start)))
        lj = np.concatenate((hit[3], np.empty(n - start))) if with_jacobian else None
    else:
        start = 0
        xs = np.empty(n + 1)
        ls = np.empty(n + 1)
        lj = np.empty(n + 1) if with_jacobian else None
        xs[0], ls[0] = m.x_b, 0.0
        if with_jacobian:
            lj[0] = 0.0
    x = np.array([xs[start]])
    s = np.array([ls[start]])
    j = np.array([lj[start]]) if with_jacobian else None
    for i in range(start + 1, n + 1):
        x, s, j = cohort_step(m, x, s, j, S, S, da)
        xs[i], ls[i] = x[0], s[0]
        if with_jacobian:
            lj[i] = j[0]
    _MARCH_CACHE[key] = (m, xs, ls, lj)
    _MARCH_CACHE.move_to_end(key)
    while len(_MARCH_CACHE) > _MARCH_CACHE_SIZE:
        _MARCH_CACHE.popitem(last=False)
    return xs.copy(), ls.copy(), (lj.copy() if with_jacobian else None)


def march_history_cohorts(h: HistoryState, m: ModelIngredients, with_jacobian: bool = True):
    """Size, log-survival and log-Jacobian at time zero of the cohorts born at ``-a_j``.

    Ages beyond the last change of ``psi`` are handled by a single march
    at constant resource (the flow is autonomous there).
    """
    da = h.da
    N = h.a_grid.size - 1
    psi = h.psi_values
    jc = h.constant_age()
    xs_c, ls_c, lj_c = _constant_march(m, float(psi[-1]), N - jc, da, with_jacobian)
    # cohorts j >= jc, stored oldest first; at time -a_jc cohort jc + s sits at state s
    x = xs_c[::-1].copy()
    ls = ls_c[::-1].copy()
    lj = lj_c[::-1].copy() if with_jacobian else None
    for i in range(jc, 0, -1):
        x, ls, lj = cohort_step(m, x, ls, lj, float(psi[i]), float(psi[i - 1]), da)
        x = np.append(x, m.x_b)
        ls = np.append(ls, 0.0)
        if with_jacobian:
            lj = np.append(lj, 0.0)
    # reorder to ascending age index j = 0..N
    x = x[::-1]
    ls = ls[::-1]
    lj = lj[::-1] if with_jacobian else None
    return x, ls, lj


def map_L(h: HistoryState, m: ModelIngredients) -> DensityState:
    """The density state produced by a history.

    The output grid is ``X_psi(0, -a_j, x_b)`` for the history ages; the
    declared tail bounds the weighted mass of cohorts older than ``a_max``.
    """
    x, ls, lj = march_history_cohorts(h, m, with_jacobian=True)
    values = h.phi_values * np.exp(-ls - lj) / (m.g(m.x_b, h.psi_values) * np.ones_like(x))
    kappa0 = kappa_for(m, h.mu0)
    tail = 0.0
    if h.phi_tail_norm > 0.0:
        C = math.exp(m.sigma_integral) if m.sigma_integral is not None else 1.0
        _, c2 = size_envelope_constants(m)
        tail = C * math.exp(kappa0 * c2) * h.phi_tail_norm
    return DensityState(Grid1D(x, kappa0), np.maximum(values, 0.0), h.S0, kappa0, tail)


def map_L_inv(
    state: DensityState,
    m: ModelIngredients,
    da: float = DEFAULT_DT,
    a_max: float | None = None,
) -> HistoryState:
    """The constant-resource history ``(phi, psi = S0)`` that produces ``state``.

    ``phi(-a) = n0(xi(a)) g(x_b, S0) J(a) / F(a)`` along the constant-``S0``
    characteristic ``xi``; the density is interpolated (cubic, zero beyond
    its grid). The default ``a_max`` reaches past ``x_max`` and past the
    age where the survival weight is negligible.
    """
    mu0 = m.mu_hat - state.kappa0 * m.g_inf
    c1, _ = size_envelope_constants(m)
    if a_max is None:
        a_need = (state.x_max - c1) / m.g_inf + da
        a_max = max(default_age_horizon(m, mu0, da), a_need)
    n = int(math.ceil(a_max / da - 1e-9))
    S0 = state.S0
    xi, ls, lj = _constant_march(m, S0, n, da, True)
    n0 = state.interpolator()(xi)
    phi = n0 * float(m.g(m.x_b, S0)) * np.exp(lj + ls)
    tail = 0.0
    if state.tail_mass > 0.0:
        c = math.exp(-m.sigma_integral) if m.sigma_integral is not None else 1.0
        tail = math.exp(-state.kappa0 * c1) / c * state.tail_mass
    psi = np.full(n + 1, S0)
    return HistoryState(Grid1D(da * np.arange(n + 1)), phi, psi, mu0, tail)


@dataclass(frozen=True)
class IntertwiningResult:
    t: float
    discrepancy: float
    budget: float


def check_intertwining(
    h: HistoryState,
    t: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
) -> IntertwiningResult:
    """Weighted distance between ``T_PDE(t) L h`` and ``L T_DE(t) h``.

    The budget reported is ``grid_budget(da, |L h|)``.
    """
    n0 = map_L(h, m)
    budget = grid_budget(h.da, n0.norm())
    if t == 0.0:
        return IntertwiningResult(0.0, 0.0, budget)
    pde_side = picard_resource(n0, t, m, tol, dt=h.da).n_final
    h_t, _ = advance_history(h, t, m, tol, extend=True)
    de_side = map_L(h_t, m)
    return IntertwiningResult(t, state_distance(pde_side, de_side), budget)


@dataclass(frozen=True)
class EquivalenceReport:
    same_image: bool
    image_distance: float
    forward_distance_at: tuple[tuple[float, float], ...]
    initial_distance: float


def compare_histories(
    h1: HistoryState,
    h2: HistoryState,
    m: ModelIngredients,
    times: tuple[float, ...] = (0.5, 1.0, 2.0),
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    equivalence_tol: float = 1e-9,
    extend: bool = True,
) -> EquivalenceReport:
    """Equivalence test plus the history distance after each time in ``times``."""
    d_img = state_distance(map_L(h1, m), map_L(h2, m))
    rows = []
    for t in times:
        a = advance_history(h1, t, m, tol, extend=extend)[0]
        b = advance_history(h2, t, m, tol, extend=extend)[0]
        rows.append((float(t), history_difference_norm(a, b).total))
    return EquivalenceReport(
        same_image=d_img <= equivalence_tol,
        image_distance=d_img,
        forward_distance_at=tuple(rows),
        initial_distance=history_difference_norm(h1, h2).total,
    )


# ---------------------------------------------------------------------------
# Full orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Orbit:
    """Density snapshots at uniformly spaced ``times`` plus the resource on
    ``[env.start, times[-1]]``. ``env.start`` may be negative."""

    times: np.ndarray
    states: tuple[DensityState, ...]
    env: EnvironmentTrajectory

    def __post_init__(self) -> None:
        if len(self.states) != len(self.times):
            raise ValueError("one state per snapshot time")
        if not self.env.covers(float(self.env.start), float(self.times[-1])):
            raise ValueError("environment must reach the last snapshot")


@dataclass(frozen=True)
class OrbitBirthRate:
    times: np.ndarray
    birth: np.ndarray
    renewal_rhs: np.ndarray
    checked: np.ndarray

    @property
    def max_residual(self) -> float:
        if not np.any(self.checked):
            return float("nan")
        return float(np.max(np.abs(self.birth - self.renewal_rhs)[self.checked]))


def orbit_from_history(
    h: HistoryState,
    horizon: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    snapshot_every: int = 1,
    back: float | None = None,
) -> Orbit:
    """Orbit through ``map_L(h)``: negative times from the shifted history,
    positive times from the PDE engine."""
    da = h.da
    # the oldest snapshot keeps at least two history nodes
    k_max = h.a_grid.size - 2
    k_back = k_max if back is None else int(round(back / da))
    if not 0 <= k_back <= k_max:
        raise SpanError(f"back={back} exceeds the history horizon {h.a_max - da:.6g}")
    k_fwd = int(round(horizon / da))
    times, states = [], []
    ages = h.ages
    # snapshot times are anchored at zero
    for k in range(-(k_back // snapshot_every) * snapshot_every, 1, snapshot_every):
        s = -k
        shifted = HistoryState(
            Grid1D(ages[: ages.size - s]), h.phi_values[s:], h.psi_values[s:], h.mu0, 0.0
        )
        times.append(k * da)
        states.append(map_L(shifted, m))
    n0 = states[-1]
    bundle = picard_resource(n0, horizon, m, tol, dt=da) if k_fwd > 0 else None
    run = n0
    last = 0
    for k in range(snapshot_every, k_fwd + 1, snapshot_every):
        run = picard_resource(run, (k - last) * da, m, tol, dt=da).n_final
        last = k
        times.append(k * da)
        states.append(run)
    past_t = -ages[::-1]
    past_S = h.psi_values[::-1]
    if bundle is not None:
        t_all = np.concatenate((past_t, bundle.times[1:]))
        S_all = np.concatenate((past_S, bundle.env.values[1:]))
    else:
        t_all, S_all = past_t, past_S
    env = EnvironmentTrajectory(Grid1D(t_all), S_all)
    return Orbit(np.array(times), tuple(states), env)


def full_orbit_birthrate(
    orbit: Orbit,
    m: ModelIngredients,
    negligible: float = 1e-10,
) -> OrbitBirthRate:
    """Birth rate along an orbit, ``b(t) = int beta(x, S(t)) n(t, x) dx``, and the
    renewal identity ``b(t) = int_0^inf beta_S(t, t-a) b(t-a) da``.

    The identity is evaluated with trapezoid weights over the snapshot
    times, so it is only checked at snapshots whose population (up to a
    weighted fraction ``negligible``) was born inside the orbit.

    Raises
    ------
    SpanError
        If no snapshot satisfies that condition.
    """
    times = orbit.times
    S = np.maximum(orbit.env(times), 0.0)
    birth = np.array(
        [float(stable_quadrature_weights(st.nodes) @ (st.n_values * m.beta(st.nodes, s))) for st, s in zip(orbit.states, S)]
    )
    t0 = float(orbit.env.start)
    checked = np.zeros(times.size, dtype=bool)
    for k, st in enumerate(orbit.states):
        if times[k] <= t0:
            continue
        w = trapezoid_weights(st.nodes) * st.n_values * np.exp(st.kappa0 * st.nodes)
        total = float(w.sum())
        if total == 0.0:
            checked[k] = True
            continue
        cum = np.cumsum(w[::-1])[::-1]
        idx = np.nonzero(cum > negligible * total)[0]
        x_reach = float(st.nodes[idx[-1]])
        # age envelopes from the size and growth bounds decide most snapshots cheaply
        c1, c2 = size_envelope_constants(m)
        available = float(times[k]) - float(times[0])
        oldest = min((x_reach - c1) / m.g_inf, (x_reach - m.x_b) / m.g_min)
        youngest = max((x_reach - c2) / m.g_inf, (x_reach - m.x_b) / m.g_max)
        if oldest <= available - 1e-12:
            checked[k] = True
            continue
        if youngest > available + 1e-12:
            continue
        try:
            tb = float(birth_time(orbit.env, np.array([x_reach]), float(times[k]), m)[0])
            checked[k] = tb >= times[0] - 1e-12
        except SpanError:
            checked[k] = False
    if not np.any(checked):
        raise SpanError("orbit does not reach back far enough for the renewal identity at any snapshot")
    # march all cohorts born at snapshot times through the environment
    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    rhs = np.full(times.size, np.nan)
    xb = np.array([m.x_b])
    lsb = np.zeros(1)
    for k in range(times.size):
        if k > 0:
            xb, lsb, _ = cohort_step(m, xb, lsb, None, float(S[k - 1]), float(S[k]), dt)
            xb = np.append(xb, m.x_b)
            lsb = np.append(lsb, 0.0)
        if checked[k]:
            kern = m.beta(xb, S[k]) * np.exp(-lsb) * np.ones_like(xb)
            w = np.full(k + 1, dt)
            w[0] = w[-1] = 0.5 * dt
            if k == 0:
                w[:] = 0.0
            rhs[k] = float(np.dot(w * kern, birth[: k + 1]))
    return OrbitBirthRate(times, birth, rhs, checked)
