"""The density semigroup: (n0, S0) -> (n(t), S(t)).

The construction follows the characteristic solution directly:

1. a candidate resource trajectory ``S`` fixes all characteristics;
2. the birth rate solves the renewal equation
   ``b(t) = int_0^t beta_S(t, s) b(s) ds + h_S(t)`` (trapezoidal march
   with an implicit diagonal);
3. the resource is updated by the Picard map
   ``V(S)(t) = S0 + int_0^t (f(S) - int gamma_S b - k_S)``, iterated to
   its fixed point window by window;
4. the density at the final time is read off the cohorts: each initial
   node and each newborn cohort is a node of the output grid, carrying
   ``n0 F / J`` or ``b F / (g(x_b) J)``, where ``J`` is the Jacobian of the
   flow (integrated as a companion variable).

Output grids are therefore Lagrangian: the images of the input nodes
plus one node per time step for the newborns. No interpolation is
involved in evolving a state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .characteristics import EnvironmentTrajectory, cohort_step
from .errors import ConvergenceError, HypothesisError, NumericalError, TailBudgetError
from .ingredients import ModelIngredients
from .numerics import (
    DEFAULT_TOLERANCES,
    Grid1D,
    ToleranceSet,
    trapezoid_weights,
    volterra2_solve,
    volterra2_step,
)

logger = logging.getLogger(__name__)

#: Default time step of the engines.
DEFAULT_DT = 1.0 / 256.0


# ---------------------------------------------------------------------------
# States and quadrature helpers
# ---------------------------------------------------------------------------


def stable_quadrature_weights(nodes: np.ndarray, max_ratio: float = 1.5) -> np.ndarray:
    """Simpson on interval pairs with comparable lengths, trapezoid elsewhere.

    Non-uniform Simpson weights turn negative when neighbouring intervals
    differ a lot in length; such pairs (and a trailing odd interval) fall
    back to the trapezoid rule so all weights stay positive.
    """
    x = np.asarray(nodes, dtype=float)
    d = np.diff(x)
    w = np.zeros_like(x)
    n_int = d.size
    n_pairs = n_int // 2
    if n_pairs:
        h0 = d[0 : 2 * n_pairs : 2]
        h1 = d[1 : 2 * n_pairs : 2]
        ratio = h1 / h0
        good = (ratio <= max_ratio) & (ratio >= 1.0 / max_ratio)
        s = h0 + h1
        left = np.where(good, s / 6.0 * (2.0 - ratio), 0.5 * h0)
        mid = np.where(good, s / 6.0 * s * s / (h0 * h1), 0.5 * (h0 + h1))
        right = np.where(good, s / 6.0 * (2.0 - h0 / h1), 0.5 * h1)
        np.add.at(w, np.arange(0, 2 * n_pairs, 2), left)
        np.add.at(w, np.arange(1, 2 * n_pairs, 2), mid)
        np.add.at(w, np.arange(2, 2 * n_pairs + 1, 2), right)
    if n_int % 2 == 1:
        w[-2] += 0.5 * d[-1]
        w[-1] += 0.5 * d[-1]
    return w


@dataclass(frozen=True)
class DensityState:
    """Size density on a truncated grid plus the resource concentration.

    The first node must be the birth size. ``tail_mass`` is the declared
    ``kappa0``-weighted mass beyond the last node.
    """

    x_grid: Grid1D
    n_values: np.ndarray
    S0: float
    kappa0: float
    tail_mass: float = 0.0

    def __post_init__(self) -> None:
        n = np.asarray(self.n_values, dtype=float)
        if n.shape != self.x_grid.nodes.shape:
            raise ValueError("density values must match the size grid")
        if not np.all(np.isfinite(n)):
            raise ValueError("density values must be finite")
        if np.any(n < 0.0):
            raise ValueError("density values must be non-negative")
        if self.S0 < 0.0 or not math.isfinite(self.S0):
            raise ValueError("S0 must be a non-negative number")
        if self.tail_mass < 0.0:
            raise ValueError("tail_mass must be non-negative")
        n.setflags(write=False)
        object.__setattr__(self, "n_values", n)
        if self.x_grid.weight_exponent != self.kappa0:
            object.__setattr__(self, "x_grid", Grid1D(self.x_grid.nodes, self.kappa0))

    @property
    def nodes(self) -> np.ndarray:
        return self.x_grid.nodes

    @property
    def x_max(self) -> float:
        return self.x_grid.stop

    def density_norm(self) -> float:
        """``int |n| e^{kappa0 x} dx`` on the grid plus the declared tail."""
        return float(trapezoid_weights(self.nodes) @ (np.abs(self.n_values) * self.x_grid.weights())) + self.tail_mass

    def norm(self) -> float:
        """State norm: weighted density norm plus ``|S0|``."""
        return self.density_norm() + abs(self.S0)

    def total_number(self) -> float:
        return float(trapezoid_weights(self.nodes) @ self.n_values)

    def interpolator(self):
        """Cubic interpolant of the density (zero beyond the grid, clipped at zero)."""
        return density_interpolator(self.nodes, self.n_values)


def density_interpolator(nodes: np.ndarray, values: np.ndarray):
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.size >= 4:
        spline = CubicSpline(nodes, values, bc_type="not-a-knot", extrapolate=False)
    else:
        spline = None

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        if spline is None:
            out = np.interp(x, nodes, values, left=np.nan, right=np.nan)
        else:
            out = spline(x)
        inside = (x >= nodes[0] - 1e-12 * (1 + abs(nodes[0]))) & (x <= nodes[-1] + 1e-12 * (1 + abs(nodes[-1])))
        out = np.where(inside, out, 0.0)
        # endpoints within rounding of the grid
        out = np.where(np.isnan(out), np.interp(x, nodes, values), out)
        return np.maximum(out, 0.0)

    return evaluate


def merge_nodes(a: np.ndarray, b: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Sorted union of two node sets with near-duplicates removed."""
    u = np.union1d(a, b)
    if u.size < 2:
        return u
    scale = rtol * (1.0 + np.abs(u))
    keep = np.concatenate(([True], np.diff(u) > scale[1:]))
    return u[keep]


def state_distance(s1: DensityState, s2: DensityState, include_resource: bool = True) -> float:
    """Weighted distance ``int |n1 - n2| e^{kappa0 x} dx (+ |S1 - S2|)``.

    Both densities are interpolated (cubic) onto the union of their
    nodes; outside its own grid a density counts as zero. Declared tails
    are not compared.
    """
    if abs(s1.kappa0 - s2.kappa0) > 1e-12 * max(1.0, abs(s1.kappa0)):
        raise ValueError("states carry different weights")
    nodes = merge_nodes(s1.nodes, s2.nodes)
    v1 = s1.interpolator()(nodes)
    v2 = s2.interpolator()(nodes)
    dist = float(trapezoid_weights(nodes) @ (np.abs(v1 - v2) * np.exp(s1.kappa0 * nodes)))
    if include_resource:
        dist += abs(s1.S0 - s2.S0)
    return dist


def density_from_function(
    fn,
    S0: float,
    kappa0: float,
    grid: Grid1D,
    tail_mass: float = 0.0,
) -> DensityState:
    """Sample a non-negative density function on ``grid``."""
    values = np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.size)
    return DensityState(Grid1D(grid.nodes, kappa0), np.maximum(values, 0.0), float(S0), kappa0, tail_mass)


def graded_size_grid(
    x_b: float,
    x_max: float,
    h_min: float,
    h_max: float | None = None,
    growth: float = 1.02,
    fine_width: float = 0.0,
) -> Grid1D:
    """Size nodes with spacing ``h_min`` on ``[x_b, x_b + fine_width]`` then
    growing geometrically by ``growth`` up to ``h_max``, ending exactly at ``x_max``."""
    if not x_max > x_b:
        raise ValueError("x_max must exceed x_b")
    h_max = h_min if h_max is None else max(h_max, h_min)
    nodes = [x_b]
    h = h_min
    x = x_b
    while x + h < x_max:
        x += h
        nodes.append(x)
        if x - x_b >= fine_width:
            h = min(h * growth, h_max)
    if x_max - nodes[-1] < 0.25 * h and len(nodes) > 1:
        nodes[-1] = x_max
    else:
        nodes.append(x_max)
    return Grid1D(np.array(nodes))


def x_max_for_tail(m: ModelIngredients, kappa0: float, tail_tol: float, mass_scale_rate: float | None = None) -> float:
    """Size beyond which an equilibrium-like tail ``e^{-mu_hat x/g_inf}`` weighted
    by ``e^{kappa0 x}`` carries relative mass below ``tail_tol``."""
    rate = (m.mu_hat / m.g_inf - kappa0) if mass_scale_rate is None else mass_scale_rate
    if rate <= 0.0:
        raise HypothesisError("weighted tail does not decay; choose mu0 > 0")
    return max(m.x_bar, m.x_b) + math.log(1.0 / tail_tol) / rate


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolutionBundle:
    """Output of a PDE run on ``[0, T]``.

    ``birth`` and ``consumption`` are sampled on ``env.t_grid``;
    ``picard_residual`` is the largest final sup-norm residual over the
    Picard windows.
    """

    env: EnvironmentTrajectory
    birth: np.ndarray
    consumption: np.ndarray
    n_final: DensityState
    picard_iterations: int
    picard_residual: float
    residual_history: tuple[float, ...] = field(default=(), repr=False)
    contraction_rate: float | None = None

    @property
    def times(self) -> np.ndarray:
        return self.env.t_grid.nodes


# ---------------------------------------------------------------------------
# Picard contraction constant
# ---------------------------------------------------------------------------


def picard_lipschitz(m: ModelIngredients, mass: float, horizon: float, n: int = 256) -> float | None:
    """Lipschitz constant ``L(horizon)`` of the resource map.

    Built from the declared Lipschitz constants of the ingredients, the
    bounds ``beta_sup``/``gamma_sup`` and the (unweighted) initial
    population ``mass``. Returns ``None`` if any metadata is missing.
    """
    keys = ("g_x", "g_S", "mu_x", "mu_S", "beta_x", "beta_S", "gamma_x", "gamma_S", "f_S")
    if m.beta_sup is None or m.gamma_sup is None or any(k not in m.lipschitz for k in keys):
        return None
    G1, G2, M1, M2, B1, B2, C1, C2, F1 = (float(m.lipschitz[k]) for k in keys)
    B, Gam = float(m.beta_sup), float(m.gamma_sup)
    if horizon <= 0.0:
        return F1
    tau = np.linspace(0.0, horizon, n + 1)

    def H1(t):
        return B1 * G2 * np.exp(G1 * t) + B2 + B * t * (M1 * G2 * np.exp(G1 * t) + M2)

    def Ht1(t):
        return C1 * G2 * np.exp(G1 * t) + C2 + Gam * t * (M1 * G2 * np.exp(G1 * t) + M2)

    def conv(fn, t):
        if t == 0.0:
            return 0.0
        s = np.linspace(0.0, t, 129)
        return float(trapezoid_weights(s) @ (fn(t - s) * np.exp(B * s)))

    H2 = np.array([B * conv(H1, t) + H1(t) for t in tau])
    t = horizon
    second = conv(Ht1, t)
    third = float(trapezoid_weights(tau) @ (H2 * np.exp(B * tau)))
    return F1 + B * second * mass + Gam * third * mass + float(Ht1(t)) * mass


# ---------------------------------------------------------------------------
# The march
# ---------------------------------------------------------------------------


class _CohortMarch:
    """Mutable working state of one PDE run (private to this module)."""

    def __init__(self, state: DensityState, m: ModelIngredients, dt: float, n_steps: int):
        self.m = m
        self.dt = dt
        self.n_steps = n_steps
        nodes = state.nodes
        if abs(nodes[0] - m.x_b) > 1e-9 * (1.0 + abs(m.x_b)):
            raise ValueError(f"density grid must start at the birth size x_b={m.x_b}, got {nodes[0]}")
        self.init_nodes = nodes
        self.init_values = state.n_values
        self.init_weights = stable_quadrature_weights(nodes) * state.n_values
        self.xi = nodes.astype(float).copy()
        self.ls_i = np.zeros_like(self.xi)
        self.lj_i = np.zeros_like(self.xi)
        N = n_steps + 1
        self.xb = np.empty(N)
        self.lsb = np.empty(N)
        self.ljb = np.empty(N)
        self.b = np.zeros(N)
        self.cons = np.zeros(N)
        self.S = np.zeros(N)
        self.k = 0
        S0 = max(state.S0, 0.0)
        self.S[0] = state.S0
        self.xb[0] = m.x_b
        self.lsb[0] = 0.0
        self.ljb[0] = 0.0
        h0 = float(self.init_weights @ m.beta(self.xi, S0))
        k0 = float(self.init_weights @ m.gamma(self.xi, S0))
        self.b[0] = h0
        self.cons[0] = k0
        # step weights for the trapezoid over [0, t_k]
        self._w = np.full(N, dt)
        self._w[0] = 0.5 * dt

    def trial(self, S_path: np.ndarray):
        """March ``len(S_path)`` steps from the committed step with the given
        resource values at the new nodes; returns a trial record."""
        m = self.m
        dt = self.dt
        k0 = self.k
        w = S_path.size
        xi, lsi, lji = self.xi, self.ls_i, self.lj_i
        xb = self.xb[: k0 + 1].copy()
        lsb = self.lsb[: k0 + 1].copy()
        ljb = self.ljb[: k0 + 1].copy()
        b_new = np.empty(w)
        c_new = np.empty(w)
        S_prev = self.S[k0]
        b_hist = self.b[: k0 + 1]
        for j in range(w):
            S_next = float(S_path[j])
            xi, lsi, lji = cohort_step(m, xi, lsi, lji, S_prev, S_next, dt)
            xb, lsb, ljb = cohort_step(m, xb, lsb, ljb, S_prev, S_next, dt)
            xb = np.append(xb, m.x_b)
            lsb = np.append(lsb, 0.0)
            ljb = np.append(ljb, 0.0)
            Sc = max(S_next, 0.0)
            surv_i = np.exp(-lsi)
            h_val = float(self.init_weights @ (m.beta(xi, Sc) * surv_i))
            k_val = float(self.init_weights @ (m.gamma(xi, Sc) * surv_i))
            surv_b = np.exp(-lsb)
            row_beta = m.beta(xb, Sc) * surv_b * np.ones_like(xb)
            row_gamma = m.gamma(xb, Sc) * surv_b * np.ones_like(xb)
            kk = k0 + j + 1
            weights = self._w[: kk + 1].copy()
            weights[-1] = 0.5 * dt
            past = b_hist if j == 0 else np.concatenate((b_hist, b_new[:j]))
            bk = volterra2_step(row_beta, weights, past, h_val)
            b_all_w = np.concatenate((past, [bk]))
            ck = k_val + float(np.dot(weights * row_gamma, b_all_w))
            b_new[j] = bk
            c_new[j] = ck
            S_prev = S_next
        return {
            "S": np.asarray(S_path, dtype=float).copy(),
            "b": b_new,
            "c": c_new,
            "xi": xi,
            "lsi": lsi,
            "lji": lji,
            "xb": xb,
            "lsb": lsb,
            "ljb": ljb,
        }

    def picard_image(self, trial) -> np.ndarray:
        """``V(S)`` on the window nodes, from a trial record."""
        f = self.m.f
        k0 = self.k
        S_all = np.concatenate(([self.S[k0]], trial["S"]))
        c_all = np.concatenate(([self.cons[k0]], trial["c"]))
        rate = np.asarray(f(np.maximum(S_all, 0.0)), dtype=float) - c_all
        incr = 0.5 * self.dt * (rate[1:] + rate[:-1])
        return self.S[k0] + np.cumsum(incr)

    def commit(self, trial, S_accepted: np.ndarray) -> None:
        w = trial["S"].size
        k0 = self.k
        sl = slice(k0 + 1, k0 + w + 1)
        self.S[sl] = S_accepted
        self.b[sl] = trial["b"]
        self.cons[sl] = trial["c"]
        self.xi, self.ls_i, self.lj_i = trial["xi"], trial["lsi"], trial["lji"]
        n = trial["xb"].size
        self.xb[:n] = trial["xb"]
        self.lsb[:n] = trial["lsb"]
        self.ljb[:n] = trial["ljb"]
        self.k = k0 + w

    def predictor(self, w: int) -> np.ndarray:
        k0 = self.k
        steps = np.arange(1, w + 1, dtype=float)
        if k0 >= 2:
            # quadratic extrapolation through the last three accepted values
            s0, s1, s2 = self.S[k0], self.S[k0 - 1], self.S[k0 - 2]
            return s0 + steps * (1.5 * s0 - 2.0 * s1 + 0.5 * s2) + 0.5 * steps**2 * (s0 - 2.0 * s1 + s2)
        slope = float(self.m.f(max(self.S[k0], 0.0))) - self.cons[k0]
        return self.S[k0] + slope * self.dt * steps


def _picard_window(march: _CohortMarch, w: int, tol: ToleranceSet, k_weight: float, history: list[float]):
    dt = march.dt
    guess = march.predictor(w)
    weights = np.exp(-k_weight * dt * np.arange(1, w + 1))
    prev_weighted = np.inf
    negative_strikes = 0
    for it in range(1, tol.max_iter + 1):
        trial = march.trial(guess)
        image = march.picard_image(trial)
        diff = image - guess
        sup_res = float(np.max(np.abs(diff)))
        weighted = float(np.max(np.abs(diff) * weights))
        history.append(sup_res)
        if sup_res <= tol.picard_tol:
            march.commit(trial, image)
            return it, sup_res
        if np.min(image) < -1e-8:
            negative_strikes += 1
            if negative_strikes > 30:
                raise ConvergenceError(
                    f"Picard iterates keep going negative (min {np.min(image):.3e}) near t={march.k * dt:.6g}",
                    history,
                )
            guess = guess + 0.5 * diff
            continue
        if weighted > prev_weighted:
            guess = guess + 0.5 * diff
        else:
            guess = image
        prev_weighted = weighted
    raise ConvergenceError(
        f"Picard iteration did not converge within {tol.max_iter} iterations near t={march.k * dt:.6g} "
        f"(last residual {history[-1]:.3e})",
        history,
    )


def _steps_for(horizon: float, dt: float) -> tuple[int, float]:
    if horizon < 0.0:
        raise ValueError("horizon must be non-negative")
    if horizon == 0.0:
        return 0, dt
    n = max(1, int(math.ceil(horizon / dt - 1e-9)))
    return n, horizon / n


def picard_resource(
    state: DensityState,
    horizon: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    dt: float = DEFAULT_DT,
    window: float | None = None,
) -> SolutionBundle:
    """Solve the coupled birth-rate / resource problem on ``[0, horizon]``.

    Parameters
    ----------
    state
        Initial density and resource.
    horizon
        Final time ``T >= 0``.
    dt
        Time step (rounded so that it divides the horizon).
    window
        Length of the Picard windows. ``None`` (default) uses one time
        step per window; any positive value (e.g. ``1.0`` for unit
        windows) freezes the past and iterates the resource map on the
        whole window.

    Returns
    -------
    SolutionBundle
        Resource and birth trajectories on the time grid and the density
        at ``horizon``.

    Raises
    ------
    ConvergenceError
        If a window does not converge within ``tol.max_iter`` iterations.
    """
    n_steps, dt = _steps_for(horizon, dt)
    if n_steps == 0:
        env = EnvironmentTrajectory(Grid1D(np.array([0.0, 1e-300])), np.array([state.S0, state.S0]))
        march = _CohortMarch(state, m, dt, 0)
        return SolutionBundle(env, np.array([march.b[0]] * 2), np.array([march.cons[0]] * 2), state, 0, 0.0)
    march = _CohortMarch(state, m, dt, n_steps)
    w = 1 if window is None else max(1, int(round(window / dt)))
    mass = state.total_number()
    L = picard_lipschitz(m, mass, w * dt)
    k_weight = 2.0 * L if L is not None else 1.0 / (w * dt)
    history: list[float] = []
    total_iters = 0
    worst = 0.0
    while march.k < n_steps:
        width = min(w, n_steps - march.k)
        its, res = _picard_window(march, width, tol, k_weight, history)
        total_iters += its
        worst = max(worst, res)
    times = dt * np.arange(n_steps + 1)
    times[-1] = horizon
    S = np.maximum(march.S, 0.0)
    env = EnvironmentTrajectory(Grid1D(times), S)
    final = _assemble_density(state, march, m)
    return SolutionBundle(
        env=env,
        birth=march.b.copy(),
        consumption=march.cons.copy(),
        n_final=final,
        picard_iterations=total_iters,
        picard_residual=worst,
        residual_history=tuple(history),
        contraction_rate=L,
    )


def _assemble_density(state: DensityState, march: _CohortMarch, m: ModelIngredients) -> DensityState:
    N = march.k
    # newborn branch, youngest first (ascending size)
    xb = march.xb[: N + 1][::-1]
    nb = (
        march.b[: N + 1]
        * np.exp(-march.lsb[: N + 1] - march.ljb[: N + 1])
        / m.g(m.x_b, np.maximum(march.S[: N + 1], 0.0))
    )[::-1]
    # initial-cohort branch; the cohort started at x_b coincides with the
    # oldest newborn cohort, which takes precedence (newborn-side limit)
    xi = march.xi[1:]
    ni = march.init_values[1:] * np.exp(-march.ls_i[1:] - march.lj_i[1:])
    nodes = np.concatenate((xb, xi))
    values = np.concatenate((nb, ni))
    if np.any(np.diff(nodes) <= 0.0):
        order = np.argsort(nodes, kind="stable")
        nodes = nodes[order]
        values = values[order]
        keep = np.concatenate(([True], np.diff(nodes) > 0.0))
        nodes, values = nodes[keep], values[keep]
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite density after evolution")
    t = N * march.dt
    tail = state.tail_mass
    if tail > 0.0:
        if m.sigma_integral is None:
            raise HypothesisError("a declared density tail can only be propagated with sigma_integral metadata")
        mu0 = m.mu_hat - state.kappa0 * m.g_inf
        tail = tail * math.exp(m.sigma_integral) * math.exp(-mu0 * t)
    out = DensityState(Grid1D(nodes, state.kappa0), np.maximum(values, 0.0), float(max(march.S[N], 0.0)), state.kappa0, tail)
    return out


def check_tail(state: DensityState, tol: ToleranceSet) -> None:
    """Raise if the declared tail exceeds ``tail_tol`` of the weighted norm."""
    total = state.density_norm()
    if total > 0.0 and state.tail_mass > tol.tail_tol * total:
        raise TailBudgetError(
            f"declared tail mass {state.tail_mass:.3e} exceeds tail_tol*norm = {tol.tail_tol * total:.3e}; "
            "use a larger x_max"
        )


def evolve(
    state: DensityState,
    t: float,
    m: ModelIngredients,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    dt: float = DEFAULT_DT,
    window: float | None = None,
) -> DensityState:
    """Advance a density state by time ``t`` (identity for ``t = 0``)."""
    if t < 0.0:
        raise ValueError("evolve needs t >= 0")
    if t == 0.0:
        return state
    bundle = picard_resource(state, t, m, tol, dt, window)
    check_tail(bundle.n_final, tol)
    return bundle.n_final


# ---------------------------------------------------------------------------
# Fixed-environment operations
# ---------------------------------------------------------------------------


def _env_march_grid(env: EnvironmentTrajectory, horizon: float, dt: float | None):
    if env.start > 1e-12 or env.stop < horizon - 1e-12:
        raise ValueError("environment must span [0, horizon]")
    if dt is None:
        dt = DEFAULT_DT
    n, dt = _steps_for(horizon, dt)
    times = dt * np.arange(n + 1)
    return n, dt, times


def _fixed_env_march(state: DensityState, env: EnvironmentTrajectory, horizon: float, m: ModelIngredients, dt):
    """March under a prescribed environment; returns times, h, k and the
    kernel matrices (lower triangular) for beta and gamma."""
    n, dt, times = _env_march_grid(env, horizon, dt)
    S = np.maximum(env(times), 0.0)
    weights = stable_quadrature_weights(state.nodes) * state.n_values
    xi = state.nodes.astype(float).copy()
    lsi = np.zeros_like(xi)
    h = np.empty(n + 1)
    kk = np.empty(n + 1)
    Kb = np.zeros((n + 1, n + 1))
    Kg = np.zeros((n + 1, n + 1))
    h[0] = weights @ m.beta(xi, S[0])
    kk[0] = weights @ m.gamma(xi, S[0])
    Kb[0, 0] = m.beta(m.x_b, S[0])
    Kg[0, 0] = m.gamma(m.x_b, S[0])
    xb = np.array([m.x_b])
    lsb = np.zeros(1)
    for k in range(n):
        xi, lsi, _ = cohort_step(m, xi, lsi, None, S[k], S[k + 1], dt)
        xb, lsb, _ = cohort_step(m, xb, lsb, None, S[k], S[k + 1], dt)
        xb = np.append(xb, m.x_b)
        lsb = np.append(lsb, 0.0)
        si = np.exp(-lsi)
        h[k + 1] = weights @ (m.beta(xi, S[k + 1]) * si)
        kk[k + 1] = weights @ (m.gamma(xi, S[k + 1]) * si)
        sb = np.exp(-lsb)
        Kb[k + 1, : k + 2] = m.beta(xb, S[k + 1]) * sb
        Kg[k + 1, : k + 2] = m.gamma(xb, S[k + 1]) * sb
    return times, h, kk, Kb, Kg


def forcing_h(state: DensityState, env: EnvironmentTrajectory, t: float, m: ModelIngredients, dt: float | None = None) -> float:
    """Birth rate at time ``t`` due to individuals present at time zero."""
    if t == 0.0:
        return float(stable_quadrature_weights(state.nodes) @ (state.n_values * m.beta(state.nodes, max(env(0.0), 0.0))))
    times, h, _, _, _ = _fixed_env_march(state, env, t, m, dt if dt is not None else min(DEFAULT_DT, t))
    return float(h[-1])


def forcing_k(state: DensityState, env: EnvironmentTrajectory, t: float, m: ModelIngredients, dt: float | None = None) -> float:
    """Consumption rate at time ``t`` due to individuals present at time zero."""
    if t == 0.0:
        return float(stable_quadrature_weights(state.nodes) @ (state.n_values * m.gamma(state.nodes, max(env(0.0), 0.0))))
    times, _, kk, _, _ = _fixed_env_march(state, env, t, m, dt if dt is not None else min(DEFAULT_DT, t))
    return float(kk[-1])


def solve_birth(
    state: DensityState,
    env: EnvironmentTrajectory,
    horizon: float,
    m: ModelIngredients,
    dt: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Birth rate under a prescribed environment, by the trapezoidal renewal march.

    Returns ``(times, b)``.
    """
    times, h, _, Kb, _ = _fixed_env_march(state, env, horizon, m, dt)
    b = volterra2_solve(Kb, h, Grid1D(times))
    return times, b


def fixed_environment_kernels(state, env, horizon, m, dt=None):
    """Times, forcing and the lower-triangular kernel matrix ``beta_S(t_k, t_j)``.

    Exposed for independent cross-checks of the renewal march.
    """
    times, h, _, Kb, _ = _fixed_env_march(state, env, horizon, m, dt)
    return times, h, Kb


def birth_rate_from_density(state: DensityState, m: ModelIngredients) -> float:
    """``int beta(x, S) n(x) dx`` recomputed from a density."""
    return float(stable_quadrature_weights(state.nodes) @ (state.n_values * m.beta(state.nodes, state.S0)))


def consumption_from_density(state: DensityState, m: ModelIngredients) -> float:
    return float(stable_quadrature_weights(state.nodes) @ (state.n_values * m.gamma(state.nodes, state.S0)))


def with_resource(state: DensityState, S0: float) -> DensityState:
    return replace(state, S0=float(S0))
