"""Individual-level flow along characteristics.

For a resource trajectory ``S`` this module computes the size flow
``X_S(t, s, xi)``, the birth time ``T_S(x_b, x, t)`` (its inverse in the
birth-size argument), survival ``F_S = exp(-int mu)`` and the per-capita
fecundity/consumption kernels.

Two layers are provided:

* pointwise functions (:func:`flow_size`, :func:`birth_time`,
  :func:`survival`, :func:`kernel_beta`, :func:`kernel_gamma`) that
  integrate a single characteristic (vectorised over starting sizes);
* :func:`cohort_step`, the vectorised RK4 step used by the engines to
  march many cohorts at once on a shared time grid, carrying
  ``log`` survival and the ``log`` Jacobian ``int D_1 g`` as companion
  variables (the variational equation of the flow).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FlowBelowBirthSize, NumericalError, SpanError
from .ingredients import ModelIngredients, partial_x
from .numerics import Grid1D, STEPS_PER_UNIT, default_step_count


@dataclass(frozen=True)
class EnvironmentTrajectory:
    """Resource concentration sampled on a time grid, linearly interpolated."""

    t_grid: Grid1D
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.t_grid.nodes.shape:
            raise ValueError("environment values must match the time grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("environment values must be finite")
        if np.any(v < -1e-8):
            raise ValueError("environment values must be non-negative")
        v = np.maximum(v, 0.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float, t0: float, t1: float, n_intervals: int = 1) -> "EnvironmentTrajectory":
        grid = Grid1D.uniform(t0, t1, n_intervals)
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_function(cls, fn, t0: float, t1: float, n_intervals: int) -> "EnvironmentTrajectory":
        grid = Grid1D.uniform(t0, t1, n_intervals)
        return cls(grid, np.asarray(fn(grid.nodes), dtype=float))

    @property
    def start(self) -> float:
        return self.t_grid.start

    @property
    def stop(self) -> float:
        return self.t_grid.stop

    def covers(self, t0: float, t1: float, slack: float = 1e-12) -> bool:
        lo, hi = min(t0, t1), max(t0, t1)
        return lo >= self.start - slack and hi <= self.stop + slack

    def __call__(self, t):
        return np.interp(t, self.t_grid.nodes, self.values)


def _require_span(env: EnvironmentTrajectory, t0: float, t1: float) -> None:
    if not env.covers(t0, t1):
        raise SpanError(
            f"interval [{min(t0, t1):.6g}, {max(t0, t1):.6g}] is outside the environment span "
            f"[{env.start:.6g}, {env.stop:.6g}]; extend the environment"
        )


def _augmented_rhs(m: ModelIngredients, env: EnvironmentTrajectory, with_mu: bool, with_jac: bool):
    def rhs(t, y):
        S = max(float(env(t)), 0.0)
        x = y[0]
        parts = [m.g(x, S) * np.ones_like(x)]
        if with_mu:
            parts.append(m.mu(x, S) * np.ones_like(x))
        if with_jac:
            parts.append(partial_x(m.g, x, S) * np.ones_like(x))
        return np.stack(parts)

    return rhs


@dataclass(frozen=True)
class CharFlow:
    """One characteristic sampled on a uniform time step.

    ``log_jacobian`` is ``int D_1 g``; ``exp(log_jacobian)`` is the
    derivative of the size at time ``t`` with respect to the starting size.
    """

    times: np.ndarray
    x_of_t: np.ndarray
    survival_of_t: np.ndarray
    log_jacobian: np.ndarray
    span: tuple[float, float]
    start_size: float


def char_flow(
    env: EnvironmentTrajectory,
    s: float,
    t: float,
    xi: float,
    m: ModelIngredients,
    n_steps: int | None = None,
) -> CharFlow:
    """Forward characteristic from ``(s, xi)`` to time ``t >= s``."""
    if t < s:
        raise ValueError("char_flow integrates forward in time (t >= s)")
    if xi < m.x_b:
        raise ValueError("starting size must be at least x_b")
    _require_span(env, s, t)
    if t == s:
        return CharFlow(np.array([s]), np.array([xi]), np.array([1.0]), np.array([0.0]), (s, t), xi)
    n = default_step_count(t - s) if n_steps is None else int(n_steps)
    times, states = _march(env, s, t, np.array([[float(xi)], [0.0], [0.0]]), m, n, True, True)
    return CharFlow(times, states[:, 0, 0], np.exp(-states[:, 1, 0]), states[:, 2, 0], (s, t), float(xi))


def _march(env, t0, t1, y0, m, n, with_mu, with_jac):
    rhs = _augmented_rhs(m, env, with_mu, with_jac)
    h = (t1 - t0) / n
    times = t0 + h * np.arange(n + 1)
    times[-1] = t1
    out = np.empty((n + 1,) + y0.shape)
    out[0] = y0
    y = y0
    for k in range(n):
        tk = times[k]
        k1 = rhs(tk, y)
        k2 = rhs(tk + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(tk + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(tk + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite characteristic state at t={tk:.6g}")
        out[k + 1] = y
    return times, out


def flow_size(
    env: EnvironmentTrajectory,
    t: float,
    s: float,
    xi,
    m: ModelIngredients,
    n_steps: int | None = None,
):
    """Size at time ``t`` of an individual that had size ``xi`` at time ``s``.

    Backward integration (``t < s``) is allowed as long as the size stays
    above ``x_b``.

    Raises
    ------
    FlowBelowBirthSize
        If the backward flow reaches ``x_b`` before time ``t``; the error
        carries the (interpolated) hitting time.
    """
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xi_arr < m.x_b - 1e-12):
        raise ValueError("flow_size needs xi >= x_b")
    _require_span(env, s, t)
    if t == s:
        return xi_arr if np.ndim(xi) else float(xi_arr[0])
    n = default_step_count(t - s) if n_steps is None else int(n_steps)
    times, states = _march(env, s, t, xi_arr[None, :], m, n, False, False)
    sizes = states[:, 0, :]
    if t < s:
        below = sizes < m.x_b
        if below.any():
            col = int(np.argmax(below.any(axis=0)))
            k = int(np.argmax(below[:, col]))
            x0, x1 = sizes[k - 1, col], sizes[k, col]
            frac = (x0 - m.x_b) / (x0 - x1)
            hit = times[k - 1] + frac * (times[k] - times[k - 1])
            raise FlowBelowBirthSize(
                f"backward flow from size {xi_arr[col]:.6g} reaches x_b at t={hit:.6g}, before t={t:.6g}",
                float(hit),
            )
    result = sizes[-1]
    return result if np.ndim(xi) else float(result[0])


def birth_time(
    env: EnvironmentTrajectory,
    x,
    t: float,
    m: ModelIngredients,
    n_steps: int | None = None,
):
    """Time at which an individual of size ``x`` at time ``t`` was born.

    Integrates ``dt/dx = 1/g(x, S(t(x)))`` backward in size from ``(x, t)``
    to ``x_b``; vectorised over ``x`` by rescaling every path to a
    common parameter interval.

    Raises
    ------
    SpanError
        If the required history extends before the start of ``env``.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_arr < m.x_b - 1e-12):
        raise ValueError("birth_time needs x >= x_b")
    span = np.maximum(x_arr - m.x_b, 0.0)
    if not env.covers(t, t):
        raise SpanError(f"time {t} outside the environment span")
    longest = float(np.max(span)) / m.g_min
    n = (int(np.ceil(STEPS_PER_UNIT * longest / 2.0)) + 64) if n_steps is None else int(n_steps)
    # parameter v runs from 1 (size x) to 0 (size x_b); size = x_b + v*span
    hv = -1.0 / n
    tt = np.full(x_arr.shape, float(t))
    lo = env.start

    def rate(v, tau):
        if np.any(tau < lo - 1e-12):
            raise SpanError(
                f"birth time lies before the environment start {lo:.6g}; extend the environment"
            )
        S = np.maximum(env(tau), 0.0)
        return span / m.g(m.x_b + v * span, S)

    v = 1.0
    for _ in range(n):
        k1 = rate(v, tt)
        k2 = rate(v + 0.5 * hv, tt + 0.5 * hv * k1)
        k3 = rate(v + 0.5 * hv, tt + 0.5 * hv * k2)
        k4 = rate(v + hv, tt + hv * k3)
        tt = tt + (hv / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        v += hv
    if np.any(tt < lo - 1e-12):
        raise SpanError(f"birth time lies before the environment start {lo:.6g}; extend the environment")
    return tt if np.ndim(x) else float(tt[0])


def survival(
    env: EnvironmentTrajectory,
    t: float,
    s: float,
    xi,
    m: ModelIngredients,
    n_steps: int | None = None,
):
    """Probability to survive from ``s`` to ``t >= s`` starting at size ``xi``."""
    if t < s:
        raise ValueError("survival needs t >= s")
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if t == s:
        out = np.ones_like(xi_arr)
        return out if np.ndim(xi) else 1.0
    _require_span(env, s, t)
    n = default_step_count(t - s) if n_steps is None else int(n_steps)
    y0 = np.stack([xi_arr, np.zeros_like(xi_arr)])
    _, states = _march(env, s, t, y0, m, n, True, False)
    out = np.exp(-states[-1, 1])
    return out if np.ndim(xi) else float(out[0])


def _kernel(rate_name: str, env, t, s, xi, m, n_steps):
    if t < s:
        raise ValueError("kernels need t >= s")
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    S_t = max(float(env(t)), 0.0)
    if t == s:
        out = m.rate(rate_name)(xi_arr, S_t) * np.ones_like(xi_arr)
    else:
        _require_span(env, s, t)
        n = default_step_count(t - s) if n_steps is None else int(n_steps)
        y0 = np.stack([xi_arr, np.zeros_like(xi_arr)])
        _, states = _march(env, s, t, y0, m, n, True, False)
        out = m.rate(rate_name)(states[-1, 0], S_t) * np.exp(-states[-1, 1])
    return out if np.ndim(xi) else float(out[0])


def kernel_beta(env, t, s, xi, m, n_steps=None):
    """Expected offspring rate at ``t`` of an individual of size ``xi`` at ``s``."""
    return _kernel("beta", env, t, s, xi, m, n_steps)


def kernel_gamma(env, t, s, xi, m, n_steps=None):
    """Expected consumption rate at ``t`` of an individual of size ``xi`` at ``s``."""
    return _kernel("gamma", env, t, s, xi, m, n_steps)


# ---------------------------------------------------------------------------
# Vectorised cohort stepping
# ---------------------------------------------------------------------------


def cohort_step(
    m: ModelIngredients,
    x: np.ndarray,
    log_surv: np.ndarray,
    log_jac: np.ndarray | None,
    S_start: float,
    S_end: float,
    h: float,
):
    """Advance many cohorts by one RK4 step under a linear resource ramp.

    The resource varies linearly from ``S_start`` to ``S_end`` over the
    step (the environment interpolant), so the midpoint stages see the
    average. ``log_jac`` may be ``None`` to skip the Jacobian.

    Returns the updated ``(x, log_surv, log_jac)``.
    """
    S0 = max(S_start, 0.0)
    S1 = max(S_end, 0.0)
    Sm = max(0.5 * (S_start + S_end), 0.0)
    g, mu = m.g, m.mu
    track = log_jac is not None

    def stage(xs, S):
        gv = g(xs, S)
        mv = mu(xs, S)
        if track:
            dv = partial_x(g, xs, S)
            return gv, mv, dv
        return gv, mv, None

    g1, m1, d1 = stage(x, S0)
    g2, m2, d2 = stage(x + 0.5 * h * g1, Sm)
    g3, m3, d3 = stage(x + 0.5 * h * g2, Sm)
    g4, m4, d4 = stage(x + h * g3, S1)
    c = h / 6.0
    x_new = x + c * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
    ls_new = log_surv + c * (m1 + 2.0 * m2 + 2.0 * m3 + m4)
    lj_new = log_jac + c * (d1 + 2.0 * d2 + 2.0 * d3 + d4) if track else None
    return x_new, ls_new, lj_new
