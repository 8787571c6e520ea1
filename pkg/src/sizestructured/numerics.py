"""Shared numerical kernels.

Fixed-step RK4, composite quadrature (including non-uniform Simpson
weights), a trapezoidal Volterra second-kind marcher, bracketed and
complex root finding, and exponential-weight quadratures used by the
Laplace-type integrals of the characteristic equation.

All functions are pure: they take arrays/callables and return new
arrays; nothing here keeps state between calls.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, signal

from .errors import (
    BoundaryRootError,
    BracketError,
    ConvergenceError,
    GridTooCoarseError,
    NumericalError,
    ReversedIntervalError,
)

logger = logging.getLogger(__name__)

#: Default number of RK4 steps per unit of integration length.
STEPS_PER_UNIT = 2048


# ---------------------------------------------------------------------------
# Basic containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing set of nodes.

    ``weight_exponent`` records the exponential weight attached to the
    grid: the weighted measure is ``exp(weight_exponent * node) d(node)``.
    Size grids carry ``+kappa0``; age grids carry ``-mu0``.
    """

    nodes: np.ndarray
    weight_exponent: float = 0.0

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("Grid1D needs a one-dimensional array with at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("Grid1D nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("Grid1D nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, start: float, stop: float, n_intervals: int, weight_exponent: float = 0.0) -> "Grid1D":
        return cls(np.linspace(start, stop, int(n_intervals) + 1), weight_exponent)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def start(self) -> float:
        return float(self.nodes[0])

    @property
    def stop(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def max_spacing(self) -> float:
        return float(np.max(self.spacing))

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        d = self.spacing
        return bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))

    def weights(self) -> np.ndarray:
        """Pointwise exponential weight at the nodes."""
        return np.exp(self.weight_exponent * self.nodes)


@dataclass(frozen=True)
class ToleranceSet:
    """Tolerances shared by every module.

    ``tail_tol`` bounds the relative weighted mass allowed beyond a
    truncated grid.
    """

    ode_rel: float = 1e-8
    ode_abs: float = 1e-12
    quad_rel: float = 1e-8
    picard_tol: float = 1e-10
    root_tol: float = 1e-10
    max_iter: int = 200
    tail_tol: float = 1e-8

    def __post_init__(self) -> None:
        for name in ("ode_rel", "ode_abs", "quad_rel", "picard_tol", "root_tol", "tail_tol"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"tolerance {name} must be strictly positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")

    def with_(self, **changes) -> "ToleranceSet":
        return replace(self, **changes)


DEFAULT_TOLERANCES = ToleranceSet()

TOLERANCE_PROFILES: dict[str, ToleranceSet] = {
    "default": DEFAULT_TOLERANCES,
    "fast": ToleranceSet(quad_rel=1e-6, picard_tol=1e-8, root_tol=1e-8, max_iter=100, tail_tol=1e-6),
    "strict": ToleranceSet(quad_rel=1e-10, picard_tol=1e-12, root_tol=1e-12, max_iter=400, tail_tol=1e-10),
}


def grid_budget(h: float, scale: float = 1.0) -> float:
    """Nominal second-order discretisation budget ``h**2 * scale``.

    The renewal march is second order, so this is the yardstick used
    for all "within a few grid budgets" statements.
    """
    return float(h) ** 2 * max(float(scale), 1.0)


# ---------------------------------------------------------------------------
# ODE stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ODESolution:
    """Solution sampled on a uniform step; ``y[k]`` is the state at ``t[k]``."""

    t: np.ndarray
    y: np.ndarray

    @property
    def final(self):
        return self.y[-1]


def rk4_step(rhs: Callable, t: float, y, h: float):
    """One classical Runge-Kutta step."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def default_step_count(length: float, steps_per_unit: int = STEPS_PER_UNIT) -> int:
    return max(1, int(math.ceil(abs(length) * steps_per_unit - 1e-9)))


def ode_solve(
    rhs: Callable,
    t0: float,
    t1: float,
    y0,
    n_steps: int | None = None,
    blowup: float = 1e150,
) -> ODESolution:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` with fixed-step RK4.

    Backward integration (``t1 < t0``) is allowed. ``y0`` may be a scalar
    or an array; ``rhs`` must accept and return the same shape.

    Raises
    ------
    NumericalError
        If the right-hand side returns NaN or the solution exceeds
        ``blowup`` in magnitude (step underflow / blow-up).
    """
    if t0 == t1:
        raise ValueError("ode_solve needs t0 != t1")
    n = default_step_count(t1 - t0) if n_steps is None else int(n_steps)
    if n < 1:
        raise ValueError("n_steps must be positive")
    h = (t1 - t0) / n
    y = np.asarray(y0, dtype=float)
    ts = t0 + h * np.arange(n + 1)
    ts[-1] = t1
    out = np.empty((n + 1,) + y.shape)
    out[0] = y
    for k in range(n):
        y = rk4_step(rhs, ts[k], y, h)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"ode_solve: non-finite state (NaN in rhs or blow-up) at t={ts[k]:.6g}")
        if np.max(np.abs(y)) > blowup:
            raise NumericalError(
                f"ode_solve: state exceeded {blowup:.1e} at t={ts[k]:.6g}; the step is too large for this rhs"
            )
        out[k + 1] = y
    return ODESolution(ts, out)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite trapezoid weights on arbitrary strictly increasing nodes."""
    x = np.asarray(nodes, dtype=float)
    d = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def simpson_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on arbitrary strictly increasing nodes.

    Interval pairs use the non-uniform three-point rule. With an odd
    number of intervals the last interval is integrated with the
    quadratic through the final three nodes, which is the same
    convention as :func:`scipy.integrate.simpson`. Two nodes fall back
    to the trapezoid rule.
    """
    x = np.asarray(nodes, dtype=float)
    n_int = x.size - 1
    if n_int < 2:
        return trapezoid_weights(x)
    d = np.diff(x)
    w = np.zeros_like(x)
    n_pairs = n_int // 2
    h0 = d[0 : 2 * n_pairs : 2]
    h1 = d[1 : 2 * n_pairs : 2]
    s = h0 + h1
    w[0 : 2 * n_pairs : 2] += s / 6.0 * (2.0 - h1 / h0)
    w[1 : 2 * n_pairs : 2] += s / 6.0 * s * s / (h0 * h1)
    w[2 : 2 * n_pairs + 1 : 2] += s / 6.0 * (2.0 - h0 / h1)
    if n_int % 2 == 1:
        a = d[-2]
        b = d[-1]
        w[-1] += (2.0 * b * b + 3.0 * a * b) / (6.0 * (a + b))
        w[-2] += (b * b + 3.0 * a * b) / (6.0 * a)
        w[-3] -= b**3 / (6.0 * a * (a + b))
    return w


def quad(
    f: Callable,
    a: float,
    b: float,
    rule: str = "simpson",
    n: int | None = None,
) -> float:
    """Composite quadrature of a vectorised function on ``[a, b]``.

    ``n`` is the number of intervals (default: 2048 per unit length,
    at least 16). ``a > b`` is an error rather than a sign flip.
    """
    if a > b:
        raise ReversedIntervalError(f"quad called with a={a} > b={b}")
    if a == b:
        return 0.0
    if n is None:
        n = max(16, default_step_count(b - a))
    n = int(n)
    if rule == "simpson" and n % 2:
        n += 1
    x = np.linspace(a, b, n + 1)
    y = np.asarray(f(x), dtype=float)
    if y.shape == ():
        y = np.full_like(x, float(y))
    if not np.all(np.isfinite(y)):
        raise NumericalError("quad: integrand is not finite on the interval")
    if rule == "trapezoid":
        return float(trapezoid_weights(x) @ y)
    if rule == "simpson":
        return float(simpson_weights(x) @ y)
    raise ValueError(f"unknown quadrature rule {rule!r}")


# ---------------------------------------------------------------------------
# Volterra equations of the second kind
# ---------------------------------------------------------------------------


def volterra2_step(
    kernel_row: np.ndarray,
    weights: np.ndarray,
    past: np.ndarray,
    forcing_value: float,
) -> float:
    """Solve one node of the trapezoidal Volterra march.

    ``kernel_row[j] = K(t_k, t_j)`` for ``j = 0..k``, ``weights`` are the
    trapezoid weights of ``t_0..t_k`` and ``past`` holds ``b_0..b_{k-1}``.
    The diagonal term is implicit and solved exactly.
    """
    diag = 1.0 - weights[-1] * kernel_row[-1]
    if not diag > 0.0:
        raise GridTooCoarseError(
            f"renewal march: 1 - w_kk*K(t_k,t_k) = {diag:.3e} <= 0; refine the time grid"
        )
    explicit = float(np.dot(weights[:-1] * kernel_row[:-1], past)) if past.size else 0.0
    return (forcing_value + explicit) / diag


def volterra2_solve(kernel, forcing, t_grid: Grid1D) -> np.ndarray:
    """March ``b(t) = forcing(t) + int_{t_0}^t K(t,s) b(s) ds`` on ``t_grid``.

    Parameters
    ----------
    kernel
        Either a callable ``kernel(t, s_array) -> array`` or a square array
        whose lower triangle holds ``K(t_k, t_j)``.
    forcing
        Array sampled on the grid, or a vectorised callable.
    t_grid
        Time nodes (need not be uniform).

    Returns
    -------
    numpy.ndarray
        The discrete solution at the nodes.
    """
    t = t_grid.nodes
    n = t.size
    h = np.asarray(forcing(t) if callable(forcing) else forcing, dtype=float)
    if h.shape != t.shape:
        raise ValueError("forcing must be sampled on t_grid")
    matrix = None if callable(kernel) else np.asarray(kernel, dtype=float)
    b = np.empty(n)
    b[0] = h[0]
    dt = np.diff(t)
    weights = np.zeros(n)
    for k in range(1, n):
        weights[k - 1] += 0.5 * dt[k - 1]
        weights[k] = 0.5 * dt[k - 1]
        row = matrix[k, : k + 1] if matrix is not None else np.asarray(kernel(t[k], t[: k + 1]), dtype=float)
        if row.shape == ():
            row = np.full(k + 1, float(row))
        b[k] = volterra2_step(row, weights[: k + 1], b[:k], h[k])
    if not np.all(np.isfinite(b)):
        raise NumericalError("volterra2_solve produced non-finite values")
    return b


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------


def find_root_bracketed(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10) -> float:
    """Brent's method on a sign-changing bracket."""
    flo = float(f(lo))
    fhi = float(f(hi))
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise NumericalError("find_root_bracketed: non-finite endpoint value")
    if flo * fhi > 0.0:
        raise BracketError(f"no sign change on [{lo}, {hi}] (f(lo)={flo:.3e}, f(hi)={fhi:.3e})")
    root, info = optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, full_output=True)
    if not info.converged:
        raise ConvergenceError(f"brentq did not converge on [{lo}, {hi}]")
    return float(root)


@dataclass(frozen=True)
class Rectangle:
    """Closed rectangle ``[re_lo, re_hi] x [im_lo, im_hi]`` in the complex plane."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self) -> None:
        if not (self.re_hi > self.re_lo and self.im_hi > self.im_lo):
            raise ValueError("degenerate rectangle")

    @property
    def width(self) -> float:
        return self.re_hi - self.re_lo

    @property
    def height(self) -> float:
        return self.im_hi - self.im_lo

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z: complex, slack: float = 0.0) -> bool:
        return (
            self.re_lo - slack <= z.real <= self.re_hi + slack
            and self.im_lo - slack <= z.imag <= self.im_hi + slack
        )

    def split(self, fraction: float) -> tuple["Rectangle", "Rectangle"]:
        if self.width >= self.height:
            cut = self.re_lo + fraction * self.width
            return (
                Rectangle(self.re_lo, cut, self.im_lo, self.im_hi),
                Rectangle(cut, self.re_hi, self.im_lo, self.im_hi),
            )
        cut = self.im_lo + fraction * self.height
        return (
            Rectangle(self.re_lo, self.re_hi, self.im_lo, cut),
            Rectangle(self.re_lo, self.re_hi, cut, self.im_hi),
        )


@dataclass(frozen=True)
class ComplexRoot:
    value: complex
    multiplicity: int
    residual: float


@dataclass
class _ContourSampler:
    f: Callable[[np.ndarray], np.ndarray]
    max_points: int = 1 << 15
    initial: int = 32
    max_turn: float = 0.5
    scale: float = field(default=0.0)

    def edge_phase(self, z0: complex, z1: complex) -> tuple[float, float]:
        """Return (total phase change, min |f|) along the segment z0 -> z1."""
        s = np.linspace(0.0, 1.0, self.initial + 1)
        vals = self.f(z0 + (z1 - z0) * s)
        while True:
            if not np.all(np.isfinite(vals)):
                raise NumericalError("non-finite function value on a contour")
            # an exact zero on the contour gives nan steps, which count as unresolved
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.angle(vals[1:] / vals[:-1])
            bad = ~(np.abs(step) <= self.max_turn)
            if not bad.any():
                return float(step.sum()), float(np.min(np.abs(vals)))
            if s.size > self.max_points:
                raise BoundaryRootError(
                    "phase along the contour cannot be resolved; a root is probably on the boundary, "
                    "perturb the rectangle"
                )
            idx = np.nonzero(bad)[0]
            mids = 0.5 * (s[idx] + s[idx + 1])
            new_vals = self.f(z0 + (z1 - z0) * mids)
            s = np.insert(s, idx + 1, mids)
            vals = np.insert(vals, idx + 1, new_vals)

    def winding(self, rect: Rectangle) -> int:
        corners = [
            complex(rect.re_lo, rect.im_lo),
            complex(rect.re_hi, rect.im_lo),
            complex(rect.re_hi, rect.im_hi),
            complex(rect.re_lo, rect.im_hi),
        ]
        total = 0.0
        smallest = np.inf
        for k in range(4):
            phase, low = self.edge_phase(corners[k], corners[(k + 1) % 4])
            total += phase
            smallest = min(smallest, low)
        w = total / (2.0 * np.pi)
        if abs(w - round(w)) > 0.05 or (self.scale > 0.0 and smallest < 1e-12 * self.scale):
            raise BoundaryRootError(
                f"winding integral {w:.4f} is not close to an integer; perturb the rectangle"
            )
        return int(round(w))


def newton_polish(
    f: Callable[[complex], complex],
    z0: complex,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[complex, float]:
    """Complex Newton iteration with a central finite-difference derivative.

    The derivative step is ``1e-6 * (1 + |z|)``. Returns the root and
    ``|f(root)|``.
    """
    z = complex(z0)
    fz = complex(f(z))
    for _ in range(max_iter):
        if fz == 0.0:
            return z, 0.0
        d = 1e-6 * (1.0 + abs(z))
        deriv = (complex(f(z + d)) - complex(f(z - d))) / (2.0 * d)
        if deriv == 0.0 or not np.isfinite(deriv):
            raise ConvergenceError(f"Newton derivative vanished at {z}")
        step = fz / deriv
        z = z - step
        fz = complex(f(z))
        if abs(step) <= tol * (1.0 + abs(z)):
            return z, abs(fz)
    raise ConvergenceError(f"Newton polish did not converge from {z0}")


_SPLIT_FRACTIONS = (0.5137, 0.4711, 0.5623, 0.4377)


def complex_roots_in_rectangle(
    f: Callable,
    rect: Rectangle | Sequence[float],
    refine: int = 12,
    tol: float = 1e-10,
    vectorized: bool = True,
) -> list[ComplexRoot]:
    """Locate the zeros of an analytic function inside a rectangle.

    The argument principle counts zeros on the rectangle; rectangles
    with a non-zero count are bisected (off-centre, to keep symmetric
    roots off the cuts) up to ``refine`` levels, and each simple zero is
    polished by complex Newton. Clusters that survive the last level are
    returned once with their multiplicity.

    ``f`` must accept a complex numpy array when ``vectorized`` is true.

    Raises
    ------
    BoundaryRootError
        If a zero lies on (or too close to) the outer contour.
    """
    if not isinstance(rect, Rectangle):
        rect = Rectangle(*[float(v) for v in rect])
    if vectorized:
        fv = lambda z: np.asarray(f(np.asarray(z, dtype=complex)), dtype=complex)  # noqa: E731
    else:
        fv = lambda z: np.array([complex(f(v)) for v in np.atleast_1d(z)], dtype=complex)  # noqa: E731
    fs = lambda z: complex(fv(np.array([z]))[0])  # noqa: E731

    sampler = _ContourSampler(fv)
    probe = fv(
        np.array(
            [
                complex(rect.re_lo, rect.im_lo),
                complex(rect.re_hi, rect.im_hi),
                rect.center,
                complex(rect.re_hi, rect.im_lo),
            ]
        )
    )
    sampler.scale = float(np.median(np.abs(probe)))
    total = sampler.winding(rect)
    logger.debug("outer winding number %d on %s", total, rect)
    roots: list[ComplexRoot] = []
    min_size = 1e-7 * max(rect.width, rect.height)

    def accept(z: complex, res: float, mult: int) -> None:
        for k, r in enumerate(roots):
            if abs(r.value - z) <= 1e-7 * (1.0 + abs(z)):
                roots[k] = ComplexRoot(r.value, r.multiplicity + mult, r.residual)
                return
        roots.append(ComplexRoot(z, mult, res))

    def search(box: Rectangle, count: int, depth: int) -> None:
        if count == 0:
            return
        if count == 1:
            try:
                z, res = newton_polish(fs, box.center, tol=tol)
                if box.contains(z, slack=1e-9 * (1.0 + abs(z))):
                    accept(z, res, 1)
                    return
            except ConvergenceError:
                pass
        if depth >= refine or max(box.width, box.height) < min_size:
            z, res = newton_polish(fs, box.center, tol=tol, max_iter=500)
            accept(z, res, count)
            return
        for frac in _SPLIT_FRACTIONS:
            first, second = box.split(frac)
            try:
                w1 = sampler.winding(first)
                w2 = sampler.winding(second)
            except BoundaryRootError:
                continue
            if w1 + w2 == count:
                search(first, w1, depth + 1)
                search(second, w2, depth + 1)
                return
        raise BoundaryRootError(f"could not split {box} without placing a root on a cut")

    search(rect, total, 0)
    found = sum(r.multiplicity for r in roots)
    if found != total:
        raise ConvergenceError(f"root search found {found} zeros but the winding number is {total}")
    bound = tol * (1.0 + sampler.scale)
    for r in roots:
        if r.multiplicity == 1 and r.residual > bound:
            raise ConvergenceError(f"root {r.value} has residual {r.residual:.3e} above {bound:.3e}")
    return sorted(roots, key=lambda r: (-r.value.real, r.value.imag))


# ---------------------------------------------------------------------------
# Exponentially weighted quadrature (Filon type)
# ---------------------------------------------------------------------------

_SERIES_TERMS = 30


def exp_moments(u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Moments ``int_0^1 v^m exp(-u v) dv`` for ``m = 0, 1, 2``.

    A power series is used for ``|u| < 1`` (where the closed forms
    cancel badly) and the closed forms elsewhere.
    """
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < 1.0
    out = [np.empty_like(u) for _ in range(3)]
    if np.any(small):
        us = u[small]
        term = np.ones_like(us)
        acc = [np.zeros_like(us) for _ in range(3)]
        for k in range(_SERIES_TERMS):
            for m in range(3):
                acc[m] += term / (m + k + 1)
            term = term * (-us) / (k + 1)
        for m in range(3):
            out[m][small] = acc[m]
    big = ~small
    if np.any(big):
        ub = u[big]
        e = np.exp(-ub)
        out[0][big] = (1.0 - e) / ub
        out[1][big] = (1.0 - (1.0 + ub) * e) / ub**2
        out[2][big] = (2.0 - (2.0 + 2.0 * ub + ub * ub) * e) / ub**3
    return out[0], out[1], out[2]


def laplace_filon(q: np.ndarray, h: float, z: complex) -> complex:
    """``int_0^{N h} q(a) exp(-z a) da`` for ``q`` sampled at ``a_k = k h``.

    ``q`` is interpolated quadratically on panels of two intervals and
    the exponential is integrated exactly, so accuracy does not degrade
    when ``|z| h`` is large.
    """
    q = np.asarray(q)
    n_int = q.size - 1
    if n_int < 2:
        raise ValueError("laplace_filon needs at least three samples")
    u = complex(z) * h
    n_pairs = n_int // 2
    f0, f1, f2 = (x[()] for x in exp_moments(2.0 * u))
    m0, m1, m2 = 2.0 * f0, 4.0 * f1, 8.0 * f2
    w0 = 0.5 * (m2 - 3.0 * m1 + 2.0 * m0)
    w1 = -m2 + 2.0 * m1
    w2 = 0.5 * (m2 - m1)
    starts = 2 * np.arange(n_pairs)
    phase = np.exp(-complex(z) * h * starts)
    total = np.sum(phase * (w0 * q[starts] + w1 * q[starts + 1] + w2 * q[starts + 2]))
    if n_int % 2 == 1:
        # last interval: quadratic through the final three samples, v in [1, 2]
        g0, g1, g2 = (x[()] for x in exp_moments(u))
        n0, n1, n2 = m0 - g0, m1 - g1, m2 - g2
        k = n_int - 2
        total += np.exp(-complex(z) * h * k) * (
            0.5 * (n2 - 3.0 * n1 + 2.0 * n0) * q[k] + (-n2 + 2.0 * n1) * q[k + 1] + 0.5 * (n2 - n1) * q[k + 2]
        )
    return complex(h * total)


def exp_convolution(r: np.ndarray, h: float, lam: complex) -> np.ndarray:
    """``y_k = int_0^{a_k} r(s) exp(-lam (a_k - s)) ds`` at every node ``a_k = k h``.

    Each step integrates the local quadratic interpolant of ``r`` against
    the exact exponential, and the steps are chained by the linear
    recurrence ``y_{k+1} = exp(-lam h) y_k + increment_k``.
    """
    r = np.asarray(r, dtype=complex)
    n = r.size - 1
    if n < 2:
        raise ValueError("exp_convolution needs at least three samples")
    u = complex(lam) * h
    f0, f1, f2 = (x[()] for x in exp_moments(u))
    # reverse moments int_0^1 v^m exp(-u (1 - v)) dv
    p0 = f0
    p1 = f0 - f1
    p2 = f0 - 2.0 * f1 + f2
    a0 = 0.5 * (p2 - 3.0 * p1 + 2.0 * p0)
    a1 = -p2 + 2.0 * p1
    a2 = 0.5 * (p2 - p1)
    inc = np.empty(n, dtype=complex)
    inc[: n - 1] = a0 * r[: n - 1] + a1 * r[1:n] + a2 * r[2 : n + 1]
    inc[n - 1] = 0.5 * (p2 - p1) * r[n - 2] + (p0 - p2) * r[n - 1] + 0.5 * (p2 + p1) * r[n]
    decay = np.exp(-u)
    y = np.zeros(n + 1, dtype=complex)
    y[1:] = signal.lfilter([1.0], [1.0, -decay], h * inc)
    return y
