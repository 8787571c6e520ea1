"""Characteristic equation at a steady state and its roots.

Everything is tabulated along the steady characteristic ``xi(a)`` (size
of a newborn at age ``a`` under ``S*``) on a uniform age grid:

* ``d1F(i, lam) = int delta_i(xi(a)) F(a) e^{-lam a} da`` by exponential
  Filon quadrature (``delta_1 = beta``, ``delta_2 = -gamma``);
* the resource derivative ``d2F1`` combines ``D2 beta``, ``D1 beta``
  against the size-perturbation kernel and the mortality perturbation.
  All inner integrals have the form ``int_0^a r(s) e^{-lam (a-s)} ds``
  and are evaluated for every ``a`` by one exponential recurrence, so
  each evaluation costs ``O(N)``.

Roots are located with the argument principle on a rectangle that is
provably large enough: integration by parts bounds ``|d1F| <= V/|lam|``
and the ``d2F`` terms by absolute-value integrals, which gives a radius
beyond which the determinant cannot vanish.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .equilibrium import SteadyState, reproduction_slope
from .errors import BoundaryRootError, BracketError, DomainError, HypothesisError, NumericalError
from .ingredients import ModelIngredients, WeightPair, derivative_f, partial_S, partial_x
from .numerics import (
    DEFAULT_TOLERANCES,
    ComplexRoot,
    Rectangle,
    ToleranceSet,
    complex_roots_in_rectangle,
    exp_convolution,
    find_root_bracketed,
    laplace_filon,
    simpson_weights,
)

logger = logging.getLogger(__name__)

#: Default left edge of the scan, as a multiple of ``-mu_hat``.
SCAN_LEFT_FRACTION = 0.6
#: Age step of the tabulation, as a multiple of ``1/max(mu_hat, 1)``.
AGE_STEP_FRACTION = 0.005
#: Relative size of the neglected tail of the age integrals.
SPECTRAL_TAIL = 1e-10

VERDICTS = ("asymptotically_stable", "unstable", "inconclusive")


@dataclass(frozen=True)
class SteadyCharData:
    """Tables along the steady characteristic on ages ``k h``, ``k = 0..N``."""

    h: float
    ages: np.ndarray
    xi_bar: np.ndarray
    F_bar: np.ndarray
    G: np.ndarray
    D1g: np.ndarray
    D2g: np.ndarray
    D1mu: np.ndarray
    D2mu: np.ndarray
    beta: np.ndarray
    D1beta: np.ndarray
    D2beta: np.ndarray
    gamma: np.ndarray
    D1gamma: np.ndarray
    D2gamma: np.ndarray
    S_star: float
    b_star: float
    f_prime: float
    re_min: float
    mu_hat: float

    @property
    def a_max_spec(self) -> float:
        return float(self.ages[-1])

    def K(self, a: float, sigma: float) -> float:
        """``D2 g(xi(sigma), S*) exp(int_sigma^a D1 g(xi))`` by linear interpolation."""
        if sigma > a:
            return 0.0
        d2g = np.interp(sigma, self.ages, self.D2g)
        return float(d2g * math.exp(np.interp(a, self.ages, self.G) - np.interp(sigma, self.ages, self.G)))


def build_char_data(
    ss: SteadyState,
    m: ModelIngredients,
    re_min: float | None = None,
    h: float | None = None,
) -> SteadyCharData:
    """Tabulate the steady characteristic and the ingredient derivatives.

    ``re_min`` is the leftmost real part at which the determinant will be
    evaluated; the age horizon is chosen so that the kernels times
    ``e^{-re_min a}`` fall below ``SPECTRAL_TAIL``.

    Raises
    ------
    DomainError
        If ``re_min <= -mu_hat``.
    HypothesisError
        If a finite-difference derivative is not finite.
    """
    mu_hat = m.mu_hat
    if re_min is None:
        re_min = -SCAN_LEFT_FRACTION * mu_hat
    if re_min <= -mu_hat:
        raise DomainError(f"Re(lambda) = {re_min} is not to the right of the integrability line -mu_hat = {-mu_hat}")
    if h is None:
        h = AGE_STEP_FRACTION / max(mu_hat, 1.0)
    C = math.exp(m.sigma_integral) if m.sigma_integral is not None else 1.0
    decay = mu_hat + re_min
    a_max = math.log(max(C, 1.0) / SPECTRAL_TAIL) / decay
    a_max += 2.0 * math.log(1.0 + a_max) / decay
    n = int(math.ceil(a_max / h))
    n += n % 2
    S = ss.S_star
    ages = h * np.arange(n + 1)

    def rhs(_a, y):
        x = y[0]
        return [float(m.g(x, S)), float(m.mu(x, S)), float(partial_x(m.g, x, S))]

    sol = integrate.solve_ivp(rhs, (0.0, ages[-1]), [m.x_b, 0.0, 0.0], method="DOP853", t_eval=ages, rtol=1e-13, atol=1e-14)
    if not sol.success:
        raise NumericalError(f"steady characteristic integration failed: {sol.message}")
    xs, ls, lj = sol.y

    def at(fn):
        return np.asarray(fn(xs, S), dtype=float) * np.ones_like(xs)

    tables = dict(
        D1g=np.asarray(partial_x(m.g, xs, S), dtype=float) * np.ones_like(xs),
        D2g=np.asarray(partial_S(m.g, xs, S), dtype=float) * np.ones_like(xs),
        D1mu=np.asarray(partial_x(m.mu, xs, S), dtype=float) * np.ones_like(xs),
        D2mu=np.asarray(partial_S(m.mu, xs, S), dtype=float) * np.ones_like(xs),
        beta=at(m.beta),
        D1beta=np.asarray(partial_x(m.beta, xs, S), dtype=float) * np.ones_like(xs),
        D2beta=np.asarray(partial_S(m.beta, xs, S), dtype=float) * np.ones_like(xs),
        gamma=at(m.gamma),
        D1gamma=np.asarray(partial_x(m.gamma, xs, S), dtype=float) * np.ones_like(xs),
        D2gamma=np.asarray(partial_S(m.gamma, xs, S), dtype=float) * np.ones_like(xs),
    )
    for name, arr in tables.items():
        if not np.all(np.isfinite(arr)):
            raise HypothesisError(f"finite-difference table {name} is not finite along the steady characteristic")
    return SteadyCharData(
        h=h,
        ages=ages,
        xi_bar=xs,
        F_bar=np.exp(-ls),
        G=lj,
        S_star=S,
        b_star=ss.b_star,
        f_prime=float(derivative_f(m.f, S)),
        re_min=float(re_min),
        mu_hat=mu_hat,
        **tables,
    )


def _check_lambda(lam: complex, data: SteadyCharData, strict: bool = True) -> complex:
    lam = complex(lam)
    if not strict:
        # exploratory evaluations (Newton steps) may leave the tabulated strip
        if lam.real <= -data.mu_hat:
            raise DomainError("Re(lambda) <= -mu_hat: the characteristic integrals diverge")
        return lam
    if lam.real < data.re_min - 1e-12 * (1.0 + abs(data.re_min)):
        raise DomainError(f"Re(lambda) = {lam.real:.6g} is left of the tabulated range {data.re_min:.6g}")
    return lam


def d1F(i: int, lam: complex, data: SteadyCharData, strict: bool = True) -> complex:
    """Derivative of ``F_i`` in the birth-rate direction ``e_lambda``."""
    lam = _check_lambda(lam, data, strict)
    if i == 1:
        q = data.beta * data.F_bar
    elif i == 2:
        q = -data.gamma * data.F_bar
    else:
        raise ValueError("i must be 1 or 2")
    return laplace_filon(q, data.h, lam)


def _resource_terms(rate, d1rate, d2rate, lam: complex, data: SteadyCharData) -> complex:
    h = data.h
    eG = np.exp(data.G)
    J = eG * exp_convolution(data.D2g / eG, h, lam)
    M = exp_convolution(data.D1mu * J, h, lam)
    N = exp_convolution(data.D2mu, h, lam)
    integrand = data.F_bar * (d2rate + d1rate * J - rate * (M + N))
    return complex(simpson_weights(data.ages) @ integrand)


def d2F1(lam: complex, data: SteadyCharData, strict: bool = True) -> complex:
    """Derivative of ``F_1`` in the resource direction ``e_lambda``."""
    lam = _check_lambda(lam, data, strict)
    return data.b_star * _resource_terms(data.beta, data.D1beta, data.D2beta, lam, data)


def d2F2(lam: complex, data: SteadyCharData, strict: bool = True) -> complex:
    """Derivative of ``F_2`` in the resource direction ``e_lambda``."""
    lam = _check_lambda(lam, data, strict)
    return data.f_prime - data.b_star * _resource_terms(data.gamma, data.D1gamma, data.D2gamma, lam, data)


@dataclass(frozen=True)
class CharMatrixEval:
    lam: complex
    m11: complex
    m12: complex
    m21: complex
    m22: complex

    @property
    def det(self) -> complex:
        return self.m11 * self.m22 - self.m12 * self.m21


def char_det(lam: complex, data: SteadyCharData, strict: bool = True) -> CharMatrixEval:
    """The characteristic matrix entries at ``lam``."""
    lam = _check_lambda(lam, data, strict)
    return CharMatrixEval(
        lam=lam,
        m11=1.0 - d1F(1, lam, data, strict),
        m12=-d2F1(lam, data, strict),
        m21=-d1F(2, lam, data, strict),
        m22=lam - d2F2(lam, data, strict),
    )


def det_function(data: SteadyCharData):
    """Vectorised ``lam -> det m(lam)`` for root finding."""

    def one(v):
        if v.real <= -data.mu_hat:
            return complex(np.nan, np.nan)
        return char_det(v, data, strict=False).det

    def det(z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return np.array([one(v) for v in z])

    return det


@dataclass(frozen=True)
class ScanBound:
    """Constants of the no-root radius: for ``|lam| >= radius`` and
    ``Re(lam) >= re_min`` the determinant is bounded away from zero."""

    V1: float
    V2: float
    A12: float
    A22: float
    radius: float


def scan_bound(data: SteadyCharData) -> ScanBound:
    """Radius ``rho0`` with ``(1 - V1/rho)(rho - A22) > A12 V2 / rho`` for ``rho >= rho0``."""
    lam = data.re_min
    grow = np.exp(-lam * data.ages)

    def variation(q):
        return float(abs(q[0]) + np.sum(np.abs(np.diff(q)) * grow[1:]) + abs(q[-1]) * grow[-1])

    V1 = variation(data.beta * data.F_bar)
    V2 = variation(data.gamma * data.F_bar)
    h = data.h
    eG = np.exp(data.G)
    Jabs = eG * exp_convolution(np.abs(data.D2g) / eG, h, lam).real
    Mabs = exp_convolution(np.abs(data.D1mu) * Jabs, h, lam).real
    Nabs = exp_convolution(np.abs(data.D2mu), h, lam).real
    # the lambda dependence of the d2F terms sits inside the convolutions,
    # which are monotone in Re(lambda) once absolute values are taken
    w = simpson_weights(data.ages) * data.F_bar

    def absolute(rate, d1rate, d2rate):
        return abs(data.b_star) * float(w @ (np.abs(d2rate) + np.abs(d1rate) * Jabs + np.abs(rate) * (Mabs + Nabs)))

    A12 = absolute(data.beta, data.D1beta, data.D2beta)
    A22 = abs(data.f_prime) + absolute(data.gamma, data.D1gamma, data.D2gamma)

    def margin(rho):
        return (1.0 - V1 / rho) * (rho - A22) - A12 * V2 / rho

    lo = max(V1, A22, 1e-12) * (1.0 + 1e-9)
    hi = max(2.0 * lo, 1.0)
    while margin(hi) <= 0.0:
        hi *= 2.0
    if margin(lo) > 0.0:
        rho = lo
    else:
        rho = find_root_bracketed(margin, lo, hi, tol=1e-12)
    return ScanBound(V1, V2, A12, A22, 1.25 * rho + 0.1 * data.mu_hat)


@dataclass(frozen=True)
class SpectralReport:
    """Outcome of the stability analysis at one steady state.

    ``certified`` means ``rectangle`` contains every root with real part at
    least ``rectangle.re_lo``; a stable verdict is conditional on that
    rectangle.
    """

    steady: SteadyState
    roots: tuple[ComplexRoot, ...]
    rightmost_real_part: float
    verdict: str
    instability_shortcut: bool
    R_slope: float
    rectangle: Rectangle | None
    certified: bool
    positive_real_root: float | None
    margin: float
    mu0: float
    notes: tuple[str, ...] = field(default=())


def _positive_real_root(data: SteadyCharData) -> float:
    det = lambda x: char_det(x, data).det.real  # noqa: E731
    d0 = det(0.0)
    if not d0 < 0.0:
        raise BracketError(f"det m(0) = {d0:.3e} is not negative; the instability bracket does not start")
    hi = max(1.0, data.mu_hat)
    for _ in range(60):
        if det(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError("det m(lambda) stays negative along the positive reals")
    return find_root_bracketed(det, 0.0, hi, tol=1e-12)


def analyze_stability(
    ss: SteadyState,
    m: ModelIngredients,
    scan: Rectangle | None = None,
    margin: float | None = None,
    weights: WeightPair | None = None,
    tol: ToleranceSet = DEFAULT_TOLERANCES,
    data: SteadyCharData | None = None,
) -> SpectralReport:
    """Roots of the characteristic equation and the stability verdict.

    The instability shortcut fires when ``R'(S*) < -margin``; a positive
    real root is then bracketed between ``det m(0) < 0`` and large real
    ``lam``. The rectangle scan runs in every case; without an explicit
    ``scan`` it covers ``[re_min, rho0] x [-rho0, rho0]`` with ``rho0``
    from :func:`scan_bound`, which certifies it.

    Raises
    ------
    HypothesisError
        If the weights violate ``3 mu0 < mu_hat``.
    DomainError
        If the scan reaches the integrability line ``Re = -mu_hat``.
    """
    weights = WeightPair.for_model(m) if weights is None else weights
    weights.require_spectral(m)
    margin = 1e-3 * m.mu_hat if margin is None else margin
    notes = [f"weights mu0 = {weights.mu0:.6g} (3 mu0 < mu_hat required)"]
    if scan is not None and scan.re_lo <= -m.mu_hat + margin:
        raise DomainError("scan rectangle touches the integrability line Re(lambda) = -mu_hat")
    if data is None:
        data = build_char_data(ss, m, re_min=None if scan is None else scan.re_lo)
    slope = reproduction_slope(ss.S_star, m)
    shortcut = slope < -margin
    positive_root = None
    if shortcut:
        positive_root = _positive_real_root(data)
        notes.append(f"R'(S*) = {slope:.6g} < 0 forces a positive real root at {positive_root:.10g}")
    certified = scan is None
    if scan is None:
        bound = scan_bound(data)
        rho = bound.radius
        rect = Rectangle(data.re_min, rho * 1.0137, -rho * 1.0213, rho * 1.0191)
        notes.append(f"no-root radius {rho:.6g} (V1={bound.V1:.4g}, V2={bound.V2:.4g}, A12={bound.A12:.4g}, A22={bound.A22:.4g})")
    else:
        rect = scan
    det = det_function(data)
    roots: list[ComplexRoot] = []
    for attempt in range(4):
        try:
            roots = complex_roots_in_rectangle(det, rect, tol=tol.root_tol)
            break
        except BoundaryRootError:
            if attempt == 3:
                raise
            f = 1.0 + 0.0173 * (attempt + 1)
            shift = 0.0031 * (attempt + 1) * max(abs(rect.re_lo), 1e-3)
            re_lo = rect.re_lo + shift if scan is None else rect.re_lo - shift
            rect = Rectangle(max(re_lo, data.re_min), rect.re_hi * f, rect.im_lo * f, rect.im_hi * f)
            notes.append(f"contour perturbed to {rect}")
    if roots:
        rightmost = max(r.value.real for r in roots)
    elif positive_root is not None:
        rightmost = positive_root
    else:
        rightmost = -math.inf
        notes.append(f"no roots with Re(lambda) >= {rect.re_lo:.6g}")
    if positive_root is not None:
        rightmost = max(rightmost, positive_root)
    if shortcut or rightmost > margin:
        verdict = "unstable"
    elif rightmost < -margin and certified:
        verdict = "asymptotically_stable"
        notes.append(
            f"stable verdict certified on Re(lambda) >= {rect.re_lo:.6g} only; the infinite-strip condition is not checked"
        )
    else:
        verdict = "inconclusive"
    return SpectralReport(
        steady=ss,
        roots=tuple(roots),
        rightmost_real_part=float(rightmost),
        verdict=verdict,
        instability_shortcut=bool(shortcut),
        R_slope=float(slope),
        rectangle=rect,
        certified=certified,
        positive_real_root=positive_root,
        margin=margin,
        mu0=weights.mu0,
        notes=tuple(notes),
    )
