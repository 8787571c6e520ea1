"""Model ingredients, weights, hypothesis sampling and built-in families.

A model is five rate functions

* ``g(x, S)``  individual growth rate (positive),
* ``mu(x, S)`` per-capita mortality,
* ``beta(x, S)`` per-capita fecundity,
* ``gamma(x, S)`` per-capita resource consumption,
* ``f(S)`` resource production in the absence of consumers,

plus the structural constants that the weighted state spaces rely on:
growth is constant (``g_inf``) beyond ``x_bar`` and mortality is
``mu_hat`` up to a perturbation bounded by ``sigma(x) g(x, S)`` with
``int sigma = sigma_integral``.

All rate functions must be numpy-vectorised and total on
``[x_b, inf) x [0, inf)``. Engines clamp ``S`` at zero before calling them.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, HypothesisError

RateFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]
RATE_NAMES = ("g", "mu", "beta", "gamma")


@dataclass(frozen=True)
class ModelIngredients:
    """Immutable bundle of rate functions and hypothesis metadata.

    ``lipschitz`` maps keys such as ``"beta_S"`` or ``"g_x"`` (ingredient
    and argument) and ``"f_S"`` to declared Lipschitz constants.
    """

    g: RateFunction
    mu: RateFunction
    beta: RateFunction
    gamma: RateFunction
    f: Callable[[np.ndarray], np.ndarray]
    x_b: float
    x_bar: float
    g_inf: float
    mu_hat: float
    g_min: float
    g_max: float
    beta_sup: float | None = None
    gamma_sup: float | None = None
    sigma_integral: float | None = None
    sigma: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: Mapping[str, float] = field(default_factory=dict)
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)
    description: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.x_bar > self.x_b:
            raise HypothesisError(f"x_bar={self.x_bar} must exceed x_b={self.x_b}")
        if not self.g_min > 0.0:
            raise HypothesisError("g_min must be strictly positive")
        if not self.g_min <= self.g_max:
            raise HypothesisError("g_min must not exceed g_max")
        if not (self.g_min <= self.g_inf <= self.g_max):
            raise HypothesisError(f"g_inf={self.g_inf} must lie in [g_min, g_max]=[{self.g_min}, {self.g_max}]")
        if not self.mu_hat > 0.0:
            raise HypothesisError("mu_hat must be strictly positive")
        if self.sigma_integral is not None and self.sigma_integral < 0.0:
            raise HypothesisError("sigma_integral must be non-negative")

    def fingerprint(self) -> str:
        """Short hash identifying the model (family, parameters, constants)."""
        payload = {
            "name": self.name,
            "params": {k: float(v) for k, v in sorted(self.params.items())},
            "description": dict(sorted(self.description.items())),
            "constants": [self.x_b, self.x_bar, self.g_inf, self.mu_hat, self.g_min, self.g_max],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def rate(self, name: str) -> RateFunction:
        if name not in RATE_NAMES:
            raise KeyError(name)
        return getattr(self, name)


def fd_step(value) -> np.ndarray:
    """Central finite-difference step ``1e-6 * (1 + |value|)``."""
    return 1e-6 * (1.0 + np.abs(value))


def partial_x(fn: RateFunction, x, S):
    """Central difference of ``fn`` in the size argument."""
    x = np.asarray(x, dtype=float)
    d = fd_step(x)
    return (fn(x + d, S) - fn(x - d, S)) / (2.0 * d)


def partial_S(fn: RateFunction, x, S):
    """Central difference in the concentration, one-sided near ``S = 0``."""
    S = np.asarray(S, dtype=float)
    d = fd_step(S)
    lo = np.maximum(S - d, 0.0)
    hi = S + d
    return (fn(x, hi) - fn(x, lo)) / (hi - lo)


def derivative_f(f: Callable, S):
    S = np.asarray(S, dtype=float)
    d = fd_step(S)
    lo = np.maximum(S - d, 0.0)
    hi = S + d
    return (f(hi) - f(lo)) / (hi - lo)


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightPair:
    """History weight ``mu0`` and the matching density weight ``kappa0``.

    ``kappa0 = (mu_hat - mu0) / g_inf`` is always derived, never free.
    """

    mu0: float
    kappa0: float

    @classmethod
    def for_model(cls, m: ModelIngredients, mu0: float | str = "auto") -> "WeightPair":
        if isinstance(mu0, str):
            if mu0 != "auto":
                raise ConfigError(f"weights must be a number or 'auto', got {mu0!r}")
            mu0 = 0.25 * m.mu_hat
        mu0 = float(mu0)
        if not (0.0 < mu0 <= m.mu_hat):
            raise HypothesisError(f"mu0={mu0} must lie in (0, mu_hat={m.mu_hat}]")
        return cls(mu0, (m.mu_hat - mu0) / m.g_inf)

    def require_spectral(self, m: ModelIngredients) -> None:
        """Spectral work needs ``3 mu0 < mu_hat``; ``mu0 = mu_hat`` is refused."""
        if not 3.0 * self.mu0 < m.mu_hat:
            raise HypothesisError(
                f"spectral analysis requires 3*mu0 < mu_hat (mu0={self.mu0}, mu_hat={m.mu_hat})"
            )


# ---------------------------------------------------------------------------
# Survival bounds
# ---------------------------------------------------------------------------


def survival_bounds(m: ModelIngredients) -> tuple[float, float]:
    """Constants ``(c, C)`` with ``c e^{-mu_hat (t-s)} <= F <= C e^{-mu_hat (t-s)}``."""
    if m.sigma_integral is None:
        raise HypothesisError(
            "survival bounds need sigma_integral (the integral of the mortality perturbation bound); "
            "declare it in the model: delay-side norms depend on it"
        )
    return math.exp(-m.sigma_integral), math.exp(m.sigma_integral)


# ---------------------------------------------------------------------------
# Hypothesis sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisResult:
    name: str
    passed: bool
    detail: str
    witness: tuple[float, float] | None = None
    value: float | None = None


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of sampling the hypotheses on a box.

    A pass means no sample violated the hypothesis; it is evidence, not
    proof.
    """

    results: tuple[HypothesisResult, ...]
    lipschitz_estimates: Mapping[str, float]
    box: tuple[float, float, float, float]
    samples: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> HypothesisResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def failures(self) -> list[HypothesisResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> str:
        lines = [f"hypothesis sampling on x in [{self.box[0]}, {self.box[1]}], S in [{self.box[2]}, {self.box[3]}]"]
        for r in self.results:
            mark = "PASS" if r.passed else "FAIL"
            where = f" at (x={r.witness[0]:.6g}, S={r.witness[1]:.6g})" if r.witness else ""
            lines.append(f"  {mark} {r.name}: {r.detail}{where}")
        lines.append("  (sample-level evidence only)")
        return "\n".join(lines)


def _lipschitz_lattice(values: np.ndarray, xs: np.ndarray, Ss: np.ndarray) -> tuple[float, float, tuple, tuple]:
    dx = np.diff(xs)
    dS = np.diff(Ss)
    lx = np.abs(np.diff(values, axis=0)) / dx[:, None]
    lS = np.abs(np.diff(values, axis=1)) / dS[None, :] if Ss.size > 1 else np.zeros((xs.size, 0))
    ix = np.unravel_index(np.argmax(lx), lx.shape)
    best_x = (float(lx[ix]), (float(xs[ix[0]]), float(Ss[ix[1]])))
    if lS.size:
        iS = np.unravel_index(np.argmax(lS), lS.shape)
        best_S = (float(lS[iS]), (float(xs[iS[0]]), float(Ss[iS[1]])))
    else:
        best_S = (0.0, (float(xs[0]), float(Ss[0])))
    return best_x[0], best_S[0], best_x[1], best_S[1]


def _jump_probe(fn: RateFunction, lo: tuple[float, float], hi: tuple[float, float], halvings: int = 40) -> tuple[float, float, tuple]:
    """Bisect the segment ``lo -> hi`` towards the larger increment.

    Returns the starting and final difference quotients and the final
    midpoint. Across a jump the quotient grows like ``2^halvings``; for a
    Lipschitz function it stays below the Lipschitz constant.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)

    def quotient(p, q):
        return abs(float(fn(q[0], q[1])) - float(fn(p[0], p[1]))) / float(np.max(np.abs(q - p)))

    first = quotient(a, b)
    for _ in range(halvings):
        mid = 0.5 * (a + b)
        if quotient(a, mid) >= quotient(mid, b):
            b = mid
        else:
            a = mid
    mid = 0.5 * (a + b)
    return first, quotient(a, b), (float(mid[0]), float(mid[1]))


def check_hypotheses(
    m: ModelIngredients,
    box: tuple[float, float, float, float],
    samples: int = 41,
) -> HypothesisReport:
    """Sample ``m`` on ``box = (x_lo, x_hi, S_lo, S_hi)`` and test the hypotheses.

    Checked: finiteness, growth bounds and positivity, non-negativity of
    mu/beta/gamma, declared upper bounds, constancy of g beyond x_bar,
    the mortality perturbation bound (when ``sigma`` is supplied),
    declared Lipschitz constants, and continuity (a Lipschitz estimate
    that keeps doubling under lattice refinement signals a jump).
    """
    if samples < 2:
        raise ValueError("need at least 2 samples per axis")
    x_lo, x_hi, S_lo, S_hi = (float(v) for v in box)
    if not (x_hi > x_lo and S_hi >= S_lo and S_lo >= 0.0 and x_lo >= m.x_b):
        raise ConfigError("box must satisfy x_b <= x_lo < x_hi and 0 <= S_lo <= S_hi")
    xs = np.linspace(x_lo, x_hi, samples)
    Ss = np.linspace(S_lo, S_hi, samples) if S_hi > S_lo else np.array([S_lo])
    X, SS = np.meshgrid(xs, Ss, indexing="ij")
    results: list[HypothesisResult] = []
    estimates: dict[str, float] = {}

    vals: dict[str, np.ndarray] = {}
    for name in RATE_NAMES:
        v = np.asarray(m.rate(name)(X, SS), dtype=float) * np.ones_like(X)
        vals[name] = v
        bad = ~np.isfinite(v)
        if bad.any():
            i = np.argwhere(bad)[0]
            results.append(
                HypothesisResult(f"finite_{name}", False, "non-finite value (hard failure)", (X[tuple(i)], SS[tuple(i)]))
            )
        else:
            results.append(HypothesisResult(f"finite_{name}", True, "all samples finite"))
    fvals = np.asarray(m.f(Ss), dtype=float) * np.ones_like(Ss)
    results.append(
        HypothesisResult("finite_f", bool(np.all(np.isfinite(fvals))), "resource production finite on samples")
    )
    if not all(r.passed for r in results):
        return HypothesisReport(tuple(results), estimates, (x_lo, x_hi, S_lo, S_hi), samples)

    def witness(arr, pick):
        i = np.unravel_index(pick(arr), arr.shape)
        return (float(X[i]), float(SS[i])), float(arr[i])

    g = vals["g"]
    w, v = witness(g, np.argmin)
    results.append(
        HypothesisResult("H3_g", bool(v >= m.g_min and v > 0.0), f"min g = {v:.6g} (declared g_min {m.g_min:.6g})",
                         None if v >= m.g_min else w, v)
    )
    w, v = witness(g, np.argmax)
    ok = v <= m.g_max * (1 + 1e-12)
    results.append(
        HypothesisResult("H2_g", bool(ok), f"max g = {v:.6g} (declared g_max {m.g_max:.6g})", None if ok else w, v)
    )
    for name in ("mu", "beta", "gamma"):
        w, v = witness(vals[name], np.argmin)
        ok = v >= 0.0
        results.append(
            HypothesisResult(f"nonnegative_{name}", bool(ok), f"min {name} = {v:.6g}", None if ok else w, v)
        )
    for name, sup in (("beta", m.beta_sup), ("gamma", m.gamma_sup)):
        w, v = witness(vals[name], np.argmax)
        if sup is None:
            results.append(HypothesisResult(f"H2_{name}", True, f"max {name} = {v:.6g} (no bound declared)", None, v))
        else:
            ok = v <= sup * (1 + 1e-12)
            results.append(
                HypothesisResult(f"H2_{name}", bool(ok), f"max {name} = {v:.6g} (declared {sup:.6g})", None if ok else w, v)
            )

    beyond = X >= m.x_bar
    if beyond.any():
        dev = np.where(beyond, np.abs(g - m.g_inf), 0.0)
        w, v = witness(dev, np.argmax)
        ok = v <= 1e-12 * max(1.0, m.g_inf)
        results.append(
            HypothesisResult("H_ginf", bool(ok), f"max |g - g_inf| beyond x_bar = {v:.3e}", None if ok else w, v)
        )
    else:
        results.append(HypothesisResult("H_ginf", True, "box lies below x_bar; constancy not sampled"))

    if m.sigma is not None:
        sig = np.asarray(m.sigma(X), dtype=float) * np.ones_like(X)
        excess = np.abs(vals["mu"] - m.mu_hat) - sig * g
        w, v = witness(excess, np.argmax)
        ok = v <= 1e-12
        results.append(
            HypothesisResult("H_s", bool(ok), f"max |mu - mu_hat| - sigma*g = {v:.3e}", None if ok else w, v)
        )
    elif m.sigma_integral is None:
        results.append(HypothesisResult("H_s", True, "no mortality perturbation bound declared (delay-side norms unavailable)"))
    else:
        results.append(HypothesisResult("H_s", True, "sigma_integral declared; sigma not supplied so not spot-checked"))

    # Lipschitz estimates and continuity
    fine_xs = np.linspace(x_lo, x_hi, 2 * samples - 1)
    fine_Ss = np.linspace(S_lo, S_hi, 2 * samples - 1) if S_hi > S_lo else Ss
    FX, FS = np.meshgrid(fine_xs, fine_Ss, indexing="ij")
    for name in RATE_NAMES:
        lx, lS, wx, wS = _lipschitz_lattice(vals[name], xs, Ss)
        fine = np.asarray(m.rate(name)(FX, FS), dtype=float) * np.ones_like(FX)
        flx, flS, fwx, fwS = _lipschitz_lattice(fine, fine_xs, fine_Ss)
        estimates[f"{name}_x"] = max(lx, flx)
        estimates[f"{name}_S"] = max(lS, flS)
        for arg, coarse, refined, wit in (("x", lx, flx, fwx), ("S", lS, flS, fwS)):
            key = f"{name}_{arg}"
            jump, growth = False, 1.0
            if arg == "x" or fine_Ss.size > 1:
                step = (fine_xs[1] - fine_xs[0], 0.0) if arg == "x" else (0.0, fine_Ss[1] - fine_Ss[0])
                # the witness is the left end of the steepest fine cell
                end = (min(wit[0] + step[0], x_hi), min(wit[1] + step[1], S_hi))
                first, last, probe_at = _jump_probe(m.rate(name), wit, end)
                growth = last / max(first, 1e-300)
                jump = last > 1e6 * max(first, 1.0)
                if jump:
                    wit = probe_at
            results.append(
                HypothesisResult(
                    f"H4_continuity_{key}",
                    not jump,
                    "difference quotients stay bounded under local bisection" if not jump else
                    f"difference quotient grows {growth:.3g}x under local bisection (jump suspected)",
                    None if not jump else wit,
                    refined,
                )
            )
            declared = m.lipschitz.get(key)
            est = max(coarse, refined)
            if declared is None:
                results.append(HypothesisResult(f"H1_{key}", True, f"estimated Lipschitz {est:.6g} (none declared)", None, est))
            else:
                ok = est <= declared * (1 + 1e-6) + 1e-9
                results.append(
                    HypothesisResult(
                        f"H1_{key}", bool(ok), f"estimated Lipschitz {est:.6g} (declared {declared:.6g})",
                        None if ok else wit, est,
                    )
                )
    if Ss.size > 1:
        lf = float(np.max(np.abs(np.diff(fvals)) / np.diff(Ss)))
        estimates["f_S"] = lf
        declared = m.lipschitz.get("f_S")
        ok = declared is None or lf <= declared * (1 + 1e-6) + 1e-9
        results.append(HypothesisResult("H1_f_S", bool(ok), f"estimated Lipschitz {lf:.6g}", None, lf))
    return HypothesisReport(tuple(results), estimates, (x_lo, x_hi, S_lo, S_hi), samples)


# ---------------------------------------------------------------------------
# Built-in families
# ---------------------------------------------------------------------------


def _require(params: Mapping[str, float], defaults: Mapping[str, float], family: str) -> dict[str, float]:
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown parameters for {family}: {sorted(unknown)}")
    out = dict(defaults)
    for k, v in params.items():
        try:
            out[k] = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {k} of {family} must be a number, got {v!r}") from None
    missing = [k for k, v in out.items() if v is None]
    if missing:
        raise ConfigError(f"incomplete parameters for {family}: missing {missing}")
    return out


CONSTANT_COEFFICIENT_DEFAULTS = {
    "beta0": 2.0,
    "mu_hat": 1.0,
    "gamma0": 1.0,
    "g0": 1.0,
    "x_b": 1.0,
    "dilution": 1.0,
    "S_max": 1.0,
    "S_cap": 2.0,
}


def constant_coefficient(params: Mapping[str, float] | None = None) -> ModelIngredients:
    """Size-independent rates: ``g = g0``, ``mu = mu_hat``, ``beta = beta0 S``,
    ``gamma = gamma0`` and chemostat supply ``f = dilution (S_max - S)``.

    ``S_cap`` is the concentration up to which ``beta_sup = beta0 S_cap``
    holds; trajectories started below ``max(S_max, S_cap)`` stay there.
    """
    p = _require(params or {}, CONSTANT_COEFFICIENT_DEFAULTS, "constant_coefficient")
    beta0, mu_hat, gamma0, g0, dil, s_max = p["beta0"], p["mu_hat"], p["gamma0"], p["g0"], p["dilution"], p["S_max"]
    if g0 <= 0 or mu_hat <= 0:
        raise ConfigError("constant_coefficient needs g0 > 0 and mu_hat > 0")
    return ModelIngredients(
        g=lambda x, S: g0 + 0.0 * (np.asarray(x) + np.asarray(S)),
        mu=lambda x, S: mu_hat + 0.0 * (np.asarray(x) + np.asarray(S)),
        beta=lambda x, S: beta0 * np.asarray(S) + 0.0 * np.asarray(x),
        gamma=lambda x, S: gamma0 + 0.0 * (np.asarray(x) + np.asarray(S)),
        f=lambda S: dil * (s_max - np.asarray(S)),
        x_b=p["x_b"],
        x_bar=p["x_b"] + 1.0,
        g_inf=g0,
        mu_hat=mu_hat,
        g_min=g0,
        g_max=g0,
        beta_sup=beta0 * p["S_cap"],
        gamma_sup=gamma0,
        sigma_integral=0.0,
        sigma=lambda x: 0.0 * np.asarray(x),
        lipschitz={"g_x": 0.0, "g_S": 0.0, "mu_x": 0.0, "mu_S": 0.0, "beta_x": 0.0, "beta_S": abs(beta0),
                   "gamma_x": 0.0, "gamma_S": 0.0, "f_S": abs(dil)},
        name="constant_coefficient",
        params=p,
    )


DAPHNIA_DEFAULTS = {
    "x_b": 1.0,
    "x_m": 4.0,
    "g_inf": 0.4,
    "gamma_r": 0.6,
    "soft": 0.25,
    "S_h": 1.0,
    "mu_hat": 0.5,
    "rho": 0.2,
    "beta_m": 2.0,
    "x_a": 2.5,
    "gamma_m": 1.0,
    "r": 1.0,
    "K": 3.0,
}


def _smootherstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def daphnia_vonbertalanffy(params: Mapping[str, float] | None = None) -> ModelIngredients:
    """Food-dependent von Bertalanffy growth with a constant-growth tail.

    ``u = x_m S/(S_h+S) - x`` is the von Bertalanffy drive;
    ``g = g_inf + gamma_r u+^3/(u+^2 + soft^2)`` grows like ``gamma_r u``
    for large drive and equals ``g_inf`` once ``x >= x_m S/(S_h+S)``, so
    ``x_bar = x_m``. The cubic soft start keeps ``g`` twice
    continuously differentiable. Fecundity switches on smoothly between
    ``x_b`` and the maturation size ``x_a``; small individuals suffer a
    starvation mortality ``rho e^{-(x-x_b)} S_h/(S_h+S)``; consumption
    saturates in size; the resource is a chemostat ``r (K - S)``.
    """
    p = _require(params or {}, DAPHNIA_DEFAULTS, "daphnia_vonbertalanffy")
    x_b, x_m, g_inf, gamma_r, soft, S_h = p["x_b"], p["x_m"], p["g_inf"], p["gamma_r"], p["soft"], p["S_h"]
    mu_hat, rho, beta_m, x_a, gamma_m, r, K = p["mu_hat"], p["rho"], p["beta_m"], p["x_a"], p["gamma_m"], p["r"], p["K"]
    if not (x_m > x_a > x_b and g_inf > 0 and gamma_r >= 0 and soft > 0 and S_h > 0 and mu_hat > 0 and rho >= 0):
        raise ConfigError("daphnia_vonbertalanffy needs x_m > x_a > x_b and positive rates")

    def g(x, S):
        S = np.asarray(S, dtype=float)
        u = np.maximum(x_m * S / (S_h + S) - np.asarray(x, dtype=float), 0.0)
        return g_inf + gamma_r * u**3 / (u * u + soft * soft)

    def mu(x, S):
        S = np.asarray(S, dtype=float)
        return mu_hat + rho * np.exp(-(np.asarray(x, dtype=float) - x_b)) * S_h / (S_h + S)

    def beta(x, S):
        S = np.asarray(S, dtype=float)
        return beta_m * S / (S_h + S) * _smootherstep((np.asarray(x, dtype=float) - x_b) / (x_a - x_b))

    def gamma(x, S):
        S = np.asarray(S, dtype=float)
        x = np.asarray(x, dtype=float)
        return gamma_m * S / (S_h + S) * x * x / (x * x + x_m * x_m)

    return ModelIngredients(
        g=g,
        mu=mu,
        beta=beta,
        gamma=gamma,
        f=lambda S: r * (K - np.asarray(S, dtype=float)),
        x_b=x_b,
        x_bar=x_m,
        g_inf=g_inf,
        mu_hat=mu_hat,
        g_min=g_inf,
        g_max=g_inf + gamma_r * (x_m - x_b),
        beta_sup=beta_m,
        gamma_sup=gamma_m,
        sigma_integral=rho / g_inf,
        sigma=lambda x: (rho / g_inf) * np.exp(-(np.asarray(x, dtype=float) - x_b)),
        lipschitz={
            "g_x": 1.125 * gamma_r,
            "g_S": 1.125 * gamma_r * x_m / S_h,
            "mu_x": rho,
            "mu_S": rho / S_h,
            "beta_x": beta_m * 1.875 / (x_a - x_b),
            "beta_S": beta_m / S_h,
            "gamma_x": gamma_m * 0.6496 / x_m,
            "gamma_S": gamma_m / S_h,
            "f_S": r,
        },
        name="daphnia_vonbertalanffy",
        params=p,
    )


INSTABILITY_DEFAULTS = {
    "beta0": 2.0,
    "mu_hat": 1.0,
    "gamma0": 1.0,
    "g0": 1.0,
    "x_b": 1.0,
    "x_h": 1.0,
    "dilution": 1.0,
    "S_max": 1.5,
}


def instability_demo(params: Mapping[str, float] | None = None) -> ModelIngredients:
    """Fecundity that *decreases* with food: ``beta = beta0 max(0, 2-S) (x-x_b)/(x-x_b+x_h)``.

    Growth, mortality and consumption are constant, so the reproduction
    number is decreasing in ``S`` and every positive steady state is
    unstable. With ``S_max < 2`` the kink of ``max`` is never reached.
    """
    p = _require(params or {}, INSTABILITY_DEFAULTS, "instability_demo")
    beta0, mu_hat, gamma0, g0, x_b, x_h, dil, s_max = (
        p["beta0"], p["mu_hat"], p["gamma0"], p["g0"], p["x_b"], p["x_h"], p["dilution"], p["S_max"]
    )
    if g0 <= 0 or mu_hat <= 0 or x_h <= 0:
        raise ConfigError("instability_demo needs g0, mu_hat and x_h positive")

    def beta(x, S):
        y = np.asarray(x, dtype=float) - x_b
        return beta0 * np.maximum(0.0, 2.0 - np.asarray(S, dtype=float)) * y / (y + x_h)

    return ModelIngredients(
        g=lambda x, S: g0 + 0.0 * (np.asarray(x) + np.asarray(S)),
        mu=lambda x, S: mu_hat + 0.0 * (np.asarray(x) + np.asarray(S)),
        beta=beta,
        gamma=lambda x, S: gamma0 + 0.0 * (np.asarray(x) + np.asarray(S)),
        f=lambda S: dil * (s_max - np.asarray(S, dtype=float)),
        x_b=x_b,
        x_bar=x_b + 1.0,
        g_inf=g0,
        mu_hat=mu_hat,
        g_min=g0,
        g_max=g0,
        beta_sup=2.0 * abs(beta0),
        gamma_sup=gamma0,
        sigma_integral=0.0,
        sigma=lambda x: 0.0 * np.asarray(x),
        lipschitz={"g_x": 0.0, "g_S": 0.0, "mu_x": 0.0, "mu_S": 0.0, "beta_x": 2.0 * abs(beta0) / x_h,
                   "beta_S": abs(beta0), "gamma_x": 0.0, "gamma_S": 0.0, "f_S": abs(dil)},
        name="instability_demo",
        params=p,
    )


BUILTIN_FAMILIES: dict[str, Callable[[Mapping[str, float] | None], ModelIngredients]] = {
    "constant_coefficient": constant_coefficient,
    "daphnia_vonbertalanffy": daphnia_vonbertalanffy,
    "instability_demo": instability_demo,
}

#: Boxes on which each family is documented to pass :func:`check_hypotheses`.
DOCUMENTED_BOXES: dict[str, tuple[float, float, float, float]] = {
    "constant_coefficient": (1.0, 10.0, 0.0, 2.0),
    "daphnia_vonbertalanffy": (1.0, 12.0, 0.0, 3.0),
    "instability_demo": (1.0, 10.0, 0.0, 1.5),
}


def builtin_family(name: str, params: Mapping[str, float] | None = None) -> ModelIngredients:
    """Instantiate a built-in family by name."""
    try:
        factory = BUILTIN_FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown model family {name!r}; choose one of {sorted(BUILTIN_FAMILIES)}") from None
    return factory(params)


def expression_model(
    expressions: Mapping[str, str],
    constants: Mapping[str, float],
    named_constants: Mapping[str, float] | None = None,
    lipschitz: Mapping[str, float] | None = None,
) -> ModelIngredients:
    """Build a model from closed-form expressions (see :mod:`.expressions`).

    ``expressions`` needs keys ``g, mu, beta, gamma, f``; ``constants``
    holds the structural constants (``x_b, x_bar, g_inf, mu_hat, g_min,
    g_max`` and optionally ``beta_sup, gamma_sup, sigma_integral``).
    ``named_constants`` are visible inside the expressions.
    """
    from .expressions import compile_expression

    missing = [k for k in ("g", "mu", "beta", "gamma", "f") if k not in expressions]
    if missing:
        raise ConfigError(f"expression model is missing {missing}")
    needed = ("x_b", "x_bar", "g_inf", "mu_hat", "g_min", "g_max")
    absent = [k for k in needed if k not in constants]
    if absent:
        raise ConfigError(f"expression model is missing constants {absent}")
    names = dict(named_constants or {})
    fns = {k: compile_expression(expressions[k], names) for k in ("g", "mu", "beta", "gamma", "f")}
    f_xs = fns["f"]
    sigma = compile_expression(expressions["sigma"], names) if "sigma" in expressions else None
    opt = {k: (float(constants[k]) if k in constants else None) for k in ("beta_sup", "gamma_sup", "sigma_integral")}
    return ModelIngredients(
        g=fns["g"],
        mu=fns["mu"],
        beta=fns["beta"],
        gamma=fns["gamma"],
        f=lambda S: f_xs(0.0, S),
        x_b=float(constants["x_b"]),
        x_bar=float(constants["x_bar"]),
        g_inf=float(constants["g_inf"]),
        mu_hat=float(constants["mu_hat"]),
        g_min=float(constants["g_min"]),
        g_max=float(constants["g_max"]),
        sigma=(lambda x: sigma(x, 0.0)) if sigma is not None else None,
        lipschitz={k: float(v) for k, v in (lipschitz or {}).items()},
        name="expressions",
        params={k: float(v) for k, v in names.items()},
        description={k: str(v) for k, v in expressions.items()},
        **opt,
    )
