"""Steady states and their stability for the built-in model families.

Run with ``python3 tutorials/01_steady_state_and_spectrum.py``.

The constant-coefficient family is small enough to solve by hand: every
individual has size-independent rates, so the reproduction number is
R(S) = beta0 S / mu and the characteristic equation reduces to a
quadratic. We let the library find both and compare.
"""
import numpy as np

from sizestructured import analyze_stability, builtin_family, reproduction_number, solve_steady

m = builtin_family("constant_coefficient")
p = m.params
ss = solve_steady(m)
print("constant_coefficient parameters:", dict(p))
print(f"  S* = {ss.S_star:.12f}   (by hand mu/beta0 = {p['mu_hat'] / p['beta0']:.12f})")
print(f"  b* = {ss.b_star:.12f}")
print(f"  R(S*) = {reproduction_number(ss.S_star, m):.12f}")

rep = analyze_stability(ss, m)
print(f"  verdict: {rep.verdict}")
for r in rep.roots:
    print(f"    root {r.value:.10f}")
# with beta0 = 2, mu = gamma0 = D = 1 the quadratic is lam^2 + lam + 1
print("  np.roots(lam^2 + lam + 1):", np.roots([1.0, 1.0, 1.0]))

# A size-dependent example: the dynamics of the consumer are no longer
# reducible to an ODE, but the steady state and spectrum still follow
# from one-dimensional lifetime integrals.
print()
for name in ("daphnia_vonbertalanffy", "instability_demo"):
    m = builtin_family(name)
    ss = solve_steady(m)
    rep = analyze_stability(ss, m)
    lead = max(rep.roots, key=lambda r: r.value.real) if rep.roots else None
    print(f"{name}: S* = {ss.S_star:.8f}, b* = {ss.b_star:.8f}, verdict {rep.verdict}")
    if lead is not None:
        print(f"  rightmost root {lead.value:.8f}")
    if rep.instability_shortcut:
        print(f"  R'(S*) = {rep.R_slope:.4f} < 0, so a positive real root exists before any scan")
