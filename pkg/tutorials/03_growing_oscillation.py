"""Watching an unstable steady state lose its population balance.

Run with ``python3 tutorials/03_growing_oscillation.py`` (about ten seconds).

``instability_demo`` has a reproduction number that decreases with the
resource at its steady state. That alone forces a positive real root of
the characteristic equation. Here we nudge the resource and fit the
growth rate of the deviation against that root.
"""
import numpy as np

from sizestructured import DensityState, WeightPair, analyze_stability, builtin_family, picard_resource, solve_steady
from sizestructured.equilibrium import steady_density_state

m = builtin_family("instability_demo")
ss = solve_steady(m)
rep = analyze_stability(ss, m)
print(f"S* = {ss.S_star:.10f}; predicted growth rate {rep.positive_real_root:.6f}")

w = WeightPair.for_model(m)
n_star = steady_density_state(ss, m, w.kappa0)
dt, T = 1 / 64, 12.0
base = picard_resource(n_star, T, m, dt=dt)
moved = DensityState(n_star.x_grid, n_star.n_values, ss.S_star + 1e-6, n_star.kappa0)
pert = picard_resource(moved, T, m, dt=dt)
dev = pert.env.values - base.env.values
t = base.times

late = t >= 6.0
slope = np.polyfit(t[late], np.log(np.abs(dev[late])), 1)[0]
print(f"fitted growth rate of |S - S_base| on [6, {T:g}]: {slope:.6f}")
for tk in (0.0, 3.0, 6.0, 9.0, 12.0):
    i = int(round(tk / dt))
    print(f"  t = {tk:5.1f}  deviation {dev[i]:+.3e}")
