"""Shared constructors for test histories and densities."""
import dataclasses

import numpy as np

from sizestructured.delay_engine import constant_history, rhs_F, with_psi
from sizestructured.numerics import Grid1D
from sizestructured.pde_engine import DensityState


def consistent_history(h, m):
    """Add ``c e^{-a}`` to phi so that ``phi(0) = F1(h)``.

    ``F1`` is linear in ``phi``, so ``c`` is explicit. A history whose
    newest birth rate disagrees with the birth rate it produces gives a
    density with a jump at the newborn front.
    """
    q = np.exp(-h.ages)
    F1_p = rhs_F(h, m)[0]
    F1_q = rhs_F(dataclasses.replace(h, phi_values=q, phi_tail_norm=0.0), m)[0]
    c = (F1_p - h.phi_values[0]) / (1.0 - F1_q)
    return dataclasses.replace(h, phi_values=h.phi_values + c * q)


def wiggled_history(m, ss, mu0, da, window=2.0, psi_amp=0.3, phi_amp=0.2, a_max=None):
    """Steady history with a smooth resource excursion on ages ``[0, window]``
    and a decaying birth-rate perturbation, made consistent at age zero."""
    h = constant_history(ss.b_star, ss.S_star, mu0, da, a_max=a_max, m=m)
    a = h.ages
    psi = np.where(a <= window, ss.S_star * (1.0 + psi_amp * np.sin(np.pi * a / window) ** 2), ss.S_star)
    phi = h.phi_values * (1.0 + phi_amp * np.exp(-a) * np.cos(a))
    return consistent_history(dataclasses.replace(with_psi(h, psi), phi_values=phi), m)


def random_density(m, kappa0, rng, n_nodes=400):
    """A few Gaussian bumps on ``[x_b, x_max]`` that vanish at ``x_max``."""
    x_max = m.x_b + rng.uniform(3.0, 10.0)
    x = np.linspace(m.x_b, x_max, n_nodes)
    n = np.zeros_like(x)
    for _ in range(int(rng.integers(1, 4))):
        c = rng.uniform(m.x_b, x_max)
        s = rng.uniform(0.3, 2.0)
        n += rng.uniform(0.1, 3.0) * np.exp(-(((x - c) / s) ** 2))
    n *= 1.0 - np.exp(-5.0 * (x_max - x))
    return DensityState(Grid1D(x), n, float(rng.uniform(0.1, 1.5)), kappa0)
