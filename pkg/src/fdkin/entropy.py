"""Fermi-Dirac entropy, entropy dissipation, and weighted moments.

S(f) = int [-(1 - f) log(1 - f) - f log f] dv is finite for 0 <= f <= 1
(the integrand extends by 0 at f = 0 and f = 1) and never decreases
along solutions; its production rate is

    D(f) = 1/4 int B Gamma(Pi+, Pi-),   Gamma(a, b) = (a - b) log(a / b),

a sum of nonnegative terms vanishing exactly at equilibrium.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .collision import ClosedForm, dissipation_sum
from .geometry import DensityField, SphereQuadrature
from .kernels import CollisionKernel

__all__ = ["gamma", "entropy_S", "dissipation_D", "weighted_moment"]


def gamma(a, b):
    """Gamma(a, b) = (a - b) log(a / b) on [0, inf)^2, with Gamma(0, 0) = 0
    and +inf when exactly one argument vanishes."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr < 0) or np.any(b_arr < 0):
        raise ValueError("gamma requires nonnegative arguments")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a_arr - b_arr) * (np.log(a_arr) - np.log(b_arr))
    both_zero = (a_arr == 0) & (b_arr == 0)
    one_zero = (a_arr == 0) ^ (b_arr == 0)
    out = np.where(both_zero, 0.0, out)
    out = np.where(one_zero, np.inf, out)
    if np.isscalar(a) and np.isscalar(b):
        return float(out)
    return out


def entropy_S(f: DensityField) -> float:
    """Grid entropy h^3 sum [-(1-f) log(1-f) - f log f]; nonnegative."""
    vals = f.values
    with np.errstate(divide="ignore", invalid="ignore"):
        term = -(1.0 - vals) * np.log(1.0 - vals) - vals * np.log(vals)
    term = np.where((vals <= 0.0) | (vals >= 1.0), 0.0, term)
    return float(f.grid.cell_volume * term.sum())


def dissipation_D(
    f: DensityField,
    kernel: CollisionKernel,
    quad: SphereQuadrature,
    floor: float = 1e-30,
    point_eval: Optional[ClosedForm] = None,
    with_count: bool = False,
):
    """Entropy dissipation of the grid field.

    Terms whose Pi+ or Pi- falls below `floor` while the other side does
    not are analytically infinite; they are excluded from the sum and
    counted (boundary contact with f in {0, 1}).  `with_count` returns
    (value, skipped_terms).
    """
    value, skipped = dissipation_sum(f, kernel, quad, floor=floor, point_eval=point_eval)
    if with_count:
        return value, skipped
    return value


def weighted_moment(f: DensityField, s: float) -> float:
    """||f||_{L^1_s} on the grid: h^3 sum |f| (1 + |v|^2)^(s/2)."""
    g = f.grid
    ax2 = g.axis**2
    w2 = 1.0 + ax2[:, None, None] + ax2[None, :, None] + ax2[None, None, :]
    return float(g.cell_volume * (np.abs(f.values) * w2 ** (0.5 * s)).sum())


def entropy_upper_bound_constant() -> float:
    """int e^{-|v|^2/2} dv = (2 pi)^{3/2}, the constant in S <= ||f||_2 + C0."""
    return (2.0 * math.pi) ** 1.5
