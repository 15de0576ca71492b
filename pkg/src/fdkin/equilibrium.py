"""Macroscopic moments, equilibrium classification, and Fermi-Dirac fit.

For data with mass M0, mean velocity v0 and centered energy M2, the
ratio M2 / M0^(5/3) is bounded below by

    kappa_sat = (3/5) (3 / (4 pi))^(2/3),

attained exactly by saturated data (the indicator of a ball).  Above the
bound the matching equilibrium is the Fermi-Dirac profile

    F(v) = a e^(-b|v - v0|^2) / (1 + a e^(-b|v - v0|^2)),  a, b > 0,

and the fit reduces to one dimension: with

    g_k(a) = 4 pi int_0^inf r^(k+2) a e^(-r^2) / (1 + a e^(-r^2)) dr,

the moments are M0 = b^(-3/2) g_0(a) and M2 = b^(-5/2) g_2(a), so the
ratio g_2(a)/g_0(a)^(5/3) is independent of b, strictly decreasing in a,
and tends to kappa_sat as a -> inf.  `solve_fermi_dirac` brackets a on
[1e-12, 1e12] (bisection, then Newton in log a) and recovers b from g_0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import roots_legendre

from .errors import DegenerateInputError, NumericalError
from .geometry import DensityField, VelocityGrid

__all__ = [
    "KAPPA_SAT",
    "Macroscopics",
    "RegularEquilibrium",
    "SaturatedEquilibrium",
    "EquilibriumSpec",
    "macroscopic",
    "classify",
    "fermi_dirac_g",
    "solve_fermi_dirac",
    "eval_equilibrium",
]

KAPPA_SAT = 0.6 * (3.0 / (4.0 * math.pi)) ** (2.0 / 3.0)


@dataclass(frozen=True)
class Macroscopics:
    m0: float
    v0: np.ndarray
    m2: float

    @property
    def ratio(self) -> float:
        return self.m2 / self.m0 ** (5.0 / 3.0)


@dataclass(frozen=True)
class RegularEquilibrium:
    a: float
    b: float
    v0: np.ndarray

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Fermi-Dirac parameters a, b must be positive")
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))


@dataclass(frozen=True)
class SaturatedEquilibrium:
    radius: float
    v0: np.ndarray

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("saturated radius must be positive")
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float))


EquilibriumSpec = Union[RegularEquilibrium, SaturatedEquilibrium]


def macroscopic(f: DensityField) -> Macroscopics:
    """Mass, mean velocity and centered energy of a grid field."""
    g = f.grid
    h3 = g.cell_volume
    vals = f.values
    if np.any(vals < 0):
        raise ValueError("macroscopic moments need a nonnegative field")
    m0 = h3 * vals.sum()
    if m0 <= 0.0:
        raise DegenerateInputError("vanishing mass: moments are undefined")
    ax = g.axis
    wx = vals.sum(axis=(1, 2))
    wy = vals.sum(axis=(0, 2))
    wz = vals.sum(axis=(0, 1))
    v0 = h3 * np.array([ax @ wx, ax @ wy, ax @ wz]) / m0
    dx2 = (ax - v0[0]) ** 2
    dy2 = (ax - v0[1]) ** 2
    dz2 = (ax - v0[2]) ** 2
    m2 = h3 * float(dx2 @ wx + dy2 @ wy + dz2 @ wz)
    return Macroscopics(m0=float(m0), v0=v0, m2=float(m2))


def classify(m: Macroscopics, tol: float = 1e-6) -> str:
    """'regular' or 'saturated'; `tol` is relative to kappa_sat.

    A ratio below kappa_sat (1 - tol) cannot come from occupation values
    in [0, 1] and is reported as inconsistent moments.
    """
    ratio = m.ratio
    band = tol * KAPPA_SAT
    if ratio > KAPPA_SAT + band:
        return "regular"
    if ratio >= KAPPA_SAT - band:
        return "saturated"
    raise DegenerateInputError(
        f"moment ratio {ratio:.12g} is below the saturation bound {KAPPA_SAT:.12g}: "
        "no admissible occupation has these moments"
    )


# ----------------------------------------------------------------------
# radial Fermi-Dirac integrals

_GL48 = roots_legendre(48)


def fermi_dirac_g(a: float, k: int) -> float:
    """g_k(a) = 4 pi int_0^inf r^(k+2) a e^(-r^2) / (1 + a e^(-r^2)) dr.

    Composite Gauss-Legendre on [0, r_cut] with the cut chosen so the
    discarded tail is below 1e-16 of the peak.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    ln_a = math.log(a)
    r_cut = math.sqrt(max(ln_a, 0.0) + 45.0)
    x, w = _GL48
    n_panels = 16
    edges = np.linspace(0.0, r_cut, n_panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
        r = mid + half * x
        # a e^{-r^2} / (1 + a e^{-r^2}) = 1 / (1 + e^{r^2 - ln a})
        e = r * r - ln_a
        occ = np.where(e > 700.0, 0.0, 1.0 / (1.0 + np.exp(np.minimum(e, 700.0))))
        total += half * float(np.dot(w, r ** (k + 2) * occ))
    return 4.0 * math.pi * total


def _ratio_of_a(a: float) -> float:
    return fermi_dirac_g(a, 2) / fermi_dirac_g(a, 0) ** (5.0 / 3.0)


_LOG_A_MIN = math.log(1e-12)
_LOG_A_MAX = math.log(1e12)


def solve_fermi_dirac(m: Macroscopics, tol: float = 1e-6) -> EquilibriumSpec:
    """Equilibrium with the same mass, mean velocity and energy as `m`."""
    kind = classify(m, tol=tol)
    if kind == "saturated":
        radius = (3.0 * m.m0 / (4.0 * math.pi)) ** (1.0 / 3.0)
        return SaturatedEquilibrium(radius=radius, v0=m.v0)
    target = math.log(m.ratio)

    def fun(log_a: float) -> float:
        return math.log(_ratio_of_a(math.exp(log_a))) - target

    lo, hi = _LOG_A_MIN, _LOG_A_MAX
    f_lo, f_hi = fun(lo), fun(hi)
    # ratio decreases in a: f_lo > 0 > f_hi for reachable targets
    if f_lo < 0 or f_hi > 0:
        raise NumericalError(
            f"moment ratio {m.ratio:.6g} outside the solvable bracket a in [1e-12, 1e12]"
        )
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if fun(mid) > 0:
            lo = mid
        else:
            hi = mid
    log_a = 0.5 * (lo + hi)
    for _ in range(60):
        val = fun(log_a)
        if abs(val) < 1e-14:
            break
        step = 1e-7
        deriv = (fun(log_a + step) - fun(log_a - step)) / (2.0 * step)
        if deriv == 0.0:
            break
        new = log_a - val / deriv
        log_a = min(max(new, _LOG_A_MIN), _LOG_A_MAX)
    a = math.exp(log_a)
    b = (fermi_dirac_g(a, 0) / m.m0) ** (2.0 / 3.0)
    return RegularEquilibrium(a=a, b=b, v0=m.v0)


def eval_equilibrium(spec: EquilibriumSpec, grid: VelocityGrid) -> DensityField:
    """Sample the equilibrium profile on the grid nodes."""
    ax = grid.axis
    if isinstance(spec, RegularEquilibrium):
        dx2 = (ax - spec.v0[0]) ** 2
        dy2 = (ax - spec.v0[1]) ** 2
        dz2 = (ax - spec.v0[2]) ** 2
        r2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
        e = spec.b * r2 - math.log(spec.a)
        vals = np.where(e > 700.0, 0.0, 1.0 / (1.0 + np.exp(np.minimum(e, 700.0))))
        return DensityField(grid, vals)
    dx2 = (ax - spec.v0[0]) ** 2
    dy2 = (ax - spec.v0[1]) ** 2
    dz2 = (ax - spec.v0[2]) ** 2
    r2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
    vals = (r2 <= spec.radius**2).astype(float)
    return DensityField(grid, vals)


def moment_residuals(spec: EquilibriumSpec, m: Macroscopics) -> dict:
    """Relative defects of the fitted equilibrium's continuum moments."""
    if isinstance(spec, RegularEquilibrium):
        m0_fit = spec.b ** -1.5 * fermi_dirac_g(spec.a, 0)
        m2_fit = spec.b ** -2.5 * fermi_dirac_g(spec.a, 2)
    else:
        m0_fit = 4.0 * math.pi / 3.0 * spec.radius**3
        m2_fit = 4.0 * math.pi / 5.0 * spec.radius**5
    return {
        "mass": abs(m0_fit - m.m0) / m.m0,
        "energy": abs(m2_fit - m.m2) / max(m.m2, 1e-300),
    }
