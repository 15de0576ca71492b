"""The Fermi-Dirac collision operator and its gain/loss decomposition.

The discrete operator at a node v is

    Q(f)(v) = sum_{v* nodes} h^3 sum_m w_m B(|v - v*|, t_m)
              [ f' f*' (1-f)(1-f*) - f f* (1-f')(1-f*') ]

with off-grid values f', f*' trilinearly interpolated and the diagonal
v* = v skipped (its integrand vanishes identically).  Internally the sum
is organized as Q = (1 - f) G - f L with

    G(v) = sum h^3 sum w B f' f*' (1 - f*),
    L(v) = sum h^3 sum w B f* (1 - f')(1 - f*'),

which the time integrator also uses for its bound-preserving step size.

For the bounded reduced kernel the module provides the gain operators
QP(psi) and QP(psi | F) acting on tensor-product pair functions, and the
loss rate N(f) of the decomposition Q0(f) = QP(f (x) f | 1-f) - f N(f).

An independent Monte Carlo estimator of the same integral at a single
velocity serves as the oracle for the deterministic quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from . import _core
from .errors import ConfigurationError
from .geometry import DensityField, SphereQuadrature, VelocityGrid
from .kernels import CollisionKernel

__all__ = [
    "interpolate_field",
    "pi_F",
    "pi_F_cancellation",
    "collision_rates",
    "eval_Q",
    "loss_rate_N",
    "eval_gain",
    "mc_estimate_Q",
    "dissipation_sum",
    "quartic_grid_sum",
    "default_quadrature",
    "ClosedForm",
]


def interpolate_field(f: DensityField, v) -> Union[float, np.ndarray]:
    """Trilinear interpolation of f at velocity points; 0 outside the box,
    clamped to [0, 1]."""
    v = np.asarray(v, dtype=float)
    scalar = v.ndim == 1
    pts = np.atleast_2d(v)
    g = f.grid
    u = (pts - (-g.v_max)) / g.h
    n = g.n
    inside = np.all((u > -1.0) & (u < n), axis=1)
    out = np.zeros(len(pts))
    if np.any(inside):
        ui = u[inside]
        base = np.floor(ui).astype(np.int64)
        w = ui - base
        fp = np.zeros((n + 2, n + 2, n + 2))
        fp[1:-1, 1:-1, 1:-1] = f.values
        acc = np.zeros(len(ui))
        for cx in (0, 1):
            wx = w[:, 0] if cx else 1.0 - w[:, 0]
            for cy in (0, 1):
                wy = w[:, 1] if cy else 1.0 - w[:, 1]
                for cz in (0, 1):
                    wz = w[:, 2] if cz else 1.0 - w[:, 2]
                    vals = fp[base[:, 0] + 1 + cx, base[:, 1] + 1 + cy, base[:, 2] + 1 + cz]
                    acc += wx * wy * wz * vals
        out[inside] = acc
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out.reshape(v.shape[:-1])


def pi_F(fv, fvs, fvp, fvsp):
    """Collision integrand f' f*' (1-f)(1-f*) - f f* (1-f')(1-f*')."""
    return fvp * fvsp * (1.0 - fv) * (1.0 - fvs) - fv * fvs * (1.0 - fvp) * (1.0 - fvsp)


def pi_F_cancellation(fv, fvs, fvp, fvsp):
    """Equal value with the quartic terms cancelled:
    f' f*' (1 - f - f*) - f f* (1 - f' - f*')."""
    return fvp * fvsp * (1.0 - fv - fvs) - fv * fvs * (1.0 - fvp - fvsp)


# ----------------------------------------------------------------------
# closed-form off-grid evaluation (identity tests against analytic profiles)


@dataclass(frozen=True)
class ClosedForm:
    """Analytic field used in place of interpolation for off-grid points."""

    code: int
    params: np.ndarray

    @staticmethod
    def gaussian(lam: float) -> "ClosedForm":
        return ClosedForm(_core.F_GAUSSIAN, np.array([lam]))

    @staticmethod
    def counterexample(lam: float) -> "ClosedForm":
        return ClosedForm(_core.F_COUNTEREXAMPLE, np.array([lam]))

    @staticmethod
    def poly(lam: float, coeffs) -> "ClosedForm":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (20,):
            raise ValueError("cubic polynomial needs 20 monomial coefficients")
        return ClosedForm(_core.F_POLY, np.concatenate([[lam], coeffs]))

    @staticmethod
    def constant(value: float) -> "ClosedForm":
        coeffs = np.zeros(20)
        coeffs[0] = value
        return ClosedForm.poly(0.0, coeffs)

    @staticmethod
    def fermi_dirac(a: float, b: float, v0) -> "ClosedForm":
        v0 = np.asarray(v0, dtype=float)
        return ClosedForm(
            _core.F_FERMI_DIRAC, np.array([b, math.log(a), v0[0], v0[1], v0[2]])
        )

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        if self.code == _core.F_FERMI_DIRAC:
            b, ln_a = self.params[0], self.params[1]
            r2 = (x - self.params[2]) ** 2 + (y - self.params[3]) ** 2 \
                + (z - self.params[4]) ** 2
            e = np.minimum(b * r2 - ln_a, 700.0)
            out = np.where(b * r2 - ln_a > 700.0, 0.0, 1.0 / (1.0 + np.exp(e)))
        else:
            lam = self.params[0]
            r2 = x * x + y * y + z * z
            env = np.exp(-lam * r2)
            if self.code == _core.F_GAUSSIAN:
                out = env
            elif self.code == _core.F_COUNTEREXAMPLE:
                rn = np.sqrt(r2)
                ratio = np.where(rn > 0, x / np.maximum(rn, 1e-300), 0.0)
                out = np.where(
                    rn > 0, env * (1.0 + math.sqrt(2.0) * np.sin(0.5 * math.pi * ratio)), 0.0
                )
            else:  # cubic polynomial factor, monomials in the _core ordering
                acc = np.zeros_like(x)
                idx = 1
                for a in range(4):
                    for b in range(4 - a):
                        for c in range(4 - a - b):
                            acc += self.params[idx] * x**a * y**b * z**c
                            idx += 1
                out = env * acc
        return out if out.size > 1 else float(out[0])


# ----------------------------------------------------------------------
# preparation shared by the passes


@lru_cache(maxsize=8)
def _half_offsets(n: int) -> np.ndarray:
    rng = np.arange(-(n - 1), n)
    d0, d1, d2 = np.meshgrid(rng, rng, rng, indexing="ij")
    d0, d1, d2 = d0.ravel(), d1.ravel(), d2.ravel()
    lex_pos = (d0 > 0) | ((d0 == 0) & (d1 > 0)) | ((d0 == 0) & (d1 == 0) & (d2 > 0))
    off = np.stack([d0[lex_pos], d1[lex_pos], d2[lex_pos]], axis=1)
    order = np.lexsort((off[:, 2], off[:, 1], off[:, 0]))
    return np.ascontiguousarray(off[order], dtype=np.int64)


def _pad(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    fp = np.zeros((n + 2, n + 2, n + 2))
    fp[1:-1, 1:-1, 1:-1] = values
    return fp


def _kernel_args(kernel: CollisionKernel, grid: VelocityGrid):
    code, gamma, cap, p1, p2, coeffs = kernel.numba_spec()
    if gamma < 0 and not math.isfinite(cap):
        cap = (grid.h / 2.0) ** gamma
    return code, gamma, cap, p1, p2, coeffs


def _check_quadrature(kernel: CollisionKernel, quad: SphereQuadrature):
    if kernel.angular_singularity > 0.0 and quad.kind != "jacobi_adapted":
        raise ConfigurationError(
            f"kernel family {kernel.family!r} has an endpoint-singular angular part "
            f"(exponent {kernel.angular_singularity}); use a jacobi_adapted rule"
        )


def default_quadrature(kernel: CollisionKernel, order: int = 16,
                       n_phi: Optional[int] = None) -> SphereQuadrature:
    """Rule matched to the kernel's angular behavior: Lebedev-like 26 for
    smooth angular parts, jacobi_adapted product rule otherwise."""
    from .geometry import sphere_quadrature

    if kernel.angular_singularity > 0.0:
        return sphere_quadrature(
            "jacobi_adapted", order, n_phi=n_phi, exponent=kernel.angular_singularity
        )
    return sphere_quadrature("lebedev_like", 26)


def _quad_arrays(quad: SphereQuadrature):
    return (
        np.ascontiguousarray(quad.nodes, dtype=np.float64),
        np.ascontiguousarray(quad.weights, dtype=np.float64),
        quad.aligned,
    )


_NO_PARAMS = np.zeros(1)


def _field_args(point_eval: Optional[ClosedForm]):
    if point_eval is None:
        return _core.F_GRID, _NO_PARAMS
    return point_eval.code, np.ascontiguousarray(point_eval.params, dtype=np.float64)


# ----------------------------------------------------------------------
# operator evaluations


def collision_rates(
    f: DensityField,
    kernel: CollisionKernel,
    quad: SphereQuadrature,
    point_eval: Optional[ClosedForm] = None,
):
    """(G, L, N) fields of the gain/loss decomposition; see module docstring."""
    _check_quadrature(kernel, quad)
    g = f.grid
    nodes, w, aligned = _quad_arrays(quad)
    code, gamma, cap, p1, p2, coeffs = _kernel_args(kernel, g)
    fcode, fparams = _field_args(point_eval)
    gg, ll, nn = _core.pass_rates(
        f.values.ravel(), _pad(f.values), g.n, g.h, -g.v_max,
        _half_offsets(g.n), nodes, w, aligned,
        code, gamma, cap, p1, p2, coeffs, fcode, fparams,
    )
    shape = (g.n, g.n, g.n)
    return gg.reshape(shape), ll.reshape(shape), nn.reshape(shape)


def eval_Q(
    f: DensityField,
    kernel: CollisionKernel,
    quad: SphereQuadrature,
    point_eval: Optional[ClosedForm] = None,
) -> np.ndarray:
    """Collision operator Q(f) on every grid node."""
    gg, ll, _ = collision_rates(f, kernel, quad, point_eval=point_eval)
    return (1.0 - f.values) * gg - f.values * ll


def loss_rate_N(
    f: DensityField,
    kernel_b0: CollisionKernel,
    grid: VelocityGrid,
    quad: SphereQuadrature,
) -> np.ndarray:
    """Loss rate N(f)(v) = sum h^3 sum w B0 (f' f*' + f* (1 - f' - f*'))."""
    if not kernel_b0.is_bounded:
        raise ConfigurationError("loss_rate_N requires a bounded kernel")
    if f.grid != grid:
        raise ValueError("field and grid disagree")
    _, _, nn = collision_rates(f, kernel_b0, quad)
    return nn


def eval_gain(
    psi,
    f_weight: Optional[Union[DensityField, np.ndarray]],
    kernel_b0: CollisionKernel,
    grid: VelocityGrid,
    quad: SphereQuadrature,
) -> np.ndarray:
    """Gain operator QP(psi)(v) or QP(psi | F)(v) for tensor pair functions.

    `psi` is either a single factor g, meaning g (x) g, or a pair
    (ga, gb) meaning ga(v') gb(v*'); each factor is a DensityField /
    (n,n,n) array (interpolated, zero outside the box) or a ClosedForm
    (evaluated exactly at the collision points).  `f_weight` multiplies
    the integrand by F(v*) when given.
    """
    if not kernel_b0.is_bounded:
        raise ConfigurationError("eval_gain requires a bounded kernel (reduce it first)")
    if isinstance(psi, tuple):
        pa, pb = psi
    else:
        pa = pb = psi

    def factor_args(p):
        if isinstance(p, ClosedForm):
            return _pad(np.zeros((grid.n,) * 3)), p.code, np.ascontiguousarray(
                p.params, dtype=np.float64
            )
        vals = p.values if isinstance(p, DensityField) else np.asarray(p, dtype=float)
        return _pad(vals), _core.F_GRID, _NO_PARAMS

    pa_pad, code_a, params_a = factor_args(pa)
    pb_pad, code_b, params_b = factor_args(pb)
    nodes, w, aligned = _quad_arrays(quad)
    code, gamma, cap, p1, p2, coeffs = _kernel_args(kernel_b0, grid)
    if f_weight is None:
        fw = np.zeros(grid.n**3)
        weighted = False
    else:
        fw_arr = f_weight.values if isinstance(f_weight, DensityField) else np.asarray(f_weight)
        fw = np.ascontiguousarray(fw_arr.ravel(), dtype=np.float64)
        weighted = True
    out = _core.pass_gain(
        fw, pa_pad, pb_pad, grid.n, grid.h, -grid.v_max,
        _half_offsets(grid.n), nodes, w, aligned,
        code, gamma, cap, p1, p2, coeffs, weighted,
        code_a, params_a, code_b, params_b,
    )
    return out.reshape((grid.n,) * 3)


def dissipation_sum(
    f: DensityField,
    kernel: CollisionKernel,
    quad: SphereQuadrature,
    floor: float = 1e-30,
    point_eval: Optional[ClosedForm] = None,
) -> tuple[float, int]:
    """(D, skipped) where D = 1/4 h^6 sum B Gamma(Pi+, Pi-) and `skipped`
    counts one-sided boundary terms excluded from the sum."""
    _check_quadrature(kernel, quad)
    g = f.grid
    nodes, w, aligned = _quad_arrays(quad)
    code, gamma, cap, p1, p2, coeffs = _kernel_args(kernel, g)
    fcode, fparams = _field_args(point_eval)
    total, skipped = _core.pass_dissipation(
        f.values.ravel(), _pad(f.values), g.n, g.h, -g.v_max,
        _half_offsets(g.n), nodes, w, aligned,
        code, gamma, cap, p1, p2, coeffs, fcode, fparams, floor,
    )
    return float(total), int(skipped)


def quartic_grid_sum(
    h_values: np.ndarray,
    grid: VelocityGrid,
    kernel: CollisionKernel,
    quad: SphereQuadrature,
    point_eval: Optional[ClosedForm] = None,
) -> float:
    """Direct quartic sum h^6 sum_pairs h h_* sum w B h' h*'; the test
    function may change sign, and `point_eval` switches the off-grid
    values from interpolation to the analytic form."""
    _check_quadrature(kernel, quad)
    nodes, w, aligned = _quad_arrays(quad)
    code, gamma, cap, p1, p2, coeffs = _kernel_args(kernel, grid)
    fcode, fparams = _field_args(point_eval)
    return float(
        _core.pass_quartic(
            np.ascontiguousarray(h_values.ravel(), dtype=np.float64),
            _pad(h_values), grid.n, grid.h, -grid.v_max,
            _half_offsets(grid.n), nodes, w, aligned,
            code, gamma, cap, p1, p2, coeffs, fcode, fparams,
        )
    )


# ----------------------------------------------------------------------
# Monte Carlo oracle

_IMP_BINS = 1024


def _importance_table(kernel: CollisionKernel):
    """Piecewise-constant density over cos(theta) proportional to the
    angular factor sampled at bin centers (finite even for singular
    parts; the first and last bins act as a cap)."""
    edges = np.linspace(-1.0, 1.0, _IMP_BINS + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    vals = np.asarray(kernel.angular(centers), dtype=float)
    vals = np.where(np.isfinite(vals), vals, 0.0)
    if vals.sum() <= 0:
        raise ValueError("angular factor vanished on the sampling table")
    mass = vals / vals.sum()
    cdf = np.cumsum(mass)
    cdf[-1] = 1.0
    bin_w = 2.0 / _IMP_BINS
    pdf = mass / bin_w  # density w.r.t. dt
    return np.ascontiguousarray(cdf), np.ascontiguousarray(pdf)


def mc_estimate_Q(
    f: DensityField,
    kernel: CollisionKernel,
    v,
    n_samples: int,
    seed: int,
    v_star_sampling: str = "nodes",
) -> tuple[float, float]:
    """Unbiased Monte Carlo estimate of the collision integral at v.

    v* is volume-weighted uniform on the grid: drawn from the nodes with
    their h^3 cells ("nodes", the estimator whose mean is exactly the
    deterministic lattice sum) or continuously over the union of cells
    ("continuum").  sigma is uniform on the sphere for smooth angular
    parts and importance-sampled in cos(theta) otherwise.  Deterministic
    for a fixed seed.  Returns (estimate, standard error).
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1e3")
    if v_star_sampling not in ("nodes", "continuum"):
        raise ValueError(f"unknown v_star_sampling {v_star_sampling!r}")
    g = f.grid
    v = np.asarray(v, dtype=float)
    code, gamma, cap, p1, p2, coeffs = _kernel_args(kernel, g)
    use_importance = kernel.separable and kernel.angular_singularity > 0.0
    if use_importance:
        cdf, pdf = _importance_table(kernel)
    else:
        cdf = np.array([1.0])
        pdf = np.array([0.25 / np.pi])
    fv = interpolate_field(f, v)
    est, err = _core.mc_estimate(
        _pad(f.values), np.ascontiguousarray(f.values.ravel()),
        g.n, g.h, -g.v_max, g.v_max,
        v[0], v[1], v[2], fv,
        code, gamma, cap, p1, p2, coeffs,
        int(n_samples), int(seed), use_importance, cdf, pdf,
        v_star_sampling == "nodes",
    )
    return float(est), float(err)
