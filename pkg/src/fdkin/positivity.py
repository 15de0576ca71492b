"""Quartic collision integrals and complete-positivity certificates.

The quartic integral int B h h_* h' h_*' over all collision
configurations is nonnegative whenever the kernel's angular part is a
power series in cos^2(theta) with nonnegative coefficients.  The working
form is the sphere reduction: with ht_{u,r}(s) = h((u + r s)/2) h((u - r s)/2),

    int B h h_* h' h_*' = 1/8 int_0^inf r^2 dr int du
                          int int B(r, <w, s>) ht(w) ht(s) dw ds,

and for a monomial angular part t^(2n) the inner double-sphere form
equals the sum of squared moment-tensor entries
sum (int s_{i1}...s_{i2n} h(s) ds)^2 -- manifestly nonnegative, and an
exact identity for any quadrature (it is the Gram expansion of the
discrete bilinear form).

Without complete positivity the sign can fail: for b = c - cos^2(theta)
(c > 1) and h(v) = e^(-lam |v|^2)(1 + sqrt(2) sin(pi/2 <v/|v|, e1>)),
the double-sphere form at u = 0 equals -96/pi^2, and for suitable
(lam, beta) in the radial profile r^beta (r < 1), r^gamma (r >= 1) the
full integral is negative.  `scan_counterexample` locates such a cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_hermite, roots_legendre

from .collision import ClosedForm, quartic_grid_sum
from .errors import ConfigurationError
from .geometry import SphereQuadrature, VelocityGrid, sphere_quadrature
from .kernels import CollisionKernel
from .rng import SplitMix64

__all__ = [
    "TestFunction",
    "u_gauss_rule",
    "quartic_integral",
    "quartic_integral_reduced",
    "sphere_bilinear_form",
    "counterexample_suite",
    "scan_counterexample",
]


@dataclass(frozen=True)
class TestFunction:
    """Velocity test function: a grid field or a closed form with a
    Gaussian envelope."""

    kind: str
    closed: Optional[ClosedForm] = None
    envelope_rate: Optional[float] = None
    values: Optional[np.ndarray] = None
    grid: Optional[VelocityGrid] = None

    @staticmethod
    def gaussian(lam: float) -> "TestFunction":
        return TestFunction("closed_form", ClosedForm.gaussian(lam), lam)

    @staticmethod
    def counterexample(lam: float) -> "TestFunction":
        return TestFunction("closed_form", ClosedForm.counterexample(lam), lam)

    @staticmethod
    def random_poly(lam: float, seed: int) -> "TestFunction":
        """Gaussian envelope times a random cubic with coefficients in
        [-1, 1]: smooth, generically sign-changing."""
        rng = SplitMix64(seed)
        coeffs = np.array([rng.uniform_in(-1.0, 1.0) for _ in range(20)])
        return TestFunction("closed_form", ClosedForm.poly(lam, coeffs), lam)

    @staticmethod
    def from_grid(grid: VelocityGrid, values: np.ndarray) -> "TestFunction":
        values = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError("grid test function must be finite")
        return TestFunction("grid_field", values=values, grid=grid)

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "closed_form":
            return np.atleast_1d(self.closed(pts))
        from .collision import interpolate_field
        from .geometry import DensityField

        # signed grid interpolation (no Pauli clamp)
        u = (pts + self.grid.v_max) / self.grid.h
        n = self.grid.n
        out = np.zeros(len(pts))
        inside = np.all((u > -1.0) & (u < n), axis=1)
        if np.any(inside):
            fp = np.zeros((n + 2, n + 2, n + 2))
            fp[1:-1, 1:-1, 1:-1] = self.values
            ui = u[inside]
            base = np.floor(ui).astype(np.int64)
            w = ui - base
            acc = np.zeros(len(ui))
            for cx in (0, 1):
                wx = w[:, 0] if cx else 1.0 - w[:, 0]
                for cy in (0, 1):
                    wy = w[:, 1] if cy else 1.0 - w[:, 1]
                    for cz in (0, 1):
                        wz = w[:, 2] if cz else 1.0 - w[:, 2]
                        acc += wx * wy * wz * fp[
                            base[:, 0] + 1 + cx, base[:, 1] + 1 + cy, base[:, 2] + 1 + cz
                        ]
            out[inside] = acc
        return out

    def node_values(self, grid: VelocityGrid) -> np.ndarray:
        if self.kind == "grid_field":
            if grid != self.grid:
                raise ValueError("test function lives on a different grid")
            return self.values
        return self.evaluate(grid.nodes()).reshape((grid.n,) * 3)


def quartic_integral(
    kernel: CollisionKernel,
    h: TestFunction,
    grid: VelocityGrid,
    quad: SphereQuadrature,
) -> float:
    """Direct grid discretization of int B h h_* h' h_*'."""
    vals = h.node_values(grid)
    point_eval = h.closed if h.kind == "closed_form" else None
    return quartic_grid_sum(vals, grid, kernel, quad, point_eval=point_eval)


# ----------------------------------------------------------------------
# sphere-reduced form


def _kernel_matrix(kernel: CollisionKernel, r: float, quad: SphereQuadrature) -> np.ndarray:
    """K_ml = w_m w_l B(r, <s_m, s_l>); requires B finite on the diagonal."""
    g = np.clip(quad.nodes @ quad.nodes.T, -1.0, 1.0)
    vals = kernel.eval(r, g)
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError(
            "kernel is singular at cos(theta) = +/-1; the double-sphere form "
            "needs a bounded angular part (reduce the kernel first)"
        )
    return vals * np.outer(quad.weights, quad.weights)


def radial_rule(r_max: float, n: int = 48) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, r_max]."""
    x, w = roots_legendre(n)
    return 0.5 * r_max * (x + 1.0), 0.5 * r_max * w


def u_box_rule(u_max: float, n_axis: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule on the cube [-u_max, u_max]^3."""
    x, w = roots_legendre(n_axis)
    x = u_max * x
    w = u_max * w
    nodes = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    weights = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    return nodes, weights


def u_gauss_rule(lam: float, n_axis: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule scaled to the envelope e^(-lam |u|^2 / 2):
    plain-measure nodes and weights for integrands with that decay."""
    x, w = roots_hermite(n_axis)
    scale = math.sqrt(2.0 / lam)
    nodes = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    log_w = np.log(w)
    ww = np.exp(
        (log_w[:, None, None] + log_w[None, :, None] + log_w[None, None, :]).ravel()
        + (nodes**2).sum(axis=1)
    ) * scale**3
    return nodes * scale, ww


def default_reduced_rules(h: TestFunction, kernel: CollisionKernel,
                          n_r: int = 48, n_u: int = 12):
    """Rules matched to the test function: the pair product carries
    e^(-lam (|u|^2 + r^2) / 2), so u gets a Gauss-Hermite grid scaled to
    the envelope and r a Gauss-Legendre rule on the decaying range; grid
    fields fall back to box rules over their compact support."""
    if h.kind == "closed_form":
        lam = h.envelope_rate
        return radial_rule(math.sqrt(2.0 * 34.0 / lam), n_r), u_gauss_rule(lam, n_u)
    span = 2.0 * h.grid.v_max
    return radial_rule(span, n_r), u_box_rule(span, n_u)


def quartic_integral_reduced(
    kernel: CollisionKernel,
    h: TestFunction,
    radial_quad: tuple[np.ndarray, np.ndarray],
    u_quad: tuple[np.ndarray, np.ndarray],
    sphere_quad: SphereQuadrature,
) -> float:
    """Sphere-reduced quartic integral
    1/8 int r^2 dr int du  int int B(r, <w, s>) ht(w) ht(s) dw ds."""
    r_nodes, r_weights = radial_quad
    u_nodes, u_weights = u_quad
    sig = sphere_quad.nodes
    total = 0.0
    for r, wr in zip(r_nodes, r_weights):
        k_mat = _kernel_matrix(kernel, float(r), sphere_quad)
        plus = 0.5 * (u_nodes[:, None, :] + r * sig[None, :, :])
        minus = 0.5 * (u_nodes[:, None, :] - r * sig[None, :, :])
        shape = plus.shape[:2]
        hp = h.evaluate(plus.reshape(-1, 3)).reshape(shape)
        hm = h.evaluate(minus.reshape(-1, 3)).reshape(shape)
        ht = hp * hm
        inner = np.einsum("um,ml,ul->u", ht, k_mat, ht)
        total += wr * r * r * float(u_weights @ inner)
    return total / 8.0


def sphere_bilinear_form(
    kernel_angular_at_r: Callable,
    h_on_sphere: Callable,
    sphere_quad: SphereQuadrature,
    monomial_degree: Optional[int] = None,
) -> float:
    """int int k(<w, s>) h(w) h(s) dw ds by the quadrature double sum.

    For k(t) = t^(2n) (pass monomial_degree = n) the moment-tensor
    certificate sum (int s_{i1}..s_{i2n} h ds)^2 is computed as well and
    must agree with the double sum to 1e-10 (an algebraic identity of
    the discrete sums).
    """
    nodes = sphere_quad.nodes
    w = sphere_quad.weights
    hv = np.asarray(h_on_sphere(nodes), dtype=float)
    g = np.clip(nodes @ nodes.T, -1.0, 1.0)
    kv = np.asarray(kernel_angular_at_r(g), dtype=float)
    form = float((w * hv) @ kv @ (w * hv))
    if monomial_degree is not None:
        n = int(monomial_degree)
        cur = w * hv
        for _ in range(2 * n):
            cur = cur[..., None] * nodes.reshape((len(w),) + (1,) * (cur.ndim - 1) + (3,))
        cert = float((cur.sum(axis=0) ** 2).sum()) if n > 0 else float(cur.sum() ** 2)
        if abs(form - cert) > 1e-10 * max(1.0, abs(form)):
            raise AssertionError(
                f"moment certificate mismatch: form={form!r}, certificate={cert!r}"
            )
    return form


# ----------------------------------------------------------------------
# the sign counterexample


def _pair_factor(u: np.ndarray, sig: np.ndarray) -> np.ndarray:
    """G_u(s) = prod over +/- of (1 + sqrt(2) sin(pi/2 <(u +/- s)/|u +/- s|, e1>))."""
    plus = u[None, :] + sig
    minus = u[None, :] - sig
    np_plus = np.linalg.norm(plus, axis=1)
    np_minus = np.linalg.norm(minus, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        c_plus = np.where(np_plus > 0, plus[:, 0] / np.maximum(np_plus, 1e-300), 0.0)
        c_minus = np.where(np_minus > 0, minus[:, 0] / np.maximum(np_minus, 1e-300), 0.0)
    return (1.0 + math.sqrt(2.0) * np.sin(0.5 * math.pi * c_plus)) * (
        1.0 + math.sqrt(2.0) * np.sin(0.5 * math.pi * c_minus)
    )


def _j_of_u(u: np.ndarray, c: float, quad: SphereQuadrature) -> float:
    g = _pair_factor(u, quad.nodes)
    gram = np.clip(quad.nodes @ quad.nodes.T, -1.0, 1.0)
    k = (c - gram**2) * np.outer(quad.weights, quad.weights)
    return float(g @ k @ g)


def j_at_zero(c: float, quad: SphereQuadrature) -> float:
    """J(0) = int int (c - <w,s>^2) cos(pi w1) cos(pi s1) dw ds.

    Computed through the moment-tensor split: c (int cos)^2 minus the sum
    of squares of int s_i s_j cos(pi s1) ds; the exact value is -96/pi^2
    (the c-term vanishes because int cos(pi s1) ds = 0).
    """
    nodes = quad.nodes
    w = quad.weights
    hv = np.cos(math.pi * nodes[:, 0])
    m0 = float(w @ hv)
    t2 = np.einsum("m,ma,mb->ab", w * hv, nodes, nodes)
    return c * m0 * m0 - float((t2**2).sum())


@dataclass(frozen=True)
class CounterexampleResult:
    """Sign-exact result of the quartic integral for the non-CP kernel.

    The envelope rates that flip the sign push every term below the
    double-precision floor (the negativity window of J is |u1| < 0.08, so
    the Gaussian needs lam in the thousands and the whole integral scales
    like e^(-lam)), so the value is carried as mantissa * 10^exponent10
    with the error estimate in the same scaling."""

    j0: float
    mantissa: float
    exponent10: int
    error_mantissa: float
    negative: bool
    params: dict

    @property
    def integral(self) -> float:
        return self.mantissa * 10.0**self.exponent10


class _JTable:
    """Axisymmetric table of J(u) = J(u1, |u_perp|): a fine core grid
    around the negativity window plus a coarse far grid, bilinear lookup."""

    def __init__(self, c: float, quad: SphereQuadrature, u_max: float = 8.0,
                 core: float = 0.6, n_core: tuple[int, int] = (241, 81),
                 n_far: tuple[int, int] = (121, 61)):
        gram = np.clip(quad.nodes @ quad.nodes.T, -1.0, 1.0)
        self._k = (c - gram**2) * np.outer(quad.weights, quad.weights)
        self._nodes = quad.nodes
        self.u_max = u_max
        self.core = core
        self.c1, self.c2, self.cv = self._build(
            np.linspace(-core, core, n_core[0]), np.linspace(0.0, core, n_core[1])
        )
        self.f1, self.f2, self.fv = self._build(
            np.linspace(-u_max, u_max, n_far[0]), np.linspace(0.0, u_max, n_far[1])
        )

    def _build(self, u1s, ups):
        vals = np.empty((len(u1s), len(ups)))
        for i, a in enumerate(u1s):
            for j, b in enumerate(ups):
                g = _pair_factor(np.array([a, b, 0.0]), self._nodes)
                vals[i, j] = g @ self._k @ g
        return u1s, ups, vals

    @staticmethod
    def _bilinear(u1s, ups, vals, x, y):
        d1 = u1s[1] - u1s[0]
        d2 = ups[1] - ups[0]
        fx = (x - u1s[0]) / d1
        fy = (y - ups[0]) / d2
        i = np.clip(np.floor(fx).astype(int), 0, len(u1s) - 2)
        j = np.clip(np.floor(fy).astype(int), 0, len(ups) - 2)
        fx = fx - i
        fy = fy - j
        return (
            vals[i, j] * (1 - fx) * (1 - fy)
            + vals[i + 1, j] * fx * (1 - fy)
            + vals[i, j + 1] * (1 - fx) * fy
            + vals[i + 1, j + 1] * fx * fy
        )

    def lookup(self, u1: np.ndarray, up: np.ndarray) -> np.ndarray:
        u1 = np.clip(u1, -self.u_max, self.u_max)
        up = np.clip(up, 0.0, self.u_max)
        in_core = (np.abs(u1) < self.core) & (up < self.core)
        out = np.empty(u1.shape)
        if np.any(in_core):
            out[in_core] = self._bilinear(self.c1, self.c2, self.cv,
                                          u1[in_core], up[in_core])
        if np.any(~in_core):
            out[~in_core] = self._bilinear(self.f1, self.f2, self.fv,
                                           u1[~in_core], up[~in_core])
        return out


def _signed_logsumexp(log_mag: np.ndarray, signs: np.ndarray) -> tuple[float, float]:
    """(mantissa, log10_scale) of sum signs * exp(log_mag)."""
    finite = np.isfinite(log_mag)
    if not np.any(finite):
        return 0.0, 0.0
    m = log_mag[finite].max()
    s = float(np.sum(signs[finite] * np.exp(log_mag[finite] - m)))
    return s, m / math.log(10.0)


def _counterexample_integral(
    c: float, gamma_exp: float, beta: float, lam: float,
    table: _JTable, n_hermite: int, n_r: int,
) -> tuple[float, float]:
    """(mantissa, log10_scale) of
    I = 1/8 int Phi(r) r^5 e^(-lam r^2) [ int e^(-lam r^2 |u|^2) J(u) du ] dr,
    Phi = r^beta below r = 1 and r^gamma above.

    Every term carries e^(-lam r^2): the r sums run in log magnitude so
    the sign is exact far below the double-precision floor.  The r >= 1
    range uses the substitution r^2 = 1 + s/lam (boundary layer of width
    1/lam); the r < 1 range runs in w = log r with panels refined
    toward r = 1.
    """
    xh, wh = roots_hermite(n_hermite)
    hx, hy, hz = np.meshgrid(xh, xh, xh, indexing="ij")
    hw = (wh[:, None, None] * wh[None, :, None] * wh[None, None, :]).ravel()
    hx = hx.ravel()
    hp = np.sqrt(hy.ravel() ** 2 + hz.ravel() ** 2)
    sqrt_lam = math.sqrt(lam)

    def u_integral(r: float) -> float:
        """(lam r^2)^{3/2} / pi^{3/2}-free form: plain value of
        int e^(-lam r^2 |u|^2) J(u) du without underflow risk."""
        scale = 1.0 / (r * sqrt_lam)
        jv = table.lookup(hx * scale, hp * scale)
        return scale**3 * float(hw @ jv)

    log_terms = []
    signs = []
    x_gl, w_gl = roots_legendre(n_r)

    # r >= 1: r^2 = 1 + s/lam, dr = ds/(2 lam r)
    s_hi = 60.0
    s = 0.5 * s_hi * (x_gl + 1.0)
    ws = 0.5 * s_hi * w_gl
    r = np.sqrt(1.0 + s / lam)
    for rr, ss, wss in zip(r, s, ws):
        uval = u_integral(float(rr))
        if uval == 0.0:
            continue
        mag = (4.0 + gamma_exp) * math.log(rr) - lam - ss - math.log(2.0 * lam) \
            + math.log(abs(uval) * wss)
        log_terms.append(mag)
        signs.append(math.copysign(1.0, uval))

    # r < 1: w = log r over geometric panels toward r = 1
    edges = [0.0]
    width = 1e-3 / max(beta, lam, 1.0) * 50.0
    while edges[-1] < 12.0:
        edges.append(min(edges[-1] + width, 12.0))
        width *= 2.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        wv = -(0.5 * (hi - lo) * x_gl + 0.5 * (hi + lo))
        wq = 0.5 * (hi - lo) * w_gl
        for wval, wgt in zip(wv, wq):
            rr = math.exp(wval)
            uval = u_integral(rr)
            if uval == 0.0:
                continue
            mag = (6.0 + beta) * wval - lam * rr * rr + math.log(abs(uval) * wgt)
            log_terms.append(mag)
            signs.append(math.copysign(1.0, uval))

    mant, log10 = _signed_logsumexp(np.array(log_terms), np.array(signs))
    return mant / 8.0, log10


def counterexample_suite(
    c: float,
    gamma_exp: float,
    beta: float,
    lam: float,
    sphere_order: int = 86,
    n_hermite: int = 14,
    n_r: int = 48,
) -> CounterexampleResult:
    """J(0) and the full quartic integral for the non-CP kernel
    b = c - cos^2(theta), radial profile r^beta / r^gamma, and the tilted
    Gaussian test function with envelope rate lam."""
    if c <= 1.0:
        raise ValueError("the counterexample needs c > 1")
    if beta <= 0 or lam <= 0:
        raise ValueError("beta and lambda must be positive")
    quad = sphere_quadrature("lebedev_like", sphere_order)
    j0 = j_at_zero(c, quad)
    table = _JTable(c, quad)
    m_lo, e_lo = _counterexample_integral(c, gamma_exp, beta, lam, table, n_hermite, n_r)
    quad_hi = sphere_quadrature("lebedev_like", 110)
    table_hi = _JTable(c, quad_hi, n_core=(361, 121), n_far=(161, 81))
    m_hi, e_hi = _counterexample_integral(c, gamma_exp, beta, lam, table_hi,
                                          n_hermite + 6, n_r + 16)
    # express both on the finer run's scale
    if m_hi == 0.0 and m_lo == 0.0:
        mant, expo, err = 0.0, 0, 0.0
    else:
        expo = e_hi if m_hi != 0.0 else e_lo
        mant = m_hi * 10.0 ** (e_hi - expo) if m_hi != 0.0 else 0.0
        err = abs(mant - (m_lo * 10.0 ** (e_lo - expo) if m_lo != 0.0 else 0.0))
        shift = math.floor(math.log10(abs(mant))) if mant != 0.0 else 0
        mant *= 10.0**-shift
        err *= 10.0**-shift
        expo = int(round(expo + shift))
    return CounterexampleResult(
        j0=j0,
        mantissa=mant,
        exponent10=expo,
        error_mantissa=max(err, abs(mant) * 1e-12, 1e-15),
        negative=mant < 0.0,
        params={"c": c, "gamma": gamma_exp, "beta": beta, "lambda": lam},
    )


def scan_counterexample(
    c: float = 2.0,
    gamma_exp: float = 0.0,
    lambdas=(512.0, 1024.0, 2048.0, 4096.0, 8192.0),
    beta_factors=(1.0, 2.0, 4.0, 8.0),
    sphere_order: int = 86,
) -> tuple[Optional[CounterexampleResult], list[CounterexampleResult]]:
    """Scan envelope rates lambda and radial exponents beta = factor * lambda;
    returns the most significant negative cell (largest |I| / error among
    I < 0) and all results.

    The grid sits in the thousands because the negativity window of J has
    radius ~0.08 along e1: the Gaussian must concentrate there before the
    large positive J region overwhelms the core.
    """
    results = []
    best = None
    best_score = 0.0
    quad = sphere_quadrature("lebedev_like", sphere_order)
    j0 = j_at_zero(c, quad)
    table = _JTable(c, quad)
    quad_hi = sphere_quadrature("lebedev_like", 110)
    table_hi = _JTable(c, quad_hi, n_core=(361, 121), n_far=(161, 81))
    for lam in lambdas:
        for factor in beta_factors:
            beta = factor * lam
            m_lo, e_lo = _counterexample_integral(c, gamma_exp, beta, lam, table, 14, 48)
            m_hi, e_hi = _counterexample_integral(c, gamma_exp, beta, lam, table_hi, 20, 64)
            if m_hi == 0.0:
                continue
            mant = m_hi
            err = abs(m_hi - m_lo * 10.0 ** (e_lo - e_hi)) if m_lo != 0.0 else abs(m_hi)
            shift = math.floor(math.log10(abs(mant)))
            res = CounterexampleResult(
                j0=j0,
                mantissa=mant * 10.0**-shift,
                exponent10=int(round(e_hi + shift)),
                error_mantissa=max(err * 10.0**-shift, abs(mant) * 10.0**-shift * 1e-12),
                negative=mant < 0.0,
                params={"c": c, "gamma": gamma_exp, "beta": beta, "lambda": lam},
            )
            results.append(res)
            if res.negative:
                score = abs(res.mantissa) / res.error_mantissa
                if score > best_score:
                    best = res
                    best_score = score
    return best, results
