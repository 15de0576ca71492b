"""Collision kernel families B(|z|, cos theta) and their structure.

Four families are provided:

* inverse-power kernels from the potential |x|^(-alpha), 0 < alpha < 3:
  B = c_a |z|^gamma ((1-t)^-beta - (1+t)^-beta)^2 with gamma = 2 alpha - 5
  and beta = (3 - alpha)/2;
* the screened-Coulomb (Rutherford) kernel with a weak angular cutoff,
  B = const |z|^-3 (1 + t^2)(1 - t^2)^-p or const |z|^-3 t^2 (1-t^2)^-p,
  1 < p < 3/2;
* the Debye-type weak-coupling kernel
  B = |z| ((1 + |z|^2 sin^2(th/2))^-b - (1 + |z|^2 cos^2(th/2))^-b)^2,
  which is bounded in angle and not of separated form;
* custom monomial kernels with angular part sum_n c_n t^(2n), used for
  smooth test configurations and for the reduced bounded kernel.

Every kernel carries declared two-sided angular bounds (b_*, b^*) and a
radial lower-bound profile Phi_* where known, plus, when the lower bound
is a power series in cos^2(theta) with nonnegative coefficients, the
coefficient list itself.  Those ingredients feed `reduce_to_b0`, which
builds the bounded, integrable, completely positive minorant

    B0 = min(|z|^gamma Phi_*(|z|), 1) / (1 + |z|^6) * bl(cos theta)

where bl caps the n-th series coefficient at 2^-n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import roots_legendre

__all__ = [
    "CollisionKernel",
    "CpSeries",
    "AngularIntegrals",
    "cp_series_coefficients",
    "cp_series_closed_form",
    "eval_kernel",
    "make_inverse_power_kernel",
    "make_rutherford_cutoff_kernel",
    "make_debye_kernel",
    "make_monomial_kernel",
    "angular_integrals",
    "reduce_to_b0",
]

# numeric family codes shared with the compiled collision passes
FAM_MONOMIAL = 0
FAM_INVERSE_POWER = 1
FAM_RUTHERFORD_FULL = 2
FAM_RUTHERFORD_COS2 = 3
FAM_DEBYE = 4
FAM_B0 = 5

PHI_ONE = 0
PHI_DEBYE = 1

_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class CpSeries:
    """Coefficients a_1..a_N of ((1-t)^-beta - (1+t)^-beta)^2 = sum a_n t^(2n)."""

    coefficients: np.ndarray
    beta: float

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coeffs)
        if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
            raise ValueError("series coefficients must be finite and nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    def partial_sum(self, t):
        """sum_n a_n t^(2n), n = 1..N."""
        t2 = np.asarray(t, dtype=float) ** 2
        acc = np.zeros_like(t2)
        power = np.ones_like(t2)
        for a_n in self.coefficients:
            power = power * t2
            acc = acc + a_n * power
        return acc


@dataclass(frozen=True)
class CollisionKernel:
    """A collision kernel B(|z|, cos theta) with declared bound functions.

    `radial` and `angular` evaluate the two factors of a separable kernel;
    for the non-separable Debye family `angular` is unset and evaluation
    goes through the joint formula.  `radial_cap`, when set, truncates
    |z|^gamma at that value for gamma < 0 (grid evaluations never probe
    below half a cell, so the collision passes install (h/2)^gamma).
    """

    family: str
    gamma: float
    separable: bool
    angular_singularity: float  # q >= 0: angular(t) * (1 - t^2)^q stays bounded
    params: tuple = ()
    radial_cap: Optional[float] = None
    angular_coeffs: Optional[np.ndarray] = None
    bound_b_star: Optional[Callable] = None
    bound_b_upper: Optional[Callable] = None
    bound_phi_star: Optional[Callable] = None
    b_star_coeffs: Optional[np.ndarray] = None
    phi_code: int = PHI_ONE
    phi_param: float = 0.0

    # -- evaluation ----------------------------------------------------

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "b0_reduced":
            return _b0_radial(r, self.gamma, self.phi_code, self.phi_param)
        out = np.power(r, self.gamma)
        if self.radial_cap is not None and self.gamma < 0:
            out = np.minimum(out, self.radial_cap)
        return out

    def angular(self, t):
        if not self.separable:
            raise ValueError("non-separable kernel has no angular factor")
        t = np.asarray(t, dtype=float)
        code = _FAMILY_CODES[self.family]
        return _angular_eval(code, t, self.params, self.angular_coeffs)

    def eval(self, z_norm, cos_theta):
        if self.family == "debye":
            beta = self.params[0]
            return _debye_eval(np.asarray(z_norm, float), np.asarray(cos_theta, float), beta)
        return self.radial(z_norm) * self.angular(cos_theta)

    # -- plumbing ------------------------------------------------------

    @property
    def is_bounded(self) -> bool:
        """Bounded on (0, inf) x [-1, 1]: safe for the gain-operator sums."""
        if self.family == "b0_reduced":
            return True
        if self.angular_singularity > 0:
            return False
        if self.gamma < 0 and self.radial_cap is None:
            return False
        return True

    def with_radial_cap(self, cap: float) -> "CollisionKernel":
        return replace(self, radial_cap=float(cap))

    def numba_spec(self):
        """(family_code, gamma, cap, p1, p2, coeffs) consumed by the compiled passes."""
        code = _FAMILY_CODES[self.family]
        cap = math.inf if self.radial_cap is None else float(self.radial_cap)
        p1 = float(self.params[0]) if len(self.params) > 0 else 0.0
        p2 = float(self.params[1]) if len(self.params) > 1 else 0.0
        coeffs = self.angular_coeffs if self.angular_coeffs is not None else _EMPTY
        if code == FAM_B0:
            p1 = float(self.phi_code)
            p2 = float(self.phi_param)
        return (code, float(self.gamma), cap, p1, p2, np.ascontiguousarray(coeffs, dtype=np.float64))


_FAMILY_CODES = {
    "custom_monomial": FAM_MONOMIAL,
    "inverse_power": FAM_INVERSE_POWER,
    "rutherford_full": FAM_RUTHERFORD_FULL,
    "rutherford_cos2": FAM_RUTHERFORD_COS2,
    "debye": FAM_DEBYE,
    "b0_reduced": FAM_B0,
}


def _angular_eval(code, t, params, coeffs):
    if code in (FAM_MONOMIAL, FAM_B0):
        t2 = t * t
        acc = np.zeros_like(t2)
        power = np.ones_like(t2)
        for c in coeffs:
            acc = acc + c * power
            power = power * t2
        return acc
    if code == FAM_INVERSE_POWER:
        beta, c_alpha = params
        with np.errstate(divide="ignore"):
            diff = np.power(1.0 - t, -beta) - np.power(1.0 + t, -beta)
        return c_alpha * diff * diff
    if code == FAM_RUTHERFORD_FULL:
        p, const = params
        with np.errstate(divide="ignore"):
            # (1 - t)(1 + t) avoids cancellation at the endpoints
            return const * (1.0 + t * t) * np.power((1.0 - t) * (1.0 + t), -p)
    if code == FAM_RUTHERFORD_COS2:
        p, const = params
        with np.errstate(divide="ignore"):
            return const * (t * t) * np.power((1.0 - t) * (1.0 + t), -p)
    raise ValueError(f"no angular factor for family code {code}")


def _debye_eval(r, t, beta):
    # sin^2(th/2) = (1 - t)/2, cos^2(th/2) = (1 + t)/2
    r2 = r * r
    lo = np.power(1.0 + r2 * (1.0 - t) / 2.0, -beta)
    hi = np.power(1.0 + r2 * (1.0 + t) / 2.0, -beta)
    diff = lo - hi
    return r * diff * diff


def _b0_radial(r, gamma, phi_code, phi_param):
    if phi_code == PHI_DEBYE:
        beta = phi_param
        phi = np.power(2.0 * r * r / (1.0 + r * r), 2.0 * beta + 2.0)
    else:
        phi = 1.0
    return np.minimum(np.power(r, gamma) * phi, 1.0) / (1.0 + r**6)


# ----------------------------------------------------------------------
# operations


def eval_kernel(kernel: CollisionKernel, z_norm: float, cos_theta: float) -> float:
    """Evaluate B(|z|, cos theta); symmetric in the sign of cos theta."""
    if not (np.all(np.isfinite(z_norm)) and np.all(np.isfinite(cos_theta))):
        raise ValueError("eval_kernel requires finite inputs")
    if np.any(np.asarray(z_norm) <= 0):
        raise ValueError("z_norm must be positive")
    if np.any(np.abs(cos_theta) > 1.0 + 1e-15):
        raise ValueError("cos_theta must lie in [-1, 1]")
    return kernel.eval(z_norm, cos_theta)


def cp_series_coefficients(beta: float, n_max: int) -> CpSeries:
    """Coefficients a_n, n = 1..n_max, of the expansion
    ((1-t)^-beta - (1+t)^-beta)^2 = sum_{n>=1} a_n t^(2n),
    a_n = 4 sum_{i+j=n-1} [beta(beta+1)...(beta+2i)/(2i+1)!] x [same with j].

    The inner products are accumulated in log space so large n_max * beta
    cannot overflow intermediate terms; a non-finite final coefficient is
    an error.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    # log T_i, T_i = prod_{k=0}^{2i} (beta + k) / (2i+1)!
    log_t = np.empty(n_max)
    log_t[0] = math.log(beta)
    for i in range(n_max - 1):
        log_t[i + 1] = (
            log_t[i]
            + math.log(beta + 2 * i + 1)
            + math.log(beta + 2 * i + 2)
            - math.log(2 * i + 2)
            - math.log(2 * i + 3)
        )
    a = np.empty(n_max)
    for n in range(1, n_max + 1):
        terms = log_t[0:n] + log_t[n - 1 :: -1][0:n]
        m = terms.max()
        a[n - 1] = 4.0 * math.exp(m) * np.exp(terms - m).sum()
    if not np.all(np.isfinite(a)):
        raise OverflowError("cp series coefficients overflowed")
    return CpSeries(coefficients=a, beta=beta)


def cp_series_closed_form(beta: float, t):
    """Left-hand side ((1-t)^-beta - (1+t)^-beta)^2 of the expansion."""
    t = np.asarray(t, dtype=float)
    diff = np.power(1.0 - t, -beta) - np.power(1.0 + t, -beta)
    return diff * diff


def make_inverse_power_kernel(alpha: float, c_alpha: float = 1.0) -> CollisionKernel:
    """Kernel of the inverse-power potential |x|^-alpha, 0 < alpha < 3."""
    if not 0.0 < alpha < 3.0:
        raise ValueError(f"alpha must lie in (0, 3), got {alpha}")
    if c_alpha <= 0:
        raise ValueError("c_alpha must be positive")
    beta = (3.0 - alpha) / 2.0
    gamma = 2.0 * alpha - 5.0
    params = (beta, c_alpha)

    def b(t, _p=params):
        return _angular_eval(FAM_INVERSE_POWER, np.asarray(t, float), _p, None)

    # lower-bound series: c_alpha * a_n from the cos^2 expansion
    n_terms = 80
    series = cp_series_coefficients(beta, n_terms)
    coeffs = np.concatenate([[0.0], c_alpha * series.coefficients])
    return CollisionKernel(
        family="inverse_power",
        gamma=gamma,
        separable=True,
        angular_singularity=2.0 * beta,
        params=params,
        bound_b_star=b,
        bound_b_upper=b,
        bound_phi_star=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        b_star_coeffs=coeffs,
    )


def make_rutherford_cutoff_kernel(
    p: float, const: float = 1.0, variant: str = "full"
) -> CollisionKernel:
    """Screened-Coulomb kernel with the weak angular cutoff 1 < p < 3/2."""
    if not 1.0 < p < 1.5:
        raise ValueError(f"cutoff exponent p must lie in (1, 3/2), got {p}")
    if const <= 0:
        raise ValueError("const must be positive")
    if variant not in ("full", "cos2"):
        raise ValueError(f"variant must be 'full' or 'cos2', got {variant!r}")
    code = FAM_RUTHERFORD_FULL if variant == "full" else FAM_RUTHERFORD_COS2
    params = (p, const)

    def b(t, _c=code, _p=params):
        return _angular_eval(_c, np.asarray(t, float), _p, None)

    # (1 - t^2)^-p = sum_k (p)_k / k! t^(2k); multiply by (1 + t^2) or t^2
    n_terms = 80
    binom = np.empty(n_terms)
    binom[0] = 1.0
    for k in range(n_terms - 1):
        binom[k + 1] = binom[k] * (p + k) / (k + 1)
    if variant == "full":
        coeffs = const * (binom + np.concatenate([[0.0], binom[:-1]]))
    else:
        coeffs = const * np.concatenate([[0.0], binom[:-1]])
    return CollisionKernel(
        family=f"rutherford_{variant}",
        gamma=-3.0,
        separable=True,
        angular_singularity=p,
        params=params,
        bound_b_star=b,
        bound_b_upper=b,
        bound_phi_star=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        b_star_coeffs=coeffs,
    )


def make_debye_kernel(beta: float) -> CollisionKernel:
    """Weak-coupling kernel for the Fourier profile (1 + |xi|^2)^-beta.

    For 0 < beta < 1 the two-sided bounds hold with gamma = 1 - 4 beta,
    Phi_* = (2|z|^2 / (1+|z|^2))^(2 beta + 2), b_* = c_b cos^2,
    b^* = C_b cos^2 sin^(-4 beta); the constants c_b < C_b are located by
    scanning a 200 x 200 log-spaced (|z|, theta) lattice.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    gamma = 1.0 - 4.0 * beta

    def phi_star(r, _b=beta):
        r = np.asarray(r, dtype=float)
        return np.power(2.0 * r * r / (1.0 + r * r), 2.0 * _b + 2.0)

    bound_b_star = bound_b_upper = None
    b_star_coeffs = None
    if beta < 1.0:
        c_lo, c_hi = _debye_bound_constants(beta, gamma)

        def b_star(t, _c=c_lo):
            t = np.asarray(t, dtype=float)
            return _c * t * t

        def b_upper(t, _c=c_hi, _b=beta):
            t = np.asarray(t, dtype=float)
            with np.errstate(divide="ignore"):
                return _c * t * t * np.power(1.0 - t * t, -2.0 * _b)

        bound_b_star, bound_b_upper = b_star, b_upper
        b_star_coeffs = np.array([0.0, c_lo])

    return CollisionKernel(
        family="debye",
        gamma=gamma,
        separable=False,
        angular_singularity=0.0,
        params=(beta,),
        bound_b_star=bound_b_star,
        bound_b_upper=bound_b_upper,
        bound_phi_star=phi_star,
        b_star_coeffs=b_star_coeffs,
        phi_code=PHI_DEBYE,
        phi_param=beta,
    )


def _debye_bound_constants(beta: float, gamma: float) -> tuple[float, float]:
    r = np.logspace(-3, 3, 200)
    theta = np.linspace(0.0, np.pi, 202)[1:-1]
    t = np.cos(theta)
    rg, tg = np.meshgrid(r, t, indexing="ij")
    b_val = _debye_eval(rg, tg, beta)
    base = np.power(rg, gamma) * np.power(2.0 * rg * rg / (1.0 + rg * rg), 2.0 * beta + 2.0)
    t2 = tg * tg
    mask = t2 > 1e-12
    ratio_lo = b_val[mask] / (base[mask] * t2[mask])
    c_lo = float(ratio_lo.min()) * 0.999
    ratio_hi = b_val[mask] * np.power(1.0 - t2[mask], 2.0 * beta) / (
        np.power(rg[mask], gamma) * t2[mask]
    )
    c_hi = float(ratio_hi.max()) * 1.001
    if not (0.0 < c_lo < c_hi):
        raise RuntimeError("debye bound-constant scan failed")
    return c_lo, c_hi


def make_monomial_kernel(
    gamma: float, coeffs, radial_cap: Optional[float] = None
) -> CollisionKernel:
    """Separable kernel |z|^gamma * sum_n c_n cos^(2n), c_n >= 0."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ValueError("coeffs must be a non-empty 1-d sequence")
    if np.any(coeffs < 0):
        raise ValueError("monomial coefficients must be nonnegative")

    def b(t, _c=coeffs):
        return _angular_eval(FAM_MONOMIAL, np.asarray(t, float), (), _c)

    return CollisionKernel(
        family="custom_monomial",
        gamma=gamma,
        separable=True,
        angular_singularity=0.0,
        params=(),
        radial_cap=radial_cap,
        angular_coeffs=coeffs,
        bound_b_star=b,
        bound_b_upper=b,
        bound_phi_star=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        b_star_coeffs=coeffs,
    )


# ----------------------------------------------------------------------
# angular integrability


@dataclass(frozen=True)
class AngularIntegrals:
    i_sin: float
    i_sin2: float
    satisfies_a2: bool
    satisfies_a3: bool
    diagnostics: dict = field(default_factory=dict)


def angular_integrals(kernel: CollisionKernel) -> AngularIntegrals:
    """Endpoint-adaptive quadrature of the angular upper bound.

    i_sin  = int_0^pi b^*(cos th) sin th dth      (cutoff used by hard range)
    i_sin2 = int_0^pi b^*(cos th) sin^2 th dth    (the weaker cutoff)

    Dyadic panels refine toward cos theta = +/-1; an endpoint power
    singularity either converges (panel sums shrink geometrically) or is
    declared divergent once the running total exceeds 1e12 or the panel
    sums stop decaying.
    """
    if kernel.bound_b_upper is None:
        raise ValueError("angular_integrals requires the b^* bound to be set")
    b = kernel.bound_b_upper
    i_sin, ok1 = _endpoint_adaptive(lambda t: b(t))
    i_sin2, ok2 = _endpoint_adaptive(lambda t: b(t) * np.sqrt((1.0 - t) * (1.0 + t)))
    gamma = kernel.gamma
    return AngularIntegrals(
        i_sin=i_sin if ok1 else math.inf,
        i_sin2=i_sin2 if ok2 else math.inf,
        satisfies_a2=ok1 and 0.0 <= gamma <= 1.0,
        satisfies_a3=ok2 and -4.0 <= gamma < 0.0,
        diagnostics={"i_sin_converged": ok1, "i_sin2_converged": ok2},
    )


_GL20 = roots_legendre(20)


def _panel(fn, lo, hi):
    x, w = _GL20
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    vals = fn(mid + half * x)
    return half * float(np.dot(w, vals))


def _endpoint_adaptive(fn, max_level: int = 45) -> tuple[float, bool]:
    """Integrate fn over (-1, 1) with dyadic panels refining into both
    endpoints.  An endpoint power singularity (1 -+ t)^(-q) makes the panel
    sums geometric with ratio 2^(q-1): decaying ratios are summed with a
    geometric tail extrapolation, ratios at or above 1 (within tolerance,
    covering the log-divergent case) are reported as divergent.  Depth is
    capped where the panel edges stop being resolvable in double precision.
    """
    total = _panel(fn, -0.5, 0.5)
    for sign in (1.0, -1.0):
        prev = None
        lo = 0.5
        for k in range(1, max_level + 1):
            hi = 1.0 - 2.0 ** -(k + 1)
            s = _panel(fn, sign * lo, sign * hi) * sign
            if not math.isfinite(s):
                return math.inf, False
            total += s
            if abs(total) > 1e12:
                return math.inf, False
            if abs(s) < 1e-14 * max(1.0, abs(total)):
                break
            if prev is not None and abs(prev) > 0:
                ratio = abs(s) / abs(prev)
                if k >= 8 and ratio >= 0.999:
                    return math.inf, False
                if k == max_level and ratio < 0.999:
                    total += s * ratio / (1.0 - ratio)
            prev = s
            lo = hi
    return total, True


# ----------------------------------------------------------------------
# reduced kernel


def reduce_to_b0(kernel: CollisionKernel, coeff_cap_base: float = 0.5) -> CollisionKernel:
    """Bounded completely positive minorant of `kernel`.

    Requires the declared lower bounds: Phi_* and the series coefficients
    of b_*.  The n-th coefficient is capped at coeff_cap_base^n, so the
    capped angular part is bounded by min(b_*, 1/(1-cap)) and the radial
    factor by 1/(1+|z|^6); the result is dominated by the input kernel
    everywhere.
    """
    if kernel.bound_phi_star is None or kernel.b_star_coeffs is None:
        raise ValueError("reduce_to_b0 requires bound_phi_star and b_* series coefficients")
    if not 0.0 < coeff_cap_base < 1.0:
        raise ValueError("coeff_cap_base must lie in (0, 1)")
    caps = coeff_cap_base ** np.arange(len(kernel.b_star_coeffs))
    capped = np.minimum(kernel.b_star_coeffs, caps)

    def b(t, _c=capped):
        return _angular_eval(FAM_MONOMIAL, np.asarray(t, float), (), _c)

    return CollisionKernel(
        family="b0_reduced",
        gamma=kernel.gamma,
        separable=True,
        angular_singularity=0.0,
        params=(),
        angular_coeffs=capped,
        bound_b_star=b,
        bound_b_upper=b,
        bound_phi_star=kernel.bound_phi_star,
        b_star_coeffs=capped,
        phi_code=kernel.phi_code,
        phi_param=kernel.phi_param,
    )


def angular_sphere_mass(kernel: CollisionKernel) -> float:
    """2 pi int_{-1}^{1} b(t) dt for monomial-form kernels (closed form).

    For the reduced kernel this is the constant A such that
    int_{S^2} B0 d sigma = A * min(|z|^gamma Phi_*, 1)/(1 + |z|^6).
    """
    if kernel.angular_coeffs is None:
        raise ValueError("closed-form sphere mass needs monomial coefficients")
    n = np.arange(len(kernel.angular_coeffs))
    return float(2.0 * np.pi * np.sum(kernel.angular_coeffs * 2.0 / (2.0 * n + 1.0)))
