"""Velocity grid, post-collision kinematics, and quadrature on the sphere.

The collision sphere is parameterized the usual way: for a pair (v, v*)
with relative speed r = |v - v*| and center c = (v + v*)/2, the outgoing
velocities are c + (r/2) sigma and c - (r/2) sigma, which conserve
momentum and kinetic energy exactly.

Three quadrature kinds on S^2:

* ``lebedev_like``: octahedrally symmetric rules (orders 6..110 nodes),
  exact for spherical polynomials up to the tabulated degree, nodes in a
  fixed global frame;
* ``product_cos_phi``: Gauss-Legendre in cos(theta) x uniform midpoint in
  phi, built in a local frame whose polar axis is aligned per collision
  pair with n = (v - v*)/|v - v*|;
* ``jacobi_adapted``: like the product rule but with Gauss-Jacobi nodes
  in cos(theta) for the weight (1 - t^2)^(1/2 - e); the returned plain
  d(sigma) weights carry the compensating factor (1 - t^2)^(e - 1/2), so
  an angular factor blowing up like (1 - t^2)^-e is integrated against a
  bounded residual.  Because the integrand F f' f*' ... vanishes at
  t = +/-1 on collision spheres, e may be as large as the weak cutoff
  allows (e < 3/2).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "VelocityGrid",
    "DensityField",
    "SphereQuadrature",
    "build_grid",
    "post_collision",
    "sphere_quadrature",
    "write_snapshot",
    "read_snapshot",
]


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform cubic lattice over [-v_max, v_max]^3, node-centered."""

    n: int
    v_max: float

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs at least 4 points per axis, got {self.n}")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.v_max / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.n)

    def node(self, i: int, j: int, k: int) -> np.ndarray:
        ax = self.axis
        return np.array([ax[i], ax[j], ax[k]])

    def nodes(self) -> np.ndarray:
        """(n^3, 3) array of node coordinates in row-major (i, j, k) order."""
        ax = self.axis
        gi, gj, gk = np.meshgrid(ax, ax, ax, indexing="ij")
        return np.stack([gi.ravel(), gj.ravel(), gk.ravel()], axis=1)

    @property
    def cell_volume(self) -> float:
        return self.h**3


def build_grid(n: int, v_max: float) -> VelocityGrid:
    return VelocityGrid(n=int(n), v_max=float(v_max))


@dataclass
class DensityField:
    """Occupation values on a velocity grid, constrained to [0, 1]."""

    grid: VelocityGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        n = self.grid.n
        if self.values.shape != (n, n, n):
            raise ValueError(f"values must have shape {(n, n, n)}, got {self.values.shape}")

    def validate(self, tol: float = 0.0):
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < -tol or hi > 1.0 + tol:
            raise ValueError(f"occupation values outside [0, 1]: min={lo}, max={hi}")
        return self

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.values.copy())


def post_collision(v, v_star, sigma):
    """Outgoing pair for (v, v*) scattering into direction sigma."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norm = np.linalg.norm(sigma)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"sigma must be a unit vector, |sigma| = {norm}")
    center = 0.5 * (v + v_star)
    half_gap = 0.5 * np.linalg.norm(v - v_star)
    return center + half_gap * sigma, center - half_gap * sigma


# ----------------------------------------------------------------------
# sphere quadrature


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and plain-d(sigma) weights on S^2.

    ``aligned`` rules are stored in a canonical frame with polar axis e_z;
    collision passes rotate them so the polar axis matches n per pair.
    ``t`` holds cos(theta) of each node relative to the polar axis (for
    aligned rules these are the rule's abscissas).
    """

    kind: str
    nodes: np.ndarray  # (M, 3)
    weights: np.ndarray  # (M,)
    t: np.ndarray  # (M,)
    degree: Optional[int]
    aligned: bool
    exponent: float = 0.0  # jacobi_adapted: absorbed (1 - t^2)^-exponent

    @property
    def size(self) -> int:
        return len(self.weights)


# Octahedral orbit generators: vertex (6), edge-center (12), face-center (8),
# (a, a, b) 24-orbit, (a, b, 0) 24-orbit.  Weights are fractions of 4 pi.
def _orbit_vertex(w):
    pts = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    return np.array(pts, float), np.full(6, w)


def _orbit_edge(w):
    s = 1.0 / math.sqrt(2.0)
    pts = []
    for i in range(3):
        for si in (s, -s):
            for sj in (s, -s):
                p = [0.0, 0.0, 0.0]
                p[i] = si
                p[(i + 1) % 3] = sj
                pts.append(p)
    return np.array(pts), np.full(12, w)


def _orbit_face(w):
    s = 1.0 / math.sqrt(3.0)
    pts = [
        (sx * s, sy * s, sz * s)
        for sx in (1, -1)
        for sy in (1, -1)
        for sz in (1, -1)
    ]
    return np.array(pts), np.full(8, w)


def _orbit_aab(a, w):
    b = math.sqrt(1.0 - 2.0 * a * a)
    pts = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                pts.append((sx * a, sy * a, sz * b))
                pts.append((sx * a, sy * b, sz * a))
                pts.append((sx * b, sy * a, sz * a))
    return np.array(pts), np.full(24, w)


def _orbit_ab0(a, w):
    b = math.sqrt(1.0 - a * a)
    pts = []
    for u, v in ((a, b), (b, a)):
        for su in (1, -1):
            for sv in (1, -1):
                pts.append((su * u, sv * v, 0.0))
                pts.append((su * u, 0.0, sv * v))
                pts.append((0.0, su * u, sv * v))
    return np.array(pts), np.full(24, w)


# order -> (degree, [(builder, args, weight), ...]); weights in units of 4 pi
_LEBEDEV_TABLE = {
    6: (3, [("v", None, 0.1666666666666667)]),
    14: (5, [("v", None, 0.6666666666666667e-1), ("f", None, 0.7500000000000000e-1)]),
    26: (
        7,
        [
            ("v", None, 0.4761904761904762e-1),
            ("e", None, 0.3809523809523810e-1),
            ("f", None, 0.3214285714285714e-1),
        ],
    ),
    38: (
        9,
        [
            ("v", None, 0.9523809523809524e-2),
            ("f", None, 0.3214285714285714e-1),
            ("ab0", 0.4597008433809831, 0.2857142857142857e-1),
        ],
    ),
    50: (
        11,
        [
            ("v", None, 0.1269841269841270e-1),
            ("e", None, 0.2257495590828924e-1),
            ("f", None, 0.2109375000000000e-1),
            ("aab", 0.3015113445777636, 0.2017333553791887e-1),
        ],
    ),
    86: (
        15,
        [
            ("v", None, 0.1154401154401154e-1),
            ("f", None, 0.1194390908585628e-1),
            ("aab", 0.3696028464541502, 0.1111055571060340e-1),
            ("aab", 0.6943540066026664, 0.1187650129453714e-1),
            ("ab0", 0.3742430390903412, 0.1181230374690448e-1),
        ],
    ),
    110: (
        17,
        [
            ("v", None, 0.3828270494937162e-2),
            ("f", None, 0.9793737512487512e-2),
            ("aab", 0.1851156353447362, 0.8211737283191111e-2),
            ("aab", 0.6904210483822922, 0.9942814891178103e-2),
            ("aab", 0.3956894730559419, 0.9595471336070963e-2),
            ("ab0", 0.4783690288121502, 0.9694996361663028e-2),
        ],
    ),
}

_ORBIT_BUILDERS = {
    "v": lambda a, w: _orbit_vertex(w),
    "e": lambda a, w: _orbit_edge(w),
    "f": lambda a, w: _orbit_face(w),
    "aab": _orbit_aab,
    "ab0": _orbit_ab0,
}


def _lebedev(order: int) -> tuple[np.ndarray, np.ndarray, int]:
    if order not in _LEBEDEV_TABLE:
        raise ValueError(
            f"unsupported lebedev_like order {order}; available: {sorted(_LEBEDEV_TABLE)}"
        )
    degree, orbits = _LEBEDEV_TABLE[order]
    all_pts, all_w = [], []
    for name, a, w in orbits:
        pts, ws = _ORBIT_BUILDERS[name](a, w)
        all_pts.append(pts)
        all_w.append(ws)
    nodes = np.vstack(all_pts)
    weights = np.concatenate(all_w) * 4.0 * np.pi
    return nodes, weights, degree


def _product_nodes(t_nodes, t_weights, n_phi):
    """Tensor rule in the canonical frame (polar axis e_z)."""
    if n_phi % 2 != 0:
        raise ValueError("n_phi must be even (antipodal node symmetry)")
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    w_phi = 2.0 * np.pi / n_phi
    t = np.repeat(t_nodes, n_phi)
    s = np.sqrt(np.maximum(0.0, 1.0 - t * t))
    ph = np.tile(phi, len(t_nodes))
    nodes = np.stack([s * np.cos(ph), s * np.sin(ph), t], axis=1)
    weights = np.repeat(t_weights, n_phi) * w_phi
    return nodes, weights, t


def sphere_quadrature(
    kind: str,
    order: int,
    n_phi: Optional[int] = None,
    exponent: float = 0.0,
) -> SphereQuadrature:
    """Build a sphere rule.

    lebedev_like: `order` = node count from the supported table.
    product_cos_phi: `order` Gauss-Legendre nodes in cos(theta) x n_phi
        (default `order`) uniform azimuthal nodes.
    jacobi_adapted: as the product rule, with the (1 - t^2)^-exponent
        angular weight absorbed; requires 0 <= exponent < 3/2.
    """
    if kind == "lebedev_like":
        nodes, weights, degree = _lebedev(order)
        return SphereQuadrature(
            kind=kind, nodes=nodes, weights=weights, t=nodes[:, 2].copy(),
            degree=degree, aligned=False,
        )
    if n_phi is None:
        n_phi = order
    if order < 2:
        raise ValueError("product rules need at least 2 polar nodes")
    if kind == "product_cos_phi":
        x, w = roots_legendre(order)
        nodes, weights, t = _product_nodes(x, w, n_phi)
        return SphereQuadrature(
            kind=kind, nodes=nodes, weights=weights, t=t,
            degree=min(2 * order - 1, n_phi - 1), aligned=True,
        )
    if kind == "jacobi_adapted":
        if not 0.0 <= exponent < 1.5:
            raise ValueError(f"jacobi_adapted exponent must lie in [0, 3/2), got {exponent}")
        a = 0.5 - exponent
        if a == 0.0:
            x, w = roots_legendre(order)
        else:
            x, w = roots_jacobi(order, a, a)
        # plain-measure weights: the singular factor moves into the weight
        w_plain = w * np.power(1.0 - x * x, -a)
        nodes, weights, t = _product_nodes(x, w_plain, n_phi)
        return SphereQuadrature(
            kind=kind, nodes=nodes, weights=weights, t=t,
            degree=None, aligned=True, exponent=exponent,
        )
    raise ValueError(f"unknown quadrature kind {kind!r}")


def orthonormal_frame(axis: np.ndarray) -> np.ndarray:
    """Rows (e1, e2, axis) completing `axis` to a right-handed frame."""
    n = axis / np.linalg.norm(axis)
    # pick the coordinate axis least aligned with n
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    e1 = np.cross(n, e)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.stack([e1, e2, n])


# ----------------------------------------------------------------------
# snapshot format


def write_snapshot(field: DensityField, path) -> None:
    """Text snapshot: header line then n^3 values in row-major (i,j,k) order."""
    g = field.grid
    with open(path, "w") as fh:
        fh.write(f"fdkin-grid n={g.n} vmax={float(g.v_max)!r}\n")
        buf = io.StringIO()
        for val in field.values.ravel(order="C"):
            buf.write(f"{float(val)!r}\n")
        fh.write(buf.getvalue())


def read_snapshot(path) -> DensityField:
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split()
        if len(parts) != 3 or parts[0] != "fdkin-grid":
            raise ValueError(f"not a snapshot file: header {header!r}")
        n = int(parts[1].split("=", 1)[1])
        v_max = float(parts[2].split("=", 1)[1])
        values = np.loadtxt(fh, dtype=np.float64)
    grid = VelocityGrid(n=n, v_max=v_max)
    return DensityField(grid, values.reshape(n, n, n))
