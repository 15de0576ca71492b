"""Run configuration: flat key-value files with dotted sections.

One assignment per line, `#` starts a comment, keys are dotted paths
(e.g. ``kernel.alpha = 2.5``).  Unknown keys are rejected; cross-field
constraints (an endpoint-singular kernel needs the singularity-adapted
quadrature) are validated when the objects are built.  The full key
reference lives in the README.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .collision import default_quadrature
from .errors import ConfigurationError
from .geometry import SphereQuadrature, VelocityGrid, build_grid, sphere_quadrature
from .kernels import (
    CollisionKernel,
    make_debye_kernel,
    make_inverse_power_kernel,
    make_monomial_kernel,
    make_rutherford_cutoff_kernel,
)
from .solver import KineticSolver, make_initial_field

# every permissible key, with its documented default (None = required or unset)
SCHEMA: dict[str, Optional[str]] = {
    "kernel.family": None,
    "kernel.alpha": None,
    "kernel.c_alpha": "1.0",
    "kernel.p": None,
    "kernel.const": "1.0",
    "kernel.variant": "full",
    "kernel.beta": None,
    "kernel.gamma": "0.0",
    "kernel.coeffs": None,
    "grid.n": None,
    "grid.vmax": None,
    "quad.kind": "auto",
    "quad.order": None,
    "quad.n_phi": None,
    "init": None,
    "init.amplitude": "0.9",
    "init.separation": "2.2",
    "init.a": "4.0",
    "init.b": "0.45",
    "init.radius": "3.0",
    "init.width": "1.5",
    "T": "20.0",
    "dt_max": "0.5",
    "scheme": "euler",
    "safety": "0.9",
    "output.every": "1",
    "output.dense_until": "0.0",
    "seed": "1",
    "threads": "0",
    "equilibrium.saturation_tol": "1e-6",
    "oracle.nodes": "10",
    "oracle.samples": "1000000",
    "positivity.c": "2.0",
    "positivity.gamma": "0.0",
    "positivity.lambdas": "512,1024,2048,4096,8192",
    "positivity.beta_factors": "1,2,4,8",
    "positivity.sphere_order": "86",
}


@dataclass
class Config:
    values: dict = field(default_factory=dict)

    def has(self, key: str) -> bool:
        return key in self.values or SCHEMA.get(key) is not None

    def raw(self, key: str) -> Optional[str]:
        if key in self.values:
            return self.values[key]
        return SCHEMA.get(key)

    def _require(self, key: str) -> str:
        val = self.raw(key)
        if val is None:
            raise ConfigurationError(f"missing required key {key!r}")
        return val

    def get_float(self, key: str) -> float:
        try:
            return float(self._require(key))
        except ValueError as exc:
            raise ConfigurationError(f"key {key!r}: {exc}") from exc

    def get_int(self, key: str) -> int:
        try:
            return int(self._require(key))
        except ValueError as exc:
            raise ConfigurationError(f"key {key!r}: {exc}") from exc

    def get_str(self, key: str, choices=None) -> str:
        val = self._require(key)
        if choices is not None and val not in choices:
            raise ConfigurationError(f"key {key!r} must be one of {sorted(choices)}, got {val!r}")
        return val

    def get_floats(self, key: str) -> list[float]:
        return [float(tok) for tok in self._require(key).split(",") if tok.strip()]


def parse_config(source) -> Config:
    """Parse a config file path or inline text into a validated Config."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {source!r}: {exc}") from exc
    else:
        text = str(source)
    values: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        if not val:
            raise ConfigurationError(f"line {lineno}: empty value for {key!r}")
        values[key] = val
    return Config(values=values)


# ----------------------------------------------------------------------
# object builders


def build_kernel(cfg: Config) -> CollisionKernel:
    family = cfg.get_str(
        "kernel.family", choices={"inverse_power", "rutherford", "debye", "custom_monomial"}
    )
    try:
        if family == "inverse_power":
            return make_inverse_power_kernel(cfg.get_float("kernel.alpha"),
                                             cfg.get_float("kernel.c_alpha"))
        if family == "rutherford":
            return make_rutherford_cutoff_kernel(
                cfg.get_float("kernel.p"), cfg.get_float("kernel.const"),
                cfg.get_str("kernel.variant", choices={"full", "cos2"}),
            )
        if family == "debye":
            return make_debye_kernel(cfg.get_float("kernel.beta"))
        coeffs = cfg.get_floats("kernel.coeffs")
        return make_monomial_kernel(cfg.get_float("kernel.gamma"), np.array(coeffs))
    except ValueError as exc:
        raise ConfigurationError(f"invalid kernel: {exc}") from exc


def build_grid_from(cfg: Config) -> VelocityGrid:
    try:
        return build_grid(cfg.get_int("grid.n"), cfg.get_float("grid.vmax"))
    except ValueError as exc:
        raise ConfigurationError(f"invalid grid: {exc}") from exc


def build_quadrature(cfg: Config, kernel: CollisionKernel) -> SphereQuadrature:
    kind = cfg.get_str(
        "quad.kind", choices={"auto", "lebedev_like", "product_cos_phi", "jacobi_adapted"}
    )
    order = cfg.get_int("quad.order") if cfg.raw("quad.order") is not None else None
    n_phi = cfg.get_int("quad.n_phi") if cfg.raw("quad.n_phi") is not None else None
    try:
        if kind == "auto":
            if kernel.angular_singularity > 0.0:
                return sphere_quadrature("jacobi_adapted", order or 16, n_phi=n_phi,
                                         exponent=kernel.angular_singularity)
            return sphere_quadrature("lebedev_like", order or 26)
        if kind == "jacobi_adapted":
            return sphere_quadrature("jacobi_adapted", order or 16, n_phi=n_phi,
                                     exponent=kernel.angular_singularity)
        if kind == "product_cos_phi":
            return sphere_quadrature("product_cos_phi", order or 16, n_phi=n_phi)
        quad = sphere_quadrature("lebedev_like", order or 26)
    except ValueError as exc:
        raise ConfigurationError(f"invalid quadrature: {exc}") from exc
    if kernel.angular_singularity > 0.0:
        raise ConfigurationError(
            "kernel has an endpoint-singular angular part; quad.kind must be "
            "jacobi_adapted (or auto)"
        )
    return quad


def build_initial(cfg: Config, grid: VelocityGrid):
    preset = cfg.get_str("init", choices={"two_bump", "ball", "dilute_gauss"})
    if preset == "two_bump":
        return make_initial_field(
            "two_bump", grid,
            amplitude=cfg.get_float("init.amplitude"),
            separation=cfg.get_float("init.separation"),
            a=cfg.get_float("init.a"), b=cfg.get_float("init.b"),
        )
    if preset == "ball":
        return make_initial_field("ball", grid, radius=cfg.get_float("init.radius"))
    return make_initial_field(
        "dilute_gauss", grid,
        amplitude=cfg.get_float("init.amplitude"), width=cfg.get_float("init.width"),
    )


def build_solver(cfg: Config, kernel: CollisionKernel, grid: VelocityGrid,
                 quad: SphereQuadrature) -> KineticSolver:
    return KineticSolver(
        kernel, grid, quad,
        scheme=cfg.get_str("scheme", choices={"euler", "rk2"}),
        dt_max=cfg.get_float("dt_max"),
        safety=cfg.get_float("safety"),
        saturation_tol=cfg.get_float("equilibrium.saturation_tol"),
    )
