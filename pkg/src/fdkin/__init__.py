"""fdkin: solver and verification suite for the homogeneous
Boltzmann-Fermi-Dirac equation at desk scale."""

from .collision import (
    ClosedForm,
    eval_Q,
    eval_gain,
    interpolate_field,
    loss_rate_N,
    mc_estimate_Q,
    pi_F,
    pi_F_cancellation,
)
from .entropy import dissipation_D, entropy_S, gamma, weighted_moment
from .equilibrium import (
    KAPPA_SAT,
    Macroscopics,
    RegularEquilibrium,
    SaturatedEquilibrium,
    classify,
    eval_equilibrium,
    macroscopic,
    solve_fermi_dirac,
)
from .errors import ConfigurationError, DegenerateInputError, FdkinError, NumericalError
from .geometry import (
    DensityField,
    SphereQuadrature,
    VelocityGrid,
    build_grid,
    post_collision,
    read_snapshot,
    sphere_quadrature,
    write_snapshot,
)
from .kernels import (
    CollisionKernel,
    CpSeries,
    angular_integrals,
    cp_series_coefficients,
    eval_kernel,
    make_debye_kernel,
    make_inverse_power_kernel,
    make_monomial_kernel,
    make_rutherford_cutoff_kernel,
    reduce_to_b0,
)
from .positivity import (
    TestFunction,
    counterexample_suite,
    quartic_integral,
    quartic_integral_reduced,
    scan_counterexample,
    sphere_bilinear_form,
)
from .solver import (
    KineticSolver,
    SolverState,
    TimeSeries,
    conserve_project,
    distance_to_equilibrium,
    make_initial_field,
)

__version__ = "0.1.0"
