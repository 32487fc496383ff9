"""Coherent states on the circle: lattice sums, Husimi analysis, propagation.

The package splits into four layers: ``lattice`` evaluates the Gaussian
lattice sums and theta functions everything else reduces to, ``states``
builds coherent states and their expectation values, ``husimi`` handles
phase-space fields, strip zeros, and zero-based reconstruction, and
``semiclassics`` integrates complex classical trajectories into the
winding-summed propagator.  ``cli`` exposes each pipeline as a subcommand.
"""

from .errors import (
    BoundaryZeroError,
    BvpConvergenceError,
    CausticError,
    CotangentPole,
    EvaluationBandError,
    LatticeSumDivergence,
    NearZeroDenominator,
    NumericalError,
    RotorkitError,
    SpectralWindowError,
    StepResolutionError,
    UndeterminedExponent,
    ValidationError,
    WindowOverflow,
    ZeroCountMismatch,
)
from .lattice import GaussSumParams, gauss_lattice_sum, theta3, theta3_zero
from .states import (
    PhasePoint,
    QuadratureSpec,
    Representation,
    StateVector,
    coherent_coefficients,
    coherent_state,
    expect_exp_iphi,
    expect_p,
    identity_resolution_residual,
    ladder_apply,
    ladder_weights,
    norm_squared,
    overlap,
    uncertainty_product,
)
from .husimi import (
    BargmannFunction,
    CylinderGrid,
    ReconstructedBargmann,
    StripZeros,
    bargmann_eval,
    branch_corrected_log_product,
    determine_l,
    find_strip_zeros,
    fit_log_constant,
    hadamard_reconstruct,
    husimi_field,
    husimi_mass,
    sin_hadamard_truncated,
    write_husimi_csv,
)
from .semiclassics import (
    ComplexTrajectory,
    HPartials,
    HolomorphicHamiltonian,
    PropagatorBranch,
    PropagatorOptions,
    PropagatorResult,
    angle_propagator,
    angle_spectral_sum,
    complex_action,
    exact_propagator_spectral,
    h_matrix_element,
    h_partials,
    line_free_propagator,
    semiclassical_propagator,
    solve_complex_bvp,
    stability_X,
)

__version__ = "1.0.0"
