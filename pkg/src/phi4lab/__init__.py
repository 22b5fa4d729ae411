"""Numerical laboratory for a mass-constrained focusing quartic field on the torus.

Layers, bottom to top:

    lattice      grids, spectral calculus, energy/mass functionals, weighted norms
    groundstate  constrained variational ground state and its identities
    schrodinger  linearization operators, sector projectors, projected covariances
    manifold     cutoff soliton family, projection, tangent geometry, t-solve
    sampler      free fields, projected Gaussians, Metropolis chains, tiny oracle
    fluctstats   fluctuation field and all statistical verdicts
    checkpoint   resumable chain state files
    cli          command line front end
"""

__version__ = "0.1.0"

from .lattice import (
    TorusGrid,
    ComplexField,
    NormSpec,
    make_grid,
    spectral_derivative,
    real_inner,
    mass_functional,
    hamiltonian,
    weighted_norm,
)
from .groundstate import (
    SolitonProfile,
    SolverConfig,
    closed_form_soliton,
    profile_from_closed_form,
    solve_ground_state,
    lagrange_multiplier,
    energy_report,
)
from .schrodinger import (
    OperatorHandle,
    SectorProjector,
    CovarianceHandle,
    PositivityViolation,
    build_operators,
    ou_operator,
    spectrum_and_zero_modes,
    normal_projectors,
    ou_sector_projectors,
    trivial_projector,
    projected_covariance,
    ou_covariance,
    green_diagnostics,
    variance_pairing,
    restricted_min_rayleigh_matrix_free,
)
from .manifold import (
    ManifoldChart,
    ProjectionResult,
    AmbiguousProjectionError,
    OutOfTubeError,
    approximate_soliton,
    make_chart,
    tangent_frame_and_density,
    project_manifold,
    normal_coordinates,
    weingarten_det,
    decompose_normal_field,
    tplus_solve,
    conditional_mass_weight,
    error_functional,
)
from .sampler import (
    ChainConfig,
    ChainResult,
    SamplerDivergence,
    UnreliableOracleError,
    sample_free_field,
    run_mcmc_chain,
    smallscale_quadrature_oracle,
)
from .fluctstats import (
    TestFunction,
    bump_test_function,
    effective_sample_size,
    char_func_estimate,
    pairing_variance_estimate,
    white_noise_field,
    fluctuation_field,
    chain_fluctuation_pairings,
    concentration_report,
    gaussian_sector_tails,
    free_energy_estimate,
)
from .checkpoint import (
    CheckpointData,
    CheckpointSchemaError,
    CheckpointNumericalError,
    CheckpointVersionError,
    CheckpointTruncatedError,
    write_checkpoint,
    read_checkpoint,
    resume_chain,
)
