//! Numerical homogenization toolkit for damped wave equations with
//! eps x eps^r oscillating coefficients and quasi-periodic damping.
//!
//! The pipeline: validate problem data, solve the cell problems on the
//! periodic unit cell (elliptic or degenerate parabolic depending on the
//! scale ratio and the damping drift), assemble the homogenized matrix and
//! check its qualitative properties, solve both the fine-scale and the
//! homogenized equations, and measure corrector errors and two-scale
//! pairings across epsilon sweeps.

pub mod ahom;
pub mod cell;
pub mod corrector;
pub mod error;
pub mod families;
pub mod fem;
pub mod fine;
pub mod hom;
pub mod newmark;
pub mod problem;
pub mod rng;
pub mod sweep;

pub use ahom::{
    assemble_a_hom, check_ellipticity_sandwich, check_symmetry, formula_skew,
    skew_divergence_nullcheck, HomogenizedMatrix, Regime,
};
pub use cell::{
    cell_l2_norm, log_time_grid, solve_cell_elliptic, solve_cell_elliptic_series,
    solve_cell_parabolic, solve_cell_parabolic_from, CellSolution,
};
pub use corrector::{
    corrector_error, final_distance_to, mean_value_pairing, sup_l2_distance, two_scale_pairing,
    uncorrected_gradient_error, very_weak_pairing, CellTestFactor, MeanValuePairing, PairingField,
    PairingGrid, TwoScalePairing, U1Gradient,
};
pub use error::{Error, Result};
pub use families::{
    CoefficientConfig, DampingConfig, DataConfig, DomainConfig, GPerConfig, ProblemConfig,
    ResolutionConfig,
};
pub use fem::{
    solve_spd, BoxDomain, DirichletMesh, Matrix, PeriodicMesh, Point, SolveOptions, SparseOperator,
};
pub use fine::{
    energy_diagnostics, fine_mesh, l2_norm, recommended_resolution, solve_fine,
    solve_fine_with_probes, EnergySeries,
};
pub use hom::{
    compute_h_residual, g_per_mean, solve_homogenized_periodic, solve_homogenized_quasiperiodic,
    ResidualField,
};
pub use newmark::{PairingProbe, RunMeta, TimeIntegration, Trajectory};
pub use problem::{
    estimate_lambda, estimate_lambda_at, poincare_constant, validate_assumptions,
    CoefficientField, DampingCoefficient, ProblemSpec, ValidationReport,
};
pub use sweep::{
    fit_rates, run_sweep, write_sweep_outputs, CaseResult, CaseStatus, CellPath, RateFit,
    SweepConfig, SweepResult,
};
