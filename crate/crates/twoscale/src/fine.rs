//! Fine-scale solver: the damped wave equation with the eps-oscillating
//! coefficient a(t, x / eps) and the stiff quasi-periodic damping
//! g(t / eps^r), marched by the shared implicit Newmark integrator on a mesh
//! that resolves eps.

use crate::error::Result;
use crate::newmark::{integrate, PairingProbe, RunMeta, TimeIntegration, Trajectory, WaveProblem};
use crate::problem::ProblemSpec;
use crate::fem::{DirichletMesh, Point};

pub use crate::newmark::{energy_diagnostics, l2_norm, EnergySeries};

/// Resolution rules: h <= eps / 10 and dt <= min(h, eps^r) / 10, with dt
/// floored at T / 10^7. Returns (n_space per axis, n_time) meeting them.
pub fn recommended_resolution(spec: &ProblemSpec, space_factor: f64, dt_safety: f64) -> (usize, usize) {
    let eps = spec.epsilon;
    let shortest_side = (0..spec.domain.dim)
        .map(|d| spec.domain.side(d))
        .fold(f64::MAX, f64::min);
    let h_target = eps / space_factor.max(10.0);
    let n_space = (shortest_side / h_target).ceil() as usize;
    let h = shortest_side / n_space as f64;
    let dt_target = (h.min(eps.powf(spec.r_exponent)) / dt_safety.max(10.0))
        .max(spec.horizon / 1e7);
    let n_time = (spec.horizon / dt_target).ceil() as usize;
    (n_space.max(2), n_time.max(1))
}

/// Builds the eps-resolving mesh for a spec (same element count per axis).
pub fn fine_mesh(spec: &ProblemSpec, n_space: usize) -> Result<DirichletMesh> {
    DirichletMesh::new(spec.domain, [n_space, n_space])
}

/// Solves the oscillating problem. Resolution shortfalls do not abort: they
/// are recorded as warnings in the run metadata so sweeps can flag the case.
pub fn solve_fine(spec: &ProblemSpec, n_space: usize, n_time: usize, tol: f64) -> Result<Trajectory> {
    solve_fine_with_probes(spec, n_space, n_time, tol, &[])
}

pub fn solve_fine_with_probes(
    spec: &ProblemSpec,
    n_space: usize,
    n_time: usize,
    tol: f64,
    probes: &[PairingProbe],
) -> Result<Trajectory> {
    let mesh = fine_mesh(spec, n_space)?;
    let eps = spec.epsilon;
    let r = spec.r_exponent;

    let mut warnings = Vec::new();
    let h = mesh.min_spacing();
    if h > eps / 10.0 * (1.0 + 1e-9) {
        warnings.push(format!(
            "under-resolved in space: h = {h:.3e} exceeds eps/10 = {:.3e}",
            eps / 10.0
        ));
    }
    let dt = spec.horizon / n_time as f64;
    let dt_rule = h.min(eps.powf(r)) / 10.0;
    if dt > dt_rule * (1.0 + 1e-9) {
        warnings.push(format!(
            "under-resolved in time: dt = {dt:.3e} exceeds min(h, eps^r)/10 = {dt_rule:.3e}"
        ));
    }

    let meta = RunMeta {
        epsilon: eps,
        r_exponent: r,
        c_star: spec.damping.c_star,
        warnings,
        ..Default::default()
    };

    let coeff = spec.coeff.clone();
    let coeff_at = move |t: f64, x: Point| coeff.sample(t, [x[0] / eps, x[1] / eps]);
    let damping = spec.damping.clone();
    let eps_pow_r = eps.powf(r);
    let damping_at = move |t: f64| damping.eval(t / eps_pow_r);
    let forcing = spec.forcing.clone();
    let forcing_fn = move |p: Point, t: f64| (forcing)(p, t);
    let v0 = spec.v0.clone();
    let v0_fn = move |p: Point| (v0)(p, 0.0);
    let v1 = spec.v1.clone();
    let v1_fn = move |p: Point| (v1)(p, 0.0);

    let problem = WaveProblem {
        mesh: &mesh,
        coeff_at: &coeff_at,
        coeff_time_dependent: spec.coeff.time_dependent,
        damping_at: &damping_at,
        forcing: if spec.forcing_is_zero {
            None
        } else {
            Some(&forcing_fn)
        },
        v0: &v0_fn,
        v1: &v1_fn,
    };
    let mut grid = TimeIntegration::new(spec.horizon, n_time);
    grid.solver_tol = tol;
    integrate(&problem, grid, meta, probes)
}
