//! Implicit Newmark time stepping (beta = 1/4, gamma = 1/2) for the damped
//! wave system M u'' + g(t) M u' + K(t) u = F(t) on a Dirichlet mesh.
//!
//! Both stiffness and damping are treated implicitly, so the stiff damping
//! g(t / eps^r) ~ C* t / eps^r costs nothing in step size. The coefficient is
//! sampled at t_{n+1}; warm-started Jacobi-CG solves the step system.
//!
//! Time-integral diagnostics (energy, damping work, the sqrt(t)-weighted
//! velocity norms, pairing probes) accumulate at full step rate; state
//! snapshots are decimated to a bounded number of slices.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_load_dirichlet, assemble_mass_dirichlet, assemble_stiffness_dirichlet,
    solve_spd_from, DirichletMesh, Matrix, Point, SolveOptions, SparseOperator,
};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const NEWMARK_BETA: f64 = 0.25;
const NEWMARK_GAMMA: f64 = 0.5;

/// Scalar products accumulated against the velocity during the march:
/// integral over (sigma_lower, T) of (t / eps^r) (v(t), phi)_L2 dt.
pub struct PairingProbe {
    pub name: String,
    /// Test function sampled at interior nodes.
    pub phi: Vec<f64>,
    pub sigma_lower: f64,
}

/// Everything the integrator needs to know about one run.
pub struct WaveProblem<'a> {
    pub mesh: &'a DirichletMesh,
    /// Effective spatial coefficient at (t, x); the fine solver passes
    /// a(t, x / eps), the homogenized solver the constant-in-space a_hom(t).
    pub coeff_at: &'a (dyn Fn(f64, Point) -> Matrix + Sync),
    pub coeff_time_dependent: bool,
    /// Effective damping g(t) on the macroscopic clock.
    pub damping_at: &'a (dyn Fn(f64) -> f64 + Sync),
    /// None means identically zero forcing.
    pub forcing: Option<&'a (dyn Fn(Point, f64) -> f64 + Sync)>,
    pub v0: &'a (dyn Fn(Point) -> f64 + Sync),
    pub v1: &'a (dyn Fn(Point) -> f64 + Sync),
}

#[derive(Debug, Clone, Copy)]
pub struct TimeIntegration {
    pub horizon: f64,
    pub n_steps: usize,
    /// Snapshot cap; the integrator stores ~max_stored uniformly strided
    /// slices (always including the first and last step).
    pub max_stored: usize,
    pub solver_tol: f64,
}

impl TimeIntegration {
    pub fn new(horizon: f64, n_steps: usize) -> Self {
        Self {
            horizon,
            n_steps,
            max_stored: 1024,
            solver_tol: 1e-11,
        }
    }

    pub fn dense(horizon: f64, n_steps: usize) -> Self {
        Self {
            horizon,
            n_steps,
            max_stored: usize::MAX,
            solver_tol: 1e-12,
        }
    }
}

/// Run metadata echoed into sweep outputs.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct RunMeta {
    pub epsilon: f64,
    pub r_exponent: f64,
    pub c_star: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub store_every: usize,
    pub warnings: Vec<String>,
}

/// Full-rate integral diagnostics snapshotted at the stored times.
#[derive(Debug, Clone, Default)]
pub struct OnlineDiagnostics {
    /// Discrete energy 1/2 v' M v + 1/2 u' K(t) u at stored times.
    pub energy: Vec<f64>,
    /// Cumulative damping work integral int_0^t g ||v||^2.
    pub damping_cumulative: Vec<f64>,
    /// Cumulative int_0^t s ||v(s)||^2 ds (the sqrt(t)-weighted norm squared).
    pub sqrt_t_cumulative: Vec<f64>,
    /// Cumulative int_0^t (s / eps^r) ||v(s)||^2 ds.
    pub scaled_velocity_cumulative: Vec<f64>,
    /// Largest single-step energy increase over the whole run.
    pub max_energy_increase: f64,
    /// Largest |E(t) - E(0)| over the whole run.
    pub max_energy_drift: f64,
    /// Final values of the pairing probes.
    pub probe_integrals: BTreeMap<String, f64>,
}

/// Space-time grid values of one run: displacement and velocity slices at
/// stored times, interior dofs only (the Dirichlet boundary carries none).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: DirichletMesh,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub meta: RunMeta,
    pub diagnostics: OnlineDiagnostics,
}

impl Trajectory {
    pub fn final_u(&self) -> &[f64] {
        self.u.last().expect("trajectory has at least one slice")
    }

    /// Expanded (boundary-padded) slice interpolated linearly in time.
    pub fn slice_at(&self, t: f64) -> Vec<f64> {
        let (lo, hi, theta) = bracket(&self.times, t);
        let mut s = vec![0.0; self.u[lo].len()];
        for i in 0..s.len() {
            s[i] = (1.0 - theta) * self.u[lo][i] + theta * self.u[hi][i];
        }
        s
    }

    /// CSV snapshot at the stored time nearest to each requested time:
    /// columns x0 [, x1], u, v.
    pub fn write_snapshots_csv(&self, path: &Path, at_times: &[f64]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let dim = self.mesh.dim();
        if dim == 1 {
            writeln!(w, "t,x,u,v")?;
        } else {
            writeln!(w, "t,x0,x1,u,v")?;
        }
        for &t in at_times {
            let idx = nearest_index(&self.times, t);
            let tt = self.times[idx];
            for k in 0..self.mesh.n_interior() {
                let p = self.mesh.interior_coord(k);
                if dim == 1 {
                    writeln!(w, "{tt:.16e},{:.16e},{:.16e},{:.16e}", p[0], self.u[idx][k], self.v[idx][k])?;
                } else {
                    writeln!(
                        w,
                        "{tt:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        p[0], p[1], self.u[idx][k], self.v[idx][k]
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::MAX;
    for (i, &ti) in times.iter().enumerate() {
        let d = (ti - t).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

pub(crate) fn bracket(times: &[f64], t: f64) -> (usize, usize, f64) {
    if times.len() == 1 || t <= times[0] {
        return (0, 0, 0.0);
    }
    if t >= times[times.len() - 1] {
        return (times.len() - 1, times.len() - 1, 0.0);
    }
    let mut hi = 1;
    while times[hi] < t {
        hi += 1;
    }
    let lo = hi - 1;
    ((lo), (hi), (t - times[lo]) / (times[hi] - times[lo]))
}

struct StiffnessCache<'a> {
    mesh: &'a DirichletMesh,
    coeff_at: &'a (dyn Fn(f64, Point) -> Matrix + Sync),
    time_dependent: bool,
    cached: Option<SparseOperator>,
}

impl<'a> StiffnessCache<'a> {
    fn new(
        mesh: &'a DirichletMesh,
        coeff_at: &'a (dyn Fn(f64, Point) -> Matrix + Sync),
        time_dependent: bool,
    ) -> Self {
        Self {
            mesh,
            coeff_at,
            time_dependent,
            cached: None,
        }
    }

    fn at(&mut self, t: f64) -> Result<SparseOperator> {
        if !self.time_dependent {
            if self.cached.is_none() {
                let sampler = |x: Point| (self.coeff_at)(0.0, x);
                let (kii, _) = assemble_stiffness_dirichlet(self.mesh, &sampler)?;
                self.cached = Some(kii);
            }
            return Ok(self.cached.clone().unwrap());
        }
        let sampler = |x: Point| (self.coeff_at)(t, x);
        let (kii, _) = assemble_stiffness_dirichlet(self.mesh, &sampler)?;
        Ok(kii)
    }
}

/// Newmark march. Initial displacement and velocity are nodal interpolants
/// of v0 and v1; the initial acceleration solves M a0 = F(0) - K(0) u0 -
/// g(0) M v0.
pub fn integrate(
    problem: &WaveProblem,
    grid: TimeIntegration,
    mut meta: RunMeta,
    probes: &[PairingProbe],
) -> Result<Trajectory> {
    let mesh = problem.mesh;
    let n = mesh.n_interior();
    let n_steps = grid.n_steps.max(1);
    let dt = grid.horizon / n_steps as f64;
    meta.dt = dt;
    meta.n_steps = n_steps;
    let store_every = if grid.max_stored == usize::MAX {
        1
    } else {
        (n_steps / grid.max_stored.max(1)).max(1)
    };
    meta.store_every = store_every;

    let mass = assemble_mass_dirichlet(mesh, &|_| 1.0)?;
    let mut stiffness = StiffnessCache::new(mesh, problem.coeff_at, problem.coeff_time_dependent);

    let mut u: Vec<f64> = mesh.interpolate(|p| (problem.v0)(p));
    let mut v: Vec<f64> = mesh.interpolate(|p| (problem.v1)(p));

    let load_at = |t: f64| -> Vec<f64> {
        match problem.forcing {
            Some(f) => assemble_load_dirichlet(mesh, &|p| f(p, t)),
            None => vec![0.0; n],
        }
    };

    let mut k_current = stiffness.at(0.0)?;
    let g0 = (problem.damping_at)(0.0);
    let f0 = load_at(0.0);
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    // M a0 = F(0) - K(0) u0 - g(0) M v0.
    k_current.matvec(&u, &mut rhs);
    mass.matvec(&v, &mut scratch);
    for i in 0..n {
        rhs[i] = f0[i] - rhs[i] - g0 * scratch[i];
    }
    let mut acc = solve_spd_from(
        &mass,
        &rhs,
        None,
        SolveOptions {
            tol: grid.solver_tol,
            ..Default::default()
        },
    )?;

    // Probe products M phi, fixed over the run.
    let probe_mphi: Vec<Vec<f64>> = probes.iter().map(|p| mass.apply(&p.phi)).collect();
    let mut probe_acc = vec![0.0; probes.len()];
    let eps_pow_r = if meta.epsilon > 0.0 {
        meta.epsilon.powf(meta.r_exponent)
    } else {
        1.0
    };

    let mut diag = OnlineDiagnostics::default();
    let mut times = Vec::new();
    let mut u_slices = Vec::new();
    let mut v_slices = Vec::new();

    let vel_norm2 = |vv: &[f64], m: &SparseOperator| m.quadratic_form(vv);
    let energy_of = |uu: &[f64], vv: &[f64], k: &SparseOperator, m: &SparseOperator| {
        0.5 * vel_norm2(vv, m) + 0.5 * k.quadratic_form(uu)
    };

    let mut energy_prev = energy_of(&u, &v, &k_current, &mass);
    let energy_initial = energy_prev;
    let mut vnorm2_prev = vel_norm2(&v, &mass);
    let mut g_prev = g0;
    let mut probe_dot_prev: Vec<f64> = probe_mphi
        .iter()
        .map(|mphi| v.iter().zip(mphi).map(|(a, b)| a * b).sum::<f64>())
        .collect();

    let store = |step: usize,
                 t: f64,
                 u: &[f64],
                 v: &[f64],
                 energy: f64,
                     d: &mut OnlineDiagnostics,
                     times: &mut Vec<f64>,
                     us: &mut Vec<Vec<f64>>,
                     vs: &mut Vec<Vec<f64>>,
                     damping_cum: f64,
                     sqrt_t_cum: f64,
                     scaled_cum: f64| {
        if step % store_every == 0 || step == n_steps {
            times.push(t);
            us.push(u.to_vec());
            vs.push(v.to_vec());
            d.energy.push(energy);
            d.damping_cumulative.push(damping_cum);
            d.sqrt_t_cumulative.push(sqrt_t_cum);
            d.scaled_velocity_cumulative.push(scaled_cum);
        }
    };

    let mut damping_cum = 0.0;
    let mut sqrt_t_cum = 0.0;
    let mut scaled_cum = 0.0;
    store(
        0, 0.0, &u, &v, energy_prev, &mut diag, &mut times, &mut u_slices, &mut v_slices,
        damping_cum, sqrt_t_cum, scaled_cum,
    );

    let mut u_pred = vec![0.0; n];
    let mut v_pred = vec![0.0; n];
    for step in 1..=n_steps {
        let t_next = step as f64 * dt;
        let k_next = if problem.coeff_time_dependent {
            stiffness.at(t_next)?
        } else {
            k_current.clone()
        };
        let g_next = (problem.damping_at)(t_next);
        if !g_next.is_finite() {
            return Err(Error::Data(format!("non-finite damping at t = {t_next}")));
        }

        // Newmark predictors.
        for i in 0..n {
            u_pred[i] = u[i] + dt * v[i] + dt * dt * (0.5 - NEWMARK_BETA) * acc[i];
            v_pred[i] = v[i] + dt * (1.0 - NEWMARK_GAMMA) * acc[i];
        }

        // System: [ (1 + gamma dt g) M + beta dt^2 K ] a = F - K u_pred - g M v_pred.
        let system = mass.linear_combination(
            1.0 + NEWMARK_GAMMA * dt * g_next,
            &k_next,
            NEWMARK_BETA * dt * dt,
        );
        let f_next = load_at(t_next);
        k_next.matvec(&u_pred, &mut rhs);
        mass.matvec(&v_pred, &mut scratch);
        for i in 0..n {
            rhs[i] = f_next[i] - rhs[i] - g_next * scratch[i];
        }
        acc = solve_spd_from(
            &system,
            &rhs,
            Some(&acc),
            SolveOptions {
                tol: grid.solver_tol,
                ..Default::default()
            },
        )
        .map_err(|e| match e {
            Error::Convergence {
                residual,
                iterations,
                ..
            } => Error::Convergence {
                context: format!("newmark step {step} (t = {t_next:.6e})"),
                residual,
                iterations,
            },
            other => other,
        })?;
        for i in 0..n {
            u[i] = u_pred[i] + NEWMARK_BETA * dt * dt * acc[i];
            v[i] = v_pred[i] + NEWMARK_GAMMA * dt * acc[i];
        }

        // Full-rate diagnostics.
        let vnorm2 = vel_norm2(&v, &mass);
        if !vnorm2.is_finite() {
            return Err(Error::Blowup { step });
        }
        let energy = energy_of(&u, &v, &k_next, &mass);
        diag.max_energy_increase = diag.max_energy_increase.max(energy - energy_prev);
        diag.max_energy_drift = diag.max_energy_drift.max((energy - energy_initial).abs());
        let t_prev = t_next - dt;
        damping_cum += 0.5 * dt * (g_prev * vnorm2_prev + g_next * vnorm2);
        sqrt_t_cum += 0.5 * dt * (t_prev * vnorm2_prev + t_next * vnorm2);
        scaled_cum += 0.5 * dt * ((t_prev / eps_pow_r) * vnorm2_prev + (t_next / eps_pow_r) * vnorm2);
        for (pi, probe) in probes.iter().enumerate() {
            let dot: f64 = v.iter().zip(&probe_mphi[pi]).map(|(a, b)| a * b).sum();
            let w_prev = if t_prev >= probe.sigma_lower { t_prev / eps_pow_r } else { 0.0 };
            let w_next = if t_next >= probe.sigma_lower { t_next / eps_pow_r } else { 0.0 };
            probe_acc[pi] += 0.5 * dt * (w_prev * probe_dot_prev[pi] + w_next * dot);
            probe_dot_prev[pi] = dot;
        }

        store(
            step, t_next, &u, &v, energy, &mut diag, &mut times, &mut u_slices, &mut v_slices,
            damping_cum, sqrt_t_cum, scaled_cum,
        );

        energy_prev = energy;
        vnorm2_prev = vnorm2;
        g_prev = g_next;
        k_current = k_next;
    }

    for (probe, &val) in probes.iter().zip(&probe_acc) {
        diag.probe_integrals.insert(probe.name.clone(), val);
    }

    Ok(Trajectory {
        mesh: mesh.clone(),
        times,
        u: u_slices,
        v: v_slices,
        meta,
        diagnostics: diag,
    })
}

/// Norm time series derived from a trajectory's stored slices plus the
/// full-rate cumulative integrals captured during the march.
#[derive(Debug, Clone)]
pub struct EnergySeries {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub h10_norm: Vec<f64>,
    pub l2_velocity: Vec<f64>,
    pub damping_cumulative: Vec<f64>,
    pub sqrt_t_cumulative: Vec<f64>,
    pub scaled_velocity_cumulative: Vec<f64>,
}

impl EnergySeries {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "t,energy,h10_norm,l2_velocity,damping_cumulative,sqrt_t_cumulative,scaled_velocity_cumulative"
        )?;
        for i in 0..self.t.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t[i],
                self.energy[i],
                self.h10_norm[i],
                self.l2_velocity[i],
                self.damping_cumulative[i],
                self.sqrt_t_cumulative[i],
                self.scaled_velocity_cumulative[i]
            )?;
        }
        Ok(())
    }
}

/// Quadrature-consistent norms at the stored times: energy, H1_0 seminorm,
/// L2 velocity, and the cumulative damping / weighted-velocity integrals.
pub fn energy_diagnostics(traj: &Trajectory) -> Result<EnergySeries> {
    let mesh = &traj.mesh;
    let (laplace, _) = assemble_stiffness_dirichlet(mesh, &|_| crate::fem::IDENTITY)?;
    let mass = assemble_mass_dirichlet(mesh, &|_| 1.0)?;
    let mut h10 = Vec::with_capacity(traj.times.len());
    let mut l2v = Vec::with_capacity(traj.times.len());
    for i in 0..traj.times.len() {
        h10.push(laplace.quadratic_form(&traj.u[i]).max(0.0).sqrt());
        l2v.push(mass.quadratic_form(&traj.v[i]).max(0.0).sqrt());
    }
    Ok(EnergySeries {
        t: traj.times.clone(),
        energy: traj.diagnostics.energy.clone(),
        h10_norm: h10,
        l2_velocity: l2v,
        damping_cumulative: traj.diagnostics.damping_cumulative.clone(),
        sqrt_t_cumulative: traj.diagnostics.sqrt_t_cumulative.clone(),
        scaled_velocity_cumulative: traj.diagnostics.scaled_velocity_cumulative.clone(),
    })
}

/// L2(domain) norm of the Q1 field given by interior nodal values.
pub fn l2_norm(mesh: &DirichletMesh, interior: &[f64]) -> f64 {
    let mass = assemble_mass_dirichlet(mesh, &|_| 1.0).expect("unit weight");
    mass.quadratic_form(interior).max(0.0).sqrt()
}
