//! Homogenized-equation solvers for both regimes.
//!
//! Without drift (C* = 0) the limit equation is again a damped wave with
//! constant damping <g_per> and diffusion a_hom(t); the same Newmark
//! integrator marches it. With drift the limit degenerates: the solution is
//! frozen at the initial profile, and the interesting object is the residual
//! field h that balances the elliptic equation.

use crate::ahom::HomogenizedMatrix;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_load_dirichlet, assemble_mass_dirichlet, assemble_stiffness_dirichlet,
    solve_spd_from, DirichletMesh, Point, SolveOptions,
};
use crate::newmark::{integrate, RunMeta, TimeIntegration, Trajectory, WaveProblem};
use crate::problem::ProblemSpec;
use std::io::Write;
use std::path::Path;

/// Solves the constant-damping homogenized wave equation (drift-free
/// regime). Only the symmetric part of a_hom enters the operator; the time
/// dependence is linearly interpolated between stored nodes.
pub fn solve_homogenized_periodic(
    a_hom: &HomogenizedMatrix,
    g_mean: f64,
    spec: &ProblemSpec,
    n_space: usize,
    n_time: usize,
    tol: f64,
) -> Result<Trajectory> {
    if spec.damping.c_star != 0.0 {
        return Err(Error::Config(
            "drift-free homogenized solver called with C* != 0".into(),
        ));
    }
    let mesh = DirichletMesh::new(spec.domain, [n_space, n_space])?;
    let hm = a_hom.clone();
    let dim = hm.dim;
    let coeff_at = move |t: f64, _: Point| {
        let a = hm.at(t);
        let mut s = [[0.0; 2]; 2];
        for r in 0..dim {
            for c in 0..dim {
                s[r][c] = 0.5 * (a[r][c] + a[c][r]);
            }
        }
        s
    };
    let damping_at = move |_: f64| g_mean;
    let forcing = spec.forcing.clone();
    let forcing_fn = move |p: Point, t: f64| (forcing)(p, t);
    let v0 = spec.v0.clone();
    let v0_fn = move |p: Point| (v0)(p, 0.0);
    let v1 = spec.v1.clone();
    let v1_fn = move |p: Point| (v1)(p, 0.0);
    let problem = WaveProblem {
        mesh: &mesh,
        coeff_at: &coeff_at,
        coeff_time_dependent: a_hom.n_nodes() > 1,
        damping_at: &damping_at,
        forcing: if spec.forcing_is_zero {
            None
        } else {
            Some(&forcing_fn)
        },
        v0: &v0_fn,
        v1: &v1_fn,
    };
    let meta = RunMeta {
        epsilon: 0.0,
        r_exponent: spec.r_exponent,
        c_star: 0.0,
        ..Default::default()
    };
    let mut grid = TimeIntegration::new(spec.horizon, n_time);
    grid.solver_tol = tol;
    integrate(&problem, grid, meta, &[])
}

/// Mean of the periodic damping part by composite Simpson quadrature.
pub fn g_per_mean(spec: &ProblemSpec) -> f64 {
    spec.damping.periodic_mean(1000)
}

/// The drift regime freezes the limit at the initial profile: u(t) = v0,
/// velocity 0, bitwise constant across the stored grid.
pub fn solve_homogenized_quasiperiodic(
    spec: &ProblemSpec,
    n_space: usize,
    n_stored: usize,
) -> Result<Trajectory> {
    if spec.damping.c_star == 0.0 {
        return Err(Error::Config(
            "drift regime solver called with C* = 0".into(),
        ));
    }
    let mesh = DirichletMesh::new(spec.domain, [n_space, n_space])?;
    let v0 = spec.v0.clone();
    let profile = mesh.interpolate(|p| (v0)(p, 0.0));
    let zero = vec![0.0; mesh.n_interior()];
    let n_slices = n_stored.max(2);
    let times: Vec<f64> = (0..n_slices)
        .map(|i| spec.horizon * i as f64 / (n_slices - 1) as f64)
        .collect();
    let u: Vec<Vec<f64>> = (0..n_slices).map(|_| profile.clone()).collect();
    let v: Vec<Vec<f64>> = (0..n_slices).map(|_| zero.clone()).collect();
    let meta = RunMeta {
        epsilon: 0.0,
        r_exponent: spec.r_exponent,
        c_star: spec.damping.c_star,
        dt: spec.horizon / (n_slices - 1) as f64,
        n_steps: n_slices - 1,
        store_every: 1,
        warnings: Vec::new(),
    };
    // The frozen state has zero velocity, so every cumulative velocity
    // integral vanishes exactly; the energy column carries the constant
    // H1_0 elastic energy (the trajectory has no dynamic operator).
    let (laplace, _) = assemble_stiffness_dirichlet(&mesh, &|_| crate::fem::IDENTITY)?;
    let elastic = 0.5 * laplace.quadratic_form(&profile);
    let diagnostics = crate::newmark::OnlineDiagnostics {
        energy: vec![elastic; n_slices],
        damping_cumulative: vec![0.0; n_slices],
        sqrt_t_cumulative: vec![0.0; n_slices],
        scaled_velocity_cumulative: vec![0.0; n_slices],
        ..Default::default()
    };
    Ok(Trajectory {
        mesh,
        times,
        u,
        v,
        meta,
        diagnostics,
    })
}

/// Nodal residual field per time node in the drift regime.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub mesh: DirichletMesh,
    pub times: Vec<f64>,
    /// Interior nodal values of h at each time node.
    pub values: Vec<Vec<f64>>,
}

impl ResidualField {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let dim = self.mesh.dim();
        if dim == 1 {
            writeln!(w, "t,x,h")?;
        } else {
            writeln!(w, "t,x0,x1,h")?;
        }
        for (i, &t) in self.times.iter().enumerate() {
            for k in 0..self.mesh.n_interior() {
                let p = self.mesh.interior_coord(k);
                if dim == 1 {
                    writeln!(w, "{t:.16e},{:.16e},{:.16e}", p[0], self.values[i][k])?;
                } else {
                    writeln!(
                        w,
                        "{t:.16e},{:.16e},{:.16e},{:.16e}",
                        p[0], p[1], self.values[i][k]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Reconstructs h from the frozen limit: for each time node, h is the mass
/// (L2) Riesz representative of phi -> (f, phi) - (a_hom grad v0, grad phi),
/// scaled by 1 / C*, so that (h, phi)_L2 reproduces the residual functional
/// on the FE space.
pub fn compute_h_residual(
    a_hom: &HomogenizedMatrix,
    spec: &ProblemSpec,
    mesh: &DirichletMesh,
    times: &[f64],
    tol: f64,
) -> Result<ResidualField> {
    let c_star = spec.damping.c_star;
    if c_star == 0.0 {
        return Err(Error::Config("h is defined only in the drift regime".into()));
    }
    let v0 = spec.v0.clone();
    let v0_vec = mesh.interpolate(|p| (v0)(p, 0.0));
    let mass = assemble_mass_dirichlet(mesh, &|_| 1.0)?;
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let a = a_hom.at(t);
        let (k_hom, _) = assemble_stiffness_dirichlet(mesh, &|_| a)?;
        let mut rhs = if spec.forcing_is_zero {
            vec![0.0; mesh.n_interior()]
        } else {
            let forcing = spec.forcing.clone();
            assemble_load_dirichlet(mesh, &|p| (forcing)(p, t))
        };
        let ku = k_hom.apply(&v0_vec);
        for i in 0..rhs.len() {
            rhs[i] = (rhs[i] - ku[i]) / c_star;
        }
        let h = solve_spd_from(
            &mass,
            &rhs,
            None,
            SolveOptions {
                tol,
                ..Default::default()
            },
        )?;
        values.push(h);
    }
    Ok(ResidualField {
        mesh: mesh.clone(),
        times: times.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::BoxDomain;
    use crate::problem::{CoefficientField, DampingCoefficient};
    use crate::fine::solve_fine;

    const PI: f64 = std::f64::consts::PI;

    fn constant_hm(value: f64) -> HomogenizedMatrix {
        HomogenizedMatrix {
            dim: 1,
            time_nodes: vec![0.0],
            matrices: vec![[[value, 0.0], [0.0, value]]],
        }
    }

    fn sine_spec(c_star: f64) -> ProblemSpec {
        ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::new(c_star, |_| 1.0),
            1.0,
            1.0,
            1.0,
            BoxDomain::unit(1),
            |p, t| PI * PI * (PI * p[0]).sin() * (-t).exp(),
            |p, _| (PI * p[0]).sin(),
            |p, _| -(PI * p[0]).sin(),
        )
        .unwrap()
    }

    #[test]
    fn identity_hom_matches_fine_solver_bitwise() {
        // a_hom = I and g_per = 1 reduce to exactly the fine solver's
        // systems: the trajectories agree to the bit.
        let spec = sine_spec(0.0);
        let fine = solve_fine(&spec, 32, 64, 1e-12).unwrap();
        let hom = solve_homogenized_periodic(&constant_hm(1.0), 1.0, &spec, 32, 64, 1e-12).unwrap();
        for (a, b) in fine.u.iter().zip(&hom.u) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn g_per_mean_of_shifted_sinusoid() {
        let spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::new(0.0, |s| 2.0 + (2.0 * PI * s).sin()),
            0.5,
            1.0,
            1.0,
            BoxDomain::unit(1),
            |_, _| 0.0,
            |_, _| 0.0,
            |_, _| 0.0,
        )
        .unwrap();
        assert!((g_per_mean(&spec) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn drift_regime_is_frozen_at_the_initial_profile() {
        let spec = sine_spec(1.0);
        let traj = solve_homogenized_quasiperiodic(&spec, 24, 9).unwrap();
        let first = &traj.u[0];
        for slice in &traj.u {
            for (a, b) in slice.iter().zip(first) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert!(traj.v.iter().flatten().all(|&x| x == 0.0));
        // v0 = 0 gives the zero trajectory.
        let zero_spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::new(1.0, |_| 1.0),
            0.5,
            2.0,
            1.0,
            BoxDomain::unit(1),
            |_, _| 0.0,
            |_, _| 0.0,
            |_, _| 0.0,
        )
        .unwrap();
        let traj = solve_homogenized_quasiperiodic(&zero_spec, 16, 3).unwrap();
        assert!(traj.u.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn residual_vanishes_for_balanced_forcing() {
        // f = -div(a_hom grad v0) = a_hom pi^2 sin(pi x): h ~ 0.
        let a_val = 0.5;
        let spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::new(1.0, |_| 1.0),
            0.5,
            2.0,
            1.0,
            BoxDomain::unit(1),
            move |p, _| a_val * PI * PI * (PI * p[0]).sin(),
            |p, _| (PI * p[0]).sin(),
            |_, _| 0.0,
        )
        .unwrap();
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [64, 0]).unwrap();
        let h = compute_h_residual(&constant_hm(a_val), &spec, &mesh, &[0.0, 0.5, 1.0], 1e-12)
            .unwrap();
        for slice in &h.values {
            for &v in slice {
                // Interpolation vs quadrature mismatch is O(h^2) * pi^2 scale.
                assert!(v.abs() < 5e-2, "residual {v}");
            }
        }
    }

    #[test]
    fn residual_equals_forcing_for_zero_profile() {
        // v0 = 0: h = f / C* as a nodal field, up to O(h^2).
        let c_star = 2.0;
        let spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::new(c_star, |_| 1.0),
            0.5,
            2.0,
            1.0,
            BoxDomain::unit(1),
            |p, _| (PI * p[0]).sin(),
            |_, _| 0.0,
            |_, _| 0.0,
        )
        .unwrap();
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [64, 0]).unwrap();
        let h = compute_h_residual(&constant_hm(0.5), &spec, &mesh, &[0.3], 1e-12).unwrap();
        let hh = mesh.min_spacing();
        for k in 0..mesh.n_interior() {
            let expect = (PI * mesh.interior_coord(k)[0]).sin() / c_star;
            assert!(
                (h.values[0][k] - expect).abs() < 10.0 * hh * hh,
                "node {k}: {} vs {expect}",
                h.values[0][k]
            );
        }
    }

    #[test]
    fn residual_substitutes_back_consistently() {
        // Dual-norm check: K v0 + C* M h - F = 0 up to solver tolerance.
        let spec = sine_spec(1.5);
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [48, 0]).unwrap();
        let hm = constant_hm(0.5);
        let h = compute_h_residual(&hm, &spec, &mesh, &[0.4], 1e-13).unwrap();
        let (k_hom, _) = assemble_stiffness_dirichlet(&mesh, &|_| hm.at(0.4)).unwrap();
        let mass = assemble_mass_dirichlet(&mesh, &|_| 1.0).unwrap();
        let v0 = mesh.interpolate(|p| (spec.v0)(p, 0.0));
        let forcing = spec.forcing.clone();
        let f_vec = assemble_load_dirichlet(&mesh, &|p| (forcing)(p, 0.4));
        let ku = k_hom.apply(&v0);
        let mh = mass.apply(&h.values[0]);
        let resid: f64 = (0..mesh.n_interior())
            .map(|i| (ku[i] + 1.5 * mh[i] - f_vec[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = f_vec.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(resid <= 1e-10 * scale.max(1.0), "residual {resid}");
    }
}
