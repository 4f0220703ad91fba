//! Two-scale expansion reconstruction and the convergence diagnostics built
//! on it: corrector error, trajectory distances, the mean-value pairing, and
//! the weak / very-weak two-scale pairings.
//!
//! All pairings integrate on the fine mesh's Gauss points with the
//! oscillating factors evaluated exactly there (no pre-projection onto the
//! mesh), and trapezoid weights over the stored time slices.

use crate::cell::CellSolution;
use crate::error::{Error, Result};
use crate::fem::mesh::{wrap_point, Point};
use crate::fem::quad::reference_rule;
use crate::fem::{assemble_mass_dirichlet, DirichletMesh};
use crate::newmark::Trajectory;
use crate::problem::ProblemSpec;

/// Evaluator of the corrected gradient grad u0(x, t) + grad_y u1(x, t, x/eps)
/// with u1 = sum_k d_{x_k} u0 Phi_k.
pub struct U1Gradient<'a> {
    pub hom: &'a Trajectory,
    pub cells: &'a [CellSolution],
    pub epsilon: f64,
}

impl<'a> U1Gradient<'a> {
    pub fn new(hom: &'a Trajectory, cells: &'a [CellSolution], epsilon: f64) -> Result<Self> {
        let dim = hom.mesh.dim();
        if !cells.is_empty() && cells.len() != dim {
            return Err(Error::Data(format!(
                "need {dim} cell solutions (one per direction), got {}",
                cells.len()
            )));
        }
        if epsilon <= 0.0 {
            return Err(Error::Data(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            hom,
            cells,
            epsilon,
        })
    }

    /// Binds a time: interpolates the macroscopic slice and fixes the cell
    /// blend, so spatial evaluations are cheap.
    pub fn at_time(&self, t: f64) -> U1GradientSlice<'_> {
        let interior = self.hom.slice_at(t);
        let full = self.hom.mesh.expand(&interior);
        let blends = self.cells.iter().map(|c| c.time_blend(t)).collect();
        U1GradientSlice {
            parent: self,
            full,
            blends,
        }
    }
}

pub struct U1GradientSlice<'a> {
    parent: &'a U1Gradient<'a>,
    full: Vec<f64>,
    blends: Vec<(usize, usize, f64)>,
}

impl U1GradientSlice<'_> {
    /// Corrected gradient at x; errors outside the macroscopic domain.
    pub fn eval(&self, x: Point) -> Result<Point> {
        let mesh = &self.parent.hom.mesh;
        if !mesh.domain.contains(x) {
            return Err(Error::Data(format!(
                "evaluation point ({}, {}) outside the domain",
                x[0], x[1]
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    pub fn eval_unchecked(&self, x: Point) -> Point {
        let mesh = &self.parent.hom.mesh;
        let dim = mesh.dim();
        let grad_u0 = mesh.eval_full_gradient(&self.full, x);
        let mut out = grad_u0;
        if self.parent.cells.is_empty() {
            return out;
        }
        let eps = self.parent.epsilon;
        let y = wrap_point([x[0] / eps, x[1] / eps], dim);
        for (k, cell) in self.parent.cells.iter().enumerate() {
            let gphi = cell.gradient_with_blend(self.blends[k], y);
            for d in 0..dim {
                out[d] += grad_u0[k] * gphi[d];
            }
        }
        out
    }
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    w[0] = 0.5 * (times[1] - times[0]);
    w[n - 1] = 0.5 * (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (times[i + 1] - times[i - 1]);
    }
    w
}

fn check_shared_domain(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.mesh.domain != b.mesh.domain {
        return Err(Error::Data(
            "trajectories live on different domains".into(),
        ));
    }
    Ok(())
}

/// Space-time L2 norm squared of grad u_eps - (grad u0 + grad_y u1), on the
/// fine mesh's Gauss points and the fine trajectory's stored times. The fine
/// gradient is the recovered (nodally averaged) one: with the mesh tied to
/// eps (h = eps / c), the raw element gradients misrepresent the oscillation
/// by a fixed relative error and would floor the metric.
pub fn corrector_error(fine: &Trajectory, u1: &U1Gradient) -> Result<f64> {
    check_shared_domain(fine, u1.hom)?;
    let mesh = &fine.mesh;
    let dim = mesh.dim();
    let rule = reference_rule(dim);
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let vol: f64 = (0..dim).map(|d| spacing[d]).product();
    let weights = trapezoid_weights(&fine.times);
    let mut total = 0.0;
    for (i, (&t, wt)) in fine.times.iter().zip(&weights).enumerate() {
        let full = mesh.expand(&fine.u[i]);
        let recovered = mesh.recovered_gradients(&full);
        let slice = u1.at_time(t);
        let mut space_acc = 0.0;
        for e in 0..mesh.n_elements() {
            let origin = mesh.element_origin(e);
            for (xi, wq) in &rule {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = origin[d] + xi[d] * spacing[d];
                }
                let g_fine = mesh.eval_recovered(&recovered, x);
                let g_corr = slice.eval_unchecked(x);
                let mut diff2 = 0.0;
                for d in 0..dim {
                    let dd = g_fine[d] - g_corr[d];
                    diff2 += dd * dd;
                }
                space_acc += wq * vol * diff2;
            }
        }
        total += wt * space_acc;
    }
    Ok(total)
}

/// Same quadrature against the uncorrected macroscopic gradient alone.
pub fn uncorrected_gradient_error(fine: &Trajectory, hom: &Trajectory) -> Result<f64> {
    let u1 = U1Gradient::new(hom, &[], 1.0)?;
    corrector_error(fine, &u1)
}

/// sup over stored fine times of || u_eps(t) - u0(t) ||_{L2}, with the
/// macroscopic run interpolated in space and time onto the fine grid.
pub fn sup_l2_distance(fine: &Trajectory, hom: &Trajectory) -> Result<f64> {
    check_shared_domain(fine, hom)?;
    let mass = assemble_mass_dirichlet(&fine.mesh, &|_| 1.0)?;
    let mut sup: f64 = 0.0;
    for (i, &t) in fine.times.iter().enumerate() {
        let hom_full = hom.mesh.expand(&hom.slice_at(t));
        let diff: Vec<f64> = (0..fine.mesh.n_interior())
            .map(|k| fine.u[i][k] - hom.mesh.eval_full(&hom_full, fine.mesh.interior_coord(k)))
            .collect();
        sup = sup.max(mass.quadratic_form(&diff).max(0.0).sqrt());
    }
    Ok(sup)
}

/// || u(T) - profile ||_{L2} against a closed-form profile.
pub fn final_distance_to(traj: &Trajectory, profile: &dyn Fn(Point) -> f64) -> Result<f64> {
    let mass = assemble_mass_dirichlet(&traj.mesh, &|_| 1.0)?;
    let diff: Vec<f64> = (0..traj.mesh.n_interior())
        .map(|k| traj.final_u()[k] - profile(traj.mesh.interior_coord(k)))
        .collect();
    Ok(mass.quadratic_form(&diff).max(0.0).sqrt())
}

/// Quadrature grid for pairings that do not come from a trajectory.
pub struct PairingGrid {
    pub mesh: DirichletMesh,
    pub horizon: f64,
    pub n_time: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct MeanValuePairing {
    /// int int w(x/eps, t/eps^r) phi dx dt.
    pub pairing: f64,
    /// mean of w over the cell and period, times int int phi dx dt.
    pub companion: f64,
    pub mean_w: f64,
}

impl MeanValuePairing {
    pub fn gap(&self) -> f64 {
        (self.pairing - self.companion).abs()
    }
}

/// Cell-and-period average of w by tensor Gauss quadrature.
pub fn cell_period_mean(w: &dyn Fn(Point, f64) -> f64, dim: usize, res: usize) -> f64 {
    let rule = reference_rule(1);
    let h = 1.0 / res as f64;
    let mut mean = 0.0;
    // Integrate over y in the cell and s in the period with the tensor rule.
    let mut y_points: Vec<(Point, f64)> = Vec::new();
    match dim {
        1 => {
            for i in 0..res {
                for (xi, wq) in &rule {
                    y_points.push(([(i as f64 + xi[0]) * h, 0.0], wq * h));
                }
            }
        }
        _ => {
            for j in 0..res {
                for i in 0..res {
                    for (xi, wi) in &rule {
                        for (eta, wj) in &rule {
                            y_points.push((
                                [(i as f64 + xi[0]) * h, (j as f64 + eta[0]) * h],
                                wi * wj * h * h,
                            ));
                        }
                    }
                }
            }
        }
    }
    for s_panel in 0..res {
        for (si, ws) in &rule {
            let s = (s_panel as f64 + si[0]) * h;
            for (y, wy) in &y_points {
                mean += ws * h * wy * w(*y, s);
            }
        }
    }
    mean
}

/// Pairing of an oscillating periodic factor against a macroscopic test
/// function, with its predicted mean-value limit.
pub fn mean_value_pairing(
    w: &dyn Fn(Point, f64) -> f64,
    phi: &dyn Fn(Point, f64) -> f64,
    epsilon: f64,
    r: f64,
    grid: &PairingGrid,
) -> MeanValuePairing {
    let mesh = &grid.mesh;
    let dim = mesh.dim();
    let rule = reference_rule(dim);
    let trule = reference_rule(1);
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let vol: f64 = (0..dim).map(|d| spacing[d]).product();
    let dt = grid.horizon / grid.n_time as f64;
    let eps_r = epsilon.powf(r);

    let mut pairing = 0.0;
    let mut phi_integral = 0.0;
    for tp in 0..grid.n_time {
        for (tq, wtq) in &trule {
            let t = (tp as f64 + tq[0]) * dt;
            let s = crate::fem::mesh::wrap_unit(t / eps_r);
            for e in 0..mesh.n_elements() {
                let origin = mesh.element_origin(e);
                for (xi, wq) in &rule {
                    let mut x = [0.0; 2];
                    for d in 0..dim {
                        x[d] = origin[d] + xi[d] * spacing[d];
                    }
                    let y = wrap_point([x[0] / epsilon, x[1] / epsilon], dim);
                    let weight = wtq * dt * wq * vol;
                    let pv = phi(x, t);
                    pairing += weight * w(y, s) * pv;
                    phi_integral += weight * pv;
                }
            }
        }
    }
    let mean_w = cell_period_mean(w, dim, 256);
    MeanValuePairing {
        pairing,
        companion: mean_w * phi_integral,
        mean_w,
    }
}

/// Which space-time field enters the weak two-scale pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingField {
    /// grad u_eps.
    Gradient,
    /// a(t, x/eps) grad u_eps.
    Flux,
}

/// Oscillating test factor V(y).
pub enum CellTestFactor<'a> {
    /// V = grad_y b with b smooth periodic (mean irrelevant).
    GradientOf(&'a dyn Fn(Point) -> Point),
    /// V = b e_k with b mean-zero periodic.
    Along(usize, &'a dyn Fn(Point) -> f64),
}

#[derive(Debug, Clone, Copy)]
pub struct TwoScalePairing {
    pub pairing: f64,
    pub predicted: f64,
}

impl TwoScalePairing {
    pub fn gap(&self) -> f64 {
        (self.pairing - self.predicted).abs()
    }
}

/// Weak space-time two-scale pairing of a trajectory field against the
/// separable test phi(x) psi(t) V(x / eps), plus the limit predicted from
/// the homogenized run and the cell solutions.
pub fn two_scale_pairing(
    fine: &Trajectory,
    spec: &ProblemSpec,
    field: PairingField,
    test: &CellTestFactor,
    phi: &dyn Fn(Point) -> f64,
    psi: &dyn Fn(f64) -> f64,
    hom: &Trajectory,
    cells: &[CellSolution],
) -> Result<TwoScalePairing> {
    check_shared_domain(fine, hom)?;
    let eps = spec.epsilon;
    let dim = fine.mesh.dim();

    let eval_test = |y: Point| -> Point {
        match test {
            CellTestFactor::GradientOf(gb) => gb(y),
            CellTestFactor::Along(k, b) => {
                let mut v = [0.0; 2];
                v[*k] = b(y);
                v
            }
        }
    };

    // Pairing side: fine Gauss points, oscillating factor evaluated exactly.
    let mesh = &fine.mesh;
    let rule = reference_rule(dim);
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let vol: f64 = (0..dim).map(|d| spacing[d]).product();
    let weights = trapezoid_weights(&fine.times);
    let mut pairing = 0.0;
    for (i, (&t, wt)) in fine.times.iter().zip(&weights).enumerate() {
        let full = mesh.expand(&fine.u[i]);
        let psi_t = psi(t);
        if psi_t == 0.0 {
            continue;
        }
        for e in 0..mesh.n_elements() {
            let origin = mesh.element_origin(e);
            for (xi, wq) in &rule {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = origin[d] + xi[d] * spacing[d];
                }
                let g = mesh.eval_full_gradient(&full, x);
                let y = wrap_point([x[0] / eps, x[1] / eps], dim);
                let v = eval_test(y);
                let value = match field {
                    PairingField::Gradient => {
                        (0..dim).map(|d| g[d] * v[d]).sum::<f64>()
                    }
                    PairingField::Flux => {
                        let a = spec.coeff.sample(t, y);
                        let mut acc = 0.0;
                        for d1 in 0..dim {
                            let mut flux = 0.0;
                            for d2 in 0..dim {
                                flux += a[d1][d2] * g[d2];
                            }
                            acc += flux * v[d1];
                        }
                        acc
                    }
                };
                pairing += wt * wq * vol * value * phi(x) * psi_t;
            }
        }
    }

    // Predicted limit: int int sum_k d_k u0 c_k(t) phi psi, with the cell
    // integral c_k(t) = int A(t,y) (grad Phi_k + e_k) . V(y) dy.
    let cmesh = &cells[0].mesh;
    let crule = reference_rule(dim);
    let ch = cmesh.h();
    let cvol = ch.powi(dim as i32);
    let cell_coupling = |t: f64| -> Vec<f64> {
        let blends: Vec<_> = cells.iter().map(|c| c.time_blend(t)).collect();
        let mut c_k = vec![0.0; dim];
        for e in 0..cmesh.n_elements() {
            let origin = cmesh.element_origin(e);
            for (xi, wq) in &crule {
                let mut y = [0.0; 2];
                for d in 0..dim {
                    y[d] = origin[d] + xi[d] * ch;
                }
                let v = eval_test(y);
                for (k, cell) in cells.iter().enumerate() {
                    let mut grad = cell.gradient_with_blend(blends[k], y);
                    grad[k] += 1.0;
                    let value = match field {
                        PairingField::Gradient => {
                            (0..dim).map(|d| grad[d] * v[d]).sum::<f64>()
                        }
                        PairingField::Flux => {
                            let a = spec.coeff.sample(t, y);
                            let mut acc = 0.0;
                            for d1 in 0..dim {
                                let mut flux = 0.0;
                                for d2 in 0..dim {
                                    flux += a[d1][d2] * grad[d2];
                                }
                                acc += flux * v[d1];
                            }
                            acc
                        }
                    };
                    c_k[k] += wq * cvol * value;
                }
            }
        }
        c_k
    };

    let hmesh = &hom.mesh;
    let hrule = reference_rule(dim);
    let hspacing = [hmesh.spacing(0), if dim == 2 { hmesh.spacing(1) } else { 1.0 }];
    let hvol: f64 = (0..dim).map(|d| hspacing[d]).product();
    let hweights = trapezoid_weights(&hom.times);
    let time_invariant = cells.iter().all(|c| c.n_time_nodes() == 1) && !spec.coeff.time_dependent;
    let c_k_frozen = if time_invariant { Some(cell_coupling(0.0)) } else { None };
    let mut predicted = 0.0;
    for (i, (&t, wt)) in hom.times.iter().zip(&hweights).enumerate() {
        let psi_t = psi(t);
        if psi_t == 0.0 {
            continue;
        }
        let c_k = match &c_k_frozen {
            Some(c) => c.clone(),
            None => cell_coupling(t),
        };
        let full = hmesh.expand(&hom.u[i]);
        for e in 0..hmesh.n_elements() {
            let origin = hmesh.element_origin(e);
            for (xi, wq) in &hrule {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = origin[d] + xi[d] * hspacing[d];
                }
                let g = hmesh.eval_full_gradient(&full, x);
                let coupling: f64 = (0..dim).map(|k| g[k] * c_k[k]).sum();
                predicted += wt * wq * hvol * coupling * phi(x) * psi_t;
            }
        }
    }

    Ok(TwoScalePairing { pairing, predicted })
}

/// Very weak pairing of u_eps / eps against phi(x) b(x/eps) psi(t) with b
/// mean-zero, plus the limit predicted from u1 = sum d_k u0 Phi_k.
pub fn very_weak_pairing(
    fine: &Trajectory,
    b: &dyn Fn(Point) -> f64,
    phi: &dyn Fn(Point) -> f64,
    psi: &dyn Fn(f64) -> f64,
    epsilon: f64,
    hom: &Trajectory,
    cells: &[CellSolution],
) -> Result<TwoScalePairing> {
    check_shared_domain(fine, hom)?;
    let dim = fine.mesh.dim();
    let b_mean = cell_period_mean(&|y, _| b(y), dim, 256);
    if b_mean.abs() > 1e-10 {
        return Err(Error::Data(format!(
            "very weak pairing needs a mean-zero oscillating factor; <b> = {b_mean:.3e}"
        )));
    }

    let mesh = &fine.mesh;
    let rule = reference_rule(dim);
    let spacing = [mesh.spacing(0), if dim == 2 { mesh.spacing(1) } else { 1.0 }];
    let vol: f64 = (0..dim).map(|d| spacing[d]).product();
    let weights = trapezoid_weights(&fine.times);
    let mut pairing = 0.0;
    for (i, (&t, wt)) in fine.times.iter().zip(&weights).enumerate() {
        let psi_t = psi(t);
        if psi_t == 0.0 {
            continue;
        }
        let full = mesh.expand(&fine.u[i]);
        for e in 0..mesh.n_elements() {
            let origin = mesh.element_origin(e);
            for (xi, wq) in &rule {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = origin[d] + xi[d] * spacing[d];
                }
                let y = wrap_point([x[0] / epsilon, x[1] / epsilon], dim);
                let u = mesh.eval_full(&full, x);
                pairing += wt * wq * vol * (u / epsilon) * phi(x) * b(y) * psi_t;
            }
        }
    }

    // Predicted: int int sum_k d_k u0 (int Phi_k(t, y) b(y) dy) phi psi.
    let cmesh = &cells[0].mesh;
    let crule = reference_rule(dim);
    let ch = cmesh.h();
    let cvol = ch.powi(dim as i32);
    let phi_b_integrals = |t: f64| -> Vec<f64> {
        let blends: Vec<_> = cells.iter().map(|c| c.time_blend(t)).collect();
        let mut ints = vec![0.0; cells.len()];
        for e in 0..cmesh.n_elements() {
            let origin = cmesh.element_origin(e);
            for (xi, wq) in &crule {
                let mut y = [0.0; 2];
                for d in 0..dim {
                    y[d] = origin[d] + xi[d] * ch;
                }
                let bv = b(y);
                for (k, cell) in cells.iter().enumerate() {
                    ints[k] += wq * cvol * cell.value_with_blend(blends[k], y) * bv;
                }
            }
        }
        ints
    };
    let time_invariant = cells.iter().all(|c| c.n_time_nodes() == 1);
    let frozen = if time_invariant { Some(phi_b_integrals(0.0)) } else { None };

    let hmesh = &hom.mesh;
    let hrule = reference_rule(dim);
    let hspacing = [hmesh.spacing(0), if dim == 2 { hmesh.spacing(1) } else { 1.0 }];
    let hvol: f64 = (0..dim).map(|d| hspacing[d]).product();
    let hweights = trapezoid_weights(&hom.times);
    let mut predicted = 0.0;
    for (i, (&t, wt)) in hom.times.iter().zip(&hweights).enumerate() {
        let psi_t = psi(t);
        if psi_t == 0.0 {
            continue;
        }
        let ints = match &frozen {
            Some(v) => v.clone(),
            None => phi_b_integrals(t),
        };
        let full = hmesh.expand(&hom.u[i]);
        for e in 0..hmesh.n_elements() {
            let origin = hmesh.element_origin(e);
            for (xi, wq) in &hrule {
                let mut x = [0.0; 2];
                for d in 0..dim {
                    x[d] = origin[d] + xi[d] * hspacing[d];
                }
                let g = hmesh.eval_full_gradient(&full, x);
                let coupling: f64 = (0..cells.len()).map(|k| g[k] * ints[k]).sum();
                predicted += wt * wq * hvol * coupling * phi(x) * psi_t;
            }
        }
    }

    Ok(TwoScalePairing { pairing, predicted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_elliptic;
    use crate::fem::{BoxDomain, PeriodicMesh};
    use crate::newmark::{OnlineDiagnostics, RunMeta};
    use crate::problem::{CoefficientField, DampingCoefficient};

    const PI: f64 = std::f64::consts::PI;

    fn cosine_field_1d() -> CoefficientField {
        CoefficientField::new(1, false, |_, y| {
            let a = 1.0 / (2.0 + (2.0 * PI * y[0]).cos());
            [[a, 0.0], [0.0, a]]
        })
    }

    /// Synthetic trajectory with prescribed nodal values, constant in time.
    fn synthetic_trajectory(mesh: DirichletMesh, f: impl Fn(Point) -> f64) -> Trajectory {
        let slice = mesh.interpolate(&f);
        let zero = vec![0.0; mesh.n_interior()];
        Trajectory {
            mesh,
            times: vec![0.0, 1.0],
            u: vec![slice.clone(), slice],
            v: vec![zero.clone(), zero],
            meta: RunMeta::default(),
            diagnostics: OnlineDiagnostics::default(),
        }
    }

    #[test]
    fn constant_coefficient_reduces_to_plain_gradient() {
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [32, 0]).unwrap();
        let hom = synthetic_trajectory(mesh, |p| p[0] * (1.0 - p[0]));
        let cmesh = PeriodicMesh::new(1, 32).unwrap();
        let cells =
            vec![solve_cell_elliptic(&CoefficientField::identity(1), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let u1 = U1Gradient::new(&hom, &cells, 0.1).unwrap();
        let slice = u1.at_time(0.5);
        let plain = U1Gradient::new(&hom, &[], 0.1).unwrap();
        let plain_slice = plain.at_time(0.5);
        for i in 0..50 {
            let x = [0.01 + 0.98 * i as f64 / 49.0, 0.0];
            let a = slice.eval(x).unwrap();
            let b = plain_slice.eval(x).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn corrected_gradient_matches_closed_form_for_linear_macro_field() {
        // u0 = c x: corrected gradient = c (1 + cos(2 pi x / eps) / 2).
        let c = 0.8;
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [64, 0]).unwrap();
        let hom = synthetic_trajectory(mesh, move |p| c * p[0]);
        let cmesh = PeriodicMesh::new(1, 256).unwrap();
        let cells = vec![solve_cell_elliptic(&cosine_field_1d(), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let eps = 1.0 / 8.0;
        let u1 = U1Gradient::new(&hom, &cells, eps).unwrap();
        let slice = u1.at_time(0.3);
        let h_cell = cmesh.h();
        // Stay away from x = 1: the synthetic field is nonzero there, but the
        // expanded slice enforces the homogeneous boundary on the last element.
        for i in 0..200 {
            let x = [0.001 + 0.93 * i as f64 / 199.0, 0.0];
            let got = slice.eval(x).unwrap()[0];
            let expect = c * (1.0 + 0.5 * (2.0 * PI * x[0] / eps).cos());
            assert!(
                (got - expect).abs() < c * 30.0 * h_cell * h_cell + 1e-9,
                "x = {}: {got} vs {expect}",
                x[0]
            );
        }
    }

    #[test]
    fn cell_average_of_corrected_gradient_is_macro_gradient() {
        // u0 linear: the corrector contribution averages out over one cell.
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [64, 0]).unwrap();
        let hom = synthetic_trajectory(mesh, |p| 0.6 * p[0]);
        let cmesh = PeriodicMesh::new(1, 128).unwrap();
        let cells = vec![solve_cell_elliptic(&cosine_field_1d(), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let eps = 1.0 / 16.0;
        let u1 = U1Gradient::new(&hom, &cells, eps).unwrap();
        let slice = u1.at_time(0.0);
        // Average over the cell [0.5, 0.5 + eps) with a fine midpoint rule.
        let m = 400;
        let avg: f64 = (0..m)
            .map(|i| slice.eval([0.5 + eps * (i as f64 + 0.5) / m as f64, 0.0]).unwrap()[0])
            .sum::<f64>()
            / m as f64;
        assert!((avg - 0.6).abs() < 1e-3, "avg {avg}");
    }

    #[test]
    fn evaluation_outside_domain_errors() {
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [16, 0]).unwrap();
        let hom = synthetic_trajectory(mesh, |p| p[0]);
        let u1 = U1Gradient::new(&hom, &[], 0.5).unwrap();
        let slice = u1.at_time(0.0);
        assert!(slice.eval([1.5, 0.0]).is_err());
    }

    #[test]
    fn mean_value_pairing_of_zero_mean_sinusoid_decays() {
        // Domain length 2/3 keeps the boundary prefactor constant across the
        // dyadic sweep, so the decay is exactly first order.
        let length = 2.0 / 3.0;
        let domain = BoxDomain::new(1, [0.0, 0.0], [length, 1.0]).unwrap();
        let w = |y: Point, _: f64| (2.0 * PI * y[0]).sin();
        let phi = |_: Point, _: f64| 1.0;
        let mut gaps = Vec::new();
        for k in [8.0f64, 16.0, 32.0] {
            let eps = 1.0 / k;
            let n = (length / (eps / 16.0)).ceil() as usize;
            let grid = PairingGrid {
                mesh: DirichletMesh::new(domain, [n, 0]).unwrap(),
                horizon: length,
                n_time: 8,
            };
            let mv = mean_value_pairing(&w, &phi, eps, 1.0, &grid);
            assert!(mv.mean_w.abs() < 1e-12);
            gaps.push(mv.gap());
        }
        let slope = (gaps[0] / gaps[2]).ln() / (4.0f64).ln();
        assert!((slope - 1.0).abs() < 0.15, "slope {slope}, gaps {gaps:?}");
    }

    #[test]
    fn mean_value_pairing_of_cosine_squared_finds_one_half() {
        let domain = BoxDomain::unit(1);
        let w = |y: Point, _: f64| (2.0 * PI * y[0]).cos().powi(2);
        let phi = |_: Point, _: f64| 1.0;
        let eps = 1.0 / 32.0;
        let grid = PairingGrid {
            mesh: DirichletMesh::new(domain, [512, 0]).unwrap(),
            horizon: 1.0,
            n_time: 8,
        };
        let mv = mean_value_pairing(&w, &phi, eps, 1.0, &grid);
        assert!((mv.mean_w - 0.5).abs() < 1e-10);
        assert!((mv.pairing - 0.5).abs() < 1e-3, "pairing {}", mv.pairing);
    }

    #[test]
    fn mean_value_pairing_with_time_oscillation_vanishes() {
        let domain = BoxDomain::unit(1);
        let w = |y: Point, s: f64| (2.0 * PI * y[0]).sin() * (2.0 * PI * s).sin();
        let phi = |x: Point, t: f64| x[0] * (1.0 - x[0]) * (1.0 + t);
        let eps = 1.0 / 16.0;
        let grid = PairingGrid {
            mesh: DirichletMesh::new(domain, [256, 0]).unwrap(),
            horizon: 1.0,
            n_time: 256,
        };
        let mv = mean_value_pairing(&w, &phi, eps, 1.0, &grid);
        assert!(mv.mean_w.abs() < 1e-12);
        assert!(mv.pairing.abs() < 5e-3, "pairing {}", mv.pairing);
    }

    #[test]
    fn two_scale_pairing_is_linear_in_the_test_factor() {
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [48, 0]).unwrap();
        let fine = synthetic_trajectory(mesh.clone(), |p| (PI * p[0]).sin());
        let hom = synthetic_trajectory(mesh, |p| (PI * p[0]).sin());
        let cmesh = PeriodicMesh::new(1, 32).unwrap();
        let cells = vec![solve_cell_elliptic(&cosine_field_1d(), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let spec = ProblemSpec::new(
            cosine_field_1d(),
            DampingCoefficient::constant(1.0),
            0.125,
            1.0,
            1.0,
            BoxDomain::unit(1),
            |_, _| 0.0,
            |_, _| 0.0,
            |_, _| 0.0,
        )
        .unwrap();
        let phi = |x: Point| 1.0 + x[0];
        let psi = |t: f64| 1.0 - 0.5 * t;
        let b1 = |y: Point| (2.0 * PI * y[0]).cos();
        let b2 = |y: Point| (4.0 * PI * y[0]).sin();
        let combo = move |y: Point| 0.7 * b1(y) - 2.3 * b2(y);
        let run = |b: &dyn Fn(Point) -> f64| {
            two_scale_pairing(
                &fine,
                &spec,
                PairingField::Flux,
                &CellTestFactor::Along(0, b),
                &phi,
                &psi,
                &hom,
                &cells,
            )
            .unwrap()
        };
        let p1 = run(&b1);
        let p2 = run(&b2);
        let pc = run(&combo);
        assert!(
            (pc.pairing - (0.7 * p1.pairing - 2.3 * p2.pairing)).abs() < 1e-12,
            "pairing not linear"
        );
        assert!(
            (pc.predicted - (0.7 * p1.predicted - 2.3 * p2.predicted)).abs() < 1e-12,
            "prediction not linear"
        );
    }

    #[test]
    fn pairing_is_linear_in_the_oscillating_factor() {
        let domain = BoxDomain::new(1, [0.0, 0.0], [0.7, 1.0]).unwrap();
        let grid = PairingGrid {
            mesh: DirichletMesh::new(domain, [160, 0]).unwrap(),
            horizon: 0.5,
            n_time: 16,
        };
        let w1 = |y: Point, _: f64| (2.0 * PI * y[0]).sin();
        let w2 = |y: Point, _: f64| (4.0 * PI * y[0]).cos();
        let combo = |y: Point, s: f64| 0.3 * w1(y, s) - 1.7 * w2(y, s);
        let phi = |x: Point, t: f64| (1.0 + x[0]) * (2.0 - t);
        let eps = 0.11;
        let p1 = mean_value_pairing(&w1, &phi, eps, 1.0, &grid).pairing;
        let p2 = mean_value_pairing(&w2, &phi, eps, 1.0, &grid).pairing;
        let pc = mean_value_pairing(&combo, &phi, eps, 1.0, &grid).pairing;
        assert!((pc - (0.3 * p1 - 1.7 * p2)).abs() < 1e-12);
    }

    #[test]
    fn two_scale_gradient_pairing_vanishes_for_constant_coefficient() {
        // With a = I the corrector is zero and the gradient field pairs to
        // zero against any mean-zero oscillating factor.
        let spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::constant(1.0),
            1.0 / 16.0,
            1.0,
            0.25,
            BoxDomain::unit(1),
            |_, _| 0.0,
            |p, _| (PI * p[0]).sin(),
            |_, _| 0.0,
        )
        .unwrap()
        .with_zero_forcing();
        let fine = crate::fine::solve_fine(&spec, 256, 128, 1e-11).unwrap();
        let hom = crate::fine::solve_fine(&spec, 256, 128, 1e-11).unwrap();
        let cmesh = PeriodicMesh::new(1, 64).unwrap();
        let cells =
            vec![solve_cell_elliptic(&CoefficientField::identity(1), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let b = |y: Point| (2.0 * PI * y[0]).cos();
        let pairing = two_scale_pairing(
            &fine,
            &spec,
            PairingField::Gradient,
            &CellTestFactor::Along(0, &b),
            &|_| 1.0,
            &|_| 1.0,
            &hom,
            &cells,
        )
        .unwrap();
        assert!(pairing.predicted.abs() < 1e-10, "predicted {}", pairing.predicted);
        assert!(pairing.pairing.abs() < 2e-3, "pairing {}", pairing.pairing);
    }

    #[test]
    fn very_weak_pairing_rejects_nonzero_mean_factor() {
        let mesh = DirichletMesh::new(BoxDomain::unit(1), [16, 0]).unwrap();
        let fine = synthetic_trajectory(mesh.clone(), |p| p[0] * (1.0 - p[0]));
        let hom = synthetic_trajectory(mesh, |p| p[0] * (1.0 - p[0]));
        let cmesh = PeriodicMesh::new(1, 16).unwrap();
        let cells =
            vec![solve_cell_elliptic(&CoefficientField::identity(1), 0.0, 0, &cmesh, 1e-10).unwrap()];
        let err = very_weak_pairing(
            &fine,
            &|_| 1.0,
            &|_| 1.0,
            &|_| 1.0,
            0.25,
            &hom,
            &cells,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn corrector_error_at_discretization_floor_without_oscillation() {
        // Fine run from the homogenized data itself: the expansion is exact
        // up to discretization error.
        let spec = ProblemSpec::new(
            CoefficientField::identity(1),
            DampingCoefficient::constant(1.0),
            1.0,
            1.0,
            0.5,
            BoxDomain::unit(1),
            |p, t| PI * PI * (PI * p[0]).sin() * (-t).exp(),
            |p, _| (PI * p[0]).sin(),
            |p, _| -(PI * p[0]).sin(),
        )
        .unwrap();
        let fine = crate::fine::solve_fine(&spec, 64, 128, 1e-12).unwrap();
        let hom = crate::fine::solve_fine(&spec, 96, 192, 1e-12).unwrap();
        let err2 = uncorrected_gradient_error(&fine, &hom).unwrap();
        // Gradient scale: int int |grad u|^2 ~ pi^2/2 * int e^{-2t} ~ 1.9.
        assert!(err2 < 5e-3, "floor error {err2}");
        let cmesh = PeriodicMesh::new(1, 64).unwrap();
        let cells =
            vec![solve_cell_elliptic(&CoefficientField::identity(1), 0.0, 0, &cmesh, 1e-12).unwrap()];
        let u1 = U1Gradient::new(&hom, &cells, 1.0).unwrap();
        let err2_corr = corrector_error(&fine, &u1).unwrap();
        assert!((err2 - err2_corr).abs() < 1e-12);
    }

    #[test]
    fn trajectory_distance_measures_profile_gap() {
        let mesh_a = DirichletMesh::new(BoxDomain::unit(1), [64, 0]).unwrap();
        let mesh_b = DirichletMesh::new(BoxDomain::unit(1), [48, 0]).unwrap();
        let a = synthetic_trajectory(mesh_a, |p| (PI * p[0]).sin());
        let b = synthetic_trajectory(mesh_b, |p| 0.9 * (PI * p[0]).sin());
        let d = sup_l2_distance(&a, &b).unwrap();
        // || 0.1 sin(pi x) ||_{L2} = 0.1 / sqrt(2).
        assert!((d - 0.1 / (2.0f64).sqrt()).abs() < 1e-3, "distance {d}");
        let f = final_distance_to(&a, &|p| (PI * p[0]).sin()).unwrap();
        assert!(f < 1e-10, "final distance {f}");
    }
}
