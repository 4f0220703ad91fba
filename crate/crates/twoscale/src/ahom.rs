//! Homogenized matrix assembly and its qualitative property checks: the
//! two-sided ellipticity sandwich, symmetric/skew decomposition, the
//! skew-vs-formula consistency in the critical regime, and the algebraic
//! fact that the skew part drops out of the divergence.

use crate::cell::CellSolution;
use crate::error::{Error, Result};
use crate::fem::mesh::Matrix;
use crate::fem::quad::reference_rule;
use crate::fem::{
    assemble_mass_periodic, assemble_stiffness_periodic, PeriodicMesh, SparseOperator,
};
use crate::problem::{estimate_lambda_at, CoefficientField};
use std::io::Write;
use std::path::Path;

/// a_hom(t) sampled on a time grid.
#[derive(Debug, Clone)]
pub struct HomogenizedMatrix {
    pub dim: usize,
    pub time_nodes: Vec<f64>,
    pub matrices: Vec<Matrix>,
}

fn frobenius(m: &Matrix, dim: usize) -> f64 {
    let mut acc = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            acc += m[r][c] * m[r][c];
        }
    }
    acc.sqrt()
}

impl HomogenizedMatrix {
    pub fn n_nodes(&self) -> usize {
        self.time_nodes.len()
    }

    pub fn symmetric_part(&self, node: usize) -> Matrix {
        let a = &self.matrices[node];
        let mut s = [[0.0; 2]; 2];
        for r in 0..self.dim {
            for c in 0..self.dim {
                s[r][c] = 0.5 * (a[r][c] + a[c][r]);
            }
        }
        s
    }

    pub fn skew_part(&self, node: usize) -> Matrix {
        let a = &self.matrices[node];
        let mut s = [[0.0; 2]; 2];
        for r in 0..self.dim {
            for c in 0..self.dim {
                s[r][c] = 0.5 * (a[r][c] - a[c][r]);
            }
        }
        s
    }

    pub fn skew_frobenius(&self, node: usize) -> f64 {
        frobenius(&self.skew_part(node), self.dim)
    }

    pub fn frobenius(&self, node: usize) -> f64 {
        frobenius(&self.matrices[node], self.dim)
    }

    /// Smallest eigenvalue of the symmetric part (the ellipticity margin).
    pub fn ellipticity_margin(&self, node: usize) -> f64 {
        let s = self.symmetric_part(node);
        if self.dim == 1 {
            s[0][0]
        } else {
            let half_tr = 0.5 * (s[0][0] + s[1][1]);
            let rad = (0.25 * (s[0][0] - s[1][1]).powi(2) + s[0][1] * s[1][0])
                .max(0.0)
                .sqrt();
            half_tr - rad
        }
    }

    /// Linear interpolation between stored time nodes (clamped outside).
    pub fn at(&self, t: f64) -> Matrix {
        let nodes = &self.time_nodes;
        if nodes.len() == 1 || t <= nodes[0] {
            return self.matrices[0];
        }
        if t >= nodes[nodes.len() - 1] {
            return self.matrices[nodes.len() - 1];
        }
        let mut hi = 1;
        while nodes[hi] < t {
            hi += 1;
        }
        let lo = hi - 1;
        let theta = (t - nodes[lo]) / (nodes[hi] - nodes[lo]);
        let mut out = [[0.0; 2]; 2];
        for r in 0..self.dim {
            for c in 0..self.dim {
                out[r][c] =
                    (1.0 - theta) * self.matrices[lo][r][c] + theta * self.matrices[hi][r][c];
            }
        }
        out
    }

    /// Quadratic form a_hom(t_node) xi . xi.
    pub fn form(&self, node: usize, xi: [f64; 2]) -> f64 {
        let a = &self.matrices[node];
        let mut acc = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                acc += a[r][c] * xi[c] * xi[r];
            }
        }
        acc
    }

    /// CSV export: t, entries row-major, ellipticity margin, skew Frobenius.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("t");
        for r in 0..self.dim {
            for c in 0..self.dim {
                header.push_str(&format!(",a{r}{c}"));
            }
        }
        header.push_str(",ellipticity_margin,skew_frobenius");
        writeln!(w, "{header}")?;
        for (m, &t) in self.time_nodes.iter().enumerate() {
            let mut row = format!("{t:.16e}");
            for r in 0..self.dim {
                for c in 0..self.dim {
                    row.push_str(&format!(",{:.16e}", self.matrices[m][r][c]));
                }
            }
            row.push_str(&format!(
                ",{:.16e},{:.16e}",
                self.ellipticity_margin(m),
                self.skew_frobenius(m)
            ));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn check_cells(cells: &[CellSolution], dim: usize, time_nodes: &[f64]) -> Result<()> {
    if cells.len() != dim {
        return Err(Error::Data(format!(
            "need one cell solution per direction: got {} for dimension {dim}",
            cells.len()
        )));
    }
    let n = cells[0].mesh.n;
    for (k, cell) in cells.iter().enumerate() {
        if cell.direction != k {
            return Err(Error::Data(format!(
                "cell solution {k} solves direction {}",
                cell.direction
            )));
        }
        if cell.mesh.n != n || cell.mesh.dim != dim {
            return Err(Error::Data("cell solutions use different meshes".into()));
        }
        if cell.time_nodes.len() != time_nodes.len()
            || cell
                .time_nodes
                .iter()
                .zip(time_nodes)
                .any(|(a, b)| (a - b).abs() > 1e-14 * (1.0 + b.abs()))
        {
            return Err(Error::Data(format!(
                "cell solution {k} is stored on a different time grid"
            )));
        }
    }
    Ok(())
}

/// Assembles a_hom(t) e_k = int a(t, y) (grad Phi_k(t, y) + e_k) dy with the
/// same Gauss rule used for matrix assembly.
pub fn assemble_a_hom(
    coeff: &CoefficientField,
    cells: &[CellSolution],
    time_nodes: &[f64],
) -> Result<HomogenizedMatrix> {
    let dim = coeff.dim;
    check_cells(cells, dim, time_nodes)?;
    let mesh = &cells[0].mesh;
    let h = mesh.h();
    let rule = reference_rule(dim);
    let mut matrices = Vec::with_capacity(time_nodes.len());
    for (m, &t) in time_nodes.iter().enumerate() {
        let mut a_hom = [[0.0; 2]; 2];
        for e in 0..mesh.n_elements() {
            let origin = mesh.element_origin(e);
            for (xi, w, ) in rule.iter().map(|(xi, w)| (xi, w)) {
                let mut y = [0.0; 2];
                for d in 0..dim {
                    y[d] = origin[d] + xi[d] * h;
                }
                let a = coeff.sample(t, y);
                let vol_w = w * h.powi(dim as i32);
                for (k, cell) in cells.iter().enumerate() {
                    let mut grad = cell.eval_element_gradient(m, y);
                    grad[k] += 1.0;
                    for d1 in 0..dim {
                        let mut flux = 0.0;
                        for d2 in 0..dim {
                            flux += a[d1][d2] * grad[d2];
                        }
                        a_hom[d1][k] += vol_w * flux;
                    }
                }
            }
        }
        for r in 0..dim {
            for c in 0..dim {
                if !a_hom[r][c].is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite homogenized entry ({r}, {c}) at t = {t}"
                    )));
                }
            }
        }
        matrices.push(a_hom);
    }
    Ok(HomogenizedMatrix {
        dim,
        time_nodes: time_nodes.to_vec(),
        matrices,
    })
}

/// Derivative of a scalar time series by 3-point differences on a possibly
/// nonuniform grid (one-sided at the ends).
pub fn time_derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (values[1] - values[0]) / (times[1] - times[0]);
    out[n - 1] = (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]);
    for i in 1..n - 1 {
        let dm = times[i] - times[i - 1];
        let dp = times[i + 1] - times[i];
        out[i] = -dp / (dm * (dm + dp)) * values[i - 1]
            + (dp - dm) / (dm * dp) * values[i]
            + dm / (dp * (dm + dp)) * values[i + 1];
    }
    out
}

/// One row of the ellipticity-sandwich report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SandwichRow {
    pub t: f64,
    pub xi: [f64; 2],
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SandwichReport {
    pub rows: Vec<SandwichRow>,
    pub pass: bool,
    pub tolerance: f64,
}

/// Checks lambda(t) (|xi|^2 + ||grad Phi_xi||^2) + (C* t / 2) d/dt ||Phi_xi||^2
/// <= a_hom(t) xi . xi <= |xi|^2 + ||grad Phi_xi||^2 + same time term,
/// with Phi_xi = sum_k xi_k Phi_k and the time derivative by central
/// differences on the stored grid.
pub fn check_ellipticity_sandwich(
    hm: &HomogenizedMatrix,
    cells: &[CellSolution],
    coeff: &CoefficientField,
    c_star: f64,
    directions: &[[f64; 2]],
    probe_resolution: usize,
) -> Result<SandwichReport> {
    let dim = hm.dim;
    check_cells(cells, dim, &hm.time_nodes)?;
    let mesh = &cells[0].mesh;
    let identity_stiffness = assemble_stiffness_periodic(mesh, &|_| crate::fem::IDENTITY)?;
    let mass = assemble_mass_periodic(mesh, &|_| 1.0)?;
    let h = mesh.h();

    let mut lambda_at = Vec::with_capacity(hm.n_nodes());
    for &t in &hm.time_nodes {
        lambda_at.push(estimate_lambda_at(coeff, t, probe_resolution)?);
    }

    let mut rows = Vec::new();
    for &xi in directions {
        let xi_norm2: f64 = (0..dim).map(|d| xi[d] * xi[d]).sum();
        let tolerance = (1e-6 + 10.0 * h * h) * xi_norm2.max(1e-30);
        // Phi_xi slices by linearity.
        let slices: Vec<Vec<f64>> = (0..hm.n_nodes())
            .map(|m| {
                let mut s = vec![0.0; mesh.n_nodes()];
                for (k, cell) in cells.iter().enumerate() {
                    for (si, vi) in s.iter_mut().zip(&cell.values[m]) {
                        *si += xi[k] * vi;
                    }
                }
                s
            })
            .collect();
        let grad_norm2: Vec<f64> = slices
            .iter()
            .map(|s| identity_stiffness.quadratic_form(s))
            .collect();
        let l2_norm2: Vec<f64> = slices.iter().map(|s| mass.quadratic_form(s)).collect();
        let ddt = time_derivative(&hm.time_nodes, &l2_norm2);
        for m in 0..hm.n_nodes() {
            let t = hm.time_nodes[m];
            let time_term = 0.5 * c_star * t * ddt[m];
            let lower = lambda_at[m] * (xi_norm2 + grad_norm2[m]) + time_term;
            let upper = xi_norm2 + grad_norm2[m] + time_term;
            let value = hm.form(m, xi);
            let pass = lower - tolerance <= value && value <= upper + tolerance;
            rows.push(SandwichRow {
                t,
                xi,
                lower,
                value,
                upper,
                pass,
            });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    let h2_tol = 1e-6 + 10.0 * h * h;
    Ok(SandwichReport {
        rows,
        pass,
        tolerance: h2_tol,
    })
}

/// Regime descriptor for the symmetry check.
#[derive(Debug, Clone, Copy)]
pub struct Regime {
    pub r: f64,
    pub c_star: f64,
    pub time_dependent: bool,
}

impl Regime {
    /// The only regime in which symmetry may break.
    pub fn is_critical(&self) -> bool {
        self.r == 2.0 && self.c_star != 0.0 && self.time_dependent
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SymmetryReport {
    pub critical_regime: bool,
    /// max over nodes of ||skew||_F / ||a_hom||_F.
    pub max_relative_skew: f64,
    /// max over nodes of ||skew||_F.
    pub max_skew: f64,
    /// In non-critical regimes: relative skew must vanish.
    pub pass: bool,
}

pub fn check_symmetry(hm: &HomogenizedMatrix, regime: Regime) -> SymmetryReport {
    let mut max_rel: f64 = 0.0;
    let mut max_skew: f64 = 0.0;
    for m in 0..hm.n_nodes() {
        let skew = hm.skew_frobenius(m);
        let scale = hm.frobenius(m).max(1e-300);
        max_rel = max_rel.max(skew / scale);
        max_skew = max_skew.max(skew);
    }
    let critical = regime.is_critical();
    let pass = if critical { true } else { max_rel <= 1e-8 };
    SymmetryReport {
        critical_regime: critical,
        max_relative_skew: max_rel,
        max_skew,
        pass,
    }
}

/// Skew part predicted from the cell trajectories:
/// skew_(k j)(t) = (C*/2) ( <d_sigma Phi_j, Phi_k> - <d_sigma Phi_k, Phi_j> ),
/// with sigma = ln t, central sigma-differences on the stored positive nodes.
/// Entries at t = 0 are zero (the prefactor C* t vanishes).
pub fn formula_skew(
    cells: &[CellSolution],
    c_star: f64,
    time_nodes: &[f64],
) -> Result<Vec<Matrix>> {
    let dim = cells.len();
    check_cells(cells, dim, time_nodes)?;
    let mesh = &cells[0].mesh;
    let mass = assemble_mass_periodic(mesh, &|_| 1.0)?;
    let n = time_nodes.len();
    let first_pos = time_nodes.iter().position(|&t| t > 0.0).unwrap_or(n);
    // sigma coordinates of the positive nodes.
    let sigmas: Vec<f64> = time_nodes[first_pos..].iter().map(|t| t.ln()).collect();

    // d_sigma Phi_k per positive node, by nonuniform central differences.
    let mut d_sigma: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dim);
    for cell in cells {
        let vals = &cell.values[first_pos..];
        let npos = vals.len();
        let mut per_node = vec![vec![0.0; mesh.n_nodes()]; npos];
        for i in 0..npos {
            if npos < 2 {
                continue;
            }
            let (im, i0, ip, dm, dp) = if i == 0 {
                (0, 0, 1, 0.0, sigmas[1] - sigmas[0])
            } else if i == npos - 1 {
                (npos - 2, npos - 1, npos - 1, sigmas[npos - 1] - sigmas[npos - 2], 0.0)
            } else {
                (i - 1, i, i + 1, sigmas[i] - sigmas[i - 1], sigmas[i + 1] - sigmas[i])
            };
            for node in 0..mesh.n_nodes() {
                per_node[i][node] = if i == 0 {
                    (vals[ip][node] - vals[i0][node]) / dp
                } else if i == npos - 1 {
                    (vals[i0][node] - vals[im][node]) / dm
                } else {
                    -dp / (dm * (dm + dp)) * vals[im][node]
                        + (dp - dm) / (dm * dp) * vals[i0][node]
                        + dm / (dp * (dm + dp)) * vals[ip][node]
                };
            }
        }
        d_sigma.push(per_node);
    }

    let mut out = vec![[[0.0; 2]; 2]; n];
    let mut scratch = vec![0.0; mesh.n_nodes()];
    for (pos, m) in (first_pos..n).enumerate() {
        for k in 0..dim {
            for j in 0..dim {
                if j == k {
                    continue;
                }
                // <d_sigma Phi_j, Phi_k>
                mass.matvec(&cells[k].values[m], &mut scratch);
                let dj_pk: f64 = d_sigma[j][pos]
                    .iter()
                    .zip(&scratch)
                    .map(|(a, b)| a * b)
                    .sum();
                mass.matvec(&cells[j].values[m], &mut scratch);
                let dk_pj: f64 = d_sigma[k][pos]
                    .iter()
                    .zip(&scratch)
                    .map(|(a, b)| a * b)
                    .sum();
                out[m][k][j] = 0.5 * c_star * (dj_pk - dk_pj);
            }
        }
    }
    Ok(out)
}

/// Contracts the skew part with symmetric Hessian probes; the result is an
/// algebraic zero for every matrix.
pub fn skew_divergence_nullcheck(hm: &HomogenizedMatrix, hessians: &[Matrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for m in 0..hm.n_nodes() {
        let skew = hm.skew_part(m);
        for hess in hessians {
            let mut contraction = 0.0;
            for j in 0..hm.dim {
                for k in 0..hm.dim {
                    contraction += skew[j][k] * hess[j][k];
                }
            }
            worst = worst.max(contraction.abs());
        }
    }
    worst
}

/// Identity-coefficient stiffness on the cell mesh, shared by norm helpers.
pub fn cell_gradient_operator(mesh: &PeriodicMesh) -> Result<SparseOperator> {
    assemble_stiffness_periodic(mesh, &|_| crate::fem::IDENTITY)
}
