//! Cell problems on the periodic unit cell.
//!
//! The elliptic problem determines the corrector whenever the scale ratio is
//! not critical (or the damping has no drift, or the coefficient is frozen in
//! time). At the critical ratio with drift the corrector solves a degenerate
//! parabolic equation whose time derivative carries a factor C* t; the solver
//! marches it by implicit Euler in the logarithmic time variable, where that
//! factor becomes constant.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_cell_rhs, assemble_mass_periodic, assemble_stiffness_periodic, solve_spd_from,
    PeriodicMesh, Point, SolveOptions,
};
use crate::problem::CoefficientField;
use std::io::{BufRead, Write};
use std::path::Path;

/// Corrector field for one coordinate direction, stored as mean-zero nodal
/// slices over a time grid (a single node in the elliptic case).
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub direction: usize,
    pub mesh: PeriodicMesh,
    pub time_nodes: Vec<f64>,
    /// One mean-zero nodal field per time node.
    pub values: Vec<Vec<f64>>,
    /// Slice interpolation is linear in ln t above the first positive node
    /// (parabolic marches); plain linear in t otherwise.
    pub log_time: bool,
    /// Recovered nodal gradients per time node (2nd order at arbitrary points).
    recovered: Vec<Vec<Point>>,
    /// Largest nodal-mean drift observed across stored slices.
    pub max_mean_drift: f64,
}

impl CellSolution {
    fn build(
        direction: usize,
        mesh: PeriodicMesh,
        time_nodes: Vec<f64>,
        mut values: Vec<Vec<f64>>,
        log_time: bool,
    ) -> Self {
        let mut max_drift: f64 = 0.0;
        for slice in &mut values {
            let mean = mesh.nodal_mean(slice);
            max_drift = max_drift.max(mean.abs());
            for v in slice.iter_mut() {
                *v -= mean;
            }
        }
        let recovered = values.iter().map(|s| mesh.recovered_gradients(s)).collect();
        Self {
            direction,
            mesh,
            time_nodes,
            values,
            log_time,
            recovered,
            max_mean_drift: max_drift,
        }
    }

    pub fn n_time_nodes(&self) -> usize {
        self.time_nodes.len()
    }

    /// Bracketing slice indices and interpolation weight for a query time.
    fn time_weights(&self, t: f64) -> (usize, usize, f64) {
        let nodes = &self.time_nodes;
        if nodes.len() == 1 || t <= nodes[0] {
            return (0, 0, 0.0);
        }
        if self.log_time {
            // Frozen at the first positive node and below.
            let first = if nodes[0] == 0.0 { 1 } else { 0 };
            if first >= nodes.len() || t <= nodes[first] {
                return (first.min(nodes.len() - 1), first.min(nodes.len() - 1), 0.0);
            }
            if t >= nodes[nodes.len() - 1] {
                return (nodes.len() - 1, nodes.len() - 1, 0.0);
            }
            let mut hi = first + 1;
            while nodes[hi] < t {
                hi += 1;
            }
            let lo = hi - 1;
            let theta = (t.ln() - nodes[lo].ln()) / (nodes[hi].ln() - nodes[lo].ln());
            (lo, hi, theta)
        } else {
            if t >= nodes[nodes.len() - 1] {
                return (nodes.len() - 1, nodes.len() - 1, 0.0);
            }
            let mut hi = 1;
            while nodes[hi] < t {
                hi += 1;
            }
            let lo = hi - 1;
            let theta = (t - nodes[lo]) / (nodes[hi] - nodes[lo]);
            (lo, hi, theta)
        }
    }

    /// Bracketing slices and blend weight for a query time, reusable across
    /// many spatial evaluations at the same t.
    pub fn time_blend(&self, t: f64) -> (usize, usize, f64) {
        self.time_weights(t)
    }

    /// Gradient evaluation with a precomputed time blend.
    pub fn gradient_with_blend(&self, blend: (usize, usize, f64), y: Point) -> Point {
        let (lo, hi, theta) = blend;
        let a = self.mesh.eval_recovered(&self.recovered[lo], y);
        if lo == hi {
            a
        } else {
            let b = self.mesh.eval_recovered(&self.recovered[hi], y);
            [
                (1.0 - theta) * a[0] + theta * b[0],
                (1.0 - theta) * a[1] + theta * b[1],
            ]
        }
    }

    /// Value evaluation with a precomputed time blend.
    pub fn value_with_blend(&self, blend: (usize, usize, f64), y: Point) -> f64 {
        let (lo, hi, theta) = blend;
        let a = self.mesh.eval(&self.values[lo], y);
        if lo == hi {
            a
        } else {
            let b = self.mesh.eval(&self.values[hi], y);
            (1.0 - theta) * a + theta * b
        }
    }

    /// Corrector value at (t, y) with y wrapped into the cell.
    pub fn eval(&self, t: f64, y: Point) -> f64 {
        let (lo, hi, theta) = self.time_weights(t);
        let a = self.mesh.eval(&self.values[lo], y);
        if lo == hi {
            a
        } else {
            let b = self.mesh.eval(&self.values[hi], y);
            (1.0 - theta) * a + theta * b
        }
    }

    /// Cell gradient grad_y Phi at (t, y): multilinear interpolation of the
    /// recovered element gradients, consistent across the periodic seam.
    pub fn eval_gradient(&self, t: f64, y: Point) -> Point {
        let (lo, hi, theta) = self.time_weights(t);
        let a = self.mesh.eval_recovered(&self.recovered[lo], y);
        if lo == hi {
            a
        } else {
            let b = self.mesh.eval_recovered(&self.recovered[hi], y);
            [
                (1.0 - theta) * a[0] + theta * b[0],
                (1.0 - theta) * a[1] + theta * b[1],
            ]
        }
    }

    /// Element-gradient evaluation at quadrature points (assembly-grade).
    pub fn eval_element_gradient(&self, slice: usize, y: Point) -> Point {
        self.mesh.eval_element_gradient(&self.values[slice], y)
    }

    /// Writes a JSON header and a flat CSV of nodal slices next to it.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = serde_json::json!({
            "direction": self.direction,
            "dim": self.mesh.dim,
            "n": self.mesh.n,
            "log_time": self.log_time,
            "time_nodes": self.time_nodes,
        });
        std::fs::write(
            dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&header)?,
        )?;
        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{name}.csv")))?);
        for (t, slice) in self.time_nodes.iter().zip(&self.values) {
            write!(csv, "{t:.16e}")?;
            for v in slice {
                write!(csv, ",{v:.16e}")?;
            }
            writeln!(csv)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let dim = header["dim"].as_u64().unwrap_or(0) as usize;
        let n = header["n"].as_u64().unwrap_or(0) as usize;
        let direction = header["direction"].as_u64().unwrap_or(0) as usize;
        let log_time = header["log_time"].as_bool().unwrap_or(false);
        let mesh = PeriodicMesh::new(dim, n)?;
        let file = std::fs::File::open(dir.join(format!("{name}.csv")))?;
        let mut time_nodes = Vec::new();
        let mut values = Vec::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line?;
            let mut parts = line.split(',');
            let t: f64 = parts
                .next()
                .ok_or_else(|| Error::Data("empty csv row".into()))?
                .parse()
                .map_err(|e| Error::Data(format!("bad time value: {e}")))?;
            let slice: Vec<f64> = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("bad nodal value: {e}")))?;
            if slice.len() != mesh.n_nodes() {
                return Err(Error::Data(format!(
                    "slice length {} does not match mesh nodes {}",
                    slice.len(),
                    mesh.n_nodes()
                )));
            }
            time_nodes.push(t);
            values.push(slice);
        }
        Ok(Self::build(direction, mesh, time_nodes, values, log_time))
    }
}

/// Default storage-and-march grid for the parabolic cell problem:
/// {0} followed by `steps + 1` nodes from horizon * 1e-4 to horizon,
/// uniformly spaced in ln t.
pub fn log_time_grid(horizon: f64, steps: usize) -> Vec<f64> {
    let t_min = horizon * 1e-4;
    let mut grid = Vec::with_capacity(steps + 2);
    grid.push(0.0);
    let lo = t_min.ln();
    let hi = horizon.ln();
    for m in 0..=steps {
        grid.push((lo + (hi - lo) * m as f64 / steps as f64).exp());
    }
    let last = grid.len() - 1;
    grid[last] = horizon;
    grid
}

/// Solves the elliptic cell problem at a frozen time: find a mean-zero
/// periodic Phi_k with int a(t,y) (grad Phi_k + e_k) . grad b dy = 0 for all
/// periodic Q1 test functions b.
pub fn solve_cell_elliptic(
    coeff: &CoefficientField,
    t: f64,
    direction: usize,
    mesh: &PeriodicMesh,
    tol: f64,
) -> Result<CellSolution> {
    if direction >= coeff.dim {
        return Err(Error::Config(format!(
            "direction {direction} out of range for dimension {}",
            coeff.dim
        )));
    }
    let sampler = coeff.at_time(t);
    let stiffness = assemble_stiffness_periodic(mesh, &sampler)?;
    let mut rhs = assemble_cell_rhs(mesh, &sampler, direction)?;
    for v in rhs.iter_mut() {
        *v = -*v;
    }
    let phi = solve_spd_from(
        &stiffness,
        &rhs,
        None,
        SolveOptions {
            tol,
            project_constants: true,
            ..Default::default()
        },
    )
    .map_err(|e| match e {
        Error::Convergence {
            residual,
            iterations,
            ..
        } => Error::Convergence {
            context: format!("elliptic cell problem, direction {direction}, t = {t}"),
            residual,
            iterations,
        },
        other => other,
    })?;
    Ok(CellSolution::build(
        direction,
        mesh.clone(),
        vec![t],
        vec![phi],
        false,
    ))
}

/// Elliptic solves at a list of frozen times, stored as one solution.
pub fn solve_cell_elliptic_series(
    coeff: &CoefficientField,
    times: &[f64],
    direction: usize,
    mesh: &PeriodicMesh,
    tol: f64,
) -> Result<CellSolution> {
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let single = solve_cell_elliptic(coeff, t, direction, mesh, tol)?;
        values.push(single.values.into_iter().next().unwrap());
    }
    Ok(CellSolution::build(
        direction,
        mesh.clone(),
        times.to_vec(),
        values,
        false,
    ))
}

/// Solves the degenerate parabolic cell problem on the given time grid.
///
/// The slice at t = 0 is the elliptic solution with the frozen coefficient
/// a(0, .) (the time term vanishes there); the first positive node holds that
/// slice, and subsequent nodes are implicit-Euler steps in sigma = ln t.
pub fn solve_cell_parabolic(
    coeff: &CoefficientField,
    c_star: f64,
    direction: usize,
    mesh: &PeriodicMesh,
    time_grid: &[f64],
    tol: f64,
) -> Result<CellSolution> {
    let initial = solve_cell_elliptic(coeff, 0.0, direction, mesh, tol)?;
    let init_slice = initial.values.into_iter().next().unwrap();
    solve_cell_parabolic_from(coeff, c_star, direction, mesh, time_grid, tol, init_slice)
}

/// Parabolic march from a caller-supplied mean-zero initial slice (used by
/// the stability diagnostics, which perturb the start).
pub fn solve_cell_parabolic_from(
    coeff: &CoefficientField,
    c_star: f64,
    direction: usize,
    mesh: &PeriodicMesh,
    time_grid: &[f64],
    tol: f64,
    init_slice: Vec<f64>,
) -> Result<CellSolution> {
    if c_star <= 0.0 {
        return Err(Error::Config(format!(
            "parabolic cell problem needs C* > 0, got {c_star}"
        )));
    }
    if time_grid.len() < 2 || time_grid[0] != 0.0 {
        return Err(Error::Data(
            "parabolic time grid must start at 0 and contain at least two nodes".into(),
        ));
    }
    for w in time_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Data(format!(
                "time grid is not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if init_slice.len() != mesh.n_nodes() {
        return Err(Error::Data(format!(
            "initial slice has {} values for {} nodes",
            init_slice.len(),
            mesh.n_nodes()
        )));
    }

    let mass = assemble_mass_periodic(mesh, &|_| 1.0)?;
    let mut values = Vec::with_capacity(time_grid.len());
    values.push(init_slice.clone());
    // Held at the t = 0 slice up to the first positive node.
    values.push(init_slice);

    let mut m_phi = vec![0.0; mesh.n_nodes()];
    for step in 2..time_grid.len() {
        let t_prev = time_grid[step - 1];
        let t_now = time_grid[step];
        let d_sigma = t_now.ln() - t_prev.ln();
        let rate = c_star / d_sigma;

        let sampler = coeff.at_time(t_now);
        let stiffness = assemble_stiffness_periodic(mesh, &sampler)?;
        let mut rhs_dir = assemble_cell_rhs(mesh, &sampler, direction)?;
        let system = mass.linear_combination(rate, &stiffness, 1.0);

        mass.matvec(&values[step - 1], &mut m_phi);
        for i in 0..rhs_dir.len() {
            rhs_dir[i] = rate * m_phi[i] - rhs_dir[i];
        }
        let prev = values[step - 1].clone();
        let next = solve_spd_from(
            &system,
            &rhs_dir,
            Some(&prev),
            SolveOptions {
                tol,
                ..Default::default()
            },
        )
        .map_err(|e| match e {
            Error::Convergence {
                residual,
                iterations,
                ..
            } => Error::Convergence {
                context: format!(
                    "parabolic cell problem, direction {direction}, step {step} (t = {t_now:.4e})"
                ),
                residual,
                iterations,
            },
            other => other,
        })?;
        values.push(next);
    }

    Ok(CellSolution::build(
        direction,
        mesh.clone(),
        time_grid.to_vec(),
        values,
        true,
    ))
}

/// L2(cell) norm of a nodal slice using the consistent mass matrix.
pub fn cell_l2_norm(mesh: &PeriodicMesh, slice: &[f64]) -> f64 {
    let mass = assemble_mass_periodic(mesh, &|_| 1.0).expect("unit weight");
    mass.quadratic_form(slice).max(0.0).sqrt()
}
