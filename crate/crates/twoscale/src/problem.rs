//! Problem data: the oscillating coefficient field, the quasi-periodic
//! damping coefficient, initial/forcing data, and the validator that checks
//! all of it before anything is solved.

use crate::error::{Error, Result};
use crate::fem::mesh::{wrap_point, BoxDomain, Matrix, Point};
use std::fmt;
use std::sync::Arc;

/// Smoothness of the time dependence of the coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeSmoothness {
    ConstantInTime,
    SmoothInTime,
}

type MatrixSampler = dyn Fn(f64, Point) -> Matrix + Send + Sync;
type ScalarField = dyn Fn(Point, f64) -> f64 + Send + Sync;
type ScalarMap = dyn Fn(f64) -> f64 + Send + Sync;

/// The matrix field a(t, y): cell-periodic in y, uniformly elliptic with
/// both bounds of the ellipticity sandwich, optionally time dependent.
/// Sampling wraps y into the unit cell, so periodicity holds by construction.
#[derive(Clone)]
pub struct CoefficientField {
    pub dim: usize,
    sampler: Arc<MatrixSampler>,
    pub time_dependent: bool,
    pub smoothness: TimeSmoothness,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(
        dim: usize,
        time_dependent: bool,
        sampler: impl Fn(f64, Point) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            sampler: Arc::new(sampler),
            time_dependent,
            smoothness: if time_dependent {
                TimeSmoothness::SmoothInTime
            } else {
                TimeSmoothness::ConstantInTime
            },
        }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(dim, false, move |_, _| {
            [[value, 0.0], [0.0, value]]
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(dim, 1.0)
    }

    /// Samples a(t, y) with y wrapped into the unit cell.
    pub fn sample(&self, t: f64, y: Point) -> Matrix {
        (self.sampler)(t, wrap_point(y, self.dim))
    }

    /// Sampler closure bound to a fixed time, for assembly.
    pub fn at_time(&self, t: f64) -> impl Fn(Point) -> Matrix + '_ {
        move |y| self.sample(t, y)
    }

    /// Smallest and largest eigenvalue of a sampled matrix.
    pub fn eigen_bounds(&self, t: f64, y: Point) -> Result<(f64, f64)> {
        let a = self.sample(t, y);
        eigen_bounds_sym(&a, self.dim, t, y)
    }
}

pub(crate) fn eigen_bounds_sym(a: &Matrix, dim: usize, t: f64, y: Point) -> Result<(f64, f64)> {
    for r in 0..dim {
        for c in 0..dim {
            if !a[r][c].is_finite() {
                return Err(Error::Data(format!(
                    "non-finite coefficient at (t, y) = ({t}, ({}, {}))",
                    y[0], y[1]
                )));
            }
        }
    }
    if dim == 1 {
        return Ok((a[0][0], a[0][0]));
    }
    if (a[0][1] - a[1][0]).abs() > 1e-12 {
        return Err(Error::Data(format!(
            "non-symmetric coefficient at (t, y) = ({t}, ({}, {})): skew {:.3e}",
            y[0],
            y[1],
            (a[0][1] - a[1][0]).abs()
        )));
    }
    let half_tr = 0.5 * (a[0][0] + a[1][1]);
    let rad = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).max(0.0).sqrt();
    Ok((half_tr - rad, half_tr + rad))
}

/// Quasi-periodic damping g(s) = g_per(s) + C* s with g_per 1-periodic.
#[derive(Clone)]
pub struct DampingCoefficient {
    g_per: Arc<ScalarMap>,
    pub c_star: f64,
    /// max over \[0,1\] of |g_per|, estimated on a fine grid at construction.
    pub beta: f64,
}

impl fmt::Debug for DampingCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DampingCoefficient")
            .field("c_star", &self.c_star)
            .field("beta", &self.beta)
            .finish()
    }
}

impl DampingCoefficient {
    pub fn new(c_star: f64, g_per: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let beta = (0..=2048)
            .map(|i| g_per(i as f64 / 2048.0).abs())
            .fold(0.0, f64::max);
        Self {
            g_per: Arc::new(g_per),
            c_star,
            beta,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(0.0, move |_| value)
    }

    pub fn periodic_part(&self, s: f64) -> f64 {
        (self.g_per)(s)
    }

    /// g(s) = g_per(s) + C* s.
    pub fn eval(&self, s: f64) -> f64 {
        (self.g_per)(s) + self.c_star * s
    }

    /// Mean of the periodic part over one period by composite Simpson.
    pub fn periodic_mean(&self, panels: usize) -> f64 {
        crate::fem::quad::simpson(|s| (self.g_per)(s), 0.0, 1.0, panels.max(1000))
    }
}

/// Complete problem data for the oscillating damped wave run.
#[derive(Clone)]
pub struct ProblemSpec {
    pub coeff: CoefficientField,
    pub damping: DampingCoefficient,
    pub epsilon: f64,
    pub r_exponent: f64,
    pub horizon: f64,
    pub domain: BoxDomain,
    pub forcing: Arc<ScalarField>,
    pub v0: Arc<ScalarField>,
    pub v1: Arc<ScalarField>,
    /// True when the forcing is identically zero (skips load assembly).
    pub forcing_is_zero: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.coeff.dim)
            .field("epsilon", &self.epsilon)
            .field("r", &self.r_exponent)
            .field("c_star", &self.damping.c_star)
            .field("horizon", &self.horizon)
            .finish()
    }
}

#[allow(clippy::too_many_arguments)]
impl ProblemSpec {
    pub fn new(
        coeff: CoefficientField,
        damping: DampingCoefficient,
        epsilon: f64,
        r_exponent: f64,
        horizon: f64,
        domain: BoxDomain,
        forcing: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        v0: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        v1: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if coeff.dim != domain.dim {
            return Err(Error::Config(format!(
                "coefficient dimension {} does not match domain dimension {}",
                coeff.dim, domain.dim
            )));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must be in (0, 1], got {epsilon}")));
        }
        if !(r_exponent > 0.0) {
            return Err(Error::Config(format!("r must be positive, got {r_exponent}")));
        }
        if !(horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self {
            coeff,
            damping,
            epsilon,
            r_exponent,
            horizon,
            domain,
            forcing: Arc::new(forcing),
            v0: Arc::new(v0),
            v1: Arc::new(v1),
            forcing_is_zero: false,
        })
    }

    pub fn with_zero_forcing(mut self) -> Self {
        self.forcing_is_zero = true;
        self
    }

    /// Effective damping on the macroscopic clock: g(t / eps^r).
    pub fn damping_at(&self, t: f64) -> f64 {
        self.damping.eval(t / self.epsilon.powf(self.r_exponent))
    }

    /// True when the critical parabolic cell problem applies: r = 2 with
    /// drift and a genuinely time-dependent coefficient; otherwise the
    /// elliptic cell problem is the right one.
    pub fn needs_parabolic_cell(&self) -> bool {
        self.r_exponent == 2.0 && self.damping.c_star != 0.0 && self.coeff.time_dependent
    }
}

/// Poincare constant of the unit cell used in the smallness condition.
pub fn poincare_constant(dim: usize) -> f64 {
    dim as f64 / (std::f64::consts::PI * std::f64::consts::PI)
}

/// One validator check with its measured margin (positive = pass slack).
#[derive(Debug, Clone, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub detail: String,
}

/// Outcome of [`validate_assumptions`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub lambda_hat: f64,
    pub pass: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Smallest eigenvalue of a(t, y) over a nested probe grid; tightens
/// monotonically (non-increasing) as the resolution is refined.
pub fn estimate_lambda(coeff: &CoefficientField, probe_resolution: usize) -> Result<f64> {
    estimate_lambda_in_window(coeff, 0.0, 1.0, probe_resolution)
}

/// Per-time variant used by the ellipticity sandwich: probes y only.
pub fn estimate_lambda_at(coeff: &CoefficientField, t: f64, probe_resolution: usize) -> Result<f64> {
    let mut lo = f64::MAX;
    for_each_probe_point(coeff.dim, probe_resolution, |y| {
        let (lmin, _) = coeff.eigen_bounds(t, y)?;
        lo = lo.min(lmin);
        Ok(())
    })?;
    Ok(lo)
}

fn estimate_lambda_in_window(
    coeff: &CoefficientField,
    t0: f64,
    t1: f64,
    probe_resolution: usize,
) -> Result<f64> {
    if probe_resolution < 8 {
        return Err(Error::Config(format!(
            "probe_resolution must be at least 8, got {probe_resolution}"
        )));
    }
    let nt = if coeff.time_dependent { probe_resolution } else { 0 };
    let mut lo = f64::MAX;
    for it in 0..=nt {
        let t = if nt == 0 {
            t0
        } else {
            t0 + (t1 - t0) * it as f64 / nt as f64
        };
        for_each_probe_point(coeff.dim, probe_resolution, |y| {
            let (lmin, _) = coeff.eigen_bounds(t, y)?;
            lo = lo.min(lmin);
            Ok(())
        })?;
    }
    Ok(lo)
}

fn for_each_probe_point(
    dim: usize,
    res: usize,
    mut f: impl FnMut(Point) -> Result<()>,
) -> Result<()> {
    match dim {
        1 => {
            for i in 0..res {
                f([i as f64 / res as f64, 0.0])?;
            }
        }
        _ => {
            for j in 0..res {
                for i in 0..res {
                    f([i as f64 / res as f64, j as f64 / res as f64])?;
                }
            }
        }
    }
    Ok(())
}

/// Runs every admissibility check: symmetry, periodicity across the seam,
/// both ellipticity bounds, damping positivity, and the r = 2 smallness
/// condition on the drift.
pub fn validate_assumptions(spec: &ProblemSpec, probe_resolution: usize) -> Result<ValidationReport> {
    if probe_resolution < 8 {
        return Err(Error::Config(format!(
            "probe_resolution must be at least 8, got {probe_resolution}"
        )));
    }
    let dim = spec.coeff.dim;
    let mut checks = Vec::new();

    // Symmetry and finiteness over the probe grid.
    let mut max_skew: f64 = 0.0;
    let mut lambda_hat = f64::MAX;
    let mut upper_hat = f64::MIN;
    let nt = if spec.coeff.time_dependent { probe_resolution } else { 0 };
    for it in 0..=nt {
        let t = if nt == 0 {
            0.0
        } else {
            spec.horizon * it as f64 / nt as f64
        };
        for_each_probe_point(dim, probe_resolution, |y| {
            let a = spec.coeff.sample(t, y);
            for r in 0..dim {
                for c in 0..dim {
                    if !a[r][c].is_finite() {
                        return Err(Error::Data(format!(
                            "non-finite coefficient at (t, y) = ({t}, ({}, {}))",
                            y[0], y[1]
                        )));
                    }
                }
            }
            if dim == 2 {
                max_skew = max_skew.max((a[0][1] - a[1][0]).abs());
            }
            let (lmin, lmax) = eigen_bounds_sym(&a, dim, t, y)?;
            lambda_hat = lambda_hat.min(lmin);
            upper_hat = upper_hat.max(lmax);
            Ok(())
        })?;
    }
    checks.push(Check {
        name: "symmetry".into(),
        pass: max_skew <= 1e-12,
        margin: 1e-12 - max_skew,
        detail: format!("max |a01 - a10| = {max_skew:.3e}"),
    });

    // Periodicity across the seam (sampling wraps, so this asserts the
    // wrapped evaluations agree exactly).
    let mut max_seam: f64 = 0.0;
    for_each_probe_point(dim, probe_resolution.min(64), |y| {
        for d in 0..dim {
            let mut shifted = y;
            shifted[d] += 1.0;
            let a = spec.coeff.sample(0.0, y);
            let b = spec.coeff.sample(0.0, shifted);
            for r in 0..dim {
                for c in 0..dim {
                    max_seam = max_seam.max((a[r][c] - b[r][c]).abs());
                }
            }
        }
        Ok(())
    })?;
    checks.push(Check {
        name: "periodicity".into(),
        pass: max_seam <= 1e-12,
        margin: 1e-12 - max_seam,
        detail: format!("max wrap mismatch = {max_seam:.3e}"),
    });

    checks.push(Check {
        name: "ellipticity_lower".into(),
        pass: lambda_hat > 0.0,
        margin: lambda_hat,
        detail: format!("lambda_hat = {lambda_hat:.6}"),
    });
    checks.push(Check {
        name: "ellipticity_upper".into(),
        pass: upper_hat <= 1.0 + 1e-12,
        margin: 1.0 + 1e-12 - upper_hat,
        detail: format!("max eigenvalue = {upper_hat:.6}"),
    });

    // Damping positivity: the worst window of g_per(s) + C* s is s in [0, 1).
    let mut g_min = f64::MAX;
    let mut g_min_at = 0.0;
    let res = probe_resolution.max(256);
    for i in 0..=res {
        let s = i as f64 / res as f64;
        let g = spec.damping.eval(s);
        if !g.is_finite() {
            return Err(Error::Data(format!("non-finite damping at s = {s}")));
        }
        if g < g_min {
            g_min = g;
            g_min_at = s;
        }
    }
    checks.push(Check {
        name: "damping_positivity".into(),
        pass: g_min > 0.0,
        margin: g_min,
        detail: format!("min g = {g_min:.6} at s = {g_min_at:.4}"),
    });

    // Periodic part consistency at the period boundary.
    let per_gap = (spec.damping.periodic_part(0.0) - spec.damping.periodic_part(1.0)).abs();
    checks.push(Check {
        name: "damping_periodicity".into(),
        pass: per_gap <= 1e-12,
        margin: 1e-12 - per_gap,
        detail: format!("|g_per(0) - g_per(1)| = {per_gap:.3e}"),
    });

    // Smallness condition for the critical scale.
    if spec.r_exponent == 2.0 && spec.damping.c_star != 0.0 {
        let bound = 2.0 * lambda_hat / poincare_constant(dim);
        checks.push(Check {
            name: "r2_smallness".into(),
            pass: spec.damping.c_star <= bound,
            margin: bound - spec.damping.c_star,
            detail: format!("C* = {} vs 2 lambda / C_cell = {bound:.6}", spec.damping.c_star),
        });
    }

    // Past the critical scale the drift regime needs a frozen-in-time
    // coefficient (the built-in data families supply the extra smoothness).
    if spec.damping.c_star != 0.0 && spec.r_exponent > 2.0 {
        checks.push(Check {
            name: "drift_fast_scale_frozen_coefficient".into(),
            pass: !spec.coeff.time_dependent,
            margin: if spec.coeff.time_dependent { -1.0 } else { 0.0 },
            detail: "r > 2 with drift requires a = a(y)".into(),
        });
    }

    // Initial data and forcing must be finite on a coarse probe of the box.
    let mut data_ok = true;
    let mut data_detail = String::from("finite on probe grid");
    'outer: for i in 0..16 {
        for j in 0..(if dim == 2 { 16 } else { 1 }) {
            let x = [
                spec.domain.min[0] + spec.domain.side(0) * i as f64 / 15.0,
                if dim == 2 {
                    spec.domain.min[1] + spec.domain.side(1) * j as f64 / 15.0
                } else {
                    0.0
                },
            ];
            for (name, v) in [
                ("v0", (spec.v0)(x, 0.0)),
                ("v1", (spec.v1)(x, 0.0)),
                ("forcing", (spec.forcing)(x, 0.5 * spec.horizon)),
            ] {
                if !v.is_finite() {
                    data_ok = false;
                    data_detail = format!("non-finite {name} at ({}, {})", x[0], x[1]);
                    break 'outer;
                }
            }
        }
    }
    checks.push(Check {
        name: "data_finite".into(),
        pass: data_ok,
        margin: if data_ok { 0.0 } else { -1.0 },
        detail: data_detail,
    });

    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        checks,
        lambda_hat,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    const PI: f64 = std::f64::consts::PI;

    fn cosine_field_1d() -> CoefficientField {
        CoefficientField::new(1, false, |_, y| {
            let a = 1.0 / (2.0 + (2.0 * PI * y[0]).cos());
            [[a, 0.0], [0.0, a]]
        })
    }

    fn unit_spec(coeff: CoefficientField, damping: DampingCoefficient, r: f64) -> ProblemSpec {
        let dim = coeff.dim;
        ProblemSpec::new(
            coeff,
            damping,
            0.25,
            r,
            1.0,
            BoxDomain::unit(dim),
            |_, _| 0.0,
            |x, _| (PI * x[0]).sin(),
            |_, _| 0.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_field_passes_everything() {
        let spec = unit_spec(CoefficientField::identity(1), DampingCoefficient::constant(1.0), 1.0);
        let report = validate_assumptions(&spec, 64).unwrap();
        assert!(report.pass, "{report:?}");
        assert!((report.lambda_hat - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_estimate_for_cosine_field() {
        assert!((estimate_lambda(&CoefficientField::identity(1), 16).unwrap() - 1.0).abs() < 1e-14);
        // min of 1/(2 + cos) = 1/3, attained at y = 0 which the grid contains.
        let lam = estimate_lambda(&cosine_field_1d(), 1024).unwrap();
        assert!((lam - 1.0 / 3.0).abs() < 1e-12, "lam = {lam}");
    }

    #[test]
    fn lambda_estimate_monotone_under_refinement() {
        // Shifted minimum so coarse grids miss it.
        let field = CoefficientField::new(1, false, |_, y| {
            let a = 0.3 + 0.25 * (2.0 * PI * (y[0] - 0.137)).sin();
            [[a, 0.0], [0.0, a]]
        });
        let mut prev = f64::MAX;
        for res in [8, 16, 32, 64, 128, 256] {
            let lam = estimate_lambda(&field, res).unwrap();
            assert!(lam <= prev + 1e-15, "res {res}: {lam} > {prev}");
            prev = lam;
        }
    }

    #[test]
    fn upper_ellipticity_violation_is_flagged() {
        let field = CoefficientField::new(2, false, |_, _| [[2.0, 0.0], [0.0, 0.5]]);
        let spec = unit_spec(field, DampingCoefficient::constant(1.0), 1.0);
        let report = validate_assumptions(&spec, 16).unwrap();
        assert!(!report.pass);
        assert!(!report.check("ellipticity_upper").unwrap().pass);
        assert!(report.check("ellipticity_lower").unwrap().pass);
    }

    #[test]
    fn smallness_condition_margins() {
        // lambda = 1/3, N = 1: bound = 2 * (1/3) * pi^2 ~ 6.5797.
        let damping = DampingCoefficient::new(6.5, |_| 1.0);
        let spec = unit_spec(cosine_field_1d(), damping, 2.0);
        let report = validate_assumptions(&spec, 512).unwrap();
        let check = report.check("r2_smallness").unwrap();
        assert!(check.pass);
        assert!((check.margin - 0.0797).abs() < 5e-3, "margin {}", check.margin);

        let damping = DampingCoefficient::new(7.0, |_| 1.0);
        let spec = unit_spec(cosine_field_1d(), damping, 2.0);
        let report = validate_assumptions(&spec, 512).unwrap();
        assert!(!report.check("r2_smallness").unwrap().pass);
        assert!(!report.pass);
    }

    #[test]
    fn degenerate_damping_is_rejected() {
        // min g_per = 0 with C* = 0 violates strict positivity.
        let damping = DampingCoefficient::new(0.0, |s| 1.0 - (2.0 * PI * s).cos());
        let spec = unit_spec(CoefficientField::identity(1), damping, 1.0);
        let report = validate_assumptions(&spec, 256).unwrap();
        assert!(!report.check("damping_positivity").unwrap().pass);
    }

    #[test]
    fn nonfinite_coefficient_names_the_point() {
        let field = CoefficientField::new(1, false, |_, y| {
            let a = if y[0] > 0.7 { f64::INFINITY } else { 1.0 };
            [[a, 0.0], [0.0, a]]
        });
        let spec = unit_spec(field, DampingCoefficient::constant(1.0), 1.0);
        let err = validate_assumptions(&spec, 64).unwrap_err();
        assert!(format!("{err}").contains("(t, y)"));
    }

    #[test]
    fn quasi_periodic_decomposition_is_exact() {
        // Rebuild g from (g_per, C*) at 1000 seeded points.
        let damping = DampingCoefficient::new(0.8, |s| 2.0 + 0.5 * (2.0 * PI * s).sin());
        let user_g = |s: f64| 2.0 + 0.5 * (2.0 * PI * s).sin() + 0.8 * s;
        let mut rng = SeededRng::new(42);
        for _ in 0..1000 {
            let s = rng.range(0.0, 50.0);
            assert!((damping.eval(s) - user_g(s)).abs() <= 1e-12 * (1.0 + user_g(s).abs()));
        }
    }

    #[test]
    fn damping_at_applies_the_fast_clock() {
        let damping = DampingCoefficient::new(1.0, |_| 1.0);
        let spec = unit_spec(CoefficientField::identity(1), damping, 2.0);
        // g(t / eps^2) at t = 0.5, eps = 0.25: s = 8, g = 1 + 8.
        assert!((spec.damping_at(0.5) - 9.0).abs() < 1e-12);
    }
}
