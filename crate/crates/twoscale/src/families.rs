//! Named built-in problem families loadable from JSON: coefficient fields,
//! damping, and forcing / initial data. The JSON schema is documented in
//! docs/config.md.

use crate::error::{Error, Result};
use crate::fem::mesh::{BoxDomain, Point};
use crate::problem::{CoefficientField, DampingCoefficient, ProblemSpec};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

const PI: f64 = std::f64::consts::PI;

/// Coefficient field families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CoefficientConfig {
    /// a = value * identity.
    Constant { value: f64 },
    /// 1D: a(y) = 1 / (base + amplitude cos 2 pi y).
    /// 2D: diag of that profile applied per axis.
    CosineScalar { base: f64, amplitude: f64 },
    /// 2D scalar field mean + contrast cos(2 pi y1) cos(2 pi y2).
    CheckerboardSmoothed { mean: f64, contrast: f64 },
    /// e^{-t} times a base family (d_t a = -a).
    SeparableExponential { base: Box<CoefficientConfig> },
    /// 2D anisotropy diag(1 +/- contrast p(y)) with axes rotated by
    /// theta(t) = rate t + phase; p(y) = cos(2 pi y1) cos(2 pi y2).
    /// Scaled by 1/(1 + contrast) to respect the upper ellipticity bound.
    RotatingAnisotropy { contrast: f64, rate: f64, phase: f64 },
    /// Seeded random trigonometric polynomial rescaled so the eigenvalues
    /// lie in [lambda_min, lambda_max] on a probe grid.
    RandomTrig {
        seed: u64,
        modes: usize,
        lambda_min: f64,
        lambda_max: f64,
    },
}

impl CoefficientConfig {
    pub fn build(&self, dim: usize) -> Result<CoefficientField> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("unsupported dimension {dim}")));
        }
        match self {
            CoefficientConfig::Constant { value } => {
                let v = *value;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::Config(format!(
                        "constant coefficient must lie in (0, 1], got {v}"
                    )));
                }
                Ok(CoefficientField::constant(dim, v))
            }
            CoefficientConfig::CosineScalar { base, amplitude } => {
                let (b, a) = (*base, *amplitude);
                if b - a.abs() < 1.0 {
                    return Err(Error::Config(format!(
                        "cosine_scalar needs base - |amplitude| >= 1 for the upper bound, got {b} - {a}"
                    )));
                }
                Ok(CoefficientField::new(dim, false, move |_, y| {
                    let a1 = 1.0 / (b + a * (2.0 * PI * y[0]).cos());
                    if dim == 1 {
                        [[a1, 0.0], [0.0, a1]]
                    } else {
                        let a2 = 1.0 / (b + a * (2.0 * PI * y[1]).cos());
                        [[a1, 0.0], [0.0, a2]]
                    }
                }))
            }
            CoefficientConfig::CheckerboardSmoothed { mean, contrast } => {
                if dim != 2 {
                    return Err(Error::Config(
                        "checkerboard_smoothed is a two-dimensional family".into(),
                    ));
                }
                let (m, c) = (*mean, *contrast);
                if !(m - c.abs() > 0.0 && m + c.abs() <= 1.0) {
                    return Err(Error::Config(format!(
                        "checkerboard_smoothed range [{}, {}] violates the ellipticity bounds",
                        m - c.abs(),
                        m + c.abs()
                    )));
                }
                Ok(CoefficientField::new(2, false, move |_, y| {
                    let v = m + c * (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).cos();
                    [[v, 0.0], [0.0, v]]
                }))
            }
            CoefficientConfig::SeparableExponential { base } => {
                let inner = base.build(dim)?;
                Ok(CoefficientField::new(dim, true, move |t, y| {
                    let mut a = inner.sample(0.0, y);
                    let decay = (-t).exp();
                    for row in a.iter_mut() {
                        for v in row.iter_mut() {
                            *v *= decay;
                        }
                    }
                    a
                }))
            }
            CoefficientConfig::RotatingAnisotropy {
                contrast,
                rate,
                phase,
            } => {
                if dim != 2 {
                    return Err(Error::Config(
                        "rotating_anisotropy is a two-dimensional family".into(),
                    ));
                }
                let gamma = *contrast;
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::Config(format!(
                        "rotating_anisotropy contrast must lie in (0, 1), got {gamma}"
                    )));
                }
                let (omega, phase) = (*rate, *phase);
                let scale = 1.0 / (1.0 + gamma);
                Ok(CoefficientField::new(2, true, move |t, y| {
                    let p = (2.0 * PI * y[0]).cos() * (2.0 * PI * y[1]).cos();
                    let (s2, c2) = (2.0 * (omega * t + phase)).sin_cos();
                    [
                        [scale * (1.0 + gamma * p * c2), scale * gamma * p * s2],
                        [scale * gamma * p * s2, scale * (1.0 - gamma * p * c2)],
                    ]
                }))
            }
            CoefficientConfig::RandomTrig {
                seed,
                modes,
                lambda_min,
                lambda_max,
            } => build_random_trig(dim, *seed, *modes, *lambda_min, *lambda_max),
        }
    }
}

/// Random symmetric trigonometric polynomial with eigenvalues affinely
/// rescaled into [lambda_min, lambda_max] (probed on a 64-point grid per
/// axis, so the bounds hold up to grid resolution).
fn build_random_trig(
    dim: usize,
    seed: u64,
    modes: usize,
    lambda_min: f64,
    lambda_max: f64,
) -> Result<CoefficientField> {
    if !(lambda_min > 0.0 && lambda_min < lambda_max && lambda_max <= 1.0) {
        return Err(Error::Config(format!(
            "random_trig needs 0 < lambda_min < lambda_max <= 1, got [{lambda_min}, {lambda_max}]"
        )));
    }
    let mut rng = SeededRng::new(seed);
    // (amplitude, kx, ky, phase_x, phase_y, target entry)
    let mut terms: Vec<(f64, f64, f64, f64, f64, usize)> = Vec::new();
    for _ in 0..modes.max(1) {
        let amp = rng.range(-1.0, 1.0);
        let kx = (1 + (rng.uniform() * 2.0) as usize) as f64;
        let ky = (1 + (rng.uniform() * 2.0) as usize) as f64;
        let px = rng.range(0.0, 2.0 * PI);
        let py = rng.range(0.0, 2.0 * PI);
        let entry = (rng.uniform() * 3.0) as usize; // 0 -> a00, 1 -> a11, 2 -> offdiag
        terms.push((amp, kx, ky, px, py, entry));
    }
    let raw = move |y: Point| -> [[f64; 2]; 2] {
        let mut a = [[1.0, 0.0], [0.0, 1.0]];
        for &(amp, kx, ky, px, py, entry) in &terms {
            let osc = (2.0 * PI * kx * y[0] + px).cos()
                * if dim == 2 {
                    (2.0 * PI * ky * y[1] + py).cos()
                } else {
                    1.0
                };
            match entry {
                0 => a[0][0] += amp * osc,
                1 => a[1][1] += amp * osc,
                _ => {
                    if dim == 2 {
                        a[0][1] += 0.5 * amp * osc;
                        a[1][0] += 0.5 * amp * osc;
                    } else {
                        a[0][0] += amp * osc;
                    }
                }
            }
        }
        if dim == 1 {
            a[0][1] = 0.0;
            a[1][0] = 0.0;
            a[1][1] = a[0][0];
        }
        a
    };
    // Probe the eigenvalue range and rescale.
    let res = 64;
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for j in 0..(if dim == 2 { res } else { 1 }) {
        for i in 0..res {
            let y = [i as f64 / res as f64, j as f64 / res as f64];
            let a = raw(y);
            if dim == 1 {
                lo = lo.min(a[0][0]);
                hi = hi.max(a[0][0]);
            } else {
                let half_tr = 0.5 * (a[0][0] + a[1][1]);
                let rad =
                    (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).max(0.0).sqrt();
                lo = lo.min(half_tr - rad);
                hi = hi.max(half_tr + rad);
            }
        }
    }
    let spread = (hi - lo).max(1e-9);
    let scale = (lambda_max - lambda_min) / spread;
    let shift = lambda_min - scale * lo;
    Ok(CoefficientField::new(dim, false, move |_, y| {
        let a = raw(y);
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = scale * a[r][c] + if r == c { shift } else { 0.0 };
            }
        }
        out
    }))
}

/// Periodic damping part families.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GPerConfig {
    Constant { value: f64 },
    /// mean + amplitude sin(2 pi s).
    Sinusoid { mean: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DampingConfig {
    pub g_per: GPerConfig,
    pub c_star: f64,
}

impl DampingConfig {
    pub fn build(&self) -> DampingCoefficient {
        let c_star = self.c_star;
        match self.g_per {
            GPerConfig::Constant { value } => DampingCoefficient::new(c_star, move |_| value),
            GPerConfig::Sinusoid { mean, amplitude } => {
                DampingCoefficient::new(c_star, move |s| mean + amplitude * (2.0 * PI * s).sin())
            }
        }
    }
}

/// Forcing / initial data families. Product sines are Dirichlet-compatible
/// on the box; the decaying variant is meant for forcing terms.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DataConfig {
    Zero,
    /// amplitude * prod_d sin(mode pi (x_d - min_d) / side_d).
    ProductSine {
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: usize,
    },
    /// The product sine scaled by e^{-rate t}.
    ProductSineDecay {
        amplitude: f64,
        rate: f64,
        #[serde(default = "default_mode")]
        mode: usize,
    },
    /// Well-prepared initial profile: the product sine plus its first-order
    /// cell correction eps sum_k Phi_k(x/eps) d_k v0, using the closed-form
    /// corrector of the cosine_scalar coefficient family. This keeps
    /// -div(a(x/eps) grad v0_eps) bounded as eps -> 0. Only valid together
    /// with the constant or cosine_scalar coefficient families.
    PreparedProductSine {
        amplitude: f64,
        #[serde(default = "default_mode")]
        mode: usize,
    },
}

fn default_mode() -> usize {
    1
}

impl DataConfig {
    pub fn is_zero(&self) -> bool {
        matches!(self, DataConfig::Zero)
    }

    pub fn build(
        &self,
        domain: &BoxDomain,
    ) -> Box<dyn Fn(Point, f64) -> f64 + Send + Sync + 'static> {
        let dom = *domain;
        match self {
            DataConfig::Zero => Box::new(|_, _| 0.0),
            DataConfig::ProductSine { amplitude, mode } => {
                let (a, m) = (*amplitude, *mode as f64);
                Box::new(move |p, _| a * product_sine(&dom, p, m))
            }
            DataConfig::ProductSineDecay { amplitude, rate, mode } => {
                let (a, r, m) = (*amplitude, *rate, *mode as f64);
                Box::new(move |p, t| a * product_sine(&dom, p, m) * (-r * t).exp())
            }
            DataConfig::PreparedProductSine { amplitude, mode } => {
                // Without the coefficient context the correction is zero;
                // ProblemConfig::build routes through build_prepared instead.
                let (a, m) = (*amplitude, *mode as f64);
                Box::new(move |p, _| a * product_sine(&dom, p, m))
            }
        }
    }

    /// Builds the data with the coefficient context needed by the prepared
    /// family; other families ignore it.
    pub fn build_with_coefficient(
        &self,
        domain: &BoxDomain,
        coeff: &CoefficientConfig,
        epsilon: f64,
    ) -> Result<Box<dyn Fn(Point, f64) -> f64 + Send + Sync + 'static>> {
        let DataConfig::PreparedProductSine { amplitude, mode } = self else {
            return Ok(self.build(domain));
        };
        // Closed-form corrector of the cosine profile: for
        // a(y) = 1/(b + c cos 2 pi y), Phi(y) = (c/b) sin(2 pi y) / (2 pi).
        let corrector_scale = match coeff {
            CoefficientConfig::Constant { .. } => 0.0,
            CoefficientConfig::CosineScalar { base, amplitude } => amplitude / base,
            other => {
                return Err(Error::Config(format!(
                    "prepared_product_sine has a closed-form corrector only for the \
                     constant and cosine_scalar coefficient families, not {other:?}"
                )))
            }
        };
        let dom = *domain;
        let (a, m) = (*amplitude, *mode as f64);
        Ok(Box::new(move |p: Point, _| {
            let base = a * product_sine(&dom, p, m);
            let mut corrected = base;
            for d in 0..dom.dim {
                let grad_d = a * product_sine_partial(&dom, p, m, d);
                let phi = corrector_scale * (2.0 * PI * p[d] / epsilon).sin() / (2.0 * PI);
                corrected += epsilon * phi * grad_d;
            }
            corrected
        }))
    }
}

fn product_sine(domain: &BoxDomain, p: Point, mode: f64) -> f64 {
    let mut v = 1.0;
    for d in 0..domain.dim {
        v *= (mode * PI * (p[d] - domain.min[d]) / domain.side(d)).sin();
    }
    v
}

fn product_sine_partial(domain: &BoxDomain, p: Point, mode: f64, along: usize) -> f64 {
    let mut v = 1.0;
    for d in 0..domain.dim {
        let arg = mode * PI * (p[d] - domain.min[d]) / domain.side(d);
        if d == along {
            v *= (mode * PI / domain.side(d)) * arg.cos();
        } else {
            v *= arg.sin();
        }
    }
    v
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl DomainConfig {
    pub fn build(&self, dim: usize) -> Result<BoxDomain> {
        if self.min.len() != dim || self.max.len() != dim {
            return Err(Error::Config(format!(
                "domain has {} coordinates for dimension {dim}",
                self.min.len()
            )));
        }
        let mut min = [0.0; 2];
        let mut max = [1.0, 1.0];
        for d in 0..dim {
            min[d] = self.min[d];
            max[d] = self.max[d];
        }
        BoxDomain::new(dim, min, max)
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }
}

fn default_cell_n() -> usize {
    256
}
fn default_cell_steps() -> usize {
    200
}
fn default_space_factor() -> f64 {
    16.0
}
fn default_dt_safety() -> f64 {
    10.0
}
fn default_probe() -> usize {
    256
}
fn default_tol() -> f64 {
    1e-11
}

/// Mesh / step / tolerance knobs with spec defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResolutionConfig {
    /// Cell mesh elements per axis.
    #[serde(default = "default_cell_n")]
    pub cell_n: usize,
    /// Parabolic cell march steps on the log grid.
    #[serde(default = "default_cell_steps")]
    pub cell_time_steps: usize,
    /// Fine mesh: h = eps / fine_space_factor.
    #[serde(default = "default_space_factor")]
    pub fine_space_factor: f64,
    /// Fine steps: dt = min(h, eps^r) / fine_dt_safety (floored at T/1e7).
    #[serde(default = "default_dt_safety")]
    pub fine_dt_safety: f64,
    /// Homogenized mesh elements per axis; 0 picks twice the finest fine mesh.
    #[serde(default)]
    pub hom_n: usize,
    /// Homogenized time steps; 0 picks 4 * hom_n.
    #[serde(default)]
    pub hom_time_steps: usize,
    #[serde(default = "default_probe")]
    pub probe_resolution: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        Self {
            cell_n: default_cell_n(),
            cell_time_steps: default_cell_steps(),
            fine_space_factor: default_space_factor(),
            fine_dt_safety: default_dt_safety(),
            hom_n: 0,
            hom_time_steps: 0,
            probe_resolution: default_probe(),
            solver_tol: default_tol(),
        }
    }
}

/// Complete single-run problem description, JSON-loadable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProblemConfig {
    pub dim: usize,
    pub coefficient: CoefficientConfig,
    pub damping: DampingConfig,
    pub epsilon: f64,
    pub r: f64,
    pub horizon: f64,
    pub domain: DomainConfig,
    pub forcing: DataConfig,
    pub v0: DataConfig,
    pub v1: DataConfig,
    #[serde(default)]
    pub resolution: ResolutionConfig,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        let domain = self.domain.build(self.dim)?;
        let coeff = self.coefficient.build(self.dim)?;
        let damping = self.damping.build();
        let forcing = self.forcing.build(&domain);
        let v0 = self
            .v0
            .build_with_coefficient(&domain, &self.coefficient, self.epsilon)?;
        let v1 = self.v1.build(&domain);
        let spec = ProblemSpec::new(
            coeff,
            damping,
            self.epsilon,
            self.r,
            self.horizon,
            domain,
            move |p, t| forcing(p, t),
            move |p, t| v0(p, t),
            move |p, t| v1(p, t),
        )?;
        Ok(if self.forcing.is_zero() {
            spec.with_zero_forcing()
        } else {
            spec
        })
    }

    /// The limit problem's data: epsilon-prepared initial profiles are
    /// replaced by their weak limits (the plain product sine). Used for the
    /// homogenized reference runs.
    pub fn limit_config(&self) -> ProblemConfig {
        let mut limit = self.clone();
        if let DataConfig::PreparedProductSine { amplitude, mode } = limit.v0 {
            limit.v0 = DataConfig::ProductSine { amplitude, mode };
        }
        limit
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
