//! Batch experiment driver: runs the whole pipeline (validate, cell solve,
//! homogenized matrix and property checks, fine solve, homogenized solve,
//! corrector metrics) over an epsilon / r / C* grid, fits log-log rates, and
//! writes machine-readable CSV plus per-case JSON sidecars.

use crate::ahom::{
    assemble_a_hom, check_ellipticity_sandwich, check_symmetry, skew_divergence_nullcheck, Regime,
};
use crate::cell::{log_time_grid, solve_cell_elliptic_series, solve_cell_parabolic, CellSolution};
use crate::corrector::{
    corrector_error, final_distance_to, sup_l2_distance, two_scale_pairing,
    uncorrected_gradient_error, CellTestFactor, PairingField, U1Gradient, very_weak_pairing,
};
use crate::error::{Error, Result};
use crate::families::ProblemConfig;
use crate::fem::{DirichletMesh, PeriodicMesh, Point};
use crate::fine::{recommended_resolution, solve_fine_with_probes};
use crate::hom::{
    compute_h_residual, g_per_mean, solve_homogenized_periodic, solve_homogenized_quasiperiodic,
};
use crate::newmark::{PairingProbe, Trajectory};
use crate::problem::{validate_assumptions, ProblemSpec};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

const PI: f64 = std::f64::consts::PI;

fn default_epsilons() -> Vec<f64> {
    vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
}
fn default_r_values() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 3.0]
}
fn default_c_star_values() -> Vec<f64> {
    vec![0.0]
}
fn default_seed() -> u64 {
    42
}

/// Sweep description: a base problem plus the epsilon / r / C* grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: ProblemConfig,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_r_values")]
    pub r_values: Vec<f64>,
    #[serde(default = "default_c_star_values")]
    pub c_star_values: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    #[serde(default)]
    pub workers: usize,
    /// Compute the (more expensive) pairing metrics.
    #[serde(default)]
    pub pairings: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("empty epsilon list".into()));
        }
        for w in self.epsilons.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::Config(
                    "epsilon list must be strictly decreasing".into(),
                ));
            }
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("epsilon values must lie in (0, 1)".into()));
        }
        if self.r_values.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Config("r values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseStatus {
    Ok,
    FlaggedUnderresolved,
    Failed,
}

impl CaseStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseStatus::Ok => "ok",
            CaseStatus::FlaggedUnderresolved => "flagged-underresolved",
            CaseStatus::Failed => "failed",
        }
    }
}

/// Which cell problem the regime dispatch selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellPath {
    Elliptic,
    Parabolic,
}

impl CellPath {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellPath::Elliptic => "elliptic",
            CellPath::Parabolic => "parabolic",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseResult {
    pub epsilon: f64,
    pub r: f64,
    pub c_star: f64,
    pub status: CaseStatus,
    pub path: CellPath,
    pub metrics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub cases: Vec<CaseResult>,
    /// Log-log slopes vs epsilon, keyed `metric@r=<r>,c=<c_star>`, fitted
    /// over ok cases only.
    pub slopes: BTreeMap<String, RateFit>,
}

impl SweepResult {
    pub fn any_failed(&self) -> bool {
        self.cases.iter().any(|c| c.status == CaseStatus::Failed)
    }
}

/// Least-squares slope of log(metric) against log(epsilon) over ok cases
/// with positive metric values. Needs at least three usable points.
pub fn fit_rates(cases: &[&CaseResult], metric: &str) -> Result<RateFit> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for case in cases {
        if case.status != CaseStatus::Ok {
            continue;
        }
        if let Some(&value) = case.metrics.get(metric) {
            if value > 0.0 && value.is_finite() {
                points.push((case.epsilon.ln(), value.ln()));
            }
        }
    }
    if points.len() < 3 {
        return Err(Error::Estimation {
            needed: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let residual2: f64 = points
        .iter()
        .map(|p| (p.1 - mean_y - slope * (p.0 - mean_x)).powi(2))
        .sum();
    let dof = (points.len().max(3) - 2) as f64;
    let stderr = (residual2 / dof / sxx).sqrt();
    Ok(RateFit {
        slope,
        stderr,
        n_points: points.len(),
    })
}

/// Metrics that make sense to fit against epsilon.
const RATE_METRICS: &[&str] = &[
    "sup_l2_diff",
    "final_l2_diff",
    "corrector_err",
    "uncorrected_err",
    "sqrt_t_velocity_norm",
    "two_scale_flux_gap",
    "very_weak_gap",
    "h_pairing_gap",
];

struct CaseOutput {
    result: CaseResult,
}

fn probe_phi(mesh: &DirichletMesh) -> Vec<f64> {
    let domain = mesh.domain;
    mesh.interpolate(|p: Point| {
        let mut v = 1.0;
        for d in 0..domain.dim {
            v *= (PI * (p[d] - domain.min[d]) / domain.side(d)).sin();
        }
        v
    })
}

/// Runs one (epsilon, r, C*) case through the full pipeline.
fn run_case(base: &ProblemConfig, epsilon: f64, r: f64, c_star: f64, pairings: bool) -> Result<CaseOutput> {
    let mut config = base.clone();
    config.epsilon = epsilon;
    config.r = r;
    config.damping.c_star = c_star;
    let res = config.resolution.clone();
    let spec: ProblemSpec = config.build()?;
    // The homogenized reference solves the limit problem: prepared initial
    // data is replaced by its weak limit.
    let limit_spec: ProblemSpec = config.limit_config().build()?;
    let dim = spec.coeff.dim;
    let tol = res.solver_tol;

    let mut metrics = BTreeMap::new();
    let mut warnings = Vec::new();

    // 1. Validation.
    let report = validate_assumptions(&spec, res.probe_resolution)?;
    metrics.insert("lambda_hat".into(), report.lambda_hat);
    metrics.insert(
        "validation_pass".into(),
        if report.pass { 1.0 } else { 0.0 },
    );
    if !report.pass {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        return Err(Error::Data(format!(
            "validation failed: {}",
            failed.join(", ")
        )));
    }

    // 2. Regime dispatch and cell solve.
    let cell_mesh = PeriodicMesh::new(dim, res.cell_n)?;
    let parabolic = spec.needs_parabolic_cell();
    let path = if parabolic {
        CellPath::Parabolic
    } else {
        CellPath::Elliptic
    };
    let (cells, cell_times): (Vec<CellSolution>, Vec<f64>) = if parabolic {
        let grid = log_time_grid(spec.horizon, res.cell_time_steps);
        let cells = (0..dim)
            .map(|k| solve_cell_parabolic(&spec.coeff, c_star, k, &cell_mesh, &grid, tol))
            .collect::<Result<Vec<_>>>()?;
        (cells, grid)
    } else if spec.coeff.time_dependent {
        let times: Vec<f64> = (0..=32)
            .map(|i| spec.horizon * i as f64 / 32.0)
            .collect();
        let cells = (0..dim)
            .map(|k| solve_cell_elliptic_series(&spec.coeff, &times, k, &cell_mesh, tol))
            .collect::<Result<Vec<_>>>()?;
        (cells, times)
    } else {
        let times = vec![0.0];
        let cells = (0..dim)
            .map(|k| solve_cell_elliptic_series(&spec.coeff, &times, k, &cell_mesh, tol))
            .collect::<Result<Vec<_>>>()?;
        (cells, times)
    };

    // 3. Homogenized matrix and property checks.
    let a_hom = assemble_a_hom(&spec.coeff, &cells, &cell_times)?;
    metrics.insert("ahom_00".into(), a_hom.matrices[0][0][0]);
    metrics.insert(
        "ahom_margin_min".into(),
        (0..a_hom.n_nodes())
            .map(|m| a_hom.ellipticity_margin(m))
            .fold(f64::MAX, f64::min),
    );
    let mut rng = SeededRng::new(0xA5A5);
    let mut directions: Vec<[f64; 2]> = Vec::new();
    for k in 0..dim {
        let mut e = [0.0; 2];
        e[k] = 1.0;
        directions.push(e);
    }
    for _ in 0..8 {
        directions.push(rng.unit_vector(dim));
    }
    let sandwich =
        check_ellipticity_sandwich(&a_hom, &cells, &spec.coeff, c_star, &directions, 128)?;
    metrics.insert(
        "sandwich_pass".into(),
        if sandwich.pass { 1.0 } else { 0.0 },
    );
    let symmetry = check_symmetry(
        &a_hom,
        Regime {
            r,
            c_star,
            time_dependent: spec.coeff.time_dependent,
        },
    );
    metrics.insert("skew_max".into(), symmetry.max_skew);
    metrics.insert(
        "symmetry_pass".into(),
        if symmetry.pass { 1.0 } else { 0.0 },
    );
    let hessians = [
        [[2.0, 0.0], [0.0, 0.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[2.0, 3.0], [3.0, -1.0]],
    ];
    metrics.insert(
        "skew_contraction_max".into(),
        skew_divergence_nullcheck(&a_hom, &hessians),
    );
    if !sandwich.pass || !symmetry.pass {
        return Err(Error::Data(
            "homogenized matrix property check failed".into(),
        ));
    }

    // 4. Fine solve, with the drift pairing probe when C* != 0.
    let (n_space, n_time) =
        recommended_resolution(&spec, res.fine_space_factor, res.fine_dt_safety);
    let fine_mesh = crate::fine::fine_mesh(&spec, n_space)?;
    let sigma_lower = 0.2 * spec.horizon;
    let probes = if c_star != 0.0 {
        vec![PairingProbe {
            name: "drift_pairing".into(),
            phi: probe_phi(&fine_mesh),
            sigma_lower,
        }]
    } else {
        Vec::new()
    };
    let fine = solve_fine_with_probes(&spec, n_space, n_time, tol, &probes)?;
    warnings.extend(fine.meta.warnings.iter().cloned());
    metrics.insert(
        "sqrt_t_velocity_norm".into(),
        fine.diagnostics
            .sqrt_t_cumulative
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
            .sqrt(),
    );
    metrics.insert(
        "energy_max".into(),
        fine.diagnostics
            .energy
            .iter()
            .cloned()
            .fold(0.0f64, f64::max),
    );
    let series = crate::fine::energy_diagnostics(&fine)?;
    metrics.insert(
        "h10_max".into(),
        series.h10_norm.iter().cloned().fold(0.0f64, f64::max),
    );

    // 5. Homogenized solve.
    let hom_n = if res.hom_n == 0 { 2 * n_space } else { res.hom_n };
    let hom_steps = if res.hom_time_steps == 0 {
        4 * hom_n
    } else {
        res.hom_time_steps
    };
    let hom: Trajectory = if c_star == 0.0 {
        solve_homogenized_periodic(&a_hom, g_per_mean(&spec), &limit_spec, hom_n, hom_steps, tol)?
    } else {
        solve_homogenized_quasiperiodic(&limit_spec, hom_n, 65)?
    };

    // 6. Corrector metrics.
    metrics.insert("sup_l2_diff".into(), sup_l2_distance(&fine, &hom)?);
    let v0 = limit_spec.v0.clone();
    metrics.insert(
        "final_l2_diff".into(),
        if c_star == 0.0 {
            let hom_full = hom.mesh.expand(hom.final_u());
            let hm = &hom.mesh;
            final_distance_to(&fine, &|p| hm.eval_full(&hom_full, p))?
        } else {
            final_distance_to(&fine, &|p| v0(p, 0.0))?
        },
    );
    let u1 = U1Gradient::new(&hom, &cells, epsilon)?;
    metrics.insert("corrector_err".into(), corrector_error(&fine, &u1)?);
    metrics.insert(
        "uncorrected_err".into(),
        uncorrected_gradient_error(&fine, &hom)?,
    );

    if pairings {
        let domain = spec.domain;
        let phi = move |x: Point| {
            let mut v = 1.0;
            for d in 0..domain.dim {
                v *= (PI * (x[d] - domain.min[d]) / domain.side(d)).sin();
            }
            v
        };
        let psi = |_: f64| 1.0;
        let b_grad = |y: Point| [(2.0 * PI * y[0]).cos(), 0.0];
        let flux = two_scale_pairing(
            &fine,
            &spec,
            PairingField::Flux,
            &CellTestFactor::GradientOf(&b_grad),
            &phi,
            &psi,
            &hom,
            &cells,
        )?;
        metrics.insert("two_scale_flux_gap".into(), flux.gap());
        let b = |y: Point| (2.0 * PI * y[0]).cos();
        let vw = very_weak_pairing(&fine, &b, &phi, &psi, epsilon, &hom, &cells)?;
        metrics.insert("very_weak_gap".into(), vw.gap());
    }

    // 7. Drift-regime residual and its pairing check.
    if c_star != 0.0 {
        let h_times: Vec<f64> = (0..=8)
            .map(|i| spec.horizon * i as f64 / 8.0)
            .collect();
        let h_field = compute_h_residual(&a_hom, &limit_spec, &fine.mesh, &h_times, tol)?;
        // Time-averaged pairing target: int_{sigma}^{T} (h, phi) dt.
        let mass = crate::fem::assemble_mass_dirichlet(&fine.mesh, &|_| 1.0)?;
        let phi_vec = probe_phi(&fine.mesh);
        let mphi = mass.apply(&phi_vec);
        let mut target = 0.0;
        for i in 0..h_times.len() - 1 {
            let (t0, t1) = (h_times[i], h_times[i + 1]);
            let lo = t0.max(sigma_lower);
            if t1 <= lo {
                continue;
            }
            let p0: f64 = h_field.values[i].iter().zip(&mphi).map(|(a, b)| a * b).sum();
            let p1: f64 = h_field.values[i + 1]
                .iter()
                .zip(&mphi)
                .map(|(a, b)| a * b)
                .sum();
            target += 0.5 * (t1 - lo) * (p0 + p1);
        }
        let pairing = fine
            .diagnostics
            .probe_integrals
            .get("drift_pairing")
            .copied()
            .unwrap_or(0.0);
        metrics.insert("h_pairing_gap".into(), (pairing - target).abs());
    }

    let status = if warnings.is_empty() {
        CaseStatus::Ok
    } else {
        CaseStatus::FlaggedUnderresolved
    };
    Ok(CaseOutput {
        result: CaseResult {
            epsilon,
            r,
            c_star,
            status,
            path,
            metrics,
            warnings,
            error: None,
            wall_ms: 0,
        },
    })
}

/// Runs every case of the sweep on a worker pool; case order (and therefore
/// every output file) is deterministic regardless of scheduling.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let mut case_params = Vec::new();
    for &c_star in &config.c_star_values {
        for &r in &config.r_values {
            for &epsilon in &config.epsilons {
                case_params.push((epsilon, r, c_star));
            }
        }
    }

    let n_workers = if config.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(case_params.len().max(1))
    } else {
        config.workers
    };

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CaseResult>>> = Mutex::new(vec![None; case_params.len()]);
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= case_params.len() {
                    break;
                }
                let (epsilon, r, c_star) = case_params[idx];
                let started = std::time::Instant::now();
                let outcome = run_case(&config.base, epsilon, r, c_star, config.pairings);
                let wall_ms = started.elapsed().as_millis();
                let result = match outcome {
                    Ok(mut out) => {
                        out.result.wall_ms = wall_ms;
                        out.result
                    }
                    Err(err) => CaseResult {
                        epsilon,
                        r,
                        c_star,
                        status: CaseStatus::Failed,
                        path: CellPath::Elliptic,
                        metrics: BTreeMap::new(),
                        warnings: Vec::new(),
                        error: Some(format!("{err}")),
                        wall_ms,
                    },
                };
                slots.lock().unwrap()[idx] = Some(result);
            });
        }
    });
    let cases: Vec<CaseResult> = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|c| c.expect("worker filled every slot"))
        .collect();

    // Rate fits per (r, C*) group over the epsilon axis.
    let mut slopes = BTreeMap::new();
    for &c_star in &config.c_star_values {
        for &r in &config.r_values {
            let group: Vec<&CaseResult> = cases
                .iter()
                .filter(|c| c.r == r && c.c_star == c_star)
                .collect();
            for metric in RATE_METRICS {
                if let Ok(fit) = fit_rates(&group, metric) {
                    slopes.insert(format!("{metric}@r={r},c={c_star}"), fit);
                }
            }
        }
    }

    Ok(SweepResult { cases, slopes })
}

/// Writes summary.csv, slopes.csv, and one JSON sidecar per case. Wall
/// times live only in the sidecars so the CSVs are byte-reproducible.
pub fn write_sweep_outputs(result: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(dir.join("summary.csv"))?);
    writeln!(summary, "epsilon,r,c_star,status,path,metric,value")?;
    for case in &result.cases {
        for (metric, value) in &case.metrics {
            writeln!(
                summary,
                "{:.16e},{:.16e},{:.16e},{},{},{},{:.16e}",
                case.epsilon,
                case.r,
                case.c_star,
                case.status.as_str(),
                case.path.as_str(),
                metric,
                value
            )?;
        }
    }
    drop(summary);

    let mut slopes = std::io::BufWriter::new(std::fs::File::create(dir.join("slopes.csv"))?);
    writeln!(slopes, "key,slope,stderr,n_points")?;
    for (key, fit) in &result.slopes {
        writeln!(
            slopes,
            "{key},{:.16e},{:.16e},{}",
            fit.slope, fit.stderr, fit.n_points
        )?;
    }
    drop(slopes);

    for (i, case) in result.cases.iter().enumerate() {
        std::fs::write(
            dir.join(format!("case_{i:03}.json")),
            serde_json::to_string_pretty(case)?,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{
        CoefficientConfig, DampingConfig, DataConfig, DomainConfig, GPerConfig, ResolutionConfig,
    };

    fn tiny_base() -> ProblemConfig {
        ProblemConfig {
            dim: 1,
            coefficient: CoefficientConfig::CosineScalar {
                base: 2.0,
                amplitude: 1.0,
            },
            damping: DampingConfig {
                g_per: GPerConfig::Constant { value: 1.0 },
                c_star: 0.0,
            },
            epsilon: 0.125,
            r: 1.0,
            horizon: 0.25,
            domain: DomainConfig::unit(1),
            forcing: DataConfig::Zero,
            v0: DataConfig::ProductSine {
                amplitude: 1.0,
                mode: 1,
            },
            v1: DataConfig::Zero,
            resolution: ResolutionConfig {
                cell_n: 64,
                cell_time_steps: 40,
                fine_space_factor: 12.0,
                fine_dt_safety: 10.0,
                hom_n: 128,
                hom_time_steps: 256,
                probe_resolution: 64,
                solver_tol: 1e-10,
            },
        }
    }

    fn tiny_sweep() -> SweepConfig {
        SweepConfig {
            base: tiny_base(),
            epsilons: vec![1.0 / 8.0, 1.0 / 16.0],
            r_values: vec![1.0],
            c_star_values: vec![0.0],
            seed: 42,
            workers: 2,
            pairings: false,
        }
    }

    #[test]
    fn exact_power_laws_fit_their_slopes() {
        let make = |eps: f64, value: f64| CaseResult {
            epsilon: eps,
            r: 1.0,
            c_star: 0.0,
            status: CaseStatus::Ok,
            path: CellPath::Elliptic,
            metrics: BTreeMap::from([("m".to_string(), value)]),
            warnings: vec![],
            error: None,
            wall_ms: 0,
        };
        let linear: Vec<CaseResult> = [0.125, 0.0625, 0.03125, 0.015625]
            .iter()
            .map(|&e| make(e, 3.0 * e))
            .collect();
        let refs: Vec<&CaseResult> = linear.iter().collect();
        let fit = fit_rates(&refs, "m").unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);

        let quadratic: Vec<CaseResult> = [0.125, 0.0625, 0.03125]
            .iter()
            .map(|&e| make(e, 0.5 * e * e))
            .collect();
        let refs: Vec<&CaseResult> = quadratic.iter().collect();
        let fit = fit_rates(&refs, "m").unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);

        let short: Vec<CaseResult> = [0.125, 0.0625].iter().map(|&e| make(e, e)).collect();
        let refs: Vec<&CaseResult> = short.iter().collect();
        assert!(matches!(
            fit_rates(&refs, "m"),
            Err(Error::Estimation { .. })
        ));
    }

    #[test]
    fn flagged_cases_are_excluded_from_fits() {
        let mut cases: Vec<CaseResult> = [0.125, 0.0625, 0.03125, 0.015625]
            .iter()
            .map(|&e| CaseResult {
                epsilon: e,
                r: 1.0,
                c_star: 0.0,
                status: CaseStatus::Ok,
                path: CellPath::Elliptic,
                metrics: BTreeMap::from([("m".to_string(), e)]),
                warnings: vec![],
                error: None,
                wall_ms: 0,
            })
            .collect();
        cases[3].status = CaseStatus::FlaggedUnderresolved;
        cases[3].metrics.insert("m".into(), 1e9); // would wreck the fit
        let refs: Vec<&CaseResult> = cases.iter().collect();
        let fit = fit_rates(&refs, "m").unwrap();
        assert_eq!(fit.n_points, 3);
        assert!((fit.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_config_validation() {
        let mut config = tiny_sweep();
        config.epsilons = vec![0.125, 0.125];
        assert!(config.validate().is_err());
        config.epsilons = vec![0.5, 0.25];
        config.r_values = vec![0.0];
        assert!(config.validate().is_err());
    }

    #[test]
    fn regime_dispatch_follows_the_scale_and_drift() {
        // r = 2 with drift and time dependence -> parabolic; otherwise
        // elliptic (including r = 2 with frozen coefficient).
        let mut config = tiny_sweep();
        config.base.coefficient = CoefficientConfig::SeparableExponential {
            base: Box::new(CoefficientConfig::CosineScalar {
                base: 2.0,
                amplitude: 1.0,
            }),
        };
        config.base.resolution.cell_n = 32;
        config.base.resolution.cell_time_steps = 24;
        config.base.resolution.fine_space_factor = 10.0;
        config.epsilons = vec![0.25];
        config.r_values = vec![1.0, 2.0];
        config.c_star_values = vec![0.0, 0.5];
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.cases.len(), 4);
        for case in &result.cases {
            let expect = if case.r == 2.0 && case.c_star != 0.0 {
                CellPath::Parabolic
            } else {
                CellPath::Elliptic
            };
            assert_eq!(case.path, expect, "case {case:?}");
            assert_eq!(case.status, CaseStatus::Ok, "{:?}", case.error);
        }
    }

    #[test]
    fn sweep_outputs_are_byte_identical_across_runs() {
        let config = tiny_sweep();
        let dir_a = std::env::temp_dir().join("twoscale_sweep_det_a");
        let dir_b = std::env::temp_dir().join("twoscale_sweep_det_b");
        let result_a = run_sweep(&config).unwrap();
        write_sweep_outputs(&result_a, &dir_a).unwrap();
        let result_b = run_sweep(&config).unwrap();
        write_sweep_outputs(&result_b, &dir_b).unwrap();
        for name in ["summary.csv", "slopes.csv"] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        assert!(!result_a.any_failed());
        std::fs::remove_dir_all(&dir_a).ok();
        std::fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn drift_pairing_gap_decreases_with_epsilon() {
        // The time-averaged (t / eps^r) velocity pairing approaches the
        // reconstructed-residual pairing as eps shrinks.
        let mut config = tiny_sweep();
        config.base.damping.c_star = 1.0;
        config.base.r = 2.0;
        config.epsilons = vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
        config.r_values = vec![2.0];
        config.c_star_values = vec![1.0];
        let result = run_sweep(&config).unwrap();
        assert!(!result.any_failed());
        let gaps: Vec<f64> = result
            .cases
            .iter()
            .map(|c| c.metrics["h_pairing_gap"])
            .collect();
        assert!(
            gaps.last().unwrap() < &gaps[0],
            "pairing gap did not shrink: {gaps:?}"
        );
        // Drift regime reports the frozen-limit distance.
        for case in &result.cases {
            assert!(case.metrics.contains_key("final_l2_diff"));
            assert_eq!(case.path, CellPath::Elliptic); // frozen-in-time coefficient
        }
    }

    #[test]
    fn failed_validation_is_recorded_not_fatal() {
        let mut config = tiny_sweep();
        // C* too large for the r = 2 smallness bound (2/3 pi^2 ~ 6.58).
        config.r_values = vec![2.0];
        config.c_star_values = vec![50.0];
        config.epsilons = vec![0.25];
        let result = run_sweep(&config).unwrap();
        assert_eq!(result.cases.len(), 1);
        assert_eq!(result.cases[0].status, CaseStatus::Failed);
        assert!(result.any_failed());
        let err = result.cases[0].error.as_ref().unwrap();
        assert!(err.contains("r2_smallness"), "{err}");
    }
}
