//! Batch experiment driver for the homogenization toolkit.
//!
//! Exit codes: 0 on success, 1 when sweep cases failed, 2 on configuration
//! or validation errors.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use twoscale::{
    assemble_a_hom, check_ellipticity_sandwich, check_symmetry, compute_h_residual,
    energy_diagnostics, fit_rates, g_per_mean, log_time_grid, recommended_resolution, run_sweep,
    skew_divergence_nullcheck, solve_cell_elliptic_series, solve_cell_parabolic,
    solve_homogenized_periodic, solve_homogenized_quasiperiodic, validate_assumptions,
    write_sweep_outputs, CaseResult, CaseStatus, CellPath, CellSolution, PeriodicMesh,
    ProblemConfig, ProblemSpec, Regime, SweepConfig,
};

#[derive(Parser)]
#[command(
    name = "twoscale",
    about = "Homogenization pipeline for damped waves with oscillating coefficients",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check problem data against the admissibility assumptions.
    Validate(Common),
    /// Solve the cell problems and export the corrector fields.
    Cell(Common),
    /// Assemble the homogenized matrix with its property reports.
    Ahom(Common),
    /// Run the fine-scale oscillating solver.
    SolveFine(Common),
    /// Run the homogenized solver for the configured regime.
    SolveHom(Common),
    /// Run the full single-case pipeline and export corrector metrics.
    Corrector(Common),
    /// Run an epsilon / r / C* sweep.
    Sweep(Common),
    /// Fit log-log rates from a sweep summary.
    Rates(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(c) => cmd_validate(c),
        Command::Cell(c) => cmd_cell(c),
        Command::Ahom(c) => cmd_ahom(c),
        Command::SolveFine(c) => cmd_solve_fine(c),
        Command::SolveHom(c) => cmd_solve_hom(c),
        Command::Corrector(c) => cmd_corrector(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Rates(c) => cmd_rates(c),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_problem(path: &Path) -> Result<(ProblemConfig, ProblemSpec)> {
    let config = ProblemConfig::load(path)
        .with_context(|| format!("loading problem config {}", path.display()))?;
    let spec = config.build().context("building problem from config")?;
    Ok((config, spec))
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_validate(common: &Common) -> Result<ExitCode> {
    let (_, spec) = load_problem(&common.config)?;
    ensure_out(&common.out)?;
    let report = validate_assumptions(&spec, 256)?;
    std::fs::write(
        common.out.join("validation.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    for check in &report.checks {
        println!(
            "{:<38} {}  margin {:+.3e}  {}",
            check.name,
            if check.pass { "pass" } else { "FAIL" },
            check.margin,
            check.detail
        );
    }
    println!(
        "overall: {} (lambda_hat = {:.6})",
        if report.pass { "pass" } else { "FAIL" },
        report.lambda_hat
    );
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

/// Regime dispatch shared by the cell / ahom / corrector commands.
fn solve_cells(spec: &ProblemSpec, config: &ProblemConfig) -> Result<(Vec<CellSolution>, Vec<f64>, CellPath)> {
    let res = &config.resolution;
    let mesh = PeriodicMesh::new(spec.coeff.dim, res.cell_n)?;
    let tol = res.solver_tol;
    if spec.needs_parabolic_cell() {
        let grid = log_time_grid(spec.horizon, res.cell_time_steps);
        let cells = (0..spec.coeff.dim)
            .map(|k| {
                solve_cell_parabolic(&spec.coeff, spec.damping.c_star, k, &mesh, &grid, tol)
            })
            .collect::<twoscale::Result<Vec<_>>>()?;
        Ok((cells, grid, CellPath::Parabolic))
    } else if spec.coeff.time_dependent {
        let times: Vec<f64> = (0..=32).map(|i| spec.horizon * i as f64 / 32.0).collect();
        let cells = (0..spec.coeff.dim)
            .map(|k| solve_cell_elliptic_series(&spec.coeff, &times, k, &mesh, tol))
            .collect::<twoscale::Result<Vec<_>>>()?;
        Ok((cells, times, CellPath::Elliptic))
    } else {
        let times = vec![0.0];
        let cells = (0..spec.coeff.dim)
            .map(|k| solve_cell_elliptic_series(&spec.coeff, &times, k, &mesh, tol))
            .collect::<twoscale::Result<Vec<_>>>()?;
        Ok((cells, times, CellPath::Elliptic))
    }
}

fn cmd_cell(common: &Common) -> Result<ExitCode> {
    let (config, spec) = load_problem(&common.config)?;
    ensure_out(&common.out)?;
    let (cells, _, path) = solve_cells(&spec, &config)?;
    for (k, cell) in cells.iter().enumerate() {
        cell.save(&common.out, &format!("cell_k{k}"))?;
    }
    println!(
        "solved {} cell problem(s) on the {} path; fields in {}",
        cells.len(),
        path.as_str(),
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_ahom(common: &Common) -> Result<ExitCode> {
    let (config, spec) = load_problem(&common.config)?;
    ensure_out(&common.out)?;
    let (cells, times, path) = solve_cells(&spec, &config)?;
    let hm = assemble_a_hom(&spec.coeff, &cells, &times)?;
    hm.write_csv(&common.out.join("ahom.csv"))?;

    let dim = spec.coeff.dim;
    let mut directions: Vec<[f64; 2]> = Vec::new();
    for k in 0..dim {
        let mut e = [0.0; 2];
        e[k] = 1.0;
        directions.push(e);
    }
    let mut rng = twoscale::rng::SeededRng::new(0xA5A5);
    for _ in 0..8 {
        directions.push(rng.unit_vector(dim));
    }
    let sandwich = check_ellipticity_sandwich(
        &hm,
        &cells,
        &spec.coeff,
        spec.damping.c_star,
        &directions,
        256,
    )?;
    let symmetry = check_symmetry(
        &hm,
        Regime {
            r: spec.r_exponent,
            c_star: spec.damping.c_star,
            time_dependent: spec.coeff.time_dependent,
        },
    );
    let hessians = [
        [[2.0, 0.0], [0.0, 0.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[2.0, 3.0], [3.0, -1.0]],
    ];
    let nullcheck = skew_divergence_nullcheck(&hm, &hessians);
    let report = serde_json::json!({
        "path": path.as_str(),
        "sandwich_pass": sandwich.pass,
        "sandwich_tolerance": sandwich.tolerance,
        "symmetry": symmetry,
        "skew_contraction_max": nullcheck,
    });
    std::fs::write(
        common.out.join("ahom_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!(
        "a_hom on {} nodes ({} path): sandwich {}, relative skew {:.3e}, contraction {:.3e}",
        hm.n_nodes(),
        path.as_str(),
        if sandwich.pass { "pass" } else { "FAIL" },
        symmetry.max_relative_skew,
        nullcheck
    );
    Ok(if sandwich.pass && symmetry.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_solve_fine(common: &Common) -> Result<ExitCode> {
    let (config, spec) = load_problem(&common.config)?;
    ensure_out(&common.out)?;
    let res = &config.resolution;
    let (n_space, n_time) =
        recommended_resolution(&spec, res.fine_space_factor, res.fine_dt_safety);
    let traj = twoscale::solve_fine(&spec, n_space, n_time, res.solver_tol)?;
    let series = energy_diagnostics(&traj)?;
    series.write_csv(&common.out.join("diagnostics.csv"))?;
    let snapshot_times = [0.0, 0.5 * spec.horizon, spec.horizon];
    traj.write_snapshots_csv(&common.out.join("snapshots.csv"), &snapshot_times)?;
    std::fs::write(
        common.out.join("meta.json"),
        serde_json::to_string_pretty(&traj.meta)?,
    )?;
    for warn in &traj.meta.warnings {
        eprintln!("warning: {warn}");
    }
    println!(
        "fine solve: {} unknowns, {} steps (dt = {:.3e}), {} warnings",
        traj.mesh.n_interior(),
        traj.meta.n_steps,
        traj.meta.dt,
        traj.meta.warnings.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve_hom(common: &Common) -> Result<ExitCode> {
    let (config, spec) = load_problem(&common.config)?;
    ensure_out(&common.out)?;
    let res = &config.resolution;
    let (n_fine, _) = recommended_resolution(&spec, res.fine_space_factor, res.fine_dt_safety);
    let hom_n = if res.hom_n == 0 { 2 * n_fine } else { res.hom_n };
    let hom_steps = if res.hom_time_steps == 0 {
        4 * hom_n
    } else {
        res.hom_time_steps
    };
    let traj = if spec.damping.c_star == 0.0 {
        let (cells, times, _) = solve_cells(&spec, &config)?;
        let hm = assemble_a_hom(&spec.coeff, &cells, &times)?;
        hm.write_csv(&common.out.join("ahom.csv"))?;
        solve_homogenized_periodic(&hm, g_per_mean(&spec), &spec, hom_n, hom_steps, res.solver_tol)?
    } else {
        let (cells, times, _) = solve_cells(&spec, &config)?;
        let hm = assemble_a_hom(&spec.coeff, &cells, &times)?;
        hm.write_csv(&common.out.join("ahom.csv"))?;
        let traj = solve_homogenized_quasiperiodic(&spec, hom_n, 65)?;
        let h_times: Vec<f64> = (0..=8).map(|i| spec.horizon * i as f64 / 8.0).collect();
        let h_field = compute_h_residual(&hm, &spec, &traj.mesh, &h_times, res.solver_tol)?;
        h_field.write_csv(&common.out.join("h_residual.csv"))?;
        traj
    };
    let series = energy_diagnostics(&traj)?;
    series.write_csv(&common.out.join("diagnostics.csv"))?;
    traj.write_snapshots_csv(
        &common.out.join("snapshots.csv"),
        &[0.0, 0.5 * spec.horizon, spec.horizon],
    )?;
    println!(
        "homogenized solve ({} regime): {} unknowns, {} stored slices",
        if spec.damping.c_star == 0.0 {
            "drift-free"
        } else {
            "drift"
        },
        traj.mesh.n_interior(),
        traj.times.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_corrector(common: &Common) -> Result<ExitCode> {
    let config = ProblemConfig::load(&common.config)?;
    ensure_out(&common.out)?;
    // The sweep runner already implements the full single-case pipeline.
    let sweep = SweepConfig {
        base: config.clone(),
        epsilons: vec![config.epsilon],
        r_values: vec![config.r],
        c_star_values: vec![config.damping.c_star],
        seed: 42,
        workers: 1,
        pairings: true,
    };
    let result = run_sweep(&sweep)?;
    let case = &result.cases[0];
    if case.status == CaseStatus::Failed {
        anyhow::bail!(
            "case failed: {}",
            case.error.as_deref().unwrap_or("unknown error")
        );
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(
        common.out.join("metrics.csv"),
    )?);
    writeln!(out, "epsilon,r,c_star,metric,value")?;
    for (metric, value) in &case.metrics {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{metric},{value:.16e}",
            case.epsilon, case.r, case.c_star
        )?;
    }
    drop(out);
    println!(
        "corrector metrics for eps = {}, r = {}, C* = {} ({} path): {} metrics in metrics.csv",
        case.epsilon,
        case.r,
        case.c_star,
        case.path.as_str(),
        case.metrics.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(common: &Common) -> Result<ExitCode> {
    let config = SweepConfig::load(&common.config)
        .with_context(|| format!("loading sweep config {}", common.config.display()))?;
    config.validate().context("invalid sweep config")?;
    let result = run_sweep(&config)?;
    write_sweep_outputs(&result, &common.out)?;
    let mut ok = 0;
    let mut flagged = 0;
    let mut failed = 0;
    for case in &result.cases {
        match case.status {
            CaseStatus::Ok => ok += 1,
            CaseStatus::FlaggedUnderresolved => flagged += 1,
            CaseStatus::Failed => failed += 1,
        }
        println!(
            "eps = {:<10.6} r = {:<5} C* = {:<5} {:<22} {}",
            case.epsilon,
            case.r,
            case.c_star,
            case.status.as_str(),
            case.error.as_deref().unwrap_or("")
        );
    }
    println!(
        "sweep complete: {ok} ok, {flagged} flagged, {failed} failed; outputs in {}",
        common.out.display()
    );
    Ok(if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(serde::Deserialize)]
struct RatesConfig {
    summary_csv: PathBuf,
    metric: String,
    r: Option<f64>,
    c_star: Option<f64>,
}

fn cmd_rates(common: &Common) -> Result<ExitCode> {
    let config: RatesConfig = serde_json::from_str(
        &std::fs::read_to_string(&common.config)
            .with_context(|| format!("loading rates config {}", common.config.display()))?,
    )
    .context("parsing rates config")?;
    ensure_out(&common.out)?;
    let text = std::fs::read_to_string(&config.summary_csv)
        .with_context(|| format!("reading {}", config.summary_csv.display()))?;
    // Rebuild minimal case records from the long-format summary.
    let mut by_case: BTreeMap<(u64, u64, u64), CaseResult> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            continue;
        }
        let epsilon: f64 = parts[0].parse()?;
        let r: f64 = parts[1].parse()?;
        let c_star: f64 = parts[2].parse()?;
        if let Some(want) = config.r {
            if r != want {
                continue;
            }
        }
        if let Some(want) = config.c_star {
            if c_star != want {
                continue;
            }
        }
        let status = match parts[3] {
            "ok" => CaseStatus::Ok,
            "flagged-underresolved" => CaseStatus::FlaggedUnderresolved,
            _ => CaseStatus::Failed,
        };
        let key = (epsilon.to_bits(), r.to_bits(), c_star.to_bits());
        let case = by_case.entry(key).or_insert_with(|| CaseResult {
            epsilon,
            r,
            c_star,
            status,
            path: CellPath::Elliptic,
            metrics: BTreeMap::new(),
            warnings: Vec::new(),
            error: None,
            wall_ms: 0,
        });
        case.metrics.insert(parts[5].to_string(), parts[6].parse()?);
    }
    let cases: Vec<&CaseResult> = by_case.values().collect();
    let fit = fit_rates(&cases, &config.metric)
        .with_context(|| format!("fitting metric {}", config.metric))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(common.out.join("rates.csv"))?);
    writeln!(out, "metric,slope,stderr,n_points")?;
    writeln!(
        out,
        "{},{:.16e},{:.16e},{}",
        config.metric, fit.slope, fit.stderr, fit.n_points
    )?;
    drop(out);
    println!(
        "{}: slope {:.4} +/- {:.4} over {} points",
        config.metric, fit.slope, fit.stderr, fit.n_points
    );
    Ok(ExitCode::SUCCESS)
}
