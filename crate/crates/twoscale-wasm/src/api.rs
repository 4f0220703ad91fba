//! Pure computation behind the browser demo: small presets of the cell
//! solver, the critical-regime homogenized matrix, and the fine-vs-
//! homogenized comparison, packaged as serializable payloads. Kept free of
//! wasm types so it is testable natively.

use serde::Serialize;
use twoscale::{
    assemble_a_hom, corrector_error, formula_skew, log_time_grid, solve_cell_elliptic,
    solve_cell_parabolic, solve_fine, solve_homogenized_periodic, sup_l2_distance,
    uncorrected_gradient_error, BoxDomain, CellSolution, CoefficientConfig, CoefficientField,
    DampingCoefficient, Error, PeriodicMesh, ProblemSpec, Result, U1Gradient,
};

const PI: f64 = std::f64::consts::PI;

#[derive(Debug, Serialize)]
pub struct CorrectorPayload {
    pub y: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_exact: Vec<f64>,
    pub a_hom: f64,
    pub a_hom_exact: f64,
    pub max_error: f64,
}

/// 1D cell problem for a(y) = 1 / (base + amplitude cos 2 pi y). The
/// closed form: a_hom = 1/base, Phi = (amplitude/base) sin(2 pi y) / (2 pi).
pub fn corrector_1d(base: f64, amplitude: f64, n: usize) -> Result<CorrectorPayload> {
    if !(base - amplitude.abs() >= 1.0) {
        return Err(Error::Config(format!(
            "need base - |amplitude| >= 1 for admissibility, got {base} - {amplitude}"
        )));
    }
    let n = n.clamp(16, 2048);
    let coeff = CoefficientConfig::CosineScalar { base, amplitude }.build(1)?;
    let mesh = PeriodicMesh::new(1, n)?;
    let cell = solve_cell_elliptic(&coeff, 0.0, 0, &mesh, 1e-12)?;
    let cells = vec![cell];
    let hm = assemble_a_hom(&coeff, &cells, &[0.0])?;
    let h = mesh.h();
    let exact = |y: f64| (amplitude / base) * (2.0 * PI * y).sin() / (2.0 * PI);
    let y: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let phi: Vec<f64> = (0..=n)
        .map(|i| cells[0].values[0][i % n])
        .collect();
    let phi_exact: Vec<f64> = y.iter().map(|&yy| exact(yy)).collect();
    let max_error = phi
        .iter()
        .zip(&phi_exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(CorrectorPayload {
        y,
        phi,
        phi_exact,
        a_hom: hm.matrices[0][0][0],
        a_hom_exact: 1.0 / base,
        max_error,
    })
}

#[derive(Debug, Serialize)]
pub struct SkewPayload {
    pub t: Vec<f64>,
    pub a00: Vec<f64>,
    pub a01: Vec<f64>,
    pub a10: Vec<f64>,
    pub a11: Vec<f64>,
    pub skew_frobenius: Vec<f64>,
    pub formula_skew01: Vec<f64>,
    pub max_skew: f64,
}

/// Critical-regime homogenized matrix for the rotating-anisotropy family:
/// a_hom(t) entries, the assembled skew norm, and the trajectory-formula
/// skew for comparison.
pub fn skew_evolution(c_star: f64, contrast: f64, rate: f64, n: usize, steps: usize) -> Result<SkewPayload> {
    if !(c_star > 0.0) {
        return Err(Error::Config("the drift constant must be positive here".into()));
    }
    let n = n.clamp(8, 64);
    let steps = steps.clamp(20, 200);
    let coeff = CoefficientConfig::RotatingAnisotropy {
        contrast: contrast.clamp(0.05, 0.8),
        rate,
        phase: 0.3,
    }
    .build(2)?;
    let lambda = twoscale::estimate_lambda(&coeff, 64)?;
    let bound = 2.0 * lambda / twoscale::poincare_constant(2);
    if c_star > bound {
        return Err(Error::Config(format!(
            "drift constant {c_star:.3} violates the smallness bound {bound:.3}"
        )));
    }
    let mesh = PeriodicMesh::new(2, n)?;
    let grid = log_time_grid(1.0, steps);
    let cells: Vec<CellSolution> = (0..2)
        .map(|k| solve_cell_parabolic(&coeff, c_star, k, &mesh, &grid, 1e-11))
        .collect::<Result<Vec<_>>>()?;
    let hm = assemble_a_hom(&coeff, &cells, &grid)?;
    let formula = formula_skew(&cells, c_star, &grid)?;
    let mut payload = SkewPayload {
        t: grid.clone(),
        a00: Vec::new(),
        a01: Vec::new(),
        a10: Vec::new(),
        a11: Vec::new(),
        skew_frobenius: Vec::new(),
        formula_skew01: Vec::new(),
        max_skew: 0.0,
    };
    for m in 0..hm.n_nodes() {
        let a = &hm.matrices[m];
        payload.a00.push(a[0][0]);
        payload.a01.push(a[0][1]);
        payload.a10.push(a[1][0]);
        payload.a11.push(a[1][1]);
        let s = hm.skew_frobenius(m);
        payload.skew_frobenius.push(s);
        payload.formula_skew01.push(formula[m][0][1]);
        payload.max_skew = payload.max_skew.max(s);
    }
    Ok(payload)
}

#[derive(Debug, Serialize)]
pub struct ComparePayload {
    pub x: Vec<f64>,
    pub u_fine: Vec<f64>,
    pub u_hom: Vec<f64>,
    pub sup_l2_distance: f64,
    pub corrector_error: f64,
    pub uncorrected_error: f64,
    pub a_hom: f64,
    pub warnings: Vec<String>,
}

/// Fine oscillating run vs the homogenized run for the 1D cosine family,
/// final-time profiles plus the sweep metrics for this single epsilon.
pub fn fine_vs_homogenized(eps_denominator: u32, r: f64, c_star: f64) -> Result<ComparePayload> {
    let eps_denominator = eps_denominator.clamp(4, 64);
    let eps = 1.0 / eps_denominator as f64;
    let r = r.clamp(0.25, 3.0);
    let c_star = c_star.clamp(0.0, 2.0);
    let horizon = 0.35;

    let coeff_cfg = CoefficientConfig::CosineScalar {
        base: 2.0,
        amplitude: 1.0,
    };
    let coeff = coeff_cfg.build(1)?;
    let damping = DampingCoefficient::new(c_star, |_| 1.0);
    let spec = ProblemSpec::new(
        coeff.clone(),
        damping,
        eps,
        r,
        horizon,
        BoxDomain::unit(1),
        |_, _| 0.0,
        |p, _| (PI * p[0]).sin(),
        |_, _| 0.0,
    )?
    .with_zero_forcing();

    let cmesh = PeriodicMesh::new(1, 256)?;
    let cells = vec![solve_cell_elliptic(&coeff, 0.0, 0, &cmesh, 1e-12)?];
    let hm = assemble_a_hom(&coeff, &cells, &[0.0])?;

    let n_space = (12 * eps_denominator as usize).min(768);
    let h = 1.0 / n_space as f64;
    let dt = h.min(eps.powf(r)) / 10.0;
    let n_time = ((horizon / dt).ceil() as usize).min(40_000);
    let fine = solve_fine(&spec, n_space, n_time, 1e-10)?;

    let hom = if c_star == 0.0 {
        solve_homogenized_periodic(&hm, 1.0, &spec, 512, 1024, 1e-10)?
    } else {
        twoscale::solve_homogenized_quasiperiodic(&spec, 512, 65)?
    };

    let u1 = U1Gradient::new(&hom, &cells, eps)?;
    let corr = corrector_error(&fine, &u1)?;
    let uncorr = uncorrected_gradient_error(&fine, &hom)?;
    let sup = sup_l2_distance(&fine, &hom)?;

    let x: Vec<f64> = (0..=n_space).map(|i| i as f64 * h).collect();
    let fine_full = fine.mesh.expand(fine.final_u());
    let hom_full = hom.mesh.expand(hom.final_u());
    let u_fine = x.iter().map(|&xx| fine.mesh.eval_full(&fine_full, [xx, 0.0])).collect();
    let u_hom = x.iter().map(|&xx| hom.mesh.eval_full(&hom_full, [xx, 0.0])).collect();

    Ok(ComparePayload {
        x,
        u_fine,
        u_hom,
        sup_l2_distance: sup,
        corrector_error: corr,
        uncorrected_error: uncorr,
        a_hom: hm.matrices[0][0][0],
        warnings: fine.meta.warnings.clone(),
    })
}

// Silence the unused warning for CoefficientField, which is part of the
// public signature surface used above.
#[allow(dead_code)]
fn _type_check(_: &CoefficientField) {}
