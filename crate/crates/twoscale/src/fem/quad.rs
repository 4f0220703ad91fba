//! Tensor-product Gauss quadrature on axis-aligned elements.
//!
//! Everything in the crate integrates with the same 2-point Gauss rule per
//! axis: it is exact for products of Q1 gradients with constant coefficients,
//! and oscillating coefficients are sampled directly at the quadrature points.

/// 2-point Gauss abscissae on the reference interval [0, 1].
pub const GAUSS2_POINTS: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_88, // 0.5 - 1/(2*sqrt(3))
    0.5 + 0.288_675_134_594_812_88,
];

/// Matching weights on [0, 1].
pub const GAUSS2_WEIGHTS: [f64; 2] = [0.5, 0.5];

/// Quadrature nodes of the tensor rule on the reference cube \[0,1\]^dim,
/// as (local coordinates, weight). `dim` is 1 or 2.
pub fn reference_rule(dim: usize) -> Vec<([f64; 2], f64)> {
    match dim {
        1 => GAUSS2_POINTS
            .iter()
            .zip(GAUSS2_WEIGHTS)
            .map(|(&p, w)| ([p, 0.0], w))
            .collect(),
        2 => {
            let mut rule = Vec::with_capacity(4);
            for (i, &pi) in GAUSS2_POINTS.iter().enumerate() {
                for (j, &pj) in GAUSS2_POINTS.iter().enumerate() {
                    rule.push(([pi, pj], GAUSS2_WEIGHTS[i] * GAUSS2_WEIGHTS[j]));
                }
            }
            rule
        }
        _ => panic!("only dimensions 1 and 2 are supported"),
    }
}

/// Composite Simpson quadrature of `f` over [a, b] with `panels` panels
/// (panels is rounded up to an even count).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let n = if panels % 2 == 0 { panels } else { panels + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss2_integrates_cubics_exactly() {
        // int_0^1 x^3 dx = 1/4
        let val: f64 = GAUSS2_POINTS
            .iter()
            .zip(GAUSS2_WEIGHTS)
            .map(|(&p, w)| w * p.powi(3))
            .sum();
        assert!((val - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tensor_rule_weights_sum_to_one() {
        for dim in 1..=2 {
            let total: f64 = reference_rule(dim).iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn simpson_mean_of_sinusoid() {
        let mean = simpson(|s| 2.0 + (2.0 * std::f64::consts::PI * s).sin(), 0.0, 1.0, 1000);
        assert!((mean - 2.0).abs() < 1e-12);
    }
}
