//! Browser bindings for the homogenization demo. Each export runs one of
//! the interactive operations and returns its payload as a JSON string; the
//! static page in www/ parses and plots it.

pub mod api;

use wasm_bindgen::prelude::*;

fn to_json<T: serde::Serialize>(value: twoscale::Result<T>) -> Result<String, JsValue> {
    match value {
        Ok(payload) => {
            serde_json::to_string(&payload).map_err(|e| JsValue::from_str(&format!("{e}")))
        }
        Err(err) => Err(JsValue::from_str(&format!("{err}"))),
    }
}

/// Cell corrector for a(y) = 1 / (base + amplitude cos 2 pi y), with the
/// closed-form reference and the effective coefficient.
#[wasm_bindgen]
pub fn corrector_1d(base: f64, amplitude: f64, n: u32) -> Result<String, JsValue> {
    to_json(api::corrector_1d(base, amplitude, n as usize))
}

/// Critical-regime homogenized matrix of the rotating-anisotropy family:
/// entries over time plus assembled and formula-based skew parts.
#[wasm_bindgen]
pub fn skew_evolution(
    c_star: f64,
    contrast: f64,
    rate: f64,
    n: u32,
    steps: u32,
) -> Result<String, JsValue> {
    to_json(api::skew_evolution(c_star, contrast, rate, n as usize, steps as usize))
}

/// Fine oscillating solve vs the homogenized solve at one epsilon: final
/// profiles and the corrector metrics.
#[wasm_bindgen]
pub fn fine_vs_homogenized(eps_denominator: u32, r: f64, c_star: f64) -> Result<String, JsValue> {
    to_json(api::fine_vs_homogenized(eps_denominator, r, c_star))
}
