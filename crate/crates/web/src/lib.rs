//! Browser bindings: a small inversion, the ReLU capacity curve and the
//! conditioning probe. The plain functions carry the logic; the exported
//! wrappers only convert errors.

use reprobe_core::analytic::{conditioning_probe, relu_capacity, unit_input, CapacityQuery, LinearModel};
use reprobe_core::gates;
use reprobe_core::inversion::{compute_metrics, invert, BlurSchedule, EpsilonSchedule, InversionConfig, SHIFT_SIGMA};
use reprobe_core::model::build_mlp_on;
use reprobe_core::{Precision, Tensor};
use wasm_bindgen::prelude::*;

const MAX_ITERS: usize = 5000;
const MAX_WIDTH: usize = 1024;

#[wasm_bindgen]
pub struct InversionDemo {
    m_g: Vec<f64>,
    m_i: Vec<f64>,
    target: Vec<u8>,
    generated: Vec<u8>,
    m_s: f64,
}

#[wasm_bindgen]
impl InversionDemo {
    /// `m_g` per iterate, `a_0` first.
    pub fn m_g(&self) -> Vec<f64> {
        self.m_g.clone()
    }

    pub fn m_i(&self) -> Vec<f64> {
        self.m_i.clone()
    }

    /// The shifted-input reference for the final `m_g`.
    pub fn m_s(&self) -> f64 {
        self.m_s
    }

    /// RGBA bytes, `side() x side()`.
    pub fn target_rgba(&self) -> Vec<u8> {
        self.target.clone()
    }

    pub fn generated_rgba(&self) -> Vec<u8> {
        self.generated.clone()
    }

    pub fn side() -> usize {
        gates::INVERSION_SHAPE[1]
    }
}

/// Row-major RGBA of a `[3, H, W]` image, clipped to `[0, 1]`.
pub fn rgba(img: &Tensor) -> Vec<u8> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let d = img.data();
    let byte = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = Vec::with_capacity(4 * h * w);
    for i in 0..h * w {
        out.extend((0..3).map(|c| byte(d[c * h * w + i])));
        out.push(255);
    }
    out
}

/// Inverts the built-in target through an untrained MLP with the given
/// hidden widths, at its last layer.
pub fn run_inversion(
    widths: &[usize],
    relu: bool,
    iters: usize,
    c: f64,
    decay: bool,
    blur: bool,
    seed: u64,
) -> Result<InversionDemo, String> {
    if iters > MAX_ITERS || widths.iter().any(|&w| w > MAX_WIDTH) {
        return Err(format!("at most {MAX_ITERS} iterations and width {MAX_WIDTH}"));
    }
    let model = build_mlp_on(&gates::INVERSION_SHAPE, widths, false, relu, Precision::F32, seed)
        .map_err(|e| e.to_string())?;
    let target = gates::inversion_target();
    let eps = if decay { EpsilonSchedule::LinearDecay(c) } else { EpsilonSchedule::Constant(c) };
    let mut cfg = InversionConfig::new(model.depth(), iters, eps);
    cfg.seed = seed;
    cfg.blur = if blur { BlurSchedule::DEFAULT_ON } else { BlurSchedule::Off };
    let run = invert(&model, &target, &cfg).map_err(|e| e.to_string())?;
    let metrics =
        compute_metrics(&model, cfg.layer, &target, &run.generated, SHIFT_SIGMA, seed).map_err(|e| e.to_string())?;
    Ok(InversionDemo {
        m_g: run.trace.m_g(),
        m_i: run.trace.m_i(),
        target: rgba(&target),
        generated: rgba(&run.generated),
        m_s: metrics.m_s,
    })
}

/// Capacity for depths `0..=n_max`.
pub fn capacity_values(m: u64, p: f64, n_max: u32) -> Result<Vec<f64>, String> {
    (0..=n_max)
        .map(|n| relu_capacity(CapacityQuery { m, p, n }).map(|v| v as f64).map_err(|e| e.to_string()))
        .collect()
}

/// Ratios `||a - a''|| / ||a - a'||` for `count` seeds from `seed`.
pub fn probe_ratios(width: usize, depth: usize, sigma_out: f64, count: u64, seed: u64) -> Result<Vec<f64>, String> {
    if width > MAX_WIDTH {
        return Err(format!("width at most {MAX_WIDTH}"));
    }
    let lm = LinearModel::random(width, depth, false, Precision::F64, seed).map_err(|e| e.to_string())?;
    let a = unit_input(width, seed);
    let seeds: Vec<u64> = (seed..seed + count).collect();
    let report =
        conditioning_probe(&lm, &a, sigma_out, gates::PROBE_SIGMA_IN, &seeds).map_err(|e| e.to_string())?;
    Ok(report.rows.iter().map(|r| r.ratio).collect())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub fn inversion(
    widths: Vec<u32>,
    relu: bool,
    iters: u32,
    c: f64,
    decay: bool,
    blur: bool,
    seed: u32,
) -> Result<InversionDemo, JsError> {
    let widths: Vec<usize> = widths.into_iter().map(|w| w as usize).collect();
    run_inversion(&widths, relu, iters as usize, c, decay, blur, seed as u64).map_err(js)
}

#[wasm_bindgen]
pub fn capacity_curve(m: u32, p: f64, n_max: u32) -> Result<Vec<f64>, JsError> {
    capacity_values(m as u64, p, n_max).map_err(js)
}

#[wasm_bindgen]
pub fn probe(width: u32, depth: u32, sigma_out: f64, count: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    probe_ratios(width as usize, depth as usize, sigma_out, count as u64, seed as u64).map_err(js)
}
