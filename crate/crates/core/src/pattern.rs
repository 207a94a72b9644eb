//! Synthetic images: inversion targets and the class patterns behind the
//! structured training set.
//!
//! Every family draws a small random phase/offset jitter and a per-channel
//! colour from the supplied generator, renders a pattern with values in
//! `[0, 1]`, then adds small Gaussian noise and clamps back to `[0, 1]`. The
//! jitter is kept small so each class keeps a recognisable layout.

use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    HorizontalBars,
    VerticalBars,
    DiagonalStripes,
    Disk,
    Ring,
    Checker,
    CornerGradient,
    Cross,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::HorizontalBars,
        Family::VerticalBars,
        Family::DiagonalStripes,
        Family::Disk,
        Family::Ring,
        Family::Checker,
        Family::CornerGradient,
        Family::Cross,
    ];

    /// Intensity in `[0, 1]` at pixel `(y, x)` of an `h x w` image.
    fn intensity(self, y: f64, x: f64, h: f64, w: f64, phase: f64, cy: f64, cx: f64) -> f64 {
        let period = (h.min(w) / 2.0).max(2.0);
        let wave = |t: f64| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * (t / period + phase)).cos();
        match self {
            Family::HorizontalBars => wave(y),
            Family::VerticalBars => wave(x),
            Family::DiagonalStripes => wave((x + y) / std::f64::consts::SQRT_2),
            Family::Disk => {
                let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                if r < 0.3 * h.min(w) {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Ring => {
                let r = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                let mid = 0.3 * h.min(w);
                if (r - mid).abs() < 0.12 * h.min(w) + 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Checker => {
                let cell = (h.min(w) / 4.0).max(1.0);
                let shift = (phase * 2.0 * cell).floor();
                let a = ((y + shift) / cell).floor() as i64;
                let b = ((x + shift) / cell).floor() as i64;
                ((a + b).rem_euclid(2)) as f64
            }
            Family::CornerGradient => {
                let t = ((y / h) + (x / w)) / 2.0;
                (t + 0.25 * (phase - 0.5)).clamp(0.0, 1.0)
            }
            Family::Cross => {
                let band = 0.12 * h.min(w) + 0.5;
                if (y - cy).abs() < band || (x - cx).abs() < band {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Renders one `[C, H, W]` image of `family`.
pub fn render(family: Family, shape: &[usize], noise: f64, rng: &mut SeededRng) -> Tensor {
    assert_eq!(shape.len(), 3, "render expects [C, H, W]");
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let phase = rng.uniform_range(0.0, 0.1);
    let cy = (h as f64 - 1.0) / 2.0 + rng.uniform_range(-0.05, 0.05) * h as f64;
    let cx = (w as f64 - 1.0) / 2.0 + rng.uniform_range(-0.05, 0.05) * w as f64;
    let lo: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.0, 0.2)).collect();
    let hi: Vec<f64> = (0..c).map(|_| rng.uniform_range(0.8, 1.0)).collect();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let t = family.intensity(y as f64, x as f64, h as f64, w as f64, phase, cy, cx);
                let v = lo[ch] + (hi[ch] - lo[ch]) * t + noise * rng.normal();
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    Tensor::from_vec(shape, data).expect("shape matches")
}

/// A deterministic natural-looking target: a soft disk over a two-axis
/// gradient with faint stripes, values in `[0.05, 0.95]`.
pub fn target_image(shape: &[usize], seed: u64) -> Tensor {
    assert_eq!(shape.len(), 3, "target_image expects [C, H, W]");
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut rng = SeededRng::new(seed);
    let cy = rng.uniform_range(0.35, 0.65) * h as f64;
    let cx = rng.uniform_range(0.35, 0.65) * w as f64;
    let radius = rng.uniform_range(0.2, 0.35) * h.min(w) as f64;
    let tint: Vec<(f64, f64, f64)> = (0..c)
        .map(|_| (rng.uniform_range(0.1, 0.4), rng.uniform_range(0.5, 0.9), rng.uniform_range(0.0, 1.0)))
        .collect();
    let mut data = Vec::with_capacity(c * h * w);
    for &(base, disk, stripe_phase) in &tint {
        for y in 0..h {
            for x in 0..w {
                let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
                let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                let inside = 1.0 / (1.0 + ((r - radius) * 1.5).exp());
                let stripes = 0.08 * (2.0 * std::f64::consts::PI * (2.0 * fx + stripe_phase)).sin();
                let v = base + 0.25 * (fy + fx) / 2.0 + (disk - base) * inside + stripes;
                data.push(v.clamp(0.05, 0.95));
            }
        }
    }
    Tensor::from_vec(shape, data).expect("shape matches")
}
