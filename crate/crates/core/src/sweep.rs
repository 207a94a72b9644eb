//! Grid experiments: one inversion per grid point, each with its own step
//! constant from the random line search.
//!
//! Points are independent, so callers may evaluate them in any order or in
//! parallel; [`run_point`] is a pure function of its arguments.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gates;
use crate::inversion::{compute_metrics, epsilon_line_search, invert, EpsilonSearch, InversionConfig, SHIFT_SIGMA};
use crate::model::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// First hidden layer width.
    Width,
    /// Number of equal-width layers.
    Depth,
    /// Iteration budget on the overcomplete model.
    Iterations,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width" => Ok(SweepKind::Width),
            "depth" => Ok(SweepKind::Depth),
            "iterations" => Ok(SweepKind::Iterations),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sweep kind {s:?} (width, depth, iterations)"
            ))),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Width => "width",
            SweepKind::Depth => "depth",
            SweepKind::Iterations => "iterations",
        })
    }
}

impl SweepKind {
    pub fn default_grid(self) -> Vec<usize> {
        match self {
            SweepKind::Width => gates::SWEEP_WIDTHS.to_vec(),
            SweepKind::Depth => gates::SWEEP_DEPTHS.to_vec(),
            SweepKind::Iterations => vec![gates::OVERCOMPLETE_F, 2 * gates::OVERCOMPLETE_F, 4 * gates::OVERCOMPLETE_F],
        }
    }
}

/// A fully specified grid point.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: usize,
    pub model: Model,
    pub config: InversionConfig,
}

/// Builds the fixture model and config for every grid value. `template`
/// supplies the schedule kind, blur, seed and precision; the layer is the
/// model's last and the budget is `iterations` except in the iterations sweep.
pub fn build_points(
    kind: SweepKind,
    grid: &[usize],
    template: &InversionConfig,
    iterations: usize,
    model_seed: u64,
) -> Result<Vec<SweepPoint>> {
    grid.iter()
        .map(|&value| {
            let model = match kind {
                SweepKind::Width => gates::width_model(value, model_seed)?,
                SweepKind::Depth => gates::depth_model(value, model_seed)?,
                SweepKind::Iterations => gates::overcomplete_mlp(model_seed)?,
            };
            let mut config = template.clone();
            config.layer = model.depth();
            config.iterations = if kind == SweepKind::Iterations { value } else { iterations };
            config.precision = template.precision;
            Ok(SweepPoint { value, model, config })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub epsilon: f64,
    pub m_g: f64,
    pub m_s: f64,
    pub m_i: f64,
}

/// Picks `c` by line search, then runs the full inversion with it.
pub fn run_point(point: &SweepPoint, target: &Tensor, search: &EpsilonSearch) -> Result<SweepRow> {
    let found = epsilon_line_search(&point.model, target, &point.config, search)?;
    let mut cfg = point.config.clone();
    cfg.epsilon = cfg.epsilon.with_constant(found.best);
    let run = invert(&point.model, target, &cfg)?;
    let metrics = compute_metrics(&point.model, cfg.layer, target, &run.generated, SHIFT_SIGMA, cfg.seed)?;
    Ok(SweepRow {
        value: point.value,
        epsilon: found.best,
        m_g: metrics.m_g,
        m_s: metrics.m_s,
        m_i: metrics.m_i,
    })
}

pub fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inversion::EpsilonSchedule;

    #[test]
    fn kinds_parse_and_print() {
        for k in [SweepKind::Width, SweepKind::Depth, SweepKind::Iterations] {
            assert_eq!(k.to_string().parse::<SweepKind>().unwrap(), k);
        }
        assert!("height".parse::<SweepKind>().is_err());
        assert_eq!(SweepKind::Depth.default_grid(), vec![1, 3, 5, 7]);
    }

    #[test]
    fn points_follow_the_grid() {
        let t = InversionConfig::new(1, 10, EpsilonSchedule::LinearDecay(1e-3));
        let pts = build_points(SweepKind::Depth, &[1, 3], &t, 50, 0).unwrap();
        assert_eq!(pts.iter().map(|p| p.config.layer).collect::<Vec<_>>(), vec![1, 3]);
        assert!(pts.iter().all(|p| p.config.iterations == 50));
        let pts = build_points(SweepKind::Iterations, &[20, 40], &t, 50, 0).unwrap();
        assert_eq!(pts.iter().map(|p| p.config.iterations).collect::<Vec<_>>(), vec![20, 40]);
        assert!(pts.iter().all(|p| p.config.layer == 3));
    }

    #[test]
    fn a_small_point_runs_and_is_deterministic() {
        let t = InversionConfig::new(1, 10, EpsilonSchedule::LinearDecay(1e-3));
        let pts = build_points(SweepKind::Width, &[384], &t, 100, 0).unwrap();
        let search = EpsilonSearch { candidates: 3, lo: 1e-3, hi: 1e-2, iterations: 20, seed: 0 };
        let target = gates::inversion_target();
        let a = run_point(&pts[0], &target, &search).unwrap();
        assert_eq!(a, run_point(&pts[0], &target, &search).unwrap());
        assert!(a.m_g < a.m_s && a.epsilon >= 1e-3 && a.epsilon <= 1e-2);
    }

    #[test]
    fn monotonicity_helpers() {
        assert!(strictly_increasing(&[1.0, 2.0, 3.0]));
        assert!(!strictly_increasing(&[1.0, 1.0]));
        assert!(strictly_decreasing(&[3.0, 2.0]));
        assert!(strictly_decreasing(&[5.0]));
    }
}
