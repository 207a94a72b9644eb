//! Representation inversion by gradient descent on the input.
//!
//! Starting from `a_0 ~ N(0.7, 0.05)` the input is updated with
//! `a_{n+1} = a_n - eps_n * g_n` (optionally followed by a 3x3 Gaussian blur
//! with a linearly shrinking sigma), where `g_n` is the gradient of the L1
//! distance between the layer-`l` embeddings of `a_n` and of the target.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use crate::autodiff::l1_step;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{derive_seed, gaussian_draw, stream, SeededRng};
use crate::tensor::{Precision, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Constant(f64),
    /// `eps_n = c * (1 - n / f)`.
    LinearDecay(f64),
}

impl EpsilonSchedule {
    pub fn constant(&self) -> f64 {
        match *self {
            EpsilonSchedule::Constant(c) | EpsilonSchedule::LinearDecay(c) => c,
        }
    }

    pub fn with_constant(&self, c: f64) -> Self {
        match self {
            EpsilonSchedule::Constant(_) => EpsilonSchedule::Constant(c),
            EpsilonSchedule::LinearDecay(_) => EpsilonSchedule::LinearDecay(c),
        }
    }

    pub fn at(&self, n: usize, f: usize) -> f64 {
        match *self {
            EpsilonSchedule::Constant(c) => c,
            EpsilonSchedule::LinearDecay(c) => c * (1.0 - n as f64 / f as f64),
        }
    }
}

fn parse_positive(s: &str, what: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(Error::InvalidArgument(format!("bad {what} `{s}`"))),
    }
}

/// `c` for a constant step, `decay:c` for linear decay.
impl FromStr for EpsilonSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("decay:") {
            Some(c) => Ok(EpsilonSchedule::LinearDecay(parse_positive(c, "step constant")?)),
            None => Ok(EpsilonSchedule::Constant(parse_positive(s, "step constant")?)),
        }
    }
}

impl fmt::Display for EpsilonSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSchedule::Constant(c) => write!(f, "{c}"),
            EpsilonSchedule::LinearDecay(c) => write!(f, "decay:{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlurSchedule {
    Off,
    /// Sigma moves linearly from `start` (first update) to `end` (last update).
    LinearSigma { start: f64, end: f64 },
}

impl BlurSchedule {
    pub const DEFAULT_ON: BlurSchedule = BlurSchedule::LinearSigma { start: 2.4, end: 0.4 };

    pub fn sigma_at(&self, n: usize, f: usize) -> Option<f64> {
        match *self {
            BlurSchedule::Off => None,
            BlurSchedule::LinearSigma { start, end } => {
                let t = if f > 1 { n as f64 / (f - 1) as f64 } else { 0.0 };
                Some(start + (end - start) * t)
            }
        }
    }
}

/// `off`, or `start:end` sigmas.
impl FromStr for BlurSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "off" {
            return Ok(BlurSchedule::Off);
        }
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("blur must be `off` or `start:end`, got `{s}`")))?;
        Ok(BlurSchedule::LinearSigma {
            start: parse_positive(a, "blur sigma")?,
            end: parse_positive(b, "blur sigma")?,
        })
    }
}

impl fmt::Display for BlurSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlurSchedule::Off => f.write_str("off"),
            BlurSchedule::LinearSigma { start, end } => write!(f, "{start}:{end}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionConfig {
    /// Embedding index (1-based stage).
    pub layer: usize,
    /// Number of updates `f`.
    pub iterations: usize,
    pub epsilon: EpsilonSchedule,
    pub blur: BlurSchedule,
    pub init_mu: f64,
    pub init_sigma: f64,
    pub seed: u64,
    /// Clip the input to `[0, 1]` after sampling and after every update.
    pub clamp_input: bool,
    pub precision: Precision,
}

impl InversionConfig {
    pub fn new(layer: usize, iterations: usize, epsilon: EpsilonSchedule) -> Self {
        Self {
            layer,
            iterations,
            epsilon,
            blur: BlurSchedule::Off,
            init_mu: 0.7,
            init_sigma: 0.05,
            seed: 0,
            clamp_input: false,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        let c = self.epsilon.constant();
        if !(c > 0.0) || !c.is_finite() {
            return bad(format!("epsilon constant must be positive, got {c}"));
        }
        if let BlurSchedule::LinearSigma { start, end } = self.blur {
            if !(end > 0.0 && start >= end) {
                return bad(format!("blur needs start >= end > 0, got {start} -> {end}"));
            }
        }
        if !(self.init_sigma >= 0.0) {
            return bad(format!("init sigma must be >= 0, got {}", self.init_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub l1_objective: f64,
    pub m_g: f64,
    pub m_i: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionTrace {
    /// One row per iterate `a_0 ..= a_f`.
    pub rows: Vec<TraceRow>,
}

impl InversionTrace {
    pub fn first(&self) -> &TraceRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has f + 1 rows")
    }

    pub fn m_g(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.m_g).collect()
    }

    pub fn m_i(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.m_i).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub generated: Tensor,
    pub trace: InversionTrace,
}

/// The initial input `a_0` for a run seed.
pub fn initial_input(shape: &[usize], cfg: &InversionConfig) -> Tensor {
    let mut rng = SeededRng::new(derive_seed(cfg.seed, stream::INIT));
    let a0 = gaussian_draw(&mut rng, shape, cfg.init_mu, cfg.init_sigma).cast(cfg.precision);
    if cfg.clamp_input {
        a0.clamp(0.0, 1.0)
    } else {
        a0
    }
}

fn at_precision(model: &Model, p: Precision) -> Cow<'_, Model> {
    if model.precision() == p {
        Cow::Borrowed(model)
    } else {
        Cow::Owned(model.with_precision(p))
    }
}

fn distance(a: &Tensor, b: &Tensor) -> f64 {
    a.cast(Precision::F64)
        .sub(&b.cast(Precision::F64))
        .expect("same shape")
        .l2_norm()
}

/// Runs `cfg.iterations` updates from `a_0` toward an input whose layer
/// embedding matches that of `target`.
pub fn invert(model: &Model, target: &Tensor, cfg: &InversionConfig) -> Result<Inversion> {
    cfg.validate()?;
    model.check_input(target)?;
    model.check_layer(cfg.layer)?;
    if cfg.blur != BlurSchedule::Off && target.rank() != 3 {
        return Err(Error::Shape(format!(
            "blur needs a [C, H, W] input, model input is {:?}",
            target.shape()
        )));
    }
    let model = at_precision(model, cfg.precision);
    let target = target.cast(cfg.precision);
    let y_hat = model.forward_to_layer(&target, cfg.layer)?;
    let f = cfg.iterations;

    let mut a = initial_input(target.shape(), cfg);
    let mut rows = Vec::with_capacity(f + 1);
    for n in 0..=f {
        let step = l1_step(&model, cfg.layer, &a, &y_hat)?;
        if !step.objective.is_finite() {
            return Err(Error::Diverged {
                iteration: n,
                value: step.objective,
            });
        }
        rows.push(TraceRow {
            n,
            l1_objective: step.objective,
            m_g: distance(&step.embedding, &y_hat),
            m_i: distance(&target, &a),
        });
        if n == f {
            break;
        }
        a.axpy(-cfg.epsilon.at(n, f), &step.gradient)?;
        if let Some(sigma) = cfg.blur.sigma_at(n, f) {
            a = a.blur(sigma)?;
        }
        if cfg.clamp_input {
            a = a.clamp(0.0, 1.0);
        }
        if !a.is_finite() {
            return Err(Error::Diverged {
                iteration: n + 1,
                value: f64::NAN,
            });
        }
    }
    Ok(Inversion {
        generated: a,
        trace: InversionTrace { rows },
    })
}

/// `a' = a + N(0, sigma)` elementwise, drawn from `seed`.
pub fn shifted_input(a: &Tensor, sigma: f64, seed: u64) -> Tensor {
    let noise = gaussian_draw(&mut SeededRng::new(seed), a.shape(), 0.0, sigma);
    a.cast(Precision::F64).add(&noise).expect("same shape").cast(a.precision())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    /// `||O_l(a_g) - O_l(a)||_2`.
    pub m_g: f64,
    /// `||O_l(a') - O_l(a)||_2` for the shifted reference input `a'`.
    pub m_s: f64,
    /// `||a - a_g||_2`.
    pub m_i: f64,
    pub seed: u64,
    pub layer: usize,
}

impl MetricsRecord {
    /// The generated embedding is closer to the target than the shifted input's.
    pub fn is_good(&self) -> bool {
        self.m_g < self.m_s
    }
}

pub const SHIFT_SIGMA: f64 = 1.0 / 20.0;

/// `m_g`, `m_s` and `m_i` for a generated input. `a'` is drawn from the
/// `SHIFT` sub-stream of `seed`, independent of the `a_0` stream.
pub fn compute_metrics(
    model: &Model,
    l: usize,
    a: &Tensor,
    a_g: &Tensor,
    sigma_ref: f64,
    seed: u64,
) -> Result<MetricsRecord> {
    let y = model.forward_to_layer(a, l)?;
    let y_g = model.forward_to_layer(a_g, l)?;
    let a_shift = shifted_input(a, sigma_ref, derive_seed(seed, stream::SHIFT));
    let y_s = model.forward_to_layer(&a_shift, l)?;
    Ok(MetricsRecord {
        m_g: distance(&y_g, &y),
        m_s: distance(&y_s, &y),
        m_i: distance(a, a_g),
        seed,
        layer: l,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSearch {
    pub candidates: usize,
    /// Log-uniform sampling range for the constant `c`.
    pub lo: f64,
    pub hi: f64,
    /// Iterations of each trial run.
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: f64,
    pub best_m_g: f64,
    /// Every sampled constant with its final `m_g` (`None` if it diverged).
    pub tried: Vec<(f64, Option<f64>)>,
}

/// Final `m_g` of a short run with constant `c`, or `None` on divergence.
pub fn trial_m_g(model: &Model, target: &Tensor, template: &InversionConfig, c: f64, iterations: usize) -> Result<Option<f64>> {
    let mut cfg = template.clone();
    cfg.epsilon = template.epsilon.with_constant(c);
    cfg.iterations = iterations;
    match invert(model, target, &cfg) {
        Ok(run) => {
            let m = run.trace.last().m_g;
            Ok(m.is_finite().then_some(m))
        }
        Err(Error::Diverged { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Random line search over `c`: samples `candidates` log-uniform constants,
/// runs a short inversion with each and keeps the one with the smallest final
/// `m_g`. Ties keep the earlier sample.
pub fn epsilon_line_search(
    model: &Model,
    target: &Tensor,
    template: &InversionConfig,
    search: &EpsilonSearch,
) -> Result<SearchOutcome> {
    if search.candidates == 0 || !(search.lo > 0.0 && search.hi >= search.lo) || search.iterations == 0 {
        return Err(Error::InvalidArgument(format!(
            "bad search: {} candidates over [{}, {}] with {} iterations",
            search.candidates, search.lo, search.hi, search.iterations
        )));
    }
    let mut rng = SeededRng::new(derive_seed(search.seed, stream::SEARCH));
    let (llo, lhi) = (search.lo.ln(), search.hi.ln());
    let mut tried = Vec::with_capacity(search.candidates);
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..search.candidates {
        let c = rng.uniform_range(llo, lhi).exp();
        let m = trial_m_g(model, target, template, c, search.iterations)?;
        tried.push((c, m));
        if let Some(m) = m {
            if best.map_or(true, |(_, bm)| m < bm) {
                best = Some((c, m));
            }
        }
    }
    match best {
        Some((best, best_m_g)) => Ok(SearchOutcome { best, best_m_g, tried }),
        None => Err(Error::AllCandidatesDiverged {
            tried: tried.into_iter().map(|(c, _)| c).collect(),
        }),
    }
}

/// Correlation of the changes of two series relative to their values at
/// index `warmup`: Pearson over `n >= warmup` of `(x_n - x_w, y_n - y_w)`.
/// Negative when one series falls while the other does not, regardless of
/// curvature or step-to-step oscillation. `None` for constant or too-short
/// spans.
pub fn delta_correlation(xs: &[f64], ys: &[f64], warmup: usize) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < warmup + 3 {
        return None;
    }
    let dx: Vec<f64> = xs[warmup..n].iter().map(|v| v - xs[warmup]).collect();
    let dy: Vec<f64> = ys[warmup..n].iter().map(|v| v - ys[warmup]).collect();
    pearson(&dx, &dy)
}

/// Pearson correlation of the per-iteration differences from `warmup` on.
/// Sensitive to the period-2 oscillation of sign descent, so only reported.
pub fn step_correlation(xs: &[f64], ys: &[f64], warmup: usize) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < warmup + 3 {
        return None;
    }
    let dx: Vec<f64> = xs[warmup..n].windows(2).map(|w| w[1] - w[0]).collect();
    let dy: Vec<f64> = ys[warmup..n].windows(2).map(|w| w[1] - w[0]).collect();
    pearson(&dx, &dy)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_mlp, build_mlp_on, Layer, Stage};
    use crate::pattern::target_image;

    fn identity_model(shape: &[usize]) -> Model {
        let n = shape.iter().product();
        let layer = Layer::dense(Tensor::eye(n), Some(Tensor::zeros(&[n]))).unwrap();
        Model::new(shape, vec![Stage::new(vec![layer])], Precision::F64, 0).unwrap()
    }

    #[test]
    fn schedules() {
        let e = EpsilonSchedule::LinearDecay(0.5);
        assert_eq!(e.at(0, 10), 0.5);
        assert!((e.at(5, 10) - 0.25).abs() < 1e-15);
        assert_eq!(EpsilonSchedule::Constant(0.1).at(9, 10), 0.1);
        let b = BlurSchedule::DEFAULT_ON;
        assert_eq!(b.sigma_at(0, 11), Some(2.4));
        assert!((b.sigma_at(10, 11).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(BlurSchedule::Off.sigma_at(3, 5), None);
    }

    #[test]
    fn schedules_round_trip_through_text() {
        assert_eq!("0.01".parse::<EpsilonSchedule>().unwrap(), EpsilonSchedule::Constant(0.01));
        assert_eq!("decay:0.1".parse::<EpsilonSchedule>().unwrap(), EpsilonSchedule::LinearDecay(0.1));
        assert_eq!("2.4:0.4".parse::<BlurSchedule>().unwrap(), BlurSchedule::DEFAULT_ON);
        assert_eq!("off".parse::<BlurSchedule>().unwrap(), BlurSchedule::Off);
        for e in [EpsilonSchedule::Constant(1e-3), EpsilonSchedule::LinearDecay(0.25)] {
            assert_eq!(e.to_string().parse::<EpsilonSchedule>().unwrap(), e);
        }
        assert_eq!(BlurSchedule::DEFAULT_ON.to_string(), "2.4:0.4");
        for bad in ["", "decay:", "-1", "decay:x", "nan"] {
            assert!(bad.parse::<EpsilonSchedule>().is_err(), "{bad}");
        }
        assert!("2.4".parse::<BlurSchedule>().is_err());
        assert_eq!("32".parse::<Precision>().unwrap(), Precision::F32);
        assert!("16".parse::<Precision>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = InversionConfig::new(1, 0, EpsilonSchedule::Constant(0.1));
        assert!(cfg.validate().is_err());
        cfg.iterations = 5;
        cfg.epsilon = EpsilonSchedule::Constant(0.0);
        assert!(cfg.validate().is_err());
        cfg.epsilon = EpsilonSchedule::Constant(0.1);
        cfg.blur = BlurSchedule::LinearSigma { start: 0.2, end: 0.4 };
        assert!(cfg.validate().is_err());
        cfg.blur = BlurSchedule::DEFAULT_ON;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn inverting_identity_recovers_target() {
        let m = identity_model(&[3, 4, 4]);
        let a = target_image(&[3, 4, 4], 1);
        let mut cfg = InversionConfig::new(1, 400, EpsilonSchedule::LinearDecay(0.02));
        cfg.precision = Precision::F64;
        let run = invert(&m, &a, &cfg).unwrap();
        assert_eq!(run.trace.rows.len(), 401);
        assert!(run.trace.last().m_i < 1e-3 * a.l2_norm(), "m_i {}", run.trace.last().m_i);
        assert!(run.trace.rows.iter().all(|r| r.m_g.is_finite() && r.m_i.is_finite()));
        // For the identity map, m_g equals m_i at every iterate.
        for r in &run.trace.rows {
            assert!((r.m_g - r.m_i).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_reports_iteration() {
        let layer = Layer::dense(Tensor::eye(4).scale(1e30), None).unwrap();
        let m = Model::new(&[4], vec![Stage::new(vec![layer])], Precision::F64, 0).unwrap();
        let a = Tensor::full(&[4], 0.5);
        let mut cfg = InversionConfig::new(1, 50, EpsilonSchedule::Constant(1e300));
        cfg.precision = Precision::F64;
        match invert(&m, &a, &cfg) {
            Err(Error::Diverged { iteration, .. }) => assert!(iteration >= 1 && iteration <= 50),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn blur_and_clamp_keep_shape_and_range() {
        let m = build_mlp_on(&[3, 6, 6], &[108], true, false, Precision::F32, 2).unwrap();
        let a = target_image(&[3, 6, 6], 3);
        let mut cfg = InversionConfig::new(1, 30, EpsilonSchedule::LinearDecay(0.01));
        cfg.blur = BlurSchedule::DEFAULT_ON;
        cfg.clamp_input = true;
        let run = invert(&m, &a, &cfg).unwrap();
        assert_eq!(run.generated.shape(), &[3, 6, 6]);
        assert!(run.generated.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let flat = build_mlp(108, &[108], true, false, Precision::F32, 2).unwrap();
        assert!(invert(&flat, &a.flatten(), &cfg).is_err());
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let m = build_mlp_on(&[3, 4, 4], &[48, 48], true, false, Precision::F32, 5).unwrap();
        let a = target_image(&[3, 4, 4], 6);
        let mut cfg = InversionConfig::new(2, 60, EpsilonSchedule::LinearDecay(0.01));
        cfg.seed = 77;
        assert_eq!(invert(&m, &a, &cfg).unwrap(), invert(&m, &a, &cfg).unwrap());
        cfg.seed = 78;
        assert_ne!(invert(&m, &a, &cfg).unwrap().generated, invert(&m, &a, &{
            let mut c = cfg.clone();
            c.seed = 77;
            c
        }).unwrap().generated);
    }

    #[test]
    fn shifted_input_cases() {
        let a = target_image(&[3, 4, 4], 2);
        assert_eq!(shifted_input(&a, 0.0, 5), a);
        let n = 2523;
        let base = Tensor::full(&[n], 0.5);
        let expected = SHIFT_SIGMA * (n as f64).sqrt();
        let mean: f64 = (0..10)
            .map(|s| shifted_input(&base, SHIFT_SIGMA, s).sub(&base).unwrap().l2_norm())
            .sum::<f64>()
            / 10.0;
        assert!((mean - expected).abs() < 0.1 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn metrics_trivial_cases() {
        let m = identity_model(&[100]);
        let a = Tensor::full(&[100], 0.4);
        let r = compute_metrics(&m, 1, &a, &a, SHIFT_SIGMA, 1).unwrap();
        assert_eq!((r.m_g, r.m_i), (0.0, 0.0));
        assert!(r.m_s > 0.0);
        assert!(r.is_good());
        let shifted = a.map(|v| v + 0.1);
        let r = compute_metrics(&m, 1, &a, &shifted, SHIFT_SIGMA, 1).unwrap();
        assert!((r.m_i - 1.0).abs() < 1e-12);
        assert!((r.m_g - r.m_i).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_search_returns_its_sample() {
        let m = identity_model(&[3, 2, 2]);
        let a = target_image(&[3, 2, 2], 0);
        let cfg = InversionConfig::new(1, 20, EpsilonSchedule::LinearDecay(1.0));
        let search = EpsilonSearch {
            candidates: 1,
            lo: 1e-3,
            hi: 1e-1,
            iterations: 20,
            seed: 4,
        };
        let out = epsilon_line_search(&m, &a, &cfg, &search).unwrap();
        assert_eq!(out.tried.len(), 1);
        assert_eq!(out.best, out.tried[0].0);
        assert!(out.best >= 1e-3 && out.best <= 1e-1);
    }

    #[test]
    fn search_on_identity_is_locally_optimal() {
        let m = identity_model(&[3, 4, 4]);
        let a = target_image(&[3, 4, 4], 0);
        let mut cfg = InversionConfig::new(1, 50, EpsilonSchedule::LinearDecay(1.0));
        cfg.precision = Precision::F64;
        let search = EpsilonSearch {
            candidates: 12,
            lo: 1e-4,
            hi: 1.0,
            iterations: 50,
            seed: 9,
        };
        let out = epsilon_line_search(&m, &a, &cfg, &search).unwrap();
        let at = |c: f64| trial_m_g(&m, &a, &cfg, c, 50).unwrap().unwrap_or(f64::INFINITY);
        assert!(at(out.best) < at(out.best * 10.0));
        assert!(at(out.best) < at(out.best / 10.0));
    }

    #[test]
    fn all_divergent_candidates_error() {
        let layer = Layer::dense(Tensor::eye(4).scale(1e200), None).unwrap();
        let m = Model::new(&[4], vec![Stage::new(vec![layer])], Precision::F64, 0).unwrap();
        let a = Tensor::full(&[4], 0.5);
        let mut cfg = InversionConfig::new(1, 5, EpsilonSchedule::Constant(1.0));
        cfg.precision = Precision::F64;
        let search = EpsilonSearch {
            candidates: 3,
            lo: 1e200,
            hi: 1e201,
            iterations: 5,
            seed: 1,
        };
        match epsilon_line_search(&m, &a, &cfg, &search) {
            Err(Error::AllCandidatesDiverged { tried }) => assert_eq!(tried.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn correlation_helpers() {
        let up: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        assert!((delta_correlation(&up, &up, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((delta_correlation(&up, &down, 2).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(delta_correlation(&up, &[1.0; 20], 0), None);
        assert_eq!(delta_correlation(&up[..4], &up[..4], 2), None);
        assert!((step_correlation(&up, &down, 0).unwrap() + 1.0).abs() < 1e-12);
        // Convex fall against convex rise: differences move together, the
        // series themselves move apart.
        let fall: Vec<f64> = (0..20).map(|i| ((19 - i) * (19 - i)) as f64).collect();
        assert!(step_correlation(&fall, &up, 0).unwrap() > 0.9);
        assert!(delta_correlation(&fall, &up, 0).unwrap() < -0.8);
        // Oscillation riding on opposite trends.
        let g: Vec<f64> = (0..40).map(|i| 10.0 - 0.2 * i as f64 + if i % 2 == 0 { 0.5 } else { 0.0 }).collect();
        let m: Vec<f64> = (0..40).map(|i| 4.0 + 0.05 * i as f64 + if i % 2 == 0 { 0.2 } else { 0.0 }).collect();
        assert!(step_correlation(&g, &m, 0).unwrap() > 0.0);
        assert!(delta_correlation(&g, &m, 0).unwrap() < 0.0);
    }
}
