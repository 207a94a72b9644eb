//! Acceptance criteria. One line per criterion with the measured values;
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p reprobe-cli --test acceptance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use reprobe_core::analytic::{
    conditioning_probe, estimate_zero_fraction, relu_capacity, roundtrip_error, unit_input, CapacityQuery, LinearModel,
};
use reprobe_core::autodiff::{input_gradient, mean_cross_entropy, param_gradients, Tape};
use reprobe_core::gates::*;
use reprobe_core::inversion::{
    compute_metrics, delta_correlation, epsilon_line_search, invert, step_correlation, EpsilonSchedule, Inversion,
    InversionConfig, MetricsRecord, SHIFT_SIGMA,
};
use reprobe_core::model::{build_from_specs, build_mlp, LayerSpec as S};
use reprobe_core::rng::{gaussian_draw, SeededRng};
use reprobe_core::sweep::{build_points, run_point, strictly_decreasing, strictly_increasing, SweepKind, SweepRow};
use reprobe_core::trainer::{make_noise_dataset, train, Dataset, TrainConfig, Training, NOISE_MU, NOISE_SIGMA};
use reprobe_core::{Model, Precision, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            notes: Vec::new(),
        }
    }

    fn note(mut self, n: String) -> Self {
        self.notes.push(n);
        self
    }
}

/// Inversions from criteria 3-6, checked together by criterion 7.
#[derive(Default)]
struct Shared {
    fixture_runs: Vec<(String, MetricsRecord)>,
    noise_training: Option<(Dataset, Training)>,
}

fn main() {
    let mut shared = Shared::default();
    let criteria: Vec<(u32, &str, u64, fn(&mut Shared) -> Outcome)> = vec![
        (1, "gradient oracle", 10, c1_gradients),
        (2, "exact linear round trip", 5, c2_roundtrip),
        (3, "overcomplete convergence", 30, c3_overcomplete),
        (4, "undercomplete non-uniqueness", 30, c4_undercomplete),
        (5, "depth sweep", 60, c5_depth),
        (6, "width sweep", 45, c6_width),
        (7, "m_g < m_s on fixture inversions", 1, c7_shifted),
        (8, "conditioning probe", 10, c8_conditioning),
        (9, "capacity and zero fraction", 5, c9_capacity),
        (10, "noise memorisation", 60, c10_memorisation),
        (11, "trained convnet non-uniqueness", 30, c11_trained_convnet),
        (12, "CLI determinism", 30, c12_determinism),
    ];
    let mut passed = 0;
    for (id, name, limit, f) in &criteria {
        let start = Instant::now();
        let out = f(&mut shared);
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(*limit);
        let pass = out.pass && in_time;
        passed += pass as usize;
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1} s, limit {limit} s{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
        for n in &out.notes {
            println!("    note: {n}");
        }
    }
    println!("{passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}

// 1. Gradients against central differences.

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// ReLU masks, pool winners and output signs; perturbations that change it
/// straddle a kink and are skipped.
fn pattern(model: &Model, x: &Tensor, l: usize, y: &Tensor) -> Vec<u64> {
    let t = Tape::record(model, x, l).unwrap();
    let mut p = t.activation_pattern();
    p.extend(t.output().sub(y).unwrap().data().iter().map(|&v| (v > 0.0) as u64));
    p
}

fn shuffled(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.below(i + 1));
    }
    v
}

/// Worst relative error over `FD_COORDS` smooth input coordinates, or `None`
/// if too few smooth coordinates exist.
fn input_fd(model: &Model, a: &Tensor, seed: u64) -> Option<f64> {
    let l = model.depth();
    let y = model.forward_to_layer(a, l).unwrap();
    let mut rng = SeededRng::new(seed);
    let offsets: Vec<f64> = y.data().iter().map(|v| v + if rng.uniform() < 0.5 { -0.3 } else { 0.3 }).collect();
    let y_hat = Tensor::from_vec(y.shape(), offsets).unwrap();
    let g = input_gradient(model, l, a, &y_hat).unwrap();
    let base = pattern(model, a, l, &y_hat);
    let obj = |x: &Tensor| model.forward_to_layer(x, l).unwrap().sub(&y_hat).unwrap().l1_sum();
    let (mut worst, mut checked) = (0.0f64, 0);
    for i in shuffled(a.len(), &mut rng) {
        let mut plus = a.clone();
        plus.data_mut()[i] += FD_STEP;
        let mut minus = a.clone();
        minus.data_mut()[i] -= FD_STEP;
        if pattern(model, &plus, l, &y_hat) != base || pattern(model, &minus, l, &y_hat) != base {
            continue;
        }
        let fd = (obj(&plus) - obj(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.data()[i], fd));
        checked += 1;
        if checked == FD_COORDS {
            return Some(worst);
        }
    }
    None
}

fn param_fd(model: &Model, xs: &[Tensor], labels: &[usize], seed: u64) -> Option<f64> {
    let (_, grads) = param_gradients(model, xs, labels).unwrap();
    let l = model.depth();
    let zero = |m: &Model, x: &Tensor| Tensor::zeros(m.forward_to_layer(x, l).unwrap().shape());
    let patterns = |m: &Model| -> Vec<Vec<u64>> { xs.iter().map(|x| pattern(m, x, l, &zero(m, x))).collect() };
    let base = patterns(model);
    let slots: Vec<(usize, usize)> = model
        .params()
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |i| (t, i)))
        .collect();
    let mut rng = SeededRng::new(seed);
    let (mut worst, mut checked) = (0.0f64, 0);
    for k in shuffled(slots.len(), &mut rng) {
        let (t, i) = slots[k];
        let bumped = |d: f64| {
            let mut m = model.clone();
            m.params_mut()[t].data_mut()[i] += d;
            m
        };
        let (mp, mm) = (bumped(FD_STEP), bumped(-FD_STEP));
        if patterns(&mp) != base || patterns(&mm) != base {
            continue;
        }
        let fd = (mean_cross_entropy(&mp, xs, labels).unwrap() - mean_cross_entropy(&mm, xs, labels).unwrap())
            / (2.0 * FD_STEP);
        worst = worst.max(rel_err(grads[t].data()[i], fd));
        checked += 1;
        if checked == FD_COORDS {
            return Some(worst);
        }
    }
    None
}

fn conv(out: usize, stride: usize, bias: bool) -> S {
    S::Conv2d {
        out_channels: out,
        kernel: 3,
        stride,
        padding: 1,
        bias,
    }
}

fn c1_gradients(_: &mut Shared) -> Outcome {
    let head = || vec![S::Flatten, S::Dense { out: 4, bias: true }];
    let kinds: Vec<(&str, Vec<usize>, Vec<Vec<S>>)> = vec![
        ("dense", vec![64], vec![vec![S::Dense { out: 24, bias: true }], vec![S::Dense { out: 4, bias: true }]]),
        ("conv2d", vec![2, 6, 6], vec![vec![conv(3, 1, true)], head()]),
        ("relu", vec![64], vec![vec![S::Dense { out: 32, bias: true }, S::Relu], vec![S::Dense { out: 4, bias: true }]]),
        ("maxpool", vec![2, 8, 8], vec![vec![conv(3, 1, true), S::MaxPool { window: 2, stride: 2 }], head()]),
        ("avgpool", vec![2, 8, 8], vec![vec![conv(3, 1, true), S::AvgPool { window: 2, stride: 2 }], head()]),
        (
            "residual",
            vec![3, 6, 6],
            vec![vec![S::Residual(vec![conv(3, 1, true), S::Relu, conv(3, 1, true)])], head()],
        ),
        ("flatten", vec![2, 6, 6], vec![vec![conv(3, 2, false), S::Flatten, S::Dense { out: 10, bias: true }], vec![S::Dense { out: 4, bias: true }]]),
    ];
    let mut worst_in = 0.0f64;
    let mut worst_p = 0.0f64;
    let mut failures = Vec::new();
    for (k, (name, shape, stages)) in kinds.iter().enumerate() {
        let seed = 100 + k as u64;
        let m = build_from_specs(shape, stages, Precision::F64, seed).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = gaussian_draw(&mut rng, shape, 0.0, 1.0);
        let xs: Vec<Tensor> = (0..3).map(|_| gaussian_draw(&mut rng, shape, 0.0, 1.0)).collect();
        match (input_fd(&m, &a, seed), param_fd(&m, &xs, &[0, 1, 3], seed)) {
            (Some(i), Some(p)) => {
                worst_in = worst_in.max(i);
                worst_p = worst_p.max(p);
                if i >= INPUT_GRAD_REL_TOL || p >= PARAM_GRAD_REL_TOL {
                    failures.push(format!("{name} (input {i:.1e}, params {p:.1e})"));
                }
            }
            _ => failures.push(format!("{name} (fewer than {FD_COORDS} smooth coordinates)")),
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} layer kinds x {FD_COORDS} coords; worst input rel err {worst_in:.2e} (< {INPUT_GRAD_REL_TOL:e}), worst param rel err {worst_p:.2e} (< {PARAM_GRAD_REL_TOL:e}){}",
            kinds.len(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

// 2. Exact inversion.

fn c2_roundtrip(_: &mut Shared) -> Outcome {
    let mut worst64 = 0.0f64;
    let mut errs32 = Vec::new();
    for seed in 0..10 {
        let m = LinearModel::random(PROBE_WIDTH, PROBE_DEPTH, true, Precision::F64, seed).unwrap();
        let a = unit_input(PROBE_WIDTH, seed);
        worst64 = worst64.max(roundtrip_error(&m, &a).unwrap().error);
        errs32.push(roundtrip_error(&m.with_precision(Precision::F32), &a).unwrap().error);
    }
    let (lo, hi) = errs32.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    Outcome::new(
        worst64 < ROUNDTRIP_REL_TOL,
        format!("10 seeds, width {PROBE_WIDTH}, depth {PROBE_DEPTH}: worst 64-bit rel err {worst64:.2e} (< {ROUNDTRIP_REL_TOL:e})"),
    )
    .note(format!(
        "32-bit rel err (not gated): {lo:.2e} .. {hi:.2e}; {} of 10 seeds above 1e-3",
        errs32.iter().filter(|&&e| e > 1e-3).count()
    ))
}

// 3-7. Inversion fixtures.

fn sweep(kind: SweepKind, grid: &[usize], iterations: usize) -> Vec<SweepRow> {
    let mut template = InversionConfig::new(1, iterations, EpsilonSchedule::LinearDecay(1.0));
    template.seed = RUN_SEED;
    let points = build_points(kind, grid, &template, iterations, MODEL_SEED).unwrap();
    let target = inversion_target();
    let search = epsilon_search(RUN_SEED);
    std::thread::scope(|s| {
        let handles: Vec<_> = points
            .iter()
            .map(|p| s.spawn(|| run_point(p, &target, &search).unwrap()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn record(shared: &mut Shared, label: String, r: &SweepRow) {
    shared.fixture_runs.push((
        label,
        MetricsRecord {
            m_g: r.m_g,
            m_s: r.m_s,
            m_i: r.m_i,
            seed: RUN_SEED,
            layer: 0,
        },
    ));
}

fn c3_overcomplete(shared: &mut Shared) -> Outcome {
    let f = OVERCOMPLETE_F;
    let rows = sweep(SweepKind::Iterations, &[f, 2 * f, 4 * f], f);
    for r in &rows {
        record(shared, format!("overcomplete f={}", r.value), r);
    }
    let norm = inversion_target().l2_norm();
    let limit = OVERCOMPLETE_MI_FRACTION * norm;
    let (mi_f, mi_4f) = (rows[0].m_i, rows[2].m_i);
    let ratio = mi_4f / mi_f;
    Outcome::new(
        mi_f < limit && ratio < 0.5,
        format!(
            "final m_i at F={f}: {mi_f:.4} (< {limit:.4} = {OVERCOMPLETE_MI_FRACTION}*||a||); m_i(2F) {:.4}, m_i(4F) {mi_4f:.4}; m_i(4F)/m_i(F) = {ratio:.3} (< 0.5); c = {:.4}",
            rows[1].m_i, rows[0].epsilon
        ),
    )
    .note(
        "the 3x192 product of random square matrices is ill-conditioned; sign descent stalls well above the 1% floor"
            .into(),
    )
}

struct Signature {
    drop: f64,
    mi_ratio: f64,
    corr: Option<f64>,
    step_corr: Option<f64>,
}

impl Signature {
    fn of(run: &Inversion) -> Self {
        let (g, i) = (run.trace.m_g(), run.trace.m_i());
        Signature {
            drop: g[0] / g[g.len() - 1],
            mi_ratio: i[i.len() - 1] / i[0],
            corr: delta_correlation(&g, &i, WARMUP),
            step_corr: step_correlation(&g, &i, WARMUP),
        }
    }

    fn holds(&self) -> bool {
        self.drop >= M_G_DROP_MIN && self.mi_ratio >= M_I_FLOOR && self.corr.is_some_and(|c| c < 0.0)
    }

    fn describe(&self) -> String {
        format!(
            "m_g drop {:.1}x (>= {M_G_DROP_MIN}), final/initial m_i {:.3} (>= {M_I_FLOOR}), delta correlation {} (< 0)",
            self.drop,
            self.mi_ratio,
            self.corr.map_or("undefined".into(), |c| format!("{c:.3}"))
        )
    }
}

fn c4_undercomplete(shared: &mut Shared) -> Outcome {
    let target = inversion_target();
    let run_seed = |seed: u64| {
        let m = undercomplete_model(seed).unwrap();
        let cfg = undercomplete_config(RUN_SEED);
        let run = invert(&m, &target, &cfg).unwrap();
        let metrics = compute_metrics(&m, cfg.layer, &target, &run.generated, SHIFT_SIGMA, cfg.seed).unwrap();
        (Signature::of(&run), metrics)
    };
    let (sig, metrics) = run_seed(MODEL_SEED);
    shared.fixture_runs.push(("undercomplete".into(), metrics));
    let others: Vec<bool> = (1..8).map(|s| run_seed(s).0.holds()).collect();
    Outcome::new(sig.holds(), format!("{}; c = {UNDERCOMPLETE_C}, F = {UNDERCOMPLETE_F}", sig.describe()))
        .note(format!(
            "first-difference correlation (logged only): {}",
            sig.step_corr.map_or("undefined".into(), |c| format!("{c:.3}"))
        ))
        .note(format!(
            "model seeds 1-7 (not gated): signature holds on {}/7",
            others.iter().filter(|&&b| b).count()
        ))
}

fn c5_depth(shared: &mut Shared) -> Outcome {
    let rows = sweep(SweepKind::Depth, &SWEEP_DEPTHS, SWEEP_F);
    for r in &rows {
        record(shared, format!("depth {}", r.value), r);
    }
    let mi: Vec<f64> = rows.iter().map(|r| r.m_i).collect();
    Outcome::new(
        strictly_increasing(&mi),
        format!("final m_i over depths {:?} at F={SWEEP_F}: {} (strictly increasing)", SWEEP_DEPTHS, fmt_list(&mi)),
    )
}

fn c6_width(shared: &mut Shared) -> Outcome {
    let rows = sweep(SweepKind::Width, &SWEEP_WIDTHS, SWEEP_F);
    for r in &rows {
        record(shared, format!("width {}", r.value), r);
    }
    let mi: Vec<f64> = rows.iter().map(|r| r.m_i).collect();
    Outcome::new(
        strictly_decreasing(&mi),
        format!("final m_i over widths {:?} at F={SWEEP_F}: {} (strictly decreasing)", SWEEP_WIDTHS, fmt_list(&mi)),
    )
}

fn c7_shifted(shared: &mut Shared) -> Outcome {
    let bad: Vec<String> = shared
        .fixture_runs
        .iter()
        .filter(|(_, m)| !(m.m_g < m.m_s))
        .map(|(l, m)| format!("{l} (m_g {:.3e} vs m_s {:.3e})", m.m_g, m.m_s))
        .collect();
    let worst = shared
        .fixture_runs
        .iter()
        .map(|(_, m)| m.m_g / m.m_s)
        .fold(0.0f64, f64::max);
    Outcome::new(
        !shared.fixture_runs.is_empty() && bad.is_empty(),
        format!(
            "{} fixture inversions, largest m_g/m_s {worst:.3e} (< 1), sigma' = {SHIFT_SIGMA}{}",
            shared.fixture_runs.len(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    )
}

// 8-9. Analytic.

fn c8_conditioning(_: &mut Shared) -> Outcome {
    let m = LinearModel::random(PROBE_WIDTH, PROBE_DEPTH, true, Precision::F64, MODEL_SEED).unwrap();
    let a = unit_input(PROBE_WIDTH, MODEL_SEED);
    let seeds: Vec<u64> = (0..PROBE_SEEDS).collect();
    let rep = conditioning_probe(&m, &a, PROBE_SIGMA_OUT, PROBE_SIGMA_IN, &seeds).unwrap();
    let med = rep.median_ratio();
    let ratios: Vec<f64> = rep.rows.iter().map(|r| r.ratio).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        med > CONDITIONING_MIN_RATIO,
        format!(
            "width {PROBE_WIDTH} depth {PROBE_DEPTH}, sigma_out {PROBE_SIGMA_OUT}, sigma_in {PROBE_SIGMA_IN}: median ratio {med:.3e} (> {CONDITIONING_MIN_RATIO:e}) over {PROBE_SEEDS} seeds, range {lo:.2e} .. {hi:.2e}"
        ),
    )
    .note("the ratio depends strongly on the random model; other model seeds give medians from ~10 to ~1e4".into())
}

fn c9_capacity(_: &mut Shared) -> Outcome {
    let cases = [((192, 0.5, 0), 192u64), ((192, 0.5, 3), 1536), ((2523, 0.5, 1), 5046)];
    let got: Vec<u64> = cases
        .iter()
        .map(|&((m, p, n), _)| relu_capacity(CapacityQuery { m, p, n }).unwrap())
        .collect();
    let exact = cases.iter().zip(&got).all(|((_, want), g)| g == want);
    let w = ZERO_FRACTION_WIDTH;
    let model = build_mlp(w, &[w, w, w], false, true, Precision::F64, MODEL_SEED).unwrap();
    let mut rng = SeededRng::new(RUN_SEED);
    let inputs: Vec<Tensor> = (0..20).map(|_| gaussian_draw(&mut rng, &[w], 0.0, 1.0)).collect();
    let z = estimate_zero_fraction(&model, &inputs).unwrap();
    let fr: Vec<f64> = z.iter().map(|f| f.fraction()).collect();
    let in_band = z.iter().all(|f| f.total >= 1000 && (f.fraction() - 0.5).abs() <= ZERO_FRACTION_TOL);
    Outcome::new(
        exact && in_band,
        format!(
            "capacities {got:?} (want [192, 1536, 5046]); zero fractions {} over {} activations per layer (0.5 +/- {ZERO_FRACTION_TOL})",
            fmt_list(&fr),
            z.first().map_or(0, |f| f.total)
        ),
    )
}

// 10-11. Training.

fn noise_data() -> Dataset {
    make_noise_dataset(NOISE_COUNT, NOISE_CLASSES, NOISE_MU, NOISE_SIGMA, &TRAIN_SHAPE, RUN_SEED).unwrap()
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: LEARNING_RATE,
        batch: BATCH,
        seed: RUN_SEED,
    }
}

fn c10_memorisation(shared: &mut Shared) -> Outcome {
    let data = noise_data();
    let model = noise_mlp(MODEL_SEED).unwrap();
    let (a, b) = std::thread::scope(|s| {
        let h = s.spawn(|| train(&model, &data, &train_cfg(MLP_EPOCHS)).unwrap());
        let b = train(&model, &data, &train_cfg(MLP_EPOCHS)).unwrap();
        (h.join().unwrap(), b)
    });
    let first_full = a.history.iter().find(|h| h.accuracy == 1.0).map(|h| h.epoch);
    let final_acc = a.history.last().unwrap().accuracy;
    let identical = a.model.to_param_blob() == b.model.to_param_blob() && a.history == b.history;
    shared.noise_training = Some((data, a));
    Outcome::new(
        final_acc == 1.0 && identical,
        format!(
            "MLP {MLP_HIDDEN} hidden, {NOISE_COUNT} items / {NOISE_CLASSES} classes, {MLP_EPOCHS} epochs: final accuracy {final_acc}, first reached 1.0 at epoch {}; repeated training bit-identical: {identical}",
            first_full.map_or("never".into(), |e| e.to_string())
        ),
    )
}

fn c11_trained_convnet(shared: &mut Shared) -> Outcome {
    let data = match &shared.noise_training {
        Some((d, _)) => d.clone(),
        None => noise_data(),
    };
    let trained = train(&convnet(NOISE_CLASSES, MODEL_SEED).unwrap(), &data, &train_cfg(CONV_EPOCHS)).unwrap();
    let acc = trained.history.last().unwrap().accuracy;
    let model = trained.model.with_precision(Precision::F32);
    let layer = CONV_CHANNELS.len();
    let target = training_target();
    let mut cfg = InversionConfig::new(layer, UNDERCOMPLETE_F, EpsilonSchedule::LinearDecay(1.0));
    cfg.seed = RUN_SEED;
    let found = epsilon_line_search(&model, &target, &cfg, &epsilon_search(RUN_SEED)).unwrap();
    cfg.epsilon = cfg.epsilon.with_constant(found.best);
    let run = invert(&model, &target, &cfg).unwrap();
    let sig = Signature::of(&run);
    Outcome::new(
        sig.holds(),
        format!(
            "convnet {:?} after {CONV_EPOCHS} epochs (train accuracy {acc}), block {layer}: {}; c = {:.4}",
            CONV_CHANNELS,
            sig.describe(),
            found.best
        ),
    )
    .note("units inactive at the current input receive no gradient, so m_g plateaus below the 100x drop".into())
}

// 12. CLI determinism.

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.clone(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c12_determinism(_: &mut Shared) -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let fx = |n: &str| fixtures.join(n).display().to_string();
    let tmp = tempfile::tempdir().unwrap();
    let commands: Vec<(&str, Vec<String>)> = vec![
        ("invert", vec!["invert".into(), "--model".into(), fx("overcomplete.manifest"), "--iters".into(), "300".into(), "--blur".into(), "2.4:0.4".into()]),
        ("sweep", vec!["sweep".into(), "depth".into(), "--grid".into(), "1,3".into(), "--iters".into(), "100".into(), "--candidates".into(), "3".into(), "--search-iters".into(), "20".into(), "--jobs".into(), "2".into()]),
        ("analytic", vec!["analytic".into()]),
        ("capacity", vec!["capacity".into(), "--m".into(), "192".into(), "--p".into(), "0.5".into(), "--n".into(), "3".into(), "--model".into(), fx("undercomplete.manifest")]),
        ("train", vec!["train".into(), "--arch".into(), "convnet".into(), "--count".into(), "40".into(), "--epochs".into(), "2".into()]),
        ("noise-compare", vec!["noise-compare".into(), "--count".into(), "20".into(), "--epochs".into(), "1".into(), "--iters".into(), "50".into(), "--candidates".into(), "2".into(), "--search-iters".into(), "10".into(), "--jobs".into(), "3".into()]),
        ("epsilon-search", vec!["epsilon-search".into(), "--model".into(), fx("undercomplete.manifest"), "--iters".into(), "30".into(), "--candidates".into(), "3".into()]),
    ];
    let mut bad = Vec::new();
    let mut files = 0;
    for (name, args) in &commands {
        let out = tmp.path().join(name);
        let run = || {
            let st = Command::new(env!("CARGO_BIN_EXE_reprobe"))
                .args(args)
                .args(["--seed", "7", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            (st.status.success(), snapshot(&out))
        };
        let (ok1, first) = run();
        let (ok2, second) = run();
        files += first.len();
        if !(ok1 && ok2) || first.is_empty() || first != second {
            bad.push(name.to_string());
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!(
            "{} subcommands run twice with --seed 7: {files} output files byte-identical{}",
            commands.len(),
            if bad.is_empty() { String::new() } else { format!("; differing or failing: {}", bad.join(", ")) }
        ),
    )
}

fn fmt_list(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", v.join(", "))
}
