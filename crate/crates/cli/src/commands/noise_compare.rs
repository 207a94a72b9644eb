use anyhow::Result;
use rayon::prelude::*;
use reprobe_core::inversion::{compute_metrics, epsilon_line_search, invert, EpsilonSchedule, SHIFT_SIGMA};
use reprobe_core::trainer::{evaluate, train, TrainConfig, Training};
use reprobe_core::{Model, Precision};

use super::train::{dataset, history_rows, DataKind};
use super::*;
use crate::output::num;
use crate::NoiseCompareArgs;

const NAMES: [&str; 3] = ["untrained", "structured", "noise"];

pub fn run(a: &NoiseCompareArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let explicit_eps = a.inv.eps.is_some() || r.has_file_key("eps");
    let inv = resolve_inversion(
        &r,
        &a.inv,
        InvDefaults {
            iters: gates::UNDERCOMPLETE_F,
            eps: EpsilonSchedule::LinearDecay(gates::epsilon_search(0).hi),
            precision: Precision::F32,
        },
    )?;
    let count = r.get("count", a.count, gates::NOISE_COUNT)?;
    let epochs = r.get("epochs", a.epochs, gates::CONV_EPOCHS)?;
    let base = resolve_base(&r, &a.base)?;
    let search = resolve_search(&r, &a.search, base.seed)?;
    r.finish()?;

    let untrained = gates::convnet(gates::NOISE_CLASSES, base.seed)?;
    let layer = inv.layer.unwrap_or(gates::CONV_CHANNELS.len());
    untrained.check_layer(layer).map_err(|e| UsageError(e.to_string()))?;
    let target = load_target(inv.target.as_deref(), untrained.input_shape())?;
    let cfg = TrainConfig {
        epochs,
        lr: gates::LEARNING_RATE,
        batch: gates::BATCH,
        seed: base.seed,
    };
    let structured_data = dataset(DataKind::Structured, count, gates::STRUCTURED_CLASSES, base.seed)?;
    let noise_data = dataset(DataKind::Noise, count, gates::NOISE_CLASSES, base.seed)?;

    let pool = thread_pool(base.jobs)?;
    let (structured, noise) = pool.install(|| {
        rayon::join(
            || train(&gates::convnet(gates::STRUCTURED_CLASSES, base.seed)?, &structured_data, &cfg),
            || train(&untrained, &noise_data, &cfg),
        )
    });
    let (structured, noise): (Training, Training) = (structured?, noise?);
    let models: [&Model; 3] = [&untrained, &structured.model, &noise.model];

    let mut template = inv.config;
    template.layer = layer;
    template.seed = base.seed;
    let runs: Vec<_> = pool.install(|| {
        models
            .par_iter()
            .map(|m| -> reprobe_core::Result<_> {
                let m = m.with_precision(template.precision);
                let mut cfg = template.clone();
                if !explicit_eps {
                    let found = epsilon_line_search(&m, &target, &cfg, &search)?;
                    cfg.epsilon = cfg.epsilon.with_constant(found.best);
                }
                let run = invert(&m, &target, &cfg)?;
                let metrics = compute_metrics(&m, layer, &target, &run.generated, SHIFT_SIGMA, cfg.seed)?;
                Ok((cfg.epsilon, run, metrics))
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<reprobe_core::Result<Vec<_>>>()?;

    let row = |name: &str, f: &dyn Fn(usize) -> String| {
        let mut v = vec![name.to_string()];
        v.extend((0..3).map(f));
        v
    };
    let train_acc = [
        "-".to_string(),
        num(evaluate(&structured.model, &structured_data)?.1),
        num(evaluate(&noise.model, &noise_data)?.1),
    ];
    let table = vec![
        row("epsilon", &|i| runs[i].0.to_string()),
        row("m_g_initial", &|i| num(runs[i].1.trace.first().m_g)),
        row("m_g", &|i| num(runs[i].2.m_g)),
        row("m_s", &|i| num(runs[i].2.m_s)),
        row("m_i_initial", &|i| num(runs[i].1.trace.first().m_i)),
        row("m_i", &|i| num(runs[i].2.m_i)),
        row("train_accuracy", &|i| train_acc[i].clone()),
    ];

    let mut out = open_out(&r, line, &base)?;
    out.write_csv("noise_compare.csv", &["metric", NAMES[0], NAMES[1], NAMES[2]], &table)?;
    for (name, run) in NAMES.iter().zip(&runs) {
        write_image(&mut out, &format!("generated_{name}"), &run.1.generated)?;
    }
    out.write_csv("history_structured.csv", &["epoch", "loss", "accuracy"], &history_rows(&structured))?;
    out.write_csv("history_noise.csv", &["epoch", "loss", "accuracy"], &history_rows(&noise))?;
    for r in &table {
        println!("{}", r.join("\t"));
    }
    if runs[2].2.m_i < runs[0].2.m_i {
        println!("note: the noise-trained model reconstructed the target more closely than the untrained one");
    }
    report(&out);
    Ok(())
}
