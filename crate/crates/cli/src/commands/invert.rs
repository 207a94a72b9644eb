use anyhow::Result;
use reprobe_core::inversion::{compute_metrics, invert, EpsilonSchedule, SHIFT_SIGMA};
use reprobe_core::Precision;

use super::*;
use crate::output::num;
use crate::InvertArgs;

pub const DEFAULT_ITERS: usize = 1000;
pub const DEFAULT_EPS: EpsilonSchedule = EpsilonSchedule::LinearDecay(0.01);

pub fn run(a: &InvertArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let (model_path, params) = resolve_model_paths(&r, &a.model)?;
    let inv = resolve_inversion(
        &r,
        &a.inv,
        InvDefaults {
            iters: DEFAULT_ITERS,
            eps: DEFAULT_EPS,
            precision: Precision::F32,
        },
    )?;
    let base = resolve_base(&r, &a.base)?;
    let model_path = require_model(model_path)?;
    r.finish()?;

    let model = load_model(&model_path, params.as_deref())?;
    let mut cfg = inv.config;
    cfg.layer = inv.layer.unwrap_or(model.depth());
    cfg.seed = base.seed;
    let model = model.with_precision(cfg.precision);
    let target = load_target(inv.target.as_deref(), model.input_shape())?;

    let run = invert(&model, &target, &cfg)?;
    let m = compute_metrics(&model, cfg.layer, &target, &run.generated, SHIFT_SIGMA, cfg.seed)?;

    let mut out = open_out(&r, line, &base)?;
    write_image(&mut out, "generated", &run.generated)?;
    let rows: Vec<Vec<String>> = run
        .trace
        .rows
        .iter()
        .map(|t| vec![t.n.to_string(), num(t.l1_objective), num(t.m_g), num(t.m_i)])
        .collect();
    out.write_csv("trace.csv", &["n", "l1_objective", "m_g", "m_i"], &rows)?;
    out.write_csv(
        "metrics.csv",
        &["layer", "iterations", "epsilon", "m_g", "m_s", "m_i", "m_g_below_m_s"],
        &[vec![
            cfg.layer.to_string(),
            cfg.iterations.to_string(),
            cfg.epsilon.to_string(),
            num(m.m_g),
            num(m.m_s),
            num(m.m_i),
            m.is_good().to_string(),
        ]],
    )?;
    println!("m_g {} m_s {} m_i {} (m_g < m_s: {})", m.m_g, m.m_s, m.m_i, m.is_good());
    report(&out);
    Ok(())
}
