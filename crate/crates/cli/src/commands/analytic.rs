use anyhow::Result;
use reprobe_core::analytic::{conditioning_probe, roundtrip_error, unit_input, LinearModel};
use reprobe_core::Precision;

use super::*;
use crate::output::num;
use crate::AnalyticArgs;

pub fn run(a: &AnalyticArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let (model_path, params) = resolve_model_paths(
        &r,
        &ModelFlags {
            model: a.model.clone(),
            params: a.params.clone(),
        },
    )?;
    let width = r.get("width", a.width, gates::PROBE_WIDTH)?;
    let depth = r.get("depth", a.depth, gates::PROBE_DEPTH)?;
    let no_bias = r.switch("no_bias", a.no_bias)?;
    let precision = r.get("precision", parse_flag("precision", &a.precision)?, Precision::F64)?;
    let probe_seeds = r.get("probe_seeds", a.probe_seeds, gates::PROBE_SEEDS)?;
    let sigma_out = r.get("sigma_out", a.sigma_out, gates::PROBE_SIGMA_OUT)?;
    let sigma_in = r.get("sigma_in", a.sigma_in, gates::PROBE_SIGMA_IN)?;
    let base = resolve_base(&r, &a.base)?;
    r.finish()?;

    let model = match &model_path {
        Some(p) => LinearModel::from_model(&load_model(p, params.as_deref())?)?.with_precision(precision),
        None => LinearModel::random(width, depth, !no_bias, precision, base.seed)?,
    };
    let x = unit_input(model.width(), base.seed);
    let rel = roundtrip_error(&model, &x)?;
    let seeds: Vec<u64> = (0..probe_seeds).map(|i| base.seed.wrapping_add(i)).collect();
    let probe = conditioning_probe(&model, &x, sigma_out, sigma_in, &seeds)?;
    let median = probe.median_ratio();

    let mut out = open_out(&r, line, &base)?;
    out.write_csv(
        "analytic.csv",
        &["precision", "width", "depth", "roundtrip_rel_error", "median_ratio", "warning"],
        &[vec![
            precision.to_string(),
            model.width().to_string(),
            model.depth().to_string(),
            num(rel.error),
            num(median),
            rel.warning.clone().unwrap_or_default(),
        ]],
    )?;
    let rows: Vec<Vec<String>> = probe
        .rows
        .iter()
        .map(|p| vec![p.seed.to_string(), num(p.dist_a_app), num(p.dist_a_ap), num(p.ratio)])
        .collect();
    out.write_csv("probe.csv", &["seed", "dist_a_app", "dist_a_ap", "ratio"], &rows)?;
    if let Some(w) = &rel.warning {
        eprintln!("warning: {w}");
    }
    println!("round-trip relative error: {:e}", rel.error);
    println!("median conditioning ratio: {median}");
    report(&out);
    Ok(())
}
