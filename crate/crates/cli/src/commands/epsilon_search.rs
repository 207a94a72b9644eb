use anyhow::Result;
use reprobe_core::inversion::{epsilon_line_search, EpsilonSchedule};
use reprobe_core::Precision;

use super::*;
use crate::output::num;
use crate::EpsilonSearchArgs;

pub fn run(a: &EpsilonSearchArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let (model_path, params) = resolve_model_paths(&r, &a.model)?;
    let inv = resolve_inversion(
        &r,
        &a.inv,
        InvDefaults {
            iters: gates::epsilon_search(0).iterations,
            eps: EpsilonSchedule::LinearDecay(gates::epsilon_search(0).hi),
            precision: Precision::F32,
        },
    )?;
    let base = resolve_base(&r, &a.base)?;
    if a.search.search_iters.is_some() {
        return Err(UsageError("epsilon-search takes its trial budget from --iters".into()).into());
    }
    let d = gates::epsilon_search(base.seed);
    let search = EpsilonSearch {
        candidates: r.get("candidates", a.search.candidates, d.candidates)?,
        lo: r.get("lo", a.search.lo, d.lo)?,
        hi: r.get("hi", a.search.hi, d.hi)?,
        iterations: inv.config.iterations,
        seed: base.seed,
    };
    let model_path = require_model(model_path)?;
    r.finish()?;

    let model = load_model(&model_path, params.as_deref())?;
    let mut cfg = inv.config;
    cfg.layer = inv.layer.unwrap_or(model.depth());
    cfg.seed = base.seed;
    let model = model.with_precision(cfg.precision);
    let target = load_target(inv.target.as_deref(), model.input_shape())?;

    let found = epsilon_line_search(&model, &target, &cfg, &search)?;
    let rows: Vec<Vec<String>> = found
        .tried
        .iter()
        .enumerate()
        .map(|(i, (c, m))| {
            let (m, status) = match m {
                Some(m) => (num(*m), "ok"),
                None => (String::new(), "diverged"),
            };
            vec![i.to_string(), num(*c), m, status.to_string()]
        })
        .collect();
    let mut out = open_out(&r, line, &base)?;
    out.write_csv("epsilon_search.csv", &["candidate", "c", "final_m_g", "status"], &rows)?;
    println!("best c {} (final m_g {})", found.best, found.best_m_g);
    report(&out);
    Ok(())
}
