use anyhow::Result;
use reprobe_core::analytic::{estimate_zero_fraction, relu_capacity, CapacityQuery};
use reprobe_core::trainer::{make_noise_dataset, NOISE_MU, NOISE_SIGMA};

use super::*;
use crate::output::num;
use crate::CapacityArgs;

pub const DEFAULT_COUNT: usize = 100;

pub fn run(a: &CapacityArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let m = r.get_opt("m", a.m)?;
    let p = r.get_opt("p", a.p)?;
    let n = r.get_opt("n", a.n)?;
    let (model_path, params) = resolve_model_paths(&r, &a.model)?;
    let count = r.get("count", a.count, DEFAULT_COUNT)?;
    let base = resolve_base(&r, &a.base)?;
    r.finish()?;

    let query = match (m, p, n) {
        (Some(m), Some(p), Some(n)) => Some(CapacityQuery { m, p, n }),
        (None, None, None) => None,
        _ => return Err(UsageError("--m, --p and --n go together".into()).into()),
    };
    if query.is_none() && model_path.is_none() {
        return Err(UsageError("give --m --p --n, or --model to measure zero fractions".into()).into());
    }
    let mut out = open_out(&r, line, &base)?;
    if let Some(q) = query {
        let w = relu_capacity(q).map_err(|e| UsageError(e.to_string()))?;
        println!("{w}");
        out.write_csv(
            "capacity.csv",
            &["m", "p", "n", "capacity"],
            &[vec![q.m.to_string(), num(q.p), q.n.to_string(), w.to_string()]],
        )?;
    }
    if let Some(path) = model_path {
        let model = load_model(&path, params.as_deref())?;
        let inputs = make_noise_dataset(count, 1, NOISE_MU, NOISE_SIGMA, model.input_shape(), base.seed)?.inputs;
        let fractions = estimate_zero_fraction(&model, &inputs)?;
        if fractions.is_empty() {
            eprintln!("note: model has no ReLU layers");
        }
        let m = model.input_len() as u64;
        let rows: Vec<Vec<String>> = fractions
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let cap = relu_capacity(CapacityQuery {
                    m,
                    p: z.fraction(),
                    n: i as u32 + 1,
                })
                .map_or_else(|_| "-".to_string(), |w| w.to_string());
                println!("relu {} (stage {}): zero fraction {} -> capacity {cap}", i + 1, z.stage, z.fraction());
                vec![(i + 1).to_string(), z.stage.to_string(), z.zeros.to_string(), z.total.to_string(), num(z.fraction()), cap]
            })
            .collect();
        out.write_csv("zero_fraction.csv", &["relu", "stage", "zeros", "total", "fraction", "capacity"], &rows)?;
    }
    report(&out);
    Ok(())
}
