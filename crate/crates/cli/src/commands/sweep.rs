use anyhow::Result;
use rayon::prelude::*;
use reprobe_core::inversion::EpsilonSchedule;
use reprobe_core::sweep::{build_points, run_point, SweepKind};
use reprobe_core::Precision;

use super::*;
use crate::output::num;
use crate::SweepArgs;

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let grid: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| UsageError(format!("grid `{s}` is not a comma-separated list of integers")))?;
    if grid.is_empty() || grid.contains(&0) {
        return Err(UsageError(format!("grid `{s}` needs positive values")).into());
    }
    Ok(grid)
}

pub fn run(a: &SweepArgs, line: &str) -> Result<()> {
    let kind: SweepKind = a.kind.parse().map_err(|e: reprobe_core::Error| UsageError(e.to_string()))?;
    let r = Resolver::load(a.base.config.as_deref())?;
    let grid_text = r.get("grid", a.grid.clone(), join(&kind.default_grid()))?;
    let grid = parse_grid(&grid_text)?;
    let default_iters = match kind {
        SweepKind::Iterations => gates::OVERCOMPLETE_F,
        _ => gates::SWEEP_F,
    };
    let inv = resolve_inversion(
        &r,
        &a.inv,
        InvDefaults {
            iters: default_iters,
            eps: EpsilonSchedule::LinearDecay(gates::epsilon_search(0).hi),
            precision: Precision::F32,
        },
    )?;
    let base = resolve_base(&r, &a.base)?;
    let search = resolve_search(&r, &a.search, base.seed)?;
    if inv.layer.is_some() {
        return Err(UsageError("sweep always matches the last layer; drop --layer".into()).into());
    }
    r.finish()?;

    let mut template = inv.config;
    template.seed = base.seed;
    let points = build_points(kind, &grid, &template, template.iterations, base.seed)?;
    let target = load_target(inv.target.as_deref(), points[0].model.input_shape())?;

    let results: Vec<_> = thread_pool(base.jobs)?.install(|| {
        points
            .par_iter()
            .map(|p| run_point(p, &target, &search))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (p, res) in points.iter().zip(&results) {
        match res {
            Ok(row) => rows.push(vec![
                p.value.to_string(),
                num(row.epsilon),
                num(row.m_g),
                num(row.m_s),
                num(row.m_i),
                "ok".to_string(),
            ]),
            Err(e) => {
                failures.push(e.clone());
                rows.push(vec![p.value.to_string(), String::new(), String::new(), String::new(), String::new(), e.to_string()]);
            }
        }
    }
    let mut out = open_out(&r, line, &base)?;
    out.write_csv(&format!("sweep_{kind}.csv"), &["value", "epsilon", "m_g", "m_s", "m_i", "status"], &rows)?;
    for row in &rows {
        println!("{kind} {}: m_i {} ({})", row[0], row[4], row[5]);
    }
    report(&out);
    if failures.len() == points.len() {
        return Err(anyhow::Error::new(failures.swap_remove(0)).context("every grid point failed"));
    }
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("96, 192,384").unwrap(), vec![96, 192, 384]);
        assert!(parse_grid("1,x").is_err());
        assert!(parse_grid("0").is_err());
    }
}
