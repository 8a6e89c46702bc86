use anyhow::{anyhow, bail, Result};
use memristive_core::harness::pattern::{run_pattern_seeds, set_param, PatternRunResult};
use memristive_core::harness::search::{random_search, ParamRange, SearchSpace};
use serde::Serialize;

use crate::output::{create, csv_writer, load_config, write_json};
use crate::run::pattern_setup;
use crate::{SearchArgs, SweepArgs, Verdict};

#[derive(Serialize)]
struct SweepPoint {
    value: f64,
    mean_final_mse: f64,
    best_final_mse: f64,
    mean_sets: f64,
    failed_runs: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

pub fn sweep(a: &SweepArgs) -> Result<Verdict> {
    let cfg = load_config(a.config.as_deref())?;
    let base = pattern_setup(&a.pattern, &a.device_mode, &cfg, 0)?;
    let mut w = csv_writer(&a.out.join("sweep.csv"))?;
    w.write_record(["param", "value", "seed", "final_mse", "failed", "sets", "resets", "refreshes"])?;
    let mut points = Vec::new();
    for &v in &a.values {
        let (mut task, mut scheme) = (base.task.clone(), base.scheme);
        set_param(&mut task, &mut scheme, &a.param, v)?;
        let runs: Vec<PatternRunResult> = run_pattern_seeds(&task, &scheme, base.mode, &base.seeds)?;
        for r in &runs {
            w.write_record([
                a.param.clone(),
                v.to_string(),
                r.seed.to_string(),
                r.final_mse.to_string(),
                r.failed.to_string(),
                r.total.sets.to_string(),
                r.total.resets.to_string(),
                r.total.refreshes.to_string(),
            ])?;
        }
        let ok: Vec<&PatternRunResult> = runs.iter().filter(|r| !r.failed).collect();
        let p = SweepPoint {
            value: v,
            mean_final_mse: mean(ok.iter().map(|r| r.final_mse)),
            best_final_mse: ok.iter().map(|r| r.final_mse).fold(f64::INFINITY, f64::min),
            mean_sets: mean(runs.iter().map(|r| r.total.sets as f64)),
            failed_runs: runs.len() - ok.len(),
        };
        println!(
            "{} = {:<10}  mean MSE {:.5}  best {:.5}  mean sets {:.0}",
            a.param, v, p.mean_final_mse, p.best_final_mse, p.mean_sets
        );
        points.push(p);
    }
    w.flush()?;
    write_json(
        &a.out.join("sweep.json"),
        &serde_json::json!({
            "param": a.param,
            "scheme": base.scheme,
            "device_mode": base.mode.to_string(),
            "seeds": base.seeds,
            "points": points,
        }),
    )?;
    Ok(Verdict::Pass)
}

/// Parses `name=lo:hi` or `name=lo:hi:log`.
pub fn parse_range(s: &str) -> Result<ParamRange> {
    let (name, spec) = s.split_once('=').ok_or_else(|| anyhow!("range {s:?} lacks '='"))?;
    let parts: Vec<&str> = spec.split(':').collect();
    let (lo, hi) = match parts.as_slice() {
        [lo, hi] | [lo, hi, _] => (lo.parse::<f64>()?, hi.parse::<f64>()?),
        _ => bail!("range {s:?} must look like name=lo:hi[:log]"),
    };
    match parts.get(2) {
        None => Ok(ParamRange::uniform(name, lo, hi)),
        Some(&"log") => Ok(ParamRange::log_uniform(name, lo, hi)),
        Some(other) => bail!("unknown range scale {other:?}"),
    }
}

pub fn search(a: &SearchArgs) -> Result<Verdict> {
    let cfg = load_config(a.config.as_deref())?;
    let base = pattern_setup(&a.pattern, &a.device_mode, &cfg, 0)?;
    let space = SearchSpace {
        params: a.ranges.iter().map(|r| parse_range(r)).collect::<Result<_>>()?,
        include: Vec::new(),
    };
    let result = random_search(&space, a.trials, a.search_seed, |p| {
        let (mut task, mut scheme) = (base.task.clone(), base.scheme);
        for (k, &v) in p {
            set_param(&mut task, &mut scheme, k, v)?;
        }
        let runs = run_pattern_seeds(&task, &scheme, base.mode, &base.seeds)?;
        Ok(mean(runs.iter().map(|r| r.final_mse)))
    })?;
    result.write_csv(create(&a.out.join("trials.csv"))?)?;
    write_json(&a.out.join("search.json"), &result)?;
    println!("best trial {} (mean final MSE {:.5}): {:?}", result.best.index, result.best.loss, result.best.params);
    Ok(Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use memristive_core::harness::search::Scale;

    #[test]
    fn ranges() {
        let r = parse_range("lr=1e-5:1e-2:log").unwrap();
        assert_eq!((r.lo, r.hi, r.scale), (1e-5, 1e-2, Scale::LogUniform));
        assert_eq!(parse_range("p=1:10").unwrap().scale, Scale::Uniform);
        assert!(parse_range("p").is_err());
        assert!(parse_range("p=1").is_err());
        assert!(parse_range("p=1:2:cubic").is_err());
    }
}
