use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use memristive_core::harness::config::RunConfig;
use memristive_core::harness::firing::FiringClass;
use memristive_core::harness::mnist::{load_split, run_mnist_task, MnistTaskConfig};
use memristive_core::harness::pattern::{best_of, run_pattern_seeds, tuned, write_loss_csv, DeviceMode, PatternTaskConfig};
use memristive_core::harness::reservoir::{run_rc_task, TrainingMode};
use memristive_core::update::{SchemeConfig, SchemeKind};
use memristive_core::PulseTelemetry;
use serde::Serialize;

use crate::output::{create, csv_writer, load_config, write_confusion, write_json};
use crate::{PatternOpts, RunArgs, Task, Verdict};

pub const DEFAULT_MNIST_DIR: &str = "data/mnist-subset";

/// Everything needed to launch the pattern task.
pub struct PatternSetup {
    pub task: PatternTaskConfig,
    pub scheme: SchemeConfig,
    pub mode: DeviceMode,
    pub seeds: Vec<u64>,
}

/// Tuned settings for the scheme, overridden by the config file
/// and then by the command line.
pub fn pattern_setup(opts: &PatternOpts, device_mode: &str, cfg: &RunConfig, default_seed: u64) -> Result<PatternSetup> {
    let kind: SchemeKind = opts.scheme.parse()?;
    let mode: DeviceMode = device_mode.parse()?;
    let (mut task, mut scheme) = tuned(kind, opts.devices);
    if let Some(p) = &cfg.pattern {
        task = p.clone();
    }
    if let Some(s) = cfg.scheme {
        scheme = s;
    }
    if let Some(e) = opts.epochs {
        task.epochs = e;
    }
    let seeds = if !opts.seeds.is_empty() {
        opts.seeds.clone()
    } else if !cfg.seeds.is_empty() {
        cfg.seeds.clone()
    } else {
        vec![default_seed]
    };
    task.validate()?;
    scheme.validate()?;
    Ok(PatternSetup { task, scheme, mode, seeds })
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    final_mse: f64,
    failed: bool,
    failure: Option<String>,
    pulses: PulseTelemetry,
}

#[derive(Serialize)]
struct PatternSummary<'a> {
    task: &'static str,
    scheme: &'a SchemeConfig,
    device_mode: String,
    success_mse: f64,
    best_seed: Option<u64>,
    best_final_mse: Option<f64>,
    succeeded: bool,
    runs: Vec<SeedSummary>,
    config: &'a PatternTaskConfig,
}

pub fn run(a: &RunArgs) -> Result<Verdict> {
    let cfg = load_config(a.config.as_deref())?;
    match a.task {
        Task::Pattern => run_pattern(a, &cfg),
        Task::Mnist => run_mnist(a, &cfg),
        Task::Rc => run_rc(a, &cfg),
    }
}

fn run_pattern(a: &RunArgs, cfg: &RunConfig) -> Result<Verdict> {
    let setup = pattern_setup(&a.pattern, a.device_mode.as_deref().unwrap_or("pcm"), cfg, a.seed)?;
    let runs = run_pattern_seeds(&setup.task, &setup.scheme, setup.mode, &setup.seeds)?;
    for r in &runs {
        write_loss_csv(r, create(&a.out.join(format!("loss_seed{}.csv", r.seed)))?)?;
    }
    let best = best_of(&runs);
    let threshold = setup.task.success_mse;
    let succeeded = best.is_some_and(|b| b.succeeded(threshold));
    let summary = PatternSummary {
        task: "pattern",
        scheme: &setup.scheme,
        device_mode: setup.mode.to_string(),
        success_mse: threshold,
        best_seed: best.map(|b| b.seed),
        best_final_mse: best.map(|b| b.final_mse),
        succeeded,
        runs: runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.seed,
                final_mse: r.final_mse,
                failed: r.failed,
                failure: r.failure.clone(),
                pulses: r.total,
            })
            .collect(),
        config: &setup.task,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    for r in &runs {
        println!(
            "seed {:>4}  final MSE {:>9.5}  sets {:>9}  resets {:>7}{}",
            r.seed,
            r.final_mse,
            r.total.sets,
            r.total.resets,
            if r.failed { "  (diverged)" } else { "" }
        );
    }
    Ok(match best {
        Some(b) if succeeded => {
            println!("best seed {}: MSE {:.5} < {threshold}", b.seed, b.final_mse);
            Verdict::Pass
        }
        Some(b) => Verdict::Fail(format!("best MSE {:.5} is not below {threshold}", b.final_mse)),
        None => Verdict::Fail("every seed diverged".into()),
    })
}

fn check_accuracy(acc: f64, min: Option<f64>) -> Verdict {
    match min {
        Some(m) if acc < m => Verdict::Fail(format!("test accuracy {acc:.4} is below {m}")),
        _ => Verdict::Pass,
    }
}

#[derive(Serialize)]
struct MnistSummary<'a> {
    task: &'static str,
    seed: u64,
    data_dir: String,
    train_size: usize,
    test_size: usize,
    result: &'a memristive_core::harness::mnist::MnistResult,
    config: &'a MnistTaskConfig,
}

fn run_mnist(a: &RunArgs, cfg: &RunConfig) -> Result<Verdict> {
    let dir: PathBuf = a
        .data_dir
        .clone()
        .or_else(|| cfg.mnist_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_DIR));
    let m = &cfg.mnist;
    let train = load_split(&dir, "train", m.classes)?;
    let test = load_split(&dir, "t10k", m.classes)?;
    let r = run_mnist_task(m, &train, &test, a.seed)?;
    let mut w = csv_writer(&a.out.join("accuracy.csv"))?;
    w.write_record(["epoch", "train_accuracy", "test_accuracy", "programmings"])?;
    for e in 0..r.test_accuracy.len() {
        w.write_record([
            (e + 1).to_string(),
            r.train_accuracy[e].to_string(),
            r.test_accuracy[e].to_string(),
            r.programmings[e].to_string(),
        ])?;
    }
    w.flush()?;
    let names: Vec<String> = (0..m.classes).map(|c| c.to_string()).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    write_confusion(&a.out.join("confusion.csv"), &names, &r.confusion)?;
    write_json(
        &a.out.join("summary.json"),
        &MnistSummary {
            task: "mnist",
            seed: a.seed,
            data_dir: dir.display().to_string(),
            train_size: m.train_limit.map_or(train.len(), |n| n.min(train.len())),
            test_size: m.test_limit.map_or(test.len(), |n| n.min(test.len())),
            result: &r,
            config: m,
        },
    )?;
    for (e, (tr, te)) in r.train_accuracy.iter().zip(&r.test_accuracy).enumerate() {
        println!("epoch {}  train {:.4}  test {:.4}  programmings {}", e + 1, tr, te, r.programmings[e]);
    }
    let last = *r.test_accuracy.last().context("no epochs ran")?;
    Ok(check_accuracy(last, a.min_accuracy))
}

fn run_rc(a: &RunArgs, cfg: &RunConfig) -> Result<Verdict> {
    let mode: TrainingMode = a.device_mode.as_deref().unwrap_or("icc").parse()?;
    if a.pattern.epochs.is_some() {
        bail!("--epochs applies to the pattern task; set rc.epochs in the config instead");
    }
    let r = run_rc_task(&cfg.rc, mode, a.seed)?;
    let mut w = csv_writer(&a.out.join("accuracy.csv"))?;
    w.write_record(["epoch", "train_accuracy", "test_accuracy"])?;
    for (e, (tr, te)) in r.train_accuracy.iter().zip(&r.test_accuracy).enumerate() {
        w.write_record([e.to_string(), tr.to_string(), te.to_string()])?;
        println!("epoch {e}  train {tr:.4}  test {te:.4}");
    }
    w.flush()?;
    let names: Vec<&str> = FiringClass::ALL.iter().map(|c| c.name()).collect();
    let rows: Vec<Vec<u64>> = r.confusion.iter().map(|row| row.to_vec()).collect();
    write_confusion(&a.out.join("confusion.csv"), &names, &rows)?;
    write_json(&a.out.join("summary.json"), &serde_json::json!({ "task": "rc", "result": r, "config": cfg.rc }))?;
    println!("weakest class: {}", r.weakest_class());
    Ok(check_accuracy(r.final_test_accuracy(), a.min_accuracy))
}
