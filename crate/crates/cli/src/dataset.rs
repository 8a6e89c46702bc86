use anyhow::Result;
use memristive_core::harness::firing::{generate, FiringClass};
use memristive_core::harness::pattern::sinusoid_target;
use memristive_core::harness::reservoir::{generate_dataset, RcTaskConfig};
use memristive_core::stream;

use crate::output::{csv_writer, load_config};
use crate::{DatasetArgs, DatasetKind, Verdict};

pub fn dataset(a: &DatasetArgs) -> Result<Verdict> {
    let cfg = load_config(a.config.as_deref())?;
    let mut w = csv_writer(&a.out)?;
    match a.kind {
        DatasetKind::Firing => {
            w.write_record(["class", "index", "spike_times_ms"])?;
            for class in FiringClass::ALL {
                for k in 0..a.per_class {
                    // Same stream as the reservoir dataset uses for this pattern.
                    let mut rng = stream(a.seed, &format!("rc-pattern-{class}-{k}"));
                    let t = generate(class, &cfg.rc.firing, &mut rng);
                    let times: Vec<String> = t.iter().map(|x| format!("{x:.3}")).collect();
                    w.write_record([class.name().to_string(), k.to_string(), times.join(" ")])?;
                }
            }
        }
        DatasetKind::Reservoir => {
            let rc = RcTaskConfig {
                patterns_per_class: a.per_class,
                ..cfg.rc.clone()
            };
            let data = generate_dataset(&rc, a.seed)?;
            let mut header = vec!["class".to_string()];
            header.extend((0..rc.n_nodes).map(|i| format!("node{i}")));
            w.write_record(&header)?;
            for (row, &label) in data.features.rows().into_iter().zip(&data.labels) {
                let mut rec = vec![FiringClass::ALL[label].name().to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        DatasetKind::Target => {
            let p = cfg.pattern.clone().unwrap_or_default();
            let dt = p.lif.dt;
            let y = sinusoid_target(p.steps(), dt, &mut stream(a.seed, "target"));
            w.write_record(["t", "target"])?;
            for (k, v) in y.iter().enumerate() {
                w.write_record([(k as f64 * dt).to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(Verdict::Pass)
}
