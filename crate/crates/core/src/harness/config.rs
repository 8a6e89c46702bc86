//! Run configuration files.
//!
//! A TOML file may hold any of the task tables; missing tables and keys take
//! their defaults.
//!
//! ```toml
//! seeds = [0, 1, 2]
//!
//! [scheme]
//! variant = "mixed-precision"
//! lr = 0.001
//!
//! [pattern]
//! epochs = 100
//! grad_clip = 20.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mnist::MnistTaskConfig;
use super::pattern::PatternTaskConfig;
use super::reservoir::RcTaskConfig;
use crate::error::Result;
use crate::update::SchemeConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds for multi-seed runs; empty means the caller's default.
    pub seeds: Vec<u64>,
    /// Overrides the tuned per-scheme settings when present.
    pub scheme: Option<SchemeConfig>,
    pub pattern: Option<PatternTaskConfig>,
    pub mnist: MnistTaskConfig,
    /// Directory holding the MNIST IDX files.
    pub mnist_dir: Option<PathBuf>,
    pub rc: RcTaskConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.scheme {
            s.validate()?;
        }
        if let Some(p) = &self.pattern {
            p.validate()?;
        }
        self.mnist.validate()?;
        self.rc.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::update::SchemeKind;

    #[test]
    fn empty_file_is_all_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_tables() {
        let c = RunConfig::from_toml(
            r#"
            seeds = [3, 4]
            [scheme]
            variant = "multi-memristor"
            n = 8
            [pattern]
            epochs = 12
            [pattern.lif]
            tau_m = 0.03
            [rc.node]
            tau_r = 15.0
            "#,
        )
        .unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        let s = c.scheme.unwrap();
        assert_eq!((s.variant, s.n), (SchemeKind::MultiMemristor, 8));
        let p = c.pattern.unwrap();
        assert_eq!(p.epochs, 12);
        assert_eq!(p.n_rec, 100);
        assert_eq!(p.lif.tau_m, 0.03);
        assert_eq!(c.rc.node.tau_r, 15.0);
        assert_eq!(c.rc.node.kappa, RcTaskConfig::default().node.kappa);
    }

    #[test]
    fn roundtrip_and_rejects_typos() {
        let mut c = RunConfig::default();
        c.pattern = Some(PatternTaskConfig::default());
        c.scheme = Some(SchemeConfig::new(SchemeKind::Stochastic));
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert!(RunConfig::from_toml("sedes = [1]").is_err());
        assert!(RunConfig::from_toml("[scheme]\nvariant = \"adam\"").is_err());
    }
}
