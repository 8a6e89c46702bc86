//! Seeded random hyperparameter search.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
    #[serde(default)]
    pub integer: bool,
}

impl ParamRange {
    pub fn uniform(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            scale: Scale::Uniform,
            integer: false,
        }
    }

    pub fn log_uniform(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            scale: Scale::LogUniform,
            ..Self::uniform(name, lo, hi)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::config(format!("bad range for {}", self.name)));
        }
        if self.scale == Scale::LogUniform && !(self.lo > 0.0) {
            return Err(Error::config(format!("log-uniform range for {} must be positive", self.name)));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let x = match self.scale {
            Scale::Uniform => self.lo + u * (self.hi - self.lo),
            Scale::LogUniform => (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp(),
        };
        if self.integer {
            x.round().clamp(self.lo, self.hi)
        } else {
            x
        }
    }
}

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamRange>,
    /// Points evaluated before the random draws.
    #[serde(default)]
    pub include: Vec<Params>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    /// Objective value; failed trials score infinity.
    pub loss: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

impl SearchSpace {
    /// The candidate list of a search: included points, then random draws.
    pub fn candidates(&self, n_trials: usize, seed: u64) -> Result<Vec<Params>> {
        for p in &self.params {
            p.validate()?;
        }
        let mut rng = stream(seed, "search");
        let mut out: Vec<Params> = self.include.iter().take(n_trials).cloned().collect();
        while out.len() < n_trials {
            out.push(self.params.iter().map(|p| (p.name.clone(), p.sample(&mut rng))).collect());
        }
        Ok(out)
    }
}

/// Evaluates `n_trials` candidates in parallel and returns the one with the
/// lowest loss (earliest on ties) with the full trial log.
pub fn random_search<F>(space: &SearchSpace, n_trials: usize, seed: u64, objective: F) -> Result<SearchResult>
where
    F: Fn(&Params) -> Result<f64> + Sync,
{
    if n_trials == 0 {
        return Err(Error::config("random search needs at least one trial"));
    }
    let trials: Vec<Trial> = space
        .candidates(n_trials, seed)?
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let (loss, error) = match objective(&params) {
                Ok(l) if l.is_nan() => (f64::INFINITY, Some("objective returned NaN".to_string())),
                Ok(l) => (l, None),
                Err(e) => (f64::INFINITY, Some(e.to_string())),
            };
            Trial {
                index,
                params,
                loss,
                error,
            }
        })
        .collect();
    let best = trials
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.index.cmp(&b.index)))
        .cloned()
        .expect("at least one trial");
    Ok(SearchResult { best, trials })
}

impl SearchResult {
    /// Writes one row per trial: index, loss, error, then every parameter.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let names: Vec<String> = self
            .trials
            .iter()
            .flat_map(|t| t.params.keys().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["index".to_string(), "loss".to_string(), "error".to_string()];
        header.extend(names.iter().cloned());
        wr.write_record(&header)?;
        for t in &self.trials {
            let mut row = vec![t.index.to_string(), t.loss.to_string(), t.error.clone().unwrap_or_default()];
            row.extend(names.iter().map(|n| t.params.get(n).map(|v| v.to_string()).unwrap_or_default()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace {
            params: vec![ParamRange::uniform("x", -2.0, 2.0), ParamRange::log_uniform("lr", 1e-5, 1e-1)],
            include: Vec::new(),
        }
    }

    fn bowl(p: &Params) -> Result<f64> {
        Ok((p["x"] - 0.5).powi(2) + p["lr"])
    }

    #[test]
    fn single_trial() {
        let r = random_search(&space(), 1, 0, bowl).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0]);
    }

    #[test]
    fn deterministic_sequence() {
        let a = random_search(&space(), 8, 5, bowl).unwrap();
        let b = random_search(&space(), 8, 5, bowl).unwrap();
        assert_eq!(a, b);
        let c = random_search(&space(), 8, 6, bowl).unwrap();
        assert_ne!(a.trials[0].params, c.trials[0].params);
    }

    #[test]
    fn samples_respect_ranges() {
        let cands = space().candidates(500, 1).unwrap();
        for c in &cands {
            assert!((-2.0..=2.0).contains(&c["x"]));
            assert!((1e-5..=1e-1).contains(&c["lr"]));
        }
        let below = cands.iter().filter(|c| c["lr"] < 1e-3).count();
        // Log-uniform: half the mass lies below the geometric midpoint.
        assert!((200..300).contains(&below), "{below}");
    }

    #[test]
    fn included_point_dominates() {
        let mut s = space();
        let good = Params::from([("x".to_string(), 0.5), ("lr".to_string(), 1e-5)]);
        s.include.push(good.clone());
        let r = random_search(&s, 20, 2, bowl).unwrap();
        assert_eq!(r.trials[0].params, good);
        assert!(r.best.loss <= bowl(&good).unwrap());
    }

    #[test]
    fn failures_are_logged() {
        let r = random_search(&space(), 4, 3, |p| {
            if p["x"] > 0.0 {
                Err(Error::Diverged { epoch: 1 })
            } else {
                Ok(p["x"])
            }
        })
        .unwrap();
        for t in &r.trials {
            assert_eq!(t.error.is_some(), t.params["x"] > 0.0);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,loss,error,lr,x"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn bad_ranges_rejected() {
        let s = SearchSpace {
            params: vec![ParamRange::log_uniform("lr", 0.0, 1.0)],
            include: Vec::new(),
        };
        assert!(random_search(&s, 2, 0, |_| Ok(0.0)).is_err());
        assert!(random_search(&space(), 0, 0, bowl).is_err());
    }
}
