//! Synthetic neural firing patterns: bursting, adapting, tonic and irregular
//! spike trains of fixed length.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of every pattern, ms.
pub const PATTERN_MS: f64 = 1050.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiringClass {
    Bursting,
    Adapting,
    Tonic,
    Irregular,
}

impl FiringClass {
    pub const ALL: [FiringClass; 4] = [
        FiringClass::Bursting,
        FiringClass::Adapting,
        FiringClass::Tonic,
        FiringClass::Irregular,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FiringClass::Bursting => "bursting",
            FiringClass::Adapting => "adapting",
            FiringClass::Tonic => "tonic",
            FiringClass::Irregular => "irregular",
        }
    }
}

impl fmt::Display for FiringClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FiringClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FiringClass::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown firing class {s:?}")))
    }
}

/// Generator parameters. Times in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FiringParams {
    pub length: f64,
    pub burst_groups: (usize, usize),
    pub spikes_per_burst: usize,
    pub burst_isi: f64,
    pub burst_gap: (f64, f64),
    pub adapt_first_isi: f64,
    pub adapt_growth: f64,
    /// Relative std of the growth factor.
    pub adapt_jitter: f64,
    pub tonic_isi: f64,
    /// Relative std of each tonic interval.
    pub tonic_jitter: f64,
    pub irregular_segment: f64,
    pub irregular_p: f64,
}

impl Default for FiringParams {
    fn default() -> Self {
        Self {
            length: PATTERN_MS,
            burst_groups: (4, 5),
            spikes_per_burst: 4,
            burst_isi: 5.0,
            burst_gap: (75.0, 125.0),
            adapt_first_isi: 5.0,
            adapt_growth: 1.5,
            adapt_jitter: 0.05,
            tonic_isi: 70.0,
            tonic_jitter: 0.05,
            irregular_segment: 60.0,
            irregular_p: 0.5,
        }
    }
}

/// Spike onset times in ms, sorted, all in `[0, length)`.
pub fn generate<R: Rng + ?Sized>(class: FiringClass, params: &FiringParams, rng: &mut R) -> Vec<f64> {
    let p = params;
    let mut out = Vec::new();
    match class {
        FiringClass::Bursting => {
            let groups = rng.random_range(p.burst_groups.0..=p.burst_groups.1);
            let mut t = 0.0;
            for g in 0..groups {
                if g > 0 {
                    t += rng.random_range(p.burst_gap.0..=p.burst_gap.1);
                }
                for s in 0..p.spikes_per_burst {
                    if s > 0 {
                        t += p.burst_isi;
                    }
                    out.push(t);
                }
            }
        }
        FiringClass::Adapting => {
            let growth = Normal::new(p.adapt_growth, p.adapt_growth * p.adapt_jitter).expect("finite std");
            let mut t = 0.0;
            let mut isi = p.adapt_first_isi;
            while t < p.length {
                out.push(t);
                t += isi;
                isi *= growth.sample(rng).max(1.0);
            }
        }
        FiringClass::Tonic => {
            let isi = Normal::new(p.tonic_isi, p.tonic_isi * p.tonic_jitter).expect("finite std");
            let mut t = 0.0;
            while t < p.length {
                out.push(t);
                t += isi.sample(rng).max(1.0);
            }
        }
        FiringClass::Irregular => {
            let mut t = 0.0;
            while t < p.length {
                if rng.random_bool(p.irregular_p) {
                    out.push(t);
                }
                t += p.irregular_segment;
            }
        }
    }
    out.retain(|&t| t < p.length);
    out
}
