//! Transfer of accumulated gradients onto crossbar conductances.
//!
//! Every scheme follows gradient descent: a positive gradient asks for a
//! lower weight, which is obtained by a SET on the negative polarity. All
//! functions return the pulses they caused.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, Polarity, PulseTelemetry};
use crate::error::{Error, Result};
use crate::pcm::PULSE_GRANULARITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    SignGd,
    Stochastic,
    MultiMemristor,
    MixedPrecision,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::SignGd,
        SchemeKind::Stochastic,
        SchemeKind::MultiMemristor,
        SchemeKind::MixedPrecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::SignGd => "sign-gd",
            SchemeKind::Stochastic => "stochastic",
            SchemeKind::MultiMemristor => "multi-memristor",
            SchemeKind::MixedPrecision => "mixed-precision",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown scheme {s:?}; expected one of sign-gd, stochastic, multi-memristor, mixed-precision"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    pub variant: SchemeKind,
    /// SignGD gradient threshold.
    pub theta: f64,
    /// Stochastic scaling factor.
    pub p: f64,
    /// Devices per polarity.
    pub n: usize,
    /// Conductance step assumed per pulse, µS.
    pub granularity: f64,
    /// Learning rate used to turn gradients into conductance changes.
    pub lr: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self::new(SchemeKind::MixedPrecision)
    }
}

impl SchemeConfig {
    pub fn new(variant: SchemeKind) -> Self {
        Self {
            variant,
            theta: 0.0,
            p: 1.0,
            n: 1,
            granularity: PULSE_GRANULARITY,
            lr: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(Error::config("theta must be >= 0"));
        }
        if !(self.p > 0.0) {
            return Err(Error::config("p must be > 0"));
        }
        if !(self.granularity > 0.0) {
            return Err(Error::config("granularity must be > 0"));
        }
        if self.n == 0 {
            return Err(Error::config("n must be >= 1"));
        }
        if !(self.lr >= 0.0) {
            return Err(Error::config("lr must be >= 0"));
        }
        Ok(())
    }
}

fn check_grad(xb: &CrossbarArray, grad: &ArrayView2<f64>) -> Result<()> {
    let want = (xb.rows(), xb.cols());
    if grad.dim() != want {
        return Err(Error::shape(&[want.0, want.1], &[grad.nrows(), grad.ncols()]));
    }
    Ok(())
}

/// Polarity that lowers the loss for gradient `g`.
fn descent(g: f64) -> Polarity {
    if g > 0.0 {
        Polarity::Neg
    } else {
        Polarity::Pos
    }
}

/// One pulse on every synapse whose gradient magnitude exceeds `theta`.
pub fn apply_sign_gd(xb: &mut CrossbarArray, grad: ArrayView2<f64>, cfg: &SchemeConfig, t_now: f64) -> Result<PulseTelemetry> {
    check_grad(xb, &grad)?;
    let before = xb.telemetry();
    for ((i, j), &g) in grad.indexed_iter() {
        if g.abs() > cfg.theta {
            xb.apply_pulses(descent(g), i, j, 1, t_now);
        }
    }
    Ok(xb.telemetry().since(&before))
}

/// Probability that the stochastic scheme updates a synapse.
pub fn stochastic_probability(g: f64, p: f64) -> f64 {
    (g.abs() / p).min(1.0)
}

/// One pulse with probability `min(1, |g| / p)`, preceded by a refresh check
/// on each synapse about to be updated.
pub fn apply_stochastic<R: Rng + ?Sized>(
    xb: &mut CrossbarArray,
    grad: ArrayView2<f64>,
    cfg: &SchemeConfig,
    rng: &mut R,
    t_now: f64,
) -> Result<PulseTelemetry> {
    check_grad(xb, &grad)?;
    let before = xb.telemetry();
    for ((i, j), &g) in grad.indexed_iter() {
        if g != 0.0 && rng.random::<f64>() < stochastic_probability(g, cfg.p) {
            xb.refresh(i, j, t_now);
            xb.apply_pulses(descent(g), i, j, 1, t_now);
        }
    }
    Ok(xb.telemetry().since(&before))
}

/// Number of pulses approximating a conductance change, round to nearest.
pub fn pulses_for(dg: f64, granularity: f64) -> u32 {
    (dg.abs() / granularity).round() as u32
}

/// Open-loop multi-pulse update: `round(|lr g| / beta / granularity)` pulses,
/// truncated at [`CrossbarArray::saturation_pulses`].
pub fn apply_multi_memristor(xb: &mut CrossbarArray, grad: ArrayView2<f64>, cfg: &SchemeConfig, t_now: f64) -> Result<PulseTelemetry> {
    check_grad(xb, &grad)?;
    let before = xb.telemetry();
    let beta = xb.beta();
    let cap = xb.saturation_pulses();
    for ((i, j), &g) in grad.indexed_iter() {
        let k = pulses_for(cfg.lr * g / beta, cfg.granularity).min(cap);
        if k > 0 {
            xb.refresh(i, j, t_now);
            xb.apply_pulses(descent(g), i, j, k, t_now);
        }
    }
    Ok(xb.telemetry().since(&before))
}

/// High-precision residuals of the mixed-precision scheme, µS.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionAccumulator {
    pub acc: Array2<f64>,
}

impl PrecisionAccumulator {
    pub fn new(p: usize, q: usize) -> Self {
        Self {
            acc: Array2::zeros((p, q)),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.acc.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Adds `-lr g / beta` to the residuals and flushes whole granularity steps.
/// Flushes beyond [`CrossbarArray::saturation_pulses`] are truncated; the
/// residual keeps only the sub-granularity remainder either way.
pub fn apply_mixed_precision(
    xb: &mut CrossbarArray,
    accumulator: &mut PrecisionAccumulator,
    grad: ArrayView2<f64>,
    cfg: &SchemeConfig,
    t_now: f64,
) -> Result<PulseTelemetry> {
    check_grad(xb, &grad)?;
    if accumulator.acc.dim() != grad.dim() {
        let (r, c) = accumulator.acc.dim();
        return Err(Error::shape(&[grad.nrows(), grad.ncols()], &[r, c]));
    }
    let before = xb.telemetry();
    let beta = xb.beta();
    let cap = xb.saturation_pulses();
    for ((i, j), &g) in grad.indexed_iter() {
        let a = &mut accumulator.acc[[i, j]];
        *a -= cfg.lr * g / beta;
        let k = (a.abs() / cfg.granularity).floor();
        if k >= 1.0 {
            let sign = a.signum();
            *a -= sign * k * cfg.granularity;
            xb.refresh(i, j, t_now);
            xb.apply_pulses(Polarity::for_sign(sign), i, j, (k as u32).min(cap), t_now);
        }
    }
    Ok(xb.telemetry().since(&before))
}

/// Applies a differential conductance change `target_dg` (µS, summed over
/// the devices of a polarity) to one synapse. When the polarity that should
/// grow lacks headroom, both polarities are reset and the new differential
/// value is programmed from scratch.
pub fn update_ready_transfer(xb: &mut CrossbarArray, i: usize, j: usize, target_dg: f64, t_now: f64) -> PulseTelemetry {
    let before = xb.telemetry();
    if target_dg == 0.0 {
        return PulseTelemetry::default();
    }
    let (gp, gn) = xb.read_synapse(i, j, t_now);
    let n = xb.devices_per_polarity() as f64;
    let (g_min, g_max) = (xb.model().g_min(), xb.model().g_max());
    let pol = Polarity::for_sign(target_dg);
    let current = if pol == Polarity::Pos { gp } else { gn };
    if current + target_dg.abs() <= n * g_max {
        xb.apply_pulses(pol, i, j, pulses_for(target_dg, PULSE_GRANULARITY), t_now);
    } else {
        let goal = gp - gn + target_dg;
        xb.reset_synapse(i, j, t_now);
        let dg = (goal.abs() - n * g_min).max(0.0);
        xb.apply_pulses(Polarity::for_sign(goal), i, j, pulses_for(dg, PULSE_GRANULARITY), t_now);
    }
    xb.telemetry().since(&before)
}

/// A scheme together with the state it carries between epochs.
#[derive(Debug, Clone)]
pub struct Updater {
    pub cfg: SchemeConfig,
    pub accumulator: Option<PrecisionAccumulator>,
}

impl Updater {
    pub fn new(cfg: SchemeConfig, p: usize, q: usize) -> Result<Self> {
        cfg.validate()?;
        let accumulator = (cfg.variant == SchemeKind::MixedPrecision).then(|| PrecisionAccumulator::new(p, q));
        Ok(Self { cfg, accumulator })
    }

    pub fn apply<R: Rng + ?Sized>(
        &mut self,
        xb: &mut CrossbarArray,
        grad: ArrayView2<f64>,
        rng: &mut R,
        t_now: f64,
    ) -> Result<PulseTelemetry> {
        match self.cfg.variant {
            SchemeKind::SignGd => apply_sign_gd(xb, grad, &self.cfg, t_now),
            SchemeKind::Stochastic => apply_stochastic(xb, grad, &self.cfg, rng, t_now),
            SchemeKind::MultiMemristor => apply_multi_memristor(xb, grad, &self.cfg, t_now),
            SchemeKind::MixedPrecision => {
                let acc = self.accumulator.as_mut().expect("created with the scheme");
                apply_mixed_precision(xb, acc, grad, &self.cfg, t_now)
            }
        }
    }
}

/// Pulses issued during one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochTelemetry {
    pub epoch: usize,
    pub sets: u64,
    pub resets: u64,
    pub refreshes: u64,
    pub per_layer: BTreeMap<String, PulseTelemetry>,
}

impl EpochTelemetry {
    pub fn new(epoch: usize) -> Self {
        Self {
            epoch,
            ..Self::default()
        }
    }

    pub fn record(&mut self, layer: &str, t: PulseTelemetry) {
        self.sets += t.sets;
        self.resets += t.resets;
        self.refreshes += t.refreshes;
        *self.per_layer.entry(layer.to_string()).or_default() += t;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
