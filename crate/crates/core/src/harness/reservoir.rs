//! Firing-pattern classification with a single volatile device sampled as
//! virtual reservoir nodes and a sigmoid readout trained either in floating
//! point or through compliance-current programming of differential pairs.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::firing::{generate, FiringClass, FiringParams};
use crate::error::{Error, Result};
use crate::icc::{delta_rule_step, ClipRange, DeltaOutcome, DeltaRuleConfig, LinearIccModel};
use crate::rng::stream;

pub const N_CLASSES: usize = 4;

/// Phenomenological diffusive node: `s <- s·exp(-dt/tau_r) + u`, where the
/// drive `u = kappa·V·dt·(1 - s/s_max)` is present only while a pulse is on.
/// Times in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolatileNodeParams {
    pub tau_r: f64,
    /// Drive rate per ms per volt.
    pub kappa: f64,
    pub s_max: f64,
    pub amplitude: f64,
    pub pulse_width: f64,
    pub dt: f64,
    /// Physical devices the patterns are spread over.
    pub n_devices: usize,
    /// Relative device-to-device spread of `tau_r` and `kappa`.
    pub device_sigma: f64,
    /// Relative cycle-to-cycle spread of each pulse's drive.
    pub cycle_sigma: f64,
    /// Additive read noise, in state units.
    pub read_sigma: f64,
}

impl Default for VolatileNodeParams {
    fn default() -> Self {
        Self {
            tau_r: 10.0,
            kappa: 0.08,
            s_max: 1.0,
            amplitude: 1.0,
            pulse_width: 25.0,
            dt: 0.5,
            n_devices: 25,
            device_sigma: 0.2,
            cycle_sigma: 0.3,
            read_sigma: 0.1,
        }
    }
}

impl VolatileNodeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_r > 0.0 && self.dt > 0.0 && self.s_max > 0.0 && self.pulse_width > 0.0) {
            return Err(Error::config("tau_r, dt, s_max and pulse_width must be > 0"));
        }
        if self.n_devices == 0 {
            return Err(Error::config("n_devices must be >= 1"));
        }
        if self.device_sigma < 0.0 || self.cycle_sigma < 0.0 || self.read_sigma < 0.0 {
            return Err(Error::config("noise scales must be >= 0"));
        }
        Ok(())
    }
}

/// One physical device: its own relaxation time and drive rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatileNode {
    pub tau_r: f64,
    pub kappa: f64,
}

impl VolatileNode {
    pub fn nominal(p: &VolatileNodeParams) -> Self {
        Self {
            tau_r: p.tau_r,
            kappa: p.kappa,
        }
    }

    pub fn draw<R: Rng + ?Sized>(p: &VolatileNodeParams, rng: &mut R) -> Self {
        let mut f = || (1.0 + p.device_sigma * rng.sample::<f64, _>(StandardNormal)).max(0.2);
        Self {
            tau_r: p.tau_r * f(),
            kappa: p.kappa * f(),
        }
    }

    /// State trace of the device driven by pulses starting at `spikes` (ms),
    /// read at `sample_times` (ms).
    pub fn respond<R: Rng + ?Sized>(
        &self,
        spikes: &[f64],
        sample_times: &[f64],
        p: &VolatileNodeParams,
        rng: &mut R,
    ) -> Vec<f64> {
        let gains: Vec<f64> = spikes
            .iter()
            .map(|_| (1.0 + p.cycle_sigma * rng.sample::<f64, _>(StandardNormal)).max(0.0))
            .collect();
        let decay = (-p.dt / self.tau_r).exp();
        let mut s = 0.0;
        let mut t = 0.0;
        let mut out = Vec::with_capacity(sample_times.len());
        let mut first = 0;
        for &ts in sample_times {
            while t + 0.5 * p.dt < ts {
                while first < spikes.len() && spikes[first] + p.pulse_width <= t {
                    first += 1;
                }
                // Overlapping pulses merge; the strongest active one drives.
                let drive = spikes[first..]
                    .iter()
                    .zip(&gains[first..])
                    .take_while(|(&sp, _)| sp <= t)
                    .map(|(_, &g)| g)
                    .fold(0.0, f64::max);
                let u = self.kappa * p.amplitude * drive * p.dt * (1.0 - s / p.s_max).max(0.0);
                s = s * decay + u;
                t += p.dt;
            }
            out.push(s + p.read_sigma * rng.sample::<f64, _>(StandardNormal));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Float,
    Icc,
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMode::Float => "float",
            TrainingMode::Icc => "icc",
        })
    }
}

impl FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(TrainingMode::Float),
            "icc" => Ok(TrainingMode::Icc),
            _ => Err(Error::config(format!("unknown training mode {s:?} (float or icc)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RcTaskConfig {
    pub patterns_per_class: usize,
    pub firing: FiringParams,
    pub node: VolatileNodeParams,
    pub n_nodes: usize,
    /// Virtual-node sampling interval, ms.
    pub sample_interval: f64,
    pub train_fraction: f64,
    pub epochs: usize,
    /// Adam step size for the floating-point readout.
    pub float_lr: f64,
    /// Learning rate of the conductance update `dG = eta·x·delta/beta`.
    pub icc_eta: f64,
    /// Updates with `|x·delta|` at or below this are skipped.
    pub icc_delta_th: f64,
    pub device: LinearIccModel,
    /// Initial conductance distribution, S.
    pub init_g_mean: f64,
    pub init_g_std: f64,
}

impl Default for RcTaskConfig {
    fn default() -> Self {
        Self {
            patterns_per_class: 1000,
            firing: FiringParams::default(),
            node: VolatileNodeParams::default(),
            n_nodes: 30,
            sample_interval: 35.0,
            train_fraction: 0.9,
            epochs: 5,
            float_lr: 0.01,
            icc_eta: 0.05,
            icc_delta_th: 0.1,
            device: LinearIccModel::default(),
            init_g_mean: 0.5e-3,
            init_g_std: 0.1e-3,
        }
    }
}

impl RcTaskConfig {
    pub fn validate(&self) -> Result<()> {
        self.node.validate()?;
        if self.patterns_per_class == 0 || self.n_nodes == 0 || self.epochs == 0 {
            return Err(Error::config("patterns_per_class, n_nodes and epochs must be >= 1"));
        }
        if !(self.sample_interval > 0.0) {
            return Err(Error::config("sample_interval must be > 0"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        if !(self.float_lr > 0.0 && self.icc_eta > 0.0) {
            return Err(Error::config("learning rates must be > 0"));
        }
        let ClipRange { lo, hi } = self.device.clip;
        if !(lo < hi) {
            return Err(Error::config("device clip range is empty"));
        }
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.n_nodes).map(|k| k as f64 * self.sample_interval).collect()
    }

    /// Weight per unit conductance difference.
    pub fn beta(&self) -> f64 {
        1.0 / (self.device.clip.hi - self.device.clip.lo)
    }
}

/// Virtual-node states, one row per pattern, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RcDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl RcDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> RcDataset {
        RcDataset {
            features: self.features.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Generates patterns for every class and drives them through the devices.
/// Pattern `k` of each class is played on device `k % n_devices`.
pub fn generate_dataset(cfg: &RcTaskConfig, seed: u64) -> Result<RcDataset> {
    cfg.validate()?;
    let mut dev_rng = stream(seed, "rc-devices");
    let devices: Vec<VolatileNode> = (0..cfg.node.n_devices)
        .map(|_| VolatileNode::draw(&cfg.node, &mut dev_rng))
        .collect();
    let times = cfg.sample_times();
    let jobs: Vec<(FiringClass, usize)> = FiringClass::ALL
        .into_iter()
        .flat_map(|c| (0..cfg.patterns_per_class).map(move |k| (c, k)))
        .collect();
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(class, k)| {
            let mut rng = stream(seed, &format!("rc-pattern-{class}-{k}"));
            let spikes = generate(class, &cfg.firing, &mut rng);
            devices[k % devices.len()].respond(&spikes, &times, &cfg.node, &mut rng)
        })
        .collect();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(RcDataset {
        features: Array2::from_shape_vec((jobs.len(), cfg.n_nodes), flat).map_err(|e| Error::Format {
            what: "reservoir features",
            reason: e.to_string(),
        })?,
        labels: jobs.iter().map(|(c, _)| c.index()).collect(),
    })
}

/// Shuffled train/test split.
pub fn split(data: &RcDataset, train_fraction: f64, seed: u64) -> (RcDataset, RcDataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut stream(seed, "rc-split"));
    let n_train = ((data.len() as f64) * train_fraction).round() as usize;
    (data.subset(&idx[..n_train]), data.subset(&idx[n_train..]))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn with_bias(x: ArrayView1<f64>) -> Array1<f64> {
    let mut v = Array1::ones(x.len() + 1);
    v.slice_mut(ndarray::s![..x.len()]).assign(&x);
    v
}

fn one_hot(label: usize) -> Array1<f64> {
    Array1::from_shape_fn(N_CLASSES, |j| if j == label { 1.0 } else { 0.0 })
}

fn argmax(y: &Array1<f64>) -> usize {
    y.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// A readout of sigmoid units over the virtual nodes plus a bias input.
pub trait Readout {
    fn weights(&self) -> Array2<f64>;

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights().dot(&with_bias(x)).mapv(sigmoid)
    }

    fn train_step<R: Rng + ?Sized>(&mut self, x: ArrayView1<f64>, label: usize, rng: &mut R);
}

/// Floating-point weights trained on the squared error with Adam.
#[derive(Debug, Clone)]
pub struct FloatReadout {
    pub w: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
    step: i32,
    lr: f64,
}

impl FloatReadout {
    pub fn new(n_inputs: usize, lr: f64) -> Self {
        let shape = (N_CLASSES, n_inputs + 1);
        Self {
            w: Array2::zeros(shape),
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            step: 0,
            lr,
        }
    }
}

impl Readout for FloatReadout {
    fn weights(&self) -> Array2<f64> {
        self.w.clone()
    }

    fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&with_bias(x)).mapv(sigmoid)
    }

    fn train_step<R: Rng + ?Sized>(&mut self, x: ArrayView1<f64>, label: usize, _rng: &mut R) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let xb = with_bias(x);
        let y = self.w.dot(&xb).mapv(sigmoid);
        let err = (&y - &one_hot(label)) * &y.mapv(|v| v * (1.0 - v));
        let g = err.insert_axis(ndarray::Axis(1)).dot(&xb.insert_axis(ndarray::Axis(0)));
        self.step += 1;
        self.m.zip_mut_with(&g, |m, &g| *m = B1 * *m + (1.0 - B1) * g);
        self.v.zip_mut_with(&g, |v, &g| *v = B2 * *v + (1.0 - B2) * g * g);
        let c1 = 1.0 - B1.powi(self.step);
        let c2 = 1.0 - B2.powi(self.step);
        let lr = self.lr;
        ndarray::Zip::from(&mut self.w)
            .and(&self.m)
            .and(&self.v)
            .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + EPS));
    }
}

/// Differential conductance pairs, `W = beta·(G+ - G-)`, reprogrammed through
/// the linear compliance-current model after every pattern.
#[derive(Debug, Clone)]
pub struct IccReadout {
    pub g_pos: Array2<f64>,
    pub g_neg: Array2<f64>,
    pub beta: f64,
    pub device: LinearIccModel,
    rule: DeltaRuleConfig,
    /// Device reprogramming events (one per device).
    pub programmings: u64,
    /// Targets that had to be clipped into the readout range.
    pub clipped: u64,
}

impl IccReadout {
    pub fn new<R: Rng + ?Sized>(n_inputs: usize, cfg: &RcTaskConfig, rng: &mut R) -> Self {
        let clip = cfg.device.clip;
        let init = Normal::new(cfg.init_g_mean, cfg.init_g_std).expect("finite std");
        let shape = (N_CLASSES, n_inputs + 1);
        let mut draw = || Array2::from_shape_simple_fn(shape, || clip.clamp(init.sample(rng)));
        let g_pos = draw();
        let g_neg = draw();
        let beta = cfg.beta();
        Self {
            g_pos,
            g_neg,
            beta,
            device: cfg.device.clone(),
            rule: DeltaRuleConfig {
                eta: cfg.icc_eta / beta,
                delta_th: cfg.icc_delta_th,
                c1: 1.0,
                c2: 1.0,
                icc_min: clip.lo,
                icc_max: clip.hi,
            },
            programmings: 0,
            clipped: 0,
        }
    }

    fn program<R: Rng + ?Sized>(&self, target: f64, rng: &mut R) -> f64 {
        let icc = self.device.target_icc(target).expect("target clipped into range");
        self.device.clip.clamp(self.device.sample(icc, rng))
    }
}

impl Readout for IccReadout {
    fn weights(&self) -> Array2<f64> {
        (&self.g_pos - &self.g_neg) * self.beta
    }

    fn train_step<R: Rng + ?Sized>(&mut self, x: ArrayView1<f64>, label: usize, rng: &mut R) {
        let xb = with_bias(x);
        let y = self.forward(x);
        let delta = one_hot(label) - &y;
        for j in 0..N_CLASSES {
            for i in 0..xb.len() {
                if let DeltaOutcome::Program { icc1, icc2, clipped } =
                    delta_rule_step(self.g_pos[[j, i]], self.g_neg[[j, i]], xb[i] * delta[j], &self.rule)
                {
                    self.g_pos[[j, i]] = self.program(icc1, rng);
                    self.g_neg[[j, i]] = self.program(icc2, rng);
                    self.programmings += 2;
                    self.clipped += u64::from(clipped);
                }
            }
        }
    }
}

/// Test-set confusion counts: `confusion[true][predicted]`.
pub type Confusion = [[u64; N_CLASSES]; N_CLASSES];

pub fn evaluate<M: Readout + ?Sized>(model: &M, data: &RcDataset) -> (f64, Confusion) {
    let w = model.weights();
    let mut conf = [[0u64; N_CLASSES]; N_CLASSES];
    for (row, &label) in data.features.rows().into_iter().zip(&data.labels) {
        let pred = argmax(&w.dot(&with_bias(row)));
        conf[label][pred] += 1;
    }
    let correct: u64 = (0..N_CLASSES).map(|c| conf[c][c]).sum();
    (correct as f64 / data.len().max(1) as f64, conf)
}

/// Fraction of each class's patterns classified correctly.
pub fn class_recall(conf: &Confusion) -> [f64; N_CLASSES] {
    std::array::from_fn(|c| {
        let total: u64 = conf[c].iter().sum();
        conf[c][c] as f64 / total.max(1) as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcResult {
    pub mode: TrainingMode,
    pub seed: u64,
    /// Index 0 is before training, then one entry per epoch.
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub confusion: Confusion,
    pub programmings: u64,
    pub final_weights: Vec<Vec<f64>>,
}

impl RcResult {
    pub fn final_test_accuracy(&self) -> f64 {
        *self.test_accuracy.last().expect("at least the initial evaluation")
    }

    pub fn weakest_class(&self) -> FiringClass {
        let r = class_recall(&self.confusion);
        let k = (0..N_CLASSES).fold(0, |b, c| if r[c] < r[b] { c } else { b });
        FiringClass::ALL[k]
    }
}

fn train<M: Readout>(model: &mut M, train: &RcDataset, test: &RcDataset, epochs: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Confusion) {
    let mut order_rng = stream(seed, "rc-order");
    let mut prog_rng = stream(seed, "rc-program");
    let mut tr = vec![evaluate(model, train).0];
    let (te0, mut conf) = evaluate(model, test);
    let mut te = vec![te0];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut order_rng);
        for &k in &order {
            model.train_step(train.features.row(k), train.labels[k], &mut prog_rng);
        }
        tr.push(evaluate(model, train).0);
        let (acc, c) = evaluate(model, test);
        te.push(acc);
        conf = c;
    }
    (tr, te, conf)
}

pub fn run_rc_task_on(cfg: &RcTaskConfig, mode: TrainingMode, data: &RcDataset, seed: u64) -> Result<RcResult> {
    cfg.validate()?;
    if data.features.ncols() != cfg.n_nodes {
        return Err(Error::shape(&[data.len(), cfg.n_nodes], data.features.shape()));
    }
    let (train_set, test_set) = split(data, cfg.train_fraction, seed);
    let n = cfg.n_nodes;
    let (train_accuracy, test_accuracy, confusion, programmings, w) = match mode {
        TrainingMode::Float => {
            let mut m = FloatReadout::new(n, cfg.float_lr);
            let (a, b, c) = train(&mut m, &train_set, &test_set, cfg.epochs, seed);
            (a, b, c, 0, m.weights())
        }
        TrainingMode::Icc => {
            let mut m = IccReadout::new(n, cfg, &mut stream(seed, "rc-init"));
            let (a, b, c) = train(&mut m, &train_set, &test_set, cfg.epochs, seed);
            (a, b, c, m.programmings, m.weights())
        }
    };
    Ok(RcResult {
        mode,
        seed,
        train_accuracy,
        test_accuracy,
        confusion,
        programmings,
        final_weights: w.rows().into_iter().map(|r| r.to_vec()).collect(),
    })
}

/// Generates the dataset for `seed` and trains the readout on it.
pub fn run_rc_task(cfg: &RcTaskConfig, mode: TrainingMode, seed: u64) -> Result<RcResult> {
    let data = generate_dataset(cfg, seed)?;
    run_rc_task_on(cfg, mode, &data, seed)
}
