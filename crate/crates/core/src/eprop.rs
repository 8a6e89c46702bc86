//! e-prop for LIF recurrent networks with a leaky readout.
//!
//! At every step the learning signal `L_j = sum_k B_jk err_k` is combined
//! with the eligibility `psi_j * zbar_i` of each synapse and accumulated into
//! high-precision gradients. Output weights get the exact gradient
//! `err_k * zbar_out_j`.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::{lif_step, pseudo_derivative, readout_step, LifParams, NetworkState, Raster};

/// `zbar' = alpha * zbar + activity`, in place.
pub fn trace_step(z_bar: &mut [f64], activity: &[f64], alpha: f64) {
    for (zb, &a) in z_bar.iter_mut().zip(activity) {
        *zb = alpha * *zb + a;
    }
}

pub fn eligibility(z_bar_i: f64, psi_j: f64) -> f64 {
    psi_j * z_bar_i
}

/// `L = B err` with `B` of shape `n_rec x n_out`.
pub fn learning_signal(err: &[f64], b_out: ArrayView2<f64>, out: &mut [f64]) {
    for (j, l) in out.iter_mut().enumerate() {
        *l = b_out.row(j).iter().zip(err).map(|(b, e)| b * e).sum();
    }
}

/// Per-output mask of errors large enough to learn from.
pub fn stop_learning_gate(errors: &[f64], delta_th: f64) -> Vec<bool> {
    errors.iter().map(|e| e.abs() > delta_th).collect()
}

/// Learning-signal addend pulling each neuron's rate towards `f_target` Hz.
pub fn firing_rate_regularizer(spike_counts: &[u32], duration: f64, f_target: f64, lambda_f: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::config("regularizer duration must be positive"));
    }
    Ok(spike_counts
        .iter()
        .map(|&c| lambda_f * (f64::from(c) / duration - f_target))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeedbackMode {
    /// Fixed Gaussian matrix with variance `1 / n_rec`.
    #[default]
    Random,
    /// Transpose of the current output weights.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMatrix {
    pub mode: FeedbackMode,
    /// `n_rec x n_out`.
    pub b_out: Array2<f64>,
}

impl FeedbackMatrix {
    pub fn random<R: Rng + ?Sized>(n_rec: usize, n_out: usize, rng: &mut R) -> Self {
        let d = Normal::new(0.0, (1.0 / n_rec as f64).sqrt()).expect("finite std");
        Self {
            mode: FeedbackMode::Random,
            b_out: Array2::from_shape_fn((n_rec, n_out), |_| d.sample(rng)),
        }
    }

    pub fn symmetric(w_out: ArrayView2<f64>) -> Self {
        Self {
            mode: FeedbackMode::Symmetric,
            b_out: w_out.to_owned(),
        }
    }

    /// Follows the output weights in symmetric mode; no-op otherwise.
    pub fn refresh(&mut self, w_out: ArrayView2<f64>) {
        if self.mode == FeedbackMode::Symmetric {
            self.b_out.assign(&w_out);
        }
    }
}

/// Traces and gradient accumulators of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityStore {
    pub z_bar_in: Vec<f64>,
    pub z_bar_rec: Vec<f64>,
    pub z_bar_out: Vec<f64>,
    pub grad_in: Array2<f64>,
    pub grad_rec: Array2<f64>,
    pub grad_out: Array2<f64>,
}

impl EligibilityStore {
    pub fn new(n_in: usize, n_rec: usize, n_out: usize) -> Self {
        Self {
            z_bar_in: vec![0.0; n_in],
            z_bar_rec: vec![0.0; n_rec],
            z_bar_out: vec![0.0; n_rec],
            grad_in: Array2::zeros((n_in, n_rec)),
            grad_rec: Array2::zeros((n_rec, n_rec)),
            grad_out: Array2::zeros((n_rec, n_out)),
        }
    }

    /// Clears traces and accumulators at an epoch boundary.
    pub fn reset(&mut self) {
        for v in [&mut self.z_bar_in, &mut self.z_bar_rec, &mut self.z_bar_out] {
            v.fill(0.0);
        }
        self.grad_in.fill(0.0);
        self.grad_rec.fill(0.0);
        self.grad_out.fill(0.0);
    }

    /// Adds one step of gradient. `h_j = L_j psi_j` carries the postsynaptic
    /// factor; the current `z_bar_in`/`z_bar_rec` the presynaptic one.
    /// The recurrent diagonal is never accumulated.
    pub fn accumulate(&mut self, h: &[f64], y_err: &[f64]) {
        if h.iter().any(|&x| x != 0.0) {
            outer_add(&mut self.grad_in, &self.z_bar_in, h, false);
            outer_add(&mut self.grad_rec, &self.z_bar_rec, h, true);
        }
        outer_add(&mut self.grad_out, &self.z_bar_out, y_err, false);
    }

    /// Writes `matrix,i,j,value` rows for every nonzero accumulator entry.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["matrix", "i", "j", "value"])?;
        for (name, g) in [("in", &self.grad_in), ("rec", &self.grad_rec), ("out", &self.grad_out)] {
            for ((i, j), &v) in g.indexed_iter() {
                if v != 0.0 {
                    wr.write_record([name.to_string(), i.to_string(), j.to_string(), v.to_string()])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn outer_add(g: &mut Array2<f64>, pre: &[f64], post: &[f64], zero_diag: bool) {
    let cols = g.ncols();
    let data = g.as_slice_mut().expect("standard layout");
    for (i, &a) in pre.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let row = &mut data[i * cols..(i + 1) * cols];
        for (r, &b) in row.iter_mut().zip(post) {
            *r += a * b;
        }
        if zero_diag {
            row[i] = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpropConfig {
    pub lif: LifParams,
    pub feedback: FeedbackMode,
    /// Target firing rate, Hz.
    pub f_target: f64,
    /// Rate-regularization strength; 0 disables it.
    pub lambda_f: f64,
    /// Stop-learning threshold on the output error; 0 keeps the gate open.
    pub delta_th: f64,
}

impl Default for EpropConfig {
    fn default() -> Self {
        Self {
            lif: LifParams::default(),
            feedback: FeedbackMode::Random,
            f_target: 10.0,
            lambda_f: 0.0,
            delta_th: 0.0,
        }
    }
}

/// Weights of a recurrent network, presynaptic-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w_in: Array2<f64>,
    pub w_rec: Array2<f64>,
    pub w_out: Array2<f64>,
}

impl Weights {
    pub fn zeros(n_in: usize, n_rec: usize, n_out: usize) -> Self {
        Self {
            w_in: Array2::zeros((n_in, n_rec)),
            w_rec: Array2::zeros((n_rec, n_rec)),
            w_out: Array2::zeros((n_rec, n_out)),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w_in.nrows(), self.w_rec.nrows(), self.w_out.ncols())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutput {
    /// Mean over steps and outputs of the squared readout error.
    pub mse: f64,
    /// Readout trace, one row per step.
    pub y: Array2<f64>,
    pub spike_counts: Vec<u32>,
}

/// Simulates one epoch from rest and fills `store` with its gradients.
/// `reg_addend` is added to every step's learning signal (see
/// [`firing_rate_regularizer`]); pass an empty slice to skip it.
pub fn run_epoch(
    weights: &Weights,
    input: &Raster,
    target: ArrayView2<f64>,
    feedback: &FeedbackMatrix,
    cfg: &EpropConfig,
    reg_addend: &[f64],
    store: &mut EligibilityStore,
) -> Result<EpochOutput> {
    let (n_in, n_rec, n_out) = weights.dims();
    let steps = input.len();
    if input.n != n_in {
        return Err(Error::shape(&[n_in], &[input.n]));
    }
    if target.dim() != (steps, n_out) {
        return Err(Error::shape(&[steps, n_out], &[target.nrows(), target.ncols()]));
    }
    if feedback.b_out.dim() != (n_rec, n_out) {
        let (r, c) = feedback.b_out.dim();
        return Err(Error::shape(&[n_rec, n_out], &[r, c]));
    }
    if !reg_addend.is_empty() && reg_addend.len() != n_rec {
        return Err(Error::shape(&[n_rec], &[reg_addend.len()]));
    }
    let lif = &cfg.lif;
    let (alpha, kappa) = (lif.alpha(), lif.kappa());
    store.reset();
    let mut state = NetworkState::new(n_rec, n_out);
    let mut x = vec![0.0; n_in];
    let mut psi = vec![0.0; n_rec];
    let mut err = vec![0.0; n_out];
    let mut l = vec![0.0; n_rec];
    let mut h = vec![0.0; n_rec];
    let mut y_trace = Array2::zeros((steps, n_out));
    let mut counts = vec![0u32; n_rec];
    let mut sq = 0.0;

    for t in 0..steps {
        x.fill(0.0);
        for &i in &input.steps[t] {
            x[i as usize] = 1.0;
        }
        for (p, &v) in psi.iter_mut().zip(&state.v) {
            *p = pseudo_derivative(v, lif);
        }
        lif_step(&mut state, &x, weights.w_in.view(), weights.w_rec.view(), lif)?;
        readout_step(&mut state.y, &state.z, weights.w_out.view(), kappa)?;
        trace_step(&mut store.z_bar_out, &state.z, kappa);
        for k in 0..n_out {
            let e = state.y[k] - target[[t, k]];
            sq += e * e;
            err[k] = if e.abs() > cfg.delta_th { e } else { 0.0 };
            y_trace[[t, k]] = state.y[k];
        }
        learning_signal(&err, feedback.b_out.view(), &mut l);
        for j in 0..n_rec {
            let reg = reg_addend.get(j).copied().unwrap_or(0.0);
            h[j] = (l[j] + reg) * psi[j];
            if state.z[j] != 0.0 {
                counts[j] += 1;
            }
        }
        store.accumulate(&h, &err);
        trace_step(&mut store.z_bar_in, &x, alpha);
        trace_step(&mut store.z_bar_rec, &state.z, alpha);
    }
    let mse = if steps == 0 { 0.0 } else { sq / (steps * n_out) as f64 };
    Ok(EpochOutput {
        mse,
        y: y_trace,
        spike_counts: counts,
    })
}
