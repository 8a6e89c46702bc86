//! Discrete-time LIF network primitives and spike encoders.
//!
//! Weight matrices are stored presynaptic-major: `w[[i, j]]` connects source
//! `i` to target `j`, so the input current of a step is a sum of rows.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    /// Simulation step, s.
    pub dt: f64,
    /// Membrane time constant, s.
    pub tau_m: f64,
    pub v_th: f64,
    /// Readout time constant, s.
    pub tau_out: f64,
    /// Peak height of the pseudo-derivative times `v_th`.
    pub gamma_pd: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            tau_m: 30e-3,
            v_th: 1.0,
            tau_out: 30e-3,
            gamma_pd: 0.3,
        }
    }
}

impl LifParams {
    pub fn alpha(&self) -> f64 {
        (-self.dt / self.tau_m).exp()
    }

    pub fn kappa(&self) -> f64 {
        (-self.dt / self.tau_out).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.tau_m > 0.0 && self.tau_out > 0.0) {
            return Err(Error::config("dt and time constants must be positive"));
        }
        if !(self.v_th > 0.0) {
            return Err(Error::config("v_th must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl NetworkState {
    pub fn new(n_rec: usize, n_out: usize) -> Self {
        Self {
            v: vec![0.0; n_rec],
            z: vec![0.0; n_rec],
            y: vec![0.0; n_out],
        }
    }
}

fn check_dims(w: &ArrayView2<f64>, rows: usize, cols: usize) -> Result<()> {
    if w.dim() != (rows, cols) {
        return Err(Error::shape(&[rows, cols], &[w.nrows(), w.ncols()]));
    }
    Ok(())
}

/// Emits spikes from the current voltages and advances the membranes one step.
/// `x` holds the input activity of this step. The recurrent diagonal is
/// ignored. On return `state.z` holds the spikes emitted at this step and
/// `state.v` the voltages of the next one.
pub fn lif_step(
    state: &mut NetworkState,
    x: &[f64],
    w_in: ArrayView2<f64>,
    w_rec: ArrayView2<f64>,
    params: &LifParams,
) -> Result<()> {
    let n = state.v.len();
    check_dims(&w_in, x.len(), n)?;
    check_dims(&w_rec, n, n)?;
    let alpha = params.alpha();
    for (z, &v) in state.z.iter_mut().zip(&state.v) {
        *z = if v >= params.v_th { 1.0 } else { 0.0 };
    }
    let mut current = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            for (c, &w) in current.iter_mut().zip(w_in.row(i)) {
                *c += xi * w;
            }
        }
    }
    for (i, &zi) in state.z.iter().enumerate() {
        if zi != 0.0 {
            for (j, (c, &w)) in current.iter_mut().zip(w_rec.row(i)).enumerate() {
                if j != i {
                    *c += zi * w;
                }
            }
        }
    }
    for j in 0..n {
        state.v[j] = alpha * state.v[j] + current[j] - state.z[j] * params.v_th;
    }
    Ok(())
}

/// Leaky readout `y' = kappa * y + w_out^T z`.
pub fn readout_step(y: &mut [f64], z: &[f64], w_out: ArrayView2<f64>, kappa: f64) -> Result<()> {
    check_dims(&w_out, z.len(), y.len())?;
    for yk in y.iter_mut() {
        *yk *= kappa;
    }
    for (j, &zj) in z.iter().enumerate() {
        if zj != 0.0 {
            for (yk, &w) in y.iter_mut().zip(w_out.row(j)) {
                *yk += zj * w;
            }
        }
    }
    Ok(())
}

/// Triangular surrogate derivative of the spike function.
pub fn pseudo_derivative(v: f64, params: &LifParams) -> f64 {
    let vt = params.v_th;
    params.gamma_pd / vt * (1.0 - (v - vt).abs() / vt).max(0.0)
}

/// Independent Bernoulli spikes with probability `rate * dt` per step.
pub fn poisson_encode<R: Rng + ?Sized>(rate: f64, duration: f64, dt: f64, rng: &mut R) -> Result<Vec<bool>> {
    let p = rate * dt;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!(
            "rate * dt = {p} is not a probability (rate {rate} Hz, dt {dt} s)"
        )));
    }
    let steps = (duration / dt).round() as usize;
    Ok((0..steps).map(|_| rng.random::<f64>() < p).collect())
}

/// Delta modulation: returns the step indices of UP and DN events.
pub fn delta_modulate(series: &[f64], threshold: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(threshold > 0.0) {
        return Err(Error::config("delta modulation threshold must be positive"));
    }
    let (mut up, mut dn) = (Vec::new(), Vec::new());
    let Some(&first) = series.first() else {
        return Ok((up, dn));
    };
    let mut reference = first;
    for (t, &s) in series.iter().enumerate().skip(1) {
        if s - reference >= threshold {
            up.push(t);
            reference = s;
        } else if reference - s >= threshold {
            dn.push(t);
            reference = s;
        }
    }
    Ok((up, dn))
}

/// Index of the largest count, lowest index on ties.
pub fn classify_counts<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Sparse spike raster: active source indices per step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Raster {
    pub n: usize,
    pub steps: Vec<Vec<u32>>,
}

impl Raster {
    pub fn new(n: usize, steps: usize) -> Self {
        Self {
            n,
            steps: vec![Vec::new(); steps],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Raster of `n` independent Poisson sources.
    pub fn poisson<R: Rng + ?Sized>(n: usize, rate: f64, steps: usize, dt: f64, rng: &mut R) -> Result<Self> {
        let mut r = Self::new(n, steps);
        for i in 0..n {
            let train = poisson_encode(rate, steps as f64 * dt, dt, rng)?;
            for (t, s) in train.into_iter().enumerate() {
                if s {
                    r.steps[t].push(i as u32);
                }
            }
        }
        Ok(r)
    }

    pub fn counts(&self) -> Vec<u32> {
        let mut c = vec![0; self.n];
        for step in &self.steps {
            for &i in step {
                c[i as usize] += 1;
            }
        }
        c
    }

    /// Writes `t,neuron_id` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "neuron_id"])?;
        for (t, step) in self.steps.iter().enumerate() {
            for &i in step {
                wr.write_record([t.to_string(), i.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Dense zero matrix with the recurrent convention (rows = sources).
pub fn zeros(rows: usize, cols: usize) -> Array2<f64> {
    Array2::zeros((rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn quiescent_network_stays_silent() {
        let p = LifParams::default();
        let mut s = NetworkState::new(3, 1);
        let (w_in, w_rec) = (zeros(2, 3), zeros(3, 3));
        for _ in 0..50 {
            lif_step(&mut s, &[1.0, 1.0], w_in.view(), w_rec.view(), &p).unwrap();
            assert!(s.v.iter().all(|&v| v == 0.0));
            assert!(s.z.iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn spike_and_subtractive_reset() {
        // alpha = 0.9 exactly.
        let p = LifParams {
            tau_m: -1e-3 / 0.9f64.ln(),
            ..LifParams::default()
        };
        assert!((p.alpha() - 0.9).abs() < 1e-15);
        let mut s = NetworkState::new(1, 1);
        s.v[0] = 1.2;
        let w_in = array![[0.5]];
        lif_step(&mut s, &[1.0], w_in.view(), zeros(1, 1).view(), &p).unwrap();
        assert_eq!(s.z[0], 1.0);
        assert!((s.v[0] - 0.58).abs() < 1e-12);

        let v0 = 1.0 - 1e-9;
        s.v[0] = v0;
        lif_step(&mut s, &[1.0], w_in.view(), zeros(1, 1).view(), &p).unwrap();
        assert_eq!(s.z[0], 0.0);
        assert!((s.v[0] - (0.9 * v0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut s = NetworkState::new(3, 1);
        let err = lif_step(&mut s, &[1.0], zeros(2, 3).view(), zeros(3, 3).view(), &LifParams::default());
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn readout_examples() {
        let w = array![[1.0], [3.0]];
        let mut y = vec![2.0];
        readout_step(&mut y, &[0.0, 0.0], w.view(), 1.0).unwrap();
        assert_eq!(y, [2.0]);
        let w1 = array![[1.0]];
        readout_step(&mut y, &[1.0], w1.view(), 0.5).unwrap();
        assert_eq!(y, [2.0]);
        let mut y = vec![0.0];
        readout_step(&mut y, &[0.0, 1.0], w.view(), 0.7).unwrap();
        assert_eq!(y, [3.0]);
    }

    #[test]
    fn pseudo_derivative_shape() {
        let p = LifParams::default();
        assert!((pseudo_derivative(1.0, &p) - 0.3).abs() < 1e-15);
        assert_eq!(pseudo_derivative(0.0, &p), 0.0);
        assert_eq!(pseudo_derivative(2.0, &p), 0.0);
        assert!((pseudo_derivative(0.5, &p) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn poisson_rates() {
        let mut rng = stream(0, "poisson");
        assert!(poisson_encode(0.0, 1.0, 1e-3, &mut rng).unwrap().iter().all(|&s| !s));
        assert!(poisson_encode(2000.0, 1.0, 1e-3, &mut rng).is_err());

        let steps = 100_000;
        let train = poisson_encode(50.0, steps as f64 * 1e-3, 1e-3, &mut rng).unwrap();
        assert_eq!(train.len(), steps);
        let k = train.iter().filter(|&&s| s).count() as f64;
        let rate = k / (steps as f64 * 1e-3);
        assert!((rate - 50.0).abs() < 2.0, "rate {rate}");
        // Chi-square with one degree of freedom over spike / no-spike cells.
        let (e1, e0) = (steps as f64 * 0.05, steps as f64 * 0.95);
        let chi2 = (k - e1).powi(2) / e1 + ((steps as f64 - k) - e0).powi(2) / e0;
        assert!(chi2 < 6.635, "chi2 {chi2}");
    }

    #[test]
    fn delta_modulation_examples() {
        assert_eq!(delta_modulate(&[0.3; 10], 0.1).unwrap(), (vec![], vec![]));
        assert_eq!(delta_modulate(&[0.0, 0.5, 1.0], 0.4).unwrap(), (vec![1, 2], vec![]));
        assert_eq!(delta_modulate(&[], 0.4).unwrap(), (vec![], vec![]));
        assert!(delta_modulate(&[0.0], 0.0).is_err());
    }

    #[test]
    fn raster_csv() {
        let mut r = Raster::new(3, 2);
        r.steps[1] = vec![0, 2];
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,neuron_id\n1,0\n1,2\n");
        assert_eq!(r.counts(), [1, 0, 1]);
    }

    proptest! {
        #[test]
        fn ramp_down_events(k in 1usize..30, step in 0.01f64..0.2) {
            let th = 0.25;
            let series: Vec<f64> = (0..).map(|t| -(t as f64) * step).take_while(|&s| s > -(k as f64) * th - step / 2.0).collect();
            let (up, dn) = delta_modulate(&series, th).unwrap();
            // Brute-force reference tracking.
            let mut r = series[0];
            let mut expected = 0;
            for &s in &series[1..] {
                if r - s >= th { expected += 1; r = s; }
            }
            prop_assert!(up.is_empty());
            prop_assert_eq!(dn.len(), expected);
        }

        #[test]
        fn argmax_is_scale_invariant(counts in proptest::collection::vec(0.0f64..100.0, 1..10), scale in 0.01f64..100.0) {
            let scaled: Vec<f64> = counts.iter().map(|c| c * scale).collect();
            prop_assert_eq!(classify_counts(&counts), classify_counts(&scaled));
        }

        #[test]
        fn pseudo_derivative_support(v in -5.0f64..5.0) {
            let p = LifParams::default();
            let psi = pseudo_derivative(v, &p);
            prop_assert!(psi >= 0.0);
            if !(0.0..=2.0).contains(&v) {
                prop_assert_eq!(psi, 0.0);
            }
        }
    }
}
