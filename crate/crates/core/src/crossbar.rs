//! Differential crossbar of PCM devices.
//!
//! Synapse `(i, j)` holds `n` devices per polarity and its weight is
//! `beta * (sum g+ - sum g-)`. Devices are stored flat in
//! `(polarity, n, i, j)` order.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcm::{DeviceModel, DeviceState, PULSE_GRANULARITY};
use crate::rng::{stream, SimRng};

/// Conductance a polarity must exceed (per device, µS) before a refresh.
pub const REFRESH_SATURATION: f64 = 9.0;
/// Differential conductance (per device, µS) below which a refresh is allowed.
pub const REFRESH_MAX_DIFF: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn index(self) -> usize {
        match self {
            Polarity::Pos => 0,
            Polarity::Neg => 1,
        }
    }

    fn from_index(k: usize) -> Option<Self> {
        match k {
            0 => Some(Polarity::Pos),
            1 => Some(Polarity::Neg),
            _ => None,
        }
    }

    /// Polarity whose SET moves the weight in the direction of `sign`.
    pub fn for_sign(sign: f64) -> Self {
        if sign >= 0.0 {
            Polarity::Pos
        } else {
            Polarity::Neg
        }
    }
}

/// Running pulse counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseTelemetry {
    pub sets: u64,
    pub resets: u64,
    pub refreshes: u64,
}

impl PulseTelemetry {
    pub fn writes(&self) -> u64 {
        self.sets + self.resets
    }

    pub fn since(&self, earlier: &PulseTelemetry) -> PulseTelemetry {
        PulseTelemetry {
            sets: self.sets - earlier.sets,
            resets: self.resets - earlier.resets,
            refreshes: self.refreshes - earlier.refreshes,
        }
    }
}

impl std::ops::AddAssign for PulseTelemetry {
    fn add_assign(&mut self, o: Self) {
        self.sets += o.sets;
        self.resets += o.resets;
        self.refreshes += o.refreshes;
    }
}

/// Device selection with shape `2 x n x p x q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulseMask {
    shape: [usize; 4],
    bits: Vec<bool>,
}

impl PulseMask {
    pub fn new(n: usize, p: usize, q: usize) -> Self {
        Self {
            shape: [2, n, p, q],
            bits: vec![false; 2 * n * p * q],
        }
    }

    pub fn full(n: usize, p: usize, q: usize) -> Self {
        Self {
            shape: [2, n, p, q],
            bits: vec![true; 2 * n * p * q],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn set(&mut self, pol: Polarity, k: usize, i: usize, j: usize, on: bool) {
        let [_, n, p, q] = self.shape;
        self.bits[device_index(n, p, q, pol, k, i, j)] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

fn device_index(n: usize, p: usize, q: usize, pol: Polarity, k: usize, i: usize, j: usize) -> usize {
    debug_assert!(k < n && i < p && j < q);
    ((pol.index() * n + k) * p + i) * q + j
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SnapshotRow {
    polarity: usize,
    n: usize,
    i: usize,
    j: usize,
    g: f64,
    t_p: f64,
    count: u32,
    p_mem: f64,
}

#[derive(Debug, Clone)]
pub struct CrossbarArray {
    p: usize,
    q: usize,
    n: usize,
    devices: Vec<DeviceState>,
    model: DeviceModel,
    beta: f64,
    rng: SimRng,
    telemetry: PulseTelemetry,
}

impl CrossbarArray {
    /// Builds an array with every device freshly reset at `t = 0` and
    /// `beta = 1 / (n (g_max - g_min))`. The initial resets are not counted.
    pub fn new(p: usize, q: usize, n: usize, model: DeviceModel, rng: SimRng) -> Result<Self> {
        if p == 0 || q == 0 || n == 0 {
            return Err(Error::config(format!(
                "crossbar dimensions must be positive, got p={p} q={q} n={n}"
            )));
        }
        let beta = 1.0 / (n as f64 * (model.g_max() - model.g_min()));
        let mut xb = Self {
            p,
            q,
            n,
            devices: vec![DeviceState::default(); 2 * n * p * q],
            model,
            beta,
            rng,
            telemetry: PulseTelemetry::default(),
        };
        for d in 0..xb.devices.len() {
            xb.model.reset(&mut xb.devices[d], 0.0, &mut xb.rng);
        }
        Ok(xb)
    }

    pub fn with_seed(p: usize, q: usize, n: usize, model: DeviceModel, seed: u64) -> Result<Self> {
        Self::new(p, q, n, model, stream(seed, "crossbar"))
    }

    pub fn rows(&self) -> usize {
        self.p
    }

    pub fn cols(&self) -> usize {
        self.q
    }

    pub fn devices_per_polarity(&self) -> usize {
        self.n
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn model(&self) -> &DeviceModel {
        &self.model
    }

    pub fn telemetry(&self) -> PulseTelemetry {
        self.telemetry
    }

    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    fn idx(&self, pol: Polarity, k: usize, i: usize, j: usize) -> usize {
        device_index(self.n, self.p, self.q, pol, k, i, j)
    }

    pub fn device(&self, pol: Polarity, k: usize, i: usize, j: usize) -> &DeviceState {
        &self.devices[self.idx(pol, k, i, j)]
    }

    /// Direct state access, bypassing telemetry. Meant for tests and import.
    pub fn device_mut(&mut self, pol: Polarity, k: usize, i: usize, j: usize) -> &mut DeviceState {
        let d = self.idx(pol, k, i, j);
        &mut self.devices[d]
    }

    /// Sum of the stored conductances of one polarity of a synapse.
    pub fn stored_sum(&self, pol: Polarity, i: usize, j: usize) -> f64 {
        (0..self.n).map(|k| self.device(pol, k, i, j).g).sum()
    }

    /// Sum of the SET counters of every device.
    pub fn total_device_count(&self) -> u64 {
        self.devices.iter().map(|d| u64::from(d.count)).sum()
    }

    /// Reads every device at `t_now` and maps to weights. Only the RNG moves.
    pub fn read_weights(&mut self, t_now: f64) -> Array2<f64> {
        let (p, q, n) = (self.p, self.q, self.n);
        let plane = p * q;
        let mut acc = vec![0.0; plane];
        for (d, dev) in self.devices.iter().enumerate() {
            let sign = if d < n * plane { 1.0 } else { -1.0 };
            acc[d % plane] += sign * self.model.read(dev, t_now, &mut self.rng);
        }
        Array2::from_shape_vec((p, q), acc).expect("plane size").mapv(|g| g * self.beta)
    }

    /// Differential conductance of one synapse from noisy reads.
    pub fn read_synapse(&mut self, i: usize, j: usize, t_now: f64) -> (f64, f64) {
        let mut sums = [0.0; 2];
        for pol in [Polarity::Pos, Polarity::Neg] {
            for k in 0..self.n {
                let d = self.idx(pol, k, i, j);
                sums[pol.index()] += self.model.read(&self.devices[d], t_now, &mut self.rng);
            }
        }
        (sums[0], sums[1])
    }

    fn check_mask(&self, mask: &PulseMask) -> Result<()> {
        let want = [2, self.n, self.p, self.q];
        if mask.shape != want {
            return Err(Error::shape(&want, &mask.shape));
        }
        Ok(())
    }

    pub fn set_masked(&mut self, mask: &PulseMask, t_now: f64) -> Result<()> {
        self.check_mask(mask)?;
        for (d, &on) in mask.bits.iter().enumerate() {
            if on {
                self.model.set_pulse(&mut self.devices[d], t_now, &mut self.rng);
                self.telemetry.sets += 1;
            }
        }
        Ok(())
    }

    pub fn reset_masked(&mut self, mask: &PulseMask, t_now: f64) -> Result<()> {
        self.check_mask(mask)?;
        for (d, &on) in mask.bits.iter().enumerate() {
            if on {
                self.model.reset(&mut self.devices[d], t_now, &mut self.rng);
                self.telemetry.resets += 1;
            }
        }
        Ok(())
    }

    /// Device of `pol` that should receive the next pulse: fewest SETs since
    /// reset, lowest index on ties. This deals pulses in a circular queue.
    pub fn next_device(&self, pol: Polarity, i: usize, j: usize) -> usize {
        (0..self.n)
            .min_by_key(|&k| self.device(pol, k, i, j).count)
            .unwrap_or(0)
    }

    /// Pulses that take a fully reset polarity to saturation. Larger requests
    /// are truncated by the update schemes.
    pub fn saturation_pulses(&self) -> u32 {
        let range = self.n as f64 * (self.model.g_max() - self.model.g_min());
        (range / PULSE_GRANULARITY).ceil() as u32
    }

    /// Applies `pulses` SET pulses to one polarity of a synapse.
    pub fn apply_pulses(&mut self, pol: Polarity, i: usize, j: usize, pulses: u32, t_now: f64) {
        for _ in 0..pulses {
            let k = self.next_device(pol, i, j);
            let d = self.idx(pol, k, i, j);
            self.model.set_pulse(&mut self.devices[d], t_now, &mut self.rng);
            self.telemetry.sets += 1;
        }
    }

    /// Resets all `2n` devices of a synapse.
    pub fn reset_synapse(&mut self, i: usize, j: usize, t_now: f64) {
        for pol in [Polarity::Pos, Polarity::Neg] {
            for k in 0..self.n {
                let d = self.idx(pol, k, i, j);
                self.model.reset(&mut self.devices[d], t_now, &mut self.rng);
                self.telemetry.resets += 1;
            }
        }
    }

    /// Whether the refresh criterion holds for a synapse.
    pub fn needs_refresh(&self, i: usize, j: usize) -> bool {
        let n = self.n as f64;
        let gp = self.stored_sum(Polarity::Pos, i, j);
        let gn = self.stored_sum(Polarity::Neg, i, j);
        gp.max(gn) / n > REFRESH_SATURATION && (gp - gn).abs() / n < REFRESH_MAX_DIFF
    }

    /// Resets a saturated synapse and re-programs its differential
    /// conductance onto the larger polarity. Returns whether it fired.
    pub fn refresh(&mut self, i: usize, j: usize, t_now: f64) -> bool {
        if !self.needs_refresh(i, j) {
            return false;
        }
        let gp = self.stored_sum(Polarity::Pos, i, j);
        let gn = self.stored_sum(Polarity::Neg, i, j);
        let pulses = ((gp - gn).abs() / PULSE_GRANULARITY).round() as u32;
        self.reset_synapse(i, j, t_now);
        self.apply_pulses(Polarity::for_sign(gp - gn), i, j, pulses, t_now);
        self.telemetry.refreshes += 1;
        true
    }

    /// Programs a freshly reset synapse towards weight `w` with open-loop
    /// pulses at the 0.75 µS linearization.
    pub fn program_weight(&mut self, i: usize, j: usize, w: f64, t_now: f64) {
        let pulses = (w.abs() / self.beta / PULSE_GRANULARITY).round() as u32;
        self.apply_pulses(Polarity::for_sign(w), i, j, pulses, t_now);
    }

    pub fn write_snapshot<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for pol in [Polarity::Pos, Polarity::Neg] {
            for k in 0..self.n {
                for i in 0..self.p {
                    for j in 0..self.q {
                        let d = self.device(pol, k, i, j);
                        wr.serialize(SnapshotRow {
                            polarity: pol.index(),
                            n: k,
                            i,
                            j,
                            g: d.g,
                            t_p: d.t_p,
                            count: d.count,
                            p_mem: d.p_mem,
                        })?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Loads device states from a snapshot written by [`Self::write_snapshot`].
    /// Every device of the array must appear exactly once.
    pub fn read_snapshot<R: Read>(&mut self, r: R) -> Result<()> {
        let mut seen = vec![false; self.devices.len()];
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: SnapshotRow = row?;
            let pol = Polarity::from_index(row.polarity).ok_or_else(|| Error::Format {
                what: "crossbar snapshot",
                reason: format!("polarity {} is not 0 or 1", row.polarity),
            })?;
            if row.n >= self.n || row.i >= self.p || row.j >= self.q {
                return Err(Error::Format {
                    what: "crossbar snapshot",
                    reason: format!("device ({}, {}, {}) outside the array", row.n, row.i, row.j),
                });
            }
            let d = self.idx(pol, row.n, row.i, row.j);
            seen[d] = true;
            self.devices[d] = DeviceState {
                g: row.g,
                t_p: row.t_p,
                count: row.count,
                p_mem: row.p_mem,
            };
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Format {
                what: "crossbar snapshot",
                reason: format!("device #{missing} missing"),
            });
        }
        Ok(())
    }
}

/// Mean and standard deviation of a programming error, µS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferStats {
    pub mean_error: f64,
    pub std_error: f64,
}

/// Programs `synapses` independent synapses with `n` devices per polarity
/// from normalized differential conductance `g_source` to `g_target` (µS)
/// with open-loop pulses, and measures the error of the achieved normalized
/// conductance `(sum g+ - sum g-) / n` against the target.
pub fn weight_transfer_error(
    model: &DeviceModel,
    n: usize,
    g_source: i32,
    g_target: i32,
    synapses: usize,
    seed: u64,
) -> Result<TransferStats> {
    for (what, v) in [("g_source", g_source), ("g_target", g_target)] {
        if !(-10..=10).contains(&v) {
            return Err(Error::Range {
                what,
                value: f64::from(v),
                lo: -10.0,
                hi: 10.0,
            });
        }
    }
    if synapses == 0 {
        return Err(Error::config("weight transfer needs at least one synapse"));
    }
    let mut xb = CrossbarArray::new(1, synapses, n, model.clone(), stream(seed, "transfer"))?;
    let nf = n as f64;
    let pulses_for = |dg: f64| (nf * dg.abs() / PULSE_GRANULARITY).round() as u32;
    let errors: Vec<f64> = (0..synapses)
        .map(|j| {
            let src = f64::from(g_source);
            xb.apply_pulses(Polarity::for_sign(src), 0, j, pulses_for(src), 0.0);
            let dg = f64::from(g_target - g_source);
            xb.apply_pulses(Polarity::for_sign(dg), 0, j, pulses_for(dg), 0.0);
            let g = (xb.stored_sum(Polarity::Pos, 0, j) - xb.stored_sum(Polarity::Neg, 0, j)) / nf;
            g - f64::from(g_target)
        })
        .collect();
    let m = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / m;
    let var = if errors.len() > 1 {
        errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(TransferStats {
        mean_error: mean,
        std_error: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcm::PcmModelParams;
    use proptest::prelude::*;
    use rand::Rng;

    fn perf(p: usize, q: usize, n: usize) -> CrossbarArray {
        CrossbarArray::with_seed(p, q, n, DeviceModel::perf(4), 0).unwrap()
    }

    fn noiseless(p: usize, q: usize, n: usize) -> CrossbarArray {
        let m = DeviceModel::Stochastic(PcmModelParams::noiseless());
        CrossbarArray::with_seed(p, q, n, m, 0).unwrap()
    }

    #[test]
    fn weight_range_endpoint() {
        let mut xb = perf(1, 1, 1);
        xb.device_mut(Polarity::Pos, 0, 0, 0).g = 12.0;
        assert!((xb.beta() - 1.0 / 11.9).abs() < 1e-15);
        assert!((xb.read_weights(0.0)[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_reads_zero() {
        let mut xb = perf(3, 2, 2);
        for pol in [Polarity::Pos, Polarity::Neg] {
            for k in 0..2 {
                xb.device_mut(pol, k, 1, 1).g = 4.2;
            }
        }
        assert!(xb.read_weights(0.0).iter().all(|&w| w == 0.0));
    }

    #[test]
    fn quarter_weight_with_four_devices() {
        let mut xb = perf(1, 1, 4);
        for k in 0..4 {
            xb.device_mut(Polarity::Pos, k, 0, 0).g = 3.075;
        }
        assert!((xb.beta() - 1.0 / (4.0 * 11.9)).abs() < 1e-15);
        assert!((xb.read_weights(0.0)[[0, 0]] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn doubling_beta_doubles_weights() {
        let mut xb = noiseless(2, 3, 2);
        let mut rng = stream(4, "fill");
        let mut mask = PulseMask::new(2, 2, 3);
        for (d, b) in mask.bits.iter_mut().enumerate() {
            *b = d % 3 != 0 && rng.random::<bool>();
        }
        xb.set_masked(&mask, 0.0).unwrap();
        let w1 = xb.read_weights(1.0);
        xb.set_beta(2.0 * xb.beta());
        let w2 = xb.read_weights(1.0);
        assert_eq!(w2, w1.mapv(|w| 2.0 * w));
    }

    #[test]
    fn masks_and_counters() {
        let mut xb = perf(2, 2, 1);
        let before = xb.devices.clone();
        xb.set_masked(&PulseMask::new(1, 2, 2), 0.0).unwrap();
        assert_eq!(xb.devices, before);

        xb.set_masked(&PulseMask::full(1, 2, 2), 0.0).unwrap();
        assert!(xb.devices.iter().all(|d| d.count == 1));
        assert_eq!(xb.telemetry().sets, 8);
        assert_eq!(xb.device_count(), 8);

        assert!(xb.set_masked(&PulseMask::new(2, 2, 2), 0.0).is_err());
    }

    #[test]
    fn refresh_fires_and_reprograms() {
        let mut xb = perf(1, 1, 1);
        xb.device_mut(Polarity::Pos, 0, 0, 0).g = 9.5;
        xb.device_mut(Polarity::Neg, 0, 0, 0).g = 7.0;
        assert!(xb.refresh(0, 0, 1.0));
        assert_eq!(xb.device(Polarity::Neg, 0, 0, 0).g, 0.1);
        assert!((xb.device(Polarity::Pos, 0, 0, 0).g - 2.35).abs() < 1e-12);
        assert_eq!(xb.device(Polarity::Pos, 0, 0, 0).count, 3);
        assert_eq!(
            xb.telemetry(),
            PulseTelemetry {
                sets: 3,
                resets: 2,
                refreshes: 1
            }
        );
    }

    #[test]
    fn refresh_no_ops() {
        for (gp, gn) in [(9.5, 2.0), (5.0, 4.0)] {
            let mut xb = perf(1, 1, 1);
            xb.device_mut(Polarity::Pos, 0, 0, 0).g = gp;
            xb.device_mut(Polarity::Neg, 0, 0, 0).g = gn;
            assert!(!xb.refresh(0, 0, 1.0));
            assert_eq!(xb.telemetry(), PulseTelemetry::default());
        }
    }

    #[test]
    fn circular_queue_order() {
        let mut xb = perf(1, 1, 4);
        let mut order = Vec::new();
        for _ in 0..6 {
            let k = xb.next_device(Polarity::Neg, 0, 0);
            order.push(k);
            xb.apply_pulses(Polarity::Neg, 0, 0, 1, 0.0);
        }
        assert_eq!(order, [0, 1, 2, 3, 0, 1]);
    }

    #[test]
    fn transfer_perf_mode_is_exact_spread() {
        let s = weight_transfer_error(&DeviceModel::perf(4), 4, -3, 5, 50, 1).unwrap();
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn transfer_without_change_applies_no_pulses() {
        let m = DeviceModel::Stochastic(PcmModelParams::default());
        let s = weight_transfer_error(&m, 1, 0, 0, 200, 2).unwrap();
        assert!(s.mean_error.abs() < 0.01, "{s:?}");
        assert!(weight_transfer_error(&m, 1, 11, 0, 10, 2).is_err());
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut xb = CrossbarArray::with_seed(2, 3, 2, DeviceModel::default(), 5).unwrap();
        xb.apply_pulses(Polarity::Pos, 1, 2, 5, 3.0);
        xb.apply_pulses(Polarity::Neg, 0, 0, 2, 4.0);
        let mut buf = Vec::new();
        xb.write_snapshot(&mut buf).unwrap();
        let mut other = CrossbarArray::with_seed(2, 3, 2, DeviceModel::default(), 6).unwrap();
        other.read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(other.devices, xb.devices);

        let truncated: String = String::from_utf8(buf).unwrap().lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(other.read_snapshot(truncated.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn refresh_preserves_weight_in_perf_mode(
            n in 1usize..5,
            pulses_pos in 0u32..80,
            pulses_neg in 0u32..80,
        ) {
            let mut xb = perf(1, 1, n);
            xb.apply_pulses(Polarity::Pos, 0, 0, pulses_pos, 0.0);
            xb.apply_pulses(Polarity::Neg, 0, 0, pulses_neg, 0.0);
            let before = xb.read_weights(1.0)[[0, 0]];
            xb.refresh(0, 0, 1.0);
            let after = xb.read_weights(1.0)[[0, 0]];
            prop_assert!((before - after).abs() <= xb.beta() * PULSE_GRANULARITY + 1e-12);
        }

        #[test]
        fn telemetry_matches_device_counters(
            ops in proptest::collection::vec((0u8..4, 0usize..2, 0usize..3, 0u32..4), 1..60),
        ) {
            let n = 2;
            let mut xb = CrossbarArray::with_seed(2, 3, n, DeviceModel::default(), 9).unwrap();
            let (mut sets, mut resets) = (0u64, 0u64);
            // SETs received by each synapse since its last reset.
            let mut live = [[0u64; 3]; 2];
            let mut t = 0.0;
            for &(op, i, j, k) in &ops {
                t += 0.5;
                match op {
                    0 | 1 => {
                        let pol = if op == 0 { Polarity::Pos } else { Polarity::Neg };
                        xb.apply_pulses(pol, i, j, k, t);
                        sets += u64::from(k);
                        live[i][j] += u64::from(k);
                    }
                    2 => {
                        let gp = xb.stored_sum(Polarity::Pos, i, j);
                        let gn = xb.stored_sum(Polarity::Neg, i, j);
                        let nf = n as f64;
                        let fires = gp.max(gn) / nf > 9.0 && (gp - gn).abs() / nf < 4.5;
                        xb.refresh(i, j, t);
                        if fires {
                            let k = ((gp - gn).abs() / 0.75).round() as u64;
                            sets += k;
                            resets += 2 * n as u64;
                            live[i][j] = k;
                        }
                    }
                    _ => {
                        xb.reset_synapse(i, j, t);
                        resets += 2 * n as u64;
                        live[i][j] = 0;
                    }
                }
            }
            prop_assert_eq!(xb.telemetry().sets, sets);
            prop_assert_eq!(xb.telemetry().resets, resets);
            prop_assert_eq!(xb.total_device_count(), live.iter().flatten().sum::<u64>());
        }
    }
}
