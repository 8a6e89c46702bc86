//! Statistical phase-change memory cell.
//!
//! A cell is described by its conductance `g` referenced at `t0_ref` seconds
//! after its last programming event, the programming time `t_p`, a SET pulse
//! counter and a programming-history scalar. Two behaviours are available:
//!
//! * [`DeviceModel::Stochastic`]: Gaussian SET increments whose statistics are
//!   tabulated over conductance and programming history, conductance-dependent
//!   read noise and power-law drift `g(t) = g·((t - t_p)/t0)^(-nu)`.
//! * [`DeviceModel::Perf`]: an ideal quantized memory. SET adds exactly
//!   `g_max / 2^cb_res`, READ returns the stored value and RESET is exact.
//!
//! Conductances are in µS, times in seconds.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower conductance bound, equal to the mean of the reset distribution.
pub const G_MIN: f64 = 0.1;
/// Upper conductance bound.
pub const G_MAX: f64 = 12.0;
/// Average conductance step of one SET pulse used by the pulse estimators.
pub const PULSE_GRANULARITY: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Conductance in µS, referenced at `t0_ref` after `t_p`.
    pub g: f64,
    /// Time of the last SET or RESET, s.
    pub t_p: f64,
    /// SET pulses since the last RESET.
    pub count: u32,
    /// Programming history consumed by the write-statistics tables.
    pub p_mem: f64,
}

impl Default for DeviceState {
    fn default() -> Self {
        Self {
            g: G_MIN,
            t_p: 0.0,
            count: 0,
            p_mem: 0.0,
        }
    }
}

/// Piecewise-linear function given by sorted `(breakpoint, value)` pairs,
/// held constant outside the first and last breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub points: Vec<[f64; 2]>,
}

impl Table {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let t = Self { points };
        t.validate()?;
        Ok(t)
    }

    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![[0.0, v]],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::config("interpolation table needs at least one point"));
        }
        if self
            .points
            .iter()
            .any(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::config("interpolation table holds a non-finite value"));
        }
        if self.points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::config(
                "interpolation breakpoints must be strictly increasing",
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if x <= first[0] {
            return first[1];
        }
        if x >= last[0] {
            return last[1];
        }
        // Tables are a handful of points; a linear scan beats a binary search.
        let k = pts.iter().position(|p| p[0] > x).unwrap_or(pts.len() - 1);
        let [x0, y0] = pts[k - 1];
        let [x1, y1] = pts[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    fn min_value(&self) -> f64 {
        self.points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)
    }
}

/// Parameters of the stochastic model, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcmModelParams {
    /// Drift exponent.
    pub nu: f64,
    /// Drift reference time, s.
    pub t0_ref: f64,
    pub g_min: f64,
    pub g_max: f64,
    #[serde(default = "default_reset_mu")]
    pub reset_mu: f64,
    #[serde(default = "default_reset_sigma")]
    pub reset_sigma: f64,
    /// Mean SET increment as a function of the current conductance.
    pub write_mean: Table,
    /// Standard deviation of the SET increment as a function of conductance.
    pub write_std: Table,
    /// Multiplier on both write statistics as a function of `p_mem`.
    #[serde(default = "default_history")]
    pub write_history: Table,
    /// Read-noise standard deviation as a function of the drifted conductance.
    pub read_noise: Table,
}

fn default_reset_mu() -> f64 {
    0.1
}

fn default_reset_sigma() -> f64 {
    0.01
}

fn default_history() -> Table {
    Table::constant(1.0)
}

impl Default for PcmModelParams {
    /// Shipped calibration: roughly 0.75 µS per pulse in mid-range, tapering
    /// towards saturation so that ~18 pulses span 0.1 to 12 µS; write spread
    /// 30 % of the mean; read noise linear in `g` reaching 0.4 µS at 12 µS.
    fn default() -> Self {
        let mean = vec![[0.1, 1.0], [6.0, 0.75], [12.0, 0.35]];
        let std = mean.iter().map(|&[g, m]| [g, 0.3 * m]).collect();
        Self {
            nu: 0.05,
            t0_ref: 25.0,
            g_min: G_MIN,
            g_max: G_MAX,
            reset_mu: default_reset_mu(),
            reset_sigma: default_reset_sigma(),
            write_mean: Table { points: mean },
            write_std: Table { points: std },
            write_history: default_history(),
            read_noise: Table {
                points: vec![[0.0, 0.0], [12.0, 0.4]],
            },
        }
    }
}

impl PcmModelParams {
    /// Default calibration with read noise and write spread switched off.
    pub fn noiseless() -> Self {
        Self {
            write_std: Table::constant(0.0),
            read_noise: Table::constant(0.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in [
            &self.write_mean,
            &self.write_std,
            &self.write_history,
            &self.read_noise,
        ] {
            t.validate()?;
        }
        if self.write_mean.min_value() <= 0.0 || self.write_history.min_value() <= 0.0 {
            return Err(Error::config("write_mean must be strictly positive"));
        }
        if self.write_std.min_value() < 0.0 || self.read_noise.min_value() < 0.0 {
            return Err(Error::config("noise tables must be non-negative"));
        }
        if !(self.nu >= 0.0) {
            return Err(Error::config("nu must be >= 0"));
        }
        if !(self.t0_ref > 0.0) {
            return Err(Error::config("t0_ref must be > 0"));
        }
        if !(self.g_min < self.g_max) {
            return Err(Error::config("g_min must be below g_max"));
        }
        if !(self.reset_sigma >= 0.0) {
            return Err(Error::config("reset_sigma must be >= 0"));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn write_mean_at(&self, p_mem: f64, g: f64) -> f64 {
        self.write_mean.eval(g) * self.write_history.eval(p_mem)
    }

    pub fn write_std_at(&self, p_mem: f64, g: f64) -> f64 {
        self.write_std.eval(g) * self.write_history.eval(p_mem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModeParams {
    /// Bit resolution of one device.
    pub cb_res: u32,
    pub g_max: f64,
}

impl Default for PerfModeParams {
    fn default() -> Self {
        Self {
            cb_res: 4,
            g_max: G_MAX,
        }
    }
}

impl PerfModeParams {
    pub fn increment(&self) -> f64 {
        self.g_max / f64::from(1u32 << self.cb_res)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeviceModel {
    Stochastic(PcmModelParams),
    Perf(PerfModeParams),
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel::Stochastic(PcmModelParams::default())
    }
}

impl DeviceModel {
    pub fn perf(cb_res: u32) -> Self {
        DeviceModel::Perf(PerfModeParams {
            cb_res,
            ..PerfModeParams::default()
        })
    }

    pub fn g_min(&self) -> f64 {
        match self {
            DeviceModel::Stochastic(p) => p.g_min,
            DeviceModel::Perf(_) => G_MIN,
        }
    }

    pub fn g_max(&self) -> f64 {
        match self {
            DeviceModel::Stochastic(p) => p.g_max,
            DeviceModel::Perf(p) => p.g_max,
        }
    }

    fn clip(&self, g: f64) -> f64 {
        g.clamp(self.g_min(), self.g_max())
    }

    /// Conductance obtained from a standard-normal draw `z` during RESET.
    pub fn reset_conductance(&self, z: f64) -> f64 {
        match self {
            DeviceModel::Stochastic(p) => self.clip(p.reset_mu + p.reset_sigma * z),
            DeviceModel::Perf(_) => G_MIN,
        }
    }

    /// RESET: conductance back to the high-resistance distribution, counters
    /// and history cleared.
    pub fn reset<R: Rng + ?Sized>(&self, dev: &mut DeviceState, t_now: f64, rng: &mut R) {
        debug_assert!(t_now >= dev.t_p, "reset before last programming time");
        let z = match self {
            DeviceModel::Stochastic(_) => rng.sample(StandardNormal),
            DeviceModel::Perf(_) => 0.0,
        };
        dev.g = self.reset_conductance(z);
        dev.count = 0;
        dev.p_mem = 0.0;
        dev.t_p = t_now.max(dev.t_p);
    }

    /// Conductance increment of one SET pulse for a standard-normal draw `z`.
    /// Never negative.
    pub fn set_increment(&self, dev: &DeviceState, z: f64) -> f64 {
        match self {
            DeviceModel::Stochastic(p) => {
                let mean = p.write_mean_at(dev.p_mem, dev.g);
                let std = p.write_std_at(dev.p_mem, dev.g);
                (mean + std * z).max(0.0)
            }
            DeviceModel::Perf(p) => p.increment(),
        }
    }

    /// One gradual SET pulse.
    pub fn set_pulse<R: Rng + ?Sized>(&self, dev: &mut DeviceState, t_now: f64, rng: &mut R) {
        debug_assert!(t_now >= dev.t_p, "set before last programming time");
        let z = match self {
            DeviceModel::Stochastic(_) => rng.sample(StandardNormal),
            DeviceModel::Perf(_) => 0.0,
        };
        let dg = self.set_increment(dev, z);
        dev.g = self.clip(dev.g + dg);
        dev.count += 1;
        dev.p_mem += 1.0;
        dev.t_p = t_now.max(dev.t_p);
    }

    /// Drifted conductance without read noise.
    pub fn drifted(&self, dev: &DeviceState, t_now: f64) -> f64 {
        match self {
            DeviceModel::Stochastic(p) => {
                let elapsed = t_now - dev.t_p;
                if p.nu == 0.0 || elapsed < p.t0_ref {
                    dev.g
                } else {
                    dev.g * (elapsed / p.t0_ref).powf(-p.nu)
                }
            }
            DeviceModel::Perf(_) => dev.g,
        }
    }

    /// READ: drifted conductance plus conductance-dependent noise. Does not
    /// touch the device.
    pub fn read<R: Rng + ?Sized>(&self, dev: &DeviceState, t_now: f64, rng: &mut R) -> f64 {
        debug_assert!(t_now >= dev.t_p, "read before last programming time");
        let g = self.drifted(dev, t_now);
        match self {
            DeviceModel::Stochastic(p) => {
                let sigma = p.read_noise.eval(g);
                if sigma > 0.0 {
                    g + sigma * rng.sample::<f64, _>(StandardNormal)
                } else {
                    g
                }
            }
            DeviceModel::Perf(_) => g,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn noiseless_with_nu(nu: f64) -> DeviceModel {
        DeviceModel::Stochastic(PcmModelParams {
            nu,
            ..PcmModelParams::noiseless()
        })
    }

    #[test]
    fn reset_mean_draw_and_clip() {
        let m = DeviceModel::default();
        assert_eq!(m.reset_conductance(0.0), 0.1);
        assert_eq!(m.reset_conductance(-0.5), 0.1);
        let mut d = DeviceState {
            g: 7.0,
            t_p: 1.0,
            count: 5,
            p_mem: 5.0,
        };
        m.reset(&mut d, 2.0, &mut stream(0, "t"));
        assert_eq!(d.count, 0);
        assert_eq!(d.p_mem, 0.0);
        assert_eq!(d.t_p, 2.0);
        assert!((G_MIN..=G_MAX).contains(&d.g));
    }

    #[test]
    fn reset_statistics() {
        // Sampling from N(0.1, 0.01) and clipping at 0.1 folds the lower half
        // onto the floor, so compare against the unclipped draw moments.
        let p = PcmModelParams {
            g_min: 0.0,
            ..PcmModelParams::default()
        };
        let m = DeviceModel::Stochastic(p);
        let mut rng = stream(1, "reset");
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let mut d = DeviceState::default();
                m.reset(&mut d, 0.0, &mut rng);
                d.g
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.1).abs() < 0.001, "mean {mean}");
        assert!((var.sqrt() - 0.01).abs() < 0.001, "std {}", var.sqrt());
    }

    #[test]
    fn perf_mode_set_and_clip() {
        let m = DeviceModel::perf(4);
        let mut rng = stream(0, "p");
        let mut d = DeviceState::default();
        m.set_pulse(&mut d, 0.0, &mut rng);
        assert!((d.g - 0.85).abs() < 1e-15);
        assert_eq!(d.count, 1);
        d.g = 11.8;
        m.set_pulse(&mut d, 0.0, &mut rng);
        assert_eq!(d.g, 12.0);
        assert_eq!(PerfModeParams::default().increment(), 0.75);
    }

    #[test]
    fn perf_mode_read_is_exact() {
        let m = DeviceModel::perf(4);
        let d = DeviceState {
            g: 5.0,
            ..DeviceState::default()
        };
        assert_eq!(m.read(&d, 1e6, &mut stream(0, "r")), 5.0);
    }

    #[test]
    fn twenty_sets_traverse_the_range() {
        let m = DeviceModel::default();
        let mut rng = stream(2, "set");
        let trials = 1000;
        let mut total = 0.0;
        for _ in 0..trials {
            let mut d = DeviceState::default();
            m.reset(&mut d, 0.0, &mut rng);
            for _ in 0..20 {
                m.set_pulse(&mut d, 0.0, &mut rng);
            }
            total += d.g;
        }
        assert!(total / trials as f64 >= 10.0);
    }

    #[test]
    fn drift_power_law_value() {
        let m = noiseless_with_nu(0.05);
        let d = DeviceState {
            g: 10.0,
            ..DeviceState::default()
        };
        let g = m.read(&d, 100.0 * 25.0, &mut stream(0, "d"));
        assert!((g - 10.0 * 100f64.powf(-0.05)).abs() < 1e-12);
        assert!((g - 7.943).abs() < 1e-3);
    }

    #[test]
    fn zero_nu_never_drifts() {
        let m = noiseless_with_nu(0.0);
        let d = DeviceState {
            g: 3.3,
            ..DeviceState::default()
        };
        for t in [0.0, 1.0, 30.0, 1e5] {
            assert_eq!(m.drifted(&d, t), 3.3);
        }
    }

    #[test]
    fn read_after_reset_at_reference_time() {
        let m = noiseless_with_nu(0.05);
        let mut d = DeviceState::default();
        m.reset(&mut d, 3.0, &mut stream(0, "x"));
        assert_eq!(m.read(&d, 3.0 + 25.0, &mut stream(0, "y")), d.g);
    }

    #[test]
    fn table_interpolation() {
        let t = Table::new(vec![[0.0, 0.0], [2.0, 4.0], [4.0, 0.0]]).unwrap();
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(1.0), 2.0);
        assert_eq!(t.eval(3.0), 2.0);
        assert_eq!(t.eval(9.0), 0.0);
        assert!(Table::new(vec![[1.0, 0.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn toml_roundtrip_and_validation() {
        let p = PcmModelParams::default();
        let s = p.to_toml_string().unwrap();
        assert!(s.contains("[write_mean]"));
        assert_eq!(PcmModelParams::from_toml_str(&s).unwrap(), p);

        let bad = s.replace("t0_ref = 25.0", "t0_ref = 0.0");
        assert!(PcmModelParams::from_toml_str(&bad).is_err());
    }

    proptest! {
        #[test]
        fn drift_ratio_is_exact(
            g in 0.1f64..12.0,
            nu in 0.0f64..0.2,
            a in 1.0f64..1e4,
            b in 1.0f64..1e4,
        ) {
            let m = noiseless_with_nu(nu);
            let t_p = 3.0;
            let d = DeviceState { g, t_p, ..DeviceState::default() };
            let t0 = 25.0;
            let (t, t2) = (t_p + t0 * a, t_p + t0 * b);
            let mut rng = stream(0, "p");
            let ratio = m.read(&d, t, &mut rng) / m.read(&d, t2, &mut rng);
            let expected = ((t - t_p) / (t2 - t_p)).powf(-nu);
            prop_assert!((ratio / expected - 1.0).abs() < 1e-12);
        }

        #[test]
        fn drift_is_monotone(g in 0.1f64..12.0, nu in 0.001f64..0.2, dt in 0.0f64..1e3) {
            let m = noiseless_with_nu(nu);
            let d = DeviceState { g, ..DeviceState::default() };
            let t = 10.0 + dt;
            prop_assert!(m.drifted(&d, t + 1.0) <= m.drifted(&d, t));
        }

        #[test]
        fn set_never_decreases(g in 0.1f64..12.0, z in -10.0f64..10.0, perf in any::<bool>()) {
            let m = if perf { DeviceModel::perf(4) } else { DeviceModel::default() };
            let d = DeviceState { g, ..DeviceState::default() };
            prop_assert!(m.set_increment(&d, z) >= 0.0);
            let mut d2 = d;
            m.set_pulse(&mut d2, 0.0, &mut stream(z.to_bits(), "s"));
            prop_assert!(d2.g >= d.g);
            prop_assert!((G_MIN..=G_MAX).contains(&d2.g));
        }

        #[test]
        fn perf_mode_is_deterministic(seed in any::<u64>(), ops in proptest::collection::vec(0u8..3, 1..40)) {
            let m = DeviceModel::perf(4);
            let run = |seed| {
                let mut rng = stream(seed, "det");
                let mut d = DeviceState::default();
                let mut t = 0.0;
                for &op in &ops {
                    t += 1.0;
                    match op {
                        0 => m.set_pulse(&mut d, t, &mut rng),
                        1 => m.reset(&mut d, t, &mut rng),
                        _ => { let _ = m.read(&d, t, &mut rng); }
                    }
                }
                d
            };
            let a = run(seed);
            let b = run(seed);
            prop_assert_eq!(a.g.to_bits(), b.g.to_bits());
            prop_assert_eq!(a, b);
        }
    }
}
