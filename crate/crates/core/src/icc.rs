//! Compliance-current (I_CC) programming.
//!
//! Two device families are modelled. Filamentary RRAM follows a power law
//! `G = A * I^m` through two measured endpoints, with a cycle-to-cycle spread
//! proportional to the mean. Perovskite cells follow an affine map with an
//! affine spread. The dual-memristor Delta rule turns read currents and an
//! output error into a pair of compliance currents.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcm::Table;

/// Smallest conductance (µS) a power-law draw may return.
pub const POWERLAW_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawIccModel {
    /// µA.
    pub i_min: f64,
    /// µA.
    pub i_max: f64,
    /// Median conductance at `i_min`, µS.
    pub g_at_min: f64,
    /// Median conductance at `i_max`, µS.
    pub g_at_max: f64,
    /// Relative standard deviation as a function of I_CC in µA.
    pub sigma_frac: Table,
}

impl Default for PowerLawIccModel {
    fn default() -> Self {
        Self {
            i_min: 10.0,
            i_max: 400.0,
            g_at_min: 20.0,
            g_at_max: 500.0,
            sigma_frac: Table::constant(0.3),
        }
    }
}

impl PowerLawIccModel {
    pub fn exponent(&self) -> f64 {
        (self.g_at_max / self.g_at_min).ln() / (self.i_max / self.i_min).ln()
    }

    pub fn prefactor(&self) -> f64 {
        self.g_at_min / self.i_min.powf(self.exponent())
    }

    fn check(&self, i_cc: f64) -> Result<()> {
        // Relative slack so endpoints computed in floating point stay valid.
        let eps = 1e-9 * self.i_max;
        if !(i_cc >= self.i_min - eps && i_cc <= self.i_max + eps) {
            return Err(Error::Range {
                what: "compliance current (uA)",
                value: i_cc,
                lo: self.i_min,
                hi: self.i_max,
            });
        }
        Ok(())
    }

    /// Median conductance in µS for a compliance current in µA.
    pub fn mean(&self, i_cc: f64) -> Result<f64> {
        self.check(i_cc)?;
        Ok(self.mean_unchecked(i_cc))
    }

    fn mean_unchecked(&self, i_cc: f64) -> f64 {
        // Interpolating in log space keeps both endpoints exact.
        let m = self.exponent();
        self.g_at_min * (i_cc / self.i_min).powf(m)
    }

    /// Current in µA whose median conductance is `g` µS, clipped to the
    /// measured current range.
    pub fn inverse(&self, g: f64) -> f64 {
        let i = self.i_min * (g.max(POWERLAW_FLOOR) / self.g_at_min).powf(1.0 / self.exponent());
        i.clamp(self.i_min, self.i_max)
    }

    /// One cycle-to-cycle conductance draw for a standard-normal `z`.
    pub fn sample_with(&self, i_cc: f64, z: f64) -> Result<f64> {
        let mean = self.mean(i_cc)?;
        let sigma = self.sigma_frac.eval(i_cc) * mean;
        Ok((mean + sigma * z).max(POWERLAW_FLOOR))
    }

    pub fn sample<R: Rng + ?Sized>(&self, i_cc: f64, rng: &mut R) -> Result<f64> {
        self.sample_with(i_cc, rng.sample(StandardNormal))
    }
}

/// Allowed readout conductance range of the perovskite weights, in S.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRange {
    pub lo: f64,
    pub hi: f64,
}

impl ClipRange {
    /// 0.1 to 0.35 mS, the range used for the weight scaling factor.
    pub const READOUT: ClipRange = ClipRange {
        lo: 0.1e-3,
        hi: 0.35e-3,
    };
    /// 0.1 to 3.5 mS, the target clip quoted with the training procedure.
    pub const WIDE: ClipRange = ClipRange {
        lo: 0.1e-3,
        hi: 3.5e-3,
    };

    pub fn clamp(&self, g: f64) -> f64 {
        g.clamp(self.lo, self.hi)
    }
}

/// Affine perovskite relation between compliance current (A) and conductance (S).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearIccModel {
    /// S/A.
    pub mu_slope: f64,
    /// S.
    pub mu_intercept: f64,
    /// Raw coefficient: µS per mA.
    pub sigma_slope: f64,
    /// Raw coefficient: µS.
    pub sigma_intercept: f64,
    /// S, used by the target-to-current map.
    pub inverse_intercept: f64,
    pub clip: ClipRange,
}

impl Default for LinearIccModel {
    fn default() -> Self {
        Self {
            mu_slope: 3.338,
            mu_intercept: -1.294e-5,
            sigma_slope: 7.040,
            sigma_intercept: 3.0585,
            inverse_intercept: 1.249e-5,
            clip: ClipRange::READOUT,
        }
    }
}

impl LinearIccModel {
    /// Mean conductance in S for a compliance current in A.
    pub fn mean(&self, i_cc: f64) -> f64 {
        self.mu_slope * i_cc + self.mu_intercept
    }

    /// Conductance spread in S. The printed coefficients are read as µS per
    /// mA and µS respectively.
    pub fn sigma(&self, i_cc: f64) -> f64 {
        (self.sigma_slope * i_cc * 1e3 + self.sigma_intercept) * 1e-6
    }

    /// Compliance current (A) mapped from a target conductance (S).
    pub fn target_icc(&self, g_target: f64) -> Result<f64> {
        let ClipRange { lo, hi } = self.clip;
        let eps = 1e-12;
        if !(g_target >= lo - eps && g_target <= hi + eps) {
            return Err(Error::Range {
                what: "target conductance (S)",
                value: g_target,
                lo,
                hi,
            });
        }
        Ok((g_target + self.inverse_intercept) / self.mu_slope)
    }

    /// Fixed gap between the forward mean of the mapped current and the target.
    pub fn roundtrip_offset(&self) -> f64 {
        self.inverse_intercept + self.mu_intercept
    }

    pub fn sample_with(&self, i_cc: f64, z: f64) -> f64 {
        self.mean(i_cc) + self.sigma(i_cc) * z
    }

    pub fn sample<R: Rng + ?Sized>(&self, i_cc: f64, rng: &mut R) -> f64 {
        self.sample_with(i_cc, rng.sample(StandardNormal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaRuleConfig {
    pub eta: f64,
    pub delta_th: f64,
    pub c1: f64,
    pub c2: f64,
    /// Programmable compliance-current range, in the units of `c2`'s output.
    pub icc_min: f64,
    pub icc_max: f64,
}

impl Default for DeltaRuleConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            delta_th: 0.0,
            c1: 1.0,
            c2: 1.0,
            icc_min: 10.0,
            icc_max: 400.0,
        }
    }
}

impl DeltaRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::config("eta must be > 0"));
        }
        if !(self.delta_th >= 0.0) {
            return Err(Error::config("delta_th must be >= 0"));
        }
        if !(self.icc_min < self.icc_max) {
            return Err(Error::config("icc_min must be below icc_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaOutcome {
    NoUpdate,
    Program {
        icc1: f64,
        icc2: f64,
        /// Whether either current had to be clipped into range.
        clipped: bool,
    },
}

/// Push-pull dual-memristor Delta rule. `w1`, `w2` are the read currents of
/// the two devices and `delta` the signed output error.
pub fn delta_rule_step(w1: f64, w2: f64, delta: f64, cfg: &DeltaRuleConfig) -> DeltaOutcome {
    if delta.abs() <= cfg.delta_th {
        return DeltaOutcome::NoUpdate;
    }
    let step = cfg.eta * delta;
    let s1 = cfg.c1 * w1 + step;
    let s2 = cfg.c1 * w2 - step;
    let raw = [s1 * cfg.c2, s2 * cfg.c2];
    let [icc1, icc2] = raw.map(|x| x.clamp(cfg.icc_min, cfg.icc_max));
    DeltaOutcome::Program {
        icc1,
        icc2,
        clipped: icc1 != raw[0] || icc2 != raw[1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn powerlaw_endpoints_and_midpoint() {
        let m = PowerLawIccModel::default();
        assert!((m.mean(10.0).unwrap() / 20.0 - 1.0).abs() < 1e-12);
        assert!((m.mean(400.0).unwrap() / 500.0 - 1.0).abs() < 1e-12);
        assert!((m.exponent() - 25f64.ln() / 40f64.ln()).abs() < 1e-15);
        assert!((m.exponent() - 0.87255).abs() < 1e-4);
        let geo = (10.0f64 * 400.0).sqrt();
        assert!((m.mean(geo).unwrap() - 100.0).abs() < 1e-9);
        assert!((m.prefactor() * 100f64.powf(m.exponent()) - m.mean(100.0).unwrap()).abs() < 1e-9);
        assert!(m.mean(5.0).is_err());
        assert!(m.mean(401.0).is_err());
    }

    #[test]
    fn powerlaw_sampling() {
        let exact = PowerLawIccModel {
            sigma_frac: Table::constant(0.0),
            ..PowerLawIccModel::default()
        };
        assert_eq!(exact.sample(100.0, &mut stream(0, "s")).unwrap(), exact.mean(100.0).unwrap());

        let m = PowerLawIccModel::default();
        assert_eq!(m.sample_with(100.0, -10.0).unwrap(), POWERLAW_FLOOR);

        let mut rng = stream(1, "mc");
        let n = 10_000;
        let mean = (0..n).map(|_| m.sample(100.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        let want = m.mean(100.0).unwrap();
        assert!((mean / want - 1.0).abs() < 0.01, "{mean} vs {want}");
    }

    #[test]
    fn powerlaw_inverse() {
        let m = PowerLawIccModel::default();
        for i in [10.0, 37.0, 250.0, 400.0] {
            assert!((m.inverse(m.mean(i).unwrap()) - i).abs() < 1e-9);
        }
        assert_eq!(m.inverse(1.0), 10.0);
    }

    #[test]
    fn linear_target_current() {
        let wide = LinearIccModel {
            clip: ClipRange::WIDE,
            ..LinearIccModel::default()
        };
        assert!((wide.target_icc(1e-3).unwrap() - 3.0333e-4).abs() < 1e-8);
        let m = LinearIccModel::default();
        assert!((m.target_icc(0.1e-3).unwrap() - 3.370e-5).abs() < 1e-8);
        assert!(m.target_icc(1e-3).is_err());
        assert!(m.target_icc(0.05e-3).is_err());
    }

    #[test]
    fn linear_roundtrip_offset_is_constant() {
        let m = LinearIccModel::default();
        // Oracle: the slope cancels, leaving the difference of the intercepts.
        let oracle = 1.249e-5 - 1.294e-5;
        assert!((m.roundtrip_offset() - oracle).abs() < 1e-18);
        for g in [0.1e-3, 0.2e-3, 0.35e-3] {
            let back = m.mean(m.target_icc(g).unwrap());
            assert!((back - g - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_sigma_units() {
        let m = LinearIccModel::default();
        // 0.1 mA -> 7.04 * 0.1 + 3.0585 µS.
        assert!((m.sigma(1e-4) - 3.7625e-6).abs() < 1e-15);
    }

    fn unit_cfg() -> DeltaRuleConfig {
        DeltaRuleConfig {
            eta: 1.0,
            delta_th: 0.01,
            c1: 1.0,
            c2: 1.0,
            icc_min: 0.0,
            icc_max: 1.0,
        }
    }

    #[test]
    fn delta_rule_examples() {
        let cfg = unit_cfg();
        assert_eq!(delta_rule_step(0.2, 0.4, 0.0, &cfg), DeltaOutcome::NoUpdate);
        let DeltaOutcome::Program { icc1, icc2, clipped } = delta_rule_step(0.2, 0.4, 0.1, &cfg)
        else {
            panic!("expected an update")
        };
        assert!((icc1 - 0.3).abs() < 1e-15 && (icc2 - 0.3).abs() < 1e-15 && !clipped);
        let DeltaOutcome::Program { icc1, icc2, .. } = delta_rule_step(0.2, 0.4, -0.1, &cfg) else {
            panic!("expected an update")
        };
        assert!((icc1 - 0.1).abs() < 1e-15 && (icc2 - 0.5).abs() < 1e-15);
        let DeltaOutcome::Program { icc1, clipped, .. } = delta_rule_step(0.95, 0.4, 0.1, &cfg)
        else {
            panic!("expected an update")
        };
        assert_eq!(icc1, 1.0);
        assert!(clipped);
    }

    proptest! {
        #[test]
        fn push_pull_antisymmetry(w in 0.0f64..0.5, d in 0.011f64..0.4) {
            let cfg = unit_cfg();
            let (DeltaOutcome::Program { icc1: a1, icc2: a2, .. }, DeltaOutcome::Program { icc1: b1, icc2: b2, .. }) =
                (delta_rule_step(w, w, d, &cfg), delta_rule_step(w, w, -d, &cfg))
            else {
                panic!("above threshold");
            };
            prop_assert_eq!(a1, b2);
            prop_assert_eq!(a2, b1);
        }

        #[test]
        fn stop_learning_is_identity(w1 in 0.0f64..1.0, w2 in 0.0f64..1.0, d in -0.01f64..=0.01) {
            prop_assert_eq!(delta_rule_step(w1, w2, d, &unit_cfg()), DeltaOutcome::NoUpdate);
        }

        #[test]
        fn maps_are_increasing(a in 10.0f64..399.0, da in 0.01f64..1.0) {
            let m = PowerLawIccModel::default();
            prop_assert!(m.mean(a + da).unwrap() > m.mean(a).unwrap());
            let l = LinearIccModel::default();
            prop_assert!(l.mean((a + da) * 1e-6) > l.mean(a * 1e-6));
        }
    }
}
