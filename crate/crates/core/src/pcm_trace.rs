//! Eligibility traces stored in the drift of PCM cells.
//!
//! A cell is RESET to its high-resistance baseline, then every tag applies a
//! gradual SET that multiplies the present conductance by a fixed gain and
//! restarts the power-law drift. Reading the cell later yields a trace that
//! decays over tens of seconds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, Polarity, PulseTelemetry};
use crate::error::{Error, Result};
use crate::pcm::PULSE_GRANULARITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    /// Baseline conductance after RESET, µS.
    pub g_hrs: f64,
    pub nu: f64,
    /// Drift reference time, s.
    pub t_unit: f64,
    /// Wait after RESET before tags are accepted, s.
    pub t_init: f64,
    pub tag_gain: f64,
    /// Conductance above which the cell is considered stuck, µS.
    pub lrs_ceiling: f64,
}

impl Default for TraceParams {
    fn default() -> Self {
        Self {
            g_hrs: 0.4,
            nu: 0.1,
            t_unit: 1.0,
            t_init: 0.25,
            tag_gain: 1.5,
            lrs_ceiling: 5.0,
        }
    }
}

impl TraceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_hrs > 0.0 && self.g_hrs < self.lrs_ceiling) {
            return Err(Error::config("need 0 < g_hrs < lrs_ceiling"));
        }
        if !(self.nu >= 0.0 && self.t_unit > 0.0 && self.t_init >= 0.0) {
            return Err(Error::config("need nu >= 0, t_unit > 0, t_init >= 0"));
        }
        if !(self.tag_gain > 1.0) {
            return Err(Error::config("tag_gain must exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TagOutcome {
    Accepted,
    /// The cell is still too conductive after its RESET.
    NotReady,
    /// The cell reached the LRS ceiling and was clamped there.
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceCell {
    pub g_p: f64,
    pub t_p: f64,
    /// Earliest time a tag is accepted.
    pub ready_at: f64,
    pub params: TraceParams,
}

impl TraceCell {
    /// A freshly initialized cell.
    pub fn new(params: TraceParams, t_now: f64) -> Self {
        let mut c = Self {
            g_p: params.g_hrs,
            t_p: t_now,
            ready_at: t_now,
            params,
        };
        c.init(t_now);
        c
    }

    pub fn init(&mut self, t_now: f64) {
        self.g_p = self.params.g_hrs;
        self.t_p = t_now;
        self.ready_at = t_now + self.params.t_init;
    }

    pub fn read(&self, t_now: f64) -> f64 {
        debug_assert!(t_now >= self.t_p);
        let dt = t_now - self.t_p;
        if self.params.nu == 0.0 || dt < self.params.t_unit {
            self.g_p
        } else {
            self.g_p * (dt / self.params.t_unit).powf(-self.params.nu)
        }
    }

    pub fn tag(&mut self, t_now: f64) -> TagOutcome {
        if t_now < self.ready_at {
            return TagOutcome::NotReady;
        }
        let g = self.params.tag_gain * self.read(t_now);
        self.t_p = t_now;
        if g > self.params.lrs_ceiling {
            self.g_p = self.params.lrs_ceiling;
            TagOutcome::Saturated
        } else {
            self.g_p = g;
            TagOutcome::Accepted
        }
    }
}

/// Several cells sharing one trace; tags are dealt round-robin.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTrace {
    pub cells: Vec<TraceCell>,
    pub cursor: usize,
}

impl MultiTrace {
    pub fn new(m: usize, params: TraceParams, t_now: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::config("a multi-trace needs at least one cell"));
        }
        Ok(Self {
            cells: vec![TraceCell::new(params, t_now); m],
            cursor: 0,
        })
    }

    pub fn init(&mut self, t_now: f64) {
        for c in &mut self.cells {
            c.init(t_now);
        }
        self.cursor = 0;
    }

    /// Routes a tag to the next cell. Rejected tags do not advance the queue.
    pub fn tag(&mut self, t_now: f64) -> TagOutcome {
        let out = self.cells[self.cursor].tag(t_now);
        if out != TagOutcome::NotReady {
            self.cursor = (self.cursor + 1) % self.cells.len();
        }
        out
    }

    pub fn read(&self, t_now: f64) -> f64 {
        self.cells.iter().map(|c| c.read(t_now)).sum()
    }

    /// Writes `t,cell,g` rows for the given sample times.
    pub fn write_timeline<W: Write>(&self, times: &[f64], w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "cell", "g"])?;
        for &t in times {
            for (k, c) in self.cells.iter().enumerate() {
                wr.write_record([t.to_string(), k.to_string(), c.read(t.max(c.t_p)).to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Normalized membrane drive `1 - (v_th - v_mem) / v_th`.
pub fn membrane_drive(v_mem: f64, v_th: f64) -> f64 {
    1.0 - (v_th - v_mem) / v_th
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeFactorConfig {
    /// Drive above which the potentiation trace is tagged.
    pub i_th_plus: f64,
    /// Drive below which the depression trace is tagged.
    pub i_th_minus: f64,
    /// Conductance change per µS of trace read at reward time.
    pub scale_const: f64,
}

impl Default for ThreeFactorConfig {
    fn default() -> Self {
        Self {
            i_th_plus: 0.8,
            i_th_minus: 0.2,
            scale_const: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSynapse {
    pub e_plus: MultiTrace,
    pub e_minus: MultiTrace,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThreeFactorReport {
    pub tagged_plus: bool,
    pub tagged_minus: bool,
    pub saturated: bool,
    pub pulses: PulseTelemetry,
}

/// One step of three-factor learning for synapse `(i, j)` of `xb`.
/// Presynaptic spikes tag a trace depending on the postsynaptic drive; a
/// reward converts both traces into SET pulses on the weight devices.
#[allow(clippy::too_many_arguments)]
pub fn three_factor_step(
    syn: &mut TraceSynapse,
    xb: &mut CrossbarArray,
    (i, j): (usize, usize),
    pre_spike: bool,
    drive: f64,
    reward: bool,
    cfg: &ThreeFactorConfig,
    t_now: f64,
) -> ThreeFactorReport {
    let mut rep = ThreeFactorReport::default();
    if pre_spike {
        let outcomes = [
            (drive > cfg.i_th_plus).then(|| syn.e_plus.tag(t_now)),
            (drive < cfg.i_th_minus).then(|| syn.e_minus.tag(t_now)),
        ];
        let tagged = outcomes.map(|o| matches!(o, Some(TagOutcome::Accepted | TagOutcome::Saturated)));
        rep.tagged_plus = tagged[0];
        rep.tagged_minus = tagged[1];
        rep.saturated = outcomes.contains(&Some(TagOutcome::Saturated));
    }
    if reward {
        let before = xb.telemetry();
        for (pol, tr) in [(Polarity::Pos, &syn.e_plus), (Polarity::Neg, &syn.e_minus)] {
            let dg = cfg.scale_const * tr.read(t_now);
            let k = (dg / PULSE_GRANULARITY).round() as u32;
            xb.apply_pulses(pol, i, j, k, t_now);
        }
        rep.pulses = xb.telemetry().since(&before);
    }
    rep
}
