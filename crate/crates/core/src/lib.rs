//! Simulation of memristive synapses and the learning rules that train them.
//!
//! * [`pcm`]: statistical phase-change memory cell with drift and a
//!   quantized ideal mode.
//! * [`crossbar`]: differential arrays of PCM devices with refresh.
//! * [`icc`]: compliance-current programming of RRAM and perovskite devices.
//! * [`snn`] and [`eprop`]: LIF recurrent networks trained with e-prop.
//! * [`update`]: gradient-to-pulse transfer schemes.
//! * [`pcm_trace`]: eligibility traces stored in drifting PCM cells.
//! * [`mosaic`]: small-world tile layouts, hop distances and routing energy.
//! * [`harness`]: the benchmark tasks, datasets and hyperparameter search.

pub mod crossbar;
pub mod eprop;
pub mod error;
pub mod harness;
pub mod icc;
pub mod mosaic;
pub mod pcm;
pub mod pcm_trace;
pub mod rng;
pub mod snn;
pub mod update;

pub use crossbar::{CrossbarArray, Polarity, PulseMask, PulseTelemetry};
pub use error::{Error, Result};
pub use pcm::{DeviceModel, DeviceState, PcmModelParams, PerfModeParams};
pub use rng::{stream, SimRng};
