//! Simulation laboratory for Hanbury Brown–Twiss measurements on one arm of a
//! continuously pumped down-conversion source.
//!
//! The crate follows the experiment from end to end:
//!
//! * [`field`] synthesizes chaotic (thermal) and coherent field envelopes and
//!   turns them into photon arrival times, alongside the analytic
//!   `g1`/`g2`/`P_n` references;
//! * [`optics`] splits, delays and attenuates photon streams, provides the
//!   tightly correlated pair source used to calibrate detector jitter, and
//!   simulates a Michelson scan;
//! * [`detection`] applies efficiency, dark counts, jitter, dead time and
//!   time-tagger quantization, and reads/writes the binary tag format;
//! * [`correlator`] builds signed-delay coincidence histograms and turns them
//!   into normalized `g2` estimates;
//! * [`bunching`] predicts the jitter-smeared bunching peak from two measured
//!   areas (squared coherence envelope and jitter curve);
//! * [`multiphoton`] evaluates the Fock expansion of the two-mode squeezed
//!   state and the exact polarization statistics of four-photon states.
//!
//! [`pipeline`] wires everything together from an [`config::ExperimentConfig`].

// `!(x > 0.0)` rejects NaN together with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bunching;
pub mod config;
pub mod correlator;
pub mod detection;
mod error;
pub mod field;
pub mod multiphoton;
pub mod optics;
pub mod pipeline;
pub mod rng;
pub mod selftest;
pub mod units;

pub use error::{Error, Result};

pub use bunching::{EnvelopeCurve, JitterCurve, PredictedPeak};
pub use correlator::{CorrelationHistogram, G2Estimate, PeakReport};
pub use detection::{DetectorConfig, JitterModel, TagRecord, TagStream};
pub use field::{FieldTrace, PhotonStream, SpectrumModel, SpectrumShape, ThermalDistribution};
pub use optics::{Interferogram, ScanConfig};
