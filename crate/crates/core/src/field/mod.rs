//! Field models: synthetic thermal and coherent envelopes, photon emission,
//! and the analytic correlation functions they are checked against.

mod emit;
mod sparse;
mod spectrum;
mod stream;
mod synth;

pub use emit::{emit_coherent_stream, emit_photons, emit_thermal_stream};
pub use sparse::{SparseDiagnostics, SparseThermalSampler, DEFAULT_INTENSITY_BOUND};
pub use spectrum::{analytic_g1, analytic_g2, thermal_pn, SpectrumModel, SpectrumShape, ThermalDistribution};
pub use stream::PhotonStream;
pub use synth::{synthesize_coherent_field, synthesize_thermal_field, FieldFilter, FieldTrace, ThermalFieldGenerator};

pub(crate) use emit::poisson_times;
