use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::Exp1;

use super::synth::{check_sampling, field_seed, sample_count, FieldFilter, ThermalFieldGenerator};
use super::{FieldTrace, PhotonStream, SpectrumModel};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::units::{fs_to_s, ps_to_fs, FS_PER_S};
use crate::{Error, Result};

const MAX_OCCUPANCY: f64 = 0.1;

/// Inhomogeneous Poisson emission over a piecewise-constant intensity.
///
/// Uses the time-change construction: unit-rate exponential "mass" is spent
/// against the integrated intensity, so an event lands wherever the
/// accumulated mass `r·|E|²·dt` crosses the next exponential draw.
pub(crate) struct Emitter {
    rng: Rng,
    rate_per_sample: f64,
    dt_fs: i64,
    need: f64,
    next_index: i64,
    last: i64,
}

impl Emitter {
    pub(crate) fn new(mean_rate: f64, dt_fs: i64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let need = rng.sample(Exp1);
        Emitter { rng, rate_per_sample: mean_rate * fs_to_s(dt_fs), dt_fs, need, next_index: 0, last: i64::MIN }
    }

    pub(crate) fn push_block(&mut self, samples: &[Complex64], out: &mut Vec<i64>) {
        for e in samples {
            let lam = self.rate_per_sample * e.norm_sqr();
            let t0 = self.next_index * self.dt_fs;
            self.next_index += 1;
            if self.need > lam {
                self.need -= lam;
                continue;
            }
            let mut used = 0.0;
            loop {
                used += self.need;
                let mut t = t0 + ((used / lam) * self.dt_fs as f64) as i64;
                if t <= self.last {
                    t = self.last + 1;
                }
                self.last = t;
                out.push(t);
                self.need = self.rng.sample(Exp1);
                if self.need > lam - used {
                    self.need -= lam - used;
                    break;
                }
            }
        }
    }
}

fn check_rate(mean_rate: f64, dt_fs: i64) -> Result<()> {
    if !(mean_rate >= 0.0 && mean_rate.is_finite()) {
        return Err(Error::param("mean_rate", "must be finite and >= 0"));
    }
    let occupancy = mean_rate * fs_to_s(dt_fs);
    if occupancy >= MAX_OCCUPANCY {
        return Err(Error::EmissionRateTooHigh(occupancy));
    }
    Ok(())
}

pub(crate) fn emit_seed(seed: u64) -> u64 {
    derive_seed(seed, "emit", 0)
}

/// Photon arrivals for a field trace: a Poisson process with instantaneous
/// rate `mean_rate·|E(t)|²`. Requires `mean_rate·dt < 0.1`.
pub fn emit_photons(trace: &FieldTrace, mean_rate: f64, seed: u64) -> Result<PhotonStream> {
    check_rate(mean_rate, trace.dt_fs)?;
    let mut out = Vec::with_capacity((mean_rate * fs_to_s(trace.duration_fs()) * 1.1) as usize);
    Emitter::new(mean_rate, trace.dt_fs, emit_seed(seed)).push_block(&trace.samples, &mut out);
    Ok(PhotonStream::from_parts_unchecked(out, trace.duration_fs()))
}

/// Thermal photon stream without materializing the field.
///
/// Bit-identical to `emit_photons(&synthesize_thermal_field(spectrum,
/// duration, dt, seed)?, mean_rate, seed)` but with constant memory in the
/// field length. The 100·τc minimum duration of the materialized trace does
/// not apply.
pub fn emit_thermal_stream(
    spectrum: &SpectrumModel,
    duration_ps: f64,
    dt_ps: f64,
    mean_rate: f64,
    seed: u64,
) -> Result<PhotonStream> {
    let dt_fs = check_sampling(spectrum, dt_ps)?;
    check_rate(mean_rate, dt_fs)?;
    if !(duration_ps >= 0.0) {
        return Err(Error::param("duration", "must be >= 0"));
    }
    let n = sample_count(duration_ps, dt_fs);
    let filter = FieldFilter::for_spectrum(spectrum, dt_fs);
    let mut gen = ThermalFieldGenerator::new(&filter, field_seed(seed));
    let mut emitter = Emitter::new(mean_rate, dt_fs, emit_seed(seed));
    let mut block = vec![Complex64::new(0.0, 0.0); 1 << 16];
    let mut out = Vec::with_capacity((mean_rate * fs_to_s(n as i64 * dt_fs) * 1.1) as usize);
    let mut left = n;
    while left > 0 {
        let take = left.min(block.len());
        gen.fill(&mut block[..take]);
        emitter.push_block(&block[..take], &mut out);
        left -= take;
    }
    Ok(PhotonStream::from_parts_unchecked(out, n as i64 * dt_fs))
}

/// Homogeneous Poisson stream (constant-intensity field).
pub fn emit_coherent_stream(duration_ps: f64, mean_rate: f64, seed: u64) -> Result<PhotonStream> {
    if !(mean_rate >= 0.0 && mean_rate.is_finite()) {
        return Err(Error::param("mean_rate", "must be finite and >= 0"));
    }
    let duration_fs = ps_to_fs(duration_ps);
    if duration_fs < 0 {
        return Err(Error::param("duration", "must be >= 0"));
    }
    Ok(poisson_times(duration_fs, mean_rate, &mut rng_from_seed(emit_seed(seed))))
}

/// Homogeneous Poisson arrivals on `[0, duration_fs)`.
pub(crate) fn poisson_times(duration_fs: i64, rate: f64, rng: &mut Rng) -> PhotonStream {
    let mut out = Vec::new();
    if rate > 0.0 {
        let mean_gap = FS_PER_S / rate;
        let mut t = 0.0f64;
        let mut last = i64::MIN;
        loop {
            t += mean_gap * rng.sample::<f64, _>(Exp1);
            let mut ti = t as i64;
            if ti >= duration_fs {
                break;
            }
            if ti <= last {
                ti = last + 1;
            }
            last = ti;
            out.push(ti);
        }
        out.retain(|&t| t < duration_fs);
    }
    PhotonStream::from_parts_unchecked(out, duration_fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{synthesize_coherent_field, synthesize_thermal_field};

    #[test]
    fn streaming_emission_equals_materialized() {
        let s = SpectrumModel::gaussian(2.8).unwrap();
        let trace = synthesize_thermal_field(&s, 300_000.0, 0.14, 11).unwrap();
        let a = emit_photons(&trace, 2e11, 11).unwrap();
        let b = emit_thermal_stream(&s, 300_000.0, 0.14, 2e11, 11).unwrap();
        assert!(a.len() > 10_000);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_high_occupancy() {
        let t = synthesize_coherent_field(1000.0, 1.0).unwrap();
        assert!(matches!(emit_photons(&t, 1.5e11, 0), Err(Error::EmissionRateTooHigh(_))));
        assert!(emit_photons(&t, 9e10, 0).is_ok());
    }

    #[test]
    fn empty_trace_gives_empty_stream() {
        let t = FieldTrace { dt_fs: 1000, samples: vec![], seed: 0 };
        let s = emit_photons(&t, 1e6, 0).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn arrivals_sorted_and_in_range() {
        let s = SpectrumModel::lorentzian(5.0).unwrap();
        let st = emit_thermal_stream(&s, 1e6, 0.25, 3e11, 2).unwrap();
        assert!(PhotonStream::new(st.arrivals().to_vec(), st.duration_fs()).is_ok());
    }
}
