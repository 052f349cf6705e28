//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. Omitted tables take their defaults,
//! which describe the scaled desk experiment (see [`ExperimentConfig::desk`]).

use serde::{Deserialize, Serialize};

use crate::detection::{DetectorConfig, JitterModel};
use crate::field::{SpectrumModel, DEFAULT_INTENSITY_BOUND};
use crate::optics::ScanConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Thermal,
    Coherent,
}

/// How thermal photons are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Materialize the field on the full sampling grid.
    Dense,
    /// Evaluate the field only at candidate photon times.
    Sparse,
    /// Sparse when fewer than 0.01 photons fall in a coherence time.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub spectrum: SpectrumModel,
    /// Photons per second leaving the source.
    pub rate: f64,
    pub sampler: Sampler,
    pub dt_ps: f64,
    #[serde(default = "default_bound")]
    pub intensity_bound: f64,
}

fn default_bound() -> f64 {
    DEFAULT_INTENSITY_BOUND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsConfig {
    /// Probability of a photon going to arm A.
    pub split_transmittance: f64,
    /// Delay line in arm B.
    pub delay_b_ns: f64,
    /// Optical transmission of each arm after the splitter.
    pub transmission_a: f64,
    pub transmission_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorPair {
    pub a: DetectorConfig,
    pub b: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    /// Independent segments the run is cut into. Coincidences across
    /// segment boundaries are not counted.
    pub segments: usize,
    /// How many of the first segments get their tag files written.
    pub tag_files: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub bin_width_ps: f64,
    pub max_lag_ns: f64,
    pub plateau_lo_ns: f64,
    pub plateau_hi_ns: f64,
    /// The peak window is `[-peak_half_width, +peak_half_width]`.
    pub peak_half_width_ps: f64,
    /// Lateral shift applied to the predicted peak.
    pub shift_ps: f64,
}

/// Pair-source measurement of the combined detector jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub pair_rate: f64,
    pub pair_spread_ps: f64,
    pub duration_s: f64,
    pub max_lag_ns: f64,
    pub plateau_lo_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferogramConfig {
    pub scan: ScanConfig,
    /// Fringe periods per visibility estimate.
    pub window_fringes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub source: SourceConfig,
    pub optics: OpticsConfig,
    pub detectors: DetectorPair,
    pub run: RunConfig,
    pub correlation: CorrelationConfig,
    pub calibration: CalibrationConfig,
    pub interferogram: InterferogramConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Scaled experiment that a desktop can simulate in minutes:
    /// `τc = 50 ps` Gaussian, 200 ps combined Gaussian jitter, about 10⁶
    /// detected clicks per second in each arm, 200 s of data.
    pub fn desk() -> Self {
        let mut det = DetectorConfig::laboratory();
        det.jitter = JitterModel::Gaussian { fwhm_ps: 200.0 / std::f64::consts::SQRT_2 };
        ExperimentConfig {
            master_seed: 1,
            source: SourceConfig {
                kind: SourceKind::Thermal,
                spectrum: SpectrumModel::gaussian(50.0).expect("valid"),
                rate: 4.2e6,
                sampler: Sampler::Auto,
                dt_ps: 5.0,
                intensity_bound: DEFAULT_INTENSITY_BOUND,
            },
            optics: OpticsConfig {
                split_transmittance: 0.5,
                delay_b_ns: 500.0,
                transmission_a: 1.0,
                transmission_b: 1.0,
            },
            detectors: DetectorPair { a: det.clone(), b: det },
            run: RunConfig { duration_s: 200.0, segments: 200, tag_files: 1 },
            correlation: CorrelationConfig {
                bin_width_ps: 82.2,
                max_lag_ns: 20.0,
                plateau_lo_ns: 5.0,
                plateau_hi_ns: 20.0,
                peak_half_width_ps: 300.0,
                shift_ps: 0.0,
            },
            calibration: CalibrationConfig {
                pair_rate: 1e5,
                pair_spread_ps: 0.5,
                duration_s: 20.0,
                max_lag_ns: 5.0,
                plateau_lo_ns: 2.0,
            },
            interferogram: InterferogramConfig {
                scan: ScanConfig { mirror_speed_mm_per_s: 0.01, scan_range_mm: 30.0, ..ScanConfig::laboratory() },
                window_fringes: 8,
            },
        }
    }

    /// Laboratory parameters: `τc = 2.8 ps`, 640 ps combined jitter, 82.2 ps
    /// tags, 16 h of data. Only the analytic prediction path is practical
    /// at these settings.
    pub fn laboratory() -> Self {
        let mut c = Self::desk();
        c.source.spectrum = SpectrumModel::gaussian(2.8).expect("valid");
        c.source.dt_ps = 0.14;
        c.detectors = DetectorPair { a: DetectorConfig::laboratory(), b: DetectorConfig::laboratory() };
        c.run = RunConfig { duration_s: 16.0 * 3600.0, segments: 57_600, tag_files: 0 };
        c.correlation.peak_half_width_ps = 700.0;
        c.correlation.shift_ps = 0.0;
        c.interferogram = InterferogramConfig { scan: ScanConfig::laboratory(), window_fringes: 2 };
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.source.spectrum.validate()?;
        if !(self.source.rate >= 0.0 && self.source.rate.is_finite()) {
            return cfg("source.rate must be finite and >= 0".into());
        }
        if !(self.source.dt_ps > 0.0) {
            return cfg("source.dt_ps must be positive".into());
        }
        for (name, p) in [
            ("optics.split_transmittance", self.optics.split_transmittance),
            ("optics.transmission_a", self.optics.transmission_a),
            ("optics.transmission_b", self.optics.transmission_b),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(format!("{name} must be in [0, 1]"));
            }
        }
        if !(self.optics.delay_b_ns >= 0.0) {
            return cfg("optics.delay_b_ns must be >= 0".into());
        }
        self.detectors.a.validate()?;
        self.detectors.b.validate()?;
        if self.detectors.a.tag_resolution_ps != self.detectors.b.tag_resolution_ps {
            return cfg("detectors must share one tag resolution".into());
        }
        if !(self.run.duration_s > 0.0) || self.run.segments == 0 {
            return cfg("run.duration_s must be positive and run.segments >= 1".into());
        }
        let c = &self.correlation;
        if !(c.plateau_lo_ns < c.plateau_hi_ns && c.plateau_hi_ns <= c.max_lag_ns) {
            return cfg("correlation plateau must satisfy plateau_lo_ns < plateau_hi_ns <= max_lag_ns".into());
        }
        if !(c.peak_half_width_ps > 0.0 && c.peak_half_width_ps < c.plateau_lo_ns * 1e3) {
            return cfg("correlation.peak_half_width_ps must be positive and inside the plateau gap".into());
        }
        let k = &self.calibration;
        if !(k.pair_rate > 0.0 && k.duration_s > 0.0 && k.plateau_lo_ns < k.max_lag_ns && k.pair_spread_ps >= 0.0) {
            return cfg("calibration needs positive rate and duration, plateau_lo_ns < max_lag_ns".into());
        }
        self.interferogram.scan.validate()?;
        if self.interferogram.window_fringes < 2 {
            return cfg("interferogram.window_fringes must be >= 2".into());
        }
        Ok(())
    }

    /// Length of one run segment in ps.
    pub fn segment_ps(&self) -> f64 {
        self.run.duration_s * 1e12 / self.run.segments as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for c in [ExperimentConfig::desk(), ExperimentConfig::laboratory()] {
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = ExperimentConfig::desk().to_toml().replace("delay_b_ns", "delay_bee_ns");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("delay_bee_ns"), "{err}");
        assert!(err.is_usage());
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = ExperimentConfig::desk();
        c.optics.split_transmittance = 1.5;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::desk();
        c.correlation.plateau_hi_ns = 100.0;
        assert!(c.validate().is_err());
    }
}
