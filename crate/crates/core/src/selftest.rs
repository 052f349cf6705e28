//! Built-in verification suite: analytic oracles, round trips and exact
//! values, each reported as one named check.

use std::fmt;

use num_complex::Complex64;
use num_rational::Rational64;
use rand::Rng as _;

use crate::bunching::{predict_smeared_peak, squared_envelope_area, EnvelopeCurve, JitterCurve};
use crate::config::ExperimentConfig;
use crate::correlator::{cross_correlate, cross_correlate_sharded};
use crate::detection::{decode, detect, to_bytes, DetectorConfig, TagRecord, TagStream};
use crate::field::{analytic_g2, emit_coherent_stream, SpectrumModel};
use crate::multiphoton::{marginal_distribution, same_polarization_probability, FockExpansion, FourPhotonState};
use crate::pipeline::analytic_prediction;
use crate::rng::rng_from_seed;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {:<34} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let n = self.checks.iter().filter(|c| c.passed).count();
        writeln!(f, "{n}/{} checks passed", self.checks.len())
    }
}

type CheckFn = fn() -> (bool, String);

const CHECKS: &[(&str, CheckFn)] = &[
    ("analytic_g2_limits", analytic_g2_limits),
    ("squared_envelope_area", squared_area),
    ("fock_thermal_identity", fock_thermal_identity),
    ("thermal_moment_identity", thermal_moments),
    ("tag_format_round_trip", tag_round_trip),
    ("tag_format_layout", tag_layout),
    ("polarization_exact_values", polarization),
    ("sharded_correlation", sharded_correlation),
    ("prediction_area_conservation", area_conservation),
    ("laboratory_prediction", laboratory_prediction),
    ("dead_time_gap", dead_time_gap),
    ("config_round_trip", config_round_trip),
];

pub fn selftest() -> SelfTestReport {
    SelfTestReport {
        checks: CHECKS
            .iter()
            .map(|&(name, f)| {
                let (passed, detail) = f();
                Check { name, passed, detail }
            })
            .collect(),
    }
}

fn analytic_g2_limits() -> (bool, String) {
    let g = SpectrumModel::gaussian(2.8).expect("valid");
    let l = SpectrumModel::lorentzian(2.8).expect("valid");
    let ok = [g, l].iter().all(|s| {
        analytic_g2(s, 0.0) == 2.0 && (analytic_g2(s, 1.4) - 1.25).abs() < 1e-12 && (analytic_g2(s, 1e3) - 1.0) < 1e-12
    });
    (ok, "g2(0) = 2, g2(τc/2) = 1.25, g2(∞) = 1".into())
}

fn squared_area() -> (bool, String) {
    let s = SpectrumModel::gaussian(2.8).expect("valid");
    let delays: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.0025).collect();
    let values = delays.iter().map(|&d| s.g1_modulus(d)).collect();
    let env = EnvelopeCurve { delays_ps: delays, values, vmax_raw: 1.0, clipped_windows: 0 };
    let area = squared_envelope_area(&env).unwrap_or(f64::NAN);
    let exact = s.g1_squared_area_ps();
    ((area / exact - 1.0).abs() < 1e-6, format!("{area:.6} ps vs {exact:.6} ps"))
}

fn fock_thermal_identity() -> (bool, String) {
    let worst = [0.1, 0.5, 1.0]
        .iter()
        .map(|&r| marginal_distribution(Complex64::new(r, 0.0), 20).thermal_deviation())
        .fold(0.0, f64::max);
    (worst < 1e-12, format!("max deviation {worst:.2e}"))
}

fn thermal_moments() -> (bool, String) {
    let f = FockExpansion::adaptive(Complex64::from_polar(0.7, 0.3));
    let m1 = f.factorial_moment(1);
    let m2 = f.factorial_moment(2);
    ((m2 - 2.0 * m1 * m1).abs() < 1e-6, format!("<n(n-1)>/<n>^2 = {:.9}", m2 / (m1 * m1)))
}

fn tag_round_trip() -> (bool, String) {
    let mut rng = rng_from_seed(7);
    let mut tick = 0u64;
    let records: Vec<TagRecord> = (0..10_000)
        .map(|_| {
            tick += rng.random_range(0..1000);
            TagRecord { channel: rng.random_range(0..2), tick }
        })
        .collect();
    let mut records = records;
    records.sort_by_key(|r| r.key());
    let tags = TagStream::new(1, tick + 1, records).expect("valid");
    let bytes = to_bytes(&tags);
    let back = decode(&mut bytes.as_slice());
    let ok = back.as_ref().is_ok_and(|b| *b == tags && to_bytes(b) == bytes);
    (ok, format!("{} records, {} bytes", tags.len(), bytes.len()))
}

fn tag_layout() -> (bool, String) {
    let empty = TagStream::new(82_200, 0, Vec::new()).expect("valid");
    let one = TagStream::new(82_200, 3, vec![TagRecord { channel: 1, tick: 2 }]).expect("valid");
    let rec = &to_bytes(&one)[32..];
    let ok = to_bytes(&empty).len() == 32 && rec == [1, 2, 0, 0, 0, 0, 0, 0, 0];
    (ok, "32-byte header, 9-byte records".into())
}

fn polarization() -> (bool, String) {
    let twin = same_polarization_probability(&FourPhotonState::twin());
    let sister = same_polarization_probability(&FourPhotonState::sister());
    let ok = twin.as_ref().is_ok_and(|p| *p == Rational64::new(2, 3))
        && sister.as_ref().is_ok_and(|p| *p == Rational64::new(1, 2));
    let show = |p: &Result<Rational64>| p.as_ref().map_or_else(|e| e.to_string(), |r| r.to_string());
    (ok, format!("twin {}, sister {}", show(&twin), show(&sister)))
}

fn sharded_correlation() -> (bool, String) {
    let det = DetectorConfig::ideal(82.2);
    let a = emit_coherent_stream(1e8, 1e7, 1).and_then(|s| detect(&s, &det, 0, s.duration_fs(), 1));
    let b = emit_coherent_stream(1e8, 1e7, 2).and_then(|s| detect(&s, &det, 1, s.duration_fs(), 2));
    let (Ok((a, _)), Ok((b, _))) = (a, b) else {
        return (false, "stream generation failed".into());
    };
    let one = cross_correlate(&a, &b, 82.2, 10_000.0);
    let many = cross_correlate_sharded(&a, &b, 82.2, 10_000.0, 7);
    match (one, many) {
        (Ok(x), Ok(y)) => (x == y, format!("{} coincidences", x.total())),
        _ => (false, "correlation failed".into()),
    }
}

fn area_conservation() -> (bool, String) {
    let Ok(j) = JitterCurve::gaussian(640.0, 82.2, 40) else {
        return (false, "jitter curve".into());
    };
    let worst = [0.0, 41.1, -50.0]
        .iter()
        .filter_map(|&s| predict_smeared_peak(&j, 2.17, s).ok())
        .map(|p| (p.area_ps / 2.17 - 1.0).abs())
        .fold(0.0, f64::max);
    (worst < 1e-12, format!("max relative error {worst:.1e}"))
}

fn laboratory_prediction() -> (bool, String) {
    match analytic_prediction(2.17, 611.0, 82.2, 4.4e6, 700.0) {
        Ok(a) => (
            format!("{:.2e}", a.prediction.height) == "3.55e-3" && a.significance >= 5.0,
            format!("height {:.3e}, significance {:.1}", a.prediction.height, a.significance),
        ),
        Err(e) => (false, e.to_string()),
    }
}

fn dead_time_gap() -> (bool, String) {
    let det = DetectorConfig { jitter: crate::detection::JitterModel::none(), ..DetectorConfig::laboratory() };
    let Ok(s) = emit_coherent_stream(1e9, 2e7, 3) else {
        return (false, "stream".into());
    };
    match detect(&s, &det, 0, s.duration_fs(), 3) {
        Ok((t, _)) => {
            let min_gap = t.records.windows(2).map(|w| w[1].tick - w[0].tick).min().unwrap_or(u64::MAX);
            (min_gap >= 608, format!("min gap {min_gap} ticks"))
        }
        Err(e) => (false, e.to_string()),
    }
}

fn config_round_trip() -> (bool, String) {
    let c = ExperimentConfig::desk();
    let ok = ExperimentConfig::from_toml(&c.to_toml()).is_ok_and(|b| b == c);
    (ok, "defaults parse back identically".into())
}
