//! Detector and calibration behaviour against closed-form expectations.

use hbtlab::config::ExperimentConfig;
use hbtlab::detection::{detect, DetectorConfig, JitterModel};
use hbtlab::field::emit_coherent_stream;
use hbtlab::pipeline::calibrate_jitter;

#[test]
fn non_paralyzable_dead_time_throughput() {
    let det = DetectorConfig {
        jitter: JitterModel::none(),
        dark_rate: 0.0,
        quantum_efficiency: 1.0,
        ..DetectorConfig::laboratory()
    };
    for rate in [1e6, 5e6] {
        let s = emit_coherent_stream(0.2e12, rate, 9).unwrap();
        let (tags, report) = detect(&s, &det, 0, s.duration_fs(), 9).unwrap();
        let expect = rate / (1.0 + rate * 50e-9);
        assert!((tags.rate() / expect - 1.0).abs() < 0.01, "{} vs {expect}", tags.rate());
        assert_eq!(report.dead_time_losses + report.tags_out, report.photons_detected);
    }
}

#[test]
fn efficiency_and_dark_counts_add_up() {
    let det = DetectorConfig {
        jitter: JitterModel::none(),
        dead_time_ns: 0.0,
        dark_rate: 1e4,
        ..DetectorConfig::laboratory()
    };
    let s = emit_coherent_stream(1e12, 1e5, 10).unwrap();
    let (tags, report) = detect(&s, &det, 0, s.duration_fs(), 10).unwrap();
    let expect = 0.5 * 1e5 + 1e4;
    assert!((tags.rate() - expect).abs() < 5.0 * expect.sqrt(), "{}", tags.rate());
    assert!((report.dark_counts as f64 - 1e4).abs() < 500.0);
}

#[test]
fn calibrated_jitter_matches_quantized_gaussian() {
    // two Gaussian jitters plus two independent uniform quantization errors
    let mut config = ExperimentConfig::desk();
    config.calibration.duration_s = 5.0;
    let (_, jitter) = calibrate_jitter(&config).unwrap();
    let fwhm_per_sigma = (8.0 * std::f64::consts::LN_2).sqrt();
    let JitterModel::Gaussian { fwhm_ps } = config.detectors.a.jitter else { unreachable!() };
    let res = config.detectors.a.tag_resolution_ps;
    let sigma = ((2.0 * fwhm_ps * fwhm_ps) / (fwhm_per_sigma * fwhm_per_sigma) + 2.0 * res * res / 12.0).sqrt();
    let area = sigma * (2.0 * std::f64::consts::PI).sqrt();
    assert!((jitter.area_ps / area - 1.0).abs() < 0.03, "{} vs {area}", jitter.area_ps);
}
