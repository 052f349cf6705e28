//! End-to-end experiment: source, optics, detectors, correlator, and the
//! comparison with the smeared-peak prediction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::bunching::{
    compare, extract_envelope, normalize_jitter, predict_smeared_peak, squared_envelope_area, Comparison,
    EnvelopeCurve, JitterCurve, PredictedPeak,
};
use crate::config::{ExperimentConfig, Sampler, SourceKind};
use crate::correlator::{
    cross_correlate, cross_correlate_centered, normalize, peak_stats, CorrelationHistogram, G2Estimate,
};
use crate::detection::{detect, write_tags, DetectionReport, TagStream};
use crate::field::{emit_coherent_stream, emit_thermal_stream, PhotonStream, SparseDiagnostics, SparseThermalSampler};
use crate::optics::{attenuate, beam_split, delay_stream, michelson_scan, simulate_pair_source, Interferogram};
use crate::rng::derive_seed;
use crate::units::{fs_to_ps, ps_to_fs};
use crate::{Error, Result};

/// Counters summed over all segments of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunDiagnostics {
    pub segments: usize,
    pub photons: u64,
    pub sparse: SparseDiagnostics,
    pub detector_a: DetectionReport,
    pub detector_b: DetectionReport,
    pub saturated_segments: usize,
}

fn add_report(total: &mut DetectionReport, r: &DetectionReport) {
    total.photons_in += r.photons_in;
    total.photons_detected += r.photons_detected;
    total.dark_counts += r.dark_counts;
    total.dropped_early += r.dropped_early;
    total.dropped_late += r.dropped_late;
    total.dead_time_losses += r.dead_time_losses;
    total.tags_out += r.tags_out;
    total.saturated |= r.saturated;
}

impl RunDiagnostics {
    fn absorb(&mut self, seg: &Segment) {
        self.segments += 1;
        self.photons += seg.photons;
        self.sparse.candidates += seg.sparse.candidates;
        self.sparse.clustered += seg.sparse.clustered;
        self.sparse.exceedances += seg.sparse.exceedances;
        add_report(&mut self.detector_a, &seg.report_a);
        add_report(&mut self.detector_b, &seg.report_b);
        self.saturated_segments += usize::from(seg.report_a.saturated || seg.report_b.saturated);
    }
}

/// Photons leaving the source during one segment.
pub fn source_stream(
    config: &ExperimentConfig,
    duration_ps: f64,
    seed: u64,
) -> Result<(PhotonStream, SparseDiagnostics)> {
    let src = &config.source;
    match src.kind {
        SourceKind::Coherent => Ok((emit_coherent_stream(duration_ps, src.rate, seed)?, SparseDiagnostics::default())),
        SourceKind::Thermal => {
            let per_coherence_time = src.rate * src.spectrum.coherence_time_ps * 1e-12;
            let sparse = match src.sampler {
                Sampler::Dense => false,
                Sampler::Sparse => true,
                Sampler::Auto => per_coherence_time < 0.01,
            };
            if sparse {
                SparseThermalSampler::new(&src.spectrum, src.dt_ps, src.intensity_bound)?.emit(
                    duration_ps,
                    src.rate,
                    seed,
                )
            } else {
                let s = emit_thermal_stream(&src.spectrum, duration_ps, src.dt_ps, src.rate, seed)?;
                Ok((s, SparseDiagnostics::default()))
            }
        }
    }
}

/// Tags of both arms for one segment.
pub struct Segment {
    pub a: TagStream,
    pub b: TagStream,
    pub photons: u64,
    pub sparse: SparseDiagnostics,
    pub report_a: DetectionReport,
    pub report_b: DetectionReport,
}

pub fn simulate_segment(config: &ExperimentConfig, index: usize) -> Result<Segment> {
    let seed = derive_seed(config.master_seed, "segment", index as u64);
    let (photons, sparse) = source_stream(config, config.segment_ps(), seed).map_err(|e| e.in_stage("source"))?;
    let o = &config.optics;
    let (a, b) = (|| -> Result<_> {
        let (a, b) = beam_split(&photons, o.split_transmittance, derive_seed(seed, "split", 0))?;
        let a = attenuate(&a, o.transmission_a, derive_seed(seed, "loss", 0))?;
        let b = attenuate(&b, o.transmission_b, derive_seed(seed, "loss", 1))?;
        let b = delay_stream(&b, ps_to_fs(o.delay_b_ns * 1e3))?;
        Ok((a, b))
    })()
    .map_err(|e| e.in_stage("optics"))?;
    let det = &config.detectors;
    let (ta, report_a) = detect(&a, &det.a, 0, a.duration_fs(), seed).map_err(|e| e.in_stage("detect"))?;
    let (tb, report_b) = detect(&b, &det.b, 1, b.duration_fs(), seed).map_err(|e| e.in_stage("detect"))?;
    Ok(Segment { a: ta, b: tb, photons: photons.len() as u64, sparse, report_a, report_b })
}

/// Tick-aligned centre of the correlation window, and the part of the delay
/// line it cannot remove (in ps).
pub fn delay_alignment(config: &ExperimentConfig) -> Result<(f64, f64)> {
    let res_fs = config.detectors.a.resolution_fs()? as i64;
    let delay_fs = ps_to_fs(config.optics.delay_b_ns * 1e3);
    let center_fs = (delay_fs as f64 / res_fs as f64).round() as i64 * res_fs;
    Ok((fs_to_ps(center_fs), fs_to_ps(delay_fs - center_fs)))
}

/// Correlates all segments and merges them in segment order. `keep` is
/// called with the tags of every segment whose index is below
/// `run.tag_files`.
pub fn correlate_run(
    config: &ExperimentConfig,
    mut keep: impl FnMut(usize, &Segment) -> Result<()>,
) -> Result<(CorrelationHistogram, RunDiagnostics)> {
    let c = &config.correlation;
    let (center_ps, _) = delay_alignment(config)?;
    let work = |i: usize| -> Result<(CorrelationHistogram, Segment)> {
        let seg = simulate_segment(config, i)?;
        let h = cross_correlate_centered(&seg.a, &seg.b, c.bin_width_ps, c.max_lag_ns * 1e3, center_ps)
            .map_err(|e| e.in_stage("correlate"))?;
        Ok((h, seg))
    };
    let mut diag = RunDiagnostics::default();
    let mut total: Option<CorrelationHistogram> = None;
    // Chunks bound the memory held by finished segments awaiting the merge.
    let chunk = rayon::current_num_threads().max(1) * 2;
    for start in (0..config.run.segments).step_by(chunk) {
        let end = (start + chunk).min(config.run.segments);
        let results: Vec<Result<(CorrelationHistogram, Segment)>> = (start..end)
            .into_par_iter()
            .map(|i| work(i).map(|(h, s)| (h, if i < config.run.tag_files { s } else { strip(s) })))
            .collect();
        for (i, r) in (start..end).zip(results) {
            let (h, seg) = r?;
            if i < config.run.tag_files {
                keep(i, &seg)?;
            }
            diag.absorb(&seg);
            match &mut total {
                None => total = Some(h),
                Some(t) => t.merge(&h).map_err(|e| e.in_stage("correlate"))?,
            }
        }
    }
    Ok((total.expect("at least one segment"), diag))
}

fn strip(s: Segment) -> Segment {
    let empty = |t: &TagStream| TagStream {
        resolution_fs: t.resolution_fs,
        duration_ticks: t.duration_ticks,
        records: Vec::new(),
    };
    Segment { a: empty(&s.a), b: empty(&s.b), ..s }
}

/// Pair-source calibration of the combined jitter of the two detectors.
pub fn calibrate_jitter(config: &ExperimentConfig) -> Result<(CorrelationHistogram, JitterCurve)> {
    let k = &config.calibration;
    let seed = derive_seed(config.master_seed, "calibration", 0);
    let (pa, pb) = simulate_pair_source(k.pair_rate, k.pair_spread_ps, k.duration_s * 1e12, seed)?;
    let det = &config.detectors;
    let (ta, _) = detect(&pa, &det.a, 0, pa.duration_fs(), seed)?;
    let (tb, _) = detect(&pb, &det.b, 1, pb.duration_fs(), seed)?;
    let hist = cross_correlate(&ta, &tb, config.correlation.bin_width_ps, k.max_lag_ns * 1e3)?;
    let jitter = normalize_jitter(&hist, k.plateau_lo_ns * 1e3, k.max_lag_ns * 1e3)?;
    Ok((hist, jitter))
}

/// Simulated Michelson scan of the source and the envelope extracted from it.
pub fn measure_envelope(config: &ExperimentConfig) -> Result<(Interferogram, EnvelopeCurve, f64)> {
    let ic = &config.interferogram;
    let seed = derive_seed(config.master_seed, "interferogram", 0);
    let ifg = michelson_scan(&config.source.spectrum, &ic.scan, seed)?;
    let env = extract_envelope(
        &ifg,
        ic.scan.background_rate,
        ic.scan.window_s(),
        config.source.spectrum.center_wavelength_nm,
        ic.window_fringes,
    )?;
    let area = squared_envelope_area(&env)?;
    Ok((ifg, env, area))
}

/// Everything a run produces.
pub struct PipelineOutput {
    pub histogram: CorrelationHistogram,
    pub g2: G2Estimate,
    pub jitter: JitterCurve,
    pub envelope: EnvelopeCurve,
    pub envelope_area_ps: f64,
    pub prediction: PredictedPeak,
    pub comparison: Comparison,
    pub diagnostics: RunDiagnostics,
    pub files: Vec<PathBuf>,
}

/// Runs the full experiment and writes its artifacts into `out_dir`. On
/// failure, files already written by this call are removed.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<PipelineOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    let result = run_inner(config, out_dir, &mut files);
    if result.is_err() {
        for f in &files {
            let _ = std::fs::remove_file(f);
        }
    }
    result.map(|mut out| {
        out.files = files;
        out
    })
}

fn run_inner(config: &ExperimentConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<PipelineOutput> {
    let c = &config.correlation;
    let mut tag_paths = Vec::new();
    let run = correlate_run(config, |i, seg| {
        let merged = TagStream::merge(&[&seg.a, &seg.b])?;
        let p = out_dir.join(format!("tags_{i:04}.hbtt"));
        tag_paths.push(p.clone());
        write_tags(&merged, &p).map_err(|e| Error::from(e).in_stage("write"))
    });
    files.extend(tag_paths);
    let (histogram, diagnostics) = run?;
    let mut track = |name: &str| {
        let p = out_dir.join(name);
        files.push(p.clone());
        p
    };
    let g2 =
        normalize(&histogram, c.plateau_lo_ns * 1e3, c.plateau_hi_ns * 1e3).map_err(|e| e.in_stage("normalize"))?;

    let (cal_hist, jitter) = calibrate_jitter(config).map_err(|e| e.in_stage("calibrate"))?;
    let (ifg, envelope, envelope_area_ps) = measure_envelope(config).map_err(|e| e.in_stage("interferogram"))?;
    let (_, residual_delay_ps) = delay_alignment(config)?;
    let prediction = predict_smeared_peak(&jitter, envelope_area_ps, c.shift_ps + residual_delay_ps)
        .map_err(|e| e.in_stage("predict"))?;
    let comparison =
        compare(&g2, &prediction, -c.peak_half_width_ps, c.peak_half_width_ps).map_err(|e| e.in_stage("compare"))?;

    let write = |r: Result<()>| r.map_err(|e| e.in_stage("write"));
    write(histogram.write_csv(&track("histogram.csv")))?;
    write(g2.write_csv(&track("g2.csv")))?;
    write(cal_hist.write_csv(&track("calibration_histogram.csv")))?;
    write(write_curve(&track("jitter.csv"), "delay_ps,value", &jitter.delays_ps, &jitter.values))?;
    write(ifg.write_csv(&track("interferogram.csv")))?;
    write(write_curve(&track("envelope.csv"), "delay_ps,g1", &envelope.delays_ps, &envelope.values))?;
    write(prediction.write_csv(&track("prediction.csv")))?;

    let mut report = String::new();
    let _ = writeln!(report, "master_seed = {}", config.master_seed);
    let _ = writeln!(report, "segments = {}", diagnostics.segments);
    let _ = writeln!(report, "photons = {}", diagnostics.photons);
    let _ = writeln!(report, "sparse_candidates = {}", diagnostics.sparse.candidates);
    let _ = writeln!(report, "sparse_exceedances = {}", diagnostics.sparse.exceedances);
    for (name, d) in [("a", &diagnostics.detector_a), ("b", &diagnostics.detector_b)] {
        let _ = writeln!(report, "detector_{name}_tags = {}", d.tags_out);
        let _ = writeln!(report, "detector_{name}_dark_counts = {}", d.dark_counts);
        let _ = writeln!(report, "detector_{name}_dead_time_losses = {}", d.dead_time_losses);
        let _ = writeln!(report, "detector_{name}_dropped = {}", d.dropped_early + d.dropped_late);
    }
    let _ = writeln!(report, "saturated_segments = {}", diagnostics.saturated_segments);
    let _ = writeln!(report, "rate_a = {:.6e}", histogram.rate_a);
    let _ = writeln!(report, "rate_b = {:.6e}", histogram.rate_b);
    let _ = writeln!(report, "plateau_mean = {:.6e}", g2.plateau_mean);
    let _ = writeln!(report, "accidental_level = {:.6e}", histogram.accidental_level());
    let _ = writeln!(report, "envelope_vmax_raw = {:.6}", envelope.vmax_raw);
    let _ = writeln!(report, "envelope_clipped_windows = {}", envelope.clipped_windows);
    let _ = writeln!(report, "g1_squared_area_ps = {envelope_area_ps:.6}");
    let _ = writeln!(report, "jitter_area_ps = {:.6}", jitter.area_ps);
    let _ = writeln!(report, "prediction_shift_ps = {:.3}", prediction.shift_ps);
    let _ = writeln!(report, "shift_exceeds_resolution = {}", prediction.shift_exceeds_resolution);
    report.push_str(&comparison.to_report());
    let path = track("report.txt");
    write(std::fs::write(&path, report).map_err(|e| Error::io(&path, e)))?;

    Ok(PipelineOutput {
        histogram,
        g2,
        jitter,
        envelope,
        envelope_area_ps,
        prediction,
        comparison,
        diagnostics,
        files: Vec::new(),
    })
}

/// Two-column CSV with a header line.
pub fn write_curve(path: &Path, header: &str, x: &[f64], y: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(x.len() * 24);
    s.push_str(header);
    s.push('\n');
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(s, "{a:.6},{b:.9}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Prediction and detection significance without simulating photons.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPrediction {
    pub prediction: PredictedPeak,
    /// Significance of the predicted peak for a plateau of `plateau_mean`
    /// counts per bin with `√N` errors.
    pub significance: f64,
}

/// The prediction from two measured areas, assuming a Gaussian jitter curve
/// of the given area sampled at `bin_width_ps`.
pub fn analytic_prediction(
    g1sq_area_ps: f64,
    jitter_area_ps: f64,
    bin_width_ps: f64,
    plateau_mean: f64,
    peak_half_width_ps: f64,
) -> Result<AnalyticPrediction> {
    if !(plateau_mean > 0.0) {
        return Err(Error::param("plateau_mean", "must be positive"));
    }
    // a unit-height Gaussian has area FWHM·√(π/(4 ln 2))
    let fwhm = jitter_area_ps / (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt();
    let half_bins = ((6.0 * fwhm / bin_width_ps).ceil() as usize).max(1);
    let mut jitter = JitterCurve::gaussian(fwhm, bin_width_ps, half_bins)?;
    let sampled_area = jitter.area_ps;
    jitter.area_ps = jitter_area_ps;
    let mut prediction = predict_smeared_peak(&jitter, g1sq_area_ps, 0.0)?;
    prediction.area_ps = prediction.area_ps * jitter_area_ps / sampled_area;
    let g2 = G2Estimate {
        delays_ps: prediction.delays_ps.clone(),
        g2: prediction.excess.iter().map(|e| 1.0 + e).collect(),
        sigma: prediction.excess.iter().map(|e| (plateau_mean * (1.0 + e)).sqrt() / plateau_mean).collect(),
        plateau_mean,
        bin_width_ps,
    };
    let significance = peak_stats(&g2, -peak_half_width_ps, peak_half_width_ps)?.significance;
    Ok(AnalyticPrediction { prediction, significance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::DetectorConfig;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        c.run = crate::config::RunConfig { duration_s: 0.004, segments: 2, tag_files: 1 };
        c.calibration.duration_s = 0.05;
        c.interferogram.scan.scan_range_mm = 0.5;
        c.interferogram.scan.mirror_speed_mm_per_s = 0.1;
        c
    }

    #[test]
    fn laboratory_numbers() {
        let a = analytic_prediction(2.17, 611.0, 82.2, 4.4e6, 700.0).unwrap();
        assert_eq!(format!("{:.2e}", a.prediction.height), "3.55e-3");
        assert!(a.significance >= 5.0, "{}", a.significance);
        assert!((a.prediction.area_ps - 2.17).abs() < 1e-9);
    }

    #[test]
    fn delay_alignment_residual() {
        let (c, r) = delay_alignment(&ExperimentConfig::desk()).unwrap();
        assert!((c - 6083.0 * 82.2).abs() < 1e-6);
        assert!((r + 22.6).abs() < 1e-6);
    }

    #[test]
    fn tiny_run_is_deterministic() {
        let c = tiny();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let o1 = run_pipeline(&c, d1.path()).unwrap();
        let o2 = run_pipeline(&c, d2.path()).unwrap();
        assert_eq!(o1.histogram, o2.histogram);
        for f in &o1.files {
            let name = f.file_name().unwrap();
            assert_eq!(std::fs::read(f).unwrap(), std::fs::read(d2.path().join(name)).unwrap(), "{name:?}");
        }
        assert!(d1.path().join("tags_0000.hbtt").exists());
        assert!(!d1.path().join("tags_0001.hbtt").exists());
    }

    #[test]
    fn stage_name_in_errors() {
        let mut c = tiny();
        c.source.sampler = Sampler::Dense;
        c.source.dt_ps = 4.0;
        c.source.rate = 1e11;
        let err = run_pipeline(&c, tempfile::tempdir().unwrap().path()).err().unwrap();
        assert!(err.to_string().starts_with("stage `source`"), "{err}");
    }

    #[test]
    fn segment_streams_are_consistent() {
        let mut c = tiny();
        c.detectors.a = DetectorConfig::ideal(82.2);
        c.detectors.b = DetectorConfig::ideal(82.2);
        let s = simulate_segment(&c, 0).unwrap();
        assert_eq!(s.a.len() + s.b.len(), s.photons as usize);
    }
}
