//! Single-photon detector model and the time-tag data it produces.

mod tagfile;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::field::{poisson_times, PhotonStream};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::units::{fs_to_s, ps_to_exact_fs, ps_to_fs, FS_PER_NS};
use crate::{Error, Result};

pub use tagfile::{
    decode, encode, read_tags, to_bytes, write_tags, write_tags_csv, TagFileError, HEADER_LEN, RECORD_LEN,
};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Timing jitter added to every click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum JitterModel {
    Gaussian {
        fwhm_ps: f64,
    },
    /// Piecewise-constant density: `weights[i]` covers
    /// `[start_ps + i·bin_width_ps, start_ps + (i+1)·bin_width_ps)`.
    Empirical {
        start_ps: f64,
        bin_width_ps: f64,
        weights: Vec<f64>,
    },
}

impl JitterModel {
    pub fn none() -> Self {
        JitterModel::Gaussian { fwhm_ps: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        match self {
            JitterModel::Gaussian { fwhm_ps } if !(*fwhm_ps >= 0.0) => {
                Err(Error::param("jitter.fwhm_ps", "must be >= 0"))
            }
            JitterModel::Empirical { bin_width_ps, weights, .. } => {
                if !(*bin_width_ps > 0.0) {
                    return Err(Error::param("jitter.bin_width_ps", "must be positive"));
                }
                if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::param("jitter.weights", "must be non-negative with a positive sum"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn sampler(&self) -> JitterSampler {
        match self {
            JitterModel::Gaussian { fwhm_ps } => JitterSampler::Gaussian { sigma_fs: fwhm_ps * 1e3 / FWHM_PER_SIGMA },
            JitterModel::Empirical { start_ps, bin_width_ps, weights } => {
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                let cdf = weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect();
                JitterSampler::Empirical { start_fs: start_ps * 1e3, width_fs: bin_width_ps * 1e3, cdf }
            }
        }
    }
}

enum JitterSampler {
    Gaussian { sigma_fs: f64 },
    Empirical { start_fs: f64, width_fs: f64, cdf: Vec<f64> },
}

impl JitterSampler {
    fn sample(&self, rng: &mut Rng) -> i64 {
        match self {
            JitterSampler::Gaussian { sigma_fs } if *sigma_fs == 0.0 => 0,
            JitterSampler::Gaussian { sigma_fs } => (sigma_fs * rng.sample::<f64, _>(StandardNormal)).round() as i64,
            JitterSampler::Empirical { start_fs, width_fs, cdf } => {
                let u: f64 = rng.random();
                let bin = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                (start_fs + (bin as f64 + rng.random::<f64>()) * width_fs).round() as i64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub quantum_efficiency: f64,
    /// Dark counts per second.
    pub dark_rate: f64,
    pub jitter: JitterModel,
    pub dead_time_ns: f64,
    /// Output rate above which the detection is flagged as saturated.
    pub saturation_rate: f64,
    pub tag_resolution_ps: f64,
}

impl DetectorConfig {
    /// Silicon avalanche diode read out by the 82.2 ps time tagger: 50 %
    /// efficiency, 500 Hz dark counts, 50 ns dead time, 1 MHz saturation.
    /// The 640 ps combined jitter of a detector pair is split evenly, so each
    /// detector carries `640/√2` ps FWHM.
    pub fn laboratory() -> Self {
        DetectorConfig {
            quantum_efficiency: 0.5,
            dark_rate: 500.0,
            jitter: JitterModel::Gaussian { fwhm_ps: 640.0 / std::f64::consts::SQRT_2 },
            dead_time_ns: 50.0,
            saturation_rate: 1e6,
            tag_resolution_ps: 82.2,
        }
    }

    /// Perfect detector: every photon tagged at its exact time.
    pub fn ideal(tag_resolution_ps: f64) -> Self {
        DetectorConfig {
            quantum_efficiency: 1.0,
            dark_rate: 0.0,
            jitter: JitterModel::none(),
            dead_time_ns: 0.0,
            saturation_rate: f64::INFINITY,
            tag_resolution_ps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::param("quantum_efficiency", "must be in [0, 1]"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::param("dark_rate", "must be finite and >= 0"));
        }
        if !(self.dead_time_ns >= 0.0) {
            return Err(Error::param("dead_time_ns", "must be >= 0"));
        }
        self.resolution_fs()?;
        self.jitter.validate()
    }

    pub fn resolution_fs(&self) -> Result<u64> {
        match ps_to_exact_fs(self.tag_resolution_ps) {
            Some(fs) if fs > 0 => Ok(fs as u64),
            _ => Err(Error::param("tag_resolution_ps", "must be a positive whole number of fs")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagRecord {
    pub channel: u8,
    pub tick: u64,
}

impl TagRecord {
    pub fn key(&self) -> (u64, u8) {
        (self.tick, self.channel)
    }
}

/// Time-tagger output: records sorted by `(tick, channel)`, all ticks below
/// `duration_ticks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStream {
    pub resolution_fs: u64,
    pub duration_ticks: u64,
    pub records: Vec<TagRecord>,
}

impl TagStream {
    pub fn new(resolution_fs: u64, duration_ticks: u64, records: Vec<TagRecord>) -> Result<Self> {
        if resolution_fs == 0 {
            return Err(Error::param("resolution_fs", "must be positive"));
        }
        if records.windows(2).any(|w| w[0].key() > w[1].key()) {
            return Err(Error::param("records", "must be sorted by (tick, channel)"));
        }
        if records.last().is_some_and(|r| r.tick >= duration_ticks) {
            return Err(Error::param("records", "tick beyond duration"));
        }
        Ok(TagStream { resolution_fs, duration_ticks, records })
    }

    pub fn single_channel(resolution_fs: u64, duration_ticks: u64, channel: u8, ticks: &[u64]) -> Result<Self> {
        TagStream::new(resolution_fs, duration_ticks, ticks.iter().map(|&tick| TagRecord { channel, tick }).collect())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ticks as f64 * self.resolution_fs as f64 * 1e-15
    }

    pub fn channels(&self) -> Vec<u8> {
        let mut c: Vec<u8> = self.records.iter().map(|r| r.channel).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn ticks(&self, channel: u8) -> Vec<u64> {
        self.records.iter().filter(|r| r.channel == channel).map(|r| r.tick).collect()
    }

    /// Records of one channel as a stream of their own.
    pub fn channel(&self, channel: u8) -> TagStream {
        TagStream {
            resolution_fs: self.resolution_fs,
            duration_ticks: self.duration_ticks,
            records: self.records.iter().copied().filter(|r| r.channel == channel).collect(),
        }
    }

    /// Events per second.
    pub fn rate(&self) -> f64 {
        let d = self.duration_s();
        if d > 0.0 {
            self.len() as f64 / d
        } else {
            0.0
        }
    }

    /// Merges streams sharing one resolution into a single sorted stream.
    pub fn merge(streams: &[&TagStream]) -> Result<TagStream> {
        let Some(first) = streams.first() else {
            return Err(Error::param("streams", "nothing to merge"));
        };
        if let Some(s) = streams.iter().find(|s| s.resolution_fs != first.resolution_fs) {
            return Err(Error::ResolutionMismatch(first.resolution_fs, s.resolution_fs));
        }
        let mut records: Vec<TagRecord> = streams.iter().flat_map(|s| s.records.iter().copied()).collect();
        records.sort_by_key(TagRecord::key);
        Ok(TagStream {
            resolution_fs: first.resolution_fs,
            duration_ticks: streams.iter().map(|s| s.duration_ticks).max().unwrap_or(0),
            records,
        })
    }
}

/// Bookkeeping of one detection pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionReport {
    pub photons_in: u64,
    pub photons_detected: u64,
    pub dark_counts: u64,
    /// Events jittered before t = 0.
    pub dropped_early: u64,
    /// Events jittered past the end of the window.
    pub dropped_late: u64,
    pub dead_time_losses: u64,
    pub tags_out: u64,
    pub output_rate: f64,
    pub saturated: bool,
}

/// Runs photons through the detector: efficiency, dark counts, jitter,
/// non-paralyzable dead time and tagger quantization, in that order.
///
/// Events jittered outside `[0, duration)` are dropped and counted in the
/// report.
pub fn detect(
    stream: &PhotonStream,
    det: &DetectorConfig,
    channel: u8,
    duration_fs: i64,
    seed: u64,
) -> Result<(TagStream, DetectionReport)> {
    det.validate()?;
    if duration_fs < 0 {
        return Err(Error::param("duration", "must be >= 0"));
    }
    if stream.arrivals().last().is_some_and(|&t| t > duration_fs) {
        return Err(Error::param("stream", "arrivals extend past the detection window"));
    }
    let res = det.resolution_fs()?;
    let mut rng = rng_from_seed(derive_seed(seed, "detect", u64::from(channel)));
    let mut report = DetectionReport { photons_in: stream.len() as u64, ..Default::default() };

    let mut events: Vec<i64> = if det.quantum_efficiency >= 1.0 {
        stream.arrivals().to_vec()
    } else {
        let qe = det.quantum_efficiency;
        stream.arrivals().iter().copied().filter(|_| rng.random::<f64>() < qe).collect()
    };
    report.photons_detected = events.len() as u64;

    let dark = poisson_times(duration_fs, det.dark_rate, &mut rng);
    report.dark_counts = dark.len() as u64;
    events.extend_from_slice(dark.arrivals());

    let jitter = det.jitter.sampler();
    if !matches!(jitter, JitterSampler::Gaussian { sigma_fs } if sigma_fs == 0.0) {
        for t in &mut events {
            *t += jitter.sample(&mut rng);
        }
    }
    events.sort_unstable();
    let before = events.len();
    events.retain(|&t| t >= 0);
    report.dropped_early = (before - events.len()) as u64;
    let before = events.len();
    events.retain(|&t| t < duration_fs);
    report.dropped_late = (before - events.len()) as u64;

    let dead_fs = ps_to_fs(det.dead_time_ns * FS_PER_NS / 1e3);
    let mut kept = Vec::with_capacity(events.len());
    let mut blocked_until = i64::MIN;
    for t in events {
        if t >= blocked_until {
            kept.push(t);
            blocked_until = t.saturating_add(dead_fs);
        }
    }
    report.dead_time_losses =
        report.photons_detected + report.dark_counts - report.dropped_early - report.dropped_late - kept.len() as u64;

    let records: Vec<TagRecord> = kept.iter().map(|&t| TagRecord { channel, tick: t as u64 / res }).collect();
    report.tags_out = records.len() as u64;
    report.output_rate = if duration_fs > 0 { records.len() as f64 / fs_to_s(duration_fs) } else { 0.0 };
    report.saturated = report.output_rate > det.saturation_rate;
    let duration_ticks = (duration_fs as u64).div_ceil(res);
    Ok((TagStream { resolution_fs: res, duration_ticks, records }, report))
}

/// Histogram of consecutive inter-arrival times of a single-channel stream.
#[derive(Debug, Clone, PartialEq)]
pub struct InterarrivalHistogram {
    pub bin_width_fs: u64,
    pub counts: Vec<u64>,
    /// Number of intervals, including those beyond the histogram range.
    pub intervals: u64,
    pub mean_interval_fs: f64,
    pub min_interval_fs: Option<u64>,
}

impl InterarrivalHistogram {
    pub fn is_empty(&self) -> bool {
        self.intervals == 0
    }

    /// Counts in bins lying entirely below `t_fs`.
    pub fn counts_below(&self, t_fs: u64) -> u64 {
        let full = (t_fs / self.bin_width_fs) as usize;
        self.counts.iter().take(full).sum()
    }
}

/// Dead-time diagnostic: inter-arrival histogram with bins of `bin_width`
/// up to `range`. With a non-paralyzable dead time every bin below it is
/// empty.
pub fn autocorrelation_deadtime_check(
    tags: &TagStream,
    bin_width_ps: f64,
    range_ps: f64,
) -> Result<InterarrivalHistogram> {
    let channels = tags.channels();
    if channels.len() > 1 {
        return Err(Error::MultiChannel(channels));
    }
    let bin_fs = ps_to_fs(bin_width_ps);
    if bin_fs <= 0 || range_ps < bin_width_ps {
        return Err(Error::param("bin_width", "must be positive and no larger than the range"));
    }
    let bin_fs = bin_fs as u64;
    let nbins = (ps_to_fs(range_ps) as u64 / bin_fs) as usize;
    let mut counts = vec![0u64; nbins];
    let res = tags.resolution_fs;
    let (mut n, mut sum, mut min) = (0u64, 0f64, None::<u64>);
    for w in tags.records.windows(2) {
        let gap = (w[1].tick - w[0].tick) * res;
        let k = (gap / bin_fs) as usize;
        if k < nbins {
            counts[k] += 1;
        }
        n += 1;
        sum += gap as f64;
        min = Some(min.map_or(gap, |m| m.min(gap)));
    }
    Ok(InterarrivalHistogram {
        bin_width_fs: bin_fs,
        counts,
        intervals: n,
        mean_interval_fs: if n > 0 { sum / n as f64 } else { 0.0 },
        min_interval_fs: min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::emit_coherent_stream;

    #[test]
    fn ideal_detector_is_identity() {
        let s = emit_coherent_stream(1e8, 1e9, 3).unwrap();
        let (tags, rep) = detect(&s, &DetectorConfig::ideal(0.001), 0, s.duration_fs(), 1).unwrap();
        let ticks: Vec<i64> = tags.records.iter().map(|r| r.tick as i64).collect();
        assert_eq!(ticks, s.arrivals());
        assert_eq!(rep.dead_time_losses, 0);
        assert!(!rep.saturated);
    }

    #[test]
    fn dark_counts_only() {
        // 500 Hz for 10 s: 5000 ± 3√5000
        let det = DetectorConfig { dead_time_ns: 0.0, jitter: JitterModel::none(), ..DetectorConfig::laboratory() };
        let empty = PhotonStream::empty(10_000_000_000_000_000);
        let (tags, rep) = detect(&empty, &det, 1, empty.duration_fs(), 8).unwrap();
        assert!((tags.len() as f64 - 5000.0).abs() < 3.0 * 5000f64.sqrt(), "{}", tags.len());
        assert_eq!(rep.dark_counts as usize, tags.len());
    }

    #[test]
    fn empty_input_without_dark_counts_is_empty() {
        let det = DetectorConfig { dark_rate: 0.0, ..DetectorConfig::laboratory() };
        let (tags, _) = detect(&PhotonStream::empty(1_000_000), &det, 0, 1_000_000, 0).unwrap();
        assert!(tags.is_empty());
    }

    #[test]
    fn dead_time_gap_in_ticks() {
        // 5 MHz input, 50 ns dead time, 82.2 ps ticks
        let s = emit_coherent_stream(1e9, 5e6, 12).unwrap();
        let det = DetectorConfig::laboratory();
        let (tags, rep) = detect(&s, &det, 0, s.duration_fs(), 2).unwrap();
        let min_gap = tags.records.windows(2).map(|w| w[1].tick - w[0].tick).min().unwrap();
        assert_eq!(50_000_000 / 82_200, 608);
        assert!(min_gap >= 608, "{min_gap}");
        assert!(rep.dead_time_losses > 0);
        assert!(rep.saturated);
    }

    #[test]
    fn nonparalyzable_throughput() {
        // r/(1 + r·τd) for Poisson input
        let r = 4e6;
        let s = emit_coherent_stream(2e10, r, 5).unwrap();
        let det = DetectorConfig { dead_time_ns: 50.0, ..DetectorConfig::ideal(1.0) };
        let (tags, _) = detect(&s, &det, 0, s.duration_fs(), 3).unwrap();
        let expect = r / (1.0 + r * 50e-9);
        assert!((tags.rate() / expect - 1.0).abs() < 0.02, "{} vs {expect}", tags.rate());
    }

    #[test]
    fn jitter_drops_are_reported() {
        let s = PhotonStream::new(vec![0, 1, 2, 999_998, 999_999], 1_000_000).unwrap();
        let det = DetectorConfig { jitter: JitterModel::Gaussian { fwhm_ps: 100.0 }, ..DetectorConfig::ideal(0.001) };
        let (tags, rep) = detect(&s, &det, 0, 1_000_000, 4).unwrap();
        assert_eq!(rep.dropped_early + rep.dropped_late + tags.len() as u64, 5);
        assert!(rep.dropped_early + rep.dropped_late > 0);
    }

    #[test]
    fn empirical_jitter_stays_in_support() {
        let model = JitterModel::Empirical { start_ps: -10.0, bin_width_ps: 5.0, weights: vec![0.0, 1.0, 3.0, 0.0] };
        let sampler = model.sampler();
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let j = sampler.sample(&mut rng);
            assert!((-5_000..=5_000).contains(&j), "{j}");
        }
        let bad = JitterModel::Empirical { start_ps: 0.0, bin_width_ps: 1.0, weights: vec![-1.0, 2.0] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn interarrival_histogram() {
        let s = emit_coherent_stream(1e10, 1e6, 6).unwrap();
        let det = DetectorConfig { dead_time_ns: 50.0, ..DetectorConfig::ideal(82.2) };
        let (tags, _) = detect(&s, &det, 0, s.duration_fs(), 1).unwrap();
        let h = autocorrelation_deadtime_check(&tags, 822.0, 10_000_000.0).unwrap();
        assert_eq!(h.counts_below(50_000_000 - 822_000), 0);
        assert!(h.min_interval_fs.unwrap() >= 50_000_000 - 82_200);

        let (tags, _) = detect(&s, &DetectorConfig::ideal(82.2), 0, s.duration_fs(), 1).unwrap();
        let h = autocorrelation_deadtime_check(&tags, 822.0, 10_000_000.0).unwrap();
        let mean_s = h.mean_interval_fs * 1e-15;
        assert!((mean_s * 1e6 - 1.0).abs() < 0.02);
        // exponential shape: first bins hold ≈ N·(1 - e^{-r·bin})
        let expect0 = h.intervals as f64 * (1.0 - (-1e6 * 822e-12f64).exp());
        assert!((h.counts[0] as f64 - expect0).abs() < 5.0 * expect0.sqrt());

        let empty = TagStream::new(82_200, 100, vec![]).unwrap();
        assert!(autocorrelation_deadtime_check(&empty, 822.0, 10_000.0).unwrap().is_empty());
        let two =
            TagStream::new(1, 10, vec![TagRecord { channel: 0, tick: 1 }, TagRecord { channel: 1, tick: 2 }]).unwrap();
        assert!(matches!(autocorrelation_deadtime_check(&two, 1.0, 2.0), Err(Error::MultiChannel(_))));
    }
}
