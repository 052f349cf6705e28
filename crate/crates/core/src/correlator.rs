//! Two-channel coincidence histograms and their normalization.
//!
//! A coincidence from channel A at `t_a` to channel B at `t_b` has delay
//! `Δt = t_b - t_a`; every ordered pair within the lag window counts,
//! regardless of other clicks in between. Negative delays are pairs where B
//! clicked first.
//!
//! Bin `k` (for `k` in `-half..=half`) collects delays with
//! `floor((Δt + w/2) / w) = k`, `w` being the bin width in ticks, so the
//! centre bin straddles `Δt = 0`. For bin widths spanning an odd number of
//! ticks the bins are exactly mirror-symmetric.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::detection::TagStream;
use crate::units::{fs_to_ps, ps_to_exact_fs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_fs: i64,
    /// Bins on each side of the centre bin.
    pub half_bins: usize,
    pub counts: Vec<u64>,
    pub total_time_s: f64,
    /// Observed rates of the two inputs, events/s.
    pub rate_a: f64,
    pub rate_b: f64,
}

impl CorrelationHistogram {
    pub fn empty(bin_width_fs: i64, half_bins: usize) -> Self {
        CorrelationHistogram {
            bin_width_fs,
            half_bins,
            counts: vec![0; 2 * half_bins + 1],
            total_time_s: 0.0,
            rate_a: 0.0,
            rate_b: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_width_ps(&self) -> f64 {
        fs_to_ps(self.bin_width_fs)
    }

    /// Centre delay of bin `i` (0-based index into `counts`).
    pub fn delay_ps(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins as f64) * self.bin_width_ps()
    }

    pub fn delays_ps(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.delay_ps(i)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Expected counts per bin for uncorrelated inputs, `λa·λb·τbin·T`.
    pub fn accidental_level(&self) -> f64 {
        self.rate_a * self.rate_b * self.bin_width_fs as f64 * 1e-15 * self.total_time_s
    }

    /// Histogram with the roles of A and B exchanged.
    pub fn mirrored(&self) -> Self {
        let mut m = self.clone();
        m.counts.reverse();
        std::mem::swap(&mut m.rate_a, &mut m.rate_b);
        m
    }

    /// Adds another histogram with the same binning (e.g. from a separate
    /// run segment). Rates are combined time-weighted.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if other.bin_width_fs != self.bin_width_fs || other.half_bins != self.half_bins {
            return Err(Error::param("histogram", "cannot merge histograms with different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        let t = self.total_time_s + other.total_time_s;
        if t > 0.0 {
            self.rate_a = (self.rate_a * self.total_time_s + other.rate_a * other.total_time_s) / t;
            self.rate_b = (self.rate_b * self.total_time_s + other.rate_b * other.total_time_s) / t;
        }
        self.total_time_s = t;
        Ok(())
    }

    /// `delay_ps,counts` CSV. Run metadata goes in `#` comment lines.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "# bin_width_fs={}", self.bin_width_fs).map_err(io)?;
        writeln!(w, "# total_time_s={:e}", self.total_time_s).map_err(io)?;
        writeln!(w, "# rate_a={:e}", self.rate_a).map_err(io)?;
        writeln!(w, "# rate_b={:e}", self.rate_b).map_err(io)?;
        writeln!(w, "delay_ps,counts").map_err(io)?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:.3},{c}", self.delay_ps(i)).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::Csv { path: path.into(), reason };
        let mut meta = std::collections::HashMap::new();
        let mut rows: Vec<(f64, u64)> = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if let Some(kv) = line.strip_prefix('#') {
                if let Some((k, v)) = kv.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if line.is_empty() || line.starts_with("delay") {
                continue;
            }
            let (d, c) = line.split_once(',').ok_or_else(|| bad(format!("line {}: expected two columns", i + 1)))?;
            let d: f64 = d.trim().parse().map_err(|_| bad(format!("line {}: bad delay", i + 1)))?;
            let c: u64 = c.trim().parse().map_err(|_| bad(format!("line {}: bad count", i + 1)))?;
            rows.push((d, c));
        }
        if rows.len().is_multiple_of(2) {
            return Err(bad(format!("expected an odd number of bins, got {}", rows.len())));
        }
        let half_bins = rows.len() / 2;
        let bin_width_fs = match meta.get("bin_width_fs") {
            Some(v) => v.parse().map_err(|_| bad("bad bin_width_fs".into()))?,
            None if rows.len() > 1 => ((rows[1].0 - rows[0].0) * 1e3).round() as i64,
            None => return Err(bad("cannot infer bin width".into())),
        };
        let num = |k: &str| meta.get(k).and_then(|v| v.parse::<f64>().ok()).unwrap_or(0.0);
        Ok(CorrelationHistogram {
            bin_width_fs,
            half_bins,
            counts: rows.into_iter().map(|(_, c)| c).collect(),
            total_time_s: num("total_time_s"),
            rate_a: num("rate_a"),
            rate_b: num("rate_b"),
        })
    }
}

struct Binning {
    center: i64,
    w: i64,
    h: i64,
    half: i64,
    lo: i64,
    hi: i64,
}

impl Binning {
    fn new(bin_ticks: i64, half: usize, center: i64) -> Self {
        let h = bin_ticks / 2;
        let half = half as i64;
        Binning {
            center,
            w: bin_ticks,
            h,
            half,
            lo: center - half * bin_ticks - h,
            hi: center + half * bin_ticks + bin_ticks - 1 - h,
        }
    }

    #[inline]
    fn index(&self, delta: i64) -> usize {
        ((delta - self.center + self.h).div_euclid(self.w) + self.half) as usize
    }
}

fn binning_for(a: &TagStream, b: &TagStream, bin_width_ps: f64, max_lag_ps: f64, center_ps: f64) -> Result<Binning> {
    if a.resolution_fs != b.resolution_fs {
        return Err(Error::ResolutionMismatch(a.resolution_fs, b.resolution_fs));
    }
    let res = a.resolution_fs;
    let bin_fs = ps_to_exact_fs(bin_width_ps).unwrap_or(-1);
    if bin_fs <= 0 || bin_fs % res as i64 != 0 {
        return Err(Error::BinWidthNotMultiple { bin_fs, resolution_fs: res });
    }
    if !(max_lag_ps >= 0.0) {
        return Err(Error::param("max_lag", "must be >= 0"));
    }
    let center_fs = ps_to_exact_fs(center_ps).filter(|c| c % res as i64 == 0);
    let Some(center_fs) = center_fs else {
        return Err(Error::param("center", "must be a whole number of tag ticks"));
    };
    let half = (max_lag_ps * 1e3 / bin_fs as f64 + 1e-9).floor() as usize;
    Ok(Binning::new(bin_fs / res as i64, half, center_fs / res as i64))
}

fn accumulate(a: &[i64], b: &[i64], bins: &Binning, counts: &mut [u64]) {
    let mut start = 0usize;
    for &ta in a {
        let first = ta + bins.lo;
        while start < b.len() && b[start] < first {
            start += 1;
        }
        let last = ta + bins.hi;
        for &tb in &b[start..] {
            if tb > last {
                break;
            }
            counts[bins.index(tb - ta)] += 1;
        }
    }
}

fn ticks_of(s: &TagStream) -> Vec<i64> {
    s.records.iter().map(|r| r.tick as i64).collect()
}

fn finish(a: &TagStream, b: &TagStream, bins: &Binning, counts: Vec<u64>) -> CorrelationHistogram {
    let total_time_s = a.duration_s().max(b.duration_s());
    let rate = |n: usize| if total_time_s > 0.0 { n as f64 / total_time_s } else { 0.0 };
    CorrelationHistogram {
        bin_width_fs: bins.w * a.resolution_fs as i64,
        half_bins: bins.half as usize,
        counts,
        total_time_s,
        rate_a: rate(a.len()),
        rate_b: rate(b.len()),
    }
}

/// Signed-delay coincidence histogram of every record in `a` against every
/// record in `b` within `±max_lag` (rounded down to whole bins).
///
/// Single merge pass, `O(N·k)` with `k` the mean number of B events in the
/// lag window.
pub fn cross_correlate(
    a: &TagStream,
    b: &TagStream,
    bin_width_ps: f64,
    max_lag_ps: f64,
) -> Result<CorrelationHistogram> {
    cross_correlate_centered(a, b, bin_width_ps, max_lag_ps, 0.0)
}

/// As [`cross_correlate`], with the lag window centred on `center_ps`
/// (a whole number of ticks) instead of zero. Bin delays are reported
/// relative to the centre, which is how a known delay line is taken out.
pub fn cross_correlate_centered(
    a: &TagStream,
    b: &TagStream,
    bin_width_ps: f64,
    max_lag_ps: f64,
    center_ps: f64,
) -> Result<CorrelationHistogram> {
    let bins = binning_for(a, b, bin_width_ps, max_lag_ps, center_ps)?;
    let mut counts = vec![0u64; 2 * bins.half as usize + 1];
    accumulate(&ticks_of(a), &ticks_of(b), &bins, &mut counts);
    Ok(finish(a, b, &bins, counts))
}

/// Same result as [`cross_correlate`], computed over `shards` disjoint
/// slices of A in parallel and summed.
pub fn cross_correlate_sharded(
    a: &TagStream,
    b: &TagStream,
    bin_width_ps: f64,
    max_lag_ps: f64,
    shards: usize,
) -> Result<CorrelationHistogram> {
    let bins = binning_for(a, b, bin_width_ps, max_lag_ps, 0.0)?;
    let half = bins.half as usize;
    let ta = ticks_of(a);
    let tb = ticks_of(b);
    let chunk = ta.len().div_ceil(shards.max(1)).max(1);
    let counts = ta
        .par_chunks(chunk)
        .map(|part| {
            let mut c = vec![0u64; 2 * half + 1];
            accumulate(part, &tb, &bins, &mut c);
            c
        })
        .reduce(
            || vec![0u64; 2 * half + 1],
            |mut x, y| {
                x.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
                x
            },
        );
    Ok(finish(a, b, &bins, counts))
}

/// Plateau-normalized `g2` estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub delays_ps: Vec<f64>,
    pub g2: Vec<f64>,
    /// Per-bin standard error, `√N/N̄`.
    pub sigma: Vec<f64>,
    pub plateau_mean: f64,
    pub bin_width_ps: f64,
}

impl G2Estimate {
    /// `delay_ps,g2,sigma` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "# plateau_mean={:e}", self.plateau_mean).map_err(io)?;
        writeln!(w, "delay_ps,g2,sigma").map_err(io)?;
        for ((d, g), s) in self.delays_ps.iter().zip(&self.g2).zip(&self.sigma) {
            writeln!(w, "{d:.3},{g:.9},{s:.9}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Indices of bins whose centre lies in `[lo, hi]` (signed delays).
    pub fn window(&self, lo_ps: f64, hi_ps: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.bin_width_ps;
        let start = self.delays_ps.partition_point(|&d| d < lo_ps - eps);
        let end = self.delays_ps.partition_point(|&d| d <= hi_ps + eps);
        start..end.max(start)
    }
}

/// Divides every bin by the mean count over the plateau, i.e. the bins
/// with `plateau_lo ≤ |Δt| ≤ plateau_hi` on both sides.
pub fn normalize(hist: &CorrelationHistogram, plateau_lo_ps: f64, plateau_hi_ps: f64) -> Result<G2Estimate> {
    let delays = hist.delays_ps();
    let eps = 1e-9 * hist.bin_width_ps();
    let (sum, n) = delays
        .iter()
        .zip(&hist.counts)
        .filter(|(d, _)| (plateau_lo_ps - eps..=plateau_hi_ps + eps).contains(&d.abs()))
        .fold((0u64, 0usize), |(s, n), (_, &c)| (s + c, n + 1));
    if n == 0 {
        return Err(Error::EmptyPlateau { lo_ps: plateau_lo_ps, hi_ps: plateau_hi_ps });
    }
    let mean = sum as f64 / n as f64;
    if mean <= 0.0 {
        return Err(Error::param("plateau", "plateau bins are all empty"));
    }
    Ok(G2Estimate {
        g2: hist.counts.iter().map(|&c| c as f64 / mean).collect(),
        sigma: hist.counts.iter().map(|&c| (c.max(1) as f64).sqrt() / mean).collect(),
        delays_ps: delays,
        plateau_mean: mean,
        bin_width_ps: hist.bin_width_ps(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakReport {
    /// Largest `g2 - 1` in the window (after smoothing, if any).
    pub height_excess: f64,
    /// `Σ (g2 - 1)·τbin` over the window, in ps.
    pub area_excess_ps: f64,
    /// Excess-weighted mean delay, in ps.
    pub centroid_ps: f64,
    /// Excess area over its propagated standard error. Signed.
    pub significance: f64,
}

/// Peak statistics over `[peak_lo, peak_hi]`, without smoothing.
pub fn peak_stats(g2: &G2Estimate, peak_lo_ps: f64, peak_hi_ps: f64) -> Result<PeakReport> {
    peak_stats_smoothed(g2, peak_lo_ps, peak_hi_ps, 1)
}

/// As [`peak_stats`], with the height taken from a centred moving average
/// of `smoothing` bins. Area, centroid and significance use raw bins.
pub fn peak_stats_smoothed(g2: &G2Estimate, peak_lo_ps: f64, peak_hi_ps: f64, smoothing: usize) -> Result<PeakReport> {
    let range = g2.window(peak_lo_ps, peak_hi_ps);
    if range.is_empty() {
        return Err(Error::param("peak window", "contains no bins"));
    }
    let bw = g2.bin_width_ps;
    let excess = |i: usize| g2.g2[i] - 1.0;
    let k = smoothing.max(1) / 2;
    let height = range
        .clone()
        .map(|i| {
            let lo = i.saturating_sub(k);
            let hi = (i + k).min(g2.g2.len() - 1);
            (lo..=hi).map(excess).sum::<f64>() / (hi - lo + 1) as f64
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = range.clone().map(excess).sum();
    let var: f64 = range.clone().map(|i| g2.sigma[i].powi(2)).sum();
    let moment: f64 = range.clone().map(|i| g2.delays_ps[i] * excess(i)).sum();
    Ok(PeakReport {
        height_excess: height,
        area_excess_ps: sum * bw,
        centroid_ps: if sum != 0.0 { moment / sum } else { 0.0 },
        significance: if var > 0.0 { sum / var.sqrt() } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{TagRecord, TagStream};

    fn single(ticks: &[u64], duration: u64) -> TagStream {
        TagStream::single_channel(1, duration, 0, ticks).unwrap()
    }

    #[test]
    fn one_pair_lands_in_its_bin() {
        let a = single(&[1000], 10_000);
        let b = single(&[1350], 10_000);
        let h = cross_correlate(&a, &b, 0.101, 1.0).unwrap();
        assert_eq!(h.total(), 1);
        let i = h.counts.iter().position(|&c| c == 1).unwrap();
        assert!((h.delay_ps(i) - 0.303).abs() < 1e-9);
        assert_eq!(h.len() % 2, 1);
    }

    #[test]
    fn pairs_beyond_max_lag_are_ignored() {
        let a = single(&[1000], 10_000);
        let b = single(&[5000], 10_000);
        assert_eq!(cross_correlate(&a, &b, 0.101, 1.0).unwrap().total(), 0);
    }

    #[test]
    fn simultaneous_ticks_go_to_centre_bin() {
        let a = single(&[7, 9], 100);
        let h = cross_correlate(&a, &a, 0.002, 0.01).unwrap();
        assert_eq!(h.counts[h.half_bins], 2);
        assert_eq!(h.counts[h.half_bins - 1], 1);
        assert_eq!(h.counts[h.half_bins + 1], 1);
    }

    #[test]
    fn centred_window_removes_a_known_delay() {
        let a = single(&[1000, 4000], 100_000);
        let b = single(&[51_003, 54_000], 100_000);
        let h = cross_correlate_centered(&a, &b, 0.001, 0.01, 50.0).unwrap();
        assert_eq!(h.total(), 2);
        assert_eq!(h.counts[h.half_bins + 3], 1);
        assert_eq!(h.counts[h.half_bins], 1);
        assert!(cross_correlate_centered(&a, &b, 0.001, 0.01, 50.0005).is_err());
    }

    #[test]
    fn errors() {
        let a = single(&[1], 10);
        let b = TagStream::single_channel(2, 10, 1, &[1]).unwrap();
        assert!(matches!(cross_correlate(&a, &b, 0.002, 0.01), Err(Error::ResolutionMismatch(1, 2))));
        let c = TagStream::single_channel(2, 10, 0, &[1]).unwrap();
        assert!(matches!(cross_correlate(&c, &b, 0.003, 0.01), Err(Error::BinWidthNotMultiple { .. })));
    }

    #[test]
    fn normalize_and_sigma() {
        let mut h = CorrelationHistogram::empty(82_200, 200);
        h.counts.iter_mut().for_each(|c| *c = 4_400_000);
        let g = normalize(&h, 5000.0, 20000.0).unwrap();
        assert!(g.g2.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((g.sigma[0] - 4.767e-4).abs() < 1e-6);
        assert!(matches!(normalize(&h, 1e6, 2e6), Err(Error::EmptyPlateau { .. })));

        let mut doubled = h.clone();
        doubled.counts.iter_mut().for_each(|c| *c *= 2);
        assert_eq!(normalize(&doubled, 5000.0, 20000.0).unwrap().g2, g.g2);
    }

    #[test]
    fn flat_g2_has_no_peak() {
        let mut h = CorrelationHistogram::empty(82_200, 100);
        h.counts.iter_mut().for_each(|c| *c = 1000);
        let g = normalize(&h, 2000.0, 9000.0).unwrap();
        let p = peak_stats(&g, -1000.0, 1000.0).unwrap();
        assert_eq!((p.height_excess, p.area_excess_ps, p.significance), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_excess_keeps_sign() {
        let mut h = CorrelationHistogram::empty(1000, 50);
        h.counts.iter_mut().for_each(|c| *c = 10_000);
        h.counts[50] = 9_000;
        let g = normalize(&h, 10.0, 50.0).unwrap();
        let p = peak_stats(&g, -0.5, 0.5).unwrap();
        assert!(p.significance < -5.0, "{}", p.significance);
    }

    #[test]
    fn merge_of_separated_segments_equals_whole() {
        // two segments separated by a gap longer than max_lag
        let a1: Vec<u64> = (0..500).map(|i| i * 37 % 997 + 3 * i).collect::<Vec<_>>();
        let mut a1 = a1;
        a1.sort_unstable();
        a1.dedup();
        let b1: Vec<u64> = a1.iter().map(|t| t + 5).collect();
        let offset = 10_000u64;
        let a2: Vec<u64> = a1.iter().map(|t| t + offset).collect();
        let b2: Vec<u64> = b1.iter().map(|t| t + offset).collect();
        let whole_a = single(&[a1.clone(), a2].concat(), 20_000);
        let whole_b = single(&[b1.clone(), b2].concat(), 20_000);
        let seg_a = single(&a1, 20_000);
        let seg_b = single(&b1, 20_000);
        let lag = 0.05;
        let whole = cross_correlate(&whole_a, &whole_b, 0.001, lag).unwrap();
        let mut parts = cross_correlate(&seg_a, &seg_b, 0.001, lag).unwrap();
        let second = cross_correlate(&seg_a, &seg_b, 0.001, lag).unwrap();
        parts.merge(&second).unwrap();
        assert_eq!(whole.counts, parts.counts);
    }

    #[test]
    fn csv_round_trip() {
        let a = single(&[5, 9, 30, 31, 70], 100);
        let b = single(&[6, 20, 33, 69], 100);
        let h = cross_correlate(&a, &b, 0.003, 0.03).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        h.write_csv(&p).unwrap();
        let back = CorrelationHistogram::read_csv(&p).unwrap();
        assert_eq!(back.counts, h.counts);
        assert_eq!(back.bin_width_fs, h.bin_width_fs);
        assert!((back.rate_a - h.rate_a).abs() < 1e-6 * h.rate_a);
    }

    #[test]
    fn multichannel_records_are_all_used() {
        let s =
            TagStream::new(1, 100, vec![TagRecord { channel: 0, tick: 1 }, TagRecord { channel: 1, tick: 2 }]).unwrap();
        let h = cross_correlate(&s.channel(0), &s.channel(1), 0.001, 0.005).unwrap();
        assert_eq!(h.counts[h.half_bins + 1], 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn ticks() -> impl Strategy<Value = Vec<u64>> {
            prop::collection::btree_set(0u64..5000, 0..200).prop_map(|s| s.into_iter().collect())
        }

        proptest! {
            #[test]
            fn swapping_inputs_mirrors(a in ticks(), b in ticks(), w in (0u64..4).prop_map(|k| 2 * k + 1)) {
                let (sa, sb) = (single(&a, 5000), single(&b, 5000));
                let bw = w as f64 * 1e-3;
                let ab = cross_correlate(&sa, &sb, bw, 0.2).unwrap();
                let ba = cross_correlate(&sb, &sa, bw, 0.2).unwrap();
                prop_assert_eq!(ab.mirrored().counts, ba.counts);
            }

            #[test]
            fn sharding_is_bin_exact(a in ticks(), b in ticks(), shards in 1usize..9) {
                let (sa, sb) = (single(&a, 5000), single(&b, 5000));
                let one = cross_correlate(&sa, &sb, 0.004, 0.3).unwrap();
                let many = cross_correlate_sharded(&sa, &sb, 0.004, 0.3, shards).unwrap();
                prop_assert_eq!(one, many);
            }

            #[test]
            fn matches_brute_force(a in ticks(), b in ticks()) {
                let (sa, sb) = (single(&a, 5000), single(&b, 5000));
                let h = cross_correlate(&sa, &sb, 0.004, 0.1).unwrap();
                let mut brute = vec![0u64; h.len()];
                for &x in &a {
                    for &y in &b {
                        let d = y as i64 - x as i64;
                        let k = (d + 2).div_euclid(4);
                        if k.abs() <= h.half_bins as i64 {
                            brute[(k + h.half_bins as i64) as usize] += 1;
                        }
                    }
                }
                prop_assert_eq!(h.counts, brute);
            }
        }
    }
}
