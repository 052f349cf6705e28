//! Linear optics acting on photon streams, the calibration pair source and
//! the Michelson scan.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::field::{poisson_times, PhotonStream, SpectrumModel};
use crate::rng::{derive_seed, rng_from_seed};
use crate::units::{ps_to_fs, C_MM_PER_PS};
use crate::{Error, Result};

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(name, format!("must be in [0, 1], got {p}")));
    }
    Ok(())
}

/// Routes each photon independently to output A with probability
/// `transmittance`, otherwise to B.
pub fn beam_split(stream: &PhotonStream, transmittance: f64, seed: u64) -> Result<(PhotonStream, PhotonStream)> {
    check_probability("transmittance", transmittance)?;
    let mut rng = rng_from_seed(derive_seed(seed, "beam_split", 0));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &t in stream.arrivals() {
        if rng.random::<f64>() < transmittance {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let d = stream.duration_fs();
    Ok((PhotonStream::new(a, d)?, PhotonStream::new(b, d)?))
}

/// Bernoulli thinning with survival probability `efficiency`.
pub fn attenuate(stream: &PhotonStream, efficiency: f64, seed: u64) -> Result<PhotonStream> {
    check_probability("efficiency", efficiency)?;
    let mut rng = rng_from_seed(derive_seed(seed, "attenuate", 0));
    let kept = stream.arrivals().iter().copied().filter(|_| rng.random::<f64>() < efficiency).collect();
    PhotonStream::new(kept, stream.duration_fs())
}

/// Shifts every arrival by `delta_fs`; the observation window
/// `[0, duration]` moves to `[0, duration + delta]`.
///
/// Fails if a time would leave the 64-bit range or become negative.
pub fn delay_stream(stream: &PhotonStream, delta_fs: i64) -> Result<PhotonStream> {
    let duration = stream.duration_fs().checked_add(delta_fs).ok_or(Error::TimeOverflow)?;
    let shifted = stream
        .arrivals()
        .iter()
        .map(|&t| t.checked_add(delta_fs).filter(|&t| t >= 0))
        .collect::<Option<Vec<_>>>()
        .ok_or(Error::TimeOverflow)?;
    if duration < 0 {
        return Err(Error::TimeOverflow);
    }
    PhotonStream::new(shifted, duration)
}

/// Source of tightly time-correlated photon pairs.
///
/// Pair creation times form a Poisson process at `rate` (pairs/s); each
/// output receives one photon per pair, displaced from the creation time by
/// an independent uniform offset in `±pair_spread/2`. Photons displaced
/// outside `[0, duration)` are lost.
pub fn simulate_pair_source(
    rate: f64,
    pair_spread_ps: f64,
    duration_ps: f64,
    seed: u64,
) -> Result<(PhotonStream, PhotonStream)> {
    if !(pair_spread_ps >= 0.0) {
        return Err(Error::param("pair_spread", "must be >= 0"));
    }
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", "must be finite and >= 0"));
    }
    let duration_fs = ps_to_fs(duration_ps);
    if duration_fs < 0 {
        return Err(Error::param("duration", "must be >= 0"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "pairs", 0));
    let created = poisson_times(duration_fs, rate, &mut rng);
    if pair_spread_ps == 0.0 {
        return Ok((created.clone(), created));
    }
    let spread_fs = pair_spread_ps * 1e3;
    let mut offset = || ((rng.random::<f64>() - 0.5) * spread_fs).round() as i64;
    let (mut a, mut b) = (Vec::with_capacity(created.len()), Vec::with_capacity(created.len()));
    for &t in created.arrivals() {
        a.push(t + offset());
        b.push(t + offset());
    }
    a.retain(|&t| t < duration_fs);
    b.retain(|&t| t < duration_fs);
    Ok((PhotonStream::from_unsorted(a, duration_fs), PhotonStream::from_unsorted(b, duration_fs)))
}

/// Michelson scan parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub mirror_speed_mm_per_s: f64,
    pub scan_range_mm: f64,
    pub window_ms: f64,
    /// Counts per second not taking part in the interference.
    pub background_rate: f64,
    pub max_visibility: f64,
    /// Interfering count rate away from zero path difference.
    pub base_rate: f64,
}

impl ScanConfig {
    /// The scan used to characterize the 810 nm arm: 0.002 mm/s over 3 mm,
    /// 2 ms windows, 200 kHz, 90 % visibility, 5 kHz background.
    pub fn laboratory() -> Self {
        ScanConfig {
            mirror_speed_mm_per_s: 0.002,
            scan_range_mm: 3.0,
            window_ms: 2.0,
            background_rate: 5e3,
            max_visibility: 0.9,
            base_rate: 200e3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mirror_speed_mm_per_s", self.mirror_speed_mm_per_s),
            ("scan_range_mm", self.scan_range_mm),
            ("window_ms", self.window_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if !(self.background_rate >= 0.0) || !(self.base_rate >= 0.0) {
            return Err(Error::param("rate", "rates must be >= 0"));
        }
        check_probability("max_visibility", self.max_visibility)
    }

    pub fn window_s(&self) -> f64 {
        self.window_ms * 1e-3
    }

    /// Number of integration windows in the scan.
    pub fn window_count(&self) -> usize {
        (self.scan_range_mm / (self.mirror_speed_mm_per_s * self.window_s())).floor() as usize
    }

    /// Expected count rate at mirror displacement `x_mm` (path difference `2x`).
    pub fn expected_rate(&self, spectrum: &SpectrumModel, x_mm: f64) -> f64 {
        let tau_ps = 2.0 * x_mm / C_MM_PER_PS;
        let lambda_mm = spectrum.center_wavelength_nm * 1e-6;
        let fringe = (4.0 * PI * x_mm / lambda_mm).cos();
        self.base_rate * (1.0 + self.max_visibility * spectrum.g1_modulus(tau_ps) * fringe) + self.background_rate
    }
}

/// Windowed counts recorded while the mirror moves.
#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    /// Mirror displacement at each window centre, relative to zero path
    /// difference.
    pub positions_mm: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Interferogram {
    pub fn new(positions_mm: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if positions_mm.len() != counts.len() {
            return Err(Error::param("interferogram", "positions and counts differ in length"));
        }
        Ok(Interferogram { positions_mm, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Two-column CSV `position_mm,counts`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "position_mm,counts").map_err(io)?;
        for (x, c) in self.positions_mm.iter().zip(&self.counts) {
            writeln!(w, "{x:.9},{c}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, what: &str| Error::Csv { path: path.into(), reason: format!("line {line}: {what}") };
        let (mut xs, mut cs) = (Vec::new(), Vec::new());
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 && line.starts_with("position") || line.trim().is_empty() {
                continue;
            }
            let (x, c) = line.split_once(',').ok_or_else(|| bad(i + 1, "expected two columns"))?;
            xs.push(x.trim().parse().map_err(|_| bad(i + 1, "bad position"))?);
            cs.push(c.trim().parse().map_err(|_| bad(i + 1, "bad count"))?);
        }
        Interferogram::new(xs, cs)
    }
}

/// Simulates a mirror scan across zero path difference. Window counts are
/// Poisson around `expected_rate` evaluated at the window centre.
pub fn michelson_scan(spectrum: &SpectrumModel, scan: &ScanConfig, seed: u64) -> Result<Interferogram> {
    spectrum.validate()?;
    scan.validate()?;
    let n = scan.window_count();
    let step = scan.mirror_speed_mm_per_s * scan.window_s();
    let start = -scan.scan_range_mm / 2.0;
    let mut rng = rng_from_seed(derive_seed(seed, "michelson", 0));
    let mut positions = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for k in 0..n {
        let x = start + (k as f64 + 0.5) * step;
        let mean = scan.expected_rate(spectrum, x) * scan.window_s();
        let c = if mean > 0.0 { Poisson::new(mean).expect("finite mean").sample(&mut rng) as u64 } else { 0 };
        positions.push(x);
        counts.push(c);
    }
    Interferogram::new(positions, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::emit_coherent_stream;

    fn stream() -> PhotonStream {
        emit_coherent_stream(1e9, 1e7, 4).unwrap()
    }

    #[test]
    fn split_partitions_input() {
        let s = stream();
        let (a, b) = beam_split(&s, 0.5, 1).unwrap();
        assert_eq!(a.len() + b.len(), s.len());
        let mut merged = [a.arrivals(), b.arrivals()].concat();
        merged.sort_unstable();
        assert_eq!(merged, s.arrivals());
        let (a, b) = beam_split(&s, 1.0, 1).unwrap();
        assert_eq!(a, s);
        assert!(b.is_empty());
        assert!(beam_split(&s, 1.5, 1).is_err());
    }

    #[test]
    fn attenuation_limits() {
        let s = stream();
        assert_eq!(attenuate(&s, 1.0, 2).unwrap(), s);
        assert!(attenuate(&s, 0.0, 2).unwrap().is_empty());
        let q = attenuate(&s, 0.25, 2).unwrap();
        let expect = 0.25 * s.len() as f64;
        let sd = (s.len() as f64 * 0.25 * 0.75).sqrt();
        assert!((q.len() as f64 - expect).abs() < 5.0 * sd);
    }

    #[test]
    fn delay_is_invertible() {
        let s = stream();
        assert_eq!(delay_stream(&s, 0).unwrap(), s);
        let d = delay_stream(&s, 500_000_000).unwrap();
        assert_eq!(d.arrivals()[0], s.arrivals()[0] + 500_000_000);
        assert_eq!(delay_stream(&d, -500_000_000).unwrap(), s);
        assert!(matches!(delay_stream(&s, i64::MAX), Err(Error::TimeOverflow)));
        assert!(delay_stream(&s, -s.arrivals()[0] - 1).is_err());
    }

    #[test]
    fn pair_source_without_spread_is_identical() {
        let (a, b) = simulate_pair_source(1e6, 0.0, 1e9, 9).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn pair_source_count() {
        // 10⁵ pairs/s for 10 s: 10⁶ ± 3·10³
        let (a, b) = simulate_pair_source(1e5, 0.5, 1e13, 10).unwrap();
        assert!((a.len() as f64 - 1e6).abs() < 3e3, "{}", a.len());
        assert!(a.len().abs_diff(b.len()) <= 2);
    }

    #[test]
    fn fringe_period_is_half_wavelength() {
        let spectrum = SpectrumModel::gaussian(2.8).unwrap();
        let scan = ScanConfig { background_rate: 0.0, ..ScanConfig::laboratory() };
        // near zero delay |g1| ≈ 1: maxima at x = 0 and x = λ/2 = 405 nm
        let r0 = scan.expected_rate(&spectrum, 0.0);
        let r1 = scan.expected_rate(&spectrum, 405e-6);
        let rmin = scan.expected_rate(&spectrum, 202.5e-6);
        assert!((r0 - r1).abs() / r0 < 1e-3);
        let v = (r0 - rmin) / (r0 + rmin);
        assert!((v - 0.9).abs() < 0.02 * 0.9);
    }

    #[test]
    fn visibility_at_zero_delay_after_background_subtraction() {
        let spectrum = SpectrumModel::gaussian(2.8).unwrap();
        let scan = ScanConfig::laboratory();
        let bg = scan.background_rate;
        let hi = scan.expected_rate(&spectrum, 0.0) - bg;
        let lo = scan.expected_rate(&spectrum, 202.5e-6) - bg;
        assert!(((hi - lo) / (hi + lo) - 0.9).abs() < 0.02 * 0.9);
    }

    #[test]
    fn far_from_zero_delay_counts_are_flat() {
        let spectrum = SpectrumModel::gaussian(2.8).unwrap();
        let scan = ScanConfig { scan_range_mm: 0.01, ..ScanConfig::laboratory() };
        let x = 1.4;
        let expect = (scan.base_rate + scan.background_rate) * scan.window_s();
        for dx in [0.0, 1e-4, 2e-4] {
            assert!((scan.expected_rate(&spectrum, x + dx) * scan.window_s() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn interferogram_csv_round_trip() {
        let spectrum = SpectrumModel::gaussian(2.8).unwrap();
        let scan = ScanConfig { scan_range_mm: 0.004, ..ScanConfig::laboratory() };
        let ifg = michelson_scan(&spectrum, &scan, 1).unwrap();
        assert_eq!(ifg.len(), 1000);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ifg.csv");
        ifg.write_csv(&p).unwrap();
        let back = Interferogram::read_csv(&p).unwrap();
        assert_eq!(back.counts, ifg.counts);
        for (a, b) in back.positions_mm.iter().zip(&ifg.positions_mm) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
