//! Prediction of the jitter-smeared bunching peak.
//!
//! When detector jitter is much wider than the coherence time, the bunching
//! peak keeps its area (the area of `|g1|²`) but takes the shape of the
//! jitter curve. Both areas are measured, so the prediction needs no
//! assumption about either shape:
//!
//! ```text
//! excess(τ) = (area |g1|² / area jitter) · jitter(τ - shift)
//! ```

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::correlator::{peak_stats, CorrelationHistogram, G2Estimate, PeakReport};
use crate::optics::Interferogram;
use crate::units::C_MM_PER_PS;
use crate::{Error, Result};

/// Relative uncertainty of the measured jitter-curve area.
pub const JITTER_AREA_REL_ERR: f64 = 0.03;
/// Relative uncertainty of the measured squared-envelope area.
pub const ENVELOPE_AREA_REL_ERR: f64 = 0.04;

/// Visibility envelope `|g1(τ)|` recovered from an interferogram.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCurve {
    pub delays_ps: Vec<f64>,
    /// Visibility divided by `vmax_raw`; equals 1 at the peak up to noise.
    pub values: Vec<f64>,
    pub vmax_raw: f64,
    /// Windows whose background-subtracted count went negative.
    pub clipped_windows: usize,
}

impl EnvelopeCurve {
    /// Full width at half maximum, interpolated linearly between samples on
    /// the first crossing either side of the maximum.
    pub fn fwhm_ps(&self) -> Result<f64> {
        fwhm(&self.delays_ps, &self.values)
    }
}

fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: x.len() });
    }
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let half = ymax / 2.0;
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    let right = (imax..y.len() - 1).find(|&i| y[i + 1] < half).map(|i| cross(i, i + 1));
    let left = (1..=imax).rev().find(|&i| y[i - 1] < half).map(|i| cross(i, i - 1));
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::param("envelope", "does not fall below half maximum on both sides")),
    }
}

/// Recovers `|g1(τ)|` from a mirror scan.
///
/// The scan is cut into consecutive blocks of `window_fringes` fringe
/// periods (`λ/2` of mirror travel each). In every block the
/// background-subtracted counts are least-squares fitted with
/// `B + a·cos(4πx/λ) + b·sin(4πx/λ)` and the visibility is
/// `(max - min)/(max + min) = √(a² + b²)/B` of the fitted fringe. The delay
/// of a block is `2x/c` at its centre. The peak visibility `vmax_raw` comes
/// from a quadratic fit over the top of the curve, so that it is not biased
/// upwards by picking the largest noisy point.
///
/// Integration windows that average over part of a fringe reduce every
/// visibility by the same factor, which the rescaling by `vmax_raw` removes.
pub fn extract_envelope(
    ifg: &Interferogram,
    background_rate: f64,
    window_s: f64,
    wavelength_nm: f64,
    window_fringes: usize,
) -> Result<EnvelopeCurve> {
    if window_fringes < 2 {
        return Err(Error::param("window_fringes", "must span at least 2 fringes"));
    }
    if !(wavelength_nm > 0.0) || !(window_s > 0.0) || !(background_rate >= 0.0) {
        return Err(Error::param("envelope", "wavelength and window must be positive, background >= 0"));
    }
    if ifg.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: ifg.len() });
    }
    let lambda_mm = wavelength_nm * 1e-6;
    let k = 4.0 * std::f64::consts::PI / lambda_mm;
    let block_mm = window_fringes as f64 * lambda_mm / 2.0;

    let background = background_rate * window_s;
    let mut clipped = 0usize;
    let signal: Vec<f64> = ifg
        .counts
        .iter()
        .map(|&c| {
            let v = c as f64 - background;
            if v < 0.0 {
                clipped += 1;
            }
            v.max(0.0)
        })
        .collect();

    let x = &ifg.positions_mm;
    let mut delays = Vec::new();
    let mut vis = Vec::new();
    let mut start = 0usize;
    while start < x.len() {
        let edge = x[start] + block_mm;
        let end = start + x[start..].partition_point(|&p| p < edge);
        if end - start >= 3 && x[end - 1] - x[start] >= 0.5 * block_mm {
            let centre = 0.5 * (x[start] + x[end - 1]);
            delays.push(2.0 * centre / C_MM_PER_PS);
            vis.push(fringe_visibility(&x[start..end], &signal[start..end], k, centre));
        }
        start = end.max(start + 1);
    }
    if delays.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: delays.len() });
    }
    let vmax = peak_visibility(&delays, &vis);
    if !(vmax > 1e-9) {
        return Err(Error::NoFringes(vmax));
    }
    Ok(EnvelopeCurve {
        delays_ps: delays,
        values: vis.iter().map(|v| v / vmax).collect(),
        vmax_raw: vmax,
        clipped_windows: clipped,
    })
}

/// Peak of the visibility curve from a quadratic least-squares fit over the
/// contiguous region around the maximum where a 9-point running mean stays
/// above 90 % of its own maximum. Falls back to that running-mean maximum
/// when the region is too small or the fit is not concave.
fn peak_visibility(delays: &[f64], vis: &[f64]) -> f64 {
    let n = vis.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(4), (i + 4).min(n - 1));
            vis[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let (imax, &m) = smooth.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    if !(m > 0.0) {
        return m;
    }
    let mut lo = imax;
    while lo > 0 && smooth[lo - 1] >= 0.9 * m {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && smooth[hi + 1] >= 0.9 * m {
        hi += 1;
    }
    if hi - lo < 8 {
        return m;
    }
    let t0 = delays[imax];
    let mut mat = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for i in lo..=hi {
        let t = delays[i] - t0;
        let f = [1.0, t, t * t];
        for a in 0..3 {
            r[a] += f[a] * vis[i];
            for b in 0..3 {
                mat[a][b] += f[a] * f[b];
            }
        }
    }
    match solve3(mat, r) {
        Some([c0, c1, c2]) if c2 < 0.0 => {
            let tv = (-c1 / (2.0 * c2)).clamp(delays[lo] - t0, delays[hi] - t0);
            c0 + c1 * tv + c2 * tv * tv
        }
        _ => m,
    }
}

fn fringe_visibility(x: &[f64], y: &[f64], k: f64, x0: f64) -> f64 {
    // normal equations for the basis (1, cos, sin), phases taken relative to
    // the block centre for conditioning
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let ph = k * (xi - x0);
        let f = [1.0, ph.cos(), ph.sin()];
        for i in 0..3 {
            r[i] += f[i] * yi;
            for j in 0..3 {
                m[i][j] += f[i] * f[j];
            }
        }
    }
    match solve3(m, r) {
        Some([b, a, s]) if b > 0.0 => (a * a + s * s).sqrt() / b,
        _ => 0.0,
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-12 * (1.0 + m[c][c].abs()) {
            return None;
        }
        m.swap(c, p);
        r.swap(c, p);
        for i in c + 1..3 {
            let f = m[i][c] / m[c][c];
            let pivot = m[c];
            for (x, y) in m[i][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * y;
            }
            r[i] -= f * r[c];
        }
    }
    let mut out = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| m[i][j] * out[j]).sum();
        out[i] = (r[i] - s) / m[i][i];
    }
    Some(out)
}

/// Trapezoidal `∫ values² dτ`, in ps.
pub fn squared_envelope_area(env: &EnvelopeCurve) -> Result<f64> {
    let n = env.delays_ps.len();
    if n < 3 || env.values.len() != n {
        return Err(Error::TooFewPoints { needed: 3, got: n.min(env.values.len()) });
    }
    Ok(env
        .delays_ps
        .windows(2)
        .zip(env.values.windows(2))
        .map(|(d, v)| 0.5 * (d[1] - d[0]) * (v[0] * v[0] + v[1] * v[1]))
        .sum())
}

/// Unit-peak coincidence profile of the detection system.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterCurve {
    /// Bin centres, equally spaced by `bin_width_ps`.
    pub delays_ps: Vec<f64>,
    pub values: Vec<f64>,
    /// `Σ values · bin_width`.
    pub area_ps: f64,
    pub bin_width_ps: f64,
}

impl JitterCurve {
    /// Scales an already background-free profile to unit peak.
    pub fn from_profile(delays_ps: Vec<f64>, profile: Vec<f64>) -> Result<Self> {
        if delays_ps.len() != profile.len() || delays_ps.len() < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: delays_ps.len().min(profile.len()) });
        }
        let bin_width_ps = delays_ps[1] - delays_ps[0];
        let peak = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0) || !(bin_width_ps > 0.0) {
            return Err(Error::ZeroPeak);
        }
        let values: Vec<f64> = profile.iter().map(|v| v / peak).collect();
        let area_ps = values.iter().sum::<f64>() * bin_width_ps;
        Ok(JitterCurve { delays_ps, values, area_ps, bin_width_ps })
    }

    /// Gaussian of the given FWHM sampled at bin centres `k·bin_width`,
    /// `|k| ≤ half_bins`.
    pub fn gaussian(fwhm_ps: f64, bin_width_ps: f64, half_bins: usize) -> Result<Self> {
        if !(fwhm_ps > 0.0) {
            return Err(Error::param("fwhm_ps", "must be positive"));
        }
        let s = fwhm_ps / (8.0 * std::f64::consts::LN_2).sqrt();
        let delays: Vec<f64> = (-(half_bins as i64)..=half_bins as i64).map(|k| k as f64 * bin_width_ps).collect();
        let values = delays.iter().map(|d| (-d * d / (2.0 * s * s)).exp()).collect();
        Self::from_profile(delays, values)
    }

    /// Linear interpolation; zero outside the sampled range.
    pub fn at(&self, delay_ps: f64) -> f64 {
        let u = (delay_ps - self.delays_ps[0]) / self.bin_width_ps;
        let n = self.values.len();
        if !(u > -1.0 && u < n as f64) {
            return 0.0;
        }
        let i = u.floor();
        let f = u - i;
        let i = i as i64;
        let get = |j: i64| if (0..n as i64).contains(&j) { self.values[j as usize] } else { 0.0 };
        (1.0 - f) * get(i) + f * get(i + 1)
    }
}

/// Jitter curve from a pair-source calibration histogram. The mean of the
/// plateau bins (`plateau_lo ≤ |Δt| ≤ plateau_hi`) is subtracted first.
pub fn normalize_jitter(hist: &CorrelationHistogram, plateau_lo_ps: f64, plateau_hi_ps: f64) -> Result<JitterCurve> {
    let delays = hist.delays_ps();
    let eps = 1e-9 * hist.bin_width_ps();
    let plateau: Vec<f64> = delays
        .iter()
        .zip(&hist.counts)
        .filter(|(d, _)| (plateau_lo_ps - eps..=plateau_hi_ps + eps).contains(&d.abs()))
        .map(|(_, &c)| c as f64)
        .collect();
    if plateau.is_empty() {
        return Err(Error::EmptyPlateau { lo_ps: plateau_lo_ps, hi_ps: plateau_hi_ps });
    }
    let level = plateau.iter().sum::<f64>() / plateau.len() as f64;
    JitterCurve::from_profile(delays, hist.counts.iter().map(|&c| c as f64 - level).collect())
}

/// Predicted excess `g2 - 1` on the jitter curve's delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedPeak {
    pub delays_ps: Vec<f64>,
    pub excess: Vec<f64>,
    /// `g1sq_area / jitter.area_ps`.
    pub height: f64,
    /// `Σ excess · bin_width`.
    pub area_ps: f64,
    pub bin_width_ps: f64,
    pub shift_ps: f64,
    /// Set when `|shift|` exceeds one bin of the jitter curve.
    pub shift_exceeds_resolution: bool,
}

impl PredictedPeak {
    pub fn excess_at(&self, delay_ps: f64) -> f64 {
        let u = (delay_ps - self.delays_ps[0]) / self.bin_width_ps;
        let i = u.round();
        if (u - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.excess.len() {
            return self.excess[i as usize];
        }
        let n = self.excess.len() as i64;
        let fl = u.floor();
        let f = u - fl;
        let get = |j: i64| if (0..n).contains(&j) { self.excess[j as usize] } else { 0.0 };
        (1.0 - f) * get(fl as i64) + f * get(fl as i64 + 1)
    }

    /// Relative uncertainty of the predicted height from the two area
    /// uncertainties added in quadrature.
    pub fn relative_uncertainty(&self) -> f64 {
        JITTER_AREA_REL_ERR.hypot(ENVELOPE_AREA_REL_ERR)
    }

    /// `delay_ps,excess,g2` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "# height={:e}", self.height).map_err(io)?;
        writeln!(w, "# shift_ps={}", self.shift_ps).map_err(io)?;
        writeln!(w, "delay_ps,excess,g2").map_err(io)?;
        for (d, e) in self.delays_ps.iter().zip(&self.excess) {
            writeln!(w, "{d:.3},{e:.9e},{:.9}", 1.0 + e).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads the CSV written by [`PredictedPeak::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::Csv { path: path.into(), reason };
        let (mut delays, mut excess) = (Vec::new(), Vec::new());
        let (mut height, mut shift_ps) = (None, 0.0);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(kv) = line.strip_prefix('#') {
                match kv.trim().split_once('=') {
                    Some(("height", v)) => height = v.trim().parse().ok(),
                    Some(("shift_ps", v)) => shift_ps = v.trim().parse().unwrap_or(0.0),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line.starts_with("delay") {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |what: &str| -> Result<f64> {
                cols.next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| bad(format!("line {}: bad {what}", i + 1)))
            };
            delays.push(next("delay")?);
            excess.push(next("excess")?);
        }
        if delays.len() < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: delays.len() });
        }
        let bin_width_ps = delays[1] - delays[0];
        let area_ps = excess.iter().sum::<f64>() * bin_width_ps;
        let height = height.unwrap_or_else(|| excess.iter().copied().fold(0.0, f64::max));
        Ok(PredictedPeak {
            delays_ps: delays,
            excess,
            height,
            area_ps,
            bin_width_ps,
            shift_ps,
            shift_exceeds_resolution: shift_ps.abs() > bin_width_ps,
        })
    }
}

/// Rescales the jitter curve to an area of `g1sq_area_ps`, shifted by
/// `shift_ps`. The shift never enters significance estimates; shifts larger
/// than one bin are allowed but flagged.
pub fn predict_smeared_peak(jitter: &JitterCurve, g1sq_area_ps: f64, shift_ps: f64) -> Result<PredictedPeak> {
    if !(g1sq_area_ps > 0.0) || !(jitter.area_ps > 0.0) {
        return Err(Error::param("area", "areas must be positive"));
    }
    let height = g1sq_area_ps / jitter.area_ps;
    let excess: Vec<f64> = if shift_ps == 0.0 {
        jitter.values.iter().map(|v| height * v).collect()
    } else {
        jitter.delays_ps.iter().map(|d| height * jitter.at(d - shift_ps)).collect()
    };
    let area_ps = excess.iter().sum::<f64>() * jitter.bin_width_ps;
    Ok(PredictedPeak {
        delays_ps: jitter.delays_ps.clone(),
        excess,
        height,
        area_ps,
        bin_width_ps: jitter.bin_width_ps,
        shift_ps,
        shift_exceeds_resolution: shift_ps.abs() > jitter.bin_width_ps,
    })
}

/// Weighted least-squares scale of the predicted shape against a measured
/// `g2`, over the bins of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateFit {
    /// Measured / predicted.
    pub scale: f64,
    pub scale_sigma: f64,
    /// `scale · predicted height`.
    pub height: f64,
    pub height_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
}

pub fn template_fit(g2: &G2Estimate, pred: &PredictedPeak, lo_ps: f64, hi_ps: f64) -> Result<TemplateFit> {
    let range = g2.window(lo_ps, hi_ps);
    if range.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: range.len() });
    }
    let (mut sty, mut stt) = (0.0, 0.0);
    for i in range.clone() {
        let t = pred.excess_at(g2.delays_ps[i]);
        let w = 1.0 / g2.sigma[i].powi(2);
        sty += w * t * (g2.g2[i] - 1.0);
        stt += w * t * t;
    }
    if !(stt > 0.0) {
        return Err(Error::ZeroPeak);
    }
    let scale = sty / stt;
    let chi2 =
        range.clone().map(|i| ((g2.g2[i] - 1.0 - scale * pred.excess_at(g2.delays_ps[i])) / g2.sigma[i]).powi(2)).sum();
    let scale_sigma = stt.sqrt().recip();
    Ok(TemplateFit {
        scale,
        scale_sigma,
        height: scale * pred.height,
        height_sigma: scale_sigma * pred.height,
        chi2,
        dof: range.len() - 1,
    })
}

/// Measured peak against the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub peak: PeakReport,
    pub fit: TemplateFit,
    pub predicted_height: f64,
    pub predicted_area_ps: f64,
    /// `(delay_ps, (measured - predicted)/σ)` per bin of the window.
    pub residuals: Vec<(f64, f64)>,
}

impl Comparison {
    pub fn height_rel_dev(&self) -> f64 {
        self.fit.height / self.predicted_height - 1.0
    }

    pub fn area_rel_dev(&self) -> f64 {
        self.peak.area_excess_ps / self.predicted_area_ps - 1.0
    }

    /// `key = value` report, residuals listed last.
    pub fn to_report(&self) -> String {
        let mut s = String::new();
        let p = &self.peak;
        let _ = writeln!(s, "predicted_height = {:.6e}", self.predicted_height);
        let _ = writeln!(s, "predicted_area_ps = {:.6}", self.predicted_area_ps);
        let _ = writeln!(s, "prediction_rel_uncertainty = {:.4}", JITTER_AREA_REL_ERR.hypot(ENVELOPE_AREA_REL_ERR));
        let _ = writeln!(s, "measured_height_fit = {:.6e}", self.fit.height);
        let _ = writeln!(s, "measured_height_fit_sigma = {:.6e}", self.fit.height_sigma);
        let _ = writeln!(s, "measured_height_max_bin = {:.6e}", p.height_excess);
        let _ = writeln!(s, "measured_area_ps = {:.6}", p.area_excess_ps);
        let _ = writeln!(s, "centroid_ps = {:.3}", p.centroid_ps);
        let _ = writeln!(s, "significance = {:.3}", p.significance);
        let _ = writeln!(s, "height_rel_dev = {:+.4}", self.height_rel_dev());
        let _ = writeln!(s, "area_rel_dev = {:+.4}", self.area_rel_dev());
        let _ = writeln!(s, "fit_chi2 = {:.3}", self.fit.chi2);
        let _ = writeln!(s, "fit_dof = {}", self.fit.dof);
        let _ = writeln!(s, "# residuals: delay_ps, (measured - predicted)/sigma");
        for (d, r) in &self.residuals {
            let _ = writeln!(s, "residual {d:.3} {r:+.3}");
        }
        s
    }
}

pub fn compare(g2: &G2Estimate, pred: &PredictedPeak, lo_ps: f64, hi_ps: f64) -> Result<Comparison> {
    let peak = peak_stats(g2, lo_ps, hi_ps)?;
    let fit = template_fit(g2, pred, lo_ps, hi_ps)?;
    let residuals = g2
        .window(lo_ps, hi_ps)
        .map(|i| {
            let d = g2.delays_ps[i];
            (d, (g2.g2[i] - 1.0 - pred.excess_at(d)) / g2.sigma[i])
        })
        .collect();
    Ok(Comparison { peak, fit, predicted_height: pred.height, predicted_area_ps: pred.area_ps, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpectrumModel;
    use crate::optics::{michelson_scan, ScanConfig};

    fn synthetic_ifg(vis: f64, env: impl Fn(f64) -> f64, bg: f64) -> Interferogram {
        let lambda_mm = 810e-6;
        let xs: Vec<f64> = (0..40_000).map(|i| -0.08 + i as f64 * 4e-6).collect();
        let counts = xs
            .iter()
            .map(|&x| {
                let tau = 2.0 * x / C_MM_PER_PS;
                let r = 400.0 * (1.0 + vis * env(tau) * (4.0 * std::f64::consts::PI * x / lambda_mm).cos()) + bg;
                r.round() as u64
            })
            .collect();
        Interferogram::new(xs, counts).unwrap()
    }

    #[test]
    fn pure_sinusoid_gives_flat_envelope() {
        let ifg = synthetic_ifg(0.9, |_| 1.0, 0.0);
        let env = extract_envelope(&ifg, 0.0, 2e-3, 810.0, 2).unwrap();
        assert!((env.vmax_raw - 0.9).abs() < 0.01, "{}", env.vmax_raw);
        assert!(env.values.iter().all(|&v| (v - 1.0).abs() < 0.02));
    }

    #[test]
    fn background_is_subtracted() {
        let ifg = synthetic_ifg(0.9, |_| 1.0, 10.0);
        let env = extract_envelope(&ifg, 5e3, 2e-3, 810.0, 2).unwrap();
        assert!((env.vmax_raw - 0.9).abs() < 0.01);
        assert_eq!(env.clipped_windows, 0);
    }

    #[test]
    fn constant_intensity_has_no_fringes() {
        let ifg = Interferogram::new((0..1000).map(|i| i as f64 * 4e-6).collect(), vec![400; 1000]).unwrap();
        assert!(matches!(extract_envelope(&ifg, 0.0, 2e-3, 810.0, 2), Err(Error::NoFringes(_))));
    }

    #[test]
    fn oversubtracted_windows_are_clipped() {
        let ifg = Interferogram::new((0..1000).map(|i| i as f64 * 4e-6).collect(), vec![5; 1000]).unwrap();
        let r = extract_envelope(&ifg, 5e3, 2e-3, 810.0, 2);
        assert!(matches!(r, Err(Error::NoFringes(_))));
    }

    #[test]
    fn gaussian_envelope_closed_loop() {
        let s = SpectrumModel::gaussian(2.8).unwrap();
        let ifg = michelson_scan(&s, &ScanConfig::laboratory(), 11).unwrap();
        let env = extract_envelope(&ifg, 5e3, 2e-3, 810.0, 2).unwrap();
        let fwhm = env.fwhm_ps().unwrap();
        assert!((fwhm / 2.8 - 1.0).abs() < 0.1, "fwhm {fwhm}");
        let area = squared_envelope_area(&env).unwrap();
        assert!((area / s.g1_squared_area_ps() - 1.0).abs() < 0.1, "area {area}");
        assert!((env.vmax_raw - 0.9 * 200.0 / 200.0).abs() < 0.03, "vmax {}", env.vmax_raw);
    }

    #[test]
    fn squared_area_of_rectangle_and_gaussian() {
        let delays: Vec<f64> = (0..=100).map(|i| i as f64 * 0.5).collect();
        let env =
            EnvelopeCurve { values: vec![1.0; delays.len()], delays_ps: delays, vmax_raw: 1.0, clipped_windows: 0 };
        assert!((squared_envelope_area(&env).unwrap() - 50.0).abs() < 1e-12);

        let s = SpectrumModel::gaussian(2.8).unwrap();
        let delays: Vec<f64> = (-2000..=2000).map(|i| i as f64 * 0.005).collect();
        let values = delays.iter().map(|&d| s.g1_modulus(d)).collect();
        let env = EnvelopeCurve { delays_ps: delays, values, vmax_raw: 1.0, clipped_windows: 0 };
        let area = squared_envelope_area(&env).unwrap();
        let oracle = 2.8 * (std::f64::consts::PI / (8.0 * std::f64::consts::LN_2)).sqrt();
        assert!((area / oracle - 1.0).abs() < 0.01);
        assert!((area - 2.11).abs() < 0.01);

        let short =
            EnvelopeCurve { delays_ps: vec![0.0, 1.0], values: vec![1.0, 1.0], vmax_raw: 1.0, clipped_windows: 0 };
        assert!(matches!(squared_envelope_area(&short), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn jitter_areas() {
        let g = JitterCurve::gaussian(640.0, 1.0, 3000).unwrap();
        let oracle = 640.0 * (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt();
        assert!((g.area_ps - oracle).abs() < 0.01 * oracle);
        assert!((g.area_ps - 681.0).abs() < 1.0);

        let delays: Vec<f64> = (-50..=50).map(|i| i as f64 * 10.0).collect();
        let rect = delays.iter().map(|&d| if (-50.0..50.0).contains(&d) { 7.0 } else { 0.0 }).collect();
        let r = JitterCurve::from_profile(delays, rect).unwrap();
        assert_eq!(r.area_ps, 100.0);
        assert_eq!(r.values.iter().copied().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn jitter_from_histogram_subtracts_plateau() {
        let mut h = CorrelationHistogram::empty(82_200, 100);
        for (i, c) in h.counts.iter_mut().enumerate() {
            let d = (i as f64 - 100.0) * 82.2;
            *c = 1000 + (5000.0 * (-d * d / (2.0 * 300.0f64.powi(2))).exp()).round() as u64;
        }
        let j = normalize_jitter(&h, 3000.0, 8000.0).unwrap();
        assert_eq!(j.values[100], 1.0);
        let oracle = 300.0 * (2.0 * std::f64::consts::PI).sqrt();
        assert!((j.area_ps / oracle - 1.0).abs() < 0.01);

        let flat = CorrelationHistogram::empty(82_200, 100);
        assert!(matches!(normalize_jitter(&flat, 3000.0, 8000.0), Err(Error::ZeroPeak)));
    }

    #[test]
    fn prediction_heights() {
        let delays: Vec<f64> = (-20..=20).map(|i| i as f64 * 82.2).collect();
        let mut j = JitterCurve::from_profile(delays.clone(), vec![1.0; 41]).unwrap();
        j.area_ps = 611.0;
        let p = predict_smeared_peak(&j, 2.17, 0.0).unwrap();
        assert_eq!(format!("{:.2e}", p.height), "3.55e-3");

        let g = JitterCurve::gaussian(200.0, 8.22, 200).unwrap();
        let full = predict_smeared_peak(&g, g.area_ps, 0.0).unwrap();
        assert_eq!(full.height, 1.0);
        let desk = predict_smeared_peak(&g, SpectrumModel::gaussian(50.0).unwrap().g1_squared_area_ps(), 0.0).unwrap();
        assert!((desk.height - 0.177).abs() < 0.001, "{}", desk.height);
        assert!((p.relative_uncertainty() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn shifted_prediction_conserves_area() {
        let g = JitterCurve::gaussian(640.0, 82.2, 60).unwrap();
        for shift in [0.0, 50.0, -30.0, 200.0] {
            let p = predict_smeared_peak(&g, 2.17, shift).unwrap();
            assert!((p.area_ps / 2.17 - 1.0).abs() < 1e-12, "shift {shift}");
            assert_eq!(p.shift_exceeds_resolution, shift.abs() > 82.2);
        }
        let p = predict_smeared_peak(&g, 2.17, 50.0).unwrap();
        let centroid: f64 =
            p.delays_ps.iter().zip(&p.excess).map(|(d, e)| d * e).sum::<f64>() / p.excess.iter().sum::<f64>();
        assert!((centroid - 50.0).abs() < 1e-6);
    }

    #[test]
    fn prediction_csv_round_trip() {
        let g = JitterCurve::gaussian(640.0, 82.2, 30).unwrap();
        let p = predict_smeared_peak(&g, 2.17, 20.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.write_csv(&path).unwrap();
        let back = PredictedPeak::read_csv(&path).unwrap();
        assert_eq!(back.height, p.height);
        assert_eq!(back.shift_ps, 20.0);
        assert!((back.area_ps / p.area_ps - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prediction_ignores_jitter_scale() {
        let delays: Vec<f64> = (-30..=30).map(|i| i as f64 * 82.2).collect();
        let prof: Vec<f64> = delays.iter().map(|d| (-(d / 250.0f64).powi(2)).exp()).collect();
        let a = JitterCurve::from_profile(delays.clone(), prof.clone()).unwrap();
        let b = JitterCurve::from_profile(delays.clone(), prof.iter().map(|v| v * 4.0).collect()).unwrap();
        let pa = predict_smeared_peak(&a, 2.17, 0.0).unwrap();
        assert_eq!(pa, predict_smeared_peak(&b, 2.17, 0.0).unwrap());

        let c = JitterCurve::from_profile(delays, prof.iter().map(|v| v * 37.5).collect()).unwrap();
        let pc = predict_smeared_peak(&c, 2.17, 0.0).unwrap();
        assert!(pa.excess.iter().zip(&pc.excess).all(|(x, y)| (x - y).abs() <= 1e-15 * x.abs()));
    }

    #[test]
    fn template_fit_recovers_scale() {
        let g = JitterCurve::gaussian(200.0, 82.2, 100).unwrap();
        let pred = predict_smeared_peak(&g, 37.6, 0.0).unwrap();
        let est = G2Estimate {
            delays_ps: pred.delays_ps.clone(),
            g2: pred.excess.iter().map(|e| 1.0 + 1.1 * e).collect(),
            sigma: vec![1e-3; pred.excess.len()],
            plateau_mean: 1e6,
            bin_width_ps: 82.2,
        };
        let cmp = compare(&est, &pred, -1000.0, 1000.0).unwrap();
        assert!((cmp.fit.scale - 1.1).abs() < 1e-12);
        assert!((cmp.height_rel_dev() - 0.1).abs() < 1e-9);
        assert!(cmp.to_report().contains("significance"));
    }
}
