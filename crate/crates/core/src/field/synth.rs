use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use super::SpectrumModel;
use super::SpectrumShape;
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::units::{fs_to_ps, ps_to_fs};
use crate::{Error, Result};

/// Kernel half-width in units of the Gaussian `g1` standard deviation.
const FIR_SUPPORT_SIGMAS: f64 = 4.5;

/// Sampled complex field envelope, `E(t_k)` at `t_k = k·dt`.
///
/// Thermal traces are circular complex Gaussian with `⟨|E|²⟩ = 1`; the field
/// is held constant over each sample interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrace {
    pub dt_fs: i64,
    pub samples: Vec<Complex64>,
    pub seed: u64,
}

impl FieldTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_fs(&self) -> i64 {
        self.dt_fs * self.samples.len() as i64
    }

    pub fn intensities(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|e| e.norm_sqr())
    }

    pub fn mean_intensity(&self) -> f64 {
        self.intensities().sum::<f64>() / self.len().max(1) as f64
    }

    /// `⟨I²⟩/⟨I⟩²`, the zero-delay intensity correlation of the trace.
    pub fn intensity_moment_ratio(&self) -> f64 {
        let n = self.len().max(1) as f64;
        let (s1, s2) = self.intensities().fold((0.0, 0.0), |(a, b), i| (a + i, b + i * i));
        (s2 / n) / (s1 / n).powi(2)
    }

    /// Sample variances of the real and imaginary parts.
    pub fn quadrature_variances(&self) -> (f64, f64) {
        let n = self.len().max(1) as f64;
        let (mr, mi) = self.samples.iter().fold((0.0, 0.0), |(a, b), e| (a + e.re, b + e.im));
        let (mr, mi) = (mr / n, mi / n);
        self.samples.iter().fold((0.0, 0.0), |(a, b), e| (a + (e.re - mr).powi(2) / n, b + (e.im - mi).powi(2) / n))
    }

    /// Empirical `|g1(k·dt)|` for `k = 0..=max_lag`.
    pub fn empirical_g1(&self, max_lag: usize) -> Vec<f64> {
        let s = &self.samples;
        let g0: f64 = s.iter().map(|e| e.norm_sqr()).sum::<f64>() / s.len() as f64;
        (0..=max_lag)
            .map(|k| {
                if k >= s.len() {
                    return 0.0;
                }
                let acc: Complex64 = s[k..].iter().zip(s).map(|(a, b)| a * b.conj()).sum();
                (acc / (s.len() - k) as f64).norm() / g0
            })
            .collect()
    }

    /// FWHM of the empirical `|g1|`, by linear interpolation of the first
    /// crossing of 1/2.
    pub fn empirical_g1_fwhm_ps(&self, max_lag: usize) -> Option<f64> {
        let g1 = self.empirical_g1(max_lag);
        let k = g1.iter().position(|&v| v < 0.5)?;
        if k == 0 {
            return None;
        }
        let (a, b) = (g1[k - 1], g1[k]);
        let x = (k - 1) as f64 + (a - 0.5) / (a - b);
        Some(2.0 * x * fs_to_ps(self.dt_fs))
    }
}

/// Linear filter that turns complex white noise into a field with the target
/// `|g1|`.
#[derive(Debug, Clone)]
pub enum FieldFilter {
    /// Symmetric moving average `E_n = Σ_j h_j w_{n-j}`, `j ∈ [-half, half]`,
    /// with `Σ h_j² = 1`.
    Fir { taps: Vec<f64>, half: usize },
    /// First-order recursion `E_n = a·E_{n-1} + b·w_n`, `b = √(1-a²)`.
    Ar1 { a: f64, b: f64 },
}

impl FieldFilter {
    pub fn for_spectrum(spectrum: &SpectrumModel, dt_fs: i64) -> Self {
        let dt_ps = fs_to_ps(dt_fs);
        let tc = spectrum.coherence_time_ps;
        match spectrum.shape {
            SpectrumShape::Gaussian => {
                // |g1| = exp(-τ²/2σ²) is the autocorrelation of h(t) ∝ exp(-t²/σ²)
                let sigma = tc / (8.0 * LN_2).sqrt();
                let half = (FIR_SUPPORT_SIGMAS * sigma / dt_ps).ceil() as usize;
                let mut taps: Vec<f64> = (-(half as i64)..=half as i64)
                    .map(|j| {
                        let t = j as f64 * dt_ps;
                        (-t * t / (sigma * sigma)).exp()
                    })
                    .collect();
                let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
                taps.iter_mut().for_each(|h| *h /= norm);
                FieldFilter::Fir { taps, half }
            }
            SpectrumShape::Lorentzian => {
                let t_decay = tc / (2.0 * LN_2);
                let a = (-dt_ps / t_decay).exp();
                FieldFilter::Ar1 { a, b: (1.0 - a * a).sqrt() }
            }
        }
    }

    /// Discrete field autocorrelation at a lag of `k` samples.
    pub fn autocorrelation(&self, k: usize) -> f64 {
        match self {
            FieldFilter::Fir { taps, .. } => taps.iter().zip(taps.iter().skip(k)).map(|(a, b)| a * b).sum(),
            FieldFilter::Ar1 { a, .. } => a.powi(k as i32),
        }
    }
}

pub(crate) fn complex_normal(rng: &mut Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Streaming generator of a stationary thermal field.
///
/// FIR filters are applied block-wise with overlap-save FFT convolution;
/// the recursive filter is run sample by sample.
pub struct ThermalFieldGenerator {
    rng: Rng,
    state: GenState,
}

enum GenState {
    Fir(FftConvolver),
    Ar1 { a: f64, b: f64, prev: Option<Complex64> },
}

struct FftConvolver {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
    overlap: usize,
    /// Last `overlap` noise samples from the previous block.
    history: Vec<Complex64>,
    scratch: Vec<Complex64>,
    ready: Vec<Complex64>,
    pos: usize,
}

impl FftConvolver {
    fn new(taps: &[f64], rng: &mut Rng) -> Self {
        let overlap = taps.len() - 1;
        let n = (4 * taps.len()).next_power_of_two().max(4096);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); n];
        for (k, &h) in taps.iter().enumerate() {
            kernel_hat[k] = Complex64::new(h / n as f64, 0.0);
        }
        fft.process(&mut kernel_hat);
        let history = (0..overlap).map(|_| complex_normal(rng)).collect();
        FftConvolver {
            fft,
            ifft,
            kernel_hat,
            overlap,
            history,
            scratch: vec![Complex64::new(0.0, 0.0); n],
            ready: Vec::new(),
            pos: 0,
        }
    }

    fn refill(&mut self, rng: &mut Rng) {
        let n = self.scratch.len();
        let fresh = n - self.overlap;
        self.scratch[..self.overlap].copy_from_slice(&self.history);
        for slot in &mut self.scratch[self.overlap..] {
            *slot = complex_normal(rng);
        }
        self.history.copy_from_slice(&self.scratch[fresh..]);
        self.fft.process(&mut self.scratch);
        for (x, h) in self.scratch.iter_mut().zip(&self.kernel_hat) {
            *x *= h;
        }
        self.ifft.process(&mut self.scratch);
        self.ready.clear();
        self.ready.extend_from_slice(&self.scratch[self.overlap..]);
        self.pos = 0;
    }
}

impl ThermalFieldGenerator {
    pub fn new(filter: &FieldFilter, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let state = match filter {
            FieldFilter::Fir { taps, .. } => GenState::Fir(FftConvolver::new(taps, &mut rng)),
            &FieldFilter::Ar1 { a, b } => GenState::Ar1 { a, b, prev: None },
        };
        ThermalFieldGenerator { rng, state }
    }

    pub fn fill(&mut self, out: &mut [Complex64]) {
        match &mut self.state {
            GenState::Fir(conv) => {
                let mut i = 0;
                while i < out.len() {
                    if conv.pos == conv.ready.len() {
                        conv.refill(&mut self.rng);
                    }
                    let take = (conv.ready.len() - conv.pos).min(out.len() - i);
                    out[i..i + take].copy_from_slice(&conv.ready[conv.pos..conv.pos + take]);
                    conv.pos += take;
                    i += take;
                }
            }
            GenState::Ar1 { a, b, prev } => {
                for slot in out.iter_mut() {
                    let w = complex_normal(&mut self.rng);
                    let e = match prev {
                        None => w,
                        Some(p) => *p * *a + w * *b,
                    };
                    *prev = Some(e);
                    *slot = e;
                }
            }
        }
    }
}

pub(crate) fn check_sampling(spectrum: &SpectrumModel, dt_ps: f64) -> Result<i64> {
    spectrum.validate()?;
    if !(dt_ps > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let limit = spectrum.coherence_time_ps / 10.0;
    if dt_ps > limit * (1.0 + 1e-12) {
        return Err(Error::Undersampled { dt_ps, limit_ps: limit });
    }
    let dt_fs = ps_to_fs(dt_ps);
    if dt_fs < 1 {
        return Err(Error::param("dt", "must be at least 1 fs"));
    }
    Ok(dt_fs)
}

/// Number of samples covering `duration_ps` at `dt_fs`.
pub(crate) fn sample_count(duration_ps: f64, dt_fs: i64) -> usize {
    (ps_to_fs(duration_ps) / dt_fs) as usize
}

/// Seed of the white-noise stream behind a field synthesized with `seed`.
pub(crate) fn field_seed(seed: u64) -> u64 {
    derive_seed(seed, "field", 0)
}

/// Circular complex Gaussian field with the `|g1|` of `spectrum` and unit
/// mean intensity.
///
/// Requires `dt ≤ τc/10` and `duration ≥ 100·τc`.
pub fn synthesize_thermal_field(
    spectrum: &SpectrumModel,
    duration_ps: f64,
    dt_ps: f64,
    seed: u64,
) -> Result<FieldTrace> {
    let dt_fs = check_sampling(spectrum, dt_ps)?;
    if !(duration_ps > 0.0) {
        return Err(Error::param("duration", "must be positive"));
    }
    if duration_ps < 100.0 * spectrum.coherence_time_ps {
        return Err(Error::param("duration", format!("{duration_ps} ps is shorter than 100 coherence times")));
    }
    let filter = FieldFilter::for_spectrum(spectrum, dt_fs);
    let mut gen = ThermalFieldGenerator::new(&filter, field_seed(seed));
    let mut samples = vec![Complex64::new(0.0, 0.0); sample_count(duration_ps, dt_fs)];
    gen.fill(&mut samples);
    Ok(FieldTrace { dt_fs, samples, seed })
}

/// Constant unit-amplitude field of an ideal single-mode laser.
pub fn synthesize_coherent_field(duration_ps: f64, dt_ps: f64) -> Result<FieldTrace> {
    if !(duration_ps > 0.0) {
        return Err(Error::param("duration", "must be positive"));
    }
    if !(dt_ps > 0.0) || ps_to_fs(dt_ps) < 1 {
        return Err(Error::param("dt", "must be at least 1 fs"));
    }
    let dt_fs = ps_to_fs(dt_ps);
    let n = sample_count(duration_ps, dt_fs);
    Ok(FieldTrace { dt_fs, samples: vec![Complex64::new(1.0, 0.0); n], seed: 0 })
}
