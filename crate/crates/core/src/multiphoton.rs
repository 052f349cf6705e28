//! Photon-number and polarization structure of the two-mode squeezed state.
//!
//! The state produced by a cw pump with parameter `η` is
//! `Σ_n c_n |n⟩_s |n⟩_i` with `c_n = sech|η| · (η/|η| · tanh|η|)ⁿ`. Tracing
//! out either arm leaves the thermal distribution with `ν = sinh²|η|`.

use std::fmt::{self, Write as _};

use num_complex::Complex64;
use num_rational::Rational64;

use crate::field::ThermalDistribution;
use crate::{Error, Result};

/// Tail probability left out by [`FockExpansion::adaptive`].
pub const TRUNCATION_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FockExpansion {
    pub eta: Complex64,
    /// `c_0 ..= c_{n_max}`.
    pub amplitudes: Vec<Complex64>,
}

/// Amplitudes `c_0 ..= c_{n_max}`. For `η = 0` the state is the vacuum.
pub fn fock_amplitudes(eta: Complex64, n_max: usize) -> FockExpansion {
    let r = eta.norm();
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_max + 1];
    if r == 0.0 {
        amplitudes[0] = Complex64::new(1.0, 0.0);
    } else {
        let ratio = eta / r * r.tanh();
        let mut c = Complex64::new(1.0 / r.cosh(), 0.0);
        for a in amplitudes.iter_mut() {
            *a = c;
            c *= ratio;
        }
    }
    FockExpansion { eta, amplitudes }
}

/// Smallest `n_max` whose omitted tail `tanh^(2(n_max+1))|η|` is below
/// [`TRUNCATION_TAIL`].
pub fn adaptive_n_max(eta: Complex64) -> usize {
    let t = eta.norm().tanh();
    if t == 0.0 {
        return 0;
    }
    let n = (TRUNCATION_TAIL.ln() / (2.0 * t.ln())).ceil() as usize;
    n.saturating_sub(1).max(1)
}

impl FockExpansion {
    pub fn adaptive(eta: Complex64) -> Self {
        fock_amplitudes(eta, adaptive_n_max(eta))
    }

    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    /// Factorial moment `⟨n(n-1)…(n-k+1)⟩` of the truncated distribution.
    pub fn factorial_moment(&self, k: u32) -> f64 {
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(n, p)| p * (0..k).map(|j| n as f64 - j as f64).product::<f64>())
            .sum()
    }
}

/// Photon-number distribution of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    /// `sinh²|η|`.
    pub nu: f64,
    /// `P_n = |c_n|²`.
    pub probabilities: Vec<f64>,
}

impl Marginal {
    /// Largest `|P_n - νⁿ/(ν+1)ⁿ⁺¹|` over the truncated range.
    pub fn thermal_deviation(&self) -> f64 {
        let thermal = ThermalDistribution::new(self.nu).expect("nu >= 0");
        self.probabilities.iter().enumerate().map(|(n, p)| (p - thermal.pn(n as u32)).abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

pub fn marginal_distribution(eta: Complex64, n_max: usize) -> Marginal {
    Marginal { nu: eta.norm().sinh().powi(2), probabilities: fock_amplitudes(eta, n_max).probabilities() }
}

/// A real number `±√q` with rational `q ≥ 0`, enough to write the
/// four-photon coefficients exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Surd {
    pub negative: bool,
    /// The square of the value.
    pub square: Rational64,
}

impl Surd {
    pub fn rational(num: i64, den: i64) -> Self {
        let r = Rational64::new(num, den);
        Surd { negative: r < Rational64::from_integer(0), square: r * r }
    }

    /// `sign · √(num/den)`.
    pub fn sqrt(negative: bool, num: i64, den: i64) -> Self {
        Surd { negative, square: Rational64::new(num, den) }
    }

    pub fn to_f64(self) -> f64 {
        let v = (*self.square.numer() as f64 / *self.square.denom() as f64).sqrt();
        if self.negative {
            -v
        } else {
            v
        }
    }
}

impl fmt::Display for Surd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}√({})", if self.negative { "-" } else { "+" }, self.square)
    }
}

/// Signal ⊗ idler polarization outcomes of two pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourPhotonOutcome {
    /// `|2H⟩_s |2V⟩_i`
    TwoHTwoV,
    /// `|2V⟩_s |2H⟩_i`
    TwoVTwoH,
    /// `|HV⟩_s |VH⟩_i`
    HvVh,
}

impl FourPhotonOutcome {
    pub const ALL: [FourPhotonOutcome; 3] = [Self::TwoHTwoV, Self::TwoVTwoH, Self::HvVh];

    /// Both signal photons share a polarization.
    pub fn signal_same(self) -> bool {
        !matches!(self, Self::HvVh)
    }
}

/// Four-photon polarization state in the basis [`FourPhotonOutcome::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourPhotonState {
    pub amplitudes: [Surd; 3],
}

impl FourPhotonState {
    /// Two pairs in the same temporal mode: `(1, 1, -1)/√3`.
    pub fn twin() -> Self {
        FourPhotonState { amplitudes: [Surd::sqrt(false, 1, 3), Surd::sqrt(false, 1, 3), Surd::sqrt(true, 1, 3)] }
    }

    /// Two pairs in distinguishable temporal modes: `(1/2, 1/2, -√2/2)`.
    pub fn sister() -> Self {
        FourPhotonState { amplitudes: [Surd::rational(1, 2), Surd::rational(1, 2), Surd::sqrt(true, 1, 2)] }
    }

    pub fn norm(&self) -> Rational64 {
        self.amplitudes.iter().map(|a| a.square).sum()
    }
}

/// Exact probability that both signal photons carry the same polarization.
pub fn same_polarization_probability(state: &FourPhotonState) -> Result<Rational64> {
    let norm = state.norm();
    if norm != Rational64::from_integer(1) {
        return Err(Error::Unnormalized(norm.to_string()));
    }
    Ok(FourPhotonOutcome::ALL
        .iter()
        .zip(&state.amplitudes)
        .filter(|(o, _)| o.signal_same())
        .map(|(_, a)| a.square)
        .sum())
}

/// Same-polarization probability for two signal photons polarized
/// independently and uniformly, by enumeration.
pub fn uncorrelated_same_polarization() -> Rational64 {
    let pols = [0u8, 1];
    let mut same = 0;
    let mut total = 0;
    for a in pols {
        for b in pols {
            total += 1;
            same += (a == b) as i64;
        }
    }
    Rational64::new(same, total)
}

/// Plain-text summary for a pump parameter.
pub fn report(eta: Complex64) -> String {
    let m = marginal_distribution(eta, adaptive_n_max(eta).max(5));
    let mut s = String::new();
    let _ = writeln!(s, "eta = {} {:+}i", eta.re, eta.im);
    let _ = writeln!(s, "nu = {:.12}", m.nu);
    for (n, p) in m.probabilities.iter().take(6).enumerate() {
        let _ = writeln!(s, "P{n} = {p:.12e}");
    }
    let _ = writeln!(s, "thermal_max_deviation = {:.3e}", m.thermal_deviation());
    for (name, st) in [("twin", FourPhotonState::twin()), ("sister", FourPhotonState::sister())] {
        let p = same_polarization_probability(&st).expect("normalized");
        let _ = writeln!(s, "{name}_same_polarization = {p}");
    }
    let _ = writeln!(s, "uncorrelated_same_polarization = {}", uncorrelated_same_polarization());
    s
}
