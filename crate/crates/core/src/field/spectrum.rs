use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumShape {
    /// Gaussian spectrum, Gaussian `|g1(τ)|`.
    Gaussian,
    /// Lorentzian spectrum, exponential `|g1(τ)|`.
    Lorentzian,
}

/// Spectral model of a quasi-monochromatic field.
///
/// `coherence_time_ps` is the FWHM of `|g1(τ)|`, for both shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumModel {
    pub shape: SpectrumShape,
    pub coherence_time_ps: f64,
    pub center_wavelength_nm: f64,
}

impl SpectrumModel {
    pub fn new(shape: SpectrumShape, coherence_time_ps: f64, center_wavelength_nm: f64) -> Result<Self> {
        let s = SpectrumModel { shape, coherence_time_ps, center_wavelength_nm };
        s.validate()?;
        Ok(s)
    }

    pub fn gaussian(coherence_time_ps: f64) -> Result<Self> {
        Self::new(SpectrumShape::Gaussian, coherence_time_ps, 810.0)
    }

    pub fn lorentzian(coherence_time_ps: f64) -> Result<Self> {
        Self::new(SpectrumShape::Lorentzian, coherence_time_ps, 810.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coherence_time_ps > 0.0 && self.coherence_time_ps.is_finite()) {
            return Err(Error::param("coherence_time_ps", "must be positive"));
        }
        if !(self.center_wavelength_nm > 0.0 && self.center_wavelength_nm.is_finite()) {
            return Err(Error::param("center_wavelength_nm", "must be positive"));
        }
        Ok(())
    }

    /// `|g1(τ)|` (carrier removed).
    pub fn g1_modulus(&self, tau_ps: f64) -> f64 {
        let tc = self.coherence_time_ps;
        match self.shape {
            SpectrumShape::Gaussian => (-4.0 * LN_2 * tau_ps * tau_ps / (tc * tc)).exp(),
            SpectrumShape::Lorentzian => (-2.0 * LN_2 * tau_ps.abs() / tc).exp(),
        }
    }

    /// Closed-form `∫|g1(τ)|² dτ` in ps.
    pub fn g1_squared_area_ps(&self) -> f64 {
        let tc = self.coherence_time_ps;
        match self.shape {
            SpectrumShape::Gaussian => tc * (PI / (8.0 * LN_2)).sqrt(),
            SpectrumShape::Lorentzian => tc / (2.0 * LN_2),
        }
    }
}

/// Normalized first-order correlation envelope `g1(τ)`.
pub fn analytic_g1(spectrum: &SpectrumModel, tau_ps: f64) -> Complex64 {
    Complex64::new(spectrum.g1_modulus(tau_ps), 0.0)
}

/// `g2(τ) = 1 + |g1(τ)|²` for chaotic light.
pub fn analytic_g2(spectrum: &SpectrumModel, tau_ps: f64) -> f64 {
    1.0 + analytic_g1(spectrum, tau_ps).norm_sqr()
}

/// Bose–Einstein photon-number distribution with mean `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalDistribution {
    nu: f64,
}

impl ThermalDistribution {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(Error::param("nu", "mean photon number must be finite and >= 0"));
        }
        Ok(ThermalDistribution { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn pn(&self, n: u32) -> f64 {
        let nu = self.nu;
        if nu == 0.0 {
            return if n == 0 { 1.0 } else { 0.0 };
        }
        // ν^n / (ν+1)^(n+1), written to stay finite for large n
        let ratio = nu / (nu + 1.0);
        ratio.powi(n as i32) / (nu + 1.0)
    }

    /// Smallest `n_max` such that `P(n > n_max) < tail`.
    pub fn truncation(&self, tail: f64) -> u32 {
        if self.nu == 0.0 {
            return 0;
        }
        // P(n > N) = (ν/(ν+1))^(N+1)
        let ratio = self.nu / (self.nu + 1.0);
        let n = (tail.ln() / ratio.ln()).ceil() - 1.0;
        n.max(0.0) as u32
    }

    /// `P_0 .. P_{n_max}`.
    pub fn probabilities(&self, n_max: u32) -> Vec<f64> {
        (0..=n_max).map(|n| self.pn(n)).collect()
    }
}

/// `P_n = ν^n / (ν+1)^(n+1)`; negative `n` is rejected.
pub fn thermal_pn(dist: &ThermalDistribution, n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::param("n", format!("photon number must be >= 0, got {n}")));
    }
    Ok(dist.pn(u32::try_from(n).unwrap_or(u32::MAX)))
}
