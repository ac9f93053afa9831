//! Multimode two-mode squeezed vacuum source description.
//!
//! The state is a product of independent Schmidt modes; mode `m` is a
//! single-mode TMSV whose pair number is geometric with mean `λ_m μ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Normalized Schmidt coefficients of the pair source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SchmidtSpectrum {
    coefficients: Vec<f64>,
}

impl SchmidtSpectrum {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::invalid("Schmidt spectrum needs at least one coefficient"));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::invalid(format!("Schmidt coefficient {c} is negative or not finite")));
        }
        let sum: f64 = coefficients.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::invalid(format!("Schmidt coefficients sum to {sum}, expected 1")));
        }
        Ok(Self { coefficients })
    }

    /// Rescales arbitrary non-negative weights to unit sum.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::invalid("Schmidt weights must have a positive finite sum"));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    /// Single Schmidt mode, λ₁ = 1.
    pub fn pure() -> Self {
        Self { coefficients: vec![1.0] }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// P = Σ λ_m².
    pub fn purity(&self) -> f64 {
        self.coefficients.iter().map(|l| l * l).sum()
    }
}

impl TryFrom<Vec<f64>> for SchmidtSpectrum {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SchmidtSpectrum> for Vec<f64> {
    fn from(s: SchmidtSpectrum) -> Self {
        s.coefficients
    }
}

/// Mean pair number per pulse plus the Schmidt spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    mu: f64,
    spectrum: SchmidtSpectrum,
}

impl SourceConfig {
    pub fn new(mu: f64, spectrum: SchmidtSpectrum) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::invalid(format!("mean photon number must be >= 0, got {mu}")));
        }
        Ok(Self { mu, spectrum })
    }

    pub fn pure(mu: f64) -> Result<Self> {
        Self::new(mu, SchmidtSpectrum::pure())
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn spectrum(&self) -> &SchmidtSpectrum {
        &self.spectrum
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.spectrum.clone())
    }

    /// Per-Schmidt-mode mean pair numbers λ_m μ.
    pub fn mode_means(&self) -> impl Iterator<Item = f64> + '_ {
        self.spectrum.coefficients.iter().map(move |l| l * self.mu)
    }
}
