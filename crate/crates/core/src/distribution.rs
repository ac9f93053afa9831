//! Normalized photon-number and click-number distributions.

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

fn validate(name: &str, p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::invalid(format!("{name} is empty")));
    }
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::invalid(format!("{name} has negative or non-finite entry {x}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::invalid(format!("{name} sums to {s}, expected 1")));
    }
    Ok(())
}

fn normalize(name: &str, weights: &[f64]) -> Result<Vec<f64>> {
    if let Some(x) = weights.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::invalid(format!("{name} has negative or non-finite weight {x}")));
    }
    let s: f64 = weights.iter().sum();
    if !(s > 0.0) {
        return Err(Error::invalid(format!("{name} has zero total weight")));
    }
    Ok(weights.iter().map(|w| w / s).collect())
}

/// p_m for m = 0..M−1.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDistribution(Vec<f64>);

impl PhotonNumberDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        validate("photon-number distribution", &p)?;
        Ok(Self(p))
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        normalize("photon-number distribution", weights).map(Self)
    }

    /// All mass on `m`, padded to `len` entries.
    pub fn delta(m: usize, len: usize) -> Result<Self> {
        if m >= len {
            return Err(Error::DimensionMismatch(format!("delta at {m} does not fit in {len} entries")));
        }
        let mut p = vec![0.0; len];
        p[m] = 1.0;
        Ok(Self(p))
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for PhotonNumberDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// q_n for n = 0..N clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickDistribution(Vec<f64>);

impl ClickDistribution {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        validate("click distribution", &q)?;
        Ok(Self(q))
    }

    /// Relative frequencies of observed click counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        normalize("click counts", &w).map(Self)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ClickDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
