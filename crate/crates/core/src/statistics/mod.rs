//! Photon-statistics metrics from distributions and from raw counts.

mod counts;

pub use counts::{g2_heralded_from_counts, g2_unconditional_from_counts, CountRecord, MultiplicityCounts, RatioEstimate};

use crate::distribution::PhotonNumberDistribution;
use crate::error::{Error, Result};

/// Truncated distribution: raw probabilities up to a cutoff plus the mass
/// that lies beyond it.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDistribution {
    pub probabilities: Vec<f64>,
    pub tail: f64,
}

impl TruncatedDistribution {
    /// Whether the retained entries fall short of unit mass.
    pub fn needs_renormalization(&self) -> bool {
        self.tail > 0.0
    }

    /// Entries rescaled to unit sum.
    pub fn normalized(&self) -> Result<PhotonNumberDistribution> {
        PhotonNumberDistribution::from_weights(&self.probabilities)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

/// Thermal law p_n = μⁿ/(μ+1)ⁿ⁺¹ for n = 0..=n_max.
pub fn thermal_distribution(mu: f64, n_max: usize) -> Result<TruncatedDistribution> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::invalid(format!("mean photon number must be >= 0, got {mu}")));
    }
    let ratio = mu / (1.0 + mu);
    let mut probabilities = Vec::with_capacity(n_max + 1);
    let mut term = 1.0 / (1.0 + mu);
    for _ in 0..=n_max {
        probabilities.push(term);
        term *= ratio;
    }
    // geometric tail, exact
    let tail = ratio.powi(n_max as i32 + 1);
    Ok(TruncatedDistribution { probabilities, tail })
}

/// g²(0) = Σ n(n−1)p_n / (Σ n p_n)², evaluated as
/// Σp · Σ n(n−1)p / (Σ n p)² so unnormalized weights give the same value.
pub fn g2_from_distribution(p: &[f64]) -> Result<f64> {
    let (mut norm, mut first, mut second) = (0.0, 0.0, 0.0);
    for (n, &x) in p.iter().enumerate() {
        let n = n as f64;
        norm += x;
        first += n * x;
        second += n * (n - 1.0) * x;
    }
    if !(first > 0.0) {
        return Err(Error::undefined("g2 of a distribution with zero mean"));
    }
    Ok(norm * second / (first * first))
}

/// Photon-number law after each photon independently survives with
/// probability `eta`.
pub fn binomial_thinning(p: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("survival probability must lie in [0, 1], got {eta}")));
    }
    let mut out = vec![0.0; p.len()];
    let mut pmf = vec![0.0; p.len()];
    for (n, &pn) in p.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        // Binomial(n, eta) pmf by the multiplicative recurrence from k = 0
        let start = (1.0 - eta).powi(n as i32);
        if start > 0.0 {
            pmf[0] = start;
            for k in 1..=n {
                pmf[k] = pmf[k - 1] * (n - k + 1) as f64 / k as f64 * eta / (1.0 - eta);
            }
        } else {
            pmf[..=n].fill(0.0);
            pmf[n] = eta.powi(n as i32);
        }
        for k in 0..=n {
            out[k] += pn * pmf[k];
        }
    }
    Ok(out)
}
