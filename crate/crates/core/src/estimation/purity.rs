//! Spectral purity from unconditional g², in the two-Schmidt-mode
//! parametrization λ₁,₂ = 1/2 ± √(P/2 − 1/4).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detector::IdlerArmConfig;
use crate::error::{Error, Result};
use crate::gaussian::g2_unconditional;
use crate::source::{SchmidtSpectrum, SourceConfig};

/// Fitted purities this close to 1/2 or 1 are flagged as boundary values.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

fn two_mode(purity: f64) -> Result<SchmidtSpectrum> {
    let half_gap = (purity / 2.0 - 0.25).max(0.0).sqrt();
    SchmidtSpectrum::new(vec![0.5 + half_gap, 0.5 - half_gap])
}

/// Two-mode Schmidt spectrum with purity P ∈ (1/2, 1].
pub fn purity_to_schmidt(purity: f64) -> Result<SchmidtSpectrum> {
    if !(purity > 0.5 && purity <= 1.0) {
        return Err(Error::invalid(format!("two-mode purity must lie in (1/2, 1], got {purity}")));
    }
    two_mode(purity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityPointFit {
    pub purity: f64,
    /// The measurement was outside the model's reach (value clamped) or the
    /// solution lies within `BOUNDARY_MARGIN` of 1/2 or 1.
    pub at_boundary: bool,
}

/// Purity at which the two-mode model reproduces a measured unconditional
/// g² at mean photon number μ.
pub fn fit_purity_per_point(g2_unc: f64, mu: f64, arm: &IdlerArmConfig) -> Result<PurityPointFit> {
    if !(g2_unc > 1.0 && g2_unc <= 2.0) {
        return Err(Error::invalid(format!("unconditional g2 must lie in (1, 2], got {g2_unc}")));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mean photon number must be > 0, got {mu}")));
    }
    let model = |p: f64| -> Result<f64> { g2_unconditional(&SourceConfig::new(mu, two_mode(p)?)?, arm) };
    let (mut lo, mut hi) = (0.5, 1.0);
    if g2_unc <= model(lo)? {
        return Ok(PurityPointFit { purity: lo, at_boundary: true });
    }
    if g2_unc >= model(hi)? {
        return Ok(PurityPointFit { purity: hi, at_boundary: true });
    }
    // g² rises monotonically with P at fixed μ
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if model(mid)? < g2_unc {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let purity = 0.5 * (lo + hi);
    let at_boundary = purity - 0.5 < BOUNDARY_MARGIN || 1.0 - purity < BOUNDARY_MARGIN;
    Ok(PurityPointFit { purity, at_boundary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityPoint {
    pub mu: f64,
    pub purity: f64,
    pub sigma: f64,
}

/// Weighted quadratic P(μ) = c₀ + c₁μ + c₂μ².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityFit {
    pub coefficients: [f64; 3],
    pub standard_errors: [f64; 3],
    /// Data minus fit, per point.
    pub residuals: Vec<f64>,
    pub chi_squared: f64,
    /// The polynomial stays in (0, 1] over the fitted μ range.
    pub in_unit_interval: bool,
}

impl PurityFit {
    pub fn evaluate(&self, mu: f64) -> f64 {
        let [c0, c1, c2] = self.coefficients;
        c0 + mu * (c1 + mu * c2)
    }
}

pub fn fit_purity_polynomial(points: &[PurityPoint]) -> Result<PurityFit> {
    if points.len() < 3 {
        return Err(Error::invalid(format!("quadratic fit needs at least 3 points, got {}", points.len())));
    }
    for p in points {
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(Error::invalid(format!("uncertainty must be > 0, got {}", p.sigma)));
        }
        if !(p.purity > 0.5 && p.purity <= 1.0) || !p.mu.is_finite() {
            return Err(Error::invalid(format!("point (mu = {}, P = {}) outside the two-mode domain", p.mu, p.purity)));
        }
    }
    // scaled columns keep μ and μ² commensurate
    let scale = points.iter().map(|p| p.mu.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(points.len(), 3, |i, j| (points[i].mu / scale).powi(j as i32) / points[i].sigma);
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.purity / p.sigma));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::invalid("mean photon numbers do not determine a quadratic (rank-deficient design)"));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| Error::invalid(e.to_string()))?;
    let cov = (a.transpose() * &a).try_inverse().ok_or_else(|| Error::invalid("singular normal matrix"))?;
    let mut coefficients = [0.0; 3];
    let mut standard_errors = [0.0; 3];
    for j in 0..3 {
        let s = scale.powi(j as i32);
        coefficients[j] = x[j] / s;
        standard_errors[j] = cov[(j, j)].max(0.0).sqrt() / s;
    }
    let mut fit = PurityFit { coefficients, standard_errors, residuals: vec![], chi_squared: 0.0, in_unit_interval: true };
    fit.residuals = points.iter().map(|p| p.purity - fit.evaluate(p.mu)).collect();
    fit.chi_squared = points.iter().zip(&fit.residuals).map(|(p, r)| (r / p.sigma).powi(2)).sum();

    let lo = points.iter().map(|p| p.mu).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.mu).fold(f64::NEG_INFINITY, f64::max);
    let mut probes: Vec<f64> = (0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect();
    if coefficients[2] != 0.0 {
        let vertex = -coefficients[1] / (2.0 * coefficients[2]);
        if vertex > lo && vertex < hi {
            probes.push(vertex);
        }
    }
    fit.in_unit_interval = probes.iter().all(|&mu| {
        let v = fit.evaluate(mu);
        v > 0.0 && v <= 1.0
    });
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schmidt_examples() {
        let s = purity_to_schmidt(1.0).unwrap();
        assert_eq!(s.coefficients(), &[1.0, 0.0]);
        let s = purity_to_schmidt(0.84).unwrap();
        assert!((s.coefficients()[0] - 0.91231).abs() < 1e-5);
        assert!((s.coefficients()[1] - 0.08769).abs() < 1e-5);
        let s = purity_to_schmidt(0.5 + 1e-12).unwrap();
        assert!((s.coefficients()[0] - 0.5).abs() < 1e-5);
        assert!(purity_to_schmidt(0.5).is_err());
        assert!(purity_to_schmidt(1.01).is_err());
    }

    #[test]
    fn per_point_round_trip() {
        let arm = IdlerArmConfig::new(0.6293, 0.5809).unwrap();
        let src = SourceConfig::new(0.001, purity_to_schmidt(0.84).unwrap()).unwrap();
        let g2 = g2_unconditional(&src, &arm).unwrap();
        let fit = fit_purity_per_point(g2, 0.001, &arm).unwrap();
        assert!((fit.purity - 0.84).abs() < 1e-6);
        assert!(!fit.at_boundary);
    }

    #[test]
    fn per_point_boundaries() {
        let arm = IdlerArmConfig::new(0.6293, 0.5809).unwrap();
        let low = fit_purity_per_point(1.5, 1e-4, &arm).unwrap();
        assert!((low.purity - 0.5).abs() < 1e-3 && low.at_boundary);
        let high = fit_purity_per_point(2.0, 1e-6, &arm).unwrap();
        assert!((high.purity - 1.0).abs() < 1e-3 && high.at_boundary);
        assert!(fit_purity_per_point(0.9, 1e-3, &arm).is_err());
        assert!(fit_purity_per_point(1.8, 0.0, &arm).is_err());
    }

    #[test]
    fn quadratic_exact() {
        let truth = [0.95, -0.4, 0.3];
        let pts: Vec<PurityPoint> = [0.1, 0.2, 0.35, 0.5, 0.7]
            .iter()
            .map(|&mu| PurityPoint { mu, purity: truth[0] + truth[1] * mu + truth[2] * mu * mu, sigma: 0.01 })
            .collect();
        let fit = fit_purity_polynomial(&pts).unwrap();
        for (c, t) in fit.coefficients.iter().zip(truth) {
            assert!((c - t).abs() < 1e-12, "{c} vs {t}");
        }
        assert!(fit.in_unit_interval);
    }

    #[test]
    fn quadratic_constant_and_rank() {
        let pts: Vec<PurityPoint> = [0.001, 0.002, 0.004].iter().map(|&mu| PurityPoint { mu, purity: 0.84, sigma: 0.01 }).collect();
        let fit = fit_purity_polynomial(&pts).unwrap();
        assert!((fit.coefficients[0] - 0.84).abs() < 1e-12);
        assert!(fit.coefficients[1].abs() < 1e-9 && fit.coefficients[2].abs() < 1e-6);
        let same: Vec<PurityPoint> = (0..4).map(|_| PurityPoint { mu: 0.01, purity: 0.84, sigma: 0.01 }).collect();
        assert!(fit_purity_polynomial(&same).is_err());
        assert!(fit_purity_polynomial(&pts[..2]).is_err());
    }
}
