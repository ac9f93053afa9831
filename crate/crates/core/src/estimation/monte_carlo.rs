//! Monte-Carlo propagation of calibration and counting uncertainty into the
//! reconstructed photon-number distribution and its g².
//!
//! Iteration i draws from its own generator, seeded with `seed` on stream i,
//! so results do not depend on how iterations are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::ClickDistribution;
use crate::error::{Error, Result};
use crate::pnr::{
    characterize_from_poisson, reconstruct_distribution, CalibrationData, CharacterizationOptions, ConditionalMatrix, Reconstruction,
    ReconstructionOptions,
};
use crate::statistics::g2_from_distribution;

/// Normal prior on the calibration mean photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPrior {
    pub mu_mean: f64,
    pub sigma: f64,
}

impl Default for CalibrationPrior {
    fn default() -> Self {
        Self { mu_mean: crate::presets::CALIBRATION_MU, sigma: crate::presets::CALIBRATION_SIGMA }
    }
}

/// Where each iteration's conditional matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSource {
    /// Re-characterized every iteration from calibration counts at a drawn μ.
    Calibrated(CalibrationData),
    /// Held fixed; only counting noise propagates.
    Fixed(ConditionalMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub iterations: usize,
    pub seed: u64,
    pub prior: CalibrationPrior,
    /// Redraw the observed click counts multinomially in every iteration.
    pub resample_counts: bool,
    pub reconstruction: ReconstructionOptions,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            iterations: crate::presets::MONTE_CARLO_ITERATIONS,
            seed: 0,
            prior: CalibrationPrior::default(),
            resample_counts: true,
            reconstruction: ReconstructionOptions::default(),
        }
    }
}

/// Mean, standard deviation and central 95% interval of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStatistics {
    pub mean: f64,
    pub std: f64,
    pub lower95: f64,
    pub upper95: f64,
}

impl EnsembleStatistics {
    pub fn from_samples(samples: &[f64]) -> Self {
        // a constant ensemble has exactly zero spread, not rounding noise
        if samples.windows(2).all(|w| w[0] == w[1]) {
            let x = samples[0];
            return Self { mean: x, std: 0.0, lower95: x, upper95: x };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { mean, std: var.sqrt(), lower95: quantile(&sorted, 0.025), upper95: quantile(&sorted, 0.975) }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower95 <= x && x <= self.upper95
    }
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    /// Reconstruction from the observed counts at the nominal calibration.
    pub point: Reconstruction,
    pub point_g2: f64,
    pub per_entry: Vec<EnsembleStatistics>,
    pub g2: EnsembleStatistics,
    pub successes: usize,
    pub failures: usize,
}

impl MonteCarloSummary {
    pub fn failure_fraction(&self) -> f64 {
        self.failures as f64 / (self.successes + self.failures) as f64
    }
}

fn multinomial<R: Rng>(rng: &mut R, total: u64, q: &[f64]) -> Vec<u64> {
    let mut out = vec![0; q.len()];
    let mut left = total;
    let mut mass = 1.0;
    for (i, &p) in q.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == q.len() {
            out[i] = left;
            break;
        }
        let frac = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(left, frac).map(|b| b.sample(rng)).unwrap_or(0);
        out[i] = k;
        left -= k;
        mass -= p;
    }
    out
}

fn matrix_for(source: &MatrixSource, mu: f64, pixels: usize, max_photons: usize) -> Result<ConditionalMatrix> {
    match source {
        MatrixSource::Fixed(m) => Ok(m.clone()),
        MatrixSource::Calibrated(cal) => {
            let opts = CharacterizationOptions { model: cal.model, ..Default::default() };
            Ok(characterize_from_poisson(&cal.counts, mu, pixels, max_photons, &opts)?.matrix)
        }
    }
}

/// Propagates calibration and counting uncertainty through
/// characterization and reconstruction. `observed[n]` counts n-click
/// events; iterations that fail are skipped and counted.
pub fn monte_carlo_reconstruction_uncertainty(
    observed: &[u64],
    pixels: usize,
    max_photons: usize,
    source: &MatrixSource,
    options: &MonteCarloOptions,
) -> Result<MonteCarloSummary> {
    if options.iterations < 2 {
        return Err(Error::invalid(format!("need at least 2 iterations, got {}", options.iterations)));
    }
    if observed.len() != pixels + 1 {
        return Err(Error::DimensionMismatch(format!("{} click classes for a {pixels}-pixel detector", observed.len())));
    }
    let prior = options.prior;
    if !(prior.mu_mean > 0.0 && prior.sigma >= 0.0 && prior.sigma.is_finite()) {
        return Err(Error::invalid(format!("calibration prior needs mu > 0 and sigma >= 0, got {} and {}", prior.mu_mean, prior.sigma)));
    }
    if let MatrixSource::Fixed(m) = source {
        if m.pixel_count() != pixels || m.max_photons() != max_photons {
            return Err(Error::DimensionMismatch("fixed matrix does not match pixel count and photon range".into()));
        }
    }
    let q_hat = ClickDistribution::from_counts(observed)?;
    let total: u64 = observed.iter().sum();

    let nominal = matrix_for(source, prior.mu_mean, pixels, max_photons)?;
    let point = reconstruct_distribution(&nominal, &q_hat, &options.reconstruction)?;
    let point_g2 = g2_from_distribution(point.distribution.probabilities())?;

    let normal = Normal::new(prior.mu_mean, prior.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let run = |i: usize| -> Result<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(i as u64);
        let mu = normal.sample(&mut rng);
        if !(mu > 0.0) {
            return Err(Error::invalid("drawn calibration mean is not positive"));
        }
        let q = if options.resample_counts {
            ClickDistribution::from_counts(&multinomial(&mut rng, total, q_hat.probabilities()))?
        } else {
            q_hat.clone()
        };
        let matrix = matrix_for(source, mu, pixels, max_photons)?;
        let rec = reconstruct_distribution(&matrix, &q, &options.reconstruction)?;
        let g2 = g2_from_distribution(rec.distribution.probabilities())?;
        Ok((rec.distribution.into_vec(), g2))
    };
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..options.iterations).into_par_iter().map(run).collect();

    let ok: Vec<&(Vec<f64>, f64)> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = results.len() - ok.len();
    if ok.len() < 2 {
        return Err(Error::NonConvergence {
            iterations: options.iterations,
            residual: f64::NAN,
            best: point.distribution.probabilities().to_vec(),
        });
    }
    let per_entry = (0..max_photons)
        .map(|m| EnsembleStatistics::from_samples(&ok.iter().map(|r| r.0[m]).collect::<Vec<_>>()))
        .collect();
    let g2 = EnsembleStatistics::from_samples(&ok.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(MonteCarloSummary { point, point_g2, per_entry, g2, successes: ok.len(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pnr::build_conditional_matrix;
    use crate::statistics::thermal_distribution;

    #[test]
    fn quantiles() {
        let s = EnsembleStatistics::from_samples(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.mean, 3.0);
        assert!((s.lower95 - 1.1).abs() < 1e-12);
        assert!((s.upper95 - 4.9).abs() < 1e-12);
        let c = EnsembleStatistics::from_samples(&[0.1; 7]);
        assert_eq!((c.mean, c.std, c.lower95, c.upper95), (0.1, 0.0, 0.1, 0.1));
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = multinomial(&mut rng, 1000, &[0.5, 0.3, 0.2, 0.0]);
        assert_eq!(c.iter().sum::<u64>(), 1000);
        assert_eq!(c[3], 0);
    }

    #[test]
    fn fixed_matrix_counting_noise() {
        let matrix = build_conditional_matrix(&[0.21; 4], 9).unwrap();
        let p = thermal_distribution(0.1, 8).unwrap().normalized().unwrap();
        let q = matrix.forward(&p).unwrap();
        let counts: Vec<u64> = q.probabilities().iter().map(|x| (x * 1e7).round() as u64).collect();
        let opts = MonteCarloOptions { iterations: 50, ..Default::default() };
        let s = monte_carlo_reconstruction_uncertainty(&counts, 4, 9, &MatrixSource::Fixed(matrix), &opts).unwrap();
        assert_eq!(s.failures, 0);
        assert!(s.g2.std > 1e-4 && s.g2.std < 0.1);
        assert!((s.point_g2 - 2.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_options() {
        let matrix = build_conditional_matrix(&[0.21; 4], 9).unwrap();
        let src = MatrixSource::Fixed(matrix);
        let opts = MonteCarloOptions { iterations: 1, ..Default::default() };
        assert!(monte_carlo_reconstruction_uncertainty(&[10, 5, 1, 0, 0], 4, 9, &src, &opts).is_err());
        assert!(monte_carlo_reconstruction_uncertainty(&[10, 5], 4, 9, &src, &Default::default()).is_err());
    }
}
