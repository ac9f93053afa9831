//! Detector calibration from click counts recorded under Poissonian light of
//! known mean.
//!
//! The negative log-likelihood of the multinomial click counts under the
//! forward model q(d) = P(d)·Poisson(μ) is minimised over the pixel click
//! probabilities d by damped Fisher scoring, with iterates projected onto
//! {d ≥ 0, Σd ≤ 1}.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::matrix::{build_conditional_matrix, check_click_probabilities, matrix_with_gradient, poisson_cutoff, poisson_distribution, ConditionalMatrix};

/// Poisson tail accepted in the calibration forward model.
pub const CALIBRATION_TAIL: f64 = 1e-10;

const PROBABILITY_FLOOR: f64 = 1e-300;
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelModel {
    /// One common click probability for every pixel.
    #[default]
    Uniform,
    /// Independent click probability per pixel.
    Free,
}

impl std::str::FromStr for PixelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "free" => Ok(Self::Free),
            other => Err(Error::invalid(format!("unknown pixel model '{other}' (expected uniform or free)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterizationOptions {
    pub model: PixelModel,
    pub max_iterations: usize,
    /// Relative change of the likelihood below which the fit stops.
    pub tolerance: f64,
}

impl Default for CharacterizationOptions {
    fn default() -> Self {
        Self { model: PixelModel::Uniform, max_iterations: 500, tolerance: 1e-14 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Characterization {
    /// Per-pixel click probabilities d_k, sorted in descending order.
    pub click_probabilities: Vec<f64>,
    /// Standard errors from the inverse Fisher information.
    pub standard_errors: Vec<f64>,
    /// Conditional matrix at the requested photon-number range.
    pub matrix: ConditionalMatrix,
    pub negative_log_likelihood: f64,
    pub iterations: usize,
    /// Some estimate sits on the edge of the feasible set.
    pub at_boundary: bool,
    /// Click distribution predicted by the fitted model.
    pub predicted: Vec<f64>,
}

struct Likelihood<'a> {
    counts: &'a [f64],
    total: f64,
    poisson: Vec<f64>,
    pixels: usize,
}

impl Likelihood<'_> {
    /// Predicted q and its Jacobian with respect to d.
    fn model(&self, d: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let (p, grads) = matrix_with_gradient(d, self.poisson.len(), true);
        let pv = DVector::from_column_slice(&self.poisson);
        let q = &p * &pv;
        let norm = pv.sum();
        let mut jac = DMatrix::zeros(self.pixels + 1, d.len());
        for (j, g) in grads.iter().enumerate() {
            jac.set_column(j, &(g * &pv / norm));
        }
        (q.iter().map(|x| x / norm).collect(), jac)
    }

    fn nll(&self, q: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(q)
            .filter(|(c, _)| **c > 0.0)
            .map(|(c, qn)| -c * qn.max(PROBABILITY_FLOOR).ln())
            .sum()
    }

    /// Gradient and Fisher information of the NLL.
    fn score(&self, q: &[f64], jac: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let k = jac.ncols();
        let mut grad = DVector::zeros(k);
        let mut fisher = DMatrix::zeros(k, k);
        for n in 0..q.len() {
            let qn = q[n].max(PROBABILITY_FLOOR);
            let row = jac.row(n);
            for i in 0..k {
                grad[i] -= self.counts[n] / qn * row[i];
                for j in 0..k {
                    fisher[(i, j)] += self.total * row[i] * row[j] / qn;
                }
            }
        }
        (grad, fisher)
    }
}

fn expand(model: PixelModel, theta: &[f64], pixels: usize) -> Vec<f64> {
    match model {
        PixelModel::Uniform => vec![theta[0] / pixels as f64; pixels],
        PixelModel::Free => theta.to_vec(),
    }
}

/// Parameter-space Jacobian: uniform model sums the per-pixel columns.
fn reduce(model: PixelModel, jac: DMatrix<f64>, pixels: usize) -> DMatrix<f64> {
    match model {
        PixelModel::Uniform => {
            let col = jac.column_sum() / pixels as f64;
            DMatrix::from_column_slice(col.len(), 1, col.as_slice())
        }
        PixelModel::Free => jac,
    }
}

fn project(theta: &mut [f64]) {
    for t in theta.iter_mut() {
        *t = t.max(0.0);
    }
    let s: f64 = theta.iter().sum();
    if s > 1.0 {
        for t in theta.iter_mut() {
            *t /= s;
        }
    }
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max = svd.singular_values.max();
    let eps = max * 1e-12 * m.nrows() as f64;
    svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Fits pixel click probabilities to click counts recorded with Poissonian
/// input of mean `calibration_mu`. `counts[n]` is the number of n-click
/// events, n = 0..N; the returned matrix has `max_photons` columns.
pub fn characterize_from_poisson(
    counts: &[u64],
    calibration_mu: f64,
    pixels: usize,
    max_photons: usize,
    options: &CharacterizationOptions,
) -> Result<Characterization> {
    if counts.len() != pixels + 1 {
        return Err(Error::DimensionMismatch(format!("{} click classes for a {pixels}-pixel detector", counts.len())));
    }
    if !(calibration_mu.is_finite() && calibration_mu > 0.0) {
        return Err(Error::invalid(format!("calibration mean photon number must be > 0, got {calibration_mu}")));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("calibration counts are all zero"));
    }
    // validates the pixel count
    check_click_probabilities(&vec![0.0; pixels])?;
    if max_photons == 0 {
        return Err(Error::invalid("need at least one photon-number column"));
    }

    let cutoff = poisson_cutoff(calibration_mu, CALIBRATION_TAIL);
    let poisson = poisson_distribution(calibration_mu, cutoff)?.probabilities;
    let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let lik = Likelihood { counts: &counts_f, total: total as f64, poisson, pixels };

    // q₀ = e^{−μΣd} for Poisson input
    let q0 = (counts[0] as f64).max(0.5) / total as f64;
    let sum0 = (-q0.ln() / calibration_mu).clamp(1e-6, 1.0 - 1e-6);
    let mut theta: Vec<f64> = match options.model {
        PixelModel::Uniform => vec![sum0],
        PixelModel::Free => {
            // slight asymmetry breaks the permutation symmetry at the start
            let w: Vec<f64> = (0..pixels).map(|k| 1.0 + 0.1 * (pixels - k) as f64 / pixels as f64).collect();
            let ws: f64 = w.iter().sum();
            w.iter().map(|x| sum0 * x / ws).collect()
        }
    };

    let evaluate = |theta: &[f64]| {
        let d = expand(options.model, theta, pixels);
        let (q, jac) = lik.model(&d);
        let f = lik.nll(&q);
        (q, reduce(options.model, jac, pixels), f)
    };

    let (mut q, mut jac, mut f) = evaluate(&theta);
    let mut lambda = 1e-6;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iterations {
        iterations += 1;
        let (grad, fisher) = lik.score(&q, &jac);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = fisher.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * (fisher[(i, i)] + 1e-12);
            }
            let Some(step) = damped.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            project(&mut trial);
            let (q_t, jac_t, f_t) = evaluate(&trial);
            if f_t.is_finite() && f_t <= f {
                let change = f - f_t;
                let moved = trial.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                theta = trial;
                q = q_t;
                jac = jac_t;
                f = f_t;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if change <= options.tolerance * f.abs().max(1.0) || moved < 1e-15 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            // no accepted step means no descent direction remains
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            residual: f,
            best: expand(options.model, &theta, pixels),
        });
    }

    let (_, fisher) = lik.score(&q, &jac);
    let cov = pseudo_inverse(&fisher);
    let theta_se: Vec<f64> = (0..theta.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let sum: f64 = theta.iter().sum();
    let at_boundary = theta.iter().any(|&t| t <= BOUNDARY_TOL) || sum >= 1.0 - BOUNDARY_TOL;

    let (mut d, mut se) = match options.model {
        PixelModel::Uniform => (expand(options.model, &theta, pixels), vec![theta_se[0] / pixels as f64; pixels]),
        PixelModel::Free => (theta, theta_se),
    };
    let mut order: Vec<usize> = (0..pixels).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    d = order.iter().map(|&k| d[k]).collect();
    se = order.iter().map(|&k| se[k]).collect();

    let matrix = build_conditional_matrix(&d, max_photons)?;
    Ok(Characterization {
        click_probabilities: d,
        standard_errors: se,
        matrix,
        negative_log_likelihood: f,
        iterations,
        at_boundary,
        predicted: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Poisson input makes pixels independent: q is a Poisson-binomial law
    /// with r_k = 1 − e^{−μ d_k}.
    fn poisson_binomial(d: &[f64], mu: f64) -> Vec<f64> {
        let mut q = vec![1.0];
        for &dk in d {
            let r = 1.0 - (-mu * dk).exp();
            let mut next = vec![0.0; q.len() + 1];
            for (n, &x) in q.iter().enumerate() {
                next[n] += x * (1.0 - r);
                next[n + 1] += x * r;
            }
            q = next;
        }
        q
    }

    fn expected_counts(d: &[f64], mu: f64, total: f64) -> Vec<u64> {
        poisson_binomial(d, mu).iter().map(|x| (x * total).round() as u64).collect()
    }

    #[test]
    fn forward_model_matches_poisson_binomial() {
        let d = [0.3, 0.2, 0.15, 0.05];
        let cutoff = poisson_cutoff(1.0, CALIBRATION_TAIL);
        let poisson = poisson_distribution(1.0, cutoff).unwrap().probabilities;
        let c = vec![1.0; 5];
        let lik = Likelihood { counts: &c, total: 5.0, poisson, pixels: 4 };
        let (q, _) = lik.model(&d);
        for (a, b) in q.iter().zip(poisson_binomial(&d, 1.0)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_recovery() {
        let counts = expected_counts(&[0.21; 4], 1.0, 1e7);
        let fit = characterize_from_poisson(&counts, 1.0, 4, 9, &Default::default()).unwrap();
        for (d, se) in fit.click_probabilities.iter().zip(&fit.standard_errors) {
            assert!((d - 0.21).abs() < 1e-5, "{d}");
            assert!(*se > 0.0 && *se < 1e-3);
        }
        assert!((fit.matrix.entry(1, 1) - 0.84).abs() < 1e-4);
    }

    #[test]
    fn free_recovery_sorted() {
        let truth = [0.3, 0.25, 0.15, 0.1];
        let counts = expected_counts(&[0.15, 0.3, 0.1, 0.25], 1.0, 1e9);
        let opts = CharacterizationOptions { model: PixelModel::Free, ..Default::default() };
        let fit = characterize_from_poisson(&counts, 1.0, 4, 9, &opts).unwrap();
        for (d, t) in fit.click_probabilities.iter().zip(truth) {
            assert!((d - t).abs() < 1e-3, "{d} vs {t}");
        }
    }

    #[test]
    fn single_pixel() {
        let counts = expected_counts(&[0.7], 1.0, 1e8);
        let fit = characterize_from_poisson(&counts, 1.0, 1, 5, &Default::default()).unwrap();
        assert!((fit.click_probabilities[0] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let opts = CharacterizationOptions::default();
        assert!(characterize_from_poisson(&[10, 5, 1], 0.0, 2, 9, &opts).is_err());
        assert!(characterize_from_poisson(&[0, 0, 0], 1.0, 2, 9, &opts).is_err());
        assert!(matches!(characterize_from_poisson(&[10, 5], 1.0, 2, 9, &opts), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn saturated_data_hits_boundary() {
        let fit = characterize_from_poisson(&[0, 0, 100], 1.0, 2, 5, &CharacterizationOptions::default()).unwrap();
        assert!(fit.at_boundary);
        let s: f64 = fit.click_probabilities.iter().sum();
        assert!(s <= 1.0 + 1e-12);
    }
}
