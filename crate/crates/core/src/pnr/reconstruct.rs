//! Photon-number reconstruction from click statistics.
//!
//! P has N+1 rows and M > N+1 columns, so Pp = q leaves an (M−N−1)-dimensional
//! family of candidate distributions. We minimise
//!
//!   ‖P p − q‖² + τ Σ_m (ln p_{m+1} − 2 ln p_m + ln p_{m−1})²
//!
//! with p = softmax(z), which keeps p on the open simplex at every step. The
//! penalty (log-curvature) is zero exactly on geometric laws, so thermal
//! inputs are reproduced without bias and, among distributions matching q,
//! the one closest to geometric is selected. τ is small enough that the data
//! term dominates wherever q constrains p.
//!
//! The problem is a nonlinear least-squares problem in z and is solved by
//! Levenberg–Marquardt.

use nalgebra::{DMatrix, DVector};

use crate::distribution::{ClickDistribution, PhotonNumberDistribution};
use crate::error::{Error, Result};

use super::matrix::ConditionalMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionOptions {
    /// Weight τ of the log-curvature penalty.
    pub smoothness_weight: f64,
    pub max_iterations: usize,
    /// Stop when an accepted step improves the objective by less than this
    /// fraction.
    pub tolerance: f64,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self { smoothness_weight: 1e-8, max_iterations: 2000, tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub distribution: PhotonNumberDistribution,
    /// ‖P p − q‖₂.
    pub residual_norm: f64,
    pub iterations: usize,
}

// keeps the softmax gauge (z → z + c) from drifting
const GAUGE_WEIGHT: f64 = 1e-6;
// objective values below this are rounding noise
const OBJECTIVE_FLOOR: f64 = 1e-30;
// gradient size at which remaining progress only moves negligible mass
const GRADIENT_FLOOR: f64 = 1e-20;

fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let w = z.map(|x| (x - max).exp());
    let s = w.sum();
    w / s
}

struct Problem<'a> {
    p_matrix: &'a DMatrix<f64>,
    q: DVector<f64>,
    curvature: DMatrix<f64>,
    sqrt_tau: f64,
}

impl Problem<'_> {
    fn residual(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let p = softmax(z);
        let data = self.p_matrix * &p - &self.q;
        let smooth = &self.curvature * z * self.sqrt_tau;
        let gauge = GAUGE_WEIGHT * z.mean();
        let mut r = DVector::zeros(data.len() + smooth.len() + 1);
        r.rows_mut(0, data.len()).copy_from(&data);
        r.rows_mut(data.len(), smooth.len()).copy_from(&smooth);
        let last = r.len() - 1;
        r[last] = gauge;
        (r, p)
    }

    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let m = p.len();
        // ∂softmax/∂z = diag(p) − p pᵀ
        let dsoft = DMatrix::from_diagonal(p) - p * p.transpose();
        let jd = self.p_matrix * dsoft;
        let rows = jd.nrows() + self.curvature.nrows() + 1;
        let mut j = DMatrix::zeros(rows, m);
        j.rows_mut(0, jd.nrows()).copy_from(&jd);
        j.rows_mut(jd.nrows(), self.curvature.nrows()).copy_from(&(&self.curvature * self.sqrt_tau));
        j.row_mut(rows - 1).fill(GAUGE_WEIGHT / m as f64);
        j
    }
}

fn second_difference(m: usize) -> DMatrix<f64> {
    let rows = m.saturating_sub(2);
    let mut d = DMatrix::zeros(rows, m);
    for i in 0..rows {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -2.0;
        d[(i, i + 2)] = 1.0;
    }
    d
}

/// Reconstructs p from a click distribution; the photon-number range is the
/// matrix's M columns.
pub fn reconstruct_distribution(
    matrix: &ConditionalMatrix,
    q: &ClickDistribution,
    options: &ReconstructionOptions,
) -> Result<Reconstruction> {
    if q.len() != matrix.pixel_count() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} click classes for a {}-pixel detector",
            q.len(),
            matrix.pixel_count()
        )));
    }
    if !(options.smoothness_weight >= 0.0) {
        return Err(Error::invalid("smoothness weight must be non-negative"));
    }
    let m = matrix.max_photons();
    let problem = Problem {
        p_matrix: matrix.entries(),
        q: DVector::from_column_slice(q.probabilities()),
        curvature: second_difference(m),
        sqrt_tau: options.smoothness_weight.sqrt(),
    };
    let data_rows = matrix.pixel_count() + 1;

    let mut z = DVector::zeros(m);
    let (mut r, mut p) = problem.residual(&z);
    let mut f = r.norm_squared();
    let mut lambda = 1e-3;

    let finish = |p: &DVector<f64>, r: &DVector<f64>, iterations| -> Result<Reconstruction> {
        Ok(Reconstruction {
            distribution: PhotonNumberDistribution::from_weights(p.as_slice())?,
            residual_norm: r.rows(0, data_rows).norm(),
            iterations,
        })
    };

    for iter in 0..options.max_iterations {
        if f <= OBJECTIVE_FLOOR {
            return finish(&p, &r, iter);
        }
        let j = problem.jacobian(&p);
        let g = j.transpose() * &r;
        if g.amax() <= GRADIENT_FLOOR {
            return finish(&p, &r, iter);
        }
        let h = j.transpose() * &j;
        loop {
            let mut damped = h.clone();
            for i in 0..m {
                damped[(i, i)] += lambda * (h[(i, i)] + 1e-30);
            }
            let step = match damped.clone().cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => match damped.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if lambda > 1e20 {
                            return finish(&p, &r, iter);
                        }
                        continue;
                    }
                },
            };
            let z_new = &z + &step;
            let (r_new, p_new) = problem.residual(&z_new);
            let f_new = r_new.norm_squared();
            if f_new.is_finite() && f_new < f {
                let improvement = f - f_new;
                z = z_new;
                r = r_new;
                p = p_new;
                f = f_new;
                lambda = (lambda / 10.0).max(1e-15);
                if improvement <= options.tolerance * (f + improvement) {
                    return finish(&p, &r, iter + 1);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no descent direction left: stationary to working precision
                return finish(&p, &r, iter + 1);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual: r.rows(0, data_rows).norm(),
        best: p.as_slice().to_vec(),
    })
}
