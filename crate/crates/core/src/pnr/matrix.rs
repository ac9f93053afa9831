use nalgebra::DMatrix;

use crate::distribution::{ClickDistribution, PhotonNumberDistribution};
use crate::error::{Error, Result};

const COLUMN_TOL: f64 = 1e-12;

/// Largest pixel count for which subset expansions are attempted.
pub const MAX_PIXELS: usize = 16;

/// P_nm: probability of n clicks given m incident photons, n = 0..N,
/// m = 0..M−1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMatrix {
    entries: DMatrix<f64>,
}

pub(crate) fn check_click_probabilities(d: &[f64]) -> Result<()> {
    if d.is_empty() {
        return Err(Error::invalid("detector needs at least one pixel"));
    }
    if d.len() > MAX_PIXELS {
        return Err(Error::invalid(format!("at most {MAX_PIXELS} pixels supported, got {}", d.len())));
    }
    if let Some(x) = d.iter().find(|x| !x.is_finite() || **x < 0.0 || **x > 1.0) {
        return Err(Error::invalid(format!("pixel click probability {x} outside [0, 1]")));
    }
    let s: f64 = d.iter().sum();
    if s > 1.0 + COLUMN_TOL {
        return Err(Error::invalid(format!("pixel click probabilities sum to {s} > 1")));
    }
    Ok(())
}

/// Entries and their derivatives with respect to each d_k.
pub(crate) fn matrix_with_gradient(d: &[f64], max_photons: usize, with_gradient: bool) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let pixels = d.len();
    let subsets = 1usize << pixels;
    let lost = (1.0 - d.iter().sum::<f64>()).max(0.0);
    let reach: Vec<f64> = (0..subsets)
        .map(|s| (0..pixels).filter(|k| s >> k & 1 == 1).map(|k| d[k]).sum::<f64>())
        .collect();
    let mut entries = DMatrix::zeros(pixels + 1, max_photons);
    let mut grads = if with_gradient { vec![DMatrix::zeros(pixels + 1, max_photons); pixels] } else { vec![] };
    let mut f = vec![0.0; subsets];
    let mut df = vec![vec![0.0; subsets]; if with_gradient { pixels } else { 0 }];

    let mobius = |v: &mut [f64]| {
        for bit in 0..pixels {
            let b = 1usize << bit;
            for s in 0..subsets {
                if s & b != 0 {
                    v[s] -= v[s ^ b];
                }
            }
        }
    };

    for m in 0..max_photons {
        let mi = m as i32;
        for s in 0..subsets {
            let base = (lost + reach[s]).clamp(0.0, 1.0);
            f[s] = base.powi(mi);
            if with_gradient {
                let dbase = if m == 0 { 0.0 } else { m as f64 * base.powi(mi - 1) };
                for (j, g) in df.iter_mut().enumerate() {
                    // ∂(lost + reach)/∂d_j is 0 for j in S, −1 otherwise
                    g[s] = if s >> j & 1 == 1 { 0.0 } else { -dbase };
                }
            }
        }
        mobius(&mut f);
        for s in 0..subsets {
            let n = s.count_ones() as usize;
            if n <= m {
                entries[(n, m)] += f[s];
            }
        }
        for (j, g) in df.iter_mut().enumerate() {
            mobius(g);
            for s in 0..subsets {
                let n = s.count_ones() as usize;
                if n <= m {
                    grads[j][(n, m)] += g[s];
                }
            }
        }
    }
    entries.apply(|x: &mut f64| *x = x.clamp(0.0, 1.0));
    (entries, grads)
}

/// Pixel model: each photon independently fires pixel k with probability
/// d_k (splitting times pixel efficiency) or is lost; n is the number of
/// distinct pixels fired. Entries follow by inclusion–exclusion over pixel
/// subsets.
pub fn build_conditional_matrix(click_probabilities: &[f64], max_photons: usize) -> Result<ConditionalMatrix> {
    check_click_probabilities(click_probabilities)?;
    if max_photons == 0 {
        return Err(Error::invalid("conditional matrix needs at least one photon-number column"));
    }
    let (entries, _) = matrix_with_gradient(click_probabilities, max_photons, false);
    Ok(ConditionalMatrix { entries })
}

impl ConditionalMatrix {
    /// Validates column-stochasticity, P₀₀ = 1 and P_nm = 0 for n > m.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() < 2 || entries.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!("{}x{} conditional matrix", entries.nrows(), entries.ncols())));
        }
        for m in 0..entries.ncols() {
            let col = entries.column(m);
            if let Some(x) = col.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
                return Err(Error::invalid(format!("entry {x} in column {m} outside [0, 1]")));
            }
            let s: f64 = col.sum();
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(Error::invalid(format!("column {m} sums to {s}")));
            }
            for n in (m + 1)..entries.nrows() {
                if entries[(n, m)] != 0.0 {
                    return Err(Error::invalid(format!("P[{n}][{m}] nonzero: more clicks than photons")));
                }
            }
        }
        if entries[(0, 0)] != 1.0 {
            return Err(Error::invalid("zero photons must give zero clicks"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entry(&self, clicks: usize, photons: usize) -> f64 {
        self.entries[(clicks, photons)]
    }

    pub fn pixel_count(&self) -> usize {
        self.entries.nrows() - 1
    }

    pub fn max_photons(&self) -> usize {
        self.entries.ncols()
    }

    /// q_n = Σ_m P_nm p_m.
    pub fn forward(&self, p: &PhotonNumberDistribution) -> Result<ClickDistribution> {
        if p.len() != self.max_photons() {
            return Err(Error::DimensionMismatch(format!(
                "distribution has {} entries, matrix has {} photon-number columns",
                p.len(),
                self.max_photons()
            )));
        }
        ClickDistribution::new(self.apply(p.probabilities()))
    }

    pub(crate) fn apply(&self, p: &[f64]) -> Vec<f64> {
        (0..self.entries.nrows())
            .map(|n| p.iter().enumerate().map(|(m, x)| self.entries[(n, m)] * x).sum())
            .collect()
    }
}

/// Poisson law e^{−μ} μ^m / m! for m = 0..M−1.
pub fn poisson_distribution(mu: f64, max_photons: usize) -> Result<crate::statistics::TruncatedDistribution> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::invalid(format!("mean photon number must be >= 0, got {mu}")));
    }
    if max_photons == 0 {
        return Err(Error::invalid("need at least one photon-number entry"));
    }
    let mut probabilities = Vec::with_capacity(max_photons);
    let mut term = (-mu).exp();
    for m in 0..max_photons {
        probabilities.push(term);
        term *= mu / (m + 1) as f64;
    }
    let tail = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
    Ok(crate::statistics::TruncatedDistribution { probabilities, tail })
}

/// Smallest M whose Poisson tail is below `tolerance`.
pub fn poisson_cutoff(mu: f64, tolerance: f64) -> usize {
    let mut term = (-mu).exp();
    let mut acc = 0.0;
    let mut m = 0;
    loop {
        acc += term;
        m += 1;
        if 1.0 - acc < tolerance || m > 10_000 {
            return m;
        }
        term *= mu / m as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::g2_from_distribution;

    #[test]
    fn four_equal_pixels() {
        let p = build_conditional_matrix(&[0.25; 4], 5).unwrap();
        assert!((p.entry(1, 1) - 1.0).abs() < 1e-15);
        assert!((p.entry(2, 2) - 0.75).abs() < 1e-15);
        assert!((p.entry(1, 2) - 0.25).abs() < 1e-15);
        assert_eq!(p.entry(0, 0), 1.0);
        for n in 1..5 {
            assert_eq!(p.entry(n, 0), 0.0);
        }
    }

    #[test]
    fn blind_detector() {
        let p = build_conditional_matrix(&[0.0; 3], 6).unwrap();
        for m in 0..6 {
            assert_eq!(p.entry(0, m), 1.0);
        }
    }

    #[test]
    fn invalid_click_probabilities() {
        assert!(build_conditional_matrix(&[0.6, 0.6], 4).is_err());
        assert!(build_conditional_matrix(&[-0.1, 0.5], 4).is_err());
        assert!(build_conditional_matrix(&[], 4).is_err());
        assert!(build_conditional_matrix(&[0.5], 0).is_err());
    }

    #[test]
    fn identity_forward() {
        let p = ConditionalMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let dist = PhotonNumberDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(p.forward(&dist).unwrap().probabilities(), dist.probabilities());
        let wrong = PhotonNumberDistribution::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(p.forward(&wrong), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn vacuum_forward() {
        let p = build_conditional_matrix(&[0.21; 4], 9).unwrap();
        let q = p.forward(&PhotonNumberDistribution::delta(0, 9).unwrap()).unwrap();
        assert_eq!(q.probabilities(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn from_entries_validation() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.5;
        assert!(ConditionalMatrix::from_entries(m).is_err());
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 0.2;
        m[(1, 1)] = 0.8;
        assert!(ConditionalMatrix::from_entries(m.clone()).is_ok());
        m[(1, 0)] = 0.0;
        m[(0, 0)] = 1.0;
        let mut bad = m;
        bad[(1, 0)] = 1e-3;
        bad[(0, 0)] = 1.0 - 1e-3;
        assert!(ConditionalMatrix::from_entries(bad).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = [0.3, 0.2, 0.15];
        let (_, grads) = matrix_with_gradient(&d, 6, true);
        let h = 1e-6;
        for j in 0..3 {
            let mut up = d;
            up[j] += h;
            let mut dn = d;
            dn[j] -= h;
            let (pu, _) = matrix_with_gradient(&up, 6, false);
            let (pd, _) = matrix_with_gradient(&dn, 6, false);
            let fd = (pu - pd) / (2.0 * h);
            assert!((fd - &grads[j]).amax() < 1e-8);
        }
    }

    #[test]
    fn poisson_values() {
        let p = poisson_distribution(1.0, 20).unwrap();
        let e = (-1.0f64).exp();
        assert!((p.probabilities[0] - e).abs() < 1e-16);
        assert!((p.probabilities[1] - e).abs() < 1e-16);
        let zero = poisson_distribution(0.0, 4).unwrap();
        assert_eq!(zero.probabilities, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(!zero.needs_renormalization());
        let wide = poisson_distribution(0.7, 60).unwrap();
        assert!((g2_from_distribution(&wide.probabilities).unwrap() - 1.0).abs() < 1e-12);
        // P(X ≥ 13) = 6.4e-11, P(X ≥ 12) = 8.3e-10
        assert_eq!(poisson_cutoff(1.0, 1e-10), 13);
    }
}
