//! Zero-mean Gaussian states in the quadrature covariance representation.
//!
//! Convention: quadratures ordered (x₁, p₁, x₂, p₂, …) and the vacuum
//! covariance is the identity. A thermal mode with mean photon number n̄
//! has covariance (2n̄ + 1)·I₂.

use nalgebra::DMatrix;

use crate::detector::{HeraldDetectorModel, IdlerArmConfig};
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PHYSICALITY_TOL: f64 = 1e-9;
const AUX_LABEL: &str = "__loss_aux";

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

impl CovarianceState {
    /// Validates symmetry and the uncertainty relation σ + iΩ ⪰ 0.
    pub fn new(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let modes = labels.len();
        if matrix.nrows() != 2 * modes || matrix.ncols() != 2 * modes {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} covariance for {modes} modes",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate mode label '{l}'")));
            }
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NonPhysical(format!("covariance not symmetric (max deviation {asym:.2e})")));
        }
        let state = Self { matrix, labels };
        let min_eig = state.min_uncertainty_eigenvalue();
        if min_eig < -PHYSICALITY_TOL {
            return Err(Error::NonPhysical(format!("uncertainty relation violated (eigenvalue {min_eig:.3e})")));
        }
        Ok(state)
    }

    pub fn vacuum<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let n = labels.len();
        Self::new(DMatrix::identity(2 * n, 2 * n), labels)
    }

    pub fn thermal(label: &str, mean_photons: f64) -> Result<Self> {
        if !(mean_photons >= 0.0) {
            return Err(Error::invalid(format!("thermal mean must be >= 0, got {mean_photons}")));
        }
        Self::new(DMatrix::identity(2, 2) * (2.0 * mean_photons + 1.0), vec![label.to_string()])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mode_count(&self) -> usize {
        self.labels.len()
    }

    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("no mode labelled '{label}'")))
    }

    /// Smallest eigenvalue of σ + iΩ, via the real 2n×2n embedding of the
    /// Hermitian matrix [[σ, −Ω], [Ω, σ]] (each eigenvalue appears twice).
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        let d = self.matrix.nrows();
        let mut omega = DMatrix::zeros(d, d);
        for k in 0..self.labels.len() {
            omega[(2 * k, 2 * k + 1)] = 1.0;
            omega[(2 * k + 1, 2 * k)] = -1.0;
        }
        let mut big = DMatrix::zeros(2 * d, 2 * d);
        big.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        big.view_mut((d, d), (d, d)).copy_from(&self.matrix);
        big.view_mut((0, d), (d, d)).copy_from(&(-&omega));
        big.view_mut((d, 0), (d, d)).copy_from(&omega);
        big.symmetric_eigenvalues().min()
    }

    pub fn mean_photon_number(&self, label: &str) -> Result<f64> {
        let k = self.index(label)?;
        Ok((self.matrix[(2 * k, 2 * k)] + self.matrix[(2 * k + 1, 2 * k + 1)]) / 4.0 - 0.5)
    }

    pub fn total_mean_photon_number(&self) -> f64 {
        self.matrix.trace() / 4.0 - 0.5 * self.labels.len() as f64
    }

    /// Appends a vacuum mode.
    pub fn with_vacuum_mode(&self, label: &str) -> Result<Self> {
        if self.labels.iter().any(|l| l == label) {
            return Err(Error::invalid(format!("duplicate mode label '{label}'")));
        }
        let d = self.matrix.nrows();
        let mut m = DMatrix::identity(d + 2, d + 2);
        m.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
        let mut labels = self.labels.clone();
        labels.push(label.to_string());
        Ok(Self { matrix: m, labels })
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let k = self.index(from)?;
        if from != to && self.labels.iter().any(|l| l == to) {
            return Err(Error::invalid(format!("duplicate mode label '{to}'")));
        }
        let mut out = self.clone();
        out.labels[k] = to.to_string();
        Ok(out)
    }

    /// Reduced state on the listed modes, in the listed order.
    pub fn reduced<S: AsRef<str>>(&self, subset: &[S]) -> Result<Self> {
        let idx: Vec<usize> = subset.iter().map(|l| self.index(l.as_ref())).collect::<Result<_>>()?;
        for (i, a) in idx.iter().enumerate() {
            if idx[..i].contains(a) {
                return Err(Error::invalid(format!("mode '{}' listed twice", self.labels[*a])));
            }
        }
        let quad: Vec<usize> = idx.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
        let m = DMatrix::from_fn(quad.len(), quad.len(), |i, j| self.matrix[(quad[i], quad[j])]);
        Ok(Self { matrix: m, labels: idx.iter().map(|&k| self.labels[k].clone()).collect() })
    }

    /// Traces out one mode.
    pub fn partial_trace(&self, label: &str) -> Result<Self> {
        self.index(label)?;
        let keep: Vec<&str> = self.labels.iter().map(String::as_str).filter(|l| *l != label).collect();
        self.reduced(&keep)
    }

    /// Beam splitter with intensity transmittance T between modes (a, b):
    /// a → √T a + √(1−T) b, b → −√(1−T) a + √T b.
    pub fn apply_beam_splitter(&self, mode_a: &str, mode_b: &str, transmittance: f64) -> Result<Self> {
        check_unit("transmittance", transmittance)?;
        if mode_a == mode_b {
            return Err(Error::invalid(format!("beam splitter needs two distinct modes, got '{mode_a}' twice")));
        }
        let (a, b) = (self.index(mode_a)?, self.index(mode_b)?);
        let t = transmittance.sqrt();
        let r = (1.0 - transmittance).sqrt();
        let d = self.matrix.nrows();
        let mut s = DMatrix::identity(d, d);
        for q in 0..2 {
            s[(2 * a + q, 2 * a + q)] = t;
            s[(2 * a + q, 2 * b + q)] = r;
            s[(2 * b + q, 2 * a + q)] = -r;
            s[(2 * b + q, 2 * b + q)] = t;
        }
        let m = &s * &self.matrix * s.transpose();
        // restore exact symmetry lost to rounding
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self { matrix: m, labels: self.labels.clone() })
    }

    /// Pure-loss channel: mix with an auxiliary vacuum mode and trace it out.
    pub fn apply_loss(&self, mode: &str, eta: f64) -> Result<Self> {
        check_unit("eta", eta)?;
        self.index(mode)?;
        self.with_vacuum_mode(AUX_LABEL)?
            .apply_beam_splitter(mode, AUX_LABEL, eta)?
            .partial_trace(AUX_LABEL)
    }

    /// Probability that every mode in `subset` is projected onto vacuum:
    /// 1/√det((σ_S + I)/2).
    pub fn vacuum_probability<S: AsRef<str>>(&self, subset: &[S]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::invalid("vacuum projection needs a non-empty mode subset"));
        }
        let red = self.reduced(subset)?;
        let d = red.matrix.nrows();
        let m = (red.matrix + DMatrix::identity(d, d)) * 0.5;
        let det = m.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::NonPhysical(format!("reduced covariance gives det = {det}")));
        }
        Ok((1.0 / det.sqrt()).min(1.0))
    }
}

/// Two-mode squeezed vacuum with mean photon number `mu` per mode, labelled
/// "s" (signal) and "i" (idler). Diagonal blocks (2μ+1)I₂, off-diagonal
/// blocks 2√(μ(μ+1))·diag(1, −1).
pub fn tmsv_covariance(mu: f64) -> Result<CovarianceState> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::invalid(format!("mean photon number must be >= 0, got {mu}")));
    }
    let c = 2.0 * mu + 1.0;
    let s = 2.0 * (mu * (mu + 1.0)).sqrt();
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        c,   0.0, s,   0.0,
        0.0, c,   0.0, -s,
        s,   0.0, c,   0.0,
        0.0, -s,  0.0, c,
    ]);
    CovarianceState::new(m, vec!["s".into(), "i".into()])
}

pub fn pixel_label(k: usize) -> String {
    format!("h{}", k + 1)
}

/// Full optical network for one Schmidt mode of mean `mode_mean`: loss η_h
/// and an N-way split onto pixels "h1".."hN" (each followed by its pixel
/// efficiency) on the signal; a 50/50 splitter then losses η_a, η_b onto
/// "a" and "b" on the idler.
pub fn herald_network(mode_mean: f64, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<CovarianceState> {
    let mut st = tmsv_covariance(mode_mean)?.apply_loss("s", herald.eta_h())?;
    let split = herald.splitting();
    let n = split.len();
    let mut remaining = 1.0;
    for (k, &t) in split.iter().enumerate().take(n - 1) {
        let label = pixel_label(k);
        let frac = if remaining > 0.0 { (t / remaining).clamp(0.0, 1.0) } else { 0.0 };
        st = st.with_vacuum_mode(&label)?.apply_beam_splitter("s", &label, 1.0 - frac)?;
        remaining -= t;
    }
    st = st.relabel("s", &pixel_label(n - 1))?;
    for (k, &e) in herald.pixel_efficiencies().iter().enumerate() {
        st = st.apply_loss(&pixel_label(k), e)?;
    }
    st = st
        .with_vacuum_mode("b")?
        .apply_beam_splitter("i", "b", 0.5)?
        .relabel("i", "a")?
        .apply_loss("a", arm.eta_a())?
        .apply_loss("b", arm.eta_b())?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tmsv_zero_is_vacuum() {
        let st = tmsv_covariance(0.0).unwrap();
        assert_eq!(st.matrix(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn tmsv_mu_one_blocks() {
        let st = tmsv_covariance(1.0).unwrap();
        let m = st.matrix();
        assert_abs_diff_eq!(m[(0, 0)], 3.0);
        assert_abs_diff_eq!(m[(1, 1)], 3.0);
        assert_abs_diff_eq!(m[(0, 2)], 2.0 * 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 3)], -2.0 * 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn tmsv_marginal_is_thermal() {
        let st = tmsv_covariance(0.5).unwrap();
        for l in ["s", "i"] {
            let r = st.reduced(&[l]).unwrap();
            assert_eq!(r.matrix(), &(DMatrix::<f64>::identity(2, 2) * 2.0));
        }
    }

    #[test]
    fn negative_mu_rejected() {
        assert!(tmsv_covariance(-0.1).is_err());
    }

    #[test]
    fn unphysical_matrix_rejected() {
        let m = DMatrix::identity(2, 2) * 0.5;
        assert!(matches!(CovarianceState::new(m, vec!["x".into()]), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn beam_splitter_identity_and_swap() {
        let st = CovarianceState::thermal("t", 0.7).unwrap().with_vacuum_mode("v").unwrap();
        let same = st.apply_beam_splitter("t", "v", 1.0).unwrap();
        assert_abs_diff_eq!((same.matrix() - st.matrix()).amax(), 0.0);
        let swapped = st.apply_beam_splitter("t", "v", 0.0).unwrap();
        assert_abs_diff_eq!(swapped.mean_photon_number("v").unwrap(), 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(swapped.mean_photon_number("t").unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn beam_splitter_halves_thermal() {
        let st = CovarianceState::thermal("t", 0.8).unwrap().with_vacuum_mode("v").unwrap();
        let out = st.apply_beam_splitter("t", "v", 0.5).unwrap();
        for l in ["t", "v"] {
            let r = out.reduced(&[l]).unwrap();
            assert_abs_diff_eq!((r.matrix() - DMatrix::identity(2, 2) * 1.8).amax(), 0.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(out.total_mean_photon_number(), 0.8, epsilon = 1e-14);
    }

    #[test]
    fn beam_splitter_errors() {
        let st = tmsv_covariance(0.1).unwrap();
        assert!(st.apply_beam_splitter("s", "s", 0.5).is_err());
        assert!(st.apply_beam_splitter("s", "i", 1.5).is_err());
        assert!(st.apply_beam_splitter("s", "x", 0.5).is_err());
    }

    #[test]
    fn loss_scales_mean() {
        let st = CovarianceState::thermal("t", 1.3).unwrap();
        assert_eq!(st.apply_loss("t", 1.0).unwrap().matrix(), st.matrix());
        let half = st.apply_loss("t", 0.5).unwrap();
        assert_eq!(half.mode_count(), 1);
        assert_abs_diff_eq!(half.mean_photon_number("t").unwrap(), 0.65, epsilon = 1e-14);
        assert!(st.apply_loss("t", -0.5).is_err());
    }

    #[test]
    fn vacuum_probabilities() {
        let vac = CovarianceState::vacuum(["x", "y"]).unwrap();
        assert_abs_diff_eq!(vac.vacuum_probability(&["x", "y"]).unwrap(), 1.0);
        let th = CovarianceState::thermal("t", 1.0).unwrap();
        assert_abs_diff_eq!(th.vacuum_probability(&["t"]).unwrap(), 0.5, epsilon = 1e-15);
        let tm = tmsv_covariance(0.4).unwrap();
        assert_abs_diff_eq!(tm.vacuum_probability(&["s", "i"]).unwrap(), 1.0 / 1.4, epsilon = 1e-14);
        assert!(tm.vacuum_probability::<&str>(&[]).is_err());
    }

    #[test]
    fn lossy_states_stay_physical() {
        let h = HeraldDetectorModel::new(
            0.6,
            vec![0.4, 0.3, 0.2, 0.1],
            vec![0.9, 1.0, 0.8, 0.7],
            crate::detector::ReadoutMode::ExactlyOneClick,
        )
        .unwrap();
        let arm = IdlerArmConfig::new(0.6, 0.5).unwrap();
        let st = herald_network(0.3, &h, &arm).unwrap();
        assert_eq!(st.mode_count(), 6);
        assert!(st.min_uncertainty_eigenvalue() > -1e-9);
        // signal photons that survive: 0.3 · 0.6 · Σ T_k η_k
        let pixel_total: f64 = (0..4).map(|k| st.mean_photon_number(&pixel_label(k)).unwrap()).sum();
        assert_abs_diff_eq!(pixel_total, 0.3 * 0.6 * (0.36 + 0.3 + 0.16 + 0.07), epsilon = 1e-13);
    }
}
