//! Heralding detector and idler-arm configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SPLITTING_TOL: f64 = 1e-12;

/// How the multi-pixel heralding detector is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    /// Any number of clicks heralds (N = 1, T₁ = 1 behaviour).
    Threshold,
    /// Exactly one pixel clicked.
    #[serde(alias = "pnr1", alias = "pnr")]
    ExactlyOneClick,
    /// Exactly one photon detected (P = 𝟙 idealization).
    #[serde(alias = "perfect")]
    PerfectPnr,
}

impl ReadoutMode {
    pub const ALL: [ReadoutMode; 3] = [ReadoutMode::Threshold, ReadoutMode::ExactlyOneClick, ReadoutMode::PerfectPnr];

    /// Short name used on the command line and in CSV files.
    pub fn as_str(self) -> &'static str {
        match self {
            ReadoutMode::Threshold => "threshold",
            ReadoutMode::ExactlyOneClick => "pnr1",
            ReadoutMode::PerfectPnr => "perfect",
        }
    }
}

impl std::str::FromStr for ReadoutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" | "thr" => Ok(ReadoutMode::Threshold),
            "pnr1" | "pnr" | "exactly_one_click" => Ok(ReadoutMode::ExactlyOneClick),
            "perfect" | "perfect_pnr" => Ok(ReadoutMode::PerfectPnr),
            other => Err(Error::invalid(format!("unknown readout mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ReadoutMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Heralding arm: loss `eta_h` followed by an N-way split onto threshold pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldDetectorModel {
    eta_h: f64,
    splitting: Vec<f64>,
    pixel_efficiencies: Vec<f64>,
    readout: ReadoutMode,
}

/// Heralding arm with pixel efficiencies folded into the loss and splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHerald {
    pub eta: f64,
    pub splitting: Vec<f64>,
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

impl HeraldDetectorModel {
    pub fn new(eta_h: f64, splitting: Vec<f64>, pixel_efficiencies: Vec<f64>, readout: ReadoutMode) -> Result<Self> {
        check_unit("eta_h", eta_h)?;
        if splitting.is_empty() {
            return Err(Error::invalid("heralding detector needs at least one pixel"));
        }
        if splitting.len() != pixel_efficiencies.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} splitting fractions but {} pixel efficiencies",
                splitting.len(),
                pixel_efficiencies.len()
            )));
        }
        for &t in &splitting {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::invalid(format!("splitting fraction {t} is negative")));
            }
        }
        let sum: f64 = splitting.iter().sum();
        if (sum - 1.0).abs() > SPLITTING_TOL {
            return Err(Error::invalid(format!("splitting fractions sum to {sum}, expected 1")));
        }
        for &e in &pixel_efficiencies {
            check_unit("pixel efficiency", e)?;
        }
        Ok(Self { eta_h, splitting, pixel_efficiencies, readout })
    }

    /// N ideal pixels with T_k = 1/N.
    pub fn uniform(eta_h: f64, pixels: usize, readout: ReadoutMode) -> Result<Self> {
        if pixels == 0 {
            return Err(Error::invalid("heralding detector needs at least one pixel"));
        }
        Self::new(eta_h, vec![1.0 / pixels as f64; pixels], vec![1.0; pixels], readout)
    }

    /// Ideal pixels with the given splitting fractions.
    pub fn with_splitting(eta_h: f64, splitting: Vec<f64>, readout: ReadoutMode) -> Result<Self> {
        let n = splitting.len();
        Self::new(eta_h, splitting, vec![1.0; n], readout)
    }

    pub fn threshold(eta_h: f64) -> Result<Self> {
        Self::uniform(eta_h, 1, ReadoutMode::Threshold)
    }

    pub fn eta_h(&self) -> f64 {
        self.eta_h
    }

    pub fn pixel_count(&self) -> usize {
        self.splitting.len()
    }

    pub fn splitting(&self) -> &[f64] {
        &self.splitting
    }

    pub fn pixel_efficiencies(&self) -> &[f64] {
        &self.pixel_efficiencies
    }

    pub fn readout(&self) -> ReadoutMode {
        self.readout
    }

    pub fn with_readout(&self, readout: ReadoutMode) -> Self {
        Self { readout, ..self.clone() }
    }

    /// Per-photon probability that pixel k fires: η_h T_k η_k.
    pub fn click_probabilities(&self) -> Vec<f64> {
        self.splitting
            .iter()
            .zip(&self.pixel_efficiencies)
            .map(|(t, e)| self.eta_h * t * e)
            .collect()
    }

    /// Folds non-uniform pixel efficiencies into an equivalent ideal-pixel
    /// detector: T'_k = T_k η_k / η̄ and η' = η_h η̄ with η̄ = Σ T_k η_k.
    /// Both describe the same per-photon click probabilities.
    pub fn effective(&self) -> EffectiveHerald {
        let mean_eff: f64 = self.splitting.iter().zip(&self.pixel_efficiencies).map(|(t, e)| t * e).sum();
        if mean_eff <= 0.0 {
            return EffectiveHerald { eta: 0.0, splitting: self.splitting.clone() };
        }
        EffectiveHerald {
            eta: self.eta_h * mean_eff,
            splitting: self
                .splitting
                .iter()
                .zip(&self.pixel_efficiencies)
                .map(|(t, e)| t * e / mean_eff)
                .collect(),
        }
    }
}

/// Idler arm after the 50/50 splitter; detector a sees a photon with
/// probability η_a / 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdlerArmConfig {
    eta_a: f64,
    eta_b: f64,
}

impl IdlerArmConfig {
    pub fn new(eta_a: f64, eta_b: f64) -> Result<Self> {
        check_unit("eta_a", eta_a)?;
        check_unit("eta_b", eta_b)?;
        Ok(Self { eta_a, eta_b })
    }

    pub fn eta_a(&self) -> f64 {
        self.eta_a
    }

    pub fn eta_b(&self) -> f64 {
        self.eta_b
    }

    /// Arm with a and b exchanged.
    pub fn swapped(&self) -> Self {
        Self { eta_a: self.eta_b, eta_b: self.eta_a }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitting_must_sum_to_one() {
        assert!(HeraldDetectorModel::with_splitting(0.5, vec![0.5, 0.4], ReadoutMode::Threshold).is_err());
        assert!(HeraldDetectorModel::with_splitting(0.5, vec![1.1, -0.1], ReadoutMode::Threshold).is_err());
        assert!(HeraldDetectorModel::with_splitting(0.5, vec![0.4, 0.3, 0.2, 0.1], ReadoutMode::Threshold).is_ok());
    }

    #[test]
    fn efficiencies_bounded() {
        assert!(HeraldDetectorModel::uniform(1.2, 2, ReadoutMode::Threshold).is_err());
        assert!(IdlerArmConfig::new(0.5, -0.1).is_err());
        assert!(HeraldDetectorModel::new(0.5, vec![1.0], vec![1.5], ReadoutMode::Threshold).is_err());
        assert!(HeraldDetectorModel::new(0.5, vec![0.5, 0.5], vec![1.0], ReadoutMode::Threshold).is_err());
    }

    #[test]
    fn effective_preserves_click_probabilities() {
        let h = HeraldDetectorModel::new(0.7, vec![0.4, 0.3, 0.2, 0.1], vec![0.9, 0.5, 1.0, 0.8], ReadoutMode::ExactlyOneClick)
            .unwrap();
        let eff = h.effective();
        let d = h.click_probabilities();
        for (k, t) in eff.splitting.iter().enumerate() {
            assert!((eff.eta * t - d[k]).abs() < 1e-15);
        }
        assert!((eff.splitting.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn readout_mode_names_round_trip() {
        for m in ReadoutMode::ALL {
            assert_eq!(m.as_str().parse::<ReadoutMode>().unwrap(), m);
        }
        assert!("bogus".parse::<ReadoutMode>().is_err());
    }
}
