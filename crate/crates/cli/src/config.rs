//! Run configuration read from TOML. Every section and key is optional;
//! missing values fall back to the reference experiment.

use herald_core::estimation::purity_to_schmidt;
use herald_core::presets;
use herald_core::sim::ExperimentConfig;
use herald_core::{HeraldDetectorModel, IdlerArmConfig, ReadoutMode, SchmidtSpectrum, SourceConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub herald: HeraldSection,
    pub arm: ArmSection,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub mu: f64,
    /// Two-mode purity; ignored when `schmidt` is given.
    pub purity: f64,
    pub schmidt: Option<Vec<f64>>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self { mu: 0.05, purity: 1.0, schmidt: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeraldSection {
    pub eta_h: f64,
    pub pixels: usize,
    /// Uniform when absent.
    pub splitting: Option<Vec<f64>>,
    /// Ideal pixels when absent.
    pub pixel_efficiencies: Option<Vec<f64>>,
    pub readout: ReadoutMode,
}

impl Default for HeraldSection {
    fn default() -> Self {
        Self { eta_h: presets::ETA_H, pixels: presets::PIXELS, splitting: None, pixel_efficiencies: None, readout: ReadoutMode::Threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSection {
    pub eta_a: f64,
    pub eta_b: f64,
}

impl Default for ArmSection {
    fn default() -> Self {
        Self { eta_a: presets::ETA_A, eta_b: presets::ETA_B }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub pulses: u64,
    pub seed: u64,
    pub repetition_rate_hz: f64,
    pub window_ps: f64,
    pub jitter_ps: f64,
    pub dark_count_probability: f64,
    pub timetags: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            pulses: 1_000_000,
            seed: 0,
            repetition_rate_hz: presets::REPETITION_RATE_HZ,
            window_ps: presets::COINCIDENCE_WINDOW_PS,
            jitter_ps: 0.0,
            dark_count_probability: 0.0,
            timetags: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub mu_grid: Vec<f64>,
    pub modes: Vec<ReadoutMode>,
    /// P(μ) = c0 + c1 μ + c2 μ², evaluated for the fitted-purity curves.
    pub purity_polynomial: Option<[f64; 3]>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let mu_grid = (0..=16).map(|i| 1e-4 * 10f64.powf(i as f64 / 4.0)).collect();
        Self { mu_grid, modes: vec![ReadoutMode::Threshold, ReadoutMode::PerfectPnr], purity_polynomial: None }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            let at = line.map(|l| format!(" (line {l})")).unwrap_or_default();
            CliError::Usage(format!("config{at}: {}", e.message()))
        })
    }

    pub fn spectrum(&self) -> Result<SchmidtSpectrum, CliError> {
        match &self.source.schmidt {
            Some(c) => Ok(SchmidtSpectrum::new(c.clone())?),
            None => Ok(purity_to_schmidt(self.source.purity)?),
        }
    }

    pub fn source(&self, mu: f64) -> Result<SourceConfig, CliError> {
        Ok(SourceConfig::new(mu, self.spectrum()?)?)
    }

    pub fn herald(&self, readout: ReadoutMode) -> Result<HeraldDetectorModel, CliError> {
        let h = &self.herald;
        if h.pixels == 0 {
            return Err(CliError::Usage("herald.pixels must be at least 1".into()));
        }
        let splitting = h.splitting.clone().unwrap_or_else(|| vec![1.0 / h.pixels as f64; h.pixels]);
        let eff = h.pixel_efficiencies.clone().unwrap_or_else(|| vec![1.0; h.pixels]);
        if splitting.len() != h.pixels || eff.len() != h.pixels {
            return Err(CliError::Usage(format!("herald.pixels = {} but splitting/efficiency lists have other lengths", h.pixels)));
        }
        Ok(HeraldDetectorModel::new(h.eta_h, splitting, eff, readout)?)
    }

    pub fn arm(&self) -> Result<IdlerArmConfig, CliError> {
        Ok(IdlerArmConfig::new(self.arm.eta_a, self.arm.eta_b)?)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, CliError> {
        let e = &self.experiment;
        if e.pulses == 0 {
            return Err(CliError::Usage("experiment.pulses must be at least 1".into()));
        }
        let mut cfg = ExperimentConfig::new(self.source(self.source.mu)?, self.herald(self.herald.readout)?, self.arm()?, e.pulses, e.seed);
        cfg.repetition_rate_hz = e.repetition_rate_hz;
        cfg.coincidence_window_ps = e.window_ps;
        cfg.jitter_ps = e.jitter_ps;
        cfg.dark_count_probability = e.dark_count_probability;
        cfg.validate().map_err(|err| CliError::Usage(err.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_reference_values() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let exp = cfg.experiment().unwrap();
        assert_eq!(exp.herald.pixel_count(), 4);
        assert_eq!(exp.pulses, 1_000_000);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::parse("[source]\nmoo = 1\n"), Err(CliError::Usage(_))));
    }

    #[test]
    fn zero_pulses_is_usage_error() {
        let cfg = RunConfig::parse("[experiment]\npulses = 0\n").unwrap();
        assert!(matches!(cfg.experiment(), Err(CliError::Usage(_))));
    }
}
