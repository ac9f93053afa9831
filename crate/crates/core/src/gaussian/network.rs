//! Detection probabilities composed from vacuum projections of the full
//! covariance network, one Gaussian state per Schmidt mode.
//!
//! This path never touches the closed forms; it exists to check them.

use crate::detector::{HeraldDetectorModel, IdlerArmConfig, ReadoutMode};
use crate::error::{Error, Result};
use crate::probabilities::DetectionProbabilities;
use crate::source::SourceConfig;

use super::covariance::{herald_network, pixel_label, CovarianceState};

pub struct CovarianceRoute {
    states: Vec<CovarianceState>,
    pixels: Vec<String>,
    readout: ReadoutMode,
}

impl CovarianceRoute {
    pub fn new(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<Self> {
        let states = source
            .mode_means()
            .filter(|nu| *nu > 0.0)
            .map(|nu| herald_network(nu, herald, arm))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            states,
            pixels: (0..herald.pixel_count()).map(pixel_label).collect(),
            readout: herald.readout(),
        })
    }

    /// Probability that every listed detector stays dark.
    pub fn no_click(&self, dark: &[&str]) -> Result<f64> {
        if dark.is_empty() {
            return Ok(1.0);
        }
        self.states.iter().try_fold(1.0, |acc, st| Ok(acc * st.vacuum_probability(dark)?))
    }

    /// P(all of `click` fire and all of `dark` stay dark), by
    /// inclusion–exclusion over subsets of `click`.
    pub fn pattern(&self, click: &[&str], dark: &[&str]) -> Result<f64> {
        if click.len() > 24 {
            return Err(Error::invalid("too many clicking detectors for subset expansion"));
        }
        let mut total = 0.0;
        for mask in 0u32..(1 << click.len()) {
            let mut set: Vec<&str> = dark.to_vec();
            set.extend(click.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, l)| *l));
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * self.no_click(&set)?;
        }
        Ok(total)
    }

    /// P(herald fires and every detector in `idler` fires).
    fn herald_and(&self, idler: &[&str]) -> Result<f64> {
        let pixels: Vec<&str> = self.pixels.iter().map(String::as_str).collect();
        match self.readout {
            ReadoutMode::Threshold => Ok(self.pattern(idler, &[])? - self.pattern(idler, &pixels)?),
            ReadoutMode::ExactlyOneClick => {
                let mut total = 0.0;
                for (k, pix) in pixels.iter().enumerate() {
                    let mut click = idler.to_vec();
                    click.push(pix);
                    let dark: Vec<&str> = pixels.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, l)| *l).collect();
                    total += self.pattern(&click, &dark)?;
                }
                Ok(total)
            }
            ReadoutMode::PerfectPnr => Err(Error::invalid(
                "photon-number projections are not vacuum projections; no covariance route for perfect PNR",
            )),
        }
    }

    pub fn probabilities(&self) -> Result<DetectionProbabilities> {
        Ok(DetectionProbabilities {
            p_h: self.herald_and(&[])?,
            p_a: self.pattern(&["a"], &[])?,
            p_b: self.pattern(&["b"], &[])?,
            p_ha: self.herald_and(&["a"])?,
            p_hb: self.herald_and(&["b"])?,
            p_ab: self.pattern(&["a", "b"], &[])?,
            p_hab: self.herald_and(&["a", "b"])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_event_probabilities;

    #[test]
    fn joint_vacuum_of_tmsv() {
        let h = HeraldDetectorModel::threshold(1.0).unwrap();
        let arm = IdlerArmConfig::new(1.0, 1.0).unwrap();
        let route = CovarianceRoute::new(&SourceConfig::pure(0.25).unwrap(), &h, &arm).unwrap();
        // no click anywhere with lossless detection ⇔ zero pairs
        assert!((route.no_click(&["h1", "a", "b"]).unwrap() - 1.0 / 1.25).abs() < 1e-13);
    }

    #[test]
    fn lossy_signal_matches_oracle() {
        let s = SourceConfig::pure(0.2).unwrap();
        let h = HeraldDetectorModel::threshold(0.635).unwrap();
        let arm = IdlerArmConfig::new(0.6293, 0.5809).unwrap();
        let cov = CovarianceRoute::new(&s, &h, &arm).unwrap().probabilities().unwrap();
        let exact = exact_event_probabilities(&s, &h, &arm, None).unwrap().threshold_probabilities();
        assert!(cov.max_abs_diff(&exact) < 1e-10, "{cov:?} vs {exact:?}");
    }
}
