//! Parameter estimation: arm efficiencies, mean photon number, spectral
//! purity and Monte-Carlo uncertainty of reconstructions.

mod monte_carlo;
mod purity;

pub use monte_carlo::{
    monte_carlo_reconstruction_uncertainty, CalibrationPrior, EnsembleStatistics, MatrixSource, MonteCarloOptions, MonteCarloSummary,
};
pub use purity::{fit_purity_per_point, fit_purity_polynomial, purity_to_schmidt, PurityFit, PurityPoint, PurityPointFit, BOUNDARY_MARGIN};

use serde::{Deserialize, Serialize};

use crate::detector::HeraldDetectorModel;
use crate::error::{Error, Result};
use crate::gaussian::p_heralding;
use crate::source::{SchmidtSpectrum, SourceConfig};
use crate::statistics::CountRecord;

/// Above this mean photon number multi-pair events bias the Klyshko ratios.
pub const KLYSHKO_MAX_MU: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlyshkoEfficiencies {
    /// Signal arm: (C_ha + C_hb)/(C_a + C_b).
    pub eta_s: Estimate,
    /// Idler arm: (C_ha + C_hb)/C_h.
    pub eta_i: Estimate,
    /// Rough μ ≈ C_h/(pulses·η_s) exceeds `KLYSHKO_MAX_MU`.
    pub high_mu: bool,
}

/// Klyshko efficiencies with binomial standard errors.
pub fn klyshko_efficiencies(c: &CountRecord) -> Result<KlyshkoEfficiencies> {
    let idler = c.c_a + c.c_b;
    if idler == 0 || c.c_h == 0 {
        return Err(Error::undefined("Klyshko ratios need idler and herald counts"));
    }
    let both = (c.c_ha + c.c_hb) as f64;

    let n = idler as f64;
    let eta_s = both / n;
    let se_s = (eta_s * (1.0 - eta_s)).max(0.0) / n;

    // a and b overlap on C_hab, so Var(C_ha + C_hb) includes their covariance
    let h = c.c_h as f64;
    let (pa, pb, pab) = (c.c_ha as f64 / h, c.c_hb as f64 / h, c.c_hab as f64 / h);
    let eta_i = both / h;
    let var_i = (pa * (1.0 - pa) + pb * (1.0 - pb) + 2.0 * (pab - pa * pb)).max(0.0) / h;

    let high_mu = c.pulses > 0 && eta_s > 0.0 && h / (c.pulses as f64 * eta_s) > KLYSHKO_MAX_MU;
    Ok(KlyshkoEfficiencies {
        eta_s: Estimate { value: eta_s, std_error: se_s.sqrt() },
        eta_i: Estimate { value: eta_i, std_error: var_i.sqrt() },
        high_mu,
    })
}

/// Mean photon number reproducing a measured threshold heralding
/// probability, by bisection to relative tolerance 1e-10.
pub fn infer_mu(p_h_measured: f64, eta_h: f64, spectrum: &SchmidtSpectrum) -> Result<f64> {
    if !(0.0..1.0).contains(&p_h_measured) {
        return Err(Error::invalid(format!("heralding probability must lie in [0, 1), got {p_h_measured}")));
    }
    if p_h_measured == 0.0 {
        return Ok(0.0);
    }
    let herald = HeraldDetectorModel::threshold(eta_h)?;
    if eta_h == 0.0 {
        return Err(Error::invalid("a blind herald never clicks; heralding probability must be 0"));
    }
    let p_h = |mu: f64| -> Result<f64> { p_heralding(&SourceConfig::new(mu, spectrum.clone())?, &herald) };

    let mut hi = p_h_measured / eta_h;
    while p_h(hi)? < p_h_measured {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(Error::invalid(format!("heralding probability {p_h_measured} is not reachable")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if p_h(mid)? < p_h_measured {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
