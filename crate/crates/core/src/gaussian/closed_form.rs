//! Closed-form single and coincidence detection probabilities.
//!
//! Every expression is an inclusion–exclusion over products
//! Π_m 1/(1 + x λ_m μ), the probability that a multimode TMSV source leaves a
//! set of detectors dark when each pair independently triggers that set with
//! probability x. Differences of such products are evaluated as
//! Π(y)·expm1(ln Π(x) − ln Π(y)) so the small-μ regime keeps full relative
//! precision.
//!
//! The idler 50/50 splitter sends a photon to detector a with probability
//! η_a/2, giving p_a = 1 − Π_m 2/(2 + η_a λ_m μ). This is the convention the
//! coincidence formula p_ab requires (it reproduces g² → 2 for a pure
//! thermal arm); the variant without the factor 2 does not.

use crate::detector::{HeraldDetectorModel, IdlerArmConfig, ReadoutMode};
use crate::error::{Error, Result};
use crate::oracle;
use crate::probabilities::DetectionProbabilities;
use crate::source::SourceConfig;

/// Below this mean photon number all g² ratios are 0/0.
pub const MIN_MU_FOR_G2: f64 = 1e-12;

/// ln Π_m 1/(1 + x λ_m μ).
fn log_no_click(source: &SourceConfig, x: f64) -> f64 {
    -source.mode_means().map(|nu| (x * nu).ln_1p()).sum::<f64>()
}

/// Π(x) − Π(y).
fn no_click_diff(source: &SourceConfig, x: f64, y: f64) -> f64 {
    let ly = log_no_click(source, y);
    ly.exp() * (log_no_click(source, x) - ly).exp_m1()
}

/// (η_h, T_k) entering the formulas; threshold readout is N = 1, T₁ = 1.
fn herald_terms(herald: &HeraldDetectorModel) -> (f64, Vec<f64>) {
    let eff = herald.effective();
    match herald.readout() {
        ReadoutMode::Threshold => (eff.eta, vec![1.0]),
        _ => (eff.eta, eff.splitting),
    }
}

/// Σ_k [Π(z(1−T_k)) − Π(z(1))] with z(f) = (f(2−e)η_h + e)/2. For e = 0 this
/// is p_h; the idler terms enter with e = η_a, η_b, η_a + η_b.
fn herald_sum(source: &SourceConfig, eta: f64, splitting: &[f64], e: f64) -> f64 {
    let z = |f: f64| (f * (2.0 - e) * eta + e) / 2.0;
    let all = z(1.0);
    splitting.iter().map(|t| no_click_diff(source, z(1.0 - t), all)).sum()
}

fn perfect(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<oracle::PerfectPnrProbabilities> {
    oracle::perfect_pnr_probabilities(source, herald.effective().eta, arm, None)
}

/// Heralding probability per pulse.
pub fn p_heralding(source: &SourceConfig, herald: &HeraldDetectorModel) -> Result<f64> {
    if herald.readout() == ReadoutMode::PerfectPnr {
        // idler arm does not enter p_h1
        let arm = IdlerArmConfig::new(0.0, 0.0)?;
        return Ok(perfect(source, herald, &arm)?.p_h1);
    }
    let (eta, split) = herald_terms(herald);
    Ok(herald_sum(source, eta, &split, 0.0).clamp(0.0, 1.0))
}

fn p_herald_and(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig, idler_eta: f64, use_a: bool) -> Result<f64> {
    if herald.readout() == ReadoutMode::PerfectPnr {
        let p = perfect(source, herald, arm)?;
        return Ok(if use_a { p.p_h1a } else { p.p_h1b });
    }
    let (eta, split) = herald_terms(herald);
    let v = herald_sum(source, eta, &split, 0.0) - herald_sum(source, eta, &split, idler_eta);
    Ok(v.clamp(0.0, 1.0))
}

/// Coincidence between the herald and detector a.
pub fn p_herald_and_a(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<f64> {
    p_herald_and(source, herald, arm, arm.eta_a(), true)
}

/// Coincidence between the herald and detector b.
pub fn p_herald_and_b(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<f64> {
    p_herald_and(source, herald, arm, arm.eta_b(), false)
}

/// Three-fold coincidence h·a·b.
pub fn p_herald_and_a_and_b(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<f64> {
    if herald.readout() == ReadoutMode::PerfectPnr {
        return Ok(perfect(source, herald, arm)?.p_h1ab);
    }
    let (eta, split) = herald_terms(herald);
    let (ea, eb) = (arm.eta_a(), arm.eta_b());
    let v = herald_sum(source, eta, &split, 0.0) - herald_sum(source, eta, &split, ea) - herald_sum(source, eta, &split, eb)
        + herald_sum(source, eta, &split, ea + eb);
    Ok(v.clamp(0.0, 1.0))
}

fn p_single(source: &SourceConfig, eta: f64) -> f64 {
    -log_no_click(source, eta / 2.0).exp_m1()
}

/// Click probability of detector a: 1 − Π_m 2/(2 + η_a λ_m μ).
pub fn p_a(source: &SourceConfig, arm: &IdlerArmConfig) -> f64 {
    p_single(source, arm.eta_a())
}

pub fn p_b(source: &SourceConfig, arm: &IdlerArmConfig) -> f64 {
    p_single(source, arm.eta_b())
}

/// Coincidence between a and b behind the 50/50 splitter.
pub fn p_ab(source: &SourceConfig, arm: &IdlerArmConfig) -> f64 {
    let (ea, eb) = (arm.eta_a() / 2.0, arm.eta_b() / 2.0);
    (p_single(source, arm.eta_a()) + no_click_diff(source, ea + eb, eb)).clamp(0.0, 1.0)
}

/// All seven probabilities for the herald's readout mode.
pub fn detection_probabilities(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<DetectionProbabilities> {
    let (p_h, p_ha, p_hb, p_hab) = if herald.readout() == ReadoutMode::PerfectPnr {
        let p = perfect(source, herald, arm)?;
        (p.p_h1, p.p_h1a, p.p_h1b, p.p_h1ab)
    } else {
        (
            p_heralding(source, herald)?,
            p_herald_and_a(source, herald, arm)?,
            p_herald_and_b(source, herald, arm)?,
            p_herald_and_a_and_b(source, herald, arm)?,
        )
    };
    Ok(DetectionProbabilities {
        p_h,
        p_a: p_a(source, arm),
        p_b: p_b(source, arm),
        p_ha,
        p_hb,
        p_ab: p_ab(source, arm),
        p_hab,
    })
}

fn guard_mu(source: &SourceConfig) -> Result<()> {
    if source.mu() < MIN_MU_FOR_G2 {
        return Err(Error::undefined(format!("g2 undefined at mean photon number {:e}", source.mu())));
    }
    Ok(())
}

/// g²_h = p_h p_hab / (p_ha p_hb) from a probability set.
pub fn g2_heralded_from(p: &DetectionProbabilities) -> Result<f64> {
    let den = p.p_ha * p.p_hb;
    if !(den > 0.0) {
        return Err(Error::undefined("heralded g2: p_ha·p_hb vanishes (mean photon number or efficiency too small)"));
    }
    Ok(p.p_h * p.p_hab / den)
}

/// g²_unc = p_ab / (p_a p_b) from a probability set.
pub fn g2_unconditional_from(p: &DetectionProbabilities) -> Result<f64> {
    let den = p.p_a * p.p_b;
    if !(den > 0.0) {
        return Err(Error::undefined("unconditional g2: p_a·p_b vanishes (mean photon number or efficiency too small)"));
    }
    Ok(p.p_ab / den)
}

pub fn g2_heralded(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<f64> {
    guard_mu(source)?;
    g2_heralded_from(&detection_probabilities(source, herald, arm)?)
}

pub fn g2_unconditional(source: &SourceConfig, arm: &IdlerArmConfig) -> Result<f64> {
    guard_mu(source)?;
    let p = DetectionProbabilities {
        p_a: p_a(source, arm),
        p_b: p_b(source, arm),
        p_ab: p_ab(source, arm),
        ..Default::default()
    };
    g2_unconditional_from(&p)
}

/// g²_h with threshold heralding divided by g²_h with the herald's own
/// readout, at identical source and efficiencies.
pub fn improvement_ratio(source: &SourceConfig, herald: &HeraldDetectorModel, arm: &IdlerArmConfig) -> Result<f64> {
    let thr = g2_heralded(source, &herald.with_readout(ReadoutMode::Threshold), arm)?;
    let own = g2_heralded(source, herald, arm)?;
    if !(own > 0.0) {
        return Err(Error::undefined("improvement ratio: heralded g2 of the readout mode vanishes"));
    }
    Ok(thr / own)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::SchmidtSpectrum;
    use approx::assert_relative_eq;

    fn arm(a: f64, b: f64) -> IdlerArmConfig {
        IdlerArmConfig::new(a, b).unwrap()
    }

    #[test]
    fn threshold_heralding_value() {
        let s = SourceConfig::pure(0.1).unwrap();
        let h = HeraldDetectorModel::threshold(0.635).unwrap();
        assert_relative_eq!(p_heralding(&s, &h).unwrap(), 0.0635 / 1.0635, max_relative = 1e-14);
    }

    #[test]
    fn exactly_one_click_four_pixels() {
        // Σ_k 1/(1 + 0.75 μ) − 4/(1 + μ) at μ = 0.1
        let s = SourceConfig::pure(0.1).unwrap();
        let h = HeraldDetectorModel::uniform(1.0, 4, ReadoutMode::ExactlyOneClick).unwrap();
        let expected = 4.0 / 1.075 - 4.0 / 1.1;
        assert_relative_eq!(p_heralding(&s, &h).unwrap(), expected, max_relative = 1e-13);
        assert!((expected - 0.084568).abs() < 2e-6);
    }

    #[test]
    fn vacuum_never_clicks() {
        let s = SourceConfig::pure(0.0).unwrap();
        let a = arm(0.6, 0.6);
        for mode in ReadoutMode::ALL {
            let h = HeraldDetectorModel::uniform(0.6, 4, mode).unwrap();
            let p = detection_probabilities(&s, &h, &a).unwrap();
            assert_eq!(p, DetectionProbabilities::default());
        }
    }

    #[test]
    fn idler_single_value() {
        let s = SourceConfig::pure(0.1).unwrap();
        assert_relative_eq!(p_a(&s, &arm(0.6, 0.3)), 0.06 / 2.06, max_relative = 1e-14);
        assert_relative_eq!(p_b(&s, &arm(0.3, 0.6)), 0.06 / 2.06, max_relative = 1e-14);
        let bright = SourceConfig::pure(1e9).unwrap();
        assert!(p_a(&bright, &arm(1.0, 1.0)) > 1.0 - 1e-8);
    }

    #[test]
    fn dead_detectors() {
        let s = SourceConfig::pure(0.2).unwrap();
        let h = HeraldDetectorModel::threshold(0.6).unwrap();
        assert_eq!(p_herald_and_a(&s, &h, &arm(0.0, 0.5)).unwrap(), 0.0);
        assert_eq!(p_herald_and_a_and_b(&s, &h, &arm(0.0, 0.5)).unwrap(), 0.0);
        assert_eq!(p_herald_and_a_and_b(&s, &h, &arm(0.5, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn threshold_equals_single_pixel_exactly_one_click() {
        let s = SourceConfig::new(0.3, SchmidtSpectrum::new(vec![0.7, 0.3]).unwrap()).unwrap();
        let a = arm(0.62, 0.58);
        let thr = detection_probabilities(&s, &HeraldDetectorModel::threshold(0.63).unwrap(), &a).unwrap();
        let one = detection_probabilities(&s, &HeraldDetectorModel::uniform(0.63, 1, ReadoutMode::ExactlyOneClick).unwrap(), &a)
            .unwrap();
        assert_eq!(thr, one);
    }

    #[test]
    fn small_mu_herald_a_slope() {
        // p_ha ≈ μ η_h η_a / 2 to first order
        let s = SourceConfig::pure(1e-5).unwrap();
        let h = HeraldDetectorModel::threshold(0.635).unwrap();
        let p = p_herald_and_a(&s, &h, &arm(0.6293, 0.5809)).unwrap();
        assert_relative_eq!(p / 1e-5, 0.635 * 0.6293 / 2.0, max_relative = 1e-3);
    }

    #[test]
    fn thermal_bunching_limits() {
        let a = arm(0.6293, 0.5809);
        let pure = SourceConfig::pure(1e-4).unwrap();
        assert_relative_eq!(g2_unconditional(&pure, &a).unwrap(), 2.0, max_relative = 1e-3);
        let two = crate::estimation::purity_to_schmidt(0.84).unwrap();
        let mixed = SourceConfig::new(1e-4, two).unwrap();
        assert!((g2_unconditional(&mixed, &a).unwrap() - 1.84).abs() < 1e-3);
    }

    #[test]
    fn heralded_g2_slope() {
        // g²_h ≈ 2μ(2 − η_h) for threshold heralding of a pure source
        let mu = 1e-4;
        let s = SourceConfig::pure(mu).unwrap();
        for eta_h in [0.3, 0.635, 0.9] {
            let h = HeraldDetectorModel::threshold(eta_h).unwrap();
            let g = g2_heralded(&s, &h, &arm(0.6293, 0.5809)).unwrap();
            assert_relative_eq!(g / mu, 2.0 * (2.0 - eta_h), max_relative = 1e-2);
        }
    }

    #[test]
    fn g2_small_mu_guard() {
        let s = SourceConfig::pure(1e-13).unwrap();
        let h = HeraldDetectorModel::threshold(0.6).unwrap();
        assert!(matches!(g2_heralded(&s, &h, &arm(0.5, 0.5)), Err(Error::Undefined(_))));
        assert!(matches!(g2_unconditional(&s, &arm(0.5, 0.5)), Err(Error::Undefined(_))));
        let ok = SourceConfig::pure(0.01).unwrap();
        assert!(matches!(g2_unconditional(&ok, &arm(0.0, 0.5)), Err(Error::Undefined(_))));
    }

    #[test]
    fn perfect_pnr_improvement_values() {
        let s = SourceConfig::pure(1e-4).unwrap();
        let a = arm(0.6293, 0.5809);
        for (eta, target) in [(0.8, 3.0), (0.635, 1.87)] {
            let h = HeraldDetectorModel::uniform(eta, 4, ReadoutMode::PerfectPnr).unwrap();
            assert_relative_eq!(improvement_ratio(&s, &h, &a).unwrap(), target, max_relative = 0.02);
        }
        let h = HeraldDetectorModel::uniform(0.95, 4, ReadoutMode::PerfectPnr).unwrap();
        assert!(improvement_ratio(&s, &h, &a).unwrap() > 10.0);
    }
}
