use herald_core::estimation::purity_to_schmidt;
use herald_core::gaussian::{detection_probabilities, g2_heralded, CovarianceRoute};
use herald_core::oracle::exact_event_probabilities;
use herald_core::pnr::{build_conditional_matrix, reconstruct_distribution, ReconstructionOptions};
use herald_core::statistics::{binomial_thinning, g2_from_distribution};
use herald_core::{HeraldDetectorModel, IdlerArmConfig, PhotonNumberDistribution, ReadoutMode, SourceConfig};
use proptest::prelude::*;

fn splitting(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    })
}

prop_compose! {
    fn herald(readout: ReadoutMode)(n in 1usize..=5)(
        eta_h in 0.0f64..=1.0,
        t in splitting(n),
        eff in prop::collection::vec(0.5f64..=1.0, n),
    ) -> HeraldDetectorModel {
        HeraldDetectorModel::new(eta_h, t, eff, readout).unwrap()
    }
}

prop_compose! {
    fn source()(mu in 0.0f64..0.5, purity in 0.51f64..=1.0) -> SourceConfig {
        SourceConfig::new(mu, purity_to_schmidt(purity).unwrap()).unwrap()
    }
}

prop_compose! {
    fn arm()(a in 0.0f64..=1.0, b in 0.0f64..=1.0) -> IdlerArmConfig {
        IdlerArmConfig::new(a, b).unwrap()
    }
}

fn readout() -> impl Strategy<Value = ReadoutMode> {
    prop_oneof![Just(ReadoutMode::Threshold), Just(ReadoutMode::ExactlyOneClick)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn closed_forms_match_enumeration(s in source(), h in readout().prop_flat_map(herald), a in arm()) {
        let table = exact_event_probabilities(&s, &h, &a, None).unwrap();
        let exact = match h.readout() {
            ReadoutMode::Threshold => table.threshold_probabilities(),
            _ => table.exactly_one_click_probabilities(),
        };
        let closed = detection_probabilities(&s, &h, &a).unwrap();
        prop_assert!(closed.max_abs_diff(&exact) < 1e-9, "{closed:?} vs {exact:?}");
    }

    #[test]
    fn closed_forms_match_covariance_route(s in source(), h in readout().prop_flat_map(herald), a in arm()) {
        let route = CovarianceRoute::new(&s, &h, &a).unwrap().probabilities().unwrap();
        let closed = detection_probabilities(&s, &h, &a).unwrap();
        prop_assert!(closed.max_abs_diff(&route) < 1e-9, "{closed:?} vs {route:?}");
    }

    #[test]
    fn coincidences_never_exceed_singles(s in source(), h in readout().prop_flat_map(herald), a in arm()) {
        let p = detection_probabilities(&s, &h, &a).unwrap();
        let slack = 1e-15;
        prop_assert!(p.p_hab <= p.p_ha + slack && p.p_ha <= p.p_h + slack);
        prop_assert!(p.p_hab <= p.p_hb + slack && p.p_hb <= p.p_h + slack);
        prop_assert!(p.p_ab <= p.p_a.min(p.p_b) + slack);
        prop_assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn threshold_heralding_grows_with_mu_and_eta(
        mu in 0.001f64..0.5, dmu in 0.001f64..0.5, eta in 0.05f64..0.9, deta in 0.01f64..0.1, n in 1usize..=4,
    ) {
        let a = IdlerArmConfig::new(0.6, 0.6).unwrap();
        let p = |mu: f64, eta: f64| {
            let h = HeraldDetectorModel::uniform(eta, n, ReadoutMode::Threshold).unwrap();
            detection_probabilities(&SourceConfig::pure(mu).unwrap(), &h, &a).unwrap().p_h
        };
        prop_assert!(p(mu + dmu, eta) > p(mu, eta));
        prop_assert!(p(mu, eta + deta) > p(mu, eta));
    }

    #[test]
    fn pixel_order_is_irrelevant(s in source(), t in splitting(4), a in arm(), rot in 1usize..4) {
        let h = HeraldDetectorModel::with_splitting(0.7, t.clone(), ReadoutMode::Threshold).unwrap();
        let mut perm = t;
        perm.rotate_left(rot);
        let hp = HeraldDetectorModel::with_splitting(0.7, perm, ReadoutMode::Threshold).unwrap();
        let m1 = exact_event_probabilities(&s, &h, &a, None).unwrap().herald_marginal();
        let m2 = exact_event_probabilities(&s, &hp, &a, None).unwrap().herald_marginal();
        for (x, y) in m1.iter().zip(&m2) {
            prop_assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn single_pixel_one_click_equals_threshold(s in source(), eta in 0.0f64..=1.0, a in arm()) {
        let thr = HeraldDetectorModel::threshold(eta).unwrap();
        let one = thr.with_readout(ReadoutMode::ExactlyOneClick);
        prop_assert_eq!(detection_probabilities(&s, &thr, &a).unwrap(), detection_probabilities(&s, &one, &a).unwrap());
    }

    #[test]
    fn thinning_preserves_g2(w in prop::collection::vec(0.0f64..1.0, 3..10), eta in 0.05f64..=1.0) {
        prop_assume!(w[1..].iter().any(|&x| x > 0.01));
        let before = g2_from_distribution(&w).unwrap();
        let after = g2_from_distribution(&binomial_thinning(&w, eta).unwrap()).unwrap();
        prop_assert!((before - after).abs() < 1e-10 * before.max(1.0), "{before} vs {after}");
    }

    // the fit can never score worse than the truth, whose only cost is the
    // log-curvature penalty τ‖D₂ ln p‖²
    #[test]
    fn reconstruction_beats_truth(
        w in prop::collection::vec(0.01f64..1.0, 6),
        d in prop::collection::vec(0.05f64..0.245, 4),
    ) {
        let p = PhotonNumberDistribution::from_weights(&w).unwrap();
        let matrix = build_conditional_matrix(&d, 6).unwrap();
        let q = matrix.forward(&p).unwrap();
        let opts = ReconstructionOptions::default();
        let rec = reconstruct_distribution(&matrix, &q, &opts).unwrap();
        let z: Vec<f64> = p.probabilities().iter().map(|x| x.ln()).collect();
        let curvature: f64 = z.windows(3).map(|t| (t[0] - 2.0 * t[1] + t[2]).powi(2)).sum();
        prop_assert!(rec.residual_norm.powi(2) <= opts.smoothness_weight * curvature * (1.0 + 1e-6) + 1e-20);
        prop_assert!((rec.distribution.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(rec.distribution.probabilities().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn smooth_distributions_reconstruct_closely(mu in 0.05f64..0.6, d in prop::collection::vec(0.15f64..0.245, 4)) {
        // thermal laws have zero log-curvature, so the penalty costs nothing
        let p = herald_core::statistics::thermal_distribution(mu, 5).unwrap().normalized().unwrap();
        let matrix = build_conditional_matrix(&d, 6).unwrap();
        let q = matrix.forward(&p).unwrap();
        let rec = reconstruct_distribution(&matrix, &q, &ReconstructionOptions::default()).unwrap();
        for (x, y) in rec.distribution.probabilities().iter().zip(p.probabilities()) {
            prop_assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn perfect_pnr_beats_threshold() {
    let a = IdlerArmConfig::new(0.6293, 0.5809).unwrap();
    for mu in [1e-4, 1e-3, 0.01, 0.1] {
        let s = SourceConfig::pure(mu).unwrap();
        let thr = HeraldDetectorModel::threshold(0.635).unwrap();
        let perfect = thr.with_readout(ReadoutMode::PerfectPnr);
        assert!(g2_heralded(&s, &perfect, &a).unwrap() < g2_heralded(&s, &thr, &a).unwrap());
    }
}
