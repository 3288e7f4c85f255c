mod common;

use common::{phi_series, rng, tdl_grid_oracle};
use lhiqn::distribution::{
    build_cdf, distort, interval_mass, iqn_loss, quantile_huber, std_normal_cdf, std_normal_quantile,
    td_error_matrix, tdl, CvnarForm, DistortionKind, DistortionOperator, QuantileSampleSet, TdlBoundary,
    TdlOptions,
};
use proptest::prelude::*;
use rand::Rng;

/// Random sample sets with crossing values and deliberate ties.
fn random_pair<R: Rng>(r: &mut R) -> (QuantileSampleSet, Vec<f64>) {
    let m = r.random_range(2..=32);
    let mt = r.random_range(2..=32);
    let taus: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
    let pool: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
    let draw = |r: &mut R| {
        if r.random_bool(0.2) {
            pool[r.random_range(0..pool.len())]
        } else {
            r.random_range(-4.0..4.0)
        }
    };
    let values: Vec<f64> = (0..m).map(|_| draw(r)).collect();
    let targets: Vec<f64> = (0..mt).map(|_| draw(r)).collect();
    (QuantileSampleSet::from_parts(&taus, &values).unwrap(), targets)
}

#[test]
fn tdl_matches_grid_oracle_on_random_sets() {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let (set, targets) = random_pair(&mut r);
        for opts in [
            TdlOptions::default(),
            TdlOptions {
                boundary: TdlBoundary::Unbounded,
                renormalize: false,
            },
            TdlOptions {
                boundary: TdlBoundary::HalfGap,
                renormalize: true,
            },
        ] {
            let got = tdl(&set, &targets, opts).unwrap();
            let want = tdl_grid_oracle(&set, &targets, opts);
            worst = worst.max((got - want).abs());
            assert!((got - want).abs() <= 1e-8, "case {case}: {got} vs {want}");
        }
    }
    assert!(worst <= 1e-8);
}

#[test]
fn three_knot_example_matches_oracle() {
    let set = QuantileSampleSet::from_parts(&[0.0, 0.5, 1.0], &[0.0, 4.0, 10.0]).unwrap();
    let got = tdl(&set, &[2.0, 8.0], TdlOptions::default()).unwrap();
    let want = tdl_grid_oracle(&set, &[2.0, 8.0], TdlOptions::default());
    assert!((got - want).abs() <= 1e-8);
}

#[test]
fn normal_cdf_matches_series() {
    for i in 0..=600 {
        let x = -3.0 + i as f64 * 0.01;
        assert!((std_normal_cdf(x) - phi_series(x)).abs() < 1e-12, "x = {x}");
    }
    assert!((std_normal_cdf(1.96) - 0.9750021).abs() < 1e-6);
}

#[test]
fn quantile_inverts_cdf_on_fine_grid() {
    let mut worst: f64 = 0.0;
    for i in 1..10_000 {
        let p = i as f64 / 10_000.0;
        let back = std_normal_cdf(std_normal_quantile(p).unwrap());
        worst = worst.max((back - p).abs());
    }
    assert!(worst <= 1e-6, "worst inverse-composition error {worst:e}");
}

#[test]
fn wang_at_median_is_phi_eta() {
    for k in 0..=20 {
        let eta = k as f64 / 20.0;
        let w = distort(&DistortionOperator::new(DistortionKind::Wang, eta), 0.5).unwrap();
        assert!((w - phi_series(eta)).abs() <= 1e-6);
    }
    let w = distort(&DistortionOperator::new(DistortionKind::Wang, 1.0), 0.5).unwrap();
    assert!((w - 0.841345).abs() < 1e-6);
}

#[test]
fn hand_evaluated_losses() {
    assert_eq!(quantile_huber(0.5, 0.5, 1.0), 0.0625);
    assert_eq!(quantile_huber(-0.5, 0.5, 1.0), 0.0625);
    assert!((quantile_huber(-0.5, 0.9, 1.0) - 0.0125).abs() < 1e-12);
    let m = td_error_matrix(&[2.0], &[1.0], 1.0, 0.95, false).unwrap();
    assert!((m.get(0, 0) - 0.05).abs() < 1e-12);
    let m = td_error_matrix(&[0.0, 2.0], &[7.0, 9.0], 1.0, 0.0, false).unwrap();
    assert_eq!(m.as_slice(), &[-1.0, -1.0, 1.0, 1.0]);
    let m = td_error_matrix(&[1.0], &[0.0], 0.0, 1.0, false).unwrap();
    assert_eq!(iqn_loss(&m, &[0.5], 1.0, None).unwrap(), 0.25);
}

fn any_kind() -> impl Strategy<Value = DistortionKind> {
    prop_oneof![
        Just(DistortionKind::Identity),
        Just(DistortionKind::Cvar),
        Just(DistortionKind::Cvnar),
        Just(DistortionKind::Wang)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn distortion_stays_in_unit_interval_and_is_monotone(
        kind in any_kind(), eta in 0.0..=1.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64,
        literal in any::<bool>(),
    ) {
        let op = DistortionOperator {
            kind,
            eta,
            cvnar_form: if literal { CvnarForm::Literal } else { CvnarForm::Shifted },
        };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (dl, dh) = (distort(&op, lo).unwrap(), distort(&op, hi).unwrap());
        prop_assert!((0.0..=1.0).contains(&dl) && (0.0..=1.0).contains(&dh));
        if !literal {
            prop_assert!(dl <= dh + 1e-15);
        }
    }

    #[test]
    fn neutral_and_degenerate_etas(tau in 0.0..=1.0f64) {
        for kind in [DistortionKind::Identity, DistortionKind::Cvnar, DistortionKind::Wang] {
            let v = distort(&DistortionOperator::new(kind, 0.0), tau).unwrap();
            prop_assert!((v - tau).abs() <= 1e-9);
        }
        prop_assert_eq!(distort(&DistortionOperator::new(DistortionKind::Cvnar, 1.0), tau).unwrap(), 1.0);
        prop_assert_eq!(distort(&DistortionOperator::new(DistortionKind::Cvar, 0.0), tau).unwrap(), 0.0);
    }

    #[test]
    fn quantile_huber_symmetry(delta in -5.0..5.0f64, tau in 0.0..=1.0f64, kappa in 0.1..3.0f64) {
        let a = quantile_huber(delta, tau, kappa);
        prop_assert!(a >= 0.0);
        if delta != 0.0 {
            let b = quantile_huber(-delta, 1.0 - tau, kappa);
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn interval_mass_is_additive_and_complete(
        seed in any::<u64>(), cut in -5.0..5.0f64, cut2 in -5.0..5.0f64,
    ) {
        let mut r = rng(seed);
        let (set, _) = random_pair(&mut r);
        let cdf = build_cdf(&set).unwrap();
        let total = interval_mass(&cdf, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        prop_assert!((total - cdf.total_mass()).abs() <= 1e-12);
        let (a, b) = if cut <= cut2 { (cut, cut2) } else { (cut2, cut) };
        let left = interval_mass(&cdf, f64::NEG_INFINITY, a).unwrap();
        let mid = interval_mass(&cdf, a, b).unwrap();
        let right = interval_mass(&cdf, b, f64::INFINITY).unwrap();
        prop_assert!(left >= 0.0 && mid >= 0.0 && right >= 0.0);
        prop_assert!((left + mid + right - total).abs() <= 1e-12);
    }

    #[test]
    fn tdl_bounds_permutation_and_scale(seed in any::<u64>(), scale in 0.1..10.0f64) {
        let mut r = rng(seed);
        let (set, targets) = random_pair(&mut r);
        let opts = TdlOptions::default();
        let base = tdl(&set, &targets, opts).unwrap();
        let mass = build_cdf(&set).unwrap().total_mass();
        prop_assert!((0.0..=mass).contains(&base));

        let mut pairs = set.pairs().to_vec();
        pairs.reverse();
        let mut rev_targets = targets.clone();
        rev_targets.reverse();
        let permuted = tdl(&QuantileSampleSet::new(pairs.clone()).unwrap(), &rev_targets, opts).unwrap();
        prop_assert!((permuted - base).abs() <= 1e-12);

        let scaled_pairs: Vec<_> = pairs.iter().map(|p| lhiqn::distribution::QuantilePair { tau: p.tau, value: p.value * scale }).collect();
        let scaled_targets: Vec<f64> = targets.iter().map(|t| t * scale).collect();
        let scaled = tdl(&QuantileSampleSet::new(scaled_pairs).unwrap(), &scaled_targets, opts).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-6);
    }

    #[test]
    fn tdl_of_unrelated_far_targets_is_zero(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (set, targets) = random_pair(&mut r);
        let far: Vec<f64> = targets.iter().map(|t| t + 100.0).collect();
        prop_assert_eq!(tdl(&set, &far, TdlOptions::default()).unwrap(), 0.0);
    }
}
