use adbench_core::data::{response_index, Catalog};
use adbench_core::eval::cross_validate;
use adbench_core::exposure::compute_exposure;
use adbench_core::features::{build_labels, build_matrix, encode_demographics, InputConfig, InputVariant, ModelBase};
use adbench_core::learners::{sigmoid, LearnerKind, LearnerParams};
use adbench_core::synthgen::*;
use adbench_core::targets::{category_distribution, Behavior};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matched_distribution(cat: &Catalog, behavior: Behavior) -> [f64; 6] {
    let matched = cat.advert_matched();
    category_distribution(
        cat.responses().iter().filter(|r| matched.contains(&r.product_id)),
        behavior,
    )
}

#[test]
fn zero_effects_reproduce_base_rates() {
    let cfg = GenConfig {
        n_users: 1500,
        seed: 3,
        ..Default::default()
    };
    let cat = generate_panel(&cfg).unwrap();
    for (behavior, rates) in [(Behavior::ActualPurchase, cfg.ap_rates), (Behavior::PurchaseIntention, cfg.pi_rates)] {
        let got = matched_distribution(&cat, behavior);
        for c in 0..4 {
            assert!((got[c] - rates[c]).abs() <= 0.02, "{behavior:?} category {c}: {} vs {}", got[c], rates[c]);
        }
        assert!((got[4] - (got[2] + got[3])).abs() < 1e-12);
        assert!((got[5] - (got[0] + got[1])).abs() < 1e-12);
    }
}

#[test]
fn default_calibration_targets_advert_matched_purchases() {
    let cfg = GenConfig::default();
    assert_eq!(cfg.ap_rates, [0.06, 0.76, 0.07, 0.10]);
    let cat = generate_panel(&GenConfig { n_users: 1200, ..cfg }).unwrap();
    let got = matched_distribution(&cat, Behavior::ActualPurchase);
    for (c, target) in [0.06, 0.76, 0.07, 0.10].into_iter().enumerate() {
        assert!((got[c] - target).abs() <= 0.02, "category {c}: {}", got[c]);
    }
}

#[test]
fn same_seed_same_catalog() {
    let cfg = GenConfig {
        n_users: 50,
        beta_exposure: 0.3,
        ..Default::default()
    };
    let a = generate_panel(&cfg).unwrap();
    let b = generate_panel(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fingerprint(), b.fingerprint());
    let c = generate_panel(&GenConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.fingerprint(), c.fingerprint());
}

#[test]
fn calibrated_intercept_hits_simulated_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let scores: Vec<f64> = (0..20_000).map(|_| rng.random_range(-2.0..2.0)).collect();
    let alpha = calibrate_intercept(&scores, 0.17).unwrap();
    let hits = scores.iter().filter(|s| rng.random_bool(sigmoid(alpha + **s))).count();
    let rate = hits as f64 / scores.len() as f64;
    assert!((rate - 0.17).abs() <= 0.005, "simulated rate {rate}");
}

#[test]
fn planted_demographic_effect_is_in_the_answers() {
    let mut beta_demo = vec![0.0; 25];
    beta_demo[1] = 2.5;
    let cfg = GenConfig {
        n_users: 800,
        beta_demo: beta_demo.clone(),
        ..Default::default()
    };
    let panel = generate(&cfg).unwrap();
    let cat = &panel.catalog;
    let index = response_index(cat);
    let (mut hit, mut n_hit, mut miss, mut n_miss) = (0, 0, 0, 0);
    for u in cat.users() {
        let flagged = encode_demographics(u)[1] == 1.0;
        for p in cat.advert_matched() {
            let yes = index[&(&u.user_id, p)].ap_jan;
            if flagged {
                n_hit += 1;
                hit += usize::from(yes);
            } else {
                n_miss += 1;
                miss += usize::from(yes);
            }
        }
    }
    assert!(hit as f64 / n_hit as f64 > 2.0 * miss as f64 / n_miss as f64);
}

#[test]
fn exposure_is_right_skewed_and_bounded() {
    let cat = generate_panel(&GenConfig::default()).unwrap();
    let exposure = compute_exposure(cat.viewing(), cat.broadcasts());
    let mut totals: Vec<u64> = Vec::new();
    for u in cat.users() {
        for p in cat.advert_matched() {
            totals.push(exposure.pair_total(&u.user_id, p));
        }
    }
    totals.sort();
    let mean = totals.iter().sum::<u64>() as f64 / totals.len() as f64;
    let median = totals[totals.len() / 2] as f64;
    assert!(mean > median, "mean {mean} median {median}");
    assert!(*totals.last().unwrap() <= 3600);
}

#[test]
fn infeasible_settings_are_rejected() {
    let cfg = GenConfig {
        wave_persistence: 0.7,
        ..Default::default()
    };
    assert!(matches!(generate_panel(&cfg), Err(SynthError::Infeasible(_))));
    let cfg = GenConfig {
        ap_rates: [0.0, 1.0, 0.0, 0.0],
        ..Default::default()
    };
    assert!(matches!(generate_panel(&cfg), Err(SynthError::Infeasible(_))));
}

#[test]
fn universe_matches_generated_ids() {
    let cfg = GenConfig {
        n_users: 1234,
        n_products: 12,
        n_advert_matched: 5,
        ..Default::default()
    };
    let u = id_universe(&cfg);
    assert_eq!(u.users.len(), 1234);
    assert_eq!(u.products.len(), 5);
    assert_eq!(u.users[0].as_str(), "u0001");
    assert_eq!(u.products[4].as_str(), "p005");
}

fn viewing_f1(cat: &Catalog, category: u8) -> f64 {
    let exposure = compute_exposure(cat.viewing(), cat.broadcasts());
    let mut total = 0.0;
    let mut n = 0;
    for p in cat.advert_matched() {
        let base = ModelBase::ProductBased(p.clone());
        let m = build_matrix(cat, &exposure, &base, InputConfig::plain(InputVariant::ViewWeekday), Behavior::ActualPurchase)
            .unwrap();
        let y = build_labels(cat, &m.row_keys, Behavior::ActualPurchase, category).unwrap();
        let cv = cross_validate(&m.values, &y, LearnerKind::Logistic, &LearnerParams::default(), 5, 7).unwrap();
        total += cv.mean_f1;
        n += 1;
    }
    total / n as f64
}

#[test]
fn planted_exposure_effect_lifts_viewing_models() {
    let mut wins = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let base = GenConfig {
            n_users: 200,
            n_products: 3,
            n_advert_matched: 3,
            seed,
            ..Default::default()
        };
        let planted = GenConfig {
            beta_exposure: 1.0,
            ..base.clone()
        };
        let null = viewing_f1(&generate_panel(&base).unwrap(), 4);
        let effect = viewing_f1(&generate_panel(&planted).unwrap(), 4);
        if effect > null {
            wins += 1;
        }
    }
    assert!(wins >= 18, "exposure models improved on {wins} of {seeds} seeds");
}
