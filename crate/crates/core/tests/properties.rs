mod support;

use fip_core::domain::{LabelerConfig, XmtConfig};
use fip_core::eval::{split_history, SplitSpec};
use fip_core::ingest::{filter_customers, parse_transactions, write_transactions, FilterRules};
use fip_core::labeler::label_forgotten;
use fip_core::profile::{build_profile, CustomerProfile};
use fip_core::tars::{mine_tars, pattern_scores, OmegaScores};
use fip_core::xmt::{predict_forgotten, predict_with_scores};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle;

fn instance(seed: u64) -> (fip_core::CustomerHistory, fip_core::Basket, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = oracle::random_history(&mut rng, "c", 50, 30);
    let at = h
        .baskets()
        .last()
        .unwrap()
        .date()
        .plus(rng.gen_range(0..15));
    let current = oracle::random_basket(&mut rng, &h, at);
    (h, current, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn prediction_shape(seed in any::<u64>(), k in 1usize..12, permissive in any::<bool>()) {
        let (h, current, _) = instance(seed);
        let cfg = if permissive { oracle::permissive_config() } else { XmtConfig::default() }.with_k(k);
        let profile = build_profile(&h, current.date(), &cfg).unwrap();
        let p = predict_forgotten(&profile, &current, &cfg);
        prop_assert!(p.forgotten.len() <= k);
        prop_assert_eq!(p.predicted_basket.len(), (current.len() + k).min(profile.len()));
        for item in &p.forgotten {
            prop_assert!(!current.contains(item));
            prop_assert!(p.predicted_basket.contains(item));
        }
        for b in p.breakdowns.values() {
            prop_assert!(b.f >= 0.0 && b.tau >= b.f && b.sigma >= b.tau);
            prop_assert!(b.kappa >= 0.0 && b.psi >= 0.0);
            prop_assert_eq!(b.tmap, b.map);
        }
        prop_assert_eq!(predict_forgotten(&profile, &current, &cfg), p);
    }

    #[test]
    fn empty_patterns_reduce_txmt_to_xmt(seed in any::<u64>(), k in 1usize..8) {
        let (h, current, _) = instance(seed);
        let cfg = oracle::permissive_config().with_k(k);
        let profile = build_profile(&h, current.date(), &cfg).unwrap();
        let omega = pattern_scores::<f64>(&[], &current, h.baskets(), current.date());
        prop_assert!(omega.is_all_zero());
        let plain = predict_forgotten(&profile, &current, &cfg);
        let with = predict_with_scores(&profile, &current, &cfg, Some(&omega));
        prop_assert_eq!(plain.forgotten, with.forgotten);
    }

    #[test]
    fn tmap_is_map_plus_omega(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = oracle::random_history(&mut rng, "c", 30, 8);
        let at = h.baskets().last().unwrap().date().plus(rng.gen_range(0..4));
        let current = oracle::random_basket(&mut rng, &h, at);
        let cfg = oracle::permissive_config().with_k(4);
        let profile = build_profile(&h, at, &cfg).unwrap();
        let patterns = mine_tars(h.baskets(), 2, 2);
        let omega: OmegaScores<f64> = pattern_scores(&patterns, &current, h.baskets(), at);
        let p = predict_with_scores(&profile, &current, &cfg, Some(&omega));
        for b in p.breakdowns.values() {
            prop_assert_eq!(b.omega, omega.get(&b.item));
            prop_assert_eq!(b.tmap, b.map + b.omega);
        }
    }

    #[test]
    fn single_precision_tracks_double(seed in any::<u64>()) {
        let (h, current, _) = instance(seed);
        let c64 = oracle::permissive_config();
        let c32: XmtConfig<f32> = serde_json::from_str(&serde_json::to_string(&c64).unwrap()).unwrap();
        let p64 = build_profile(&h, current.date(), &c64).unwrap();
        let p32 = build_profile(&h, current.date(), &c32).unwrap();
        let a = predict_forgotten(&p64, &current, &c64);
        let b = predict_forgotten(&p32, &current, &c32);
        for (item, b32) in &b.breakdowns {
            if let Some(b64) = a.breakdowns.get(item) {
                prop_assert!((f64::from(b32.map) - b64.map).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn profile_json_round_trip(seed in any::<u64>()) {
        let (h, current, _) = instance(seed);
        let p = build_profile(&h, current.date(), &oracle::permissive_config()).unwrap();
        let back = CustomerProfile::<f64>::from_json(&p.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn labels_grow_with_horizon(seed in any::<u64>()) {
        let (h, _, _) = instance(seed);
        let counts: Vec<usize> = (0..4)
            .map(|d| label_forgotten(&h, &LabelerConfig { large_basket_size: 5, max_forgotten_size: 5, horizon_days: d }).len())
            .collect();
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{:?}", counts);
    }

    #[test]
    fn split_partitions_history(seed in any::<u64>(), frac in 0.05f64..0.95) {
        let (h, _, _) = instance(seed);
        let (train, test) = split_history(&h, &SplitSpec { train_fraction: frac }).unwrap();
        prop_assert!(!train.is_empty() && !test.is_empty());
        let joined: Vec<_> = train.baskets().iter().chain(test.baskets()).cloned().collect();
        prop_assert_eq!(joined.as_slice(), h.baskets());
    }

    #[test]
    fn csv_round_trip_and_idempotent_filter(seed in any::<u64>(), min_baskets in 1usize..20, min_freq in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let histories: Vec<_> = (0..5)
            .map(|i| oracle::random_history(&mut rng, &format!("c{i}"), 30, 20))
            .collect();
        let mut buf = Vec::new();
        write_transactions(&histories, &mut buf).unwrap();
        let parsed = parse_transactions(buf.as_slice()).unwrap();
        prop_assert_eq!(&parsed, &histories);

        let rules = FilterRules { min_baskets: min_baskets, min_basket_size: 2, max_basket_size: Some(12), min_item_freq: min_freq };
        let once = filter_customers(parsed, &rules);
        let twice = filter_customers(once.clone(), &rules);
        prop_assert_eq!(once, twice);
    }
}
