use cellfree::linalg::norm;
use cellfree::sysmodel::{epsilon_aggregate, perturb_channel, sample_pair, SystemConfig};
use cellfree::{seeded_rng, CTensor3, C64};
use proptest::prelude::*;

proptest! {
    #[test]
    fn aggregate_is_permutation_invariant(mut eps in prop::collection::vec(0.0f64..5.0, 1..12), seed in any::<u64>()) {
        let a = epsilon_aggregate(&eps).unwrap();
        let mut rng = seeded_rng(seed);
        use rand::seq::SliceRandom;
        eps.shuffle(&mut rng);
        let b = epsilon_aggregate(&eps).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn aggregate_is_homogeneous(eps in prop::collection::vec(0.0f64..5.0, 1..12), c in 0.0f64..100.0) {
        let scaled: Vec<f64> = eps.iter().map(|e| e * c).collect();
        let a = epsilon_aggregate(&scaled).unwrap();
        let b = c * epsilon_aggregate(&eps).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-300);
    }

    #[test]
    fn error_norm_is_exact(seed in any::<u64>(), eta in 0.0f64..0.5) {
        let mut rng = seeded_rng(seed);
        let h = CTensor3::from_fn(3, 2, 2, |q, i, m| C64::new((q + i) as f64 - 1.5, m as f64 + 0.25));
        let pair = perturb_channel(&h, eta, &mut rng).unwrap();
        for i in 0..2 {
            let d: Vec<C64> = pair.true_h.user_vector(i).iter().zip(pair.est_h.user_vector(i)).map(|(a, b)| a - b).collect();
            let target = eta * norm(&h.user_vector(i));
            prop_assert!((norm(&d) - target).abs() <= 1e-12 * target.max(1e-12));
            prop_assert!((pair.per_user_eps[i] - target).abs() <= 1e-12 * target.max(1e-12));
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>()) {
        let config = SystemConfig::new(3, 2, 2);
        let a = sample_pair(&config, 0.1, &mut seeded_rng(seed)).unwrap();
        let b = sample_pair(&config, 0.1, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
