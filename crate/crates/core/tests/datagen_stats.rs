use deferlab::datagen::{
    generate_grouped_expert, generate_synthetic, FeatureDistribution, SyntheticConfig,
    SyntheticSource,
};
use deferlab::defer::augmented_dot;
use proptest::prelude::*;

fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn noisy_planted_loss_matches_mixture_of_noise_rates() {
    let cfg = SyntheticConfig {
        dim: 10,
        n: 10_000,
        distribution: FeatureDistribution::GaussianMixture {
            components: 20,
            upper: 1.0,
        },
        p_m: 0.1,
        p_h0: 0.4,
        p_h1: 0.1,
        seed: 17,
    };
    let inst = generate_synthetic(&cfg).unwrap();
    let ds = &inst.dataset;
    let deferred = ds
        .rows()
        .filter(|x| augmented_dot(&inst.planted_pair.rejector, x) >= 0.0)
        .count() as f64
        / ds.len() as f64;
    // classifier side: a p_m share of labels is redrawn uniformly, half of those flip
    let expected = cfg.p_m / 2.0 * (1.0 - deferred) + cfg.p_h1 * deferred;
    let loss = inst.planted_pair.system_loss(ds).unwrap();
    assert!(
        (loss - expected).abs() <= 0.02,
        "loss {loss} expected {expected}"
    );
}

#[test]
fn human_error_rates_match_per_region() {
    let cfg = SyntheticConfig {
        dim: 4,
        n: 20_000,
        distribution: FeatureDistribution::Uniform { upper: 2.0 },
        p_m: 0.0,
        p_h0: 0.3,
        p_h1: 0.05,
        seed: 5,
    };
    let inst = generate_synthetic(&cfg).unwrap();
    let ds = &inst.dataset;
    let (mut n0, mut e0, mut n1, mut e1) = (0, 0, 0, 0);
    for i in 0..ds.len() {
        let wrong = !ds.human_correct(i);
        if augmented_dot(&inst.planted_pair.rejector, ds.row(i)) >= 0.0 {
            n1 += 1;
            e1 += usize::from(wrong);
        } else {
            n0 += 1;
            e0 += usize::from(wrong);
        }
    }
    let r0 = e0 as f64 / n0 as f64;
    let r1 = e1 as f64 / n1 as f64;
    assert!((r0 - 0.3).abs() <= three_sigma(0.3, n0), "{r0}");
    assert!((r1 - 0.05).abs() <= three_sigma(0.05, n1), "{r1}");
}

#[test]
fn uniform_features_stay_in_box() {
    let cfg = SyntheticConfig {
        dim: 3,
        n: 2000,
        distribution: FeatureDistribution::Uniform { upper: 5.0 },
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&cfg).unwrap().dataset;
    assert!(ds.rows().flatten().all(|v| (0.0..5.0).contains(v)));
}

#[test]
fn grouped_expert_uniform_guess_accuracy() {
    let n = 20_000;
    let acc = generate_grouped_expert(5, n, 10, 0, 1)
        .unwrap()
        .human_accuracy();
    assert!((acc - 0.1).abs() <= three_sigma(0.1, n), "{acc}");
}

#[test]
fn grouped_expert_half_perfect_accuracy() {
    let n = 20_000;
    let acc = generate_grouped_expert(5, n, 10, 5, 2)
        .unwrap()
        .human_accuracy();
    assert!((acc - 0.55).abs() <= three_sigma(0.55, n), "{acc}");
}

#[test]
fn grouped_expert_classes_balanced() {
    let ds = generate_grouped_expert(2, 1005, 10, 3, 0).unwrap();
    let mut counts = [0usize; 10];
    ds.labels().iter().for_each(|&y| counts[y] += 1);
    assert!(counts.iter().all(|&c| c == 100 || c == 101), "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn realizable_configs_have_zero_planted_loss(
        seed in any::<u64>(),
        dim in 1usize..12,
        p_h0 in 0.0f64..=1.0,
        mixture in any::<bool>(),
    ) {
        let distribution = if mixture {
            FeatureDistribution::GaussianMixture { components: 5, upper: 3.0 }
        } else {
            FeatureDistribution::Uniform { upper: 3.0 }
        };
        let cfg = SyntheticConfig { dim, n: 300, distribution, p_m: 0.0, p_h0, p_h1: 0.0, seed };
        let src = SyntheticSource::new(&cfg).unwrap();
        let inst = src.instance().unwrap();
        prop_assert_eq!(inst.planted_pair.system_loss(&inst.dataset).unwrap(), 0.0);
        prop_assert_eq!(inst.planted_pair.system_loss(&src.heldout(300).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>()) {
        let cfg = SyntheticConfig { seed, n: 50, dim: 3, ..SyntheticConfig::default() };
        prop_assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        prop_assert_eq!(
            generate_grouped_expert(3, 40, 4, 2, seed).unwrap(),
            generate_grouped_expert(3, 40, 4, 2, seed).unwrap()
        );
    }
}
