use std::collections::BTreeMap;

use cpl_core::amce::{
    amce_bruteforce, amce_estimate, amce_table, AmceConfig, Density, DiscretizedNonAdditive,
    FnReward, LatentReward, LinearReward, ModelReward,
};
use cpl_core::models::{RewardModel, RewardModelSpec, Variant};
use cpl_core::worlds::{sample_ultrafeedback_world, EmbeddingConfig, EmbeddingMap};
use proptest::prelude::*;

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Random normalized density over `2^others` cells, some left empty.
fn random_density(others: usize, raw: &[f64]) -> Density {
    let mut cells = BTreeMap::new();
    for (b, w) in raw.iter().enumerate().take(1 << others) {
        if *w > 0.3 {
            cells.insert(b as u64, *w);
        }
    }
    if cells.is_empty() {
        cells.insert(0, 1.0);
    }
    let total: f64 = cells.values().sum();
    cells.values_mut().for_each(|v| *v /= total);
    Density::Empirical(cells)
}

#[test]
fn null_component_is_exactly_half() {
    let r = LinearReward {
        weights: vec![0.4, 0.0, -1.7, 2.2],
        bias: 0.0,
    };
    let cfg = AmceConfig::new(1, Density::Uniform);
    assert_eq!(amce_estimate(&r, &cfg).unwrap(), 0.5);
    assert_eq!(amce_bruteforce(&r, &cfg).unwrap(), 0.5);
}

#[test]
fn linear_weight_gives_logistic_of_weight() {
    let target = logistic(0.75);
    assert!((target - 0.6792).abs() < 1e-4);
    let r = LinearReward {
        weights: vec![1.1, -0.3, 0.75, 0.2, -2.0],
        bias: 0.5,
    };
    let raw: Vec<f64> = (0..16).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
    for density in [Density::Uniform, random_density(4, &raw)] {
        let cfg = AmceConfig::new(2, density);
        assert!((amce_estimate(&r, &cfg).unwrap() - target).abs() < 1e-9);
        assert!((amce_bruteforce(&r, &cfg).unwrap() - target).abs() < 1e-9);
    }
}

#[test]
fn nonadditive_rewards_match_bruteforce() {
    for bits in 1..=7 {
        let r = DiscretizedNonAdditive {
            beta: [-1.0, -2.0],
            gamma: [0.8, 0.3],
            bits,
        };
        for row in amce_table(&r, |_| Ok(Density::Uniform)).unwrap() {
            assert!(row.gap < 1e-12, "{row:?}");
        }
    }
}

#[test]
fn point_mass_density_is_one_cell() {
    let r = DiscretizedNonAdditive {
        beta: [-1.0, -1.0],
        gamma: [0.8, 0.3],
        bits: 3,
    };
    let density = Density::Empirical(BTreeMap::from([(0, 1.0)]));
    let cfg = AmceConfig::new(0, density);
    let expected =
        logistic(r.reward(&[1.0, 0.0, 0.0, 0.0]).unwrap() - r.reward(&[0.0; 4]).unwrap());
    assert_eq!(amce_bruteforce(&r, &cfg).unwrap(), expected);
    assert_eq!(amce_estimate(&r, &cfg).unwrap(), expected);
}

#[test]
fn empirical_density_pools_both_responses() {
    let rows: Vec<Vec<f64>> = vec![
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
    ];
    let d = Density::from_rows(rows.iter().map(Vec::as_slice), 0).unwrap();
    assert_eq!(
        d,
        Density::Empirical(BTreeMap::from([(0, 0.25), (1, 0.75)]))
    );
    // continuous latents are not a binary space
    let uf = sample_ultrafeedback_world(20, 0.0, 0.5, 1).unwrap();
    assert!(Density::from_dataset(&uf, 0).is_err());
}

#[test]
fn enumeration_budget_is_enforced() {
    let wide = LinearReward {
        weights: vec![0.1; 17],
        bias: 0.0,
    };
    let cfg = AmceConfig::new(0, Density::Uniform);
    assert!(amce_bruteforce(&wide, &cfg).is_err());
    assert!(amce_estimate(&wide, &AmceConfig::new(17, Density::Uniform)).is_err());

    // above the exact limit the density is sampled; a linear reward is
    // constant across cells so the sample mean is exact up to rounding
    let huge = LinearReward {
        weights: (0..24).map(|i| i as f64 / 10.0).collect(),
        bias: 0.0,
    };
    let mut cfg = AmceConfig::new(3, Density::Uniform);
    cfg.samples = 2_000;
    assert!((amce_estimate(&huge, &cfg).unwrap() - logistic(0.3)).abs() < 1e-12);
}

#[test]
fn untrained_model_matches_bruteforce() {
    let emb = EmbeddingConfig {
        dim: 16,
        noise_sd: 0.0,
        map_seed: 4,
        ..Default::default()
    };
    let map = EmbeddingMap::new(&emb, vec![0.5; 3], vec![0.5; 3]).unwrap();
    for variant in Variant::ALL {
        let model = RewardModel::new(RewardModelSpec::desk(variant, 16).with_seed(9)).unwrap();
        let r = ModelReward {
            model: &model,
            map: &map,
            objective: 1,
            prompt_type: Some(0),
            seed: 11,
        };
        for row in amce_table(&r, |_| Ok(Density::Uniform)).unwrap() {
            assert!(row.gap < 1e-12);
            assert!((0.0..=1.0).contains(&row.amce));
        }
    }
    let noisy = EmbeddingMap::new(
        &EmbeddingConfig {
            dim: 16,
            ..Default::default()
        },
        vec![0.5; 3],
        vec![0.5; 3],
    )
    .unwrap();
    let model = RewardModel::new(RewardModelSpec::desk(Variant::Base, 16)).unwrap();
    let r = ModelReward {
        model: &model,
        map: &noisy,
        objective: 0,
        prompt_type: None,
        seed: 0,
    };
    assert!(amce_estimate(&r, &AmceConfig::new(0, Density::Uniform)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimate_matches_bruteforce_on_linear_rewards(
        w in prop::collection::vec(-3.0f64..3.0, 1..=8),
        raw in prop::collection::vec(0.0f64..1.0, 128),
        k_pick in 0usize..8,
        empirical in any::<bool>(),
    ) {
        let k = k_pick % w.len();
        let r = LinearReward { weights: w.clone(), bias: 0.0 };
        let density = if empirical { random_density(w.len() - 1, &raw) } else { Density::Uniform };
        let cfg = AmceConfig::new(k, density);
        let (e, b) = (amce_estimate(&r, &cfg).unwrap(), amce_bruteforce(&r, &cfg).unwrap());
        prop_assert!((e - b).abs() < 1e-12);
    }

    #[test]
    fn swapped_roles_complement(
        w in prop::collection::vec(-3.0f64..3.0, 2..=6),
        inter in -2.0f64..2.0,
    ) {
        let n = w.len();
        let r = FnReward { dim: n, f: |z: &[f64]| w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + inter * z[0] * z[n - 1] };
        let cfg = AmceConfig::new(0, Density::Uniform);
        let mut rev = cfg.clone();
        rev.reversed = true;
        let (a, s) = (amce_bruteforce(&r, &cfg).unwrap(), amce_bruteforce(&r, &rev).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_rewards_ignore_the_density(
        w in prop::collection::vec(-3.0f64..3.0, 2..=6),
        raw in prop::collection::vec(0.0f64..1.0, 32),
    ) {
        let r = LinearReward { weights: w.clone(), bias: 1.0 };
        let u = amce_estimate(&r, &AmceConfig::new(1, Density::Uniform)).unwrap();
        let m = amce_estimate(&r, &AmceConfig::new(1, random_density(w.len() - 1, &raw))).unwrap();
        prop_assert!((u - m).abs() < 1e-12);
    }

    #[test]
    fn larger_weight_raises_the_effect(w in -3.0f64..3.0, step in 0.01f64..2.0) {
        let lo = LinearReward { weights: vec![0.3, w, -0.5], bias: 0.0 };
        let hi = LinearReward { weights: vec![0.3, w + step, -0.5], bias: 0.0 };
        let cfg = AmceConfig::new(1, Density::Uniform);
        prop_assert!(amce_estimate(&hi, &cfg).unwrap() > amce_estimate(&lo, &cfg).unwrap());
    }
}
