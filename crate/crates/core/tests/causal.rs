use cpl_core::causal::{
    check_assumptions, confounded_micro_world, enumerate_potential_outcomes, latent_world,
    plugin_estimator, randomized_world, recover_reward_difference, verify_prop1, verify_prop2,
    CellKey, Conditioning, FiniteWorld, LatentMap, Level, Tolerance, Verdict, Violation,
    LATENT_HELD_OUT,
};
use proptest::prelude::*;

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Independent two-loop enumeration of `Σ_c P(c) σ(r_c(x,y) - r_c(x,y'))`.
fn enumerate_by_hand(w: &FiniteWorld, x: usize, y: usize, yp: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..w.objective_probs.len() {
        total += w.objective_probs[c] * logistic(w.rewards[c][x][y] - w.rewards[c][x][yp]);
    }
    total
}

/// One prompt, two responses, one objective, uniform over the two orders.
fn pair_world(ra: f64, rb: f64) -> FiniteWorld {
    FiniteWorld {
        prompts: vec!["x".into()],
        responses: vec!["a".into(), "b".into()],
        objective_probs: vec![1.0],
        rewards: vec![vec![vec![ra, rb]]],
        assignment: vec![vec![vec![vec![0.0, 0.5], vec![0.5, 0.0]]]],
        latent: None,
        distinct_responses: true,
        declares_conditional_independence: false,
    }
}

fn raw(x: usize, y: usize, yp: usize) -> CellKey {
    CellKey {
        c: None,
        prompt: x,
        first: y,
        second: yp,
    }
}

#[test]
fn enumeration_matches_hand_oracle() {
    let w = randomized_world(3);
    let t = enumerate_potential_outcomes(&w).unwrap();
    for (x, y, yp) in w.triples() {
        assert!((t.marginal[x][y][yp] - enumerate_by_hand(&w, x, y, yp)).abs() < 1e-15);
        for c in 0..2 {
            let direct = logistic(w.rewards[c][x][y] - w.rewards[c][x][yp]);
            assert!((t.conditional[c][x][y][yp] - direct).abs() < 1e-15);
        }
    }
}

#[test]
fn identical_objectives_have_no_heterogeneity() {
    let mut w = randomized_world(5);
    w.rewards[1] = w.rewards[0].clone();
    let t = enumerate_potential_outcomes(&w).unwrap();
    for (x, y, yp) in w.triples() {
        assert_eq!(t.conditional[0][x][y][yp], t.conditional[1][x][y][yp]);
    }
}

#[test]
fn unconfounded_plugin_matches_enumeration() {
    let w = randomized_world(11);
    let samples = w.simulate(100_000, 1).unwrap();
    let table = plugin_estimator(&w, &samples, Conditioning::RAW).unwrap();
    for (x, y, yp) in w.triples() {
        let est = table.get(&raw(x, y, yp)).unwrap().mean.unwrap();
        assert!((est - enumerate_by_hand(&w, x, y, yp)).abs() < 0.02);
    }
}

#[test]
fn confounding_bias_in_the_micro_world() {
    let w = confounded_micro_world();
    assert!((enumerate_by_hand(&w, 0, 0, 1) - 0.5).abs() < 1e-15);
    let samples = w.simulate(100_000, 2).unwrap();
    let naive = plugin_estimator(&w, &samples, Conditioning::RAW).unwrap();
    let est = naive.get(&raw(0, 0, 1)).unwrap().mean.unwrap();
    assert!((est - logistic(1.0)).abs() < 0.02, "naive estimate {est}");
    let bias = est - 0.5;
    assert!((bias - 0.231).abs() < 0.02, "bias {bias}");

    let adjusted = plugin_estimator(&w, &samples, Conditioning::RAW_GIVEN_C).unwrap();
    let key = CellKey {
        c: Some(0),
        ..raw(0, 0, 1)
    };
    let e0 = adjusted.get(&key).unwrap().mean.unwrap();
    assert!((e0 - logistic(1.0)).abs() < 0.02);
    // objective 1 never sees (a, b): flagged, not imputed
    let missing = CellKey {
        c: Some(1),
        ..raw(0, 0, 1)
    };
    let cell = adjusted.get(&missing).unwrap();
    assert_eq!((cell.n, cell.mean), (0, None));
}

#[test]
fn prop1_passes_on_randomized_worlds() {
    let mut failures = Vec::new();
    for seed in 0..20 {
        let w = randomized_world(seed);
        let r = verify_prop1(&w, 100_000, Tolerance::Fixed(0.02), 1_000 + seed).unwrap();
        if r.verdict != Verdict::Pass {
            failures.push((seed, r.max_error));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn prop1_with_binomial_tolerance() {
    let w = randomized_world(0);
    let r = verify_prop1(&w, 100_000, Tolerance::default(), 9).unwrap();
    assert_eq!(r.verdict, Verdict::Pass);
    assert!(r.worst.is_none());
    assert!(r
        .cells
        .iter()
        .all(|c| c.tolerance > 0.0 && c.tolerance < 0.03));
}

#[test]
fn prop1_precheck_flags_positivity() {
    let w = randomized_world(1)
        .without_triples(|x, y, yp| (x, y, yp) == (2, 0, 1))
        .unwrap();
    let v = check_assumptions(&w, Level::Raw).unwrap();
    assert_eq!(
        v,
        vec![Violation::Positivity {
            x: 2,
            y: 0,
            y_prime: 1
        }]
    );
    let r = verify_prop1(&w, 10_000, Tolerance::Fixed(0.02), 1).unwrap();
    assert_eq!(r.verdict, Verdict::AssumptionsViolated);
    // the unsupported cell is reported without an estimate
    let worst = r.worst.unwrap();
    assert_eq!((worst.triple, worst.estimate), ((2, 0, 1), None));
}

#[test]
fn prop1_precheck_flags_confounding() {
    let w = confounded_micro_world();
    let v = check_assumptions(&w, Level::Raw).unwrap();
    assert!(v
        .iter()
        .any(|v| matches!(v, Violation::Unconfoundedness { .. })));
    let r = verify_prop1(&w, 20_000, Tolerance::Fixed(0.02), 1).unwrap();
    assert_eq!(r.verdict, Verdict::AssumptionsViolated);
    // estimation still runs and exposes the bias
    assert!(r.max_error > 0.2);
}

#[test]
fn estimation_failure_is_distinct_from_assumption_failure() {
    let w = randomized_world(4);
    let r = verify_prop1(&w, 500, Tolerance::Fixed(0.001), 1).unwrap();
    assert_eq!(r.verdict, Verdict::EstimationFailure);
    assert!(r.violations.is_empty());
    let worst = r.worst.unwrap();
    assert!(r
        .cells
        .iter()
        .all(|c| c.error().unwrap_or(0.0) <= worst.error().unwrap()));
}

#[test]
fn declared_independence_is_checked() {
    let mut w = randomized_world(2);
    w.declares_conditional_independence = true;
    let v = check_assumptions(&w, Level::Raw).unwrap();
    assert!(v
        .iter()
        .any(|v| matches!(v, Violation::ConditionalIndependence { .. })));

    // a product p(y)q(y') restricted off the diagonal
    let mut u = w.clone();
    for pc in u.assignment.iter_mut() {
        for px in pc.iter_mut() {
            for (y, row) in px.iter_mut().enumerate() {
                for (yp, v) in row.iter_mut().enumerate() {
                    *v = if y == yp {
                        0.0
                    } else {
                        (1.0 + y as f64) * (2.0 + yp as f64)
                    };
                }
            }
        }
    }
    let u = u.without_triples(|_, _, _| false).unwrap();
    assert!(check_assumptions(&u, Level::Raw).unwrap().is_empty());
}

#[test]
fn latent_estimate_predicts_held_out_triple() {
    let w = latent_world();
    let (x, y, yp) = LATENT_HELD_OUT;
    assert_eq!(w.propensity(x, y, yp), 0.0);
    let samples = w.simulate(100_000, 4).unwrap();
    assert!(samples
        .iter()
        .all(|o| (o.x, o.y, o.y_prime) != LATENT_HELD_OUT));

    let latent = plugin_estimator(&w, &samples, Conditioning::LATENT).unwrap();
    let key = w.cell_key(Level::Latent, None, x, y, yp).unwrap();
    let est = latent.get(&key).unwrap().mean.unwrap();
    assert!((est - enumerate_by_hand(&w, x, y, yp)).abs() < 0.02);

    let r = verify_prop2(&w, 100_000, Tolerance::Fixed(0.02), 4).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.worst);
    // raw-level verification cannot cover the same triple
    let r1 = verify_prop1(&w, 100_000, Tolerance::Fixed(0.02), 4).unwrap();
    assert_eq!(r1.verdict, Verdict::AssumptionsViolated);
}

#[test]
fn injective_latents_reduce_to_raw() {
    let mut w = randomized_world(6);
    w.latent = Some(LatentMap {
        prompt_latent: vec![0, 1, 2],
        treatment_latent: vec![vec![0, 1, 2]; 3],
    });
    let r1 = verify_prop1(&w, 30_000, Tolerance::default(), 8).unwrap();
    let r2 = verify_prop2(&w, 30_000, Tolerance::default(), 8).unwrap();
    assert_eq!(r1.verdict, r2.verdict);
    for (a, b) in r1.cells.iter().zip(&r2.cells) {
        assert_eq!(
            (a.triple, a.estimate, a.n, a.pass),
            (b.triple, b.estimate, b.n, b.pass)
        );
    }
}

#[test]
fn zero_propensity_latent_cell_is_withheld() {
    let w = latent_world();
    let g = w.latent.clone().unwrap();
    let gap = w
        .without_triples(|x, y, yp| {
            x == 1 && g.treatment_latent[x][y] == 1 && g.treatment_latent[x][yp] == 0
        })
        .unwrap();
    let cell = CellKey {
        c: None,
        prompt: 1,
        first: 1,
        second: 0,
    };
    let v = check_assumptions(&gap, Level::Latent).unwrap();
    assert_eq!(v, vec![Violation::LatentPositivity { cell }]);
    let r = verify_prop2(&gap, 20_000, Tolerance::Fixed(0.02), 1).unwrap();
    assert_eq!(r.verdict, Verdict::AssumptionsViolated);
    let flagged: Vec<_> = r.cells.iter().filter(|c| c.cell == cell).collect();
    assert_eq!(flagged.len(), 4);
    assert!(flagged.iter().all(|c| c.estimate.is_none() && !c.pass));
}

#[test]
fn insufficient_latents_are_flagged() {
    let mut w = latent_world();
    w.rewards[1][0][1] += 0.5;
    let v = check_assumptions(&w, Level::Latent).unwrap();
    assert_eq!(
        v,
        vec![Violation::Sufficiency {
            c: 1,
            first: (0, 0),
            second: (0, 1)
        }]
    );
    assert!(verify_prop2(&randomized_world(0), 100, Tolerance::default(), 0).is_err());
}

#[test]
fn reward_difference_is_recovered() {
    let w = pair_world(1.0, 0.0);
    let s = w.simulate(100_000, 12).unwrap();
    let d = recover_reward_difference(&s, (0, 0, 1)).unwrap();
    assert!(d > 0.9 && d < 1.1, "{d}");
    let back = recover_reward_difference(&s, (0, 1, 0)).unwrap();
    assert!(back > -1.1 && back < -0.9, "{back}");

    let tie = pair_world(0.3, 0.3).simulate(100_000, 13).unwrap();
    let d0 = recover_reward_difference(&tie, (0, 0, 1)).unwrap();
    assert!(d0.abs() < 0.1, "{d0}");
}

#[test]
fn prompt_shift_leaves_samples_unchanged() {
    let w = randomized_world(7);
    let mut shifted = w.clone();
    for rc in shifted.rewards.iter_mut() {
        for (x, row) in rc.iter_mut().enumerate() {
            // powers of two keep the shifted differences exact
            row.iter_mut().for_each(|r| *r += 4.0 * (x as f64 + 1.0));
        }
    }
    assert_eq!(
        w.simulate(5_000, 3).unwrap(),
        shifted.simulate(5_000, 3).unwrap()
    );
}

#[test]
fn boundary_means_are_rejected() {
    let s = pair_world(40.0, 0.0).simulate(200, 1).unwrap();
    assert!(recover_reward_difference(&s, (0, 0, 1)).is_err());
    assert!(recover_reward_difference(&[], (0, 0, 1)).is_err());
    let mixed = randomized_world(0).simulate(5_000, 1).unwrap();
    assert!(recover_reward_difference(&mixed, (0, 0, 1)).is_err());
}

#[test]
fn error_shrinks_with_sample_size() {
    let (mut small, mut large) = (0.0, 0.0);
    let w = randomized_world(21);
    for seed in 0..20 {
        small += verify_prop1(&w, 1_000, Tolerance::default(), seed)
            .unwrap()
            .max_error;
        large += verify_prop1(&w, 100_000, Tolerance::default(), seed)
            .unwrap()
            .max_error;
    }
    assert!(large / 20.0 <= small / 20.0, "{large} vs {small}");
}

#[test]
fn worlds_load_from_json() {
    let w = latent_world();
    let text = serde_json::to_string(&w).unwrap();
    assert_eq!(FiniteWorld::from_json(&text).unwrap(), w);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.json");
    std::fs::write(
        &path,
        text.replace(
            "\"distinct_responses\":true",
            "\"distinct_responses\":false",
        ),
    )
    .unwrap();
    assert!(!FiniteWorld::load(&path).unwrap().distinct_responses);
    assert!(
        FiniteWorld::from_json(&text.replace("\"prompts\"", "\"bogus\":1,\"prompts\"")).is_err()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outcomes_are_probabilities(
        r in prop::collection::vec(-6.0f64..6.0, 2 * 2 * 3),
        p0 in 0.05f64..0.95,
    ) {
        let mut w = randomized_world(0);
        w.prompts.truncate(2);
        w.objective_probs = vec![p0, 1.0 - p0];
        for c in 0..2 {
            w.rewards[c].truncate(2);
            for x in 0..2 {
                for y in 0..3 {
                    w.rewards[c][x][y] = r[(c * 2 + x) * 3 + y];
                }
            }
            w.assignment[c].truncate(2);
        }
        let w = w.without_triples(|_, _, _| false).unwrap();
        let t = enumerate_potential_outcomes(&w).unwrap();
        for (x, y, yp) in w.triples() {
            let m = t.marginal[x][y][yp];
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!((m - enumerate_by_hand(&w, x, y, yp)).abs() < 1e-14);
            // swapping the pair complements the outcome
            prop_assert!((m + t.marginal[x][yp][y] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn heterogeneous_rewards_are_detected(
        a0 in -5.0f64..5.0, b0 in -5.0f64..5.0, a1 in -5.0f64..5.0, b1 in -5.0f64..5.0,
    ) {
        prop_assume!((a0 - b0) != (a1 - b1));
        let mut w = confounded_micro_world();
        w.rewards = vec![vec![vec![a0, b0]], vec![vec![a1, b1]]];
        let t = enumerate_potential_outcomes(&w).unwrap();
        prop_assert_ne!(t.conditional[0][0][0][1], t.conditional[1][0][0][1]);
    }
}
