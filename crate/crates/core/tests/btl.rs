use cpl_core::autodiff::Graph;
use cpl_core::btl::{btl_nll, invert_to_reward_diff, nll_on_graph, pref_prob, LabelledBatch};
use ndarray::array;
use proptest::prelude::*;

/// `e^x` by its power series, independent of `f64::exp`.
fn exp_series(x: f64) -> f64 {
    let (mut term, mut total) = (1.0, 1.0);
    for n in 1..60 {
        term *= x / n as f64;
        total += term;
    }
    total
}

#[test]
fn logistic_values_match_series() {
    let oracle = 1.0 / (1.0 + exp_series(-1.0));
    assert!((pref_prob(1.0, 0.0).unwrap() - oracle).abs() < 1e-12);
    assert!((pref_prob(1.0, 0.0).unwrap() - 0.731_058_578_6).abs() < 1e-9);
    let single = LabelledBatch::new(vec![(1.0, 0)]).unwrap();
    assert!((btl_nll(&single).unwrap() - 0.313_261_7).abs() < 1e-7);
    assert!((invert_to_reward_diff(0.9).unwrap() - 2.197_224_6).abs() < 1e-7);
    assert_eq!(invert_to_reward_diff(0.5).unwrap(), 0.0);
    assert!(pref_prob(700.0, 0.0).unwrap() <= 1.0 && pref_prob(-700.0, 0.0).unwrap() > 0.0);
}

#[test]
fn winner_gradient_matches_closed_form() {
    for (m, l) in [(0.7, 0u8), (-1.3, 1), (2.0, 1)] {
        let mut g = Graph::new();
        let r = g.leaf(array![[m]]);
        let rp = g.leaf(array![[0.0]]);
        let nll = nll_on_graph(&mut g, r, rp, &[l]).unwrap();
        let grads = g.backward(nll).unwrap();
        let winner = if l == 0 { r } else { rp };
        let margin = if l == 0 { m } else { -m };
        let expected = 1.0 / (1.0 + (-margin).exp()) - 1.0;
        assert!((grads.wrt(winner)[[0, 0]] - expected).abs() < 1e-15);
        assert!(expected > -1.0 && expected < 0.0);
    }
}

proptest! {
    #[test]
    fn probabilities_are_antisymmetric(r in -50.0f64..50.0, rp in -50.0f64..50.0) {
        let (a, b) = (pref_prob(r, rp).unwrap(), pref_prob(rp, r).unwrap());
        prop_assert!((a + b - 1.0).abs() < 1e-15);
        prop_assert!(a > 0.0 && a < 1.0 || (r - rp).abs() > 36.0);
    }

    #[test]
    fn prompt_shifts_are_invisible(r in -1000i32..1000, rp in -1000i32..1000, f in -1000i32..1000) {
        // integer-valued rewards keep the shifted differences exact
        let (r, rp, f) = (r as f64 / 8.0, rp as f64 / 8.0, f as f64 / 8.0);
        prop_assert_eq!(pref_prob(r + f, rp + f).unwrap(), pref_prob(r, rp).unwrap());
    }

    #[test]
    fn nll_is_nonnegative_and_swap_symmetric(
        items in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, 0u8..=1), 1..40),
    ) {
        let first: Vec<f64> = items.iter().map(|t| t.0).collect();
        let second: Vec<f64> = items.iter().map(|t| t.1).collect();
        let labels: Vec<u8> = items.iter().map(|t| t.2).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = btl_nll(&LabelledBatch::from_rewards(&first, &second, &labels).unwrap()).unwrap();
        let b = btl_nll(&LabelledBatch::from_rewards(&second, &first, &flipped).unwrap()).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn inversion_round_trips(p in 1e-6f64..(1.0 - 1e-6)) {
        let d = invert_to_reward_diff(p).unwrap();
        prop_assert!((pref_prob(d, 0.0).unwrap() - p).abs() < 1e-12);
    }
}
