use cpl_core::gaussian::{
    accuracy_under_shift, alpha_objective, alpha_replications, arcsin_table, fit_alpha,
    labelled_deltas, opposite_sign_probability, simulate_delta, variance, DeltaModel,
};
use proptest::prelude::*;

/// Orthant mass through the angle between the two half-plane normals,
/// `atan2(√(1-ρ²), ρ)/π`, independent of `asin`.
fn angle_oracle(rho: f64) -> f64 {
    (1.0 - rho * rho).sqrt().atan2(rho) / std::f64::consts::PI
}

#[test]
fn closed_form_matches_angle_oracle() {
    for rho in [-0.9, -0.5, 0.0, 0.3, 0.5, 0.9] {
        let p = opposite_sign_probability(rho).unwrap();
        assert!((p - angle_oracle(rho)).abs() < 1e-12, "rho {rho}");
    }
    let p = opposite_sign_probability(0.9).unwrap();
    assert!((p - 0.1436).abs() < 1e-3, "{p}");
}

#[test]
fn monte_carlo_agrees_with_closed_form() {
    let rhos = [-0.9, -0.5, 0.0, 0.5, 0.9];
    for row in arcsin_table(&rhos, 1_000_000, 17).unwrap() {
        assert!(row.within(3.0), "{row:?}");
    }
    let s = simulate_delta(&DeltaModel::new(0.9, 0.5).unwrap(), 1_000_000, 3).unwrap();
    assert!((s.opposite_sign_mass() - 0.1436).abs() < 1e-3);
}

#[test]
fn independent_quadrants_are_balanced() {
    let s = simulate_delta(&DeltaModel::new(0.0, 0.5).unwrap(), 1_000_000, 4).unwrap();
    for m in s.quadrant_mass {
        assert!(m > 0.248 && m < 0.252, "{:?}", s.quadrant_mass);
    }
    for rho in [0.0, 0.6, -0.8] {
        let s = simulate_delta(&DeltaModel::new(rho, 0.5).unwrap(), 1_000_000, 5).unwrap();
        assert!((s.correlation() - rho).abs() < 0.005);
    }
}

#[test]
fn seeded_trials_stay_within_three_errors() {
    let mut inside = 0;
    for trial in 0..100u64 {
        let rho = -0.9 + 1.8 * (trial % 10) as f64 / 9.0;
        let row = &arcsin_table(&[rho], 10_000, 1_000 + trial).unwrap()[0];
        inside += usize::from(row.within(3.0));
    }
    assert!(inside >= 95, "{inside}/100");
}

#[test]
fn alpha_is_recovered() {
    let (d, l) = labelled_deltas(&DeltaModel::new(0.0, 0.25).unwrap(), 50_000, 7).unwrap();
    let a = fit_alpha(&d, &l).unwrap();
    assert!(a > 0.23 && a < 0.27, "{a}");
    let (d, l) = labelled_deltas(&DeltaModel::new(0.0, 0.0).unwrap(), 50_000, 8).unwrap();
    assert!(fit_alpha(&d, &l).unwrap() < 0.05);
}

#[test]
fn objective_is_unimodal_on_generated_samples() {
    for (i, (rho, alpha)) in [
        (0.0, 0.25),
        (0.9, 0.25),
        (-0.8, 0.6),
        (0.5, 0.0),
        (0.9, 1.0),
    ]
    .into_iter()
    .enumerate()
    {
        let (d, l) =
            labelled_deltas(&DeltaModel::new(rho, alpha).unwrap(), 5_000, i as u64).unwrap();
        let f: Vec<f64> = (0..=1_000)
            .map(|k| alpha_objective(&d, &l, k as f64 / 1e3))
            .collect();
        let turns = f.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
        assert_eq!(
            turns, 0,
            "interior local maximum at rho {rho}, alpha {alpha}"
        );
    }
}

#[test]
fn correlated_deltas_inflate_alpha_variance() {
    let near = alpha_replications(&DeltaModel::new(0.9, 0.25).unwrap(), 5_000, 50, 31).unwrap();
    let flat = alpha_replications(&DeltaModel::new(0.0, 0.25).unwrap(), 5_000, 50, 31).unwrap();
    assert!(
        variance(&near) > variance(&flat),
        "{} vs {}",
        variance(&near),
        variance(&flat)
    );
}

#[test]
fn matched_boundary_is_accurate() {
    let a = accuracy_under_shift(0.4, 0.4, 0.3, 100_000, 1).unwrap();
    assert!(a.accuracy > 0.995 && a.accuracy <= 1.0);
}

#[test]
fn errors_live_in_opposite_sign_quadrants() {
    for (hat, alpha, rho) in [(0.2, 0.7, 0.0), (0.9, 0.1, -0.5), (0.5, 0.45, 0.8)] {
        let a = accuracy_under_shift(hat, alpha, rho, 50_000, 2).unwrap();
        assert_eq!(a.errors_by_quadrant[0], 0);
        assert_eq!(a.errors_by_quadrant[2], 0);
        assert!(a.errors_by_quadrant[1] + a.errors_by_quadrant[3] > 0);
    }
}

#[test]
fn anticorrelated_test_data_hurts_more() {
    let neg = accuracy_under_shift(0.35, 0.25, -0.8, 200_000, 3).unwrap();
    let pos = accuracy_under_shift(0.35, 0.25, 0.8, 200_000, 3).unwrap();
    assert!(1.0 - neg.accuracy > 1.0 - pos.accuracy);
}

proptest! {
    #[test]
    fn probability_is_decreasing_and_complementary(a in -0.999f64..0.999, b in -0.999f64..0.999) {
        prop_assume!(a < b);
        let (pa, pb) = (opposite_sign_probability(a).unwrap(), opposite_sign_probability(b).unwrap());
        prop_assert!(pa > pb);
        prop_assert!((pa + opposite_sign_probability(-a).unwrap() - 1.0).abs() < 1e-15);
    }
}
