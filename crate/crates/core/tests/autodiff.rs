use cpl_core::autodiff::gradcheck::{random_op_check, OpKind};
use cpl_core::autodiff::{gelu, Activation, AdamConfig, AdamState, Graph, Matrix, Mlp, MlpSpec};
use ndarray::array;
use proptest::prelude::*;

/// `erf` by its Maclaurin series, summed until terms vanish; accurate to
/// rounding for `|x| ≤ 3`.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut total = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x * x / n;
        let add = term / (2.0 * n + 1.0);
        total += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    total * 2.0 / std::f64::consts::PI.sqrt()
}

#[test]
fn gelu_matches_series_oracle() {
    assert_eq!(gelu(0.0), 0.0);
    assert!((gelu(10.0) - 10.0).abs() < 1e-4);
    for x in [-2.5, -1.0, -0.3, 0.5, 1.0, 2.0] {
        let expected = x * 0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
        assert!((gelu(x) - expected).abs() < 1e-14, "x = {x}");
    }
    assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
}

#[test]
fn reversal_at_unit_strength_negates_exactly() {
    let x = array![[0.3, -1.2], [2.0, 0.7]];
    let w = array![[1.5, -0.25], [0.5, 3.0]];
    let grad = |lambda: Option<f64>| {
        let mut g = Graph::new();
        let v = g.leaf(x.clone());
        let h = match lambda {
            Some(l) => g.grad_reverse(v, l).unwrap(),
            None => v,
        };
        let t = g.tanh(h);
        let c = g.constant(w.clone());
        let p = g.mul(t, c);
        let s = g.sum(p);
        g.backward(s).unwrap().wrt(v)
    };
    let plain = grad(None);
    assert_eq!(grad(Some(1.0)), plain.mapv(|v| -v));
    assert_eq!(grad(Some(2.5)), plain.mapv(|v| -2.5 * v));
    assert!(grad(Some(0.0)).iter().all(|v| *v == 0.0));
}

#[test]
fn backward_is_repeatable() {
    let mlp = Mlp::new(MlpSpec::new(vec![3, 5, 1], Activation::Gelu, 2)).unwrap();
    let x = array![[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]];
    let run = || {
        let mut g = Graph::new();
        let b = mlp.bind(&mut g);
        let vx = g.constant(x.clone());
        let out = b.forward(&mut g, vx);
        let s = g.sum(out);
        let grads = g.backward(s).unwrap();
        let first: Vec<Matrix> = b.parameter_vars().iter().map(|&v| grads.wrt(v)).collect();
        let again = g.backward(s).unwrap();
        let second: Vec<Matrix> = b.parameter_vars().iter().map(|&v| again.wrt(v)).collect();
        assert_eq!(first, second);
        first
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_follows_gradient_sign() {
    let mut p = array![[1.0, -1.0]];
    let mut state = AdamState::new(AdamConfig::default(), [&p]);
    let g = array![[0.3, -4.0]];
    state.step(&mut [&mut p], &[g]).unwrap();
    assert!((p[[0, 0]] - (1.0 - 1e-4)).abs() < 1e-9);
    assert!((p[[0, 1]] - (-1.0 + 1e-4)).abs() < 1e-9);
    assert_eq!(state.step_count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_op_passes_finite_differences(seed in any::<u64>()) {
        for op in OpKind::ALL {
            let c = random_op_check(op, seed).unwrap();
            prop_assert!(c.max_relative_error < 1e-5, "{op:?}: {}", c.max_relative_error);
            prop_assert!(c.entries > 0);
        }
    }
}
