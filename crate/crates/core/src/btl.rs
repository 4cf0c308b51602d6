//! Bradley-Terry-Luce preference probabilities and likelihood.
//!
//! Dataset labels follow the generator convention: `ℓ = 0` means the first
//! response won, `ℓ = 1` means the second one did.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softplus, Graph, Matrix, Var};
use crate::error::{Error, Result};

/// Rewards of the two options in one comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: f64,
    pub second: f64,
}

impl Comparison {
    pub fn new(first: f64, second: f64) -> Result<Self> {
        check_finite(first, "first reward")?;
        check_finite(second, "second reward")?;
        Ok(Self { first, second })
    }

    pub fn pref_prob(&self) -> f64 {
        sigmoid(self.first - self.second)
    }
}

/// Score differences `r - r'` with their binary labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelledBatch {
    items: Vec<(f64, u8)>,
}

impl LabelledBatch {
    pub fn new(items: Vec<(f64, u8)>) -> Result<Self> {
        for (i, &(diff, label)) in items.iter().enumerate() {
            check_finite(diff, "score difference")?;
            check_label(label).map_err(|e| Error::invalid(format!("item {i}: {e}")))?;
        }
        Ok(Self { items })
    }

    pub fn from_rewards(first: &[f64], second: &[f64], labels: &[u8]) -> Result<Self> {
        if first.len() != second.len() || first.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} first rewards, {} second rewards, {} labels",
                first.len(),
                second.len(),
                labels.len()
            )));
        }
        Self::new(
            first
                .iter()
                .zip(second)
                .zip(labels)
                .map(|((a, b), &l)| (a - b, l))
                .collect(),
        )
    }

    pub fn items(&self) -> &[(f64, u8)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// `P(first preferred) = σ(r - r')`.
pub fn pref_prob(r: f64, r_prime: f64) -> Result<f64> {
    Ok(Comparison::new(r, r_prime)?.pref_prob())
}

/// Negative log-likelihood `-Σ log σ(s_winner - s_loser)`.
pub fn btl_nll(batch: &LabelledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("BTL likelihood of an empty batch".into()));
    }
    Ok(batch
        .items
        .iter()
        .map(|&(diff, label)| softplus(-winner_margin(diff, label)))
        .sum())
}

/// `σ⁻¹(p)`: the reward difference implied by a preference probability.
pub fn invert_to_reward_diff(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "preference probability must lie strictly inside (0, 1), got {p}"
        )));
    }
    Ok((p / (1.0 - p)).ln())
}

/// `r - r'` signed so that it is positive when the labelled winner scores higher.
pub fn winner_margin(diff: f64, label: u8) -> f64 {
    if label == 0 {
        diff
    } else {
        -diff
    }
}

pub fn check_label(label: u8) -> Result<()> {
    if label > 1 {
        return Err(Error::invalid(format!(
            "preference labels must be 0 or 1, got {label}"
        )));
    }
    Ok(())
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("{what} = {x}")));
    }
    Ok(())
}

/// Summed BTL NLL on a graph. `first` and `second` are `n × 1` reward columns.
pub fn nll_on_graph(graph: &mut Graph, first: Var, second: Var, labels: &[u8]) -> Result<Var> {
    let n = graph.value(first).nrows();
    if graph.value(first).dim() != (n, 1) || graph.value(second).dim() != (n, 1) {
        return Err(Error::shape("reward columns must both be n x 1"));
    }
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{n} comparisons but {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("BTL likelihood of an empty batch".into()));
    }
    let mut signs = Matrix::zeros((n, 1));
    for (i, &l) in labels.iter().enumerate() {
        check_label(l)?;
        signs[[i, 0]] = if l == 0 { 1.0 } else { -1.0 };
    }
    let diff = graph.sub(first, second);
    let signs = graph.constant(signs);
    let margin = graph.mul(diff, signs);
    let neg = graph.neg(margin);
    let losses = graph.softplus(neg);
    Ok(graph.sum(losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equal_rewards_are_a_coin_flip() {
        assert_eq!(pref_prob(3.5, 3.5).unwrap(), 0.5);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(pref_prob(f64::NAN, 0.0).is_err());
        assert!(pref_prob(0.0, f64::INFINITY).is_err());
        assert!(LabelledBatch::new(vec![(f64::NAN, 0)]).is_err());
    }

    #[test]
    fn extreme_margins_stay_in_range() {
        let p = pref_prob(700.0, 0.0).unwrap();
        assert!(p <= 1.0 && p > 0.5);
        let q = pref_prob(-700.0, 0.0).unwrap();
        assert!(q > 0.0 && q < 0.5);
    }

    #[test]
    fn labels_outside_binary_are_hard_errors() {
        assert!(LabelledBatch::new(vec![(0.3, 2)]).is_err());
        let mut g = Graph::new();
        let a = g.leaf(array![[0.0]]);
        let b = g.leaf(array![[0.0]]);
        assert!(nll_on_graph(&mut g, a, b, &[3]).is_err());
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(
            btl_nll(&LabelledBatch::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn zero_differences_cost_log_two_each() {
        let batch = LabelledBatch::new(vec![(0.0, 0), (0.0, 1), (0.0, 0)]).unwrap();
        let nll = btl_nll(&batch).unwrap();
        assert!((nll - 3.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn inversion_rejects_boundary() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(invert_to_reward_diff(p).is_err(), "p = {p}");
        }
        assert_eq!(invert_to_reward_diff(0.5).unwrap(), 0.0);
    }

    #[test]
    fn graph_nll_matches_scalar_nll() {
        let first = [0.3, -1.2, 2.0];
        let second = [0.1, 0.4, 2.5];
        let labels = [0, 1, 0];
        let expected =
            btl_nll(&LabelledBatch::from_rewards(&first, &second, &labels).unwrap()).unwrap();
        let mut g = Graph::new();
        let a = g.leaf(Matrix::from_shape_vec((3, 1), first.to_vec()).unwrap());
        let b = g.leaf(Matrix::from_shape_vec((3, 1), second.to_vec()).unwrap());
        let loss = nll_on_graph(&mut g, a, b, &labels).unwrap();
        assert!((g.scalar(loss) - expected).abs() < 1e-14);
    }

    #[test]
    fn winner_gradient_is_sigma_minus_one() {
        // ∂/∂s_w of -log σ(s_w - s_l) = σ(s_w - s_l) - 1
        let (sw, sl) = (0.7, -0.4);
        let mut g = Graph::new();
        let a = g.leaf(array![[sw]]);
        let b = g.leaf(array![[sl]]);
        let loss = nll_on_graph(&mut g, a, b, &[0]).unwrap();
        let grads = g.backward(loss).unwrap();
        let analytic = sigmoid(sw - sl) - 1.0;
        assert!((grads.wrt(a)[[0, 0]] - analytic).abs() < 1e-15);
        assert!((grads.wrt(b)[[0, 0]] + analytic).abs() < 1e-15);
        assert!(analytic > -1.0 && analytic < 0.0);
    }
}
