//! The bivariate-normal δ-plane: `δ = Z - Z' ~ N(0, [[1, ρ], [ρ, 1]])`,
//! labels from the linear rule `αδ₁ + (1-α)δ₂`, and the fitted weight α̂.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::softplus;
use crate::btl::winner_margin;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SeedTree};
use crate::worlds::assign_label;

/// Reward scale used by [`fit_alpha`]. A fixed-scale fit on noise-free
/// labels keeps gaining likelihood by growing the weight norm, so the fitted
/// direction is normalized and then scaled to a sharp but finite slope.
pub const FIT_SCALE: f64 = 20.0;

const GRID: usize = 1_000;
const GOLDEN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaModel {
    pub rho: f64,
    pub alpha: f64,
}

impl DeltaModel {
    pub fn new(rho: f64, alpha: f64) -> Result<Self> {
        let m = Self { rho, alpha };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        check_alpha(self.alpha)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!(
            "correlation must lie in (-1, 1), got {rho}"
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// `½ - arcsin(ρ)/π`, the mass of the second and fourth quadrants.
pub fn opposite_sign_probability(rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(0.5 - rho.asin() / std::f64::consts::PI)
}

/// Quadrant of a point, numbered counter-clockwise from `(+, +)`. Zero
/// coordinates count as positive.
pub fn quadrant(d: [f64; 2]) -> usize {
    match (d[0] >= 0.0, d[1] >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSample {
    pub deltas: Vec<[f64; 2]>,
    /// Empirical mass per quadrant, see [`quadrant`].
    pub quadrant_mass: [f64; 4],
}

impl DeltaSample {
    pub fn opposite_sign_mass(&self) -> f64 {
        self.quadrant_mass[1] + self.quadrant_mass[3]
    }

    pub fn correlation(&self) -> f64 {
        let (d1, d2): (Vec<f64>, Vec<f64>) = self.deltas.iter().map(|d| (d[0], d[1])).unzip();
        crate::worlds::pearson(&d1, &d2)
    }
}

/// `n` draws through the Cholesky factor `[[1, 0], [ρ, √(1-ρ²)]]`.
pub fn simulate_delta(model: &DeltaModel, n: usize, seed: u64) -> Result<DeltaSample> {
    model.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let mut rng = rng_from_seed(seed);
    let tail = (1.0 - model.rho * model.rho).sqrt();
    let mut counts = [0usize; 4];
    let deltas: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let d = [a, model.rho * a + tail * b];
            counts[quadrant(d)] += 1;
            d
        })
        .collect();
    Ok(DeltaSample {
        deltas,
        quadrant_mass: counts.map(|c| c as f64 / n as f64),
    })
}

/// `0` (first preferred) if `αδ₁ + (1-α)δ₂ > 0`, `1` if negative, coin on zero.
pub fn label_delta<R: Rng + ?Sized>(delta: [f64; 2], alpha: f64, rng: &mut R) -> u8 {
    assign_label(alpha * delta[0] + (1.0 - alpha) * delta[1], 0.0, rng)
}

/// Draws and labels `n` differences under `model`.
pub fn labelled_deltas(
    model: &DeltaModel,
    n: usize,
    seed: u64,
) -> Result<(Vec<[f64; 2]>, Vec<u8>)> {
    let tree = SeedTree::new(seed);
    let sample = simulate_delta(model, n, tree.child("deltas").seed())?;
    let mut rng = tree.child("ties").rng();
    let labels = sample
        .deltas
        .iter()
        .map(|&d| label_delta(d, model.alpha, &mut rng))
        .collect();
    Ok((sample.deltas, labels))
}

/// Mean BTL NLL of `r̂ = FIT_SCALE·(αz₁ + (1-α)z₂)/‖(α, 1-α)‖`.
pub fn alpha_objective(deltas: &[[f64; 2]], labels: &[u8], alpha: f64) -> f64 {
    let norm = (alpha * alpha + (1.0 - alpha) * (1.0 - alpha)).sqrt();
    let (w1, w2) = (FIT_SCALE * alpha / norm, FIT_SCALE * (1.0 - alpha) / norm);
    let total: f64 = deltas
        .iter()
        .zip(labels)
        .map(|(d, &l)| softplus(-winner_margin(w1 * d[0] + w2 * d[1], l)))
        .sum();
    total / deltas.len() as f64
}

/// α̂ ∈ [0, 1] minimizing [`alpha_objective`]: grid scan at 1e-3, then
/// golden-section search on the bracketing interval to 1e-6.
pub fn fit_alpha(deltas: &[[f64; 2]], labels: &[u8]) -> Result<f64> {
    if deltas.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} differences but {} labels",
            deltas.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Empty("no labelled differences".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::invalid(
            "all labels identical; the likelihood has no minimizer",
        ));
    }
    let f = |a: f64| alpha_objective(deltas, labels, a);
    let best = (0..=GRID)
        .map(|i| (i, f(i as f64 / GRID as f64)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid")
        .0;
    let lo = best.saturating_sub(1) as f64 / GRID as f64;
    let hi = (best + 1).min(GRID) as f64 / GRID as f64;
    Ok(golden_section(f, lo, hi, GOLDEN_TOL).clamp(0.0, 1.0))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the endpoints may beat the interior on a monotone bracket
    [a, mid, b]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("three candidates")
}

/// α̂ over `reps` independent samples of size `n`, seeded per replication.
pub fn alpha_replications(
    model: &DeltaModel,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let tree = SeedTree::new(seed);
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let (d, l) = labelled_deltas(model, n, tree.indexed("rep", r as u64).seed())?;
            fit_alpha(&d, &l)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftAccuracy {
    pub accuracy: f64,
    pub n: usize,
    /// Misclassified draws per quadrant.
    pub errors_by_quadrant: [usize; 4],
}

/// Accuracy of the `α̂` rule against `α` labels on fresh draws at `ρ_test`.
pub fn accuracy_under_shift(
    alpha_hat: f64,
    alpha: f64,
    rho_test: f64,
    n: usize,
    seed: u64,
) -> Result<ShiftAccuracy> {
    check_alpha(alpha_hat)?;
    let model = DeltaModel::new(rho_test, alpha)?;
    let tree = SeedTree::new(seed);
    let (deltas, labels) = labelled_deltas(&model, n, tree.child("truth").seed())?;
    let mut rng = tree.child("predict").rng();
    let mut errors = [0usize; 4];
    for (d, l) in deltas.iter().zip(&labels) {
        if label_delta(*d, alpha_hat, &mut rng) != *l {
            errors[quadrant(*d)] += 1;
        }
    }
    let wrong: usize = errors.iter().sum();
    Ok(ShiftAccuracy {
        accuracy: 1.0 - wrong as f64 / n as f64,
        n,
        errors_by_quadrant: errors,
    })
}

/// One row of the closed-form against Monte Carlo table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcsinRow {
    pub rho: f64,
    pub closed_form: f64,
    pub monte_carlo: f64,
    /// Binomial standard error of the Monte Carlo mass at the closed form.
    pub stderr: f64,
}

impl ArcsinRow {
    pub fn within(&self, k: f64) -> bool {
        (self.monte_carlo - self.closed_form).abs() <= k * self.stderr
    }
}

pub fn arcsin_table(rhos: &[f64], n: usize, seed: u64) -> Result<Vec<ArcsinRow>> {
    let tree = SeedTree::new(seed);
    rhos.par_iter()
        .enumerate()
        .map(|(i, &rho)| {
            let p = opposite_sign_probability(rho)?;
            let s = simulate_delta(
                &DeltaModel::new(rho, 0.5)?,
                n,
                tree.indexed("rho", i as u64).seed(),
            )?;
            Ok(ArcsinRow {
                rho,
                closed_form: p,
                monte_carlo: s.opposite_sign_mass(),
                stderr: (p * (1.0 - p) / n as f64).sqrt(),
            })
        })
        .collect()
}

/// `count` evenly spaced correlations strictly inside `(-1, 1)`.
pub fn rho_grid(count: usize, limit: f64) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..count)
            .map(|i| -limit + 2.0 * limit * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_edges() {
        assert_eq!(opposite_sign_probability(0.0).unwrap(), 0.5);
        assert!(opposite_sign_probability(0.9999).unwrap() < 0.01);
        assert!(opposite_sign_probability(1.0).is_err());
        assert!(opposite_sign_probability(f64::NAN).is_err());
    }

    #[test]
    fn linear_rule() {
        let mut rng = rng_from_seed(0);
        assert_eq!(label_delta([1.0, 1.0], 0.7, &mut rng), 0);
        assert_eq!(label_delta([1.0, -0.4], 0.25, &mut rng), 1);
        assert_eq!(label_delta([-5.0, 0.1], 0.0, &mut rng), 0);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|a| (a - 0.3137).powi(2), 0.0, 1.0, 1e-9);
        assert!((x - 0.3137).abs() < 1e-8);
    }

    #[test]
    fn identical_labels_are_rejected() {
        assert!(fit_alpha(&[[1.0, 1.0], [2.0, 0.5]], &[0, 0]).is_err());
    }
}
