//! Finite-domain potential-outcomes engine.
//!
//! Outcome convention: `L = 1` means the first response `y` is preferred
//! over `y'`, so `E[L(x; y, y') | C = c] = σ(r_c(x, y) - r_c(x, y'))`. This is
//! the opposite of the dataset label `ℓ`, where `0` marks the first response.

mod estimator;
mod verify;
mod worlds;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub use estimator::{plugin_estimator, CellEstimate, CellKey, Conditioning, EstimateTable, Level};
pub use verify::{
    check_assumptions, recover_reward_difference, verify_prop1, verify_prop2, CellCheck, Tolerance,
    Verdict, VerifyReport, Violation,
};
pub use worlds::{confounded_micro_world, latent_world, randomized_world, LATENT_HELD_OUT};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Maps raw prompts and responses to discrete latents `(z^X, z^T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentMap {
    /// `z^X(x)`
    pub prompt_latent: Vec<usize>,
    /// `z^T(x, y)`, indexed `[x][y]`.
    pub treatment_latent: Vec<Vec<usize>>,
}

/// Finite prompts `X`, responses `Y`, objectives `C`, reward tables and an
/// assignment policy `π(x, y, y' | c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteWorld {
    pub prompts: Vec<String>,
    pub responses: Vec<String>,
    /// `P(C = c)`.
    pub objective_probs: Vec<f64>,
    /// `r_c(x, y)`, indexed `[c][x][y]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `π(x, y, y' | c)`, indexed `[c][x][y][y']`; each `c` slice sums to 1.
    pub assignment: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentMap>,
    /// Only triples with `y ≠ y'` are treatments.
    #[serde(default = "default_true")]
    pub distinct_responses: bool,
    /// The policy is declared to draw `y` and `y'` independently given `x`.
    #[serde(default)]
    pub declares_conditional_independence: bool,
}

fn default_true() -> bool {
    true
}

/// One simulated unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub c: usize,
    pub x: usize,
    pub y: usize,
    pub y_prime: usize,
    /// `1` when `y` was preferred.
    pub l: u8,
}

/// Exact expected outcomes for every triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    /// `E[L(x; y, y')]`, indexed `[x][y][y']`.
    pub marginal: Vec<Vec<Vec<f64>>>,
    /// `E[L(x; y, y') | C = c]`, indexed `[c][x][y][y']`.
    pub conditional: Vec<Vec<Vec<Vec<f64>>>>,
    /// `P(x, y, y') = Σ_c P(c) π(x, y, y' | c)`.
    pub propensity: Vec<Vec<Vec<f64>>>,
}

impl FiniteWorld {
    pub fn n_objectives(&self) -> usize {
        self.objective_probs.len()
    }

    pub fn n_prompts(&self) -> usize {
        self.prompts.len()
    }

    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }

    /// Triples that count as treatments.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (nx, ny) = (self.n_prompts(), self.n_responses());
        (0..nx).flat_map(move |x| {
            (0..ny).flat_map(move |y| {
                (0..ny)
                    .filter(move |&yp| !self.distinct_responses || yp != y)
                    .map(move |yp| (x, y, yp))
            })
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let world: Self = serde_json::from_str(text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    /// Shapes, finiteness and normalization of every distribution.
    pub fn validate(&self) -> Result<()> {
        let (nc, nx, ny) = (self.n_objectives(), self.n_prompts(), self.n_responses());
        if nc == 0 || nx == 0 || ny == 0 {
            return Err(Error::invalid(
                "objectives, prompts and responses must be non-empty",
            ));
        }
        check_distribution("P(C)", &self.objective_probs)?;
        if self.rewards.len() != nc
            || self
                .rewards
                .iter()
                .any(|rc| rc.len() != nx || rc.iter().any(|row| row.len() != ny))
        {
            return Err(Error::shape(format!(
                "reward table must be {nc} x {nx} x {ny}"
            )));
        }
        if self
            .rewards
            .iter()
            .flatten()
            .flatten()
            .any(|r| !r.is_finite())
        {
            return Err(Error::NonFinite("reward table".into()));
        }
        if self.assignment.len() != nc {
            return Err(Error::shape(format!(
                "assignment needs {nc} objective slices"
            )));
        }
        for (c, pc) in self.assignment.iter().enumerate() {
            if pc.len() != nx
                || pc
                    .iter()
                    .any(|px| px.len() != ny || px.iter().any(|r| r.len() != ny))
            {
                return Err(Error::shape(format!(
                    "assignment slice {c} must be {nx} x {ny} x {ny}"
                )));
            }
            let flat: Vec<f64> = pc.iter().flatten().flatten().copied().collect();
            check_distribution(&format!("pi(. | c={c})"), &flat)?;
            if self.distinct_responses {
                for (x, px) in pc.iter().enumerate() {
                    for (y, row) in px.iter().enumerate() {
                        if row[y] != 0.0 {
                            return Err(Error::invalid(format!(
                                "pi(x={x}, y={y}, y'={y} | c={c}) must be 0 when responses are distinct"
                            )));
                        }
                    }
                }
            }
        }
        if let Some(g) = &self.latent {
            if g.prompt_latent.len() != nx
                || g.treatment_latent.len() != nx
                || g.treatment_latent.iter().any(|r| r.len() != ny)
            {
                return Err(Error::shape(format!(
                    "latent map must cover {nx} prompts x {ny} responses"
                )));
            }
        }
        Ok(())
    }

    pub fn propensity(&self, x: usize, y: usize, yp: usize) -> f64 {
        self.objective_probs
            .iter()
            .zip(&self.assignment)
            .map(|(pc, a)| pc * a[x][y][yp])
            .sum()
    }

    /// `σ(r_c(x, y) - r_c(x, y'))`.
    pub fn conditional_outcome(&self, c: usize, x: usize, y: usize, yp: usize) -> f64 {
        sigmoid(self.rewards[c][x][y] - self.rewards[c][x][yp])
    }

    /// `Σ_c P(c)·σ(r_c(x, y) - r_c(x, y'))`.
    pub fn marginal_outcome(&self, x: usize, y: usize, yp: usize) -> f64 {
        (0..self.n_objectives())
            .map(|c| self.objective_probs[c] * self.conditional_outcome(c, x, y, yp))
            .sum()
    }

    /// Draws `n` units: `c ~ P(C)`, `(x, y, y') ~ π(· | c)`,
    /// `L ~ Bernoulli(σ(r_c(x, y) - r_c(x, y')))`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<Observation>> {
        self.validate()?;
        let ny = self.n_responses();
        let cells: Vec<Vec<(usize, usize, usize)>> = (0..self.n_objectives())
            .map(|_| {
                (0..self.n_prompts())
                    .flat_map(|x| (0..ny).flat_map(move |y| (0..ny).map(move |yp| (x, y, yp))))
                    .collect()
            })
            .collect();
        let cumulative: Vec<Vec<f64>> = self
            .assignment
            .iter()
            .map(|a| cumsum(a.iter().flatten().flatten().copied()))
            .collect();
        let objective_cdf = cumsum(self.objective_probs.iter().copied());
        let mut rng = rng_from_seed(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let c = draw(&objective_cdf, rng.random());
            let (x, y, yp) = cells[c][draw(&cumulative[c], rng.random())];
            let p = self.conditional_outcome(c, x, y, yp);
            let l = u8::from(rng.random::<f64>() < p);
            out.push(Observation {
                c,
                x,
                y,
                y_prime: yp,
                l,
            });
        }
        Ok(out)
    }
}

/// Exact tables by direct evaluation.
pub fn enumerate_potential_outcomes(world: &FiniteWorld) -> Result<OutcomeTable> {
    world.validate()?;
    let (nc, nx, ny) = (world.n_objectives(), world.n_prompts(), world.n_responses());
    let table3 = |f: &dyn Fn(usize, usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
        (0..nx)
            .map(|x| {
                (0..ny)
                    .map(|y| (0..ny).map(|yp| f(x, y, yp)).collect())
                    .collect()
            })
            .collect()
    };
    Ok(OutcomeTable {
        marginal: table3(&|x, y, yp| world.marginal_outcome(x, y, yp)),
        conditional: (0..nc)
            .map(|c| table3(&|x, y, yp| world.conditional_outcome(c, x, y, yp)))
            .collect(),
        propensity: table3(&|x, y, yp| world.propensity(x, y, yp)),
    })
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

fn cumsum(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Index of the first cumulative mass exceeding `u`, skipping zero-mass cells.
fn draw(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty");
    let target = u * total;
    let i = cdf.partition_point(|&m| m <= target);
    i.min(cdf.len() - 1)
}
