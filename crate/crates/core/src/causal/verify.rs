use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::estimator::{plugin_estimator, CellKey, Conditioning, Level};
use super::{FiniteWorld, Observation};
use crate::btl::invert_to_reward_diff;
use crate::error::{Error, Result};

/// Exact-equality slack for comparing probability and reward tables.
const TABLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Tolerance {
    /// Absolute error bound.
    Fixed(f64),
    /// `k` binomial standard errors at the cell's true mean and sample size.
    BinomialSe(f64),
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::BinomialSe(3.0)
    }
}

impl Tolerance {
    pub fn bound(&self, truth: f64, n: usize) -> f64 {
        match *self {
            Tolerance::Fixed(t) => t,
            Tolerance::BinomialSe(k) => {
                if n == 0 {
                    0.0
                } else {
                    k * (truth * (1.0 - truth) / n as f64).sqrt()
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Tolerance::Fixed(t) | Tolerance::BinomialSe(t) => t,
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {v}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    /// A treatment triple has zero marginal propensity.
    Positivity {
        x: usize,
        y: usize,
        y_prime: usize,
    },
    /// `π(x, y, y' | c)` differs across objectives.
    Unconfoundedness {
        x: usize,
        y: usize,
        y_prime: usize,
        max_gap: f64,
    },
    /// Declared `Y ⫫ Y' | X` does not hold.
    ConditionalIndependence {
        c: usize,
        x: usize,
    },
    /// Two raw pairs share a latent image but not a reward.
    Sufficiency {
        c: usize,
        first: (usize, usize),
        second: (usize, usize),
    },
    /// A latent cell with zero propensity.
    LatentPositivity {
        cell: CellKey,
    },
    MissingLatentMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    EstimationFailure,
    AssumptionsViolated,
}

/// Plug-in estimate against the enumerated truth for one raw triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub triple: (usize, usize, usize),
    /// Estimation cell; equals the triple at the raw level.
    pub cell: CellKey,
    pub truth: f64,
    /// Withheld when the cell has no data or no support.
    pub estimate: Option<f64>,
    pub n: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl CellCheck {
    pub fn error(&self) -> Option<f64> {
        self.estimate.map(|e| (e - self.truth).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    pub n: usize,
    pub seed: u64,
    pub tolerance: Tolerance,
    pub cells: Vec<CellCheck>,
    /// Failing cell with the largest error, or the first cell without an
    /// estimate.
    pub worst: Option<CellCheck>,
    /// Largest error over cells that have an estimate.
    pub max_error: f64,
}

/// Assumption prechecks. `Level::Raw` covers positivity, unconfoundedness
/// and declared conditional independence; `Level::Latent` swaps raw
/// positivity for sufficiency of the latent map and latent positivity.
pub fn check_assumptions(world: &FiniteWorld, level: Level) -> Result<Vec<Violation>> {
    world.validate()?;
    let mut out = Vec::new();
    for (x, y, yp) in world.triples() {
        let probs: Vec<f64> = world.assignment.iter().map(|a| a[x][y][yp]).collect();
        let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > TABLE_TOL {
            out.push(Violation::Unconfoundedness {
                x,
                y,
                y_prime: yp,
                max_gap: hi - lo,
            });
        }
    }
    if world.declares_conditional_independence {
        for c in 0..world.n_objectives() {
            for x in 0..world.n_prompts() {
                if !independent(&world.assignment[c][x], world.distinct_responses) {
                    out.push(Violation::ConditionalIndependence { c, x });
                }
            }
        }
    }
    match level {
        Level::Raw => {
            for (x, y, yp) in world.triples() {
                if world.propensity(x, y, yp) <= 0.0 {
                    out.push(Violation::Positivity { x, y, y_prime: yp });
                }
            }
        }
        Level::Latent => {
            let Some(g) = &world.latent else {
                out.push(Violation::MissingLatentMap);
                return Ok(out);
            };
            for c in 0..world.n_objectives() {
                let mut seen: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
                for x in 0..world.n_prompts() {
                    for y in 0..world.n_responses() {
                        let z = (g.prompt_latent[x], g.treatment_latent[x][y]);
                        match seen.get(&z) {
                            None => {
                                seen.insert(z, (x, y));
                            }
                            Some(&(ox, oy)) => {
                                if (world.rewards[c][x][y] - world.rewards[c][ox][oy]).abs()
                                    > TABLE_TOL
                                {
                                    out.push(Violation::Sufficiency {
                                        c,
                                        first: (ox, oy),
                                        second: (x, y),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            for (cell, mass) in latent_propensity(world)? {
                if mass <= 0.0 {
                    out.push(Violation::LatentPositivity { cell });
                }
            }
        }
    }
    Ok(out)
}

/// Marginal propensity of each latent cell.
fn latent_propensity(world: &FiniteWorld) -> Result<BTreeMap<CellKey, f64>> {
    let mut mass = BTreeMap::new();
    for (x, y, yp) in world.triples() {
        *mass
            .entry(world.cell_key(Level::Latent, None, x, y, yp)?)
            .or_insert(0.0) += world.propensity(x, y, yp);
    }
    Ok(mass)
}

/// Whether a `[y][y']` slice factors as `p(y)·q(y')` on its support
/// (off the diagonal when responses are distinct). The factors are fitted by
/// iterative proportional fitting, which is exact in one sweep without the
/// diagonal restriction.
fn independent(m: &[Vec<f64>], distinct: bool) -> bool {
    let ny = m.len();
    let total: f64 = m.iter().flatten().sum();
    if total <= 0.0 {
        return true;
    }
    let inside = |y: usize, yp: usize| !distinct || y != yp;
    let rows: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..ny).map(|j| m.iter().map(|r| r[j]).sum()).collect();
    let (mut p, mut q) = (vec![1.0; ny], vec![1.0; ny]);
    for _ in 0..5_000 {
        for y in 0..ny {
            let s: f64 = (0..ny).filter(|&j| inside(y, j)).map(|j| q[j]).sum();
            p[y] = if s > 0.0 { rows[y] / s } else { 0.0 };
        }
        for j in 0..ny {
            let s: f64 = (0..ny).filter(|&y| inside(y, j)).map(|y| p[y]).sum();
            q[j] = if s > 0.0 { cols[j] / s } else { 0.0 };
        }
    }
    (0..ny).all(|y| {
        (0..ny)
            .filter(|&j| inside(y, j))
            .all(|j| (p[y] * q[j] - m[y][j]).abs() <= 1e-9 * total)
    })
}

/// Plug-in estimates conditioned on raw triples against the enumerated
/// marginal outcomes.
pub fn verify_prop1(
    world: &FiniteWorld,
    n: usize,
    tolerance: Tolerance,
    seed: u64,
) -> Result<VerifyReport> {
    tolerance.validate()?;
    let violations = check_assumptions(world, Level::Raw)?;
    let samples = world.simulate(n, seed)?;
    let table = plugin_estimator(world, &samples, Conditioning::RAW)?;
    let cells = world
        .triples()
        .map(|(x, y, yp)| {
            let key = world.cell_key(Level::Raw, None, x, y, yp)?;
            let est = table.get(&key).expect("every treatment has a cell");
            Ok(check_cell(
                (x, y, yp),
                key,
                world.marginal_outcome(x, y, yp),
                est.mean,
                est.n,
                tolerance,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(violations, n, seed, tolerance, cells))
}

/// Plug-in estimates conditioned on latent cells against the enumerated
/// outcome of every raw triple mapping to that cell, including triples
/// never observed.
pub fn verify_prop2(
    world: &FiniteWorld,
    n: usize,
    tolerance: Tolerance,
    seed: u64,
) -> Result<VerifyReport> {
    tolerance.validate()?;
    let violations = check_assumptions(world, Level::Latent)?;
    if violations.contains(&Violation::MissingLatentMap) {
        return Err(Error::invalid("latent verification needs a latent map"));
    }
    let support = latent_propensity(world)?;
    let samples = world.simulate(n, seed)?;
    let table = plugin_estimator(world, &samples, Conditioning::LATENT)?;
    let cells = world
        .triples()
        .map(|(x, y, yp)| {
            let key = world.cell_key(Level::Latent, None, x, y, yp)?;
            let est = table.get(&key).expect("every treatment has a cell");
            let mean = if support[&key] > 0.0 { est.mean } else { None };
            Ok(check_cell(
                (x, y, yp),
                key,
                world.marginal_outcome(x, y, yp),
                mean,
                est.n,
                tolerance,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(violations, n, seed, tolerance, cells))
}

fn check_cell(
    triple: (usize, usize, usize),
    cell: CellKey,
    truth: f64,
    estimate: Option<f64>,
    n: usize,
    tolerance: Tolerance,
) -> CellCheck {
    let bound = tolerance.bound(truth, n);
    CellCheck {
        triple,
        cell,
        truth,
        estimate,
        n,
        tolerance: bound,
        pass: estimate.is_some_and(|e| (e - truth).abs() <= bound),
    }
}

fn finish(
    violations: Vec<Violation>,
    n: usize,
    seed: u64,
    tolerance: Tolerance,
    cells: Vec<CellCheck>,
) -> VerifyReport {
    let max_error = cells
        .iter()
        .filter_map(CellCheck::error)
        .fold(0.0, f64::max);
    let worst = cells
        .iter()
        .find(|c| c.estimate.is_none())
        .or_else(|| {
            cells
                .iter()
                .filter(|c| !c.pass)
                .max_by(|a, b| a.error().partial_cmp(&b.error()).expect("finite"))
        })
        .copied();
    let verdict = if !violations.is_empty() {
        Verdict::AssumptionsViolated
    } else if cells.iter().all(|c| c.pass) {
        Verdict::Pass
    } else {
        Verdict::EstimationFailure
    };
    VerifyReport {
        verdict,
        violations,
        n,
        seed,
        tolerance,
        cells,
        worst,
        max_error,
    }
}

/// `σ⁻¹(Ê[L | x, y, y'])` from single-objective samples.
pub fn recover_reward_difference(
    samples: &[Observation],
    triple: (usize, usize, usize),
) -> Result<f64> {
    let (x, y, yp) = triple;
    let cell: Vec<&Observation> = samples
        .iter()
        .filter(|o| o.x == x && o.y == y && o.y_prime == yp)
        .collect();
    if cell.is_empty() {
        return Err(Error::Empty(format!("no samples for triple {triple:?}")));
    }
    if cell.iter().any(|o| o.c != cell[0].c) {
        return Err(Error::invalid(
            "reward differences need a single-objective world",
        ));
    }
    let ones = cell.iter().filter(|o| o.l == 1).count();
    if ones == 0 || ones == cell.len() {
        return Err(Error::invalid(format!(
            "empirical mean of triple {triple:?} is {}; logit undefined",
            if ones == 0 { 0 } else { 1 }
        )));
    }
    invert_to_reward_diff(ones as f64 / cell.len() as f64)
}
