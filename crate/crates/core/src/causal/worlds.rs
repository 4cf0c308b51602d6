use rand::Rng;

use super::{FiniteWorld, LatentMap};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Raw triple that [`latent_world`] never assigns.
pub const LATENT_HELD_OUT: (usize, usize, usize) = (0, 0, 2);

/// One prompt, responses `a`/`b`, two equally likely objectives with
/// opposite rewards. Objective 0 only ever sees `(a, b)` and objective 1
/// only `(b, a)`.
pub fn confounded_micro_world() -> FiniteWorld {
    FiniteWorld {
        prompts: vec!["x".into()],
        responses: vec!["a".into(), "b".into()],
        objective_probs: vec![0.5, 0.5],
        rewards: vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        assignment: vec![
            vec![vec![vec![0.0, 1.0], vec![0.0, 0.0]]],
            vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]]],
        ],
        latent: None,
        distinct_responses: true,
        declares_conditional_independence: false,
    }
}

/// Three prompts, three responses, two objectives. The policy is shared by
/// both objectives and puts weight in `[0.75, 1.25]` (normalized) on every
/// ordered pair of distinct responses. Rewards rank responses the same way
/// under both objectives but with different spreads, so outcomes are
/// heterogeneous in `c` and stay away from ½.
pub fn randomized_world(seed: u64) -> FiniteWorld {
    let (nx, ny) = (3, 3);
    let mut rng = rng_from_seed(seed);
    let mut pi = vec![vec![vec![0.0; ny]; ny]; nx];
    for px in pi.iter_mut() {
        for (y, row) in px.iter_mut().enumerate() {
            for (yp, v) in row.iter_mut().enumerate() {
                if y != yp {
                    *v = rng.random_range(0.75..1.25);
                }
            }
        }
    }
    let total: f64 = pi.iter().flatten().flatten().sum();
    pi.iter_mut().flatten().flatten().for_each(|v| *v /= total);
    let rank = |x: usize, y: usize| ((x + y) % ny) as f64;
    let rewards = vec![
        (0..nx)
            .map(|x| (0..ny).map(|y| 2.0 * rank(x, y)).collect())
            .collect(),
        (0..nx)
            .map(|x| (0..ny).map(|y| 3.0 * rank(x, y) + x as f64).collect())
            .collect(),
    ];
    FiniteWorld {
        prompts: (0..nx).map(|x| format!("x{x}")).collect(),
        responses: (0..ny).map(|y| format!("y{y}")).collect(),
        objective_probs: vec![0.5, 0.5],
        rewards,
        assignment: vec![pi.clone(), pi],
        latent: None,
        distinct_responses: true,
        declares_conditional_independence: false,
    }
}

/// Two prompts, four responses; `z^T` pairs `{y0, y1} → 0` and
/// `{y2, y3} → 1`, `z^X(x) = x`. Rewards depend on `(x, y)` only through
/// the latents. The policy is uniform over distinct pairs except
/// [`LATENT_HELD_OUT`], which is never assigned although its latent cell is.
pub fn latent_world() -> FiniteWorld {
    let (nx, ny) = (2, 4);
    let zt = |y: usize| usize::from(y >= 2);
    let f = [
        |x: usize, z: usize| if z == 1 { 1.5 + 0.5 * x as f64 } else { 0.0 },
        |x: usize, z: usize| if z == 1 { -1.0 } else { 0.25 * x as f64 },
    ];
    let rewards = f
        .iter()
        .map(|fc| {
            (0..nx)
                .map(|x| (0..ny).map(|y| fc(x, zt(y))).collect())
                .collect()
        })
        .collect();
    let mut pi = vec![vec![vec![0.0; ny]; ny]; nx];
    for (x, px) in pi.iter_mut().enumerate() {
        for (y, row) in px.iter_mut().enumerate() {
            for (yp, v) in row.iter_mut().enumerate() {
                if y != yp && (x, y, yp) != LATENT_HELD_OUT {
                    *v = 1.0;
                }
            }
        }
    }
    let total: f64 = pi.iter().flatten().flatten().sum();
    pi.iter_mut().flatten().flatten().for_each(|v| *v /= total);
    FiniteWorld {
        prompts: (0..nx).map(|x| format!("x{x}")).collect(),
        responses: (0..ny).map(|y| format!("y{y}")).collect(),
        objective_probs: vec![0.5, 0.5],
        rewards,
        assignment: vec![pi.clone(), pi],
        latent: Some(LatentMap {
            prompt_latent: (0..nx).collect(),
            treatment_latent: (0..nx).map(|_| (0..ny).map(zt).collect()).collect(),
        }),
        distinct_responses: true,
        declares_conditional_independence: false,
    }
}

impl FiniteWorld {
    /// Copy with the policy zeroed on triples matching `drop` and each
    /// objective slice renormalized.
    pub fn without_triples(&self, drop: impl Fn(usize, usize, usize) -> bool) -> Result<Self> {
        let mut w = self.clone();
        for (c, pc) in w.assignment.iter_mut().enumerate() {
            for (x, px) in pc.iter_mut().enumerate() {
                for (y, row) in px.iter_mut().enumerate() {
                    for (yp, v) in row.iter_mut().enumerate() {
                        if drop(x, y, yp) {
                            *v = 0.0;
                        }
                    }
                }
            }
            let total: f64 = pc.iter().flatten().flatten().sum();
            if total <= 0.0 {
                return Err(Error::invalid(format!("policy for c={c} has no mass left")));
            }
            pc.iter_mut().flatten().flatten().for_each(|v| *v /= total);
        }
        w.validate()?;
        Ok(w)
    }
}
