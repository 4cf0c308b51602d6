use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FiniteWorld, Observation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Cells are raw triples `(x, y, y')`.
    Raw,
    /// Cells are latent triples `(z^X, z^T, z'^T)`.
    Latent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditioning {
    pub level: Level,
    /// Additionally condition on the objective `C`.
    pub given_c: bool,
}

impl Conditioning {
    pub const RAW: Self = Self {
        level: Level::Raw,
        given_c: false,
    };
    pub const RAW_GIVEN_C: Self = Self {
        level: Level::Raw,
        given_c: true,
    };
    pub const LATENT: Self = Self {
        level: Level::Latent,
        given_c: false,
    };
    pub const LATENT_GIVEN_C: Self = Self {
        level: Level::Latent,
        given_c: true,
    };
}

/// `(c, prompt, first, second)` where the last three are raw indices or
/// latent values depending on the conditioning level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub c: Option<usize>,
    pub prompt: usize,
    pub first: usize,
    pub second: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEstimate {
    pub key: CellKey,
    pub n: usize,
    pub ones: usize,
    /// `None` when the cell received no data; never imputed.
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub conditioning: Conditioning,
    pub cells: Vec<CellEstimate>,
}

impl EstimateTable {
    pub fn get(&self, key: &CellKey) -> Option<&CellEstimate> {
        self.cells
            .binary_search_by(|c| c.key.cmp(key))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn empty_cells(&self) -> impl Iterator<Item = &CellEstimate> {
        self.cells.iter().filter(|c| c.mean.is_none())
    }
}

impl FiniteWorld {
    /// Cell of a raw triple under a conditioning level.
    pub fn cell_key(
        &self,
        level: Level,
        c: Option<usize>,
        x: usize,
        y: usize,
        yp: usize,
    ) -> Result<CellKey> {
        Ok(match level {
            Level::Raw => CellKey {
                c,
                prompt: x,
                first: y,
                second: yp,
            },
            Level::Latent => {
                let g = self
                    .latent
                    .as_ref()
                    .ok_or_else(|| Error::invalid("world has no latent map"))?;
                CellKey {
                    c,
                    prompt: g.prompt_latent[x],
                    first: g.treatment_latent[x][y],
                    second: g.treatment_latent[x][yp],
                }
            }
        })
    }
}

/// Empirical `Ê[L | cell]` for every cell reachable from the world's
/// treatment triples.
pub fn plugin_estimator(
    world: &FiniteWorld,
    samples: &[Observation],
    conditioning: Conditioning,
) -> Result<EstimateTable> {
    let objectives: Vec<Option<usize>> = if conditioning.given_c {
        (0..world.n_objectives()).map(Some).collect()
    } else {
        vec![None]
    };
    let mut counts: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
    for &c in &objectives {
        for (x, y, yp) in world.triples() {
            counts.insert(world.cell_key(conditioning.level, c, x, y, yp)?, (0, 0));
        }
    }
    for o in samples {
        let c = conditioning.given_c.then_some(o.c);
        let key = world.cell_key(conditioning.level, c, o.x, o.y, o.y_prime)?;
        let entry = counts.get_mut(&key).ok_or_else(|| {
            Error::invalid(format!(
                "observation (x={}, y={}, y'={}) is not a treatment of this world",
                o.x, o.y, o.y_prime
            ))
        })?;
        entry.0 += 1;
        entry.1 += o.l as usize;
    }
    Ok(EstimateTable {
        conditioning,
        cells: counts
            .into_iter()
            .map(|(key, (n, ones))| CellEstimate {
                key,
                n,
                ones,
                mean: (n > 0).then(|| ones as f64 / n as f64),
            })
            .collect(),
    })
}
