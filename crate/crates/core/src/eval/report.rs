use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNCERTAINTY_NOTE: &str = "per-seed stderr = sqrt(p(1-p)/n); cell mean = mean of \
per-seed accuracies; cell stderr = sample std of per-seed accuracies / sqrt(#seeds), or the \
per-seed binomial stderr when only one seed ran";

/// Accuracy of one trained model on one slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub variant: String,
    pub knob: f64,
    pub slice: String,
    pub seed: u64,
    pub n: usize,
    pub accuracy: f64,
    pub stderr: f64,
}

/// Seed-aggregated accuracy, as a fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variant: String,
    pub knob: f64,
    pub slice: String,
    pub seeds: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub study: String,
    /// Name of the swept knob, e.g. `rho_tr`.
    pub knob: String,
    pub root_seed: u64,
    pub seeds: Vec<u64>,
    pub uncertainty: String,
    /// Resolved study configuration.
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub meta: ReportMeta,
    pub variants: Vec<String>,
    pub knobs: Vec<f64>,
    pub slices: Vec<String>,
    pub cells: Vec<Cell>,
    pub per_seed: Vec<SeedResult>,
}

/// Builds a report, rejecting any declared `(variant, knob, slice)` cell
/// without results.
pub fn aggregate(
    meta: ReportMeta,
    variants: Vec<String>,
    knobs: Vec<f64>,
    slices: Vec<String>,
    per_seed: Vec<SeedResult>,
) -> Result<ExperimentReport> {
    for r in &per_seed {
        if !(0.0..=1.0).contains(&r.accuracy) || !(r.stderr >= 0.0) {
            return Err(Error::invalid(format!(
                "seed result out of range: accuracy {}, stderr {}",
                r.accuracy, r.stderr
            )));
        }
    }
    let mut cells = Vec::new();
    for v in &variants {
        for &k in &knobs {
            for s in &slices {
                let runs: Vec<&SeedResult> = per_seed
                    .iter()
                    .filter(|r| &r.variant == v && r.knob == k && &r.slice == s)
                    .collect();
                if runs.is_empty() {
                    return Err(Error::invalid(format!(
                        "report cell ({v}, {k}, {s}) has no results"
                    )));
                }
                let m = runs.len() as f64;
                let mean = runs.iter().map(|r| r.accuracy).sum::<f64>() / m;
                let stderr = if runs.len() == 1 {
                    runs[0].stderr
                } else {
                    let var = runs
                        .iter()
                        .map(|r| (r.accuracy - mean).powi(2))
                        .sum::<f64>()
                        / (m - 1.0);
                    (var / m).sqrt()
                };
                cells.push(Cell {
                    variant: v.clone(),
                    knob: k,
                    slice: s.clone(),
                    seeds: runs.len(),
                    mean,
                    stderr,
                });
            }
        }
    }
    Ok(ExperimentReport {
        meta,
        variants,
        knobs,
        slices,
        cells,
        per_seed,
    })
}

/// ID/OOD report over training correlations; slices are `ID` and `OOD`.
pub fn id_ood_report(
    meta: ReportMeta,
    variants: Vec<String>,
    knobs: Vec<f64>,
    per_seed: Vec<SeedResult>,
) -> Result<ExperimentReport> {
    aggregate(
        meta,
        variants,
        knobs,
        vec!["ID".into(), "OOD".into()],
        per_seed,
    )
}

/// Consistent/inconsistent report over confounding strengths.
pub fn consistency_report(
    meta: ReportMeta,
    variants: Vec<String>,
    knobs: Vec<f64>,
    per_seed: Vec<SeedResult>,
) -> Result<ExperimentReport> {
    aggregate(
        meta,
        variants,
        knobs,
        vec!["consistent".into(), "inconsistent".into()],
        per_seed,
    )
}

impl ExperimentReport {
    pub fn cell(&self, variant: &str, knob: f64, slice: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.knob == knob && c.slice == slice)
    }

    pub fn mean(&self, variant: &str, knob: f64, slice: &str) -> Result<f64> {
        self.cell(variant, knob, slice)
            .map(|c| c.mean)
            .ok_or_else(|| Error::invalid(format!("no cell ({variant}, {knob}, {slice})")))
    }

    /// One row per (variant, knob, slice, seed).
    pub fn write_seed_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "variant", "knob", "slice", "seed", "n", "accuracy", "stderr",
        ])
        .map_err(csv_err)?;
        for r in &self.per_seed {
            w.write_record([
                r.variant.clone(),
                r.knob.to_string(),
                r.slice.clone(),
                r.seed.to_string(),
                r.n.to_string(),
                r.accuracy.to_string(),
                r.stderr.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Table layout: one row per knob value, a mean and a stderr column (in
    /// percent) per slice and variant.
    pub fn write_table_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.meta.knob.clone()];
        for s in &self.slices {
            for v in &self.variants {
                header.push(format!("{s} {v} [%]"));
                header.push(format!("{s} {v} stderr"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for &k in &self.knobs {
            let mut row = vec![k.to_string()];
            for s in &self.slices {
                for v in &self.variants {
                    let c = self.cell(v, k, s).expect("every cell present");
                    row.push(format!("{:.2}", 100.0 * c.mean));
                    row.push(format!("{:.2}", 100.0 * c.stderr));
                }
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text version of the table layout.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>8}", self.meta.knob);
        for s in &self.slices {
            for v in &self.variants {
                let _ = write!(out, " | {:>22}", format!("{s} {v}"));
            }
        }
        out.push('\n');
        for &k in &self.knobs {
            let _ = write!(out, "{k:>8}");
            for s in &self.slices {
                for v in &self.variants {
                    let c = self.cell(v, k, s).expect("every cell present");
                    let txt = format!("{:.1} ± {:.1}", 100.0 * c.mean, 100.0 * c.stderr);
                    let _ = write!(out, " | {txt:>22}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        for v in &report.variants {
            for &k in &report.knobs {
                for s in &report.slices {
                    if report.cell(v, k, s).is_none() {
                        return Err(Error::format(
                            "report",
                            format!("missing cell ({v}, {k}, {s})"),
                        ));
                    }
                }
            }
        }
        Ok(report)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            study: "test".into(),
            knob: "rho".into(),
            root_seed: 1,
            seeds: vec![0, 1],
            uncertainty: UNCERTAINTY_NOTE.into(),
            config: serde_json::Value::Null,
        }
    }

    fn result(seed: u64, slice: &str, accuracy: f64) -> SeedResult {
        SeedResult {
            variant: "Base".into(),
            knob: 0.5,
            slice: slice.into(),
            seed,
            n: 100,
            accuracy,
            stderr: (accuracy * (1.0 - accuracy) / 100.0).sqrt(),
        }
    }

    #[test]
    fn seed_aggregation() {
        let r = aggregate(
            meta(),
            vec!["Base".into()],
            vec![0.5],
            vec!["all".into()],
            vec![result(0, "all", 0.6), result(1, "all", 0.8)],
        )
        .unwrap();
        let c = r.cell("Base", 0.5, "all").unwrap();
        assert!((c.mean - 0.7).abs() < 1e-15);
        // sample std of {0.6, 0.8} is √0.02, divided by √2
        assert!((c.stderr - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_cells_are_rejected() {
        let err = consistency_report(
            meta(),
            vec!["Base".into()],
            vec![0.5],
            vec![result(0, "consistent", 0.6)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = id_ood_report(
            meta(),
            vec!["Base".into()],
            vec![0.5],
            vec![result(0, "ID", 0.61), result(0, "OOD", 0.55)],
        )
        .unwrap();
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let mut csv = Vec::new();
        r.write_table_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("rho,ID Base [%],ID Base stderr,OOD Base [%]"));
        assert!(text.contains("0.5,61.00,"));
    }
}
