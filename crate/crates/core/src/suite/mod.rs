//! Acceptance battery: numbered criteria, per-module invariant checks and
//! trend assertions, with JUnit XML and text reports.

pub mod criteria;
pub mod invariants;
pub mod trend;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTree;

pub use criteria::{run_criterion, CriterionContext, CriterionResult, CRITERIA};
pub use invariants::{coverage, CoverageEntry, INVARIANT_SUITES};
pub use trend::{assert_trend, Direction, TrendAssertion, TrendEvidence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// Invariants, oracles and small studies; skips the two training trend
    /// criteria. Meant for CI.
    Smoke,
    Desk,
    PaperScale,
}

impl Budget {
    pub fn name(self) -> &'static str {
        match self {
            Budget::Smoke => "smoke",
            Budget::Desk => "desk",
            Budget::PaperScale => "paper-scale",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Budget::Smoke),
            "desk" => Ok(Budget::Desk),
            "paper-scale" | "paper" => Ok(Budget::PaperScale),
            _ => Err(Error::invalid(format!(
                "unknown budget '{s}' (expected smoke, desk or paper-scale)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            detail: detail.into(),
            seconds: 0.0,
        }
    }

    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome: Outcome::Skipped,
            detail: why.into(),
            seconds: 0.0,
        }
    }

    /// Errors count as failures, with the error as detail.
    pub fn from_result(name: impl Into<String>, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((pass, detail)) => Self::new(name, pass, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }

    pub fn failed(&self) -> bool {
        self.outcome == Outcome::Fail
    }
}

/// Runs `f` and records its wall time on the result.
pub fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let mut c = CheckResult::from_result(name, f());
    c.seconds = start.elapsed().as_secs_f64();
    c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl SuiteResult {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.failed()).count()
    }
}

#[derive(Clone, Debug)]
pub struct BatteryOptions {
    pub budget: Budget,
    pub root_seed: u64,
    /// Worker threads for suites and for the studies inside criteria.
    pub jobs: usize,
    /// Scratch space for study runs.
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatterySummary {
    pub budget: Budget,
    pub root_seed: u64,
    pub suites: Vec<SuiteResult>,
    pub coverage: Vec<CoverageEntry>,
}

impl BatterySummary {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(|s| s.failures() == 0)
    }

    pub fn failures(&self) -> usize {
        self.suites.iter().map(SuiteResult::failures).sum()
    }

    /// Outcomes and details without timings; equal across reruns with the
    /// same root seed.
    pub fn fingerprint(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            for c in &suite.checks {
                let _ = writeln!(s, "{}/{}: {:?} {}", suite.name, c.name, c.outcome, c.detail);
            }
        }
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = format!(
            "battery: budget {}, root seed {}\n\n",
            self.budget.name(),
            self.root_seed
        );
        let width = self.suites.iter().map(|s| s.name.len()).max().unwrap_or(0);
        for s in &self.suites {
            let count = |o| s.checks.iter().filter(|c| c.outcome == o).count();
            let _ = writeln!(
                out,
                "{:width$}  pass {:>3}  fail {:>3}  skipped {:>3}  {:>8.1} s",
                s.name,
                count(Outcome::Pass),
                count(Outcome::Fail),
                count(Outcome::Skipped),
                s.seconds,
            );
        }
        out.push('\n');
        for s in &self.suites {
            for c in &s.checks {
                let tag = match c.outcome {
                    Outcome::Pass => "PASS",
                    Outcome::Fail => "FAIL",
                    Outcome::Skipped => "SKIP",
                };
                let _ = writeln!(out, "{tag} {}/{}: {}", s.name, c.name, c.detail);
            }
        }
        let _ = writeln!(
            out,
            "\n{}: {} failing check(s)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.failures()
        );
        out
    }

    pub fn to_junit_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let total: usize = self.suites.iter().map(|s| s.checks.len()).sum();
        let _ = writeln!(
            out,
            "<testsuites name=\"cpl-battery\" tests=\"{total}\" failures=\"{}\">",
            self.failures()
        );
        for s in &self.suites {
            let skipped = s
                .checks
                .iter()
                .filter(|c| c.outcome == Outcome::Skipped)
                .count();
            let _ = writeln!(
                out,
                "  <testsuite name=\"{}\" tests=\"{}\" failures=\"{}\" skipped=\"{skipped}\" time=\"{:.3}\">",
                xml_escape(&s.name),
                s.checks.len(),
                s.failures(),
                s.seconds
            );
            for c in &s.checks {
                let _ = write!(
                    out,
                    "    <testcase classname=\"{}\" name=\"{}\" time=\"{:.3}\"",
                    xml_escape(&s.name),
                    xml_escape(&c.name),
                    c.seconds
                );
                match c.outcome {
                    Outcome::Pass => {
                        let _ = writeln!(out, "/>");
                    }
                    Outcome::Fail => {
                        let _ = writeln!(
                            out,
                            ">\n      <failure message=\"{}\"/>\n    </testcase>",
                            xml_escape(&c.detail)
                        );
                    }
                    Outcome::Skipped => {
                        let _ = writeln!(
                            out,
                            ">\n      <skipped message=\"{}\"/>\n    </testcase>",
                            xml_escape(&c.detail)
                        );
                    }
                }
            }
            out.push_str("  </testsuite>\n");
        }
        out.push_str("</testsuites>\n");
        out
    }

    /// Writes `battery.txt`, `battery.xml`, `battery.json` and
    /// `coverage.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let files = [
            ("battery.txt", self.render_text()),
            ("battery.xml", self.to_junit_xml()),
            ("battery.json", serde_json::to_string_pretty(self)? + "\n"),
            (
                "coverage.json",
                serde_json::to_string_pretty(&self.coverage)? + "\n",
            ),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::file(&p, e))?;
        }
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\n', "&#10;")
}

/// Runs every invariant suite and the criteria within `opts.budget`.
///
/// Invariant suites run in parallel; criteria run one after another, each
/// study inside them using `opts.jobs` workers, so their runtime bounds are
/// measured without competing work.
pub fn run_full_battery(opts: &BatteryOptions) -> Result<BatterySummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let root = SeedTree::new(opts.root_seed);
    let mut suites: Vec<SuiteResult> = pool.install(|| {
        INVARIANT_SUITES
            .par_iter()
            .map(|(name, suite)| {
                let start = Instant::now();
                let checks = suite(root.child("invariants").child(name).seed(), opts);
                SuiteResult {
                    name: format!("invariants/{name}"),
                    checks,
                    seconds: start.elapsed().as_secs_f64(),
                }
            })
            .collect()
    });

    let ctx = CriterionContext {
        budget: opts.budget,
        root_seed: opts.root_seed,
        jobs: opts.jobs,
        out_dir: opts.out_dir.join("criteria"),
    };
    let start = Instant::now();
    let checks = CRITERIA
        .iter()
        .map(|(id, _)| run_criterion(*id, &ctx).into_check())
        .collect();
    suites.push(SuiteResult {
        name: "criteria".into(),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    });

    let coverage = coverage();
    let executed: Vec<String> = suites
        .iter()
        .flat_map(|s| {
            s.checks
                .iter()
                .map(move |c| format!("{}/{}", s.name, c.name))
        })
        .collect();
    let unmapped: Vec<String> = coverage
        .iter()
        .filter(|e| e.checks.is_empty() || !e.checks.iter().all(|c| executed.contains(c)))
        .map(|e| format!("{}: {}", e.module, e.invariant))
        .collect();
    suites.push(SuiteResult {
        name: "coverage".into(),
        checks: vec![CheckResult::new(
            "every invariant maps to an executed check",
            unmapped.is_empty(),
            if unmapped.is_empty() {
                format!("{} invariants mapped", coverage.len())
            } else {
                format!("unmapped: {}", unmapped.join("; "))
            },
        )],
        seconds: 0.0,
    });
    Ok(BatterySummary {
        budget: opts.budget,
        root_seed: opts.root_seed,
        suites,
        coverage,
    })
}
