//! Runs a study config end to end and writes its artifacts.
//!
//! Grid cells (one per swept value and training seed) run on a bounded
//! worker pool. Each cell derives every seed it uses from the root seed and
//! its own coordinates, writes only its own files, and returns its results;
//! aggregation and the report files are single-threaded, in grid order.
//! Nothing time- or machine-dependent is written, so a rerun reproduces every
//! file byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::amce::{amce_table, Density, LatentReward, SIGMOID_NOTE};
use crate::causal::{
    check_assumptions, confounded_micro_world, latent_world, plugin_estimator, randomized_world,
    verify_prop1, verify_prop2, CellKey, Conditioning, FiniteWorld, Level, Verdict, VerifyReport,
};
use crate::config::{
    AmceRewardSpec, AmceSection, DensityChoice, ExperimentConfig, GaussianSection, ModelsSection,
    OracleSection, Study, WorldSection,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, consistency_report, id_ood_report, ExperimentReport, ReportMeta, SeedResult,
    SliceSpec, UNCERTAINTY_NOTE,
};
use crate::gaussian::{
    accuracy_under_shift, alpha_replications, arcsin_table, rho_grid, variance, ArcsinRow,
    DeltaModel,
};
use crate::models::{train_run, TrainConfig};
use crate::rng::SeedTree;
use crate::worlds::io::{write_dataset, FORMAT_VERSION};
use crate::worlds::{make_splits_by_count, ConfoundedWorld, Dataset, UltraFeedbackWorld};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Library modules whose behavior a run depends on.
const MODULES: [&str; 9] = [
    "autodiff", "btl", "worlds", "models", "eval", "causal", "gaussian", "amce", "runner",
];

/// A failure inside a named stage of a run.
#[derive(Debug, thiserror::Error)]
#[error("stage '{stage}' failed: {source}")]
pub struct RunError {
    pub stage: String,
    #[source]
    pub source: Error,
}

impl RunError {
    pub fn new(stage: impl Into<String>, source: Error) -> Self {
        Self {
            stage: stage.into(),
            source,
        }
    }
}

trait Stage<T> {
    fn stage(self, name: impl FnOnce() -> String) -> std::result::Result<T, RunError>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: impl FnOnce() -> String) -> std::result::Result<T, RunError> {
        self.map_err(|e| RunError::new(name(), e))
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `0` means one per core.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reconstruct a run: the resolved config, the seeds
/// derived from it, and what was written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub name: String,
    pub study: Study,
    /// SHA-256 of the config's canonical JSON.
    pub config_hash: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub versions: BTreeMap<String, String>,
    pub config: ExperimentConfig,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(Error::format(
                "manifest",
                format!("unsupported version {}", m.manifest_version),
            ));
        }
        if m.config_hash != config_hash(&m.config)? {
            return Err(Error::format(
                "manifest",
                "config hash does not match the recorded config",
            ));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(
        serde_json::to_string(&cfg.portable())?.as_bytes(),
    ))
}

pub fn module_versions() -> BTreeMap<String, String> {
    let mut v: BTreeMap<String, String> = MODULES
        .iter()
        .map(|m| (m.to_string(), env!("CARGO_PKG_VERSION").to_string()))
        .collect();
    v.insert("dataset-format".into(), FORMAT_VERSION.to_string());
    v.insert("checkpoint-format".into(), "CPLW1".into());
    v.insert("manifest-format".into(), MANIFEST_VERSION.to_string());
    v
}

/// Report of whichever study ran.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "lowercase")]
pub enum StudyReport {
    Experiment(ExperimentReport),
    Gaussian(GaussianReport),
    Oracle(OracleReport),
    Amce(AmceReport),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub report: StudyReport,
}

/// Relative-path file sink under the output directory.
struct Out<'a> {
    root: &'a Path,
}

impl Out<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        }
        Ok(p)
    }

    fn write(&self, rel: &str, bytes: &[u8]) -> Result<String> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| Error::file(&p, e))?;
        Ok(rel.to_string())
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::format("csv", e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::format("csv", e.to_string()))
}

/// Runs `cfg` and writes its artifacts under `opts.out_dir`.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> std::result::Result<RunOutcome, RunError> {
    cfg.validate().stage(|| "validate".into())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| RunError::new("setup", Error::invalid(format!("worker pool: {e}"))))?;
    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| RunError::new("setup", Error::file(&opts.out_dir, e)))?;
    let out = Out {
        root: &opts.out_dir,
    };
    let root = SeedTree::new(cfg.root_seed);
    let mut seeds = BTreeMap::new();
    let (report, mut files) = pool.install(|| match cfg.study {
        Study::Ultrafeedback | Study::Confounded => run_training(cfg, root, &out, &mut seeds),
        Study::Gaussian => run_gaussian(
            cfg.gaussian.as_ref().expect("validated"),
            root,
            &out,
            &mut seeds,
        ),
        Study::Oracle => run_oracle(
            cfg.oracle.as_ref().expect("validated"),
            root,
            &out,
            &mut seeds,
        ),
        Study::Amce => run_amce(
            cfg.amce.as_ref().expect("validated"),
            root,
            &out,
            &mut seeds,
        ),
    })?;

    files.sort();
    files.dedup();
    let outputs = files
        .iter()
        .map(|rel| {
            let p = opts.out_dir.join(rel);
            let bytes = std::fs::read(&p).map_err(|e| Error::file(&p, e))?;
            Ok(OutputFile {
                path: rel.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()
        .stage(|| "manifest".into())?;
    let config = cfg.portable();
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        name: cfg.name.clone(),
        study: cfg.study,
        config_hash: config_hash(&config).stage(|| "manifest".into())?,
        root_seed: cfg.root_seed,
        seeds,
        versions: module_versions(),
        config,
        outputs,
    };
    manifest
        .to_json()
        .and_then(|j| out.write(MANIFEST_FILE, j.as_bytes()))
        .stage(|| "manifest".into())?;
    Ok(RunOutcome { manifest, report })
}

type Staged<T> = std::result::Result<T, RunError>;

fn knob_dir(knob: f64) -> String {
    format!("rho={knob}")
}

struct CellOut {
    results: Vec<SeedResult>,
    files: Vec<String>,
    seeds: Vec<(String, u64)>,
}

fn run_training(
    cfg: &ExperimentConfig,
    root: SeedTree,
    out: &Out,
    seeds: &mut BTreeMap<String, u64>,
) -> Staged<(StudyReport, Vec<String>)> {
    let w = cfg.world.as_ref().expect("validated");
    let m = cfg.models.as_ref().expect("validated");
    let t = cfg.train.as_ref().expect("validated");
    let cells: Vec<(f64, u64)> = w
        .grid
        .iter()
        .flat_map(|&k| t.seeds.iter().map(move |&s| (k, s)))
        .collect();
    let done: Vec<CellOut> = cells
        .par_iter()
        .map(|&(knob, seed)| training_cell(cfg, w, m, t, root, out, knob, seed))
        .collect::<Staged<_>>()?;

    let mut per_seed = Vec::new();
    let mut files = Vec::new();
    for c in done {
        per_seed.extend(c.results);
        files.extend(c.files);
        seeds.extend(c.seeds);
    }
    let meta = ReportMeta {
        study: cfg.study.name().into(),
        knob: if cfg.study == Study::Ultrafeedback {
            "rho_tr"
        } else {
            "rho"
        }
        .into(),
        root_seed: cfg.root_seed,
        seeds: t.seeds.clone(),
        uncertainty: UNCERTAINTY_NOTE.into(),
        config: serde_json::to_value(cfg.portable())
            .map_err(|e| RunError::new("report", e.into()))?,
    };
    let variants: Vec<String> = m.variants.iter().map(|v| v.name().to_string()).collect();
    let report = match cfg.study {
        Study::Ultrafeedback => id_ood_report(meta, variants, w.grid.clone(), per_seed),
        _ => consistency_report(meta, variants, w.grid.clone(), per_seed),
    }
    .stage(|| "report".into())?;
    files.extend(write_experiment_report(&report, out).stage(|| "report".into())?);
    Ok((StudyReport::Experiment(report), files))
}

/// Train split, validation split and the named test sets.
type Splits = (Dataset, Dataset, Vec<(&'static str, Dataset)>);

#[allow(clippy::too_many_arguments)]
fn training_cell(
    cfg: &ExperimentConfig,
    w: &WorldSection,
    m: &ModelsSection,
    t: &TrainConfig,
    root: SeedTree,
    out: &Out,
    knob: f64,
    seed: u64,
) -> Staged<CellOut> {
    let tag = format!("{}/seed-{seed}", knob_dir(knob));
    let cell = root.child(&knob_dir(knob)).indexed("seed", seed);
    let map_seed = root.child("map").indexed("seed", seed).seed();
    let data_seed = cell.child("data").seed();
    let split_seed = cell.child("splits").seed();
    let test_seed = cell.child("test").seed();
    let init_seed = cell.child("init").seed();
    let seeds = vec![
        (format!("map/seed-{seed}"), map_seed),
        (format!("{tag}/data"), data_seed),
        (format!("{tag}/splits"), split_seed),
        (format!("{tag}/test"), test_seed),
        (format!("{tag}/init"), init_seed),
    ];
    let embedding = w.embedding.with_map_seed(map_seed);

    let generate = || -> Result<Splits> {
        match cfg.study {
            Study::Ultrafeedback => {
                let alpha = w.alpha.expect("validated");
                let world = UltraFeedbackWorld {
                    label_rule: w.label_rule,
                    embedding: embedding.clone(),
                    ..UltraFeedbackWorld::new(knob, alpha, map_seed)
                };
                let data = world.sample(w.n_train + w.n_validation + w.n_test, data_seed)?;
                let s = make_splits_by_count(&data, w.n_train, w.n_validation, split_seed)?;
                let ood = UltraFeedbackWorld {
                    rho: w.test_rho,
                    ..world
                }
                .sample(w.n_test, test_seed)?;
                Ok((s.train, s.validation, vec![("test", s.test), ("ood", ood)]))
            }
            _ => {
                let world = ConfoundedWorld {
                    label_rule: w.label_rule,
                    embedding: embedding.clone(),
                    ..ConfoundedWorld::new(knob, map_seed)
                };
                let data = world.sample(w.n_train + w.n_validation, data_seed)?;
                let s = make_splits_by_count(&data, w.n_train, w.n_validation, split_seed)?;
                let test = ConfoundedWorld {
                    rho: w.test_rho,
                    ..world
                }
                .sample(w.n_test, test_seed)?;
                Ok((s.train, s.validation, vec![("test", test)]))
            }
        }
    };
    let (train, validation, tests) = generate().stage(|| format!("generate {tag}"))?;

    let mut files = Vec::new();
    if cfg.outputs.datasets {
        let all = [("train", &train), ("validation", &validation)]
            .into_iter()
            .chain(tests.iter().map(|(n, d)| (*n, d)));
        for (name, d) in all {
            let rel = format!("datasets/{tag}/{name}.jsonl");
            out.path(&rel)
                .and_then(|p| write_dataset(d, p))
                .stage(|| format!("write {rel}"))?;
            files.push(rel);
        }
    }

    let slices: Vec<(&str, &Dataset, SliceSpec)> = match cfg.study {
        Study::Ultrafeedback => vec![
            ("ID", &tests[0].1, SliceSpec::All),
            ("OOD", &tests[1].1, SliceSpec::All),
        ],
        _ => vec![
            ("consistent", &tests[0].1, SliceSpec::Consistent),
            ("inconsistent", &tests[0].1, SliceSpec::Inconsistent),
        ],
    };
    let mut results = Vec::new();
    for &variant in &m.variants {
        let name = variant.name();
        let spec = m.spec(variant, w.embedding.dim);
        let trained = train_run(&spec, &train, &validation, t, init_seed)
            .stage(|| format!("train {tag} {name}"))?;
        if cfg.outputs.checkpoints {
            let rel = format!("checkpoints/{tag}/{}.cplw", name.to_lowercase());
            out.path(&rel)
                .and_then(|p| trained.save(p))
                .stage(|| format!("write {rel}"))?;
            files.push(format!("{rel}.json"));
            files.push(rel);
        }
        for (slice, data, spec) in &slices {
            let a = accuracy(&trained.model, data, spec)
                .stage(|| format!("eval {tag} {name} {slice}"))?;
            results.push(SeedResult {
                variant: name.into(),
                knob,
                slice: (*slice).into(),
                seed,
                n: a.n,
                accuracy: a.mean,
                stderr: a.stderr,
            });
        }
    }
    Ok(CellOut {
        results,
        files,
        seeds,
    })
}

fn write_experiment_report(report: &ExperimentReport, out: &Out) -> Result<Vec<String>> {
    let mut files = vec![out.write("report.json", report.to_json()?.as_bytes())?];
    let mut table = Vec::new();
    report.write_table_csv(&mut table)?;
    files.push(out.write("table.csv", &table)?);
    let mut per_seed = Vec::new();
    report.write_seed_csv(&mut per_seed)?;
    files.push(out.write("seeds.csv", &per_seed)?);
    files.push(out.write("table.txt", report.render_table().as_bytes())?);
    let rows = report.cells.iter().map(|c| {
        vec![
            report.meta.study.clone(),
            report.meta.knob.clone(),
            c.knob.to_string(),
            c.variant.clone(),
            c.slice.clone(),
            c.seeds.to_string(),
            c.mean.to_string(),
            c.stderr.to_string(),
        ]
    });
    let plot = csv_bytes(
        &[
            "study",
            "knob_name",
            "knob",
            "variant",
            "slice",
            "seeds",
            "mean",
            "stderr",
        ],
        rows,
    )?;
    files.push(out.write("plot.csv", &plot)?);
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub rho: f64,
    pub mean: f64,
    pub variance: f64,
    pub estimates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    /// Correlation the rule was fitted at.
    pub fit_rho: f64,
    pub rho_test: f64,
    pub alpha_hat: f64,
    pub accuracy: f64,
    pub errors_by_quadrant: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianReport {
    pub alpha: f64,
    pub arcsin: Vec<ArcsinRow>,
    pub alpha_fits: Vec<AlphaSummary>,
    pub shift: Vec<ShiftRow>,
}

fn run_gaussian(
    g: &GaussianSection,
    root: SeedTree,
    out: &Out,
    seeds: &mut BTreeMap<String, u64>,
) -> Staged<(StudyReport, Vec<String>)> {
    let arcsin_seed = root.child("arcsin").seed();
    seeds.insert("arcsin".into(), arcsin_seed);
    let rhos = rho_grid(g.rho_count, g.rho_limit);
    let arcsin = arcsin_table(&rhos, g.mc_samples, arcsin_seed).stage(|| "arcsin table".into())?;

    let mut alpha_fits = Vec::new();
    for (i, &rho) in g.fit_rhos.iter().enumerate() {
        let s = root.child("alpha").indexed("rho", i as u64).seed();
        seeds.insert(format!("alpha/rho={rho}"), s);
        let estimates = DeltaModel::new(rho, g.alpha)
            .and_then(|m| alpha_replications(&m, g.fit_n, g.fit_reps, s))
            .stage(|| format!("fit alpha at rho={rho}"))?;
        alpha_fits.push(AlphaSummary {
            rho,
            mean: estimates.iter().sum::<f64>() / estimates.len() as f64,
            variance: variance(&estimates),
            estimates,
        });
    }

    let mut shift = Vec::new();
    for fit in &alpha_fits {
        for (j, &rho_test) in g.shift_rhos.iter().enumerate() {
            let s = root
                .child("shift")
                .child(&format!("fit={}", fit.rho))
                .indexed("test", j as u64)
                .seed();
            seeds.insert(format!("shift/fit={}/test={rho_test}", fit.rho), s);
            let a = accuracy_under_shift(fit.mean, g.alpha, rho_test, g.shift_n, s)
                .stage(|| format!("shift accuracy at rho={rho_test}"))?;
            shift.push(ShiftRow {
                fit_rho: fit.rho,
                rho_test,
                alpha_hat: fit.mean,
                accuracy: a.accuracy,
                errors_by_quadrant: a.errors_by_quadrant,
            });
        }
    }
    let report = GaussianReport {
        alpha: g.alpha,
        arcsin,
        alpha_fits,
        shift,
    };
    let files = write_gaussian(&report, out).stage(|| "report".into())?;
    Ok((StudyReport::Gaussian(report), files))
}

fn write_gaussian(r: &GaussianReport, out: &Out) -> Result<Vec<String>> {
    let arcsin = csv_bytes(
        &[
            "rho",
            "closed_form",
            "monte_carlo",
            "stderr",
            "z",
            "within_3se",
        ],
        r.arcsin.iter().map(|a| {
            vec![
                a.rho.to_string(),
                a.closed_form.to_string(),
                a.monte_carlo.to_string(),
                a.stderr.to_string(),
                ((a.monte_carlo - a.closed_form) / a.stderr).to_string(),
                a.within(3.0).to_string(),
            ]
        }),
    )?;
    let alpha = csv_bytes(
        &["rho", "rep", "alpha_hat"],
        r.alpha_fits.iter().flat_map(|f| {
            f.estimates
                .iter()
                .enumerate()
                .map(|(i, a)| vec![f.rho.to_string(), i.to_string(), a.to_string()])
        }),
    )?;
    let summary = csv_bytes(
        &["rho", "alpha", "mean", "variance", "reps"],
        r.alpha_fits.iter().map(|f| {
            vec![
                f.rho.to_string(),
                r.alpha.to_string(),
                f.mean.to_string(),
                f.variance.to_string(),
                f.estimates.len().to_string(),
            ]
        }),
    )?;
    let shift = csv_bytes(
        &[
            "fit_rho",
            "rho_test",
            "alpha_hat",
            "alpha",
            "accuracy",
            "errors_q1",
            "errors_q2",
            "errors_q3",
            "errors_q4",
        ],
        r.shift.iter().map(|s| {
            let mut row = vec![
                s.fit_rho.to_string(),
                s.rho_test.to_string(),
                s.alpha_hat.to_string(),
                r.alpha.to_string(),
                s.accuracy.to_string(),
            ];
            row.extend(s.errors_by_quadrant.iter().map(|e| e.to_string()));
            row
        }),
    )?;
    Ok(vec![
        out.write("arcsin.csv", &arcsin)?,
        out.write("alpha.csv", &alpha)?,
        out.write("alpha_summary.csv", &summary)?,
        out.write("shift.csv", &shift)?,
        out.write(
            "report.json",
            (serde_json::to_string_pretty(r)? + "\n").as_bytes(),
        )?,
    ])
}

/// One oracle verification and the verdict it is expected to reach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub level: Level,
    pub expected: Verdict,
    pub pass: bool,
    pub report: VerifyReport,
}

/// The naive and objective-conditioned estimates of the confounded micro
/// world's `(a, b)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroBias {
    pub truth: f64,
    pub naive: f64,
    pub bias: f64,
    /// Per objective; `None` where the objective never sees the pair.
    pub adjusted: Vec<Option<f64>>,
    pub conditional_truth: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
    pub micro: MicroBias,
}

impl OracleReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn oracle_check(
    name: String,
    world: &FiniteWorld,
    level: Level,
    o: &OracleSection,
    seed: u64,
    expected: Verdict,
) -> Staged<OracleCheck> {
    let report = match level {
        Level::Raw => verify_prop1(world, o.n, o.tolerance, seed),
        Level::Latent => verify_prop2(world, o.n, o.tolerance, seed),
    }
    .stage(|| format!("oracle {name}"))?;
    Ok(OracleCheck {
        pass: report.verdict == expected,
        name,
        level,
        expected,
        report,
    })
}

/// The latent world with every `(z^T = 1, z^T = 0)` pair of prompt 1 removed.
pub fn latent_world_with_gap() -> Result<FiniteWorld> {
    let w = latent_world();
    let g = w.latent.clone().expect("latent world has a map");
    w.without_triples(|x, y, yp| {
        x == 1 && g.treatment_latent[x][y] == 1 && g.treatment_latent[x][yp] == 0
    })
}

/// Naive and objective-conditioned estimates on the confounded micro world.
pub fn micro_bias(n: usize, seed: u64) -> Result<MicroBias> {
    let w = confounded_micro_world();
    let samples = w.simulate(n, seed)?;
    let key = |c| CellKey {
        c,
        prompt: 0,
        first: 0,
        second: 1,
    };
    let naive = plugin_estimator(&w, &samples, Conditioning::RAW)?
        .get(&key(None))
        .and_then(|e| e.mean)
        .ok_or_else(|| Error::invalid("micro world cell (a, b) has no samples"))?;
    let adjusted_table = plugin_estimator(&w, &samples, Conditioning::RAW_GIVEN_C)?;
    let truth = w.marginal_outcome(0, 0, 1);
    Ok(MicroBias {
        truth,
        naive,
        bias: naive - truth,
        adjusted: (0..w.n_objectives())
            .map(|c| adjusted_table.get(&key(Some(c))).and_then(|e| e.mean))
            .collect(),
        conditional_truth: (0..w.n_objectives())
            .map(|c| w.conditional_outcome(c, 0, 0, 1))
            .collect(),
    })
}

fn run_oracle(
    o: &OracleSection,
    root: SeedTree,
    out: &Out,
    seeds: &mut BTreeMap<String, u64>,
) -> Staged<(StudyReport, Vec<String>)> {
    let mut jobs: Vec<(String, FiniteWorld, Level, Verdict)> = Vec::new();
    for i in 0..o.worlds {
        let ws = root.child("world").indexed("randomized", i as u64).seed();
        seeds.insert(format!("world/randomized-{i}"), ws);
        jobs.push((
            format!("randomized-{i}"),
            randomized_world(ws),
            Level::Raw,
            Verdict::Pass,
        ));
    }
    jobs.push((
        "micro".into(),
        confounded_micro_world(),
        Level::Raw,
        Verdict::AssumptionsViolated,
    ));
    jobs.push((
        "latent".into(),
        latent_world(),
        Level::Latent,
        Verdict::Pass,
    ));
    jobs.push((
        "latent-gap".into(),
        latent_world_with_gap().stage(|| "oracle latent-gap".into())?,
        Level::Latent,
        Verdict::AssumptionsViolated,
    ));
    if let Some(p) = &o.world_file {
        let w = FiniteWorld::load(p).stage(|| format!("load {}", p.display()))?;
        let pass_if_clean = |level| -> Staged<Verdict> {
            let v = check_assumptions(&w, level).stage(|| "oracle world_file".into())?;
            Ok(if v.is_empty() {
                Verdict::Pass
            } else {
                Verdict::AssumptionsViolated
            })
        };
        jobs.push((
            "file".into(),
            w.clone(),
            Level::Raw,
            pass_if_clean(Level::Raw)?,
        ));
        if w.latent.is_some() {
            jobs.push((
                "file".into(),
                w.clone(),
                Level::Latent,
                pass_if_clean(Level::Latent)?,
            ));
        }
    }
    let sample_seeds: Vec<u64> = jobs
        .iter()
        .map(|(name, _, level, _)| {
            let s = root
                .child("samples")
                .child(&format!("{name}/{level:?}"))
                .seed();
            seeds.insert(format!("samples/{name}/{level:?}"), s);
            s
        })
        .collect();
    let checks: Vec<OracleCheck> = jobs
        .par_iter()
        .zip(&sample_seeds)
        .map(|((name, w, level, expected), &s)| {
            oracle_check(name.clone(), w, *level, o, s, *expected)
        })
        .collect::<Staged<_>>()?;
    let micro_seed = root.child("samples").child("micro-bias").seed();
    seeds.insert("samples/micro-bias".into(), micro_seed);
    let micro = micro_bias(o.n, micro_seed).stage(|| "oracle micro bias".into())?;
    let report = OracleReport { checks, micro };
    let files = write_oracle(&report, out).stage(|| "report".into())?;
    Ok((StudyReport::Oracle(report), files))
}

fn write_oracle(r: &OracleReport, out: &Out) -> Result<Vec<String>> {
    let summary = csv_bytes(
        &[
            "check",
            "level",
            "expected",
            "verdict",
            "pass",
            "violations",
            "max_error",
            "failing_cells",
            "n",
        ],
        r.checks.iter().map(|c| {
            vec![
                c.name.clone(),
                format!("{:?}", c.level).to_lowercase(),
                format!("{:?}", c.expected),
                format!("{:?}", c.report.verdict),
                c.pass.to_string(),
                c.report.violations.len().to_string(),
                c.report.max_error.to_string(),
                c.report
                    .cells
                    .iter()
                    .filter(|x| !x.pass)
                    .count()
                    .to_string(),
                c.report.n.to_string(),
            ]
        }),
    )?;
    let cells = csv_bytes(
        &[
            "check",
            "level",
            "x",
            "y",
            "y_prime",
            "truth",
            "estimate",
            "n",
            "tolerance",
            "pass",
        ],
        r.checks.iter().flat_map(|c| {
            c.report.cells.iter().map(move |x| {
                vec![
                    c.name.clone(),
                    format!("{:?}", c.level).to_lowercase(),
                    x.triple.0.to_string(),
                    x.triple.1.to_string(),
                    x.triple.2.to_string(),
                    x.truth.to_string(),
                    x.estimate.map_or(String::new(), |e| e.to_string()),
                    x.n.to_string(),
                    x.tolerance.to_string(),
                    x.pass.to_string(),
                ]
            })
        }),
    )?;
    Ok(vec![
        out.write("oracle.csv", &summary)?,
        out.write("cells.csv", &cells)?,
        out.write(
            "report.json",
            (serde_json::to_string_pretty(r)? + "\n").as_bytes(),
        )?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmceLine {
    pub reward: String,
    pub k: usize,
    pub m: String,
    pub amce: f64,
    pub oracle: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmceReport {
    pub note: String,
    pub rows: Vec<AmceLine>,
}

/// `rows` binary vectors with per-component rates drawn from `[0.1, 0.9]`.
pub fn empirical_rows(dim: usize, rows: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeedTree::new(seed).rng();
    let rates: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..0.9)).collect();
    (0..rows)
        .map(|_| {
            rates
                .iter()
                .map(|&p| f64::from(u8::from(rng.random_bool(p))))
                .collect()
        })
        .collect()
}

fn run_amce(
    a: &AmceSection,
    root: SeedTree,
    out: &Out,
    seeds: &mut BTreeMap<String, u64>,
) -> Staged<(StudyReport, Vec<String>)> {
    let mut rows = Vec::new();
    for (i, spec) in a.rewards.iter().enumerate() {
        let name = spec.name();
        let reward: &dyn LatentReward = match spec {
            AmceRewardSpec::Linear(r) => r,
            AmceRewardSpec::Nonadditive(r) => r,
        };
        for &choice in &a.densities {
            let density_rows = match choice {
                DensityChoice::Uniform => None,
                DensityChoice::Empirical => {
                    let s = root.child("amce").indexed("reward", i as u64).seed();
                    seeds.insert(format!("amce/reward-{i}"), s);
                    Some(empirical_rows(reward.dim(), a.empirical_rows, s))
                }
            };
            let table = amce_table(reward, |k| match &density_rows {
                None => Ok(Density::Uniform),
                Some(r) => Density::from_rows(r.iter().map(|v| v.as_slice()), k),
            })
            .stage(|| format!("amce {name}"))?;
            rows.extend(table.into_iter().map(|r| AmceLine {
                reward: name.clone(),
                k: r.k,
                m: r.density,
                amce: r.amce,
                oracle: r.oracle,
                gap: r.gap,
            }));
        }
    }
    let report = AmceReport {
        note: SIGMOID_NOTE.into(),
        rows,
    };
    let csv = csv_bytes(
        &["reward", "k", "m", "amce", "oracle", "gap"],
        report.rows.iter().map(|r| {
            vec![
                r.reward.clone(),
                r.k.to_string(),
                r.m.clone(),
                r.amce.to_string(),
                r.oracle.to_string(),
                r.gap.to_string(),
            ]
        }),
    )
    .stage(|| "report".into())?;
    let files = (|| -> Result<Vec<String>> {
        Ok(vec![
            out.write("amce.csv", &csv)?,
            out.write(
                "report.json",
                (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
            )?,
        ])
    })()
    .stage(|| "report".into())?;
    Ok((StudyReport::Amce(report), files))
}
