//! Study configuration files.
//!
//! A config is a TOML table. The optional top-level `preset` key names a
//! built-in preset or a path (relative to the including file) whose table is
//! merged underneath: nested tables merge key by key, everything else is
//! replaced. Chains of presets are followed until a table has no `preset`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amce::{DiscretizedNonAdditive, LinearReward};
use crate::causal::Tolerance;
use crate::error::{Error, Result};
use crate::models::{RewardModelSpec, TrainConfig, Variant, Widths};
use crate::worlds::{EmbeddingConfig, LabelRule};

/// Built-in presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "ultrafeedback-desk",
        include_str!("../presets/ultrafeedback-desk.toml"),
    ),
    (
        "ultrafeedback-paper",
        include_str!("../presets/ultrafeedback-paper.toml"),
    ),
    (
        "ultrafeedback-smoke",
        include_str!("../presets/ultrafeedback-smoke.toml"),
    ),
    (
        "confounded-desk",
        include_str!("../presets/confounded-desk.toml"),
    ),
    (
        "confounded-paper",
        include_str!("../presets/confounded-paper.toml"),
    ),
    (
        "confounded-smoke",
        include_str!("../presets/confounded-smoke.toml"),
    ),
    ("gaussian", include_str!("../presets/gaussian.toml")),
    ("oracle", include_str!("../presets/oracle.toml")),
    ("amce", include_str!("../presets/amce.toml")),
];

const MAX_PRESET_DEPTH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Ultrafeedback,
    Confounded,
    Gaussian,
    Oracle,
    Amce,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Ultrafeedback => "ultrafeedback",
            Study::Confounded => "confounded",
            Study::Gaussian => "gaussian",
            Study::Oracle => "oracle",
            Study::Amce => "amce",
        }
    }

    fn trains_models(self) -> bool {
        matches!(self, Study::Ultrafeedback | Study::Confounded)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub datasets: bool,
    #[serde(default = "yes")]
    pub checkpoints: bool,
}

fn yes() -> bool {
    true
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            datasets: true,
            checkpoints: true,
        }
    }
}

/// Embedding knobs; the map seed is derived per training seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingKnobs {
    pub dim: usize,
    pub noise_sd: f64,
    pub nuisance: usize,
    pub type_gain: f64,
    pub weight_scale: f64,
}

impl Default for EmbeddingKnobs {
    fn default() -> Self {
        let d = EmbeddingConfig::default();
        Self {
            dim: d.dim,
            noise_sd: d.noise_sd,
            nuisance: d.nuisance,
            type_gain: d.type_gain,
            weight_scale: d.weight_scale,
        }
    }
}

impl EmbeddingKnobs {
    pub fn with_map_seed(&self, map_seed: u64) -> EmbeddingConfig {
        EmbeddingConfig {
            dim: self.dim,
            noise_sd: self.noise_sd,
            nuisance: self.nuisance,
            type_gain: self.type_gain,
            weight_scale: self.weight_scale,
            map_seed,
        }
    }
}

/// World knobs of the two model-training studies. `grid` is the swept
/// correlation: the training `ρ` for `ultrafeedback`, `P(t = c)` for
/// `confounded`. `test_rho` is the OOD correlation or the test set's
/// `P(t = c)` respectively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub grid: Vec<f64>,
    pub test_rho: f64,
    /// Reward weight of the first factor; `ultrafeedback` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    #[serde(default)]
    pub label_rule: LabelRule,
    #[serde(default)]
    pub embedding: EmbeddingKnobs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub variants: Vec<Variant>,
    pub hidden: usize,
    pub latent: usize,
    /// Gradient-reversal strength; used by `adversarial` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl ModelsSection {
    pub fn widths(&self) -> Widths {
        Widths {
            hidden: self.hidden,
            latent: self.latent,
        }
    }

    pub fn spec(&self, variant: Variant, input_dim: usize) -> RewardModelSpec {
        RewardModelSpec::new(
            variant,
            input_dim,
            self.widths(),
            self.lambda.unwrap_or(1.0),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSection {
    /// Evenly spaced correlations in `[-rho_limit, rho_limit]`.
    pub rho_count: usize,
    pub rho_limit: f64,
    pub mc_samples: usize,
    pub alpha: f64,
    pub fit_n: usize,
    pub fit_reps: usize,
    pub fit_rhos: Vec<f64>,
    pub shift_rhos: Vec<f64>,
    pub shift_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub n: usize,
    /// Number of randomized full-support worlds checked at the raw level.
    pub worlds: usize,
    #[serde(default)]
    pub tolerance: Tolerance,
    /// Extra finite world (JSON) checked at both levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum AmceRewardSpec {
    Linear(LinearReward),
    Nonadditive(DiscretizedNonAdditive),
}

impl AmceRewardSpec {
    pub fn name(&self) -> String {
        match self {
            AmceRewardSpec::Linear(r) => format!("linear{}", r.weights.len()),
            AmceRewardSpec::Nonadditive(r) => format!("nonadditive{}", r.bits),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AmceRewardSpec::Linear(r) => r.weights.len(),
            AmceRewardSpec::Nonadditive(r) => 1 + r.bits,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityChoice {
    Uniform,
    /// Empirical density of `empirical_rows` seeded binary draws with
    /// per-component rates drawn uniformly from `[0.1, 0.9]`.
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmceSection {
    pub rewards: Vec<AmceRewardSpec>,
    pub densities: Vec<DensityChoice>,
    #[serde(default = "default_rows")]
    pub empirical_rows: usize,
}

fn default_rows() -> usize {
    5_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub study: Study,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<ModelsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amce: Option<AmceSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    /// Dotted path of the offending field, or `""` for the whole file.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        if self.field.is_empty() {
            write!(f, "{tag}: {}", self.message)
        } else {
            write!(f, "{tag}: {}: {}", self.field, self.message)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuntimeClass {
    /// Under a minute.
    Quick,
    /// Under half an hour.
    Minutes,
    LongRunning,
}

impl RuntimeClass {
    pub fn name(self) -> &'static str {
        match self {
            RuntimeClass::Quick => "quick",
            RuntimeClass::Minutes => "minutes",
            RuntimeClass::LongRunning => "long-running",
        }
    }
}

/// Result of [`validate`]: never an error, findings carry the problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub source: String,
    /// Presets in resolution order, nearest first.
    pub presets: Vec<String>,
    pub findings: Vec<Finding>,
    pub estimated_seconds: Option<f64>,
    pub runtime_class: Option<RuntimeClass>,
    #[serde(skip)]
    pub config: Option<ExperimentConfig>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.iter().all(|f| f.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn render(&self) -> String {
        let mut out = format!("config: {}\n", self.source);
        if self.presets.is_empty() {
            out.push_str("presets: none\n");
        } else {
            out.push_str(&format!("presets: {}\n", self.presets.join(" <- ")));
        }
        if let (Some(s), Some(c)) = (self.estimated_seconds, self.runtime_class) {
            out.push_str(&format!(
                "estimated runtime: {} (~{:.0} s on 4 workers)\n",
                c.name(),
                s
            ));
        }
        for f in &self.findings {
            out.push_str(&format!("{f}\n"));
        }
        out.push_str(if self.is_ok() { "ok\n" } else { "invalid\n" });
        out
    }
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Where a config table came from, for resolving relative preset paths.
#[derive(Clone, Debug)]
enum Origin {
    File(PathBuf),
    Preset(String),
    Inline,
}

impl Origin {
    fn label(&self) -> String {
        match self {
            Origin::File(p) => p.display().to_string(),
            Origin::Preset(n) => format!("preset '{n}'"),
            Origin::Inline => "<inline>".into(),
        }
    }

    fn dir(&self) -> Option<&Path> {
        match self {
            Origin::File(p) => p.parent(),
            _ => None,
        }
    }
}

fn parse_table(text: &str, origin: &Origin) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{}: {}", origin.label(), e.to_string().trim_end())))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Follows the `preset` chain and returns the merged table plus the presets
/// in the order they were visited.
fn resolve(mut table: toml::Table, origin: Origin) -> Result<(toml::Table, Vec<String>)> {
    let mut chain = Vec::new();
    let mut layers = Vec::new();
    let mut origin = origin;
    loop {
        let next = match table.remove("preset") {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => {
                return Err(Error::Config(format!(
                    "{}: preset must be a string, got {}",
                    origin.label(),
                    other.type_str()
                )))
            }
        };
        layers.push(table);
        let Some(name) = next else { break };
        if chain.len() >= MAX_PRESET_DEPTH || chain.contains(&name) {
            return Err(Error::Config(format!(
                "preset chain loops through '{name}'"
            )));
        }
        chain.push(name.clone());
        if let Some(src) = preset_source(&name) {
            origin = Origin::Preset(name);
            table = parse_table(src, &origin)?;
            continue;
        }
        let path = match origin.dir() {
            Some(d) => d.join(&name),
            None => PathBuf::from(&name),
        };
        if !path.is_file() {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "{}: unknown preset '{name}' (not a file; built-in presets: {})",
                origin.label(),
                known.join(", ")
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        origin = Origin::File(path);
        table = parse_table(&text, &origin)?;
    }
    let mut merged = toml::Table::new();
    for layer in layers.into_iter().rev() {
        merge(&mut merged, layer);
    }
    Ok((merged, chain))
}

fn deserialize(table: toml::Table) -> std::result::Result<ExperimentConfig, Finding> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let field = e.path().to_string();
        Finding {
            severity: Severity::Error,
            field: if field == "." { String::new() } else { field },
            message: e.into_inner().to_string().trim_end().to_string(),
        }
    })
}

fn load_table(text: &str, origin: Origin) -> ValidationReport {
    let source = origin.label();
    let mut report = ValidationReport {
        source,
        presets: Vec::new(),
        findings: Vec::new(),
        estimated_seconds: None,
        runtime_class: None,
        config: None,
    };
    let resolved = parse_table(text, &origin).and_then(|t| resolve(t, origin));
    let (table, presets) = match resolved {
        Ok(r) => r,
        Err(e) => {
            report.findings.push(Finding {
                severity: Severity::Error,
                field: String::new(),
                message: e.to_string(),
            });
            return report;
        }
    };
    report.presets = presets;
    match deserialize(table) {
        Ok(cfg) => {
            report.findings = check(&cfg);
            let secs = estimate_seconds(&cfg);
            report.estimated_seconds = Some(secs);
            report.runtime_class = Some(runtime_class(secs));
            report.config = Some(cfg);
        }
        Err(f) => report.findings.push(f),
    }
    report
}

/// Schema and cross-field checks of a config file, without running it.
pub fn validate(path: impl AsRef<Path>) -> ValidationReport {
    let path = path.as_ref();
    match std::fs::read_to_string(path) {
        Ok(text) => load_table(&text, Origin::File(path.to_path_buf())),
        Err(e) => ValidationReport {
            source: path.display().to_string(),
            presets: Vec::new(),
            findings: vec![Finding {
                severity: Severity::Error,
                field: String::new(),
                message: format!("cannot read config: {e}"),
            }],
            estimated_seconds: None,
            runtime_class: None,
            config: None,
        },
    }
}

/// Validates TOML text; relative preset paths resolve against the working
/// directory.
pub fn validate_str(text: &str) -> ValidationReport {
    load_table(text, Origin::Inline)
}

/// Validates a built-in preset on its own.
pub fn validate_preset(name: &str) -> ValidationReport {
    validate_str(&format!("preset = {}\n", toml::Value::String(name.into())))
}

fn into_config(report: ValidationReport) -> Result<ExperimentConfig> {
    if !report.is_ok() {
        let msgs: Vec<String> = report.errors().map(|f| f.to_string()).collect();
        return Err(Error::Config(msgs.join("; ")));
    }
    Ok(report.config.expect("valid reports carry a config"))
}

impl ExperimentConfig {
    /// Loads and validates; warnings are dropped, errors become
    /// [`Error::Config`].
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        into_config(validate(path))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        into_config(validate_str(text))
    }

    pub fn preset(name: &str) -> Result<Self> {
        into_config(validate_preset(name))
    }

    /// Fully resolved TOML, without a `preset` key.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// The config with machine-local fields cleared, as recorded in
    /// manifests.
    pub fn portable(&self) -> Self {
        Self {
            out_dir: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let errors: Vec<String> = check(self)
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .map(|f| f.to_string())
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }
}

struct Checker {
    findings: Vec<Finding>,
}

impl Checker {
    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: usize) {
        if v == 0 {
            self.error(field, "must be positive");
        }
    }
}

fn check(cfg: &ExperimentConfig) -> Vec<Finding> {
    let mut ck = Checker {
        findings: Vec::new(),
    };
    if cfg.name.trim().is_empty() {
        ck.error("name", "must not be empty");
    }
    let study = cfg.study;
    let sections = [
        ("world", cfg.world.is_some(), study.trains_models()),
        ("models", cfg.models.is_some(), study.trains_models()),
        ("train", cfg.train.is_some(), study.trains_models()),
        ("gaussian", cfg.gaussian.is_some(), study == Study::Gaussian),
        ("oracle", cfg.oracle.is_some(), study == Study::Oracle),
        ("amce", cfg.amce.is_some(), study == Study::Amce),
    ];
    for (name, present, needed) in sections {
        match (present, needed) {
            (false, true) => ck.error(
                name,
                format!("the {} study needs a [{name}] section", study.name()),
            ),
            (true, false) => ck.warn(name, format!("ignored by the {} study", study.name())),
            _ => {}
        }
    }
    if study.trains_models() {
        if let Some(w) = &cfg.world {
            check_world(&mut ck, w, study);
        }
        if let Some(m) = &cfg.models {
            check_models(
                &mut ck,
                m,
                cfg.world.as_ref().map_or(0, |w| w.embedding.dim),
            );
        }
        if let Some(t) = &cfg.train {
            if t.seeds.is_empty() {
                ck.error("train.seeds", "seed set must not be empty");
            }
            let mut sorted = t.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != t.seeds.len() {
                ck.error("train.seeds", "seeds must be distinct");
            }
            ck.positive("train.epochs", t.epochs);
            ck.positive("train.batch_size", t.batch_size);
            if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
                ck.error(
                    "train.learning_rate",
                    format!("must be positive, got {}", t.learning_rate),
                );
            }
        }
    }
    match study {
        Study::Gaussian => {
            if let Some(g) = &cfg.gaussian {
                check_gaussian(&mut ck, g);
            }
        }
        Study::Oracle => {
            if let Some(o) = &cfg.oracle {
                ck.positive("oracle.n", o.n);
                let (Tolerance::Fixed(v) | Tolerance::BinomialSe(v)) = o.tolerance;
                if !(v > 0.0 && v.is_finite()) {
                    ck.error("oracle.tolerance", format!("must be positive, got {v}"));
                }
                if let Some(p) = &o.world_file {
                    if !p.is_file() {
                        ck.error(
                            "oracle.world_file",
                            format!("{} does not exist", p.display()),
                        );
                    }
                }
            }
        }
        Study::Amce => {
            if let Some(a) = &cfg.amce {
                check_amce(&mut ck, a);
            }
        }
        _ => {}
    }
    ck.findings
}

fn check_world(ck: &mut Checker, w: &WorldSection, study: Study) {
    if w.grid.is_empty() {
        ck.error("world.grid", "must list at least one value");
    }
    let in_range = |v: f64| match study {
        Study::Confounded => (0.5..=1.0).contains(&v),
        _ => v.abs() <= 0.95,
    };
    let range = match study {
        Study::Confounded => "confounding strength must lie in [0.5, 1]",
        _ => "latent correlation must lie in [-0.95, 0.95]",
    };
    for (i, &v) in w.grid.iter().enumerate() {
        if !in_range(v) {
            ck.error(format!("world.grid[{i}]"), format!("{range}, got {v}"));
        }
    }
    for i in 1..w.grid.len() {
        if w.grid[..i].contains(&w.grid[i]) {
            ck.error(
                format!("world.grid[{i}]"),
                format!("duplicate value {}", w.grid[i]),
            );
        }
    }
    if !in_range(w.test_rho) {
        ck.error("world.test_rho", format!("{range}, got {}", w.test_rho));
    }
    match (study, w.alpha) {
        (Study::Ultrafeedback, None) => ck.error(
            "world.alpha",
            "the ultrafeedback study needs a reward weight",
        ),
        (Study::Ultrafeedback, Some(a)) if !(0.0..=1.0).contains(&a) => {
            ck.error("world.alpha", format!("must lie in [0, 1], got {a}"))
        }
        (Study::Confounded, Some(_)) => ck.warn("world.alpha", "ignored by the confounded study"),
        _ => {}
    }
    ck.positive("world.n_train", w.n_train);
    ck.positive("world.n_validation", w.n_validation);
    ck.positive("world.n_test", w.n_test);
    if let Err(e) = w.embedding.with_map_seed(0).validate() {
        ck.error("world.embedding", e.to_string());
    }
}

fn check_models(ck: &mut Checker, m: &ModelsSection, dim: usize) {
    if m.variants.is_empty() {
        ck.error("models.variants", "must list at least one architecture");
    }
    for i in 1..m.variants.len() {
        if m.variants[..i].contains(&m.variants[i]) {
            ck.error(format!("models.variants[{i}]"), "duplicate architecture");
        }
    }
    ck.positive("models.hidden", m.hidden);
    ck.positive("models.latent", m.latent);
    if let Some(l) = m.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            ck.error("models.lambda", format!("must be finite and >= 0, got {l}"));
        }
        if !m.variants.contains(&Variant::Adversarial) {
            ck.warn(
                "models.lambda",
                "ignored: gradient reversal only applies to the adversarial architecture",
            );
        }
    }
    if dim > 0 && m.hidden > 0 && m.latent > 0 {
        for &v in &m.variants {
            if let Err(e) = m.spec(v, dim).validate() {
                ck.error("models", e.to_string());
            }
        }
    }
}

fn check_gaussian(ck: &mut Checker, g: &GaussianSection) {
    if g.rho_count < 2 {
        ck.error("gaussian.rho_count", "needs at least two correlations");
    }
    if !(g.rho_limit > 0.0 && g.rho_limit < 1.0) {
        ck.error(
            "gaussian.rho_limit",
            format!("must lie in (0, 1), got {}", g.rho_limit),
        );
    }
    ck.positive("gaussian.mc_samples", g.mc_samples);
    if !(0.0..=1.0).contains(&g.alpha) {
        ck.error(
            "gaussian.alpha",
            format!("must lie in [0, 1], got {}", g.alpha),
        );
    }
    ck.positive("gaussian.fit_n", g.fit_n);
    if g.fit_reps < 2 {
        ck.error(
            "gaussian.fit_reps",
            "variance needs at least two replications",
        );
    }
    ck.positive("gaussian.shift_n", g.shift_n);
    for (name, list) in [("fit_rhos", &g.fit_rhos), ("shift_rhos", &g.shift_rhos)] {
        for (i, &r) in list.iter().enumerate() {
            if !(r.abs() < 1.0) {
                ck.error(
                    format!("gaussian.{name}[{i}]"),
                    format!("correlation must lie in (-1, 1), got {r}"),
                );
            }
        }
    }
}

fn check_amce(ck: &mut Checker, a: &AmceSection) {
    if a.rewards.is_empty() {
        ck.error("amce.rewards", "must list at least one reward");
    }
    if a.densities.is_empty() {
        ck.error("amce.densities", "must list at least one density");
    }
    for (i, r) in a.rewards.iter().enumerate() {
        let dim = r.dim();
        if dim == 0 || dim > crate::amce::BRUTEFORCE_MAX_DIM {
            ck.error(
                format!("amce.rewards[{i}]"),
                format!(
                    "brute-force comparison needs 1 to {} components, got {dim}",
                    crate::amce::BRUTEFORCE_MAX_DIM
                ),
            );
        }
        if let AmceRewardSpec::Nonadditive(n) = r {
            if n.bits == 0 {
                ck.error(format!("amce.rewards[{i}].bits"), "must be positive");
            }
        }
    }
    if a.densities.contains(&DensityChoice::Empirical) {
        ck.positive("amce.empirical_rows", a.empirical_rows);
    }
}

/// Sustained multiply-adds per second of one worker on the training loop,
/// measured at desk scale (a 10,000-comparison, 10-epoch Base run takes
/// about 1.4 s).
const DESK_FLOPS_PER_SEC: f64 = 2.0e9;
/// Reference worker count of the runtime classes.
const REFERENCE_WORKERS: f64 = 4.0;

fn training_flops(cfg: &ExperimentConfig) -> f64 {
    let (Some(w), Some(m), Some(t)) = (&cfg.world, &cfg.models, &cfg.train) else {
        return 0.0;
    };
    let mut total = 0.0;
    for &v in &m.variants {
        let spec = m.spec(v, w.embedding.dim);
        let mut params = spec.trunk.parameter_count();
        params += spec.head.as_ref().map_or(0, |h| h.parameter_count());
        params += spec.adversary.as_ref().map_or(0, |a| a.parameter_count());
        let per_epoch =
            w.n_train as f64 * 2.0 * 6.0 + (w.n_train + w.n_validation) as f64 * 2.0 * 2.0;
        let test = 2.0 * 2.0 * 2.0 * w.n_test as f64;
        total += params as f64 * (per_epoch * t.epochs as f64 + test);
    }
    total * w.grid.len() as f64 * t.seeds.len() as f64
}

/// Rough wall time on [`REFERENCE_WORKERS`] workers.
pub fn estimate_seconds(cfg: &ExperimentConfig) -> f64 {
    match cfg.study {
        Study::Ultrafeedback | Study::Confounded => {
            let cells = cfg.world.as_ref().map_or(1, |w| w.grid.len())
                * cfg.train.as_ref().map_or(1, |t| t.seeds.len());
            let workers = REFERENCE_WORKERS.min(cells as f64).max(1.0);
            training_flops(cfg) / DESK_FLOPS_PER_SEC / workers
        }
        Study::Gaussian => cfg.gaussian.as_ref().map_or(0.0, |g| {
            let mc = g.rho_count as f64 * g.mc_samples as f64 * 5e-8;
            let fits =
                g.fit_rhos.len() as f64 * g.fit_reps as f64 * g.fit_n as f64 * 1_100.0 * 2e-9;
            (mc + fits) / REFERENCE_WORKERS
        }),
        Study::Oracle => cfg
            .oracle
            .as_ref()
            .map_or(0.0, |o| (o.worlds + 4) as f64 * o.n as f64 * 2e-7),
        Study::Amce => cfg.amce.as_ref().map_or(0.0, |a| {
            a.rewards
                .iter()
                .map(|r| (r.dim() as f64) * (1u64 << r.dim().min(40)) as f64 * 1e-7)
                .sum()
        }),
    }
}

pub fn runtime_class(seconds: f64) -> RuntimeClass {
    if seconds < 60.0 {
        RuntimeClass::Quick
    } else if seconds < 1_800.0 {
        RuntimeClass::Minutes
    } else {
        RuntimeClass::LongRunning
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for (name, _) in PRESETS {
            let r = validate_preset(name);
            assert!(r.is_ok(), "{name}: {:?}", r.findings);
            assert!(r.findings.is_empty(), "{name}: {:?}", r.findings);
            assert_eq!(r.presets[0], *name);
        }
    }

    #[test]
    fn nested_tables_merge() {
        let mut base: toml::Table = "[a]\nx = 1\ny = [1, 2]\n".parse().unwrap();
        merge(&mut base, "[a]\ny = [3]\nz = 2\n".parse().unwrap());
        assert_eq!(base.to_string(), "[a]\nx = 1\ny = [3]\nz = 2\n");
    }
}
