use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpl_core::config::{self, ExperimentConfig, ValidationReport};
use cpl_core::error::Error;
use cpl_core::eval::{accuracy, SliceSpec};
use cpl_core::models::{train_run, RewardModelSpec, TrainConfig, TrainedModel, Variant, Widths};
use cpl_core::runner::{self, Manifest, RunError, RunOptions, StudyReport};
use cpl_core::suite::{run_full_battery, BatteryOptions, Budget};
use cpl_core::worlds::io::{read_dataset, write_dataset};
use cpl_core::worlds::{ConfoundedWorld, EmbeddingConfig, LabelRule, UltraFeedbackWorld};

/// Causal preference-learning laboratory.
#[derive(Parser)]
#[command(name = "cpl", version, about)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic preference dataset to JSONL.
    Generate(GenerateArgs),
    /// Train one reward model and save a checkpoint.
    Train(TrainArgs),
    /// Accuracy of a checkpoint on a dataset, by slice.
    Eval(EvalArgs),
    /// Identification oracle study, or the full acceptance battery.
    Oracle(OracleArgs),
    /// Gaussian difference-model study.
    Gaussian(StudyArgs),
    /// AMCE study.
    Amce(StudyArgs),
    /// Run a study config (TOML) or rerun a manifest (JSON).
    Run(RunArgs),
    /// Check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WorldKind {
    Ultrafeedback,
    Confounded,
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Deterministic,
    Btl,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    world: WorldKind,
    /// Latent correlation (ultrafeedback) or confounding strength.
    #[arg(long)]
    rho: f64,
    /// Objective mixing weight (ultrafeedback only).
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long)]
    n: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embedding map seed; keep it fixed across splits of one study.
    #[arg(long, default_value_t = 0)]
    map_seed: u64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, value_enum, default_value_t = Labels::Deterministic)]
    labels: Labels,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Base,
    Multihead,
    Adversarial,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::Multihead => Variant::Multihead,
            VariantArg::Adversarial => Variant::Adversarial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Paper,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    validation: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Base)]
    variant: VariantArg,
    /// Gradient reversal strength (adversarial only).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    learning_rate: f64,
    /// Initialization and shuffling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// all, consistent, inconsistent, c=N or t=N; repeatable.
    #[arg(long = "slice", default_values_t = vec!["all".to_string()])]
    slices: Vec<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StudyArgs {
    /// Config file; defaults to the built-in preset of the same name.
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    study: StudyArgs,
    /// FiniteWorld JSON to verify alongside the built-in worlds.
    #[arg(long)]
    world: Option<PathBuf>,
    /// Run the acceptance battery instead of the oracle study.
    #[arg(long)]
    battery: bool,
    #[arg(long, default_value = "desk")]
    budget: String,
}

#[derive(Args)]
struct Common {
    /// Built-in preset to start from.
    #[arg(long)]
    preset: Option<String>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $CPL_OUT_DIR/<name> or ./cpl-out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Study TOML or a manifest.json from an earlier run.
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ValidateArgs {
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

/// Exit status with the message printed on the way out.
enum Failure {
    /// Bad config or argument values; exit code 2.
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e @ Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e.source {
            Error::Config(m) => Failure::Config(m),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli.jobs;
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Oracle(a) => oracle(a, jobs),
        Command::Gaussian(a) => study(a, "gaussian", jobs),
        Command::Amce(a) => study(a, "amce", jobs),
        Command::Run(a) => run(a.config.as_deref(), &a.common, None, jobs),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn generate(a: GenerateArgs) -> CliResult {
    let embedding = EmbeddingConfig {
        dim: a.dim,
        map_seed: a.map_seed,
        ..EmbeddingConfig::default()
    };
    let label_rule = match a.labels {
        Labels::Deterministic => LabelRule::Deterministic,
        Labels::Btl => LabelRule::Btl,
    };
    let data = match a.world {
        WorldKind::Ultrafeedback => UltraFeedbackWorld {
            label_rule,
            embedding,
            ..UltraFeedbackWorld::new(a.rho, a.alpha, a.map_seed)
        }
        .sample(a.n, a.seed)?,
        WorldKind::Confounded => ConfoundedWorld {
            label_rule,
            embedding,
            ..ConfoundedWorld::new(a.rho, a.map_seed)
        }
        .sample(a.n, a.seed)?,
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    write_dataset(&data, &a.out)?;
    println!(
        "wrote {} examples ({} dims) to {}",
        data.len(),
        data.embedding_dim(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    let (train, validation) = (read_dataset(&a.train)?, read_dataset(&a.validation)?);
    let widths = match a.scale {
        Scale::Desk => Widths::DESK,
        Scale::Paper => Widths::PAPER,
    };
    let spec = RewardModelSpec::new(a.variant.into(), train.embedding_dim(), widths, a.lambda);
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        seeds: vec![a.seed],
    };
    let run = train_run(&spec, &train, &validation, &cfg, a.seed)?;
    println!("epoch  train_nll  train_acc  val_nll  val_acc");
    for r in &run.history {
        println!(
            "{:>5}  {:>9.4}  {:>9.4}  {:>7.4}  {:>7.4}",
            r.epoch, r.train_nll, r.train_accuracy, r.val_nll, r.val_accuracy
        );
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    run.save(&a.out)?;
    println!("kept epoch {}; saved {}", run.best_epoch, a.out.display());
    Ok(())
}

fn parse_slice(s: &str) -> Result<SliceSpec, Failure> {
    let bad = || {
        Failure::Config(format!(
            "unknown slice '{s}' (all, consistent, inconsistent, c=N, t=N)"
        ))
    };
    Ok(match s {
        "all" => SliceSpec::All,
        "consistent" => SliceSpec::Consistent,
        "inconsistent" => SliceSpec::Inconsistent,
        _ => match s.split_once('=') {
            Some(("c", v)) => SliceSpec::Objective(v.parse().map_err(|_| bad())?),
            Some(("t", v)) => SliceSpec::PromptType(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        },
    })
}

fn eval(a: EvalArgs) -> CliResult {
    let slices = a
        .slices
        .iter()
        .map(|s| parse_slice(s))
        .collect::<Result<Vec<_>, _>>()?;
    let model = TrainedModel::load(&a.model)?;
    let data = read_dataset(&a.data)?;
    let mut rows = Vec::new();
    for s in &slices {
        let acc = accuracy(&model.model, &data, s)?;
        rows.push(serde_json::json!({"slice": s.name(), "n": acc.n, "accuracy": acc.mean, "stderr": acc.stderr}));
        if !a.json {
            println!(
                "{:<14} n={:<7} accuracy {:.4} ± {:.4}",
                s.name(),
                acc.n,
                acc.mean,
                acc.stderr
            );
        }
    }
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).map_err(Error::from)?
        );
    }
    Ok(())
}

fn oracle(a: OracleArgs, jobs: usize) -> CliResult {
    if a.battery {
        let budget = Budget::parse(&a.budget).map_err(|e| Failure::Config(e.to_string()))?;
        let out = a
            .study
            .common
            .out
            .clone()
            .unwrap_or_else(|| default_out(&format!("battery-{}", budget.name())));
        let opts = BatteryOptions {
            budget,
            root_seed: a.study.common.seed.unwrap_or(0),
            jobs,
            out_dir: out.join("scratch"),
        };
        let summary = run_full_battery(&opts)?;
        summary.write(&out)?;
        print!("{}", summary.render_text());
        println!("reports written to {}", out.display());
        return if summary.pass() {
            Ok(())
        } else {
            Err(Failure::Runtime(format!(
                "{} battery check(s) failed",
                summary.failures()
            )))
        };
    }
    let world = a.world.clone();
    study_with(a.study, "oracle", jobs, move |cfg| {
        if let (Some(w), Some(o)) = (&world, cfg.oracle.as_mut()) {
            o.world_file = Some(w.clone());
        }
    })
}

fn study(a: StudyArgs, preset: &str, jobs: usize) -> CliResult {
    study_with(a, preset, jobs, |_| {})
}

fn study_with(
    a: StudyArgs,
    preset: &str,
    jobs: usize,
    adjust: impl FnOnce(&mut ExperimentConfig),
) -> CliResult {
    let mut common = a.common;
    if a.config.is_none() && common.preset.is_none() {
        common.preset = Some(preset.to_string());
    }
    run(a.config.as_deref(), &common, Some(Box::new(adjust)), jobs)
}

fn default_out(name: &str) -> PathBuf {
    match std::env::var_os("CPL_OUT_DIR") {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(name),
        _ => PathBuf::from("cpl-out").join(name),
    }
}

fn print_findings(report: &ValidationReport) {
    for f in &report.findings {
        eprintln!("{f}");
    }
}

/// Loads a TOML config or a manifest; invalid configs print their findings.
fn load(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig, Failure> {
    let report = match (path, preset) {
        (Some(p), None) if p.extension().is_some_and(|e| e == "json") => {
            let m = Manifest::load(p)?;
            println!(
                "rerunning manifest {} (config {})",
                p.display(),
                &m.config_hash[..12]
            );
            m.config.validate()?;
            return Ok(m.config);
        }
        (Some(p), None) => config::validate(p),
        (None, Some(name)) => config::validate_preset(name),
        (Some(_), Some(_)) => {
            return Err(Failure::Config(
                "give either a config file or --preset, not both (a file can set `preset`)".into(),
            ))
        }
        (None, None) => {
            return Err(Failure::Config(
                "no config given: pass a file or --preset".into(),
            ))
        }
    };
    print_findings(&report);
    if !report.is_ok() {
        return Err(Failure::Config(format!(
            "{}: {} error(s)",
            report.source,
            report.errors().count()
        )));
    }
    Ok(report.config.expect("valid reports carry a config"))
}

type Adjust<'a> = Box<dyn FnOnce(&mut ExperimentConfig) + 'a>;

fn run(path: Option<&Path>, common: &Common, adjust: Option<Adjust>, jobs: usize) -> CliResult {
    let mut cfg = load(path, common.preset.as_deref())?;
    if let Some(s) = common.seed {
        cfg.root_seed = s;
    }
    if let Some(f) = adjust {
        f(&mut cfg);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| default_out(&cfg.name));
    let estimate = config::estimate_seconds(&cfg);
    println!(
        "running '{}' ({} study, root seed {}) into {}; estimated {}",
        cfg.name,
        cfg.study.name(),
        cfg.root_seed,
        out.display(),
        config::runtime_class(estimate).name()
    );
    let outcome = runner::run(
        &cfg,
        &RunOptions {
            out_dir: out.clone(),
            jobs,
        },
    )?;
    match &outcome.report {
        StudyReport::Experiment(r) => print!("{}", r.render_table()),
        StudyReport::Gaussian(g) => {
            println!("rho      closed    monte-carlo  z");
            for r in &g.arcsin {
                println!(
                    "{:>6.3}  {:.5}  {:.5}      {:+.2}",
                    r.rho,
                    r.closed_form,
                    r.monte_carlo,
                    (r.monte_carlo - r.closed_form) / r.stderr
                );
            }
            for f in &g.alpha_fits {
                println!(
                    "alpha fit at rho {}: mean {:.4}, variance {:.3e}",
                    f.rho, f.mean, f.variance
                );
            }
        }
        StudyReport::Oracle(o) => {
            for c in &o.checks {
                println!(
                    "{:<14} {:<7} {:?} (expected {:?}), max error {:.4}",
                    c.name,
                    format!("{:?}", c.level).to_lowercase(),
                    c.report.verdict,
                    c.expected,
                    c.report.max_error
                );
            }
            println!("micro world naive bias {:.4}", o.micro.bias);
            if !o.all_pass() {
                return Err(Failure::Runtime(
                    "stage 'oracle' failed: a check missed its expected verdict".into(),
                ));
            }
        }
        StudyReport::Amce(a) => {
            for r in &a.rows {
                println!(
                    "{:<28} k={} {:<9} amce {:.6}  gap {:.1e}",
                    r.reward, r.k, r.m, r.amce, r.gap
                );
            }
        }
    }
    println!(
        "{} files, manifest {}",
        outcome.manifest.outputs.len(),
        out.join(runner::MANIFEST_FILE).display()
    );
    Ok(())
}

fn validate(a: ValidateArgs) -> CliResult {
    let report = match (&a.config, &a.preset) {
        (Some(p), None) => config::validate(p),
        (None, Some(n)) => config::validate_preset(n),
        _ => {
            return Err(Failure::Config(
                "give exactly one of a config file or --preset".into(),
            ))
        }
    };
    print!("{}", report.render());
    if report.is_ok() {
        Ok(())
    } else {
        Err(Failure::Config(format!(
            "{} error(s)",
            report.errors().count()
        )))
    }
}
