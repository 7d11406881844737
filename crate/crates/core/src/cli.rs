//! Command-line front end. Every subcommand prints a one-line JSON summary on
//! success (exit 0). Validation and I/O failures print a JSON error object on
//! stderr and exit 1; usage errors exit 2.
//!
//! `--config FILE` reads `key = value` lines (blank lines and `#` comments are
//! ignored) and treats each as `--key value`. Flags given on the command line
//! win over the file. Boolean flags take `true`/`false`.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::{parse_timestamp, StudyWindow};
use crate::pipeline::{self, InputPaths, PipelineConfig, TrainOptions};
use crate::riskmap::RiskParams;
use crate::synth::SynthConfig;

#[derive(Parser, Debug)]
#[command(
    name = "cdrisk",
    version,
    about = "Risk maps and migration prediction from call detail records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
    /// Parse and validate a CDR file.
    Ingest(StageArgs),
    /// Build the communication graph and write its edge list.
    Graph(StageArgs),
    /// Infer home antennas.
    Homes(HomesArgs),
    /// Aggregate per-antenna risk indicators and export the map.
    Riskmap(RiskmapArgs),
    /// Build the migration feature table.
    Features(FeaturesArgs),
    /// Fit the logistic model and the naive Bayes baseline.
    Train(TrainArgs),
    /// Score a trained model on the held-out split.
    Evaluate(EvaluateArgs),
    /// Run ingest, riskmap, features, train and evaluate in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct Inputs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    zone: Option<PathBuf>,
}

impl Inputs {
    fn paths(&self) -> InputPaths {
        InputPaths {
            records: self.records.clone(),
            registry: self.registry.clone(),
            zone: self.zone.clone(),
        }
    }
}

fn parse_ts(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    parse_timestamp(s).ok_or_else(|| format!("expected YYYY-MM-DDTHH:MM:SSZ, got {s:?}"))
}

#[derive(Args, Debug)]
struct WindowArgs {
    #[arg(long, value_parser = parse_ts, default_value = "2014-01-01T00:00:00Z")]
    t0_start: DateTime<Utc>,
    #[arg(long, value_parser = parse_ts, default_value = "2015-08-01T00:00:00Z")]
    t0_end: DateTime<Utc>,
    #[arg(long, value_parser = parse_ts, default_value = "2015-08-01T00:00:00Z")]
    t1_start: DateTime<Utc>,
    #[arg(long, value_parser = parse_ts, default_value = "2016-01-01T00:00:00Z")]
    t1_end: DateTime<Utc>,
}

impl WindowArgs {
    fn window(&self) -> Result<StudyWindow> {
        StudyWindow::new(self.t0_start, self.t0_end, self.t1_start, self.t1_end)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    window: WindowArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_users: usize,
    #[arg(long, default_value_t = 100)]
    n_antennas: usize,
    #[arg(long, default_value_t = 0.2)]
    endemic_antenna_fraction: f64,
    #[arg(long, default_value_t = 0.9)]
    p_home_call: f64,
    #[arg(long, default_value_t = 0.2)]
    migrant_fraction: f64,
    #[arg(long, default_value_t = 80.0)]
    mean_calls_per_user_per_period: f64,
    #[arg(long, default_value_t = 0.8)]
    tie_strength_endemic: f64,
    #[arg(long, default_value_t = 10)]
    contacts_per_user: usize,
    #[arg(long, default_value_t = 0.15)]
    local_tie_strength: f64,
    #[arg(long, default_value_t = 0.5)]
    tie_decay: f64,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args, Debug)]
struct HomesArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    /// Only use records at or after this instant.
    #[arg(long, value_parser = parse_ts, requires = "to")]
    from: Option<DateTime<Utc>>,
    /// Only use records strictly before this instant.
    #[arg(long, value_parser = parse_ts, requires = "from")]
    to: Option<DateTime<Utc>>,
}

#[derive(Args, Debug)]
struct RiskArgs {
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 50)]
    min_pop: u64,
    #[arg(long, default_value_t = 0.5)]
    color_max: f64,
    #[arg(long, default_value_t = 1.0)]
    radius_k: f64,
    #[arg(long)]
    count_zone_residents_as_vulnerable: bool,
}

impl RiskArgs {
    fn params(&self) -> Result<RiskParams> {
        if !(self.beta.is_finite() && (0.0..=1.0).contains(&self.beta)) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.color_max.is_finite() && self.color_max > 0.0) {
            return Err(Error::Config(format!(
                "color-max must be positive, got {}",
                self.color_max
            )));
        }
        if !(self.radius_k.is_finite() && self.radius_k > 0.0) {
            return Err(Error::Config(format!(
                "radius-k must be positive, got {}",
                self.radius_k
            )));
        }
        Ok(RiskParams {
            beta: self.beta,
            min_pop: self.min_pop,
            color_max: self.color_max,
            radius_k: self.radius_k,
            count_zone_residents_as_vulnerable: self.count_zone_residents_as_vulnerable,
        })
    }
}

#[derive(Args, Debug)]
struct RiskmapArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    risk: RiskArgs,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Choose lambda from a fixed grid by validation log-loss.
    #[arg(long)]
    tune: bool,
    #[arg(long, default_value_t = 0.05)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    nb_alpha: f64,
}

impl ModelArgs {
    fn options(&self) -> Result<TrainOptions> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train-fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation-fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) || self.max_iters == 0 {
            return Err(Error::Config("tolerance and max-iters must be positive".into()));
        }
        Ok(TrainOptions {
            lambda: self.lambda,
            seed: self.seed,
            train_fraction: self.train_fraction,
            tolerance: self.tolerance,
            max_iters: self.max_iters,
            tune: self.tune,
            validation_fraction: self.validation_fraction,
            nb_alpha: self.nb_alpha,
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    risk: RiskArgs,
    #[command(flatten)]
    model: ModelArgs,
}

fn dispatch(command: Command) -> Result<serde_json::Value> {
    match command {
        Command::Synth(a) => {
            let config = SynthConfig {
                seed: a.seed,
                n_users: a.n_users,
                n_antennas: a.n_antennas,
                endemic_antenna_fraction: a.endemic_antenna_fraction,
                p_home_call: a.p_home_call,
                migrant_fraction: a.migrant_fraction,
                mean_calls_per_user_per_period: a.mean_calls_per_user_per_period,
                tie_strength_endemic: a.tie_strength_endemic,
                contacts_per_user: a.contacts_per_user,
                local_tie_strength: a.local_tie_strength,
                tie_decay: a.tie_decay,
            };
            pipeline::run_synth(&config, &a.window.window()?, &a.common.out_dir)
        }
        Command::Ingest(a) => pipeline::run_ingest(&a.inputs.paths(), &a.common.out_dir),
        Command::Graph(a) => pipeline::run_graph(&a.inputs.paths(), &a.common.out_dir),
        Command::Homes(a) => {
            let range: Option<Range<DateTime<Utc>>> = match (a.from, a.to) {
                (Some(from), Some(to)) if from < to => Some(from..to),
                (Some(_), Some(_)) => return Err(Error::Window("--from must precede --to".into())),
                _ => None,
            };
            pipeline::run_homes(&a.inputs.paths(), range, &a.common.out_dir)
        }
        Command::Riskmap(a) => pipeline::run_riskmap(&a.inputs.paths(), &a.risk.params()?, &a.common.out_dir),
        Command::Features(a) => pipeline::run_features(&a.inputs.paths(), &a.window.window()?, &a.common.out_dir),
        Command::Train(a) => pipeline::run_train(&a.dataset, &a.model.options()?, &a.common.out_dir),
        Command::Evaluate(a) => pipeline::run_evaluate(&a.dataset, &a.model, &a.common.out_dir),
        Command::Pipeline(a) => {
            let config = PipelineConfig {
                inputs: a.inputs.paths(),
                window: a.window.window()?,
                risk: a.risk.params()?,
                train: a.model.options()?,
                out_dir: a.common.out_dir.clone(),
            };
            pipeline::run_pipeline(&config)
        }
    }
}

/// Reads `key = value` lines into `--key value` arguments.
pub fn config_args(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(Error::Config(format!(
                "{}:{}: invalid key {:?}",
                path.display(),
                n + 1,
                k.trim()
            )));
        }
        out.push((key, v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    args.iter().any(|a| a == &long || a.starts_with(&format!("{long}=")))
}

/// Splices config-file arguments in after the subcommand name, skipping any
/// key the command line already sets.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let pos = argv.iter().position(|a| a == "--config" || a.starts_with("--config="));
    let Some(pos) = pos else { return Ok(argv) };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => PathBuf::from(p),
        None => match argv.get(pos + 1) {
            Some(p) => PathBuf::from(p),
            None => return Ok(argv),
        },
    };
    if argv.len() < 2 {
        return Ok(argv);
    }
    let user_args = &argv[2..];
    let mut injected = Vec::new();
    for (key, value) in config_args(&path)? {
        if flag_given(user_args, &key) {
            continue;
        }
        match value.as_str() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
    }
    let mut out = argv[..2].to_vec();
    out.extend(injected);
    out.extend_from_slice(user_args);
    Ok(out)
}

fn report_error(err: &Error, stderr: &mut dyn Write) -> i32 {
    let doc = json!({ "error": err.kind(), "message": err.to_string() });
    let _ = writeln!(stderr, "{doc}");
    1
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run_with_io(argv: Vec<String>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => return report_error(&e, stderr),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return 0;
                }
                _ => 2,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(e) => report_error(&e, stderr),
    }
}

pub fn run(argv: Vec<String>) -> i32 {
    run_with_io(argv, &mut std::io::stdout(), &mut std::io::stderr())
}
