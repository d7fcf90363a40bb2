//! Command-line front end: `simulate`, `train`, `classify`, `evaluate` and
//! `bench`, driven by an optional JSON run configuration whose values are
//! overridden by flags.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for data or validation
//! errors, 4 for numerical failures.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::{classify_online, train_with_summary, ClassModel, ClassifierConfig, RidgePolicy};
use crate::data::{detrend_first_difference, read_labelled, read_series, write_labelled_file};
use crate::error::Error;
use crate::evalkit::{bench_scaling, run_study};
use crate::simgen::{generate, make_training_set, ClassProcess, Scenario};
use crate::spectra::SmootherConfig;

pub const EXIT_USAGE: i32 = 2;
pub const DEFAULT_WINDOW: usize = 256;
pub const DEFAULT_REPLICATIONS: usize = 25;
pub const DEFAULT_BENCH_LENGTHS: [usize; 4] = [1024, 2048, 4096, 8192];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) => e.exit_code(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Everything a run can be configured with. Every field is optional in
/// the file; flags take precedence, and the resolved values are written
/// next to each output.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoother: Option<SmootherConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<RidgePolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detrend: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run configuration: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn window(&self) -> usize {
        self.window_length.unwrap_or(DEFAULT_WINDOW)
    }

    /// Checks the invariants that do not depend on the subcommand.
    pub fn validate(&self) -> CliResult<()> {
        let w = self.window();
        if w < 8 || !w.is_power_of_two() {
            return Err(usage(format!("window length {w} must be a power of two of at least 8")));
        }
        if let Some(p) = self.proportion {
            if !(p > 0.0 && p <= 1.0) {
                return Err(usage(format!("proportion {p} must lie in (0, 1]")));
            }
        }
        if let Some(priors) = &self.priors {
            let sum: f64 = priors.iter().sum();
            if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(usage(format!("priors {priors:?} must be nonnegative and sum to 1")));
            }
        }
        Ok(())
    }

    /// The classifier settings this configuration describes.
    pub fn classifier(&self) -> ClassifierConfig {
        let w = self.window();
        let mut cfg = ClassifierConfig::new(w);
        if let Some(p) = self.proportion {
            cfg.proportion = p;
        }
        cfg.smoother = Some(self.smoother.unwrap_or_else(|| SmootherConfig::for_window(w)));
        cfg.scale_cap = self.scale_cap;
        cfg.priors = self.priors.clone();
        cfg.n_classes = self.n_classes;
        if let Some(r) = self.ridge {
            cfg.ridge = r;
        }
        cfg
    }

    /// Copy with the classifier defaults written out, for provenance.
    pub fn resolved(&self) -> Self {
        let cfg = self.classifier();
        let mut out = self.clone();
        out.window_length = Some(cfg.window_length);
        out.proportion = Some(cfg.proportion);
        out.smoother = cfg.smoother;
        out.ridge = Some(cfg.ridge);
        out.scale_cap = cfg.scale_cap().ok();
        out
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self.resolved()).expect("run configuration serializes")
    }

    fn require_seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| usage("--seed is required for this command"))
    }

    fn require_out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| usage("--out is required for this command"))
    }

    fn process(&self) -> CliResult<ClassProcess> {
        let name = self.preset.as_deref().ok_or_else(|| {
            usage(format!("--preset is required; expected one of {}", ClassProcess::PRESETS.join(", ")))
        })?;
        ClassProcess::preset(name).map_err(|e| usage(e.to_string()))
    }

    fn scenario(&self) -> CliResult<(u8, Scenario)> {
        let id = self.scenario.ok_or_else(|| usage("--scenario is required (1, 2 or 3)"))?;
        let scenario = Scenario::preset(id).map_err(|_| usage(format!("unknown scenario {id}; expected 1, 2 or 3")))?;
        Ok((id, scenario))
    }
}

/// Settings shared by every subcommand that trains a model.
#[derive(Args, Clone, Debug, Default)]
pub struct Tunables {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Window length w, a power of two.
    #[arg(short = 'w', long = "window")]
    pub window: Option<usize>,
    /// Proportion of candidate indices kept as features.
    #[arg(long)]
    pub proportion: Option<f64>,
    /// Smoother half-width M.
    #[arg(long)]
    pub bandwidth: Option<usize>,
    /// Finest scales eligible as features.
    #[arg(long)]
    pub scale_cap: Option<usize>,
    /// Master seed for every random draw.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Parser, Debug)]
#[command(name = "wavecoh", version, about = "Online classification of multivariate streams by wavelet coherence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a simulated labelled test stream, or a training set.
    Simulate {
        #[command(flatten)]
        tunables: Tunables,
        /// Class process: mvn3, vma3 or var3.
        #[arg(long)]
        preset: Option<String>,
        /// Switching scenario, 1 to 3.
        #[arg(long)]
        scenario: Option<u8>,
        /// Write ten training signals of length w into the `--out` directory.
        #[arg(long)]
        training: bool,
        /// Output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model to labelled training CSV files.
    Train {
        #[command(flatten)]
        tunables: Tunables,
        /// Labelled training CSV files.
        inputs: Vec<PathBuf>,
        /// Number of classes; defaults to the largest label seen.
        #[arg(long)]
        n_classes: Option<usize>,
        /// Output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a CSV stream with a trained model.
    Classify {
        /// JSON run configuration.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Model JSON written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV stream to classify.
        input: Option<PathBuf>,
        /// Take first differences before classifying.
        #[arg(long)]
        detrend: bool,
        /// Output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated train-and-classify study on a simulated scenario.
    Evaluate {
        #[command(flatten)]
        tunables: Tunables,
        /// Class process: mvn3, vma3 or var3.
        #[arg(long)]
        preset: Option<String>,
        /// Switching scenario, 1 to 3.
        #[arg(long)]
        scenario: Option<u8>,
        /// Replications per setting.
        #[arg(long)]
        reps: Option<usize>,
        /// Output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time online classification for several stream lengths.
    Bench {
        #[command(flatten)]
        tunables: Tunables,
        /// Comma-separated stream lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        /// Replications per setting.
        #[arg(long)]
        reps: Option<usize>,
        /// Output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&Path>) -> CliResult<RunConfig> {
    match config {
        Some(path) => Ok(RunConfig::read(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn with_tunables(t: &Tunables) -> CliResult<RunConfig> {
    let mut cfg = load(t.config.as_deref())?;
    if t.window.is_some() {
        cfg.window_length = t.window;
    }
    if t.proportion.is_some() {
        cfg.proportion = t.proportion;
    }
    if let Some(m) = t.bandwidth {
        let mut s = cfg.smoother.unwrap_or_else(|| SmootherConfig::for_window(cfg.window()));
        s.bandwidth = m;
        cfg.smoother = Some(s);
    }
    if t.scale_cap.is_some() {
        cfg.scale_cap = t.scale_cap;
    }
    if t.seed.is_some() {
        cfg.seed = t.seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

/// `out.csv` → `out.config.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("config.json")
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

/// Builds the effective configuration for `command`, runs it and writes a
/// human-readable summary to `stdout`.
pub fn run(command: Command, stdout: &mut impl Write) -> CliResult<()> {
    let mut text = String::new();
    match command {
        Command::Simulate { tunables, preset, scenario, training, out } => {
            let mut cfg = with_tunables(&tunables)?;
            set(&mut cfg.preset, preset);
            set(&mut cfg.scenario, scenario);
            if training {
                cfg.training = Some(true);
            }
            set(&mut cfg.out, out);
            simulate(&cfg, &mut text)?
        }
        Command::Train { tunables, inputs, n_classes, out } => {
            let mut cfg = with_tunables(&tunables)?;
            if !inputs.is_empty() {
                cfg.inputs = Some(inputs);
            }
            set(&mut cfg.n_classes, n_classes);
            set(&mut cfg.out, out);
            train_command(&cfg, &mut text)?
        }
        Command::Classify { config, model, input, detrend, out } => {
            let mut cfg = load(config.as_deref())?;
            set(&mut cfg.model, model);
            if let Some(i) = input {
                cfg.inputs = Some(vec![i]);
            }
            if detrend {
                cfg.detrend = Some(true);
            }
            set(&mut cfg.out, out);
            classify_command(&cfg, &mut text)?
        }
        Command::Evaluate { tunables, preset, scenario, reps, out } => {
            let mut cfg = with_tunables(&tunables)?;
            set(&mut cfg.preset, preset);
            set(&mut cfg.scenario, scenario);
            set(&mut cfg.replications, reps);
            set(&mut cfg.out, out);
            evaluate(&cfg, &mut text)?
        }
        Command::Bench { tunables, lengths, reps, out } => {
            let mut cfg = with_tunables(&tunables)?;
            set(&mut cfg.lengths, lengths);
            set(&mut cfg.replications, reps);
            set(&mut cfg.out, out);
            bench(&cfg, &mut text)?
        }
    }
    stdout.write_all(text.as_bytes()).map_err(Error::from)?;
    Ok(())
}

fn simulate(cfg: &RunConfig, text: &mut String) -> CliResult<()> {
    let process = cfg.process()?;
    let seed = cfg.require_seed()?;
    let out = cfg.require_out()?;
    let provenance = cfg.to_value();
    if cfg.training == Some(true) {
        fs::create_dir_all(out).map_err(Error::from)?;
        let signals = make_training_set(&process, cfg.window(), seed)?;
        for (i, signal) in signals.iter().enumerate() {
            let path = out.join(format!("train_{:02}.csv", i + 1));
            write_labelled_file(signal, &path)?;
            let _ = writeln!(text, "{}", path.display());
        }
        write_json(&out.join("training.config.json"), &provenance)?;
    } else {
        let (_, scenario) = cfg.scenario()?;
        let series = generate(&process, &scenario, seed)?;
        write_labelled_file(&series, out)?;
        write_json(&sidecar_path(out), &provenance)?;
        let _ = writeln!(text, "{} ({} points)", out.display(), series.series().len());
    }
    Ok(())
}

fn train_command(cfg: &RunConfig, text: &mut String) -> CliResult<()> {
    let inputs = cfg.inputs.as_deref().unwrap_or_default();
    if inputs.is_empty() {
        return Err(usage("train needs at least one labelled CSV file"));
    }
    let out = cfg.require_out()?;
    let signals = inputs.iter().map(|p| read_labelled(p, cfg.n_classes)).collect::<Result<Vec<_>, _>>()?;
    let (model, summary) = train_with_summary(&signals, &cfg.classifier())?;
    let model = model.with_provenance(cfg.to_value());
    model.write_json(out)?;

    let _ = writeln!(text, "selected {} indices (scale, p, q):", model.index_set().len());
    for e in model.index_set().entries() {
        let _ = writeln!(text, "  {} {} {}", e.scale, e.p + 1, e.q + 1);
    }
    for (c, n) in summary.counts.iter().enumerate() {
        let _ = writeln!(text, "class {}: {n} samples", c + 1);
    }
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let _ = writeln!(text, "model written to {}", out.display());
    Ok(())
}

fn classify_command(cfg: &RunConfig, text: &mut String) -> CliResult<()> {
    let model_path = cfg.model.as_deref().ok_or_else(|| usage("--model is required"))?;
    let input = match cfg.inputs.as_deref() {
        Some([one]) => one,
        _ => return Err(usage("classify needs exactly one input CSV file")),
    };
    let out = cfg.require_out()?;
    let model = ClassModel::read_json(model_path)?;
    let mut series = read_series(input)?;
    if cfg.detrend == Some(true) {
        series = detrend_first_difference(&series)?;
    }
    let probs = classify_online(&series, &model)?;
    probs.write_csv_file(out)?;
    let provenance = json!({
        "run": cfg,
        "model": model_path,
        "model_provenance": model.provenance(),
    });
    write_json(&sidecar_path(out), &provenance)?;
    let d = probs.diagnostics();
    let _ = writeln!(text, "{} rows written to {}", probs.len(), out.display());
    let _ = writeln!(
        text,
        "{} windows, {} fallback locations, {} floored powers, {} clamped coherences",
        d.windows, d.fallback_locations, d.coherence.floored_power, d.coherence.clamped
    );
    Ok(())
}

fn evaluate(cfg: &RunConfig, text: &mut String) -> CliResult<()> {
    let process = cfg.process()?;
    let (id, scenario) = cfg.scenario()?;
    let seed = cfg.require_seed()?;
    let reps = cfg.replications.unwrap_or(DEFAULT_REPLICATIONS);
    if reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    let classifier = cfg.classifier();
    classifier.validate()?;
    let mut report = run_study(&process, &scenario, reps, &classifier, seed);
    report.preset = cfg.preset.clone();
    report.scenario = Some(id);
    text.push_str(&report.table());
    if let Some(out) = &cfg.out {
        // timings stay on the terminal so that the file depends only on config and seed
        write_json(out, &json!({ "config": cfg.to_value(), "report": report.without_timings() }))?;
    }
    if report.n_failures == report.n_replications {
        let first = report.failures.first().map_or(String::new(), |f| f.message.clone());
        return Err(Error::Validation(format!("every replication failed: {first}")).into());
    }
    Ok(())
}

fn bench(cfg: &RunConfig, text: &mut String) -> CliResult<()> {
    let seed = cfg.require_seed()?;
    let lengths = cfg.lengths.clone().unwrap_or_else(|| DEFAULT_BENCH_LENGTHS.to_vec());
    if lengths.is_empty() {
        return Err(usage("--lengths must name at least one length"));
    }
    let reps = cfg.replications.unwrap_or(DEFAULT_REPLICATIONS);
    let classifier = cfg.classifier();
    classifier.validate()?;
    let table = bench_scaling(&lengths, reps, &classifier, seed)?;
    text.push_str(&table.table());
    if let Some(out) = &cfg.out {
        write_json(out, &json!({ "config": cfg.to_value(), "bench": table }))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"window_length": 64, "proportion": 0.2, "seed": 3}"#).unwrap();
        let t = Tunables { config: Some(path), proportion: Some(0.5), bandwidth: Some(4), ..Default::default() };
        let cfg = with_tunables(&t).unwrap();
        assert_eq!(cfg.window(), 64);
        assert_eq!(cfg.proportion, Some(0.5));
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.classifier().smoother().bandwidth, 4);
    }

    #[test]
    fn resolved_config_fills_defaults() {
        let r = RunConfig { window_length: Some(256), ..Default::default() }.resolved();
        assert_eq!(r.smoother.unwrap().bandwidth, 24);
        assert_eq!(r.scale_cap, Some(6));
        assert_eq!(r.proportion, Some(0.1));
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        for cfg in [
            RunConfig { window_length: Some(100), ..Default::default() },
            RunConfig { proportion: Some(0.0), ..Default::default() },
            RunConfig { priors: Some(vec![0.5, 0.6]), ..Default::default() },
        ] {
            assert_eq!(cfg.validate().unwrap_err().exit_code(), EXIT_USAGE);
        }
        assert!(RunConfig::from_json(r#"{"windw": 3}"#).is_err());
    }

    #[test]
    fn sidecar_replaces_extension() {
        assert_eq!(sidecar_path(Path::new("a/test.csv")), Path::new("a/test.config.json"));
    }
}
