//! Argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};

use cgx::extract::{self, Mode};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::Overrides;
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
use crate::output;
use crate::pipeline::{self, ExtractionLog, Manifest, Prepared};

#[derive(Debug, Parser)]
#[command(name = "cgx", version, about = "Column-generation rule extraction from neural networks")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: cgx::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the network on one fold's training split.
    Train {
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Model file (default: <output_dir>/<name>/fold-<k>/model.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a rule set from a trained network.
    Extract {
        /// `ped` or `dec`.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Model file; trained from the config when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Rule set JSON (default: <fold dir>/<mode>/ruleset.json); the text
        /// form goes next to it with a `.txt` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extraction log (default: next to the rule set as report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute fidelity, accuracy, complexity and feature alignment.
    Evaluate {
        /// Rule set file (JSON or text form).
        #[arg(long)]
        ruleset: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train, extract with both modes, evaluate and check stability on every fold.
    RunExperiment,
    /// Extract repeatedly with different extractor seeds and compare.
    Stability {
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Comma-separated seeds (default: metrics.stability_seeds).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Print the resolved configuration, defaults included.
    PrintConfig,
}

#[derive(Serialize)]
struct ExtractReport {
    manifest: Manifest,
    n_rules: usize,
    n_terms: usize,
    extraction: ExtractionLog,
}

#[derive(Serialize)]
struct EvaluateReport {
    manifest: Manifest,
    #[serde(flatten)]
    evaluation: pipeline::Evaluation,
}

#[derive(Serialize)]
struct StabilityReport {
    manifest: Manifest,
    mode: Mode,
    #[serde(flatten)]
    outcome: pipeline::StabilityOutcome,
    rulesets: Vec<String>,
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn require_file(path: Option<&Path>, flag: &str) -> CliResult<()> {
    match path {
        Some(p) if !p.is_file() => Err(CliError::Validation(format!("{flag}: {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> CliResult<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Command::Train { fold, out } => {
            let prepared = Prepared::new(cfg)?;
            let (train, test) = prepared.split(fold)?;
            let model = prepared.train(fold, &train)?;
            let path = out.unwrap_or_else(|| prepared.cfg.fold_dir(fold).join("model.json"));
            output::write_model(&path, &model, &prepared.manifest(fold))?;
            let acc = cgx::metrics::accuracy(&model.predict_labels(test.features())?, test.labels())?;
            println!("model: {}", path.display());
            println!("test accuracy: {acc:.4}");
            Ok(())
        }
        Command::Extract {
            mode,
            model,
            fold,
            out,
            report,
        } => {
            require_file(model.as_deref(), "--model")?;
            let prepared = Prepared::new(cfg)?;
            let (train, _) = prepared.split(fold)?;
            let model = pipeline::model_for(&prepared, fold, &train, model.as_deref())?;
            let manifest = prepared.manifest(fold);
            let result = extract::extract(mode, &model, &train, &prepared.cfg.extraction)?;
            let json_path = out.unwrap_or_else(|| prepared.cfg.fold_dir(fold).join(mode.to_string()).join("ruleset.json"));
            output::write_ruleset(&json_path, &result.ruleset, &manifest)?;
            let report_path = report.unwrap_or_else(|| json_path.with_file_name("report.json"));
            let (n_rules, n_terms) = result.ruleset.complexity();
            output::write_json(
                &report_path,
                &ExtractReport {
                    manifest,
                    n_rules,
                    n_terms,
                    extraction: ExtractionLog::new(&result),
                },
            )?;
            print!("{}", result.ruleset.to_text());
            println!("train fidelity: {:.4}", result.final_fidelity);
            println!("rule set: {}", json_path.display());
            Ok(())
        }
        Command::Evaluate {
            ruleset,
            model,
            fold,
            out,
        } => {
            require_file(Some(&ruleset), "--ruleset")?;
            require_file(model.as_deref(), "--model")?;
            let rs = output::read_ruleset(&ruleset)?;
            let prepared = Prepared::new(cfg)?;
            let (train, test) = prepared.split(fold)?;
            let model = pipeline::model_for(&prepared, fold, &train, model.as_deref())?;
            if model.n_inputs() != train.n_features() {
                return Err(cgx::Error::Shape {
                    expected: model.n_inputs(),
                    actual: train.n_features(),
                }
                .into());
            }
            let evaluation = prepared.evaluate(fold, &rs, &model, &train, &test)?;
            let report = EvaluateReport {
                manifest: prepared.manifest(fold),
                evaluation,
            };
            if let Some(path) = out {
                output::write_json(&path, &report)?;
            }
            print_json(&report)
        }
        Command::RunExperiment => {
            let summary = pipeline::run_experiment(cfg)?;
            println!("summary: {}", summary.output_dir.join("summary.csv").display());
            Ok(())
        }
        Command::Stability {
            mode,
            model,
            fold,
            seeds,
        } => {
            require_file(model.as_deref(), "--model")?;
            let seeds = seeds.unwrap_or_else(|| cfg.metrics.stability_seeds.clone());
            if seeds.is_empty() {
                return Err(CliError::Validation("--seeds: must list at least one seed".into()));
            }
            let prepared = Prepared::new(cfg)?;
            let (train, _) = prepared.split(fold)?;
            let model = pipeline::model_for(&prepared, fold, &train, model.as_deref())?;
            let (outcome, rulesets) = pipeline::stability(&prepared, mode, &model, &train, None, &seeds)?;
            let rulesets: Vec<String> = rulesets.iter().map(|rs| rs.to_text()).collect();
            if let Some(w) = &outcome.warning {
                eprintln!("warning: {w}");
            }
            let stable = outcome.stable;
            print_json(&StabilityReport {
                manifest: prepared.manifest(fold),
                mode,
                outcome,
                rulesets,
            })?;
            if stable {
                Ok(())
            } else {
                Err(CliError::Runtime("extraction is not stable across seeds".into()))
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            debug_assert!(matches!(e.exit_code(), EXIT_VALIDATION | EXIT_RUNTIME));
            e.exit_code()
        }
    }
}
