//! Experiment stages shared by the subcommands: data and folds, training,
//! extraction, evaluation, stability and the full cross-validated run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cgx::data::{split_folds, Dataset, FoldSplit};
use cgx::extract::{self, ExtractionConfig, ExtractionResult, LayerLog, Mode};
use cgx::metrics::{self, Alignment, MetricsReport, Provenance};
use cgx::mlp::{self, MlpModel};
use cgx::ruleset::RuleSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output;

/// Where an output came from: configuration, data, fold and every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub data_hash: String,
    pub dataset: String,
    pub fold: usize,
    pub seeds: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.config_hash.clone(),
            seeds: self.seeds.clone(),
        }
    }
}

/// SHA-256 over feature bit patterns and labels.
pub fn data_hash(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update((ds.n_samples() as u64).to_le_bytes());
    h.update((ds.n_features() as u64).to_le_bytes());
    for v in ds.features().as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update(ds.labels());
    hex::encode(h.finalize())
}

/// A validated configuration with its dataset loaded and split.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub config_hash: String,
    pub dataset: Dataset,
    pub data_hash: String,
    pub folds: Vec<FoldSplit>,
}

impl Prepared {
    pub fn new(cfg: ExperimentConfig) -> CliResult<Self> {
        cfg.validate()?;
        let dataset = cfg.dataset.load()?;
        let folds = split_folds(&dataset, cfg.folds, cfg.fold_seed)?;
        Ok(Prepared {
            config_hash: cfg.hash(),
            data_hash: data_hash(&dataset),
            dataset,
            folds,
            cfg,
        })
    }

    pub fn check_fold(&self, fold: usize) -> CliResult<()> {
        if fold >= self.folds.len() {
            return Err(CliError::Validation(format!(
                "--fold: {fold} is out of range for {} folds",
                self.folds.len()
            )));
        }
        Ok(())
    }

    /// `(train, test)` rows of `fold`.
    pub fn split(&self, fold: usize) -> CliResult<(Dataset, Dataset)> {
        self.check_fold(fold)?;
        let f = &self.folds[fold];
        Ok((self.dataset.subset(&f.train_indices), self.dataset.subset(&f.test_indices)))
    }

    pub fn manifest(&self, fold: usize) -> Manifest {
        let cfg = &self.cfg;
        let mut seeds = BTreeMap::new();
        seeds.insert("fold_seed".to_string(), cfg.fold_seed);
        if let Some(s) = cfg.dataset.seed() {
            seeds.insert("data_seed".to_string(), s);
        }
        seeds.insert("dnn_seed".to_string(), cfg.dnn_seed(fold));
        seeds.insert("extractor_seed".to_string(), cfg.extraction.seed);
        seeds.insert("importance_seed".to_string(), cfg.metrics.importance_seed);
        for (i, s) in cfg.metrics.stability_seeds.iter().enumerate() {
            seeds.insert(format!("stability_seed_{i}"), *s);
        }
        Manifest {
            config_hash: self.config_hash.clone(),
            data_hash: self.data_hash.clone(),
            dataset: cfg.dataset.label(),
            fold,
            seeds,
        }
    }

    pub fn train(&self, fold: usize, train: &Dataset) -> CliResult<MlpModel> {
        let tc = mlp::TrainConfig {
            seed: self.cfg.dnn_seed(fold),
            ..self.cfg.dnn.clone()
        };
        Ok(mlp::train(train, &tc)?.model)
    }

    /// Extraction config with the extractor seed replaced by `seed`.
    pub fn extraction_config(&self, seed: u64) -> ExtractionConfig {
        let mut ec = self.cfg.extraction.clone();
        ec.seed = seed;
        ec.cg.seed = seed;
        ec
    }

    /// Metrics of `rs` on both splits, with feature alignment on each.
    pub fn evaluate(&self, fold: usize, rs: &RuleSet, model: &MlpModel, train: &Dataset, test: &Dataset) -> CliResult<Evaluation> {
        let prov = self.manifest(fold).provenance();
        let m = &self.cfg.metrics;
        let mut reports = Vec::new();
        let mut alignment = None;
        for (name, split) in [("train", train), ("test", test)] {
            let y_dnn = model.predict_labels(split.features())?;
            let mut report = MetricsReport::compute(name, rs, split.features(), &y_dnn, split.labels(), prov.clone())?;
            let al = if rs.is_empty() {
                None
            } else {
                Some(metrics::feature_alignment(
                    rs,
                    model,
                    split.features(),
                    split.labels(),
                    m.p,
                    m.repeats,
                    m.importance_seed,
                )?)
            };
            report.rbo = al.as_ref().map(|a| a.rbo);
            if name == "test" {
                alignment = al;
            }
            reports.push(report);
        }
        let test = reports.pop().expect("two splits");
        let train = reports.pop().expect("two splits");
        Ok(Evaluation { train, test, alignment })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub train: MetricsReport,
    pub test: MetricsReport,
    /// Rule and network feature rankings on the test split.
    pub alignment: Option<Alignment>,
}

/// Extraction details kept in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionLog {
    pub mode: Mode,
    pub ped_fidelity: f64,
    pub final_fidelity: f64,
    pub converged: bool,
    pub pricing_complete: bool,
    pub per_layer_log: Vec<LayerLog>,
}

impl ExtractionLog {
    pub fn new(r: &ExtractionResult) -> Self {
        ExtractionLog {
            mode: r.mode,
            ped_fidelity: r.ped_fidelity,
            final_fidelity: r.final_fidelity,
            converged: r.converged,
            pricing_complete: r.pricing_complete,
            per_layer_log: r.per_layer_log.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOutcome {
    pub seeds: Vec<u64>,
    pub stable: bool,
    pub warning: Option<String>,
}

/// Report written next to each extracted rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub manifest: Manifest,
    pub mode: Mode,
    pub evaluation: Evaluation,
    pub extraction: ExtractionLog,
    pub stability: Option<StabilityOutcome>,
}

/// Runs `mode` once per stability seed and compares the rule sets. A run
/// whose seed equals the configured extractor seed reuses `main`. Returns
/// the outcome and the rule set of each seed.
pub fn stability(
    prepared: &Prepared,
    mode: Mode,
    model: &MlpModel,
    train: &Dataset,
    main: Option<&RuleSet>,
    seeds: &[u64],
) -> CliResult<(StabilityOutcome, Vec<RuleSet>)> {
    let main_seed = prepared.cfg.extraction.seed;
    let mut failure = None;
    let check = metrics::stability_check(
        |seed| {
            if let (Some(rs), true) = (main, seed == main_seed) {
                return Ok(rs.clone());
            }
            extract::extract(mode, model, train, &prepared.extraction_config(seed)).map(|r| r.ruleset).inspect_err(|e| {
                failure.get_or_insert_with(|| e.to_string());
            })
        },
        seeds,
    );
    let out = check.map_err(|e| CliError::Runtime(failure.unwrap_or_else(|| e.to_string())))?;
    let outcome = StabilityOutcome {
        seeds: seeds.to_vec(),
        stable: out.stable,
        warning: out.warning,
    };
    Ok((outcome, out.rulesets))
}

/// Per-fold, per-mode results of a cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: Mode,
    pub evaluation: Evaluation,
    pub stable: bool,
    pub ruleset_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub dnn_train_accuracy: f64,
    pub dnn_test_accuracy: f64,
    pub ped: ModeOutcome,
    pub dec: ModeOutcome,
    /// Train fidelity of dec minus that of ped.
    pub dec_train_fidelity_gain: f64,
    /// Test fidelity of dec minus that of ped.
    pub dec_test_fidelity_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub dataset: String,
    pub config_hash: String,
    pub data_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub folds: Vec<FoldOutcome>,
    pub failures: Vec<FoldFailure>,
    pub output_dir: PathBuf,
}

fn accuracy(model: &MlpModel, ds: &Dataset) -> CliResult<f64> {
    Ok(metrics::accuracy(&model.predict_labels(ds.features())?, ds.labels())?)
}

/// Train, extract in both modes, evaluate and check stability on one fold,
/// writing the fold's output tree.
pub fn run_fold(prepared: &Prepared, fold: usize) -> CliResult<FoldOutcome> {
    let (train, test) = prepared.split(fold)?;
    let manifest = prepared.manifest(fold);
    let dir = prepared.cfg.fold_dir(fold);
    let model = prepared.train(fold, &train)?;
    output::write_model(&dir.join("model.json"), &model, &manifest)?;

    let ec = prepared.extraction_config(prepared.cfg.extraction.seed);
    let dec = extract::cgx_dec(&model, &train, &ec)?;
    // the dec run starts from the ped result, which is exactly what cgx_ped returns
    let ped = ExtractionResult {
        mode: Mode::Ped,
        ruleset: dec.ped_ruleset.clone(),
        per_layer_log: Vec::new(),
        final_fidelity: dec.ped_fidelity,
        ..dec.clone()
    };
    let seeds = &prepared.cfg.metrics.stability_seeds;
    let mut outcomes = Vec::new();
    for result in [&ped, &dec] {
        let mut evaluation = prepared.evaluate(fold, &result.ruleset, &model, &train, &test)?;
        let (stab, _) = stability(prepared, result.mode, &model, &train, Some(&result.ruleset), seeds)?;
        evaluation.train.stability = Some(stab.stable);
        evaluation.test.stability = Some(stab.stable);
        let mode_dir = dir.join(result.mode.to_string());
        output::write_ruleset(&mode_dir.join("ruleset.json"), &result.ruleset, &manifest)?;
        let report = FoldReport {
            manifest: manifest.clone(),
            mode: result.mode,
            evaluation: evaluation.clone(),
            extraction: ExtractionLog::new(result),
            stability: Some(stab.clone()),
        };
        output::write_json(&mode_dir.join("report.json"), &report)?;
        outcomes.push(ModeOutcome {
            mode: result.mode,
            evaluation,
            stable: stab.stable,
            ruleset_text: result.ruleset.to_text(),
        });
    }
    let dec_out = outcomes.pop().expect("two modes");
    let ped_out = outcomes.pop().expect("two modes");
    Ok(FoldOutcome {
        fold,
        dnn_train_accuracy: accuracy(&model, &train)?,
        dnn_test_accuracy: accuracy(&model, &test)?,
        dec_train_fidelity_gain: dec.final_fidelity - dec.ped_fidelity,
        dec_test_fidelity_gain: dec_out.evaluation.test.fidelity - ped_out.evaluation.test.fidelity,
        ped: ped_out,
        dec: dec_out,
    })
}

/// Cross-validated run over every fold. A failing fold is recorded and
/// skipped; the run fails if more than half of the folds fail.
pub fn run_experiment(cfg: ExperimentConfig) -> CliResult<ExperimentSummary> {
    let prepared = Prepared::new(cfg)?;
    let mut folds = Vec::new();
    let mut failures = Vec::new();
    for fold in 0..prepared.folds.len() {
        match run_fold(&prepared, fold) {
            Ok(outcome) => {
                eprintln!(
                    "fold {fold}: dnn acc {:.4}, ped fid {:.4} ({} rules), dec fid {:.4} ({} rules)",
                    outcome.dnn_test_accuracy,
                    outcome.ped.evaluation.test.fidelity,
                    outcome.ped.evaluation.test.n_rules,
                    outcome.dec.evaluation.test.fidelity,
                    outcome.dec.evaluation.test.n_rules,
                );
                folds.push(outcome);
            }
            Err(e) => {
                eprintln!("fold {fold} failed: {e}");
                failures.push(FoldFailure {
                    fold,
                    error: e.to_string(),
                });
            }
        }
    }
    let mut seeds = prepared.manifest(0).seeds;
    seeds.remove("dnn_seed");
    seeds.insert("dnn_base_seed".to_string(), prepared.cfg.dnn.seed);
    let summary = ExperimentSummary {
        name: prepared.cfg.name.clone(),
        dataset: prepared.cfg.dataset.label(),
        config_hash: prepared.config_hash.clone(),
        data_hash: prepared.data_hash.clone(),
        seeds,
        folds,
        failures,
        output_dir: prepared.cfg.experiment_dir(),
    };
    output::write_summary(&prepared.cfg, &summary)?;
    if summary.failures.len() * 2 > prepared.folds.len() {
        return Err(CliError::Runtime(format!(
            "{} of {} folds failed; first error: {}",
            summary.failures.len(),
            prepared.folds.len(),
            summary.failures[0].error
        )));
    }
    Ok(summary)
}

/// Loads `path` if given, otherwise trains the fold's model.
pub fn model_for(prepared: &Prepared, fold: usize, train: &Dataset, path: Option<&Path>) -> CliResult<MlpModel> {
    match path {
        Some(p) => output::read_model(p),
        None => prepared.train(fold, train),
    }
}
