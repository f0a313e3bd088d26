//! Experiment configuration: a TOML file, command-line overrides, and a
//! content hash of the resolved result.

use std::path::{Path, PathBuf};

use cgx::data::{self, CsvOptions, Dataset};
use cgx::extract::ExtractionConfig;
use cgx::mlp::TrainConfig;
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Uniform features, label `round(x1) xor round(x2)`.
    Xor { n_samples: usize, dims: usize, seed: u64 },
    /// Uniform features, label `round(x1) xor round(x2) xor round(x3)` with
    /// a fraction `noise` of labels flipped.
    Parity {
        n_samples: usize,
        dims: usize,
        noise: f64,
        seed: u64,
    },
    /// Headed CSV file with a binary label column.
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default)]
        categorical: Vec<String>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Xor {
            n_samples: 1000,
            dims: 10,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    /// Short name used in CSV rows.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::Xor { .. } => "xor".into(),
            DatasetSpec::Parity { .. } => "parity".into(),
            DatasetSpec::Csv { path, .. } => path
                .file_stem()
                .map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Generator seed, if the data is synthetic.
    pub fn seed(&self) -> Option<u64> {
        match self {
            DatasetSpec::Xor { seed, .. } | DatasetSpec::Parity { seed, .. } => Some(*seed),
            DatasetSpec::Csv { .. } => None,
        }
    }

    pub fn load(&self) -> CliResult<Dataset> {
        let ds = match self {
            DatasetSpec::Xor { n_samples, dims, seed } => data::generate_xor(*n_samples, *dims, *seed)?,
            DatasetSpec::Parity {
                n_samples,
                dims,
                noise,
                seed,
            } => data::generate_noisy_parity(*n_samples, *dims, *noise, *seed)?,
            DatasetSpec::Csv {
                path,
                label_column,
                categorical,
            } => {
                let mut opts = CsvOptions::new(label_column.clone());
                opts.categorical = categorical.clone();
                data::load_csv(path, &opts).map_err(|e| CliError::Validation(e.to_string()))?
            }
        };
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Persistence of the rank-biased overlap.
    pub p: f64,
    /// Permutation repeats for the network's feature importance.
    pub repeats: usize,
    pub importance_seed: u64,
    /// Extractor seeds compared by the stability check.
    pub stability_seeds: Vec<u64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            p: cgx::metrics::DEFAULT_P,
            repeats: 5,
            importance_seed: 0,
            stability_seeds: vec![0, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment name; outputs go to `<output_dir>/<name>/`.
    pub name: String,
    pub output_dir: PathBuf,
    pub folds: usize,
    pub fold_seed: u64,
    pub dataset: DatasetSpec,
    /// Network training; fold `k` trains with seed `dnn.seed + k`.
    pub dnn: TrainConfig,
    pub extraction: ExtractionConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "xor".into(),
            output_dir: PathBuf::from("out"),
            folds: 5,
            fold_seed: 0,
            dataset: DatasetSpec::default(),
            dnn: TrainConfig::default(),
            extraction: ExtractionConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {message}"))
}

impl ExperimentConfig {
    /// Reads a TOML file; missing keys take their defaults.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// Checks every field, naming the offending key in the error.
    pub fn validate(&self) -> CliResult<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(invalid("name", format!("`{}` is not a usable directory name", self.name)));
        }
        if self.folds < 2 {
            return Err(invalid("folds", format!("must be >= 2, got {}", self.folds)));
        }
        match &self.dataset {
            DatasetSpec::Xor { n_samples, dims, .. } => {
                if *dims < 2 {
                    return Err(invalid("dataset.dims", format!("xor needs >= 2, got {dims}")));
                }
                if *n_samples < self.folds {
                    return Err(invalid("dataset.n_samples", format!("{n_samples} samples for {} folds", self.folds)));
                }
            }
            DatasetSpec::Parity {
                n_samples, dims, noise, ..
            } => {
                if *dims < 3 {
                    return Err(invalid("dataset.dims", format!("parity needs >= 3, got {dims}")));
                }
                if !(0.0..=0.5).contains(noise) {
                    return Err(invalid("dataset.noise", format!("must be in [0, 0.5], got {noise}")));
                }
                if *n_samples < self.folds {
                    return Err(invalid("dataset.n_samples", format!("{n_samples} samples for {} folds", self.folds)));
                }
            }
            DatasetSpec::Csv { path, label_column, .. } => {
                if !path.is_file() {
                    return Err(invalid("dataset.path", format!("{} does not exist", path.display())));
                }
                if label_column.is_empty() {
                    return Err(invalid("dataset.label_column", "must not be empty"));
                }
            }
        }
        self.dnn.validate().map_err(|e| invalid("dnn", e))?;
        self.extraction.validate().map_err(|e| invalid("extraction", e))?;
        if !(self.metrics.p > 0.0 && self.metrics.p < 1.0) {
            return Err(invalid("metrics.p", format!("must be in (0, 1), got {}", self.metrics.p)));
        }
        if self.metrics.repeats == 0 {
            return Err(invalid("metrics.repeats", "must be >= 1"));
        }
        if self.metrics.stability_seeds.is_empty() {
            return Err(invalid("metrics.stability_seeds", "must list at least one seed"));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes to JSON");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.experiment_dir().join(format!("fold-{fold}"))
    }

    pub fn dnn_seed(&self, fold: usize) -> u64 {
        self.dnn.seed.wrapping_add(fold as u64)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Configuration file (TOML); defaults are used for missing keys.
    #[arg(long, short = 'c', global = true)]
    pub config: Option<PathBuf>,
    /// Experiment name.
    #[arg(long, global = true)]
    pub name: Option<String>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub fold_seed: Option<u64>,
    /// `xor`, `parity`, or a CSV path.
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// Label column for CSV data.
    #[arg(long, global = true)]
    pub label_column: Option<String>,
    #[arg(long, global = true)]
    pub n_samples: Option<usize>,
    #[arg(long, global = true)]
    pub dims: Option<usize>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true)]
    pub data_seed: Option<u64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub dnn_seed: Option<u64>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub lambda0: Option<f64>,
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub max_rule_len: Option<usize>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub max_pricing_nodes: Option<usize>,
    #[arg(long, global = true)]
    pub extractor_seed: Option<u64>,
    /// Rank-biased overlap persistence.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
}

impl Overrides {
    /// Loads the config file (or defaults), applies the overrides and validates.
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> CliResult<()> {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = &$src {
                    $dst = v.clone();
                }
            };
        }
        set!(self.name, cfg.name);
        set!(self.output_dir, cfg.output_dir);
        set!(self.folds, cfg.folds);
        set!(self.fold_seed, cfg.fold_seed);
        if let Some(data) = &self.data {
            cfg.dataset = match (data.as_str(), &cfg.dataset) {
                ("xor", DatasetSpec::Xor { .. }) | ("parity", DatasetSpec::Parity { .. }) => cfg.dataset.clone(),
                ("xor", _) => DatasetSpec::default(),
                ("parity", _) => DatasetSpec::Parity {
                    n_samples: 1000,
                    dims: 3,
                    noise: 0.15,
                    seed: 0,
                },
                (path, DatasetSpec::Csv { label_column, categorical, .. }) => DatasetSpec::Csv {
                    path: PathBuf::from(path),
                    label_column: label_column.clone(),
                    categorical: categorical.clone(),
                },
                (path, _) => DatasetSpec::Csv {
                    path: PathBuf::from(path),
                    label_column: "label".into(),
                    categorical: Vec::new(),
                },
            };
        }
        match &mut cfg.dataset {
            DatasetSpec::Xor { n_samples, dims, seed } => {
                set!(self.n_samples, *n_samples);
                set!(self.dims, *dims);
                set!(self.data_seed, *seed);
                if self.noise.is_some() {
                    return Err(invalid("--noise", "only applies to parity data"));
                }
            }
            DatasetSpec::Parity {
                n_samples,
                dims,
                noise,
                seed,
            } => {
                set!(self.n_samples, *n_samples);
                set!(self.dims, *dims);
                set!(self.noise, *noise);
                set!(self.data_seed, *seed);
            }
            DatasetSpec::Csv { label_column, .. } => {
                set!(self.label_column, *label_column);
                if self.n_samples.is_some() || self.dims.is_some() || self.noise.is_some() || self.data_seed.is_some() {
                    return Err(invalid("--data", "generator options do not apply to CSV data"));
                }
            }
        }
        set!(self.epochs, cfg.dnn.epochs);
        set!(self.learning_rate, cfg.dnn.learning_rate);
        set!(self.dnn_seed, cfg.dnn.seed);
        set!(self.bins, cfg.extraction.bins);
        set!(self.k, cfg.extraction.k);
        set!(self.lambda0, cfg.extraction.cg.lambda0);
        set!(self.lambda1, cfg.extraction.cg.lambda1);
        set!(self.max_rule_len, cfg.extraction.cg.max_rule_len);
        set!(self.max_iter, cfg.extraction.cg.max_iterations);
        set!(self.max_pricing_nodes, cfg.extraction.cg.max_pricing_nodes);
        if let Some(s) = self.extractor_seed {
            cfg.extraction.seed = s;
            cfg.extraction.cg.seed = s;
        }
        set!(self.p, cfg.metrics.p);
        set!(self.repeats, cfg.metrics.repeats);
        Ok(())
    }
}
