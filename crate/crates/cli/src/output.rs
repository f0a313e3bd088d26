//! Output files. Every file carries the manifest (config hash and seeds):
//! JSON documents wrap their payload next to a `manifest` key, text files
//! start with `#` comment lines, and CSV rows carry a `config_hash` column.

use std::fmt::Write as _;
use std::path::Path;

use cgx::mlp::MlpModel;
use cgx::ruleset::RuleSet;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{ExperimentSummary, Manifest};

fn runtime_io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn read_input(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime_io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| runtime_io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime_io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Serialize, Deserialize)]
struct Document {
    manifest: Manifest,
    #[serde(flatten)]
    payload: serde_json::Map<String, Value>,
}

fn wrap(manifest: &Manifest, key: &str, json: &str) -> Document {
    let value: Value = serde_json::from_str(json).expect("library JSON is valid");
    let mut payload = serde_json::Map::new();
    payload.insert(key.to_string(), value);
    Document {
        manifest: manifest.clone(),
        payload,
    }
}

/// Payload under `key` if `text` is a wrapped document, else the whole text.
fn unwrap_payload(text: &str, key: &str) -> String {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) if map.contains_key("manifest") => map.get(key).map_or_else(String::new, Value::to_string),
        _ => text.to_string(),
    }
}

pub fn write_model(path: &Path, model: &MlpModel, manifest: &Manifest) -> CliResult<()> {
    write_json(path, &wrap(manifest, "model", &model.to_json()?))
}

/// Reads a model written by [`write_model`] or by `MlpModel::save`.
pub fn read_model(path: &Path) -> CliResult<MlpModel> {
    let text = read_input(path)?;
    MlpModel::from_json(&unwrap_payload(&text, "model"))
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes the JSON form to `path` and the text form next to it with a
/// `.txt` extension.
pub fn write_ruleset(path: &Path, rs: &RuleSet, manifest: &Manifest) -> CliResult<()> {
    write_json(path, &wrap(manifest, "ruleset", &rs.to_json()))?;
    write_text(&path.with_extension("txt"), &ruleset_text(rs, manifest))
}

pub fn ruleset_text(rs: &RuleSet, manifest: &Manifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# config_hash: {}", manifest.config_hash);
    let _ = writeln!(s, "# data_hash: {}", manifest.data_hash);
    let _ = writeln!(s, "# dataset: {}, fold: {}", manifest.dataset, manifest.fold);
    let seeds: Vec<String> = manifest.seeds.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "# seeds: {}", seeds.join(" "));
    s.push_str(&rs.to_text());
    s
}

/// Reads a rule set from JSON (wrapped or bare) or from the text form.
pub fn read_ruleset(path: &Path) -> CliResult<RuleSet> {
    let text = read_input(path)?;
    let parsed = if text.trim_start().starts_with('{') {
        RuleSet::from_json(&unwrap_payload(&text, "ruleset"))
    } else {
        RuleSet::from_text(&text)
    };
    parsed.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct FoldRow<'a> {
    dataset: &'a str,
    mode: &'a str,
    fold: String,
    fidelity: f64,
    accuracy: f64,
    n_rules: f64,
    n_terms: f64,
    rbo: Option<f64>,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct GainRow<'a> {
    dataset: &'a str,
    fold: String,
    dnn_error: f64,
    ped_fidelity: f64,
    dec_fidelity: f64,
    gain: f64,
    config_hash: &'a str,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    runtime_io(path, e)
}

/// Writes `summary.csv` (test-split rows per fold and mode, then `mean`
/// and `std` rows), `decompositional.csv` and `summary.json`.
pub fn write_summary(cfg: &ExperimentConfig, summary: &ExperimentSummary) -> CliResult<()> {
    let dir = cfg.experiment_dir();
    std::fs::create_dir_all(&dir).map_err(|e| runtime_io(&dir, e))?;
    let hash = summary.config_hash.as_str();
    let dataset = summary.dataset.as_str();

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for mode in ["ped", "dec"] {
        let reports: Vec<_> = summary
            .folds
            .iter()
            .map(|f| (f.fold, if mode == "ped" { &f.ped } else { &f.dec }))
            .collect();
        for (fold, m) in &reports {
            let t = &m.evaluation.test;
            w.serialize(FoldRow {
                dataset,
                mode,
                fold: fold.to_string(),
                fidelity: t.fidelity,
                accuracy: t.accuracy,
                n_rules: t.n_rules as f64,
                n_terms: t.n_terms as f64,
                rbo: t.rbo,
                config_hash: hash,
            })
            .map_err(|e| csv_error(&path, e))?;
        }
        let col = |f: &dyn Fn(&cgx::metrics::MetricsReport) -> Option<f64>| {
            let v: Vec<f64> = reports.iter().filter_map(|(_, m)| f(&m.evaluation.test)).collect();
            mean_std(&v)
        };
        let stats = [
            col(&|t| Some(t.fidelity)),
            col(&|t| Some(t.accuracy)),
            col(&|t| Some(t.n_rules as f64)),
            col(&|t| Some(t.n_terms as f64)),
            col(&|t| t.rbo),
        ];
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let g = |i: usize| if pick == 0 { stats[i].0 } else { stats[i].1 };
            w.serialize(FoldRow {
                dataset,
                mode,
                fold: label.to_string(),
                fidelity: g(0),
                accuracy: g(1),
                n_rules: g(2),
                n_terms: g(3),
                rbo: Some(g(4)).filter(|v| v.is_finite()),
                config_hash: hash,
            })
            .map_err(|e| csv_error(&path, e))?;
        }
    }
    w.flush().map_err(|e| csv_error(&path, e))?;

    let path = dir.join("decompositional.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    let mut rows = Vec::new();
    for f in &summary.folds {
        rows.push((
            f.fold.to_string(),
            1.0 - f.dnn_test_accuracy,
            f.ped.evaluation.test.fidelity,
            f.dec.evaluation.test.fidelity,
        ));
    }
    let stat = |i: usize| {
        let v: Vec<f64> = rows
            .iter()
            .map(|r| match i {
                0 => r.1,
                1 => r.2,
                _ => r.3,
            })
            .collect();
        mean_std(&v).0
    };
    if !rows.is_empty() {
        rows.push(("mean".to_string(), stat(0), stat(1), stat(2)));
    }
    for (fold, dnn_error, ped, dec) in rows {
        w.serialize(GainRow {
            dataset,
            fold,
            dnn_error,
            ped_fidelity: ped,
            dec_fidelity: dec,
            gain: dec - ped,
            config_hash: hash,
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| csv_error(&path, e))?;

    write_json(&dir.join("summary.json"), summary)
}
