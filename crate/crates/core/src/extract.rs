//! Rule extraction from a trained network.
//!
//! The pedagogical pipeline fits a rule set to the network's predicted
//! labels. The decompositional pipeline starts from that rule set and, layer
//! by layer, learns rules over hidden activations that predict where the
//! current rule set disagrees with the network. Each such rule is rewritten
//! as an input-space conjunction and kept only if it raises train fidelity.

use std::collections::BTreeSet;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::cg::{self, CgConfig, Clause};
use crate::data::{binarize, BinarizedDataset, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{ActivationTrace, MlpModel};
use crate::ruleset::{Rule, RuleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub cg: CgConfig,
    /// Quantile thresholds per continuous feature (inputs and hidden units).
    pub bins: usize,
    /// Beam width of the substitution search.
    pub k: usize,
    pub substitution_max_len: usize,
    /// Extractor seed; the pipelines are deterministic and do not draw from it.
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            cg: CgConfig::default(),
            bins: 9,
            k: 10,
            substitution_max_len: 3,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        self.cg.validate()?;
        if self.bins == 0 {
            return Err(Error::Parameter("bins must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        if self.substitution_max_len == 0 {
            return Err(Error::Parameter("substitution_max_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ped,
    Dec,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ped => "ped",
            Mode::Dec => "dec",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ped" => Ok(Mode::Ped),
            "dec" => Ok(Mode::Dec),
            other => Err(Error::Parameter(format!("unknown mode `{other}` (expected ped or dec)"))),
        }
    }
}

/// One hidden-layer error rule and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Rule over the layer's units, rendered as text.
    pub hidden_rule: String,
    /// Input-space substitute, rendered as text.
    pub substituted: String,
    pub substitution_error: f64,
    /// `positive` adds the rule, `default` carves it out as an exception.
    pub label: u8,
    pub fidelity_before: f64,
    pub fidelity_with: f64,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLog {
    /// 1-based hidden layer index.
    pub layer: usize,
    /// Samples the rule set got wrong when the layer was reached.
    pub n_errors: usize,
    pub n_error_rules: usize,
    pub n_substituted: usize,
    pub n_admitted: usize,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub mode: Mode,
    pub ruleset: RuleSet,
    /// The pedagogical rule set the decompositional pass started from.
    pub ped_ruleset: RuleSet,
    pub per_layer_log: Vec<LayerLog>,
    /// Train fidelity of `ped_ruleset`.
    pub ped_fidelity: f64,
    /// Train fidelity of `ruleset`.
    pub final_fidelity: f64,
    /// The pedagogical column generation converged before its iteration cap.
    pub converged: bool,
    /// Every pricing call of the pedagogical fit finished below its node budget.
    pub pricing_complete: bool,
}

/// Input-space rewrite of a hidden rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Substitution {
    pub rule: Rule,
    pub clause: Clause,
    /// Fraction of samples where the rewrite and the hidden rule disagree.
    pub error: f64,
}

fn agreement(a: &[u8], b: &[u8]) -> f64 {
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    same as f64 / a.len().max(1) as f64
}

fn check_inputs(model: &MlpModel, data: &Dataset, cfg: &ExtractionConfig) -> Result<()> {
    cfg.validate()?;
    if data.n_features() != model.n_inputs() {
        return Err(Error::Shape {
            expected: model.n_inputs(),
            actual: data.n_features(),
        });
    }
    if data.n_samples() == 0 {
        return Err(Error::Parameter("cannot extract rules from an empty dataset".into()));
    }
    Ok(())
}

/// Pedagogical extraction: a rule set fitted to the network's labels on `data`.
/// The labels stored in `data` are not used.
pub fn cgx_ped(model: &MlpModel, data: &Dataset, cfg: &ExtractionConfig) -> Result<ExtractionResult> {
    check_inputs(model, data, cfg)?;
    let y_dnn = model.predict_labels(data.features())?;
    let x_bin = binarize(data, cfg.bins)?;
    ped_on(&x_bin, data.features(), &y_dnn, cfg)
}

fn ped_on(x_bin: &BinarizedDataset, x: &Matrix, y_dnn: &[u8], cfg: &ExtractionConfig) -> Result<ExtractionResult> {
    let fit = cg::fit(x_bin, y_dnn, &cfg.cg)?;
    let ruleset = fit.ruleset.canonicalize();
    let fidelity = agreement(&ruleset.predict_batch(x)?, y_dnn);
    Ok(ExtractionResult {
        mode: Mode::Ped,
        ped_ruleset: ruleset.clone(),
        ruleset,
        per_layer_log: Vec::new(),
        ped_fidelity: fidelity,
        final_fidelity: fidelity,
        converged: fit.converged,
        pricing_complete: fit.pricing_complete,
    })
}

/// Decompositional extraction seeded with the pedagogical rule set.
pub fn cgx_dec(model: &MlpModel, data: &Dataset, cfg: &ExtractionConfig) -> Result<ExtractionResult> {
    check_inputs(model, data, cfg)?;
    if model.depth() == 0 {
        return Err(Error::Parameter("decompositional extraction needs at least one hidden layer".into()));
    }
    let x = data.features();
    let y_dnn = model.predict_labels(x)?;
    let x_bin = binarize(data, cfg.bins)?;
    let mut result = ped_on(&x_bin, x, &y_dnn, cfg)?;
    result.mode = Mode::Dec;
    let trace = model.hidden_activations(x)?;

    let mut rules = result.ruleset.clone();
    let mut fid = result.ped_fidelity;
    let hidden_cfg = CgConfig {
        positive_class: Some(1),
        ..cfg.cg.clone()
    };
    for (i, acts) in trace.layers.iter().enumerate() {
        let pred = rules.predict_batch(x)?;
        let errors: Vec<u8> = pred.iter().zip(&y_dnn).map(|(a, b)| u8::from(a != b)).collect();
        let n_errors = errors.iter().filter(|&&e| e == 1).count();
        let mut log = LayerLog {
            layer: i + 1,
            n_errors,
            n_error_rules: 0,
            n_substituted: 0,
            n_admitted: 0,
            candidates: Vec::new(),
        };
        if n_errors == 0 {
            result.per_layer_log.push(log);
            continue;
        }
        let hidden = Dataset::new(acts.clone(), errors)?;
        let h_bin = binarize(&hidden, cfg.bins)?;
        let error_rules = cg::fit(&h_bin, hidden.labels(), &hidden_cfg)?.ruleset.canonicalize();
        log.n_error_rules = error_rules.rules().len();
        for hidden_rule in error_rules.rules() {
            let sub = match substitute(hidden_rule, &trace, i, &x_bin, cfg) {
                Ok(s) => s,
                Err(Error::Substitution(_)) => continue,
                Err(e) => return Err(e),
            };
            log.n_substituted += 1;
            let as_rule = rules.with_rule(&sub.rule)?.canonicalize();
            let as_exception = rules.with_exception(&sub.rule, x_bin.catalog())?.canonicalize();
            let fid_rule = agreement(&as_rule.predict_batch(x)?, &y_dnn);
            let fid_exception = agreement(&as_exception.predict_batch(x)?, &y_dnn);
            let (label, candidate, fid_with) = if fid_exception > fid_rule {
                (rules.default_class(), as_exception, fid_exception)
            } else {
                (rules.positive_class(), as_rule, fid_rule)
            };
            let admitted = fid_with > fid;
            log.candidates.push(Candidate {
                hidden_rule: hidden_rule.to_string(),
                substituted: sub.rule.to_string(),
                substitution_error: sub.error,
                label,
                fidelity_before: fid,
                fidelity_with: fid_with,
                admitted,
            });
            if admitted {
                rules = candidate;
                fid = fid_with;
                log.n_admitted += 1;
            }
        }
        result.per_layer_log.push(log);
    }
    assert!(fid >= result.ped_fidelity, "admission gate let fidelity drop");
    result.ruleset = rules;
    result.final_fidelity = fid;
    Ok(result)
}

/// Runs the pipeline selected by `mode`.
pub fn extract(mode: Mode, model: &MlpModel, data: &Dataset, cfg: &ExtractionConfig) -> Result<ExtractionResult> {
    match mode {
        Mode::Ped => cgx_ped(model, data, cfg),
        Mode::Dec => cgx_dec(model, data, cfg),
    }
}

/// Ordering key for substitution candidates: mismatches, length, literals.
type Key = (usize, Clause);

fn key_lt(a: &Key, b: &Key) -> bool {
    (a.0, a.1.len(), &a.1) < (b.0, b.1.len(), &b.1)
}

fn sort_keys(keys: &mut [Key]) {
    keys.sort_by(|a, b| (a.0, a.1.len(), &a.1).cmp(&(b.0, b.1.len(), &b.1)));
}

/// Rewrites a rule over the units of hidden layer `layer` (0-based index
/// into `trace.layers`) as the input-space conjunction that best reproduces
/// its firing pattern on the rows behind `x_bin`.
///
/// Beam search of width `cfg.k` over literal extensions, up to
/// `cfg.substitution_max_len` literals. Every single literal is scored, so
/// the result is never worse than the best single literal. Extensions that
/// fire on no sample are not considered.
pub fn substitute(
    hidden_rule: &Rule,
    trace: &ActivationTrace,
    layer: usize,
    x_bin: &BinarizedDataset,
    cfg: &ExtractionConfig,
) -> Result<Substitution> {
    let acts = trace
        .layers
        .get(layer)
        .ok_or_else(|| Error::Parameter(format!("layer {layer} is not in the activation trace")))?;
    if acts.rows() != x_bin.n_samples() {
        return Err(Error::Parameter(format!(
            "activation trace has {} rows, binarized inputs have {}",
            acts.rows(),
            x_bin.n_samples()
        )));
    }
    let mut target = FixedBitSet::with_capacity(acts.rows());
    for (i, row) in acts.iter_rows().enumerate() {
        if hidden_rule.eval(row)? {
            target.insert(i);
        }
    }
    let (clause, mismatches) = beam_search(&target, x_bin, cfg.k, cfg.substitution_max_len)?;
    let literals = clause.iter().map(|&j| *x_bin.catalog().get(j)).collect();
    Ok(Substitution {
        rule: Rule::new(literals, hidden_rule.class_label())?,
        clause,
        error: mismatches as f64 / x_bin.n_samples().max(1) as f64,
    })
}

/// Best conjunction for reproducing `target`, with its mismatch count.
pub fn beam_search(target: &FixedBitSet, x_bin: &BinarizedDataset, k: usize, max_len: usize) -> Result<(Clause, usize)> {
    let n_lit = x_bin.n_literals();
    if n_lit == 0 {
        return Err(Error::Substitution("the literal catalog is empty".into()));
    }
    let group = |j: usize| {
        let l = x_bin.catalog().get(j);
        (l.feature, l.op)
    };
    let mismatches = |cover: &FixedBitSet| cover.symmetric_difference_count(target);

    let mut level: Vec<Key> = (0..n_lit).map(|j| (mismatches(x_bin.column(j)), vec![j])).collect();
    sort_keys(&mut level);
    let mut best = level[0].clone();
    for _ in 1..max_len {
        level.truncate(k);
        let mut seen: BTreeSet<Clause> = BTreeSet::new();
        let mut next: Vec<Key> = Vec::new();
        for (_, clause) in &level {
            let cover = x_bin.cover(clause);
            for j in 0..n_lit {
                if clause.iter().any(|&c| c == j || group(c) == group(j)) {
                    continue;
                }
                let mut ext = clause.clone();
                ext.push(j);
                ext.sort_unstable();
                if !seen.insert(ext.clone()) {
                    continue;
                }
                let mut c = cover.clone();
                c.intersect_with(x_bin.column(j));
                if c.is_clear() {
                    continue;
                }
                next.push((mismatches(&c), ext));
            }
        }
        if next.is_empty() {
            break;
        }
        sort_keys(&mut next);
        if key_lt(&next[0], &best) {
            best = next[0].clone();
        }
        level = next;
    }
    Ok((best.1, best.0))
}
