//! Quality metrics for extracted rule sets: fidelity, accuracy, complexity,
//! ranked feature importance and rank-biased overlap, and a stability check.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::MlpModel;
use crate::ruleset::{rulesets_equal, RuleSet};

/// Default persistence of [`rbo`].
pub const DEFAULT_P: f64 = 0.9;

/// Fraction of positions where `a` and `b` agree.
pub fn fidelity(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Parameter("label vectors are empty".into()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Fraction of predictions equal to the true labels.
pub fn accuracy(predicted: &[u8], truth: &[u8]) -> Result<f64> {
    fidelity(predicted, truth)
}

/// Features ordered by decreasing importance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatures {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl RankedFeatures {
    /// Ranks `(feature, score)` pairs by descending score, ties by index.
    /// Negative scores are clamped to zero.
    pub fn from_scores(scores: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = scores.into_iter().map(|(f, s)| (f, s.max(0.0))).collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pairs.dedup_by_key(|p| p.0);
        RankedFeatures {
            indices: pairs.iter().map(|p| p.0).collect(),
            scores: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Ranking given directly by an ordered list (scores decrease by one per rank).
    pub fn from_order(indices: &[usize]) -> Self {
        let n = indices.len();
        RankedFeatures {
            indices: indices.to_vec(),
            scores: (0..n).map(|r| (n - r) as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn top(&self, n: usize) -> &[usize] {
        &self.indices[..n.min(self.indices.len())]
    }
}

/// Truncated, normalized rank-biased overlap evaluated to depth
/// `min(|s|, |t|)`: `sum_d p^(d-1) A_d / sum_d p^(d-1)` with `A_d` the
/// overlap fraction of the two top-`d` prefixes.
pub fn rbo(s: &RankedFeatures, t: &RankedFeatures, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("rbo persistence must be in (0, 1), got {p}")));
    }
    if s.is_empty() || t.is_empty() {
        return Err(Error::Parameter("rbo needs two non-empty rankings".into()));
    }
    let depth = s.len().min(t.len());
    let mut seen_s = std::collections::HashSet::new();
    let mut seen_t = std::collections::HashSet::new();
    let mut overlap = 0usize;
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for d in 0..depth {
        let (a, b) = (s.indices[d], t.indices[d]);
        if a == b {
            overlap += 1;
        } else {
            overlap += usize::from(seen_t.contains(&a)) + usize::from(seen_s.contains(&b));
        }
        seen_s.insert(a);
        seen_t.insert(b);
        num += w * overlap as f64 / (d + 1) as f64;
        den += w;
        w *= p;
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Coverage-weighted literal share: each rule contributes its coverage on
/// `x` split evenly across its literals. Features with zero score are left
/// out; an empty rule set gives an empty ranking.
pub fn rule_feature_importance(rs: &RuleSet, x: &Matrix) -> Result<RankedFeatures> {
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
    if x.rows() == 0 {
        return Ok(RankedFeatures::from_scores(scores));
    }
    for rule in rs.rules() {
        let mut fired = 0usize;
        for row in x.iter_rows() {
            fired += usize::from(rule.eval(row)?);
        }
        let coverage = fired as f64 / x.rows() as f64;
        let share = coverage / rule.len() as f64;
        for lit in rule.literals() {
            *scores.entry(lit.feature).or_insert(0.0) += share;
        }
    }
    Ok(RankedFeatures::from_scores(scores.into_iter().filter(|&(_, s)| s > 0.0)))
}

/// Permutation importance: mean drop in accuracy against `y` when one
/// feature column is shuffled, averaged over `repeats`. Repeat `r` draws
/// from stream `r` of a generator seeded with `seed`. Every feature is ranked.
pub fn dnn_feature_importance(model: &MlpModel, x: &Matrix, y: &[u8], repeats: usize, seed: u64) -> Result<RankedFeatures> {
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be >= 1".into()));
    }
    let base = accuracy(&model.predict_labels(x)?, y)?;
    let n = x.rows();
    let mut drop = vec![0.0; x.cols()];
    let mut shuffled = x.clone();
    let mut order: Vec<usize> = (0..n).collect();
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        for (f, total) in drop.iter_mut().enumerate() {
            order.sort_unstable();
            order.shuffle(&mut rng);
            for (i, &src) in order.iter().enumerate() {
                shuffled.set(i, f, x.get(src, f));
            }
            *total += base - accuracy(&model.predict_labels(&shuffled)?, y)?;
            for i in 0..n {
                shuffled.set(i, f, x.get(i, f));
            }
        }
    }
    Ok(RankedFeatures::from_scores(drop.into_iter().map(|d| d / repeats as f64).enumerate()))
}

/// Both rankings and their overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub rbo: f64,
    pub rules: RankedFeatures,
    pub dnn: RankedFeatures,
}

/// RBO between the rule-set and network feature rankings.
pub fn feature_alignment(
    rs: &RuleSet,
    model: &MlpModel,
    x: &Matrix,
    y: &[u8],
    p: f64,
    repeats: usize,
    seed: u64,
) -> Result<Alignment> {
    let rules = rule_feature_importance(rs, x)?;
    let dnn = dnn_feature_importance(model, x, y, repeats, seed)?;
    Ok(Alignment {
        rbo: rbo(&rules, &dnn, p)?,
        rules,
        dnn,
    })
}

#[derive(Debug, Clone)]
pub struct Stability {
    /// All rule sets are pairwise equal.
    pub stable: bool,
    pub rulesets: Vec<RuleSet>,
    pub warning: Option<String>,
}

/// Runs `pipeline` once per seed and compares the outputs.
pub fn stability_check<F>(mut pipeline: F, seeds: &[u64]) -> Result<Stability>
where
    F: FnMut(u64) -> Result<RuleSet>,
{
    if seeds.is_empty() {
        return Err(Error::Parameter("stability check needs at least one seed".into()));
    }
    let rulesets = seeds.iter().map(|&s| pipeline(s)).collect::<Result<Vec<_>>>()?;
    let stable = rulesets.windows(2).all(|w| rulesets_equal(&w[0], &w[1]));
    let warning = (seeds.len() == 1).then(|| "a single seed makes the stability check vacuous".to_string());
    Ok(Stability {
        stable,
        rulesets,
        warning,
    })
}

/// Configuration hash and every seed involved in producing a result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `train` or `test`.
    pub split: String,
    pub n_samples: usize,
    pub fidelity: f64,
    pub accuracy: f64,
    pub n_rules: usize,
    pub n_terms: usize,
    pub rbo: Option<f64>,
    pub stability: Option<bool>,
    pub provenance: Provenance,
}

impl MetricsReport {
    /// Fidelity against `y_dnn`, accuracy against `y_true`, and complexity of `rs` on `x`.
    pub fn compute(split: &str, rs: &RuleSet, x: &Matrix, y_dnn: &[u8], y_true: &[u8], provenance: Provenance) -> Result<Self> {
        let pred = rs.predict_batch(x)?;
        let (n_rules, n_terms) = rs.complexity();
        Ok(MetricsReport {
            split: split.to_string(),
            n_samples: x.rows(),
            fidelity: fidelity(&pred, y_dnn)?,
            accuracy: accuracy(&pred, y_true)?,
            n_rules,
            n_terms,
            rbo: None,
            stability: None,
            provenance,
        })
    }
}
