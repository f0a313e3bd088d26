//! Dataset ingestion, synthetic generators, fold splitting and quantile
//! binarization.
//!
//! Binarization turns every continuous feature into threshold literals
//! `x <= t` / `x > t` placed between the two data values that straddle each
//! requested quantile, and every categorical feature into one `x == c`
//! literal per observed category. The resulting [`BinarizedDataset`] stores
//! one coverage bitset per literal, which is what the rule learner consumes.

use std::collections::BTreeMap;
use std::path::Path;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ruleset::{Literal, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// A binary classification table.
///
/// Categorical columns are stored as category ids (`0.0, 1.0, ...`) indexing
/// into `categories[feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    categories: Vec<Vec<String>>,
    class_names: [String; 2],
}

impl Dataset {
    /// Builds an all-continuous dataset. Labels must be 0/1 and values finite.
    pub fn new(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let names = (0..features.cols()).map(|j| format!("x{}", j + 1)).collect();
        let kinds = vec![FeatureKind::Continuous; features.cols()];
        Self::with_schema(features, labels, names, kinds)
    }

    pub fn with_schema(
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::Parameter(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if feature_names.len() != features.cols() || feature_kinds.len() != features.cols() {
            return Err(Error::Schema(
                "feature names/kinds do not match the feature count".into(),
            ));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Parameter(format!("label {l} is not in {{0, 1}}")));
        }
        for (i, row) in features.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingestion {
                    row: i,
                    column: feature_names[j].clone(),
                    message: "non-finite value".into(),
                });
            }
        }
        let categories = feature_kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                FeatureKind::Continuous => Vec::new(),
                FeatureKind::Categorical => {
                    let max = features.column(j).into_iter().fold(-1.0f64, f64::max);
                    (0..=(max as usize)).map(|c| c.to_string()).collect()
                }
            })
            .collect();
        Ok(Dataset {
            features,
            labels,
            feature_names,
            feature_kinds,
            categories,
            class_names: ["0".into(), "1".into()],
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    /// Category labels of a categorical feature, indexed by category id.
    pub fn categories(&self, feature: usize) -> &[String] {
        &self.categories[feature]
    }

    /// Original class labels mapped to 0 and 1.
    pub fn class_names(&self) -> &[String; 2] {
        &self.class_names
    }

    /// Same schema, different labels (e.g. model predictions as targets).
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.n_samples() {
            return Err(Error::Parameter(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n_samples()
            )));
        }
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }

    /// Count of samples per class.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub label_column: String,
    /// Columns to treat as categorical; everything else must parse as a number.
    pub categorical: Vec<String>,
    pub delimiter: u8,
}

impl CsvOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        CsvOptions {
            label_column: label_column.into(),
            categorical: Vec::new(),
            delimiter: b',',
        }
    }
}

/// Reads a headed CSV file into a binary [`Dataset`].
///
/// Labels are remapped so that the lexicographically smaller original label
/// becomes class 0.
pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, opts)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| *h == opts.label_column)
        .ok_or_else(|| Error::Schema(format!("label column `{}` not found", opts.label_column)))?;
    for c in &opts.categorical {
        if !headers.contains(c) {
            return Err(Error::Schema(format!("categorical column `{c}` not found")));
        }
    }
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&j| j != label_idx).collect();
    let kinds: Vec<FeatureKind> = feature_cols
        .iter()
        .map(|&j| {
            if opts.categorical.contains(&headers[j]) {
                FeatureKind::Categorical
            } else {
                FeatureKind::Continuous
            }
        })
        .collect();

    let mut raw_labels = Vec::new();
    let mut raw_cells: Vec<Vec<String>> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Ingestion {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        raw_labels.push(record[label_idx].trim().to_string());
        raw_cells.push(feature_cols.iter().map(|&j| record[j].trim().to_string()).collect());
    }

    let mut classes: Vec<&String> = raw_labels.iter().collect();
    classes.sort();
    classes.dedup();
    if classes.len() > 2 {
        return Err(Error::UnsupportedTask(format!(
            "{} distinct labels; only binary classification is supported",
            classes.len()
        )));
    }
    if classes.len() < 2 {
        return Err(Error::Schema(format!(
            "label column `{}` needs two distinct classes",
            opts.label_column
        )));
    }
    let class_names = [classes[0].clone(), classes[1].clone()];
    let labels: Vec<u8> = raw_labels
        .iter()
        .map(|l| u8::from(*l == class_names[1]))
        .collect();

    // category ids follow sorted order of the observed strings
    let mut category_maps: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); feature_cols.len()];
    for (f, kind) in kinds.iter().enumerate() {
        if *kind == FeatureKind::Categorical {
            for cells in &raw_cells {
                category_maps[f].insert(cells[f].clone(), 0);
            }
            for (id, v) in category_maps[f].values_mut().enumerate() {
                *v = id;
            }
        }
    }

    let mut data = Vec::with_capacity(raw_cells.len() * feature_cols.len());
    for (row, cells) in raw_cells.iter().enumerate() {
        for (f, cell) in cells.iter().enumerate() {
            let value = match kinds[f] {
                FeatureKind::Categorical => category_maps[f][cell] as f64,
                FeatureKind::Continuous => {
                    let v: f64 = cell.parse().map_err(|_| Error::Ingestion {
                        row,
                        column: headers[feature_cols[f]].clone(),
                        message: format!("cannot parse `{cell}` as a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Ingestion {
                            row,
                            column: headers[feature_cols[f]].clone(),
                            message: format!("non-finite value `{cell}`"),
                        });
                    }
                    v
                }
            };
            data.push(value);
        }
    }

    let features = Matrix::from_vec(raw_cells.len(), feature_cols.len(), data);
    let names = feature_cols.iter().map(|&j| headers[j].clone()).collect();
    let mut ds = Dataset::with_schema(features, labels, names, kinds)?;
    ds.categories = category_maps
        .into_iter()
        .map(|m| m.into_keys().collect())
        .collect();
    ds.class_names = class_names;
    Ok(ds)
}

/// XOR benchmark: features i.i.d. uniform on `[0, 1]`, label
/// `round(x1) xor round(x2)`. Remaining dimensions are noise.
pub fn generate_xor(n_samples: usize, dims: usize, seed: u64) -> Result<Dataset> {
    if dims < 2 {
        return Err(Error::Parameter(format!("xor needs dims >= 2, got {dims}")));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("xor needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n_samples * dims).map(|_| rng.random::<f64>()).collect();
    let features = Matrix::from_vec(n_samples, dims, data);
    let labels = features
        .iter_rows()
        .map(|x| xor_label(x[0], x[1]))
        .collect();
    Dataset::new(features, labels)
}

pub(crate) fn xor_label(a: f64, b: f64) -> u8 {
    (a.round() as u8) ^ (b.round() as u8)
}

/// Harder synthetic task: `round(x1) xor round(x2) xor round(x3)` with a
/// fraction `noise` of labels flipped at random.
pub fn generate_noisy_parity(
    n_samples: usize,
    dims: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if dims < 3 {
        return Err(Error::Parameter(format!("parity task needs dims >= 3, got {dims}")));
    }
    if !(0.0..=0.5).contains(&noise) {
        return Err(Error::Parameter(format!("noise {noise} outside [0, 0.5]")));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n_samples * dims).map(|_| rng.random::<f64>()).collect();
    let features = Matrix::from_vec(n_samples, dims, data);
    let labels = features
        .iter_rows()
        .map(|x| {
            let clean = xor_label(x[0], x[1]) ^ (x[2].round() as u8);
            if rng.random::<f64>() < noise {
                1 - clean
            } else {
                clean
            }
        })
        .collect();
    Dataset::new(features, labels)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Stratified k-fold split. Each class is shuffled independently and dealt
/// round-robin across folds, so per-fold class counts differ by at most one.
pub fn split_folds(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Parameter(format!("need k >= 2 folds, got {k}")));
    }
    if k > ds.n_samples() {
        return Err(Error::Parameter(format!(
            "{k} folds requested for {} samples",
            ds.n_samples()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; ds.n_samples()];
    let mut next = 0usize;
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..ds.n_samples())
            .filter(|&i| ds.labels()[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.n_samples()).partition(|&i| assignment[i] == fold);
            FoldSplit {
                fold,
                train_indices: train,
                test_indices: test,
                seed,
            }
        })
        .collect())
}

/// Ordered, duplicate-free list of threshold literals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiteralCatalog {
    literals: Vec<Literal>,
    n_features: usize,
    /// Continuous features that produced no threshold (constant columns).
    constant_features: Vec<usize>,
    /// Category count per feature (0 for continuous features).
    category_counts: Vec<usize>,
}

impl LiteralCatalog {
    /// Builds a catalog from arbitrary literals; they are sorted and deduplicated.
    pub fn from_literals(mut literals: Vec<Literal>, n_features: usize) -> Result<Self> {
        if let Some(l) = literals.iter().find(|l| l.feature >= n_features) {
            return Err(Error::FeatureOutOfRange {
                index: l.feature,
                width: n_features,
            });
        }
        literals.sort_by(Literal::canonical_cmp);
        literals.dedup_by(|a, b| a.canonical_cmp(b).is_eq());
        let mut category_counts = vec![0; n_features];
        for l in literals.iter().filter(|l| l.op == Op::Eq) {
            let c = &mut category_counts[l.feature];
            *c = (*c).max(l.threshold as usize + 1);
        }
        Ok(LiteralCatalog {
            literals,
            n_features,
            constant_features: Vec::new(),
            category_counts,
        })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn constant_features(&self) -> &[usize] {
        &self.constant_features
    }

    pub fn category_count(&self, feature: usize) -> usize {
        self.category_counts[feature]
    }

    pub fn get(&self, index: usize) -> &Literal {
        &self.literals[index]
    }
}

/// Catalog plus one coverage bitset (over samples) per literal.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedDataset {
    catalog: LiteralCatalog,
    columns: Vec<FixedBitSet>,
    n_samples: usize,
}

impl BinarizedDataset {
    /// Evaluates every catalog literal on every row of `features`.
    pub fn from_catalog(catalog: LiteralCatalog, features: &Matrix) -> Result<Self> {
        if features.cols() != catalog.n_features() {
            return Err(Error::Shape {
                expected: catalog.n_features(),
                actual: features.cols(),
            });
        }
        let n = features.rows();
        let columns = catalog
            .literals()
            .iter()
            .map(|lit| {
                let mut col = FixedBitSet::with_capacity(n);
                for (i, row) in features.iter_rows().enumerate() {
                    if lit.holds(row[lit.feature]) {
                        col.insert(i);
                    }
                }
                col
            })
            .collect();
        Ok(BinarizedDataset {
            catalog,
            columns,
            n_samples: n,
        })
    }

    pub fn catalog(&self) -> &LiteralCatalog {
        &self.catalog
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_literals(&self) -> usize {
        self.columns.len()
    }

    /// Samples satisfying literal `j`.
    pub fn column(&self, j: usize) -> &FixedBitSet {
        &self.columns[j]
    }

    pub fn bit(&self, sample: usize, literal: usize) -> bool {
        self.columns[literal].contains(sample)
    }

    /// Samples satisfying every literal in `clause` (all samples if empty).
    pub fn cover(&self, clause: &[usize]) -> FixedBitSet {
        let mut cov = FixedBitSet::with_capacity(self.n_samples);
        cov.insert_range(..);
        for &j in clause {
            cov.intersect_with(&self.columns[j]);
        }
        cov
    }
}

/// Quantile binarization with `bins` thresholds per continuous feature.
pub fn binarize(ds: &Dataset, bins: usize) -> Result<BinarizedDataset> {
    let catalog = build_catalog(ds, bins)?;
    BinarizedDataset::from_catalog(catalog, ds.features())
}

/// The literal catalog [`binarize`] would use, without the bit matrix.
pub fn build_catalog(ds: &Dataset, bins: usize) -> Result<LiteralCatalog> {
    if bins == 0 {
        return Err(Error::Parameter("bins must be >= 1".into()));
    }
    let mut literals = Vec::new();
    let mut constant = Vec::new();
    for j in 0..ds.n_features() {
        match ds.feature_kinds()[j] {
            FeatureKind::Continuous => {
                let thresholds = quantile_thresholds(&ds.features().column(j), bins);
                if thresholds.is_empty() {
                    constant.push(j);
                }
                for t in thresholds {
                    literals.push(Literal::new(j, Op::Le, t));
                    literals.push(Literal::new(j, Op::Gt, t));
                }
            }
            FeatureKind::Categorical => {
                let mut seen: Vec<f64> = ds.features().column(j);
                seen.sort_by(f64::total_cmp);
                seen.dedup();
                if seen.len() > 1 {
                    for c in seen {
                        literals.push(Literal::new(j, Op::Eq, c));
                    }
                } else {
                    constant.push(j);
                }
            }
        }
    }
    let mut catalog = LiteralCatalog::from_literals(literals, ds.n_features())?;
    for j in 0..ds.n_features() {
        if ds.feature_kinds()[j] == FeatureKind::Categorical {
            catalog.category_counts[j] = ds.categories(j).len().max(catalog.category_counts[j]);
        }
    }
    catalog.constant_features = constant;
    Ok(catalog)
}

/// Thresholds at quantiles `q = 1/(bins+1), ..., bins/(bins+1)`, each placed
/// midway between the order statistic at the quantile and the next larger
/// distinct value. Duplicates collapse; a constant column yields none.
pub fn quantile_thresholds(values: &[f64], bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::with_capacity(bins);
    if n < 2 {
        return out;
    }
    for b in 1..=bins {
        let q = b as f64 / (bins + 1) as f64;
        let lo = ((q * (n - 1) as f64).floor() as usize).min(n - 1);
        let a = sorted[lo];
        // first value strictly above `a`
        let next = sorted.partition_point(|&v| v <= a);
        if next == n {
            continue;
        }
        let t = a + (sorted[next] - a) / 2.0;
        if out.last().is_none_or(|&last| last != t) {
            out.push(t);
        }
    }
    out
}
