//! Column-generation learner for single-polarity DNF rule sets.
//!
//! Let `P` be the samples of the positive class, `Z` the rest, and for a
//! clause (conjunction of catalog literals) `k` let `cov(k)` be the samples
//! it fires on. The restricted master LP over a clause pool is
//!
//! ```text
//! minimize   sum_{i in P} xi_i + sum_k (|cov(k) ∩ Z| + kappa(k)) w_k
//! subject to xi_i + sum_{k : i in cov(k)} w_k >= 1   for every i in P
//!            w, xi >= 0
//! ```
//!
//! with complexity cost `kappa(k) = lambda0 + lambda1 * |k|`. A negative
//! sample covered by several clauses is charged once per clause. The duals
//! `mu_i` of the covering rows drive pricing: a new clause is worth adding
//! iff its reduced cost
//! `|cov(k) ∩ Z| + lambda * kappa(k) - sum_{i in cov(k) ∩ P} mu_i` is
//! negative, where `lambda` is the shadow price of the complexity term
//! (1 in the penalty form solved here, 0 when the penalties vanish).
//!
//! Pricing is an exact depth-first search over literal sets in catalog
//! order, pruned with the bound obtained by ignoring `Z` coverage. After the
//! pool stops growing, an integral rule set is chosen from it.

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::data::BinarizedDataset;
use crate::error::{Error, Result};
use crate::lp;
use crate::matrix::Matrix;
use crate::ruleset::{Rule, RuleSet};

/// Sorted literal indices into a [`crate::data::LiteralCatalog`].
pub type Clause = Vec<usize>;

/// Two objective values closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 1_000_000;
const SEED_BEAM_WIDTH: usize = 8;

/// Units of `lambda0` / `lambda1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyScale {
    /// Penalties are in the same units as the loss (one misclassified sample).
    Absolute,
    /// Penalties are per-sample rates and get multiplied by the sample count,
    /// which is the same as dividing the loss by `N`.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgConfig {
    /// Penalty per rule.
    pub lambda0: f64,
    /// Penalty per literal.
    pub lambda1: f64,
    pub penalty_scale: PenaltyScale,
    pub max_rule_len: usize,
    #[serde(rename = "max_iter", alias = "max_iterations")]
    pub max_iterations: usize,
    /// Reduced-cost tolerance for accepting a new clause.
    pub epsilon: f64,
    /// Not consumed by the solver, which is deterministic; kept for provenance.
    pub seed: u64,
    /// Class whose rules are learned. `None` picks the minority class
    /// (class 1 on a tie).
    pub positive_class: Option<u8>,
    /// Multiplier on both penalties for rules of class 0 / class 1.
    pub class_penalty: [f64; 2],
    /// Pools up to this size get an exhaustive integral selection.
    pub exhaustive_selection_limit: usize,
    /// Cap on clauses evaluated per pricing call; 0 means no cap. Below the
    /// cap pricing is exact; at the cap it returns the best clause seen.
    pub max_pricing_nodes: usize,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            lambda0: 0.001,
            lambda1: 0.0005,
            penalty_scale: PenaltyScale::PerSample,
            max_rule_len: 5,
            max_iterations: 100,
            epsilon: 1e-6,
            seed: 0,
            positive_class: None,
            class_penalty: [1.0, 1.0],
            exhaustive_selection_limit: 20,
            max_pricing_nodes: 200_000,
        }
    }
}

impl CgConfig {
    /// Penalties in loss units with the given rule/term weights.
    pub fn absolute(lambda0: f64, lambda1: f64) -> Self {
        CgConfig {
            lambda0,
            lambda1,
            penalty_scale: PenaltyScale::Absolute,
            ..CgConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return bad(format!("lambda0 must be >= 0, got {}", self.lambda0));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 must be >= 0, got {}", self.lambda1));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-4) {
            return bad(format!("epsilon must be in (0, 1e-4], got {}", self.epsilon));
        }
        if self.max_rule_len == 0 {
            return bad("max_rule_len must be >= 1".into());
        }
        if self.positive_class.is_some_and(|c| c > 1) {
            return bad("positive_class must be 0 or 1".into());
        }
        if self.class_penalty.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
            return bad("class_penalty entries must be >= 0".into());
        }
        Ok(())
    }
}

/// Minority class of `y`, class 1 on a tie.
pub fn minority_class(y: &[u8]) -> u8 {
    let ones = y.iter().filter(|&&v| v == 1).count();
    u8::from(ones * 2 <= y.len())
}

/// Optimal restricted-master solution.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    /// One weight per pool clause.
    pub primal_weights: Vec<f64>,
    /// `xi_i` per positive sample (in [`CgProblem::positives`] order).
    pub slacks: Vec<f64>,
    /// `mu_i` per positive sample.
    pub sample_duals: Vec<f64>,
    pub complexity_dual: f64,
    pub objective: f64,
    /// `sum_i mu_i`; equals `objective` at optimality.
    pub dual_objective: f64,
}

impl MasterSolution {
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

/// A priced clause.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedClause {
    pub clause: Clause,
    pub reduced_cost: f64,
}

/// Result of one pricing call.
#[derive(Debug, Clone)]
pub struct Pricing {
    pub best: Option<PricedClause>,
    /// Clauses evaluated.
    pub nodes: usize,
    /// False when the node budget cut the search short.
    pub complete: bool,
}

/// One learning problem: binarized samples, labels and penalties.
#[derive(Debug)]
pub struct CgProblem<'a> {
    x_bin: &'a BinarizedDataset,
    cfg: CgConfig,
    positive_class: u8,
    positives: Vec<usize>,
    pos_set: FixedBitSet,
    neg_set: FixedBitSet,
    kappa0: f64,
    kappa1: f64,
}

impl<'a> CgProblem<'a> {
    pub fn new(x_bin: &'a BinarizedDataset, y: &[u8], cfg: &CgConfig) -> Result<Self> {
        cfg.validate()?;
        if y.len() != x_bin.n_samples() {
            return Err(Error::Parameter(format!(
                "{} labels for {} binarized samples",
                y.len(),
                x_bin.n_samples()
            )));
        }
        if let Some(v) = y.iter().find(|&&v| v > 1) {
            return Err(Error::Parameter(format!("label {v} is not binary")));
        }
        let positive_class = cfg.positive_class.unwrap_or_else(|| minority_class(y));
        let n = y.len();
        let mut pos_set = FixedBitSet::with_capacity(n);
        let mut neg_set = FixedBitSet::with_capacity(n);
        let mut positives = Vec::new();
        for (i, &v) in y.iter().enumerate() {
            if v == positive_class {
                pos_set.insert(i);
                positives.push(i);
            } else {
                neg_set.insert(i);
            }
        }
        let scale = match cfg.penalty_scale {
            PenaltyScale::Absolute => 1.0,
            PenaltyScale::PerSample => n as f64,
        } * cfg.class_penalty[positive_class as usize];
        Ok(CgProblem {
            x_bin,
            cfg: cfg.clone(),
            positive_class,
            positives,
            pos_set,
            neg_set,
            kappa0: scale * cfg.lambda0,
            kappa1: scale * cfg.lambda1,
        })
    }

    pub fn positive_class(&self) -> u8 {
        self.positive_class
    }

    /// Indices of positive samples; sample duals follow this order.
    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn binarized(&self) -> &BinarizedDataset {
        self.x_bin
    }

    pub fn config(&self) -> &CgConfig {
        &self.cfg
    }

    /// Complexity cost of a clause with `len` literals, in loss units.
    pub fn complexity_cost(&self, len: usize) -> f64 {
        self.kappa0 + self.kappa1 * len as f64
    }

    /// Master-LP column cost: covered negatives plus complexity.
    pub fn clause_cost(&self, clause: &[usize]) -> f64 {
        let cov = self.x_bin.cover(clause);
        cov.intersection_count(&self.neg_set) as f64 + self.complexity_cost(clause.len())
    }

    /// Integral objective of a rule set given as clauses: uncovered positives
    /// plus the master cost of every clause.
    pub fn selection_objective(&self, clauses: &[Clause]) -> f64 {
        let mut covered = FixedBitSet::with_capacity(self.x_bin.n_samples());
        let mut cost = 0.0;
        for k in clauses {
            let cov = self.x_bin.cover(k);
            covered.union_with(&cov);
            cost += cov.intersection_count(&self.neg_set) as f64 + self.complexity_cost(k.len());
        }
        let uncovered = self.positives.len() - covered.intersection_count(&self.pos_set);
        uncovered as f64 + cost
    }

    /// Complexity shadow price of the budget form equivalent to the penalty
    /// form: 1 whenever clauses carry a complexity cost, else 0.
    pub fn complexity_dual(&self) -> f64 {
        if self.kappa0 > 0.0 || self.kappa1 > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Solves the restricted master over `pool`.
    pub fn solve_master(&self, pool: &[Clause]) -> Result<MasterSolution> {
        if pool.is_empty() {
            return Err(Error::Parameter("master LP needs a non-empty clause pool".into()));
        }
        let m = self.positives.len();
        let k = pool.len();
        if m == 0 {
            return Ok(MasterSolution {
                primal_weights: vec![0.0; k],
                slacks: Vec::new(),
                sample_duals: Vec::new(),
                complexity_dual: self.complexity_dual(),
                objective: 0.0,
                dual_objective: 0.0,
            });
        }
        // positives covered by exactly the same pool clauses share one row:
        // their constraints coincide, so the group slack costs the group size
        // and the group dual is split evenly, which stays dual optimal
        let covers: Vec<FixedBitSet> = pool.iter().map(|k| self.x_bin.cover(k)).collect();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of_pattern: std::collections::HashMap<Vec<usize>, usize> = std::collections::HashMap::new();
        let mut group_of_row = Vec::with_capacity(m);
        for &i in &self.positives {
            let pattern: Vec<usize> = (0..k).filter(|&j| covers[j].contains(i)).collect();
            let g = *group_of_pattern.entry(pattern).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
            group_of_row.push(g);
        }
        let rows = groups.len();
        // columns: xi_0..xi_{rows-1}, w_0..w_{k-1}, surplus_0..surplus_{rows-1}
        let n = rows + k + rows;
        let mut a = Matrix::zeros(rows, n);
        let mut c = vec![0.0; n];
        for (g, members) in groups.iter().enumerate() {
            a.set(g, g, 1.0);
            a.set(g, rows + k + g, -1.0);
            c[g] = members.len() as f64;
        }
        for (j, (clause, cov)) in pool.iter().zip(&covers).enumerate() {
            c[rows + j] = cov.intersection_count(&self.neg_set) as f64 + self.complexity_cost(clause.len());
            for (g, members) in groups.iter().enumerate() {
                if cov.contains(members[0]) {
                    a.set(g, rows + j, 1.0);
                }
            }
        }
        let basis: Vec<usize> = (0..rows).collect();
        let sol = lp::solve(&c, &a, &vec![1.0; rows], &basis, MAX_PIVOTS)?;
        let sample_duals: Vec<f64> = group_of_row
            .iter()
            .map(|&g| sol.duals[g] / groups[g].len() as f64)
            .collect();
        let slacks = group_of_row.iter().map(|&g| sol.x[g]).collect();
        Ok(MasterSolution {
            primal_weights: sol.x[rows..rows + k].to_vec(),
            slacks,
            dual_objective: sample_duals.iter().sum(),
            sample_duals,
            complexity_dual: self.complexity_dual(),
            objective: sol.objective,
        })
    }

    /// Reduced cost of `clause` at the given duals.
    pub fn reduced_cost(&self, clause: &[usize], sample_duals: &[f64], complexity_dual: f64) -> f64 {
        let cov = self.x_bin.cover(clause);
        let gain: f64 = self
            .positives
            .iter()
            .zip(sample_duals)
            .filter(|(i, _)| cov.contains(**i))
            .map(|(_, mu)| mu)
            .sum();
        cov.intersection_count(&self.neg_set) as f64 + complexity_dual * self.complexity_cost(clause.len())
            - gain
    }

    /// Clause of length `<= max_rule_len` with the most negative reduced
    /// cost, if that cost is below `-epsilon`. Ties go to the shorter clause,
    /// then to the lexicographically smaller literal sequence.
    pub fn price(&self, sample_duals: &[f64], complexity_dual: f64) -> Result<Option<PricedClause>> {
        Ok(self.price_detailed(sample_duals, complexity_dual)?.best)
    }

    /// [`price`](Self::price) plus search statistics.
    pub fn price_detailed(&self, sample_duals: &[f64], complexity_dual: f64) -> Result<Pricing> {
        if sample_duals.len() != self.positives.len() {
            return Err(Error::Parameter(format!(
                "{} duals for {} positive samples",
                sample_duals.len(),
                self.positives.len()
            )));
        }
        let n = self.x_bin.n_samples();
        let mut mu = vec![0.0; n];
        let mut active = FixedBitSet::with_capacity(n);
        for (&i, &d) in self.positives.iter().zip(sample_duals) {
            if d > 0.0 {
                mu[i] = d;
                active.insert(i);
            }
        }
        if active.is_clear() {
            return Ok(Pricing {
                best: None,
                nodes: 0,
                complete: true,
            });
        }
        let mut search = PricingSearch {
            problem: self,
            mu: &mu,
            active: &active,
            lambda: complexity_dual,
            best: None,
            clause: Vec::with_capacity(self.cfg.max_rule_len),
            nodes: 0,
            budget: match self.cfg.max_pricing_nodes {
                0 => usize::MAX,
                b => b,
            },
            complete: true,
        };
        let mut all = FixedBitSet::with_capacity(n);
        all.insert_range(..);
        search.seed_incumbent(&all);
        let candidates: Vec<usize> = (0..self.x_bin.n_literals()).collect();
        search.descend(&all, &candidates);
        Ok(Pricing {
            best: search.best,
            nodes: search.nodes,
            complete: search.complete,
        })
    }

    /// Best single literal by training error (uncovered positives plus
    /// covered negatives); lowest index on ties.
    pub fn best_single_literal(&self) -> Option<usize> {
        (0..self.x_bin.n_literals()).min_by_key(|&j| {
            let col = self.x_bin.column(j);
            let tp = col.intersection_count(&self.pos_set);
            let fp = col.intersection_count(&self.neg_set);
            (self.positives.len() - tp) + fp
        })
    }
}

struct PricingSearch<'p, 'a> {
    problem: &'p CgProblem<'a>,
    mu: &'p [f64],
    active: &'p FixedBitSet,
    lambda: f64,
    best: Option<PricedClause>,
    clause: Clause,
    nodes: usize,
    budget: usize,
    complete: bool,
}

struct Child {
    literal: usize,
    group: usize,
    cover: FixedBitSet,
    gain: f64,
    neg: f64,
    rc: f64,
    subtree_bound: f64,
}

impl PricingSearch<'_, '_> {
    fn threshold(&self) -> f64 {
        match &self.best {
            Some(b) => b.reduced_cost + TIE_TOL,
            None => -self.problem.cfg.epsilon,
        }
    }

    /// Beam search for a good first incumbent so the exact search starts
    /// with a tight threshold.
    fn seed_incumbent(&mut self, all: &FixedBitSet) {
        let p = self.problem;
        let lits = p.x_bin.catalog().literals();
        let mut beam: Vec<(Clause, FixedBitSet)> = vec![(Vec::new(), all.clone())];
        for len in 1..=p.cfg.max_rule_len {
            let mut scored: Vec<(f64, Clause, FixedBitSet)> = Vec::new();
            for (clause, cover) in &beam {
                for j in 0..lits.len() {
                    let lit = lits[j];
                    if clause.contains(&j)
                        || clause
                            .iter()
                            .any(|&c| lits[c].feature == lit.feature && lits[c].op == lit.op)
                    {
                        continue;
                    }
                    self.nodes += 1;
                    let mut next = cover.clone();
                    next.intersect_with(p.x_bin.column(j));
                    if !clause.is_empty() && next == *cover {
                        continue;
                    }
                    let gain: f64 = next.intersection(self.active).map(|i| self.mu[i]).sum();
                    if gain <= 0.0 {
                        continue;
                    }
                    let neg = next.intersection_count(&p.neg_set) as f64;
                    let mut ext = clause.clone();
                    ext.push(j);
                    ext.sort_unstable();
                    scored.push((neg + self.bound(len, gain), ext, next));
                }
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            scored.dedup_by(|a, b| a.1 == b.1);
            scored.truncate(SEED_BEAM_WIDTH);
            if scored.is_empty() {
                break;
            }
            for (rc, clause, _) in &scored {
                self.clause.clone_from(clause);
                self.consider(*rc);
            }
            self.clause.clear();
            beam = scored.into_iter().map(|(_, c, cov)| (c, cov)).collect();
        }
    }

    /// Lower bound on the reduced cost of any clause of length >= `len`
    /// whose positive gain is at most `gain` (negatives dropped).
    fn bound(&self, len: usize, gain: f64) -> f64 {
        self.lambda * self.problem.complexity_cost(len) - gain
    }

    /// Evaluates every extension of the current clause by one literal from
    /// `candidates`, then recurses. Each child may only add literals that
    /// come after it in gain order, so every subset is reached once; a
    /// literal whose bound fails here is dropped from all deeper candidate
    /// lists.
    fn descend(&mut self, cover: &FixedBitSet, candidates: &[usize]) {
        let p = self.problem;
        let lits = p.x_bin.catalog().literals();
        let len = self.clause.len() + 1;
        let deeper = len < p.cfg.max_rule_len;
        let mut children = Vec::new();
        for &j in candidates {
            if self.nodes >= self.budget {
                self.complete = false;
                return;
            }
            let lit = lits[j];
            if self
                .clause
                .iter()
                .any(|&c| lits[c].feature == lit.feature && lits[c].op == lit.op)
            {
                continue;
            }
            self.nodes += 1;
            let mut next = cover.clone();
            next.intersect_with(p.x_bin.column(j));
            if !self.clause.is_empty() && next == *cover {
                // literal adds nothing here or below; the shorter clause dominates
                continue;
            }
            let gain: f64 = next.intersection(self.active).map(|i| self.mu[i]).sum();
            if gain <= 0.0 {
                continue;
            }
            let neg = next.intersection_count(&p.neg_set) as f64;
            let rc = neg + self.bound(len, gain);
            self.clause.push(j);
            self.consider(rc);
            self.clause.pop();
            if deeper {
                children.push(Child {
                    literal: j,
                    group: lit.feature * 3 + lit.op as usize,
                    cover: next,
                    gain,
                    neg,
                    rc,
                    subtree_bound: f64::INFINITY,
                });
            }
        }
        if !deeper {
            return;
        }
        let limit = self.threshold();
        children.retain(|c| self.bound(len + 1, c.gain) < limit);
        // most promising literals last, so they own the smallest subtrees
        children.sort_by(|a, b| {
            a.gain
                .total_cmp(&b.gain)
                .then(b.rc.total_cmp(&a.rc))
                .then(a.literal.cmp(&b.literal))
        });
        self.subtree_bounds(cover, len, &mut children);
        let order: Vec<usize> = children.iter().map(|c| c.literal).collect();
        for (k, child) in children.iter().enumerate() {
            if child.subtree_bound >= self.threshold() {
                continue;
            }
            self.clause.push(child.literal);
            self.descend(&child.cover, &order[k + 1..]);
            self.clause.pop();
            if !self.complete {
                return;
            }
        }
    }

    /// Lower bound on every proper extension of each child. Later children
    /// have at least the child's gain, so adding them loses no more positive
    /// mass than the child already has; they can remove at most the
    /// negatives they exclude from the parent cover, one literal per
    /// (feature, op) group.
    fn subtree_bounds(&self, cover: &FixedBitSet, len: usize, children: &mut [Child]) {
        let p = self.problem;
        let spare = p.cfg.max_rule_len - len;
        let neg_parent = cover.intersection_count(&p.neg_set) as f64;
        let mut group_best = vec![0.0f64; p.x_bin.catalog().n_features() * 3];
        let mut top = Vec::with_capacity(group_best.len());
        for (later, child) in children.iter_mut().rev().enumerate() {
            top.clear();
            top.extend(
                group_best
                    .iter()
                    .enumerate()
                    .filter(|&(g, &e)| g != child.group && e > 0.0)
                    .map(|(_, &e)| e),
            );
            top.sort_unstable_by(|a, b| b.total_cmp(a));
            let mut removed = 0.0;
            let mut best = f64::INFINITY;
            for q in 1..=spare.min(later) {
                removed += top.get(q - 1).copied().unwrap_or(0.0);
                let b = self.bound(len + q, child.gain) + (child.neg - removed).max(0.0);
                best = best.min(b);
            }
            child.subtree_bound = best;
            let slot = &mut group_best[child.group];
            *slot = slot.max(neg_parent - child.neg);
        }
    }

    fn consider(&mut self, rc: f64) {
        let better = match &self.best {
            None => rc < -self.problem.cfg.epsilon,
            Some(b) => {
                rc < b.reduced_cost - TIE_TOL
                    || (rc <= b.reduced_cost + TIE_TOL && {
                        let mut sorted = self.clause.clone();
                        sorted.sort_unstable();
                        (sorted.len(), &sorted) < (b.clause.len(), &b.clause)
                    })
            }
        };
        if better {
            let mut clause = self.clause.clone();
            clause.sort_unstable();
            self.best = Some(PricedClause {
                clause,
                reduced_cost: rc,
            });
        }
    }
}

/// Record of one master/pricing round.
#[derive(Debug, Clone)]
pub struct CgIteration {
    pub master_objective: f64,
    pub duality_gap: f64,
    pub sample_duals: Vec<f64>,
    pub complexity_dual: f64,
    pub added: Option<PricedClause>,
    pub pricing_nodes: usize,
    pub pricing_complete: bool,
}

/// Output of [`fit`].
#[derive(Debug, Clone)]
pub struct CgFit {
    pub ruleset: RuleSet,
    /// Selected clauses (literal indices) before mapping to rules.
    pub clauses: Vec<Clause>,
    /// Integral objective of `clauses`.
    pub objective: f64,
    /// LP bound from the last master solve.
    pub lp_objective: f64,
    pub pool: Vec<Clause>,
    pub trace: Vec<CgIteration>,
    /// Pricing found no improving clause before the iteration cap.
    pub converged: bool,
    /// Stopped at `max_iterations`; the result is the best found so far.
    pub hit_iteration_limit: bool,
    /// Every pricing call finished below the node budget.
    pub pricing_complete: bool,
}

/// Learns a rule set for `y` by column generation.
///
/// Degenerate labels (no positive sample) give an empty rule set whose
/// default class is the only class present.
pub fn fit(x_bin: &BinarizedDataset, y: &[u8], cfg: &CgConfig) -> Result<CgFit> {
    let problem = CgProblem::new(x_bin, y, cfg)?;
    let positive = problem.positive_class();
    let empty = |converged| CgFit {
        ruleset: RuleSet::empty(positive),
        clauses: Vec::new(),
        objective: problem.selection_objective(&[]),
        lp_objective: problem.selection_objective(&[]),
        pool: Vec::new(),
        trace: Vec::new(),
        converged,
        hit_iteration_limit: false,
        pricing_complete: true,
    };
    if problem.positives().is_empty() {
        return Ok(empty(true));
    }
    let Some(seed) = problem.best_single_literal() else {
        return Ok(empty(true));
    };

    let mut pool: Vec<Clause> = vec![vec![seed]];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut lp_objective = f64::NAN;
    for _ in 0..cfg.max_iterations {
        let master = problem.solve_master(&pool)?;
        lp_objective = master.objective;
        let pricing = problem.price_detailed(&master.sample_duals, master.complexity_dual)?;
        let priced = pricing.best;
        let stop = match &priced {
            None => true,
            Some(p) => pool.contains(&p.clause),
        };
        trace.push(CgIteration {
            master_objective: master.objective,
            duality_gap: master.duality_gap(),
            sample_duals: master.sample_duals,
            complexity_dual: master.complexity_dual,
            added: priced.clone(),
            pricing_nodes: pricing.nodes,
            pricing_complete: pricing.complete,
        });
        if stop {
            converged = true;
            break;
        }
        pool.push(priced.expect("checked above").clause);
    }
    if !converged {
        // score the final pool too
        lp_objective = problem.solve_master(&pool)?.objective;
    }

    let clauses = select_integral(&problem, &pool);
    let objective = problem.selection_objective(&clauses);
    let ruleset = clauses_to_ruleset(x_bin, &clauses, positive)?;
    let pricing_complete = trace.iter().all(|t| t.pricing_complete);
    Ok(CgFit {
        ruleset,
        clauses,
        objective,
        lp_objective,
        pool,
        trace,
        converged,
        hit_iteration_limit: !converged,
        pricing_complete,
    })
}

/// Maps literal-index clauses through the catalog.
pub fn clauses_to_ruleset(x_bin: &BinarizedDataset, clauses: &[Clause], positive: u8) -> Result<RuleSet> {
    let rules = clauses
        .iter()
        .map(|k| Rule::new(k.iter().map(|&j| *x_bin.catalog().get(j)).collect(), positive))
        .collect::<Result<Vec<_>>>()?;
    RuleSet::new(rules, positive)
}

/// Tie-break key for selections with equal objective: fewer literals, fewer
/// clauses, then lexicographic clause lists.
fn selection_key(clauses: &[Clause]) -> (usize, usize, Vec<Clause>) {
    let mut sorted = clauses.to_vec();
    sorted.sort();
    (clauses.iter().map(Vec::len).sum(), clauses.len(), sorted)
}

fn better_selection(obj: f64, clauses: &[Clause], best_obj: f64, best: &[Clause]) -> bool {
    obj < best_obj - TIE_TOL || (obj <= best_obj + TIE_TOL && selection_key(clauses) < selection_key(best))
}

/// Chooses an integral subset of the pool: exhaustive search for small
/// pools, otherwise greedy descent on the integral objective.
/// Positive coverage and master cost of each pool clause.
struct Candidates<'c> {
    pool: &'c [Clause],
    covers: Vec<FixedBitSet>,
    costs: Vec<f64>,
    n_pos: usize,
}

impl<'c> Candidates<'c> {
    fn new(problem: &CgProblem<'_>, pool: &'c [Clause]) -> Self {
        let covers = pool
            .iter()
            .map(|k| {
                let mut c = problem.x_bin.cover(k);
                c.intersect_with(&problem.pos_set);
                c
            })
            .collect();
        Candidates {
            pool,
            covers,
            costs: pool.iter().map(|k| problem.clause_cost(k)).collect(),
            n_pos: problem.positives.len(),
        }
    }

    fn objective(&self, chosen: &[usize]) -> f64 {
        let mut covered = FixedBitSet::with_capacity(self.covers.first().map_or(0, FixedBitSet::len));
        let mut cost = 0.0;
        for &i in chosen {
            covered.union_with(&self.covers[i]);
            cost += self.costs[i];
        }
        (self.n_pos - covered.count_ones(..)) as f64 + cost
    }

    fn clauses(&self, chosen: &[usize]) -> Vec<Clause> {
        let mut out: Vec<Clause> = chosen.iter().map(|&i| self.pool[i].clone()).collect();
        out.sort();
        out
    }
}

fn select_integral(problem: &CgProblem<'_>, pool: &[Clause]) -> Vec<Clause> {
    let cands = Candidates::new(problem, pool);
    let limit = problem.cfg.exhaustive_selection_limit;
    let all: Vec<usize> = (0..pool.len()).collect();
    if pool.len() <= limit {
        return cands.clauses(&exhaustive_selection(&cands, &all));
    }
    let best = local_search(&cands, greedy_selection(&cands));
    cands.clauses(&best)
}

/// Best subset of `indices` by enumeration with cost pruning.
fn exhaustive_selection(cands: &Candidates<'_>, indices: &[usize]) -> Vec<usize> {
    struct State<'s, 'c> {
        cands: &'s Candidates<'c>,
        indices: &'s [usize],
        chosen: Vec<usize>,
        best: Vec<usize>,
        best_clauses: Vec<Clause>,
        best_obj: f64,
    }
    fn walk(s: &mut State<'_, '_>, idx: usize, covered: &FixedBitSet, cost: f64) {
        if cost > s.best_obj + TIE_TOL {
            return;
        }
        if idx == s.indices.len() {
            let obj = (s.cands.n_pos - covered.count_ones(..)) as f64 + cost;
            let clauses = s.cands.clauses(&s.chosen);
            if better_selection(obj, &clauses, s.best_obj, &s.best_clauses) {
                s.best_obj = obj;
                s.best = s.chosen.clone();
                s.best_clauses = clauses;
            }
            return;
        }
        walk(s, idx + 1, covered, cost);
        let i = s.indices[idx];
        let mut with = covered.clone();
        with.union_with(&s.cands.covers[i]);
        s.chosen.push(i);
        walk(s, idx + 1, &with, cost + s.cands.costs[i]);
        s.chosen.pop();
    }

    let width = cands.covers.first().map_or(0, FixedBitSet::len);
    let mut state = State {
        cands,
        indices,
        chosen: Vec::new(),
        best: Vec::new(),
        best_clauses: Vec::new(),
        best_obj: cands.n_pos as f64,
    };
    walk(&mut state, 0, &FixedBitSet::with_capacity(width), 0.0);
    state.best
}

/// Adds the clause that lowers the objective most until none does.
fn greedy_selection(cands: &Candidates<'_>) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut current = cands.objective(&chosen);
    loop {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..cands.pool.len() {
            if chosen.contains(&i) {
                continue;
            }
            chosen.push(i);
            let obj = cands.objective(&chosen);
            chosen.pop();
            let take = match best {
                None => true,
                Some((b, bi)) => obj < b - TIE_TOL || (obj <= b + TIE_TOL && cands.pool[i] < cands.pool[bi]),
            };
            if take {
                best = Some((obj, i));
            }
        }
        match best {
            Some((obj, i)) if obj < current - TIE_TOL => {
                chosen.push(i);
                current = obj;
            }
            _ => break,
        }
    }
    chosen
}

/// Applies the best strictly improving drop, add or swap until none is left.
fn local_search(cands: &Candidates<'_>, mut chosen: Vec<usize>) -> Vec<usize> {
    let n = cands.pool.len();
    let mut current = cands.objective(&chosen);
    loop {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let offer = |trial: Vec<usize>, best: &mut Option<(f64, Vec<usize>)>| {
            let obj = cands.objective(&trial);
            if obj < current - TIE_TOL && best.as_ref().is_none_or(|(b, _)| obj < *b - TIE_TOL) {
                *best = Some((obj, trial));
            }
        };
        for pos in 0..chosen.len() {
            let mut trial = chosen.clone();
            trial.remove(pos);
            offer(trial, &mut best);
        }
        for i in (0..n).filter(|i| !chosen.contains(i)) {
            let mut trial = chosen.clone();
            trial.push(i);
            offer(trial.clone(), &mut best);
            for pos in 0..chosen.len() {
                let mut swapped = trial.clone();
                swapped.swap_remove(pos);
                offer(swapped, &mut best);
            }
        }
        match best {
            Some((obj, next)) => {
                chosen = next;
                current = obj;
            }
            None => return chosen,
        }
    }
}

/// Output of [`exact_fit_bruteforce`].
#[derive(Debug, Clone)]
pub struct ExactFit {
    pub ruleset: RuleSet,
    pub clauses: Vec<Clause>,
    pub objective: f64,
}

pub const EXACT_MAX_LITERALS: usize = 12;
pub const EXACT_MAX_CLAUSES: usize = 3;

/// Exhaustive minimizer of the integral objective over every DNF with at most
/// `max_clauses` clauses of at most `max_rule_len` literals. Test oracle;
/// refuses catalogs over 12 literals or more than 3 clauses.
pub fn exact_fit_bruteforce(
    x_bin: &BinarizedDataset,
    y: &[u8],
    cfg: &CgConfig,
    max_clauses: usize,
) -> Result<ExactFit> {
    if x_bin.n_literals() > EXACT_MAX_LITERALS || max_clauses > EXACT_MAX_CLAUSES {
        return Err(Error::Parameter(format!(
            "brute force limited to {EXACT_MAX_LITERALS} literals and {EXACT_MAX_CLAUSES} clauses \
             (got {} literals, {max_clauses} clauses)",
            x_bin.n_literals()
        )));
    }
    let problem = CgProblem::new(x_bin, y, cfg)?;
    let positive = problem.positive_class();
    let l = x_bin.n_literals();
    let max_len = cfg.max_rule_len.min(l);

    // every non-empty literal subset, keyed by coverage; clauses with equal
    // coverage only differ in length, so keep the shortest (then smallest)
    let mut by_cover: std::collections::HashMap<FixedBitSet, Clause> = std::collections::HashMap::new();
    for mask in 1u32..(1u32 << l) {
        if mask.count_ones() as usize > max_len {
            continue;
        }
        let clause: Clause = (0..l).filter(|&j| mask & (1 << j) != 0).collect();
        let cov = x_bin.cover(&clause);
        if cov.intersection_count(&problem.pos_set) == 0 {
            continue;
        }
        by_cover
            .entry(cov)
            .and_modify(|k| {
                if (clause.len(), &clause) < (k.len(), &*k) {
                    *k = clause.clone();
                }
            })
            .or_insert(clause);
    }
    let mut candidates: Vec<Clause> = by_cover.into_values().collect();
    candidates.sort();

    let mut best: Vec<Clause> = Vec::new();
    let mut best_obj = problem.selection_objective(&best);
    let mut consider = |sel: Vec<Clause>| {
        let obj = problem.selection_objective(&sel);
        if better_selection(obj, &sel, best_obj, &best) {
            best_obj = obj;
            best = sel;
        }
    };
    let c = candidates.len();
    for a in 0..c {
        if max_clauses >= 1 {
            consider(vec![candidates[a].clone()]);
        }
        if max_clauses >= 2 {
            for b in a + 1..c {
                consider(vec![candidates[a].clone(), candidates[b].clone()]);
                if max_clauses >= 3 {
                    for d in b + 1..c {
                        consider(vec![candidates[a].clone(), candidates[b].clone(), candidates[d].clone()]);
                    }
                }
            }
        }
    }
    let ruleset = clauses_to_ruleset(x_bin, &best, positive)?;
    Ok(ExactFit {
        ruleset,
        clauses: best,
        objective: best_obj,
    })
}
