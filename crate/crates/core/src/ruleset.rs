//! DNF rule sets over threshold literals.
//!
//! A [`RuleSet`] is single-polarity: every rule predicts `positive_class`,
//! and a sample that fires no rule gets `default_class`. Thresholds are
//! compared bit-for-bit, so two rule sets are equal only if their canonical
//! forms are structurally identical.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::LiteralCatalog;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const RULESET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Eq => "==",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        match s {
            "<=" => Some(Op::Le),
            ">" => Some(Op::Gt),
            "==" | "=" => Some(Op::Eq),
            _ => None,
        }
    }
}

/// One comparison `x[feature] op threshold`. For `Op::Eq` the threshold is a
/// category id.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Literal {
    pub feature: usize,
    pub op: Op,
    pub threshold: f64,
}

impl Literal {
    pub fn new(feature: usize, op: Op, threshold: f64) -> Self {
        Literal {
            feature,
            op,
            threshold,
        }
    }

    #[inline]
    pub fn holds(&self, value: f64) -> bool {
        match self.op {
            Op::Le => value <= self.threshold,
            Op::Gt => value > self.threshold,
            Op::Eq => value == self.threshold,
        }
    }

    /// Order by `(feature, op, threshold)`; thresholds use IEEE total order.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.feature
            .cmp(&other.feature)
            .then(self.op.cmp(&other.op))
            .then(self.threshold.total_cmp(&other.threshold))
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_cmp(other).is_eq()
    }
}

impl Eq for Literal {}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.canonical_cmp(other)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{} {} {}", self.feature + 1, self.op.symbol(), self.threshold)
    }
}

/// A conjunction of literals predicting `class_label`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rule {
    literals: Vec<Literal>,
    class_label: u8,
}

impl Rule {
    /// Literals are kept as given; see [`Rule::canonical`].
    pub fn new(literals: Vec<Literal>, class_label: u8) -> Result<Self> {
        if literals.is_empty() {
            return Err(Error::InvalidRule("a rule needs at least one literal".into()));
        }
        if class_label > 1 {
            return Err(Error::InvalidRule(format!("class label {class_label} not in {{0, 1}}")));
        }
        Ok(Rule {
            literals,
            class_label,
        })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }

    pub fn class_label(&self) -> u8 {
        self.class_label
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn with_class(&self, class_label: u8) -> Rule {
        Rule {
            literals: self.literals.clone(),
            class_label,
        }
    }

    /// Conjunction of every literal.
    pub fn eval(&self, x: &[f64]) -> Result<bool> {
        for lit in &self.literals {
            let v = x.get(lit.feature).ok_or(Error::FeatureOutOfRange {
                index: lit.feature,
                width: x.len(),
            })?;
            if !lit.holds(*v) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sorted literals with same-`(feature, op)` bounds merged to the tightest.
    /// Distinct equalities on one feature are both kept (the rule never fires).
    pub fn canonical(&self) -> Rule {
        let mut lits = self.literals.clone();
        lits.sort();
        let mut out: Vec<Literal> = Vec::with_capacity(lits.len());
        for lit in lits {
            match out.last_mut() {
                Some(prev) if prev.feature == lit.feature && prev.op == lit.op => match lit.op {
                    // sorted ascending: first `<=` is tightest, last `>` is tightest
                    Op::Le => {}
                    Op::Gt => *prev = lit,
                    Op::Eq => {
                        if *prev != lit {
                            out.push(lit);
                        }
                    }
                },
                _ => out.push(lit),
            }
        }
        Rule {
            literals: out,
            class_label: self.class_label,
        }
    }

    /// False when the literals provably admit no value (empty interval or
    /// two different equalities on one feature).
    pub fn is_satisfiable(&self) -> bool {
        for (i, a) in self.literals.iter().enumerate() {
            for b in &self.literals[i + 1..] {
                if a.feature != b.feature {
                    continue;
                }
                let empty = match (a.op, b.op) {
                    (Op::Le, Op::Gt) => b.threshold >= a.threshold,
                    (Op::Gt, Op::Le) => a.threshold >= b.threshold,
                    (Op::Eq, Op::Eq) => a.threshold != b.threshold,
                    (Op::Eq, _) => !b.holds(a.threshold),
                    (_, Op::Eq) => !a.holds(b.threshold),
                    _ => false,
                };
                if empty {
                    return false;
                }
            }
        }
        true
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF ")?;
        for (i, lit) in self.literals.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{lit}")?;
        }
        write!(f, " THEN class={}", self.class_label)
    }
}

/// Disjunction of rules for `positive_class`, falling back to `default_class`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
    positive_class: u8,
    default_class: u8,
}

impl RuleSet {
    /// Canonicalized rule set.
    pub fn new(rules: Vec<Rule>, positive_class: u8) -> Result<Self> {
        Ok(Self::from_raw(rules, positive_class)?.canonicalize())
    }

    /// Keeps rules as given (order, duplicates, loose bounds).
    pub fn from_raw(rules: Vec<Rule>, positive_class: u8) -> Result<Self> {
        if positive_class > 1 {
            return Err(Error::InvalidRule(format!("positive class {positive_class} not in {{0, 1}}")));
        }
        if let Some(r) = rules.iter().find(|r| r.class_label != positive_class) {
            return Err(Error::InvalidRule(format!(
                "rule `{r}` predicts class {} but the positive class is {positive_class}",
                r.class_label
            )));
        }
        Ok(RuleSet {
            rules,
            positive_class,
            default_class: 1 - positive_class,
        })
    }

    pub fn empty(positive_class: u8) -> Self {
        RuleSet {
            rules: Vec::new(),
            positive_class,
            default_class: 1 - positive_class,
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn positive_class(&self) -> u8 {
        self.positive_class
    }

    pub fn default_class(&self) -> u8 {
        self.default_class
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        for rule in &self.rules {
            if rule.eval(x)? {
                return Ok(self.positive_class);
            }
        }
        Ok(self.default_class)
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<u8>> {
        x.iter_rows().map(|row| self.predict(row)).collect()
    }

    /// `(number of rules, total number of literals)`.
    pub fn complexity(&self) -> (usize, usize) {
        (self.rules.len(), self.rules.iter().map(Rule::len).sum())
    }

    pub fn canonicalize(&self) -> RuleSet {
        let mut rules: Vec<Rule> = self
            .rules
            .iter()
            .map(Rule::canonical)
            .filter(Rule::is_satisfiable)
            .collect();
        rules.sort();
        rules.dedup();
        RuleSet {
            rules,
            positive_class: self.positive_class,
            default_class: self.default_class,
        }
    }

    /// Adds a positive-class rule (disjunction).
    pub fn with_rule(&self, rule: &Rule) -> Result<RuleSet> {
        let mut rules = self.rules.clone();
        rules.push(rule.with_class(self.positive_class));
        RuleSet::new(rules, self.positive_class)
    }

    /// Carves `rule` out of the positive region: the result predicts the
    /// positive class iff some existing rule fires and `rule` does not.
    ///
    /// Each negated literal becomes its complement (`<=` and `>` swap;
    /// an equality becomes the other categories known to `catalog`), so every
    /// existing rule splits into one rule per literal of `rule`.
    pub fn with_exception(&self, rule: &Rule, catalog: &LiteralCatalog) -> Result<RuleSet> {
        let mut negations: Vec<Literal> = Vec::new();
        for lit in rule.literals() {
            match lit.op {
                Op::Le => negations.push(Literal::new(lit.feature, Op::Gt, lit.threshold)),
                Op::Gt => negations.push(Literal::new(lit.feature, Op::Le, lit.threshold)),
                Op::Eq => {
                    let n = catalog.category_count(lit.feature);
                    if n == 0 {
                        return Err(Error::InvalidRule(format!(
                            "cannot negate `{lit}`: feature has no known categories"
                        )));
                    }
                    negations.extend(
                        (0..n)
                            .map(|c| c as f64)
                            .filter(|&c| c != lit.threshold)
                            .map(|c| Literal::new(lit.feature, Op::Eq, c)),
                    );
                }
            }
        }
        let mut rules = Vec::with_capacity(self.rules.len() * negations.len());
        for r in &self.rules {
            for neg in &negations {
                let mut lits = r.literals.clone();
                lits.push(*neg);
                rules.push(Rule::new(lits, self.positive_class)?);
            }
        }
        RuleSet::new(rules, self.positive_class)
    }

    /// Human-readable form: one `IF ... THEN class=c` line per rule and a
    /// final `ELSE class=d` line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.rules {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s.push_str(&format!("ELSE class={}\n", self.default_class));
        s
    }

    /// Same layout as [`RuleSet::to_text`] with column names substituted.
    /// Not parseable.
    pub fn to_text_with_names(&self, names: &[String]) -> String {
        let mut s = String::new();
        for r in &self.rules {
            let conds: Vec<String> = r
                .literals
                .iter()
                .map(|l| {
                    let name = names
                        .get(l.feature)
                        .cloned()
                        .unwrap_or_else(|| format!("x{}", l.feature + 1));
                    format!("{name} {} {}", l.op.symbol(), l.threshold)
                })
                .collect();
            s.push_str(&format!("IF {} THEN class={}\n", conds.join(" AND "), r.class_label));
        }
        s.push_str(&format!("ELSE class={}\n", self.default_class));
        s
    }

    /// Parses the [`RuleSet::to_text`] form. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn from_text(text: &str) -> Result<RuleSet> {
        let mut rules = Vec::new();
        let mut default = None;
        let mut positive = None;
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if default.is_some() {
                return Err(parse_err(line_no, 1, "content after the ELSE line"));
            }
            let tokens = tokenize(line);
            let (first, col) = tokens[0];
            match first {
                "ELSE" => {
                    let (tok, c) = tokens
                        .get(1)
                        .copied()
                        .ok_or_else(|| parse_err(line_no, col + 4, "expected `class=<0|1>`"))?;
                    default = Some(parse_class(tok, line_no, c)?);
                    if tokens.len() > 2 {
                        return Err(parse_err(line_no, tokens[2].1, "unexpected token"));
                    }
                }
                "IF" => {
                    let (rule, class) = parse_rule_tokens(&tokens[1..], line_no, line.len() + 1)?;
                    if *positive.get_or_insert(class) != class {
                        return Err(parse_err(line_no, col, "rules predict different classes"));
                    }
                    rules.push(rule);
                }
                other => {
                    return Err(parse_err(line_no, col, &format!("expected IF or ELSE, found `{other}`")));
                }
            }
        }
        let end = text.lines().count() + 1;
        let default = default.ok_or_else(|| parse_err(end, 1, "unexpected end of input: missing ELSE line"))?;
        if let Some(p) = positive {
            if p == default {
                return Err(parse_err(end, 1, "ELSE class equals the rules' class"));
            }
        }
        RuleSet::new(rules, 1 - default)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RuleSetJson::from(self)).expect("rule set serializes")
    }

    pub fn from_json(text: &str) -> Result<RuleSet> {
        let doc: RuleSetJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        doc.try_into()
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Structural equality of canonical forms, thresholds compared bit-for-bit.
pub fn rulesets_equal(a: &RuleSet, b: &RuleSet) -> bool {
    a.canonicalize() == b.canonicalize()
}

fn parse_err(line: usize, column: usize, message: &str) -> Error {
    Error::Parse {
        line,
        column,
        message: message.to_string(),
    }
}

/// Whitespace tokens with 1-based column positions.
fn tokenize(line: &str) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((&line[s..i], s + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((&line[s..], s + 1));
    }
    out
}

fn parse_class(tok: &str, line: usize, col: usize) -> Result<u8> {
    match tok.strip_prefix("class=") {
        Some("0") => Ok(0),
        Some("1") => Ok(1),
        _ => Err(parse_err(line, col, &format!("expected `class=<0|1>`, found `{tok}`"))),
    }
}

fn parse_rule_tokens(tokens: &[(&str, usize)], line: usize, eol: usize) -> Result<(Rule, u8)> {
    let mut lits = Vec::new();
    let mut i = 0;
    let at = |i: usize| tokens.get(i).map_or(eol, |t| t.1);
    loop {
        let (name, c) = *tokens
            .get(i)
            .ok_or_else(|| parse_err(line, at(i), "expected a condition"))?;
        let feature = name
            .strip_prefix('x')
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .ok_or_else(|| parse_err(line, c, &format!("expected feature `x<n>`, found `{name}`")))?
            - 1;
        let (op_tok, c) = *tokens
            .get(i + 1)
            .ok_or_else(|| parse_err(line, at(i + 1), "expected a comparison operator"))?;
        let op = Op::parse(op_tok)
            .ok_or_else(|| parse_err(line, c, &format!("unknown operator `{op_tok}`")))?;
        let (th_tok, c) = *tokens
            .get(i + 2)
            .ok_or_else(|| parse_err(line, at(i + 2), "expected a threshold"))?;
        let threshold: f64 = th_tok
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| parse_err(line, c, &format!("invalid threshold `{th_tok}`")))?;
        lits.push(Literal::new(feature, op, threshold));
        let (kw, c) = *tokens
            .get(i + 3)
            .ok_or_else(|| parse_err(line, at(i + 3), "expected AND or THEN"))?;
        match kw {
            "AND" => i += 4,
            "THEN" => {
                let (cls, c) = *tokens
                    .get(i + 4)
                    .ok_or_else(|| parse_err(line, at(i + 4), "expected `class=<0|1>`"))?;
                let class = parse_class(cls, line, c)?;
                if let Some(&(_, c)) = tokens.get(i + 5) {
                    return Err(parse_err(line, c, "unexpected token after class"));
                }
                return Ok((Rule::new(lits, class)?, class));
            }
            other => return Err(parse_err(line, c, &format!("expected AND or THEN, found `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RuleSetJson {
    format_version: u32,
    positive_class: u8,
    default_class: u8,
    rules: Vec<RuleJson>,
}

#[derive(Serialize, Deserialize)]
struct RuleJson {
    literals: Vec<Literal>,
}

impl From<&RuleSet> for RuleSetJson {
    fn from(rs: &RuleSet) -> Self {
        RuleSetJson {
            format_version: RULESET_FORMAT_VERSION,
            positive_class: rs.positive_class,
            default_class: rs.default_class,
            rules: rs
                .rules
                .iter()
                .map(|r| RuleJson {
                    literals: r.literals.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<RuleSetJson> for RuleSet {
    type Error = Error;

    fn try_from(doc: RuleSetJson) -> Result<Self> {
        if doc.format_version != RULESET_FORMAT_VERSION {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!(
                    "unsupported format_version {} (expected {RULESET_FORMAT_VERSION})",
                    doc.format_version
                ),
            });
        }
        if doc.positive_class > 1 || doc.default_class != 1 - doc.positive_class.min(1) {
            return Err(Error::InvalidRule(
                "default_class must be the complement of positive_class".into(),
            ));
        }
        let rules = doc
            .rules
            .into_iter()
            .map(|r| Rule::new(r.literals, doc.positive_class))
            .collect::<Result<Vec<_>>>()?;
        RuleSet::new(rules, doc.positive_class)
    }
}
