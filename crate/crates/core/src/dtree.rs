//! Statistical decision trees per ambiguity class.
//!
//! Trees are grown top-down on the tags of the surrounding words (three to
//! the left, two to the right) and the word form. Every split first branches
//! on each value, then joins branches whose class distributions a χ² test
//! cannot tell apart. Grown trees are pruned by minimal cost-complexity
//! against a held-out sample and translated into weighted constraints, one
//! per leaf and class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::cg::{Condition, Constraint, FeaturePattern, Grammar};
use crate::corpus::{AmbiguityClass, Corpus, BOUNDARY};
use crate::stats::{compatibility_from_probs, CompatibilityMeasure, Probabilities, StatsError};

/// Smoothing added to every class count in node distributions.
pub const LEAF_LAMBDA: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum DTreeError {
    #[error("no occurrences of ambiguity class {0}")]
    EmptyClass(String),
    #[error("{have} examples, at least {need} needed")]
    InsufficientExamples { have: usize, need: usize },
    #[error("sentence {sentence}, token {token} has no gold reading")]
    MissingGold { sentence: usize, token: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attr {
    /// Pos tag of the word at this offset from the focus.
    Offset(i32),
    Form,
}

impl Attr {
    pub const ALL: [Attr; 6] = [
        Attr::Offset(-3),
        Attr::Offset(-2),
        Attr::Offset(-1),
        Attr::Offset(1),
        Attr::Offset(2),
        Attr::Form,
    ];

    fn offset(self) -> i32 {
        match self {
            Attr::Offset(o) => o,
            Attr::Form => 0,
        }
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attr::Offset(o) => write!(f, "{o:+}"),
            Attr::Form => f.write_str("form"),
        }
    }
}

impl FromStr for Attr {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attr::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown attribute {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Example {
    pub attributes: BTreeMap<Attr, String>,
    pub class: String,
}

impl Example {
    pub fn get(&self, attr: Attr) -> &str {
        self.attributes.get(&attr).map_or(BOUNDARY, String::as_str)
    }
}

/// One example per occurrence of a member word of `cls`, with the gold tags
/// of its neighbours.
pub fn extract_examples(corpus: &Corpus, cls: &AmbiguityClass) -> Result<Vec<Example>, DTreeError> {
    let mut out = Vec::new();
    for (si, sentence) in corpus.sentences.iter().enumerate() {
        let mut tags = Vec::with_capacity(sentence.len());
        for (ti, t) in sentence.tokens.iter().enumerate() {
            let gold = t.gold.as_ref().ok_or(DTreeError::MissingGold {
                sentence: si,
                token: ti,
            })?;
            tags.push(gold.pos());
        }
        for (i, token) in sentence.tokens.iter().enumerate() {
            if !cls.members.contains(&token.wordform) {
                continue;
            }
            let mut attributes = BTreeMap::new();
            for attr in Attr::ALL {
                let value = match attr {
                    Attr::Form => token.wordform.as_str(),
                    Attr::Offset(o) => {
                        let j = i as i64 + o as i64;
                        if (0..tags.len() as i64).contains(&j) {
                            tags[j as usize]
                        } else {
                            BOUNDARY
                        }
                    }
                };
                attributes.insert(attr, value.to_string());
            }
            out.push(Example {
                attributes,
                class: tags[i].to_string(),
            });
        }
    }
    if out.is_empty() {
        return Err(DTreeError::EmptyClass(cls.name()));
    }
    Ok(out)
}

/// Stratified seeded split into (training, held-out) examples.
pub fn split_examples(examples: &[Example], holdout_fraction: f64, seed: u64) -> (Vec<Example>, Vec<Example>) {
    let mut by_class: BTreeMap<&str, Vec<&Example>> = BTreeMap::new();
    for e in examples {
        by_class.entry(e.class.as_str()).or_default().push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for (_, mut group) in by_class {
        group.shuffle(&mut rng);
        let n = group.len();
        let k = ((n as f64 * holdout_fraction).round() as usize).min(n.saturating_sub(1));
        holdout.extend(group[..k].iter().map(|e| (*e).clone()));
        train.extend(group[k..].iter().map(|e| (*e).clone()));
    }
    (train, holdout)
}

/// Scores a candidate partition of a node's examples; higher is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selector {
    #[default]
    GainRatio,
    /// One minus the López de Mántaras distance between the class partition
    /// and the attribute partition.
    Mantaras,
}

impl FromStr for Selector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gain-ratio" => Ok(Selector::GainRatio),
            "mantaras" => Ok(Selector::Mantaras),
            _ => Err(format!("unknown selector {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub min_leaf: usize,
    pub chi2_confidence: f64,
    pub purity_stop: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub selector: Selector,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 10,
            chi2_confidence: 0.95,
            purity_stop: 0.99,
            holdout_fraction: 0.1,
            seed: 0,
            selector: Selector::GainRatio,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), DTreeError> {
        let bad = |m: &str| Err(DTreeError::InvalidParams(m.to_string()));
        if self.min_leaf == 0 {
            return bad("min_leaf must be positive");
        }
        if !(self.chi2_confidence > 0.0 && self.chi2_confidence < 1.0) {
            return bad("chi2_confidence must lie in (0,1)");
        }
        if !(self.purity_stop > 0.5 && self.purity_stop <= 1.0) {
            return bad("purity_stop must lie in (0.5,1]");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0,1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub attr: Attr,
    /// Disjoint value groups covering every value seen at the node.
    pub branches: Vec<(BTreeSet<String>, TreeNode)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// Raw class counts of the training examples reaching the node, over
    /// the root's class set.
    pub counts: BTreeMap<String, u64>,
    /// Smoothed class distribution.
    pub distribution: BTreeMap<String, f64>,
    pub support: u64,
    pub split: Option<Split>,
}

type Counts = BTreeMap<String, u64>;

fn smoothed(counts: &Counts) -> BTreeMap<String, f64> {
    let n: u64 = counts.values().sum();
    let denom = n as f64 + LEAF_LAMBDA * counts.len() as f64;
    counts
        .iter()
        .map(|(c, &k)| (c.clone(), (k as f64 + LEAF_LAMBDA) / denom))
        .collect()
}

impl TreeNode {
    fn leaf(counts: Counts) -> Self {
        TreeNode {
            support: counts.values().sum(),
            distribution: smoothed(&counts),
            counts,
            split: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().map(TreeNode::node_count).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children().map(TreeNode::leaf_count).sum()
        }
    }

    pub fn depth(&self) -> usize {
        self.children().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    fn children(&self) -> impl Iterator<Item = &TreeNode> {
        self.split.iter().flat_map(|s| s.branches.iter().map(|(_, n)| n))
    }

    /// Most frequent class, ties to the smallest name.
    pub fn majority(&self) -> &str {
        let mut best: Option<(&String, u64)> = None;
        for (c, &n) in &self.counts {
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((c, n));
            }
        }
        best.map_or("", |(c, _)| c.as_str())
    }

    /// Every root-to-leaf path with its attribute tests.
    pub fn leaves(&self) -> Vec<(Vec<(Attr, &BTreeSet<String>)>, &TreeNode)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut Vec::new(), &mut out);
        out
    }

    fn collect_leaves<'a>(
        &'a self,
        path: &mut Vec<(Attr, &'a BTreeSet<String>)>,
        out: &mut Vec<(Vec<(Attr, &'a BTreeSet<String>)>, &'a TreeNode)>,
    ) {
        match &self.split {
            None => out.push((path.clone(), self)),
            Some(split) => {
                for (values, child) in &split.branches {
                    path.push((split.attr, values));
                    child.collect_leaves(path, out);
                    path.pop();
                }
            }
        }
    }
}

/// The deepest node reached by `example`; values unseen at a split stop the
/// descent there.
pub fn classify_node<'a>(tree: &'a TreeNode, example: &Example) -> &'a TreeNode {
    let mut node = tree;
    while let Some(split) = &node.split {
        let value = example.get(split.attr);
        match split.branches.iter().find(|(vals, _)| vals.contains(value)) {
            Some((_, child)) => node = child,
            None => break,
        }
    }
    node
}

pub fn classify<'a>(tree: &'a TreeNode, example: &Example) -> &'a str {
    classify_node(tree, example).majority()
}

pub fn accuracy(tree: &TreeNode, examples: &[Example]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let right = examples
        .iter()
        .filter(|e| classify(tree, e) == e.class)
        .count();
    right as f64 / examples.len() as f64
}

fn entropy<'a>(counts: impl IntoIterator<Item = &'a u64>) -> f64 {
    let counts: Vec<f64> = counts.into_iter().map(|&c| c as f64).collect();
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).log2())
        .sum()
}

fn sum_counts(a: &Counts, b: &Counts) -> Counts {
    let mut out = a.clone();
    for (c, n) in b {
        *out.entry(c.clone()).or_insert(0) += n;
    }
    out
}

/// p-value of a χ² homogeneity test between two class-count rows.
fn chi2_p_value(a: &Counts, b: &Counts) -> f64 {
    let total_a: u64 = a.values().sum();
    let total_b: u64 = b.values().sum();
    let n = (total_a + total_b) as f64;
    let col = sum_counts(a, b);
    let cols: Vec<_> = col.iter().filter(|(_, &k)| k > 0).collect();
    if cols.len() < 2 || total_a == 0 || total_b == 0 {
        return 1.0;
    }
    let mut stat = 0.0;
    for (c, &k) in &cols {
        for (row, total) in [(a, total_a), (b, total_b)] {
            let expected = total as f64 * k as f64 / n;
            let observed = row.get(*c).copied().unwrap_or(0) as f64;
            stat += (observed - expected).powi(2) / expected;
        }
    }
    let dist = ChiSquared::new((cols.len() - 1) as f64).expect("positive degrees of freedom");
    1.0 - dist.cdf(stat)
}

type Group = (BTreeSet<String>, Counts);

/// Branches per value of `attr`, joined pairwise (most similar first) while
/// a pair is not significantly different; then groups below `min_leaf`
/// are joined into their most similar neighbour.
fn partition(examples: &[&Example], attr: Attr, classes: &Counts, p: &TreeParams) -> Vec<Group> {
    let mut by_value: BTreeMap<&str, Counts> = BTreeMap::new();
    for e in examples {
        let counts = by_value
            .entry(e.get(attr))
            .or_insert_with(|| classes.clone());
        *counts.get_mut(&e.class).expect("class in root set") += 1;
    }
    let mut groups: Vec<Group> = by_value
        .into_iter()
        .map(|(v, c)| (BTreeSet::from([v.to_string()]), c))
        .collect();
    let alpha = 1.0 - p.chi2_confidence;
    let merge_best = |groups: &mut Vec<Group>, only: Option<usize>| -> Option<f64> {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                if only.is_some_and(|k| k != i && k != j) {
                    continue;
                }
                let pv = chi2_p_value(&groups[i].1, &groups[j].1);
                if best.is_none_or(|(_, _, b)| pv > b) {
                    best = Some((i, j, pv));
                }
            }
        }
        let (i, j, pv) = best?;
        let (vals, counts) = groups.remove(j);
        groups[i].0.extend(vals);
        groups[i].1 = sum_counts(&groups[i].1, &counts);
        Some(pv)
    };
    while groups.len() > 1 {
        let mut trial = groups.clone();
        match merge_best(&mut trial, None) {
            Some(pv) if pv > alpha => groups = trial,
            _ => break,
        }
    }
    while groups.len() > 1 {
        let small = groups
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| (c.values().sum::<u64>() as usize) < p.min_leaf)
            .min_by_key(|(_, (_, c))| c.values().sum::<u64>())
            .map(|(i, _)| i);
        match small {
            Some(k) => {
                merge_best(&mut groups, Some(k));
            }
            None => break,
        }
    }
    groups
}

fn score(selector: Selector, parent: &Counts, groups: &[Group]) -> f64 {
    let n: u64 = parent.values().sum();
    let nf = n as f64;
    let h_class = entropy(parent.values());
    let h_cond: f64 = groups
        .iter()
        .map(|(_, c)| c.values().sum::<u64>() as f64 / nf * entropy(c.values()))
        .sum();
    let gain = h_class - h_cond;
    let h_attr = entropy(groups.iter().map(|(_, c)| c.values().sum::<u64>()).collect::<Vec<_>>().iter());
    match selector {
        Selector::GainRatio => {
            if h_attr <= 0.0 {
                0.0
            } else {
                gain / h_attr
            }
        }
        Selector::Mantaras => {
            let joint = h_attr + h_cond;
            if joint <= 0.0 {
                0.0
            } else {
                gain / joint
            }
        }
    }
}

pub fn learn_tree(examples: &[Example], p: &TreeParams) -> Result<TreeNode, DTreeError> {
    p.validate()?;
    if examples.len() < p.min_leaf || examples.is_empty() {
        return Err(DTreeError::InsufficientExamples {
            have: examples.len(),
            need: p.min_leaf.max(1),
        });
    }
    let classes: Counts = examples.iter().map(|e| (e.class.clone(), 0)).collect();
    let mut sorted: Vec<&Example> = examples.iter().collect();
    sorted.sort();
    Ok(grow(&sorted, &Attr::ALL, &classes, p))
}

fn grow(examples: &[&Example], attrs: &[Attr], classes: &Counts, p: &TreeParams) -> TreeNode {
    let mut counts = classes.clone();
    for e in examples {
        *counts.get_mut(&e.class).expect("class in root set") += 1;
    }
    let mut node = TreeNode::leaf(counts);
    let n = node.support as f64;
    let top = node.counts.values().copied().max().unwrap_or(0) as f64;
    if examples.len() < p.min_leaf || top / n >= p.purity_stop || attrs.is_empty() {
        return node;
    }
    let mut best: Option<(f64, Attr, Vec<Group>)> = None;
    for &attr in attrs {
        let groups = partition(examples, attr, classes, p);
        if groups.len() < 2 {
            continue;
        }
        let s = score(p.selector, &node.counts, &groups);
        if s > 1e-12 && best.as_ref().is_none_or(|(b, _, _)| s > *b) {
            best = Some((s, attr, groups));
        }
    }
    let Some((_, attr, groups)) = best else {
        return node;
    };
    let rest: Vec<Attr> = attrs.iter().copied().filter(|&a| a != attr).collect();
    let branches = groups
        .into_iter()
        .map(|(values, _)| {
            let subset: Vec<&Example> = examples
                .iter()
                .copied()
                .filter(|e| values.contains(e.get(attr)))
                .collect();
            let child = grow(&subset, &rest, classes, p);
            (values, child)
        })
        .collect();
    node.split = Some(Split { attr, branches });
    node
}

fn errors(node: &TreeNode) -> u64 {
    node.support - node.counts.values().copied().max().unwrap_or(0)
}

fn subtree_errors(node: &TreeNode) -> u64 {
    if node.is_leaf() {
        errors(node)
    } else {
        node.children().map(subtree_errors).sum()
    }
}

fn weakest_link(node: &TreeNode) -> Option<f64> {
    let split = node.split.as_ref()?;
    let own = (errors(node) as f64 - subtree_errors(node) as f64) / (node.leaf_count() as f64 - 1.0);
    split
        .branches
        .iter()
        .filter_map(|(_, c)| weakest_link(c))
        .chain(std::iter::once(own))
        .min_by(f64::total_cmp)
}

fn collapse(node: &mut TreeNode, alpha: f64) {
    let own = match &node.split {
        None => return,
        Some(_) => (errors(node) as f64 - subtree_errors(node) as f64) / (node.leaf_count() as f64 - 1.0),
    };
    if own <= alpha + 1e-12 {
        node.split = None;
        return;
    }
    if let Some(split) = &mut node.split {
        for (_, child) in &mut split.branches {
            collapse(child, alpha);
        }
    }
}

/// The nested sequence of weakest-link prunings, from the full tree down to
/// the root leaf.
pub fn pruning_sequence(tree: &TreeNode) -> Vec<TreeNode> {
    let mut seq = vec![tree.clone()];
    let mut current = tree.clone();
    while let Some(alpha) = weakest_link(&current) {
        collapse(&mut current, alpha);
        seq.push(current.clone());
    }
    seq
}

/// Member of the pruning sequence with the best held-out accuracy; ties go
/// to the smaller tree.
pub fn prune_tree(tree: &TreeNode, holdout: &[Example]) -> TreeNode {
    if holdout.is_empty() {
        return tree.clone();
    }
    let mut best: Option<(f64, TreeNode)> = None;
    for candidate in pruning_sequence(tree) {
        let acc = accuracy(&candidate, holdout);
        if best.as_ref().is_none_or(|(b, _)| acc >= *b) {
            best = Some((acc, candidate));
        }
    }
    best.expect("sequence is nonempty").1
}

/// Splits off a held-out sample, grows a tree on the rest and prunes it.
/// Returns the pruned tree and the unpruned one.
pub fn train_pruned_tree(examples: &[Example], p: &TreeParams) -> Result<(TreeNode, TreeNode), DTreeError> {
    let (train, holdout) = split_examples(examples, p.holdout_fraction, p.seed);
    let full = learn_tree(&train, p)?;
    let pruned = prune_tree(&full, &holdout);
    Ok((pruned, full))
}

/// Class frequencies at the root.
pub fn class_priors(tree: &TreeNode) -> BTreeMap<String, f64> {
    tree.counts
        .iter()
        .map(|(c, &n)| (c.clone(), n as f64 / tree.support as f64))
        .collect()
}

fn test_pattern(attr: Attr, values: &BTreeSet<String>) -> FeaturePattern {
    match attr {
        Attr::Form => FeaturePattern::any_word(&values.iter().collect::<Vec<_>>()),
        Attr::Offset(_) => FeaturePattern::any_tag(&values.iter().collect::<Vec<_>>()),
    }
}

/// One weighted constraint per leaf and class of `cls` with nonzero leaf
/// probability. The path tests become conditions at their offsets, the
/// form test a position-0 word test.
pub fn tree_to_grammar(
    tree: &TreeNode,
    priors: &BTreeMap<String, f64>,
    cls: &AmbiguityClass,
    measure: &CompatibilityMeasure,
) -> Result<Grammar, DTreeError> {
    let sum: f64 = priors.values().sum();
    if (sum - 1.0).abs() > 1e-9 || priors.values().any(|&p| p <= 0.0) {
        return Err(DTreeError::InvalidParams(
            "priors must be positive and sum to 1".into(),
        ));
    }
    let mut constraints = Vec::new();
    for (path, leaf) in tree.leaves() {
        let mut tests = path.clone();
        tests.sort_by_key(|(a, _)| a.offset());
        let conditions: Vec<Condition> = tests
            .iter()
            .map(|&(attr, values)| Condition::at(attr.offset(), test_pattern(attr, values)))
            .collect();
        let p_e = leaf.support as f64 / tree.support as f64;
        for (class, &p_leaf) in &leaf.distribution {
            if p_leaf <= 0.0 || !cls.readings.contains(class) {
                continue;
            }
            let Some(&p_h) = priors.get(class) else {
                continue;
            };
            let probs = Probabilities {
                p_h,
                p_e,
                p_he: p_leaf * p_e,
            };
            let weight = compatibility_from_probs(&probs, measure)?;
            constraints.push(Constraint::weighted(
                weight,
                FeaturePattern::tag(class),
                conditions.clone(),
            ));
        }
    }
    Ok(Grammar::from_constraints(constraints))
}

fn write_pairs<T: fmt::Display>(out: &mut String, key: &str, map: &BTreeMap<String, T>) {
    let _ = write!(out, " {key}=");
    for (k, (c, v)) in map.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{c}:{v}");
    }
}

/// Indented text, one node per line:
/// `[if v1|v2 -> ](split ATTR|leaf) support=N counts=C:n,.. probs=C:p,..`.
pub fn dump_tree(tree: &TreeNode) -> String {
    let mut out = String::new();
    dump_node(&mut out, tree, 0, None);
    out
}

fn dump_node(out: &mut String, node: &TreeNode, depth: usize, values: Option<&BTreeSet<String>>) {
    out.push_str(&"  ".repeat(depth));
    if let Some(vals) = values {
        let _ = write!(out, "if {} -> ", vals.iter().cloned().collect::<Vec<_>>().join("|"));
    }
    match &node.split {
        Some(s) => {
            let _ = write!(out, "split {}", s.attr);
        }
        None => out.push_str("leaf"),
    }
    let _ = write!(out, " support={}", node.support);
    write_pairs(out, "counts", &node.counts);
    write_pairs(out, "probs", &node.distribution);
    out.push('\n');
    if let Some(s) = &node.split {
        for (vals, child) in &s.branches {
            dump_node(out, child, depth + 1, Some(vals));
        }
    }
}

struct DumpLine {
    line: usize,
    depth: usize,
    values: Option<BTreeSet<String>>,
    attr: Option<Attr>,
    node: TreeNode,
}

fn parse_pairs<T: FromStr>(text: &str, line: usize) -> Result<BTreeMap<String, T>, DTreeError> {
    let err = |reason: String| DTreeError::Parse { line, reason };
    let mut map = BTreeMap::new();
    for item in text.split(',').filter(|s| !s.is_empty()) {
        let (c, v) = item
            .rsplit_once(':')
            .ok_or_else(|| err(format!("expected CLASS:VALUE, got {item:?}")))?;
        let v = v.parse().map_err(|_| err(format!("bad value {v:?}")))?;
        map.insert(c.to_string(), v);
    }
    Ok(map)
}

fn parse_dump_line(raw: &str, line: usize) -> Result<DumpLine, DTreeError> {
    let err = |reason: String| DTreeError::Parse { line, reason };
    let body = raw.trim_start_matches(' ');
    let indent = raw.len() - body.len();
    if indent % 2 != 0 {
        return Err(err("odd indentation".into()));
    }
    let (values, rest) = match body.strip_prefix("if ") {
        Some(r) => {
            let (vals, rest) = r
                .split_once(" -> ")
                .ok_or_else(|| err("expected ' -> '".into()))?;
            (Some(vals.split('|').map(str::to_string).collect()), rest)
        }
        None => (None, body),
    };
    let mut words = rest.split(' ');
    let attr = match words.next() {
        Some("leaf") => None,
        Some("split") => Some(
            words
                .next()
                .ok_or_else(|| err("missing split attribute".into()))?
                .parse::<Attr>()
                .map_err(err)?,
        ),
        other => return Err(err(format!("expected leaf or split, got {other:?}"))),
    };
    let (mut support, mut counts, mut probs) = (None, None, None);
    for w in words {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got {w:?}")))?;
        match k {
            "support" => support = Some(v.parse().map_err(|_| err(format!("bad support {v:?}")))?),
            "counts" => counts = Some(parse_pairs(v, line)?),
            "probs" => probs = Some(parse_pairs(v, line)?),
            _ => return Err(err(format!("unknown key {k:?}"))),
        }
    }
    Ok(DumpLine {
        line,
        depth: indent / 2,
        values,
        attr,
        node: TreeNode {
            support: support.ok_or_else(|| err("missing support".into()))?,
            counts: counts.ok_or_else(|| err("missing counts".into()))?,
            distribution: probs.ok_or_else(|| err("missing probs".into()))?,
            split: None,
        },
    })
}

pub fn parse_tree(text: &str) -> Result<TreeNode, DTreeError> {
    let lines: Vec<DumpLine> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_dump_line(l, i + 1))
        .collect::<Result<_, _>>()?;
    let mut pos = 0;
    let root = build(&lines, &mut pos, 0)?;
    if root.values.is_some() {
        return Err(DTreeError::Parse {
            line: 1,
            reason: "root has a branch test".into(),
        });
    }
    if let Some(extra) = lines.get(pos) {
        return Err(DTreeError::Parse {
            line: extra.line,
            reason: "only one root allowed".into(),
        });
    }
    Ok(root.node)
}

struct Built {
    values: Option<BTreeSet<String>>,
    node: TreeNode,
}

fn build(lines: &[DumpLine], pos: &mut usize, depth: usize) -> Result<Built, DTreeError> {
    let Some(head) = lines.get(*pos) else {
        return Err(DTreeError::Parse {
            line: 0,
            reason: "empty tree".into(),
        });
    };
    if head.depth != depth {
        return Err(DTreeError::Parse {
            line: head.line,
            reason: format!("expected depth {depth}"),
        });
    }
    *pos += 1;
    let mut node = head.node.clone();
    if let Some(attr) = head.attr {
        let mut branches = Vec::new();
        while lines.get(*pos).is_some_and(|l| l.depth > depth) {
            let child = build(lines, pos, depth + 1)?;
            let values = child.values.ok_or_else(|| DTreeError::Parse {
                line: lines[*pos - 1].line,
                reason: "branch without a value test".into(),
            })?;
            branches.push((values, child.node));
        }
        if branches.is_empty() {
            return Err(DTreeError::Parse {
                line: head.line,
                reason: "split without branches".into(),
            });
        }
        node.split = Some(Split { attr, branches });
    }
    Ok(Built {
        values: head.values.clone(),
        node,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::{parse_grammar, serialize_grammar};
    use crate::corpus::{parse_tagged_corpus, CorpusFormat};
    use crate::stats::MeasureKind;

    fn example(pairs: &[(Attr, &str)], class: &str) -> Example {
        let mut attributes: BTreeMap<Attr, String> =
            Attr::ALL.iter().map(|&a| (a, "x".to_string())).collect();
        for (a, v) in pairs {
            attributes.insert(*a, v.to_string());
        }
        Example {
            attributes,
            class: class.to_string(),
        }
    }

    /// Parity of two binary attributes, unbalanced so one attribute alone is
    /// informative.
    fn xor_examples() -> Vec<Example> {
        let mut out = Vec::new();
        for (a, b, class, n) in [
            ("0", "0", "A", 40),
            ("0", "1", "B", 10),
            ("1", "0", "B", 40),
            ("1", "1", "A", 10),
        ] {
            for _ in 0..n {
                out.push(example(&[(Attr::Offset(-1), a), (Attr::Offset(1), b)], class));
            }
        }
        out
    }

    fn ambiguity(readings: &[&str], members: &[&str]) -> AmbiguityClass {
        AmbiguityClass {
            readings: readings.iter().map(|s| s.to_string()).collect(),
            members: members.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn examples_from_corpus() {
        let text = "we\tPRP\nsaw\tVB\nthe\tDT\nman\tNN\nas\tIN\nthe\tDT\nbig\tJJ\n\nas\tRB\ngood\tJJ\n";
        let c = parse_tagged_corpus(text, CorpusFormat::Tagged).unwrap();
        let ex = extract_examples(&c, &ambiguity(&["IN", "RB"], &["as"])).unwrap();
        assert_eq!(ex.len(), 2);
        let first: Vec<&str> = Attr::ALL.iter().map(|&a| ex[0].get(a)).collect();
        assert_eq!(first, ["VB", "DT", "NN", "DT", "JJ", "as"]);
        assert_eq!(ex[0].class, "IN");
        for o in [-3, -2, -1] {
            assert_eq!(ex[1].get(Attr::Offset(o)), BOUNDARY);
        }
        assert_eq!(ex[1].get(Attr::Offset(2)), BOUNDARY);
        assert!(matches!(
            extract_examples(&c, &ambiguity(&["IN", "RB"], &["zzz"])),
            Err(DTreeError::EmptyClass(_))
        ));
    }

    #[test]
    fn pure_examples_make_a_leaf() {
        let ex: Vec<_> = (0..20).map(|_| example(&[], "A")).collect();
        let t = learn_tree(&ex, &TreeParams::default()).unwrap();
        assert!(t.is_leaf());
        assert!(t.distribution["A"] > 0.95);
    }

    #[test]
    fn xor_gives_depth_two() {
        let ex = xor_examples();
        let p = TreeParams {
            min_leaf: 1,
            ..TreeParams::default()
        };
        let t = learn_tree(&ex, &p).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(accuracy(&t, &ex), 1.0);
        // brute-force table classifier agrees on every cell
        for (a, b, class) in [("0", "0", "A"), ("0", "1", "B"), ("1", "0", "B"), ("1", "1", "A")] {
            let e = example(&[(Attr::Offset(-1), a), (Attr::Offset(1), b)], class);
            assert_eq!(classify(&t, &e), class);
        }
    }

    #[test]
    fn too_few_examples() {
        let ex: Vec<_> = (0..3).map(|_| example(&[], "A")).collect();
        assert_eq!(
            learn_tree(&ex, &TreeParams::default()),
            Err(DTreeError::InsufficientExamples { have: 3, need: 10 })
        );
    }

    #[test]
    fn leaves_are_distributions_and_groups_partition() {
        let t = learn_tree(&xor_examples(), &TreeParams::default()).unwrap();
        fn check(n: &TreeNode, observed: &dyn Fn(Attr) -> BTreeSet<String>) {
            let s: f64 = n.distribution.values().sum();
            assert!((s - 1.0).abs() < 1e-9);
            if let Some(split) = &n.split {
                let mut all = BTreeSet::new();
                for (vals, _) in &split.branches {
                    for v in vals {
                        assert!(all.insert(v.clone()), "overlap on {v}");
                    }
                }
                assert_eq!(all, observed(split.attr));
            }
        }
        check(&t, &|_| ["0", "1"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn pruning_is_nested_and_argmax() {
        let mut ex = xor_examples();
        // label noise in the training half
        for e in ex.iter_mut().step_by(7) {
            e.class = if e.class == "A" { "B".into() } else { "A".into() };
        }
        let p = TreeParams {
            min_leaf: 1,
            ..TreeParams::default()
        };
        let full = learn_tree(&ex, &p).unwrap();
        let holdout = xor_examples();
        let seq = pruning_sequence(&full);
        for w in seq.windows(2) {
            assert!(w[1].node_count() < w[0].node_count());
        }
        assert!(seq.last().unwrap().is_leaf());
        let pruned = prune_tree(&full, &holdout);
        assert!(pruned.node_count() <= full.node_count());
        assert!(accuracy(&pruned, &holdout) >= accuracy(&full, &holdout));
        let leaf = TreeNode::leaf([("A".to_string(), 3)].into_iter().collect());
        assert_eq!(prune_tree(&leaf, &holdout), leaf);
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let ex = xor_examples();
        let (train, hold) = split_examples(&ex, 0.1, 7);
        assert_eq!(train.len() + hold.len(), ex.len());
        assert_eq!(hold.iter().filter(|e| e.class == "A").count(), 5);
        assert_eq!(split_examples(&ex, 0.1, 7), (train, hold));
    }

    #[test]
    fn grammar_from_tree() {
        let t = learn_tree(&xor_examples(), &TreeParams::default()).unwrap();
        let priors = class_priors(&t);
        let cls = ambiguity(&["A", "B"], &["w"]);
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let g = tree_to_grammar(&t, &priors, &cls, &m).unwrap();
        let expected: usize = t
            .leaves()
            .iter()
            .map(|(_, l)| l.distribution.values().filter(|&&p| p > 0.0).count())
            .sum();
        assert_eq!(g.constraints.len(), expected);
        for (c, (path, leaf)) in g
            .constraints
            .chunks(2)
            .zip(t.leaves())
        {
            assert_eq!(c[0].conditions.len(), path.len());
            let w = c[0].weight().unwrap();
            assert_eq!(w > 0.0, leaf.distribution["A"] > priors["A"]);
        }
        let text = serialize_grammar(&g);
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn form_tests_become_word_conditions() {
        let mut root = TreeNode::leaf([("IN".to_string(), 60), ("RB".to_string(), 40)].into_iter().collect());
        let leaf = TreeNode::leaf([("IN".to_string(), 1), ("RB".to_string(), 9)].into_iter().collect());
        let other = TreeNode::leaf([("IN".to_string(), 59), ("RB".to_string(), 31)].into_iter().collect());
        root.split = Some(Split {
            attr: Attr::Form,
            branches: vec![
                (["As".to_string(), "as".to_string()].into(), leaf),
                (["so".to_string()].into(), other),
            ],
        });
        let g = tree_to_grammar(
            &root,
            &class_priors(&root),
            &ambiguity(&["IN", "RB"], &["as", "As", "so"]),
            &CompatibilityMeasure::new(MeasureKind::MutualInfo),
        )
        .unwrap();
        let text = serialize_grammar(&g);
        assert!(text.contains("(IN)\n    (0 (\"As\") OR (\"as\"));"), "{text}");
        assert!(g.constraints[0].weight().unwrap() < 0.0);
        assert!(g.constraints[1].weight().unwrap() > 0.0);
    }

    #[test]
    fn single_leaf_gives_unconditioned_constraints() {
        let leaf = TreeNode::leaf([("A".to_string(), 10), ("B".to_string(), 0)].into_iter().collect());
        let g = tree_to_grammar(
            &leaf,
            &[("A".to_string(), 0.5), ("B".to_string(), 0.5)].into_iter().collect(),
            &ambiguity(&["A"], &["w"]),
            &CompatibilityMeasure::new(MeasureKind::MutualInfo),
        )
        .unwrap();
        assert_eq!(g.constraints.len(), 1);
        assert!(g.constraints[0].conditions.is_empty());
    }

    #[test]
    fn dump_round_trips() {
        let t = learn_tree(&xor_examples(), &TreeParams::default()).unwrap();
        let text = dump_tree(&t);
        assert!(text.starts_with("split "), "{text}");
        assert_eq!(parse_tree(&text).unwrap(), t);
        assert!(parse_tree("leaf support=1\n").is_err());
    }
}
