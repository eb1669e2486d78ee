//! Relaxation labelling over a sentence lattice.
//!
//! Each word carries a weight vector over its candidate readings. An
//! iteration computes the support every reading receives from the model
//! under the current weights, then moves all weights at once with an
//! updating function. Iteration stops when no weight moves by more than
//! `epsilon` or after `max_iters` steps.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cg::{
    desugar_strict, match_constraint, Atom, Constraint, Grammar, Lattice,
    MatchConfig, Position,
};
use crate::corpus::{Corpus, CorpusError, Lexicon, Reading, Sentence};

#[derive(Debug, Error, PartialEq)]
pub enum RelaxError {
    #[error("word {word}, reading {reading}: support {support} outside the updating function's domain")]
    DomainViolation {
        word: usize,
        reading: usize,
        support: f64,
    },
    #[error("constraint {0} has no weight; weight the grammar first")]
    Unweighted(usize),
    #[error("the sequence support needs a sequence model")]
    MissingModel,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sequence model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labelling {
    pub weights: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl Labelling {
    /// Whether every vector is nonnegative and sums to 1 within `tol`.
    pub fn is_simplex(&self, tol: f64) -> bool {
        self.weights.iter().all(|w| {
            !w.is_empty() && w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    /// Index of the heaviest reading per word, ties to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.weights.iter().map(|w| argmax(w)).collect()
    }
}

fn argmax(w: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in w.iter().enumerate() {
        if x > w[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportFn {
    Sum,
    /// Sum within groups of constraints on the same relative positions,
    /// product across groups.
    ProdOfSums,
    /// Maximum within groups, product across groups.
    ProdOfMax,
    /// Sequence probability of the current best path through the reading,
    /// raised or lowered by trigram and hand-written constraints.
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateFn {
    /// `p (1 + S) / Σ`, supports in [-1, 1].
    Centered,
    /// `p S / Σ`, supports ≥ 0.
    Positive,
    /// `exp(S / T) / Σ`; the temperature is multiplied by `cooling` after
    /// every iteration.
    Boltzmann { t0: f64, cooling: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Proportional to lexical counts.
    Lexical,
    Uniform,
    /// Seeded Dirichlet(1) draws.
    Random(u64),
}

/// Below this temperature a stochastic run stops once the labelling stops
/// changing.
pub const STOCHASTIC_MIN_TEMPERATURE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxParams {
    pub support: SupportFn,
    pub update: UpdateFn,
    /// Supports are divided by this before updating.
    pub norm_factor: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub matching: MatchConfig,
    pub init: InitMode,
    /// Boltzmann only: sample a one-hot labelling each iteration.
    pub stochastic_seed: Option<u64>,
    /// Influences with smaller magnitude are ignored.
    pub influence_threshold: Option<f64>,
}

impl Default for RelaxParams {
    fn default() -> Self {
        RelaxParams {
            support: SupportFn::Sum,
            update: UpdateFn::Centered,
            norm_factor: 10.0,
            epsilon: 1e-4,
            max_iters: 500,
            matching: MatchConfig::default(),
            init: InitMode::Lexical,
            stochastic_seed: None,
            influence_threshold: None,
        }
    }
}

impl RelaxParams {
    pub fn validate(&self) -> Result<(), RelaxError> {
        let bad = |m: &str| Err(RelaxError::InvalidParams(m.to_string()));
        if !(self.norm_factor > 0.0 && self.norm_factor.is_finite()) {
            return bad("normalization factor must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if let UpdateFn::Boltzmann { t0, cooling } = self.update {
            if !(t0 > 0.0 && t0.is_finite()) {
                return bad("temperature must be positive");
            }
            if !(cooling > 0.0 && cooling < 1.0) {
                return bad("cooling must lie in (0,1)");
            }
        }
        Ok(())
    }
}

/// A desugared, fully weighted grammar indexed by target tag.
#[derive(Debug, Clone)]
pub struct CompiledGrammar {
    pub grammar: Grammar,
    by_value: HashMap<String, Vec<usize>>,
    generic: Vec<usize>,
}

impl CompiledGrammar {
    pub fn new(g: &Grammar) -> Result<Self, RelaxError> {
        let grammar = desugar_strict(g);
        let mut by_value: HashMap<String, Vec<usize>> = HashMap::new();
        let mut generic = Vec::new();
        for (idx, c) in grammar.constraints.iter().enumerate() {
            if c.weight().is_none() {
                return Err(RelaxError::Unweighted(idx));
            }
            match c.target.disjuncts.as_slice() {
                [conj] => match conj.as_slice() {
                    [Atom::Tag(t)] => by_value.entry(t.clone()).or_default().push(idx),
                    _ => generic.push(idx),
                },
                _ => generic.push(idx),
            }
        }
        Ok(CompiledGrammar {
            grammar,
            by_value,
            generic,
        })
    }

    pub fn empty() -> Self {
        CompiledGrammar::new(&Grammar::default()).expect("empty grammar")
    }

    pub fn len(&self) -> usize {
        self.grammar.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grammar.constraints.is_empty()
    }

    /// Constraints whose target and fixed positive conditions can match
    /// `(i, j)` under some labelling, in grammar order.
    fn plan(&self, lattice: &Lattice, i: usize, j: usize) -> Vec<usize> {
        let reading = &lattice.candidates[i][j];
        let mut idx: Vec<usize> = reading
            .features()
            .iter()
            .filter(|(name, _)| name.as_str() != "lemma")
            .filter_map(|(_, v)| self.by_value.get(v))
            .flatten()
            .chain(&self.generic)
            .copied()
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let sets = &self.grammar.sets;
        idx.retain(|&k| {
            let c = &self.grammar.constraints[k];
            c.target.matches(sets, &lattice.words[i], reading)
                && c.conditions.iter().all(|cond| match cond.position {
                    Position::Fixed(o) if !cond.negated => {
                        let p = i as i64 + o as i64;
                        if p < 0 || p >= lattice.len() as i64 {
                            return true;
                        }
                        let p = p as usize;
                        lattice.candidates[p]
                            .iter()
                            .any(|r| cond.pattern.matches(sets, &lattice.words[p], r))
                    }
                    _ => true,
                })
        });
        idx
    }
}

/// Per-variable lists of constraints that may apply.
struct Plan(Vec<Vec<Vec<usize>>>);

impl Plan {
    fn new(g: &CompiledGrammar, lattice: &Lattice) -> Self {
        Plan(
            (0..lattice.len())
                .map(|i| {
                    (0..lattice.candidates[i].len())
                        .map(|j| g.plan(lattice, i, j))
                        .collect()
                })
                .collect(),
        )
    }
}

/// Bigram sequence model: start and transition probabilities. Lexical
/// probabilities come from the lattice counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    pub start: BTreeMap<String, f64>,
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
    /// Probability used for tags or transitions the model has no entry for.
    pub floor: f64,
}

impl SequenceModel {
    /// Lidstone estimate over the corpus tagset plus `extra_tags`.
    pub fn estimate(corpus: &Corpus, lambda: f64, extra_tags: &[String]) -> Result<Self, RelaxError> {
        if !(lambda > 0.0) {
            return Err(RelaxError::InvalidModel("lambda must be positive".into()));
        }
        let mut tags = corpus.tagset.clone();
        tags.extend(extra_tags.iter().cloned());
        let k = tags.len() as f64;
        let mut start_counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut pair_counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        let mut n_sentences = 0u64;
        for s in &corpus.sentences {
            let tagged: Option<Vec<&str>> = s
                .tokens
                .iter()
                .map(|t| t.gold.as_ref().map(Reading::pos))
                .collect();
            let Some(seq) = tagged else {
                return Err(RelaxError::InvalidModel("corpus has untagged tokens".into()));
            };
            if let Some(first) = seq.first() {
                *start_counts.entry(first).or_insert(0) += 1;
                n_sentences += 1;
            }
            for w in seq.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_insert(0) += 1;
            }
        }
        let start = tags
            .iter()
            .map(|t| {
                let n = start_counts.get(t.as_str()).copied().unwrap_or(0) as f64;
                (t.clone(), (n + lambda) / (n_sentences as f64 + lambda * k))
            })
            .collect();
        let transitions = tags
            .iter()
            .map(|a| {
                let row_total: u64 = tags
                    .iter()
                    .map(|b| pair_counts.get(&(a.as_str(), b.as_str())).copied().unwrap_or(0))
                    .sum();
                let row = tags
                    .iter()
                    .map(|b| {
                        let n = pair_counts.get(&(a.as_str(), b.as_str())).copied().unwrap_or(0);
                        (b.clone(), (n as f64 + lambda) / (row_total as f64 + lambda * k))
                    })
                    .collect();
                (a.clone(), row)
            })
            .collect();
        Ok(SequenceModel {
            start,
            transitions,
            floor: lambda / (corpus.token_count() as f64 + lambda * (k + 1.0)),
        })
    }

    pub fn validate(&self) -> Result<(), RelaxError> {
        let check = |name: &str, row: &BTreeMap<String, f64>| {
            let s: f64 = row.values().sum();
            if (s - 1.0).abs() > 1e-9 || row.values().any(|&p| !(0.0..=1.0).contains(&p)) {
                Err(RelaxError::InvalidModel(format!("{name} does not sum to 1 (got {s})")))
            } else {
                Ok(())
            }
        };
        check("start", &self.start)?;
        for (a, row) in &self.transitions {
            check(&format!("transition row {a}"), row)?;
        }
        if !(self.floor > 0.0 && self.floor < 1.0) {
            return Err(RelaxError::InvalidModel("floor must lie in (0,1)".into()));
        }
        Ok(())
    }

    pub fn start_prob(&self, t: &str) -> f64 {
        self.start.get(t).copied().unwrap_or(self.floor)
    }

    pub fn transition_prob(&self, a: &str, b: &str) -> f64 {
        self.transitions
            .get(a)
            .and_then(|row| row.get(b))
            .copied()
            .unwrap_or(self.floor)
    }
}

/// Lexical probability of candidate `j` of word `i`.
pub fn lexical_prob(lattice: &Lattice, i: usize, j: usize) -> f64 {
    let total: u64 = lattice.counts[i].iter().sum();
    lattice.counts[i][j] as f64 / total as f64
}

/// Log of the sequence probability of `tags` (candidate indices) through
/// the lattice.
pub fn log_sequence_prob(model: &SequenceModel, lattice: &Lattice, tags: &[usize]) -> f64 {
    let pos = |k: usize| lattice.candidates[k][tags[k]].pos();
    let mut lp = 0.0;
    for k in 0..tags.len() {
        lp += lexical_prob(lattice, k, tags[k]).ln();
        lp += if k == 0 {
            model.start_prob(pos(0)).ln()
        } else {
            model.transition_prob(pos(k - 1), pos(k)).ln()
        };
    }
    lp
}

/// Log of the sequence term for reading `j` of word `i`: the current best
/// reading everywhere else.
fn log_b(model: &SequenceModel, lattice: &Lattice, best: &[usize], i: usize, j: usize) -> f64 {
    let mut tags = best.to_vec();
    tags[i] = j;
    log_sequence_prob(model, lattice, &tags)
}

pub fn init_labelling(lattice: &Lattice, mode: InitMode) -> Labelling {
    let mut rng = match mode {
        InitMode::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let weights = lattice
        .counts
        .iter()
        .map(|counts| {
            let raw: Vec<f64> = match (&mode, rng.as_mut()) {
                (InitMode::Lexical, _) => counts.iter().map(|&c| c as f64).collect(),
                (InitMode::Random(_), Some(r)) => counts
                    .iter()
                    .map(|_| -(1.0 - r.gen::<f64>()).ln() + f64::MIN_POSITIVE)
                    .collect(),
                _ => vec![1.0; counts.len()],
            };
            let total: f64 = raw.iter().sum();
            if total > 0.0 {
                raw.iter().map(|x| x / total).collect()
            } else {
                vec![1.0 / counts.len() as f64; counts.len()]
            }
        })
        .collect();
    Labelling {
        weights,
        iteration: 0,
    }
}

/// `C_r × W(r, i, j)`, or 0 when the constraint does not apply.
pub fn influence(
    c: &Constraint,
    g: &Grammar,
    lattice: &Lattice,
    labelling: &Labelling,
    i: usize,
    j: usize,
    config: MatchConfig,
) -> f64 {
    let r = match_constraint(c, &g.sets, lattice, &labelling.weights, i, j, config);
    if r.applicable {
        c.weight().unwrap_or(0.0) * r.context_weight
    } else {
        0.0
    }
}

fn combine(fun: SupportFn, influences: &[(Vec<Position>, f64)]) -> f64 {
    match fun {
        SupportFn::Sum | SupportFn::Sequence => influences.iter().map(|(_, x)| x).sum(),
        SupportFn::ProdOfSums | SupportFn::ProdOfMax => {
            if influences.is_empty() {
                return 0.0;
            }
            let mut groups: BTreeMap<&Vec<Position>, f64> = BTreeMap::new();
            for (key, x) in influences {
                groups
                    .entry(key)
                    .and_modify(|acc| {
                        *acc = if fun == SupportFn::ProdOfSums {
                            *acc + x
                        } else {
                            acc.max(*x)
                        }
                    })
                    .or_insert(*x);
            }
            groups.values().product()
        }
    }
}

fn raw_support(
    g: &CompiledGrammar,
    candidates: &[usize],
    lattice: &Lattice,
    labelling: &Labelling,
    i: usize,
    j: usize,
    params: &RelaxParams,
) -> f64 {
    let influences: Vec<(Vec<Position>, f64)> = candidates
        .iter()
        .filter_map(|&k| {
            let c = &g.grammar.constraints[k];
            let r = match_constraint(c, &g.grammar.sets, lattice, &labelling.weights, i, j, params.matching);
            if !r.applicable {
                return None;
            }
            let x = c.weight().unwrap_or(0.0) * r.context_weight;
            if params.influence_threshold.is_some_and(|t| x.abs() < t) {
                return None;
            }
            Some((c.position_key(), x))
        })
        .collect();
    combine(params.support, &influences)
}

/// Support of reading `j` of word `i` from a grammar with a non-sequence
/// support function.
pub fn support(
    g: &CompiledGrammar,
    lattice: &Lattice,
    labelling: &Labelling,
    i: usize,
    j: usize,
    params: &RelaxParams,
) -> f64 {
    let candidates = g.plan(lattice, i, j);
    raw_support(g, &candidates, lattice, labelling, i, j, params)
}

/// `clamp(s / κ, -1, 1)`.
pub fn normalize_support(s: f64, norm_factor: f64) -> f64 {
    (s / norm_factor).clamp(-1.0, 1.0)
}

/// The knowledge relaxation draws support from.
#[derive(Debug, Clone, Copy)]
pub enum Knowledge<'a> {
    Grammar(&'a CompiledGrammar),
    Sequence {
        model: &'a SequenceModel,
        trigrams: &'a CompiledGrammar,
        hand: &'a CompiledGrammar,
    },
}

/// `B_ij (1 + T_ij) (1 + C_ij)` with the trigram and hand-written
/// influence sums normalized into [-1, 1].
pub fn sequence_support(
    lattice: &Lattice,
    labelling: &Labelling,
    model: &SequenceModel,
    trigrams: &CompiledGrammar,
    hand: &CompiledGrammar,
    i: usize,
    j: usize,
    params: &RelaxParams,
) -> f64 {
    let best = labelling.argmax();
    let (t, c) = boosts(lattice, labelling, trigrams, hand, i, j, params);
    log_b(model, lattice, &best, i, j).exp() * (1.0 + t) * (1.0 + c)
}

fn boosts(
    lattice: &Lattice,
    labelling: &Labelling,
    trigrams: &CompiledGrammar,
    hand: &CompiledGrammar,
    i: usize,
    j: usize,
    params: &RelaxParams,
) -> (f64, f64) {
    let sum_params = RelaxParams {
        support: SupportFn::Sum,
        ..*params
    };
    let t = support(trigrams, lattice, labelling, i, j, &sum_params);
    let c = support(hand, lattice, labelling, i, j, &sum_params);
    (
        normalize_support(t, params.norm_factor),
        normalize_support(c, params.norm_factor),
    )
}

enum Planned<'a> {
    Grammar(&'a CompiledGrammar, Plan),
    Sequence {
        model: &'a SequenceModel,
        trigrams: (&'a CompiledGrammar, Plan),
        hand: (&'a CompiledGrammar, Plan),
    },
}

impl<'a> Planned<'a> {
    fn new(k: Knowledge<'a>, lattice: &Lattice) -> Self {
        match k {
            Knowledge::Grammar(g) => Planned::Grammar(g, Plan::new(g, lattice)),
            Knowledge::Sequence {
                model,
                trigrams,
                hand,
            } => Planned::Sequence {
                model,
                trigrams: (trigrams, Plan::new(trigrams, lattice)),
                hand: (hand, Plan::new(hand, lattice)),
            },
        }
    }
}

/// Supports of every reading of word `i`, ready for the updating function.
fn word_supports(
    planned: &Planned,
    lattice: &Lattice,
    labelling: &Labelling,
    best: &[usize],
    i: usize,
    params: &RelaxParams,
) -> Vec<f64> {
    let m = lattice.candidates[i].len();
    match planned {
        Planned::Grammar(g, plan) => (0..m)
            .map(|j| {
                let s = raw_support(g, &plan.0[i][j], lattice, labelling, i, j, params);
                match params.update {
                    UpdateFn::Centered => normalize_support(s, params.norm_factor),
                    _ => s / params.norm_factor,
                }
            })
            .collect(),
        Planned::Sequence {
            model,
            trigrams,
            hand,
        } => {
            let sum_params = RelaxParams {
                support: SupportFn::Sum,
                ..*params
            };
            let logs: Vec<f64> = (0..m).map(|j| log_b(model, lattice, best, i, j)).collect();
            let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (0..m)
                .map(|j| {
                    let t = raw_support(trigrams.0, &trigrams.1 .0[i][j], lattice, labelling, i, j, &sum_params);
                    let c = raw_support(hand.0, &hand.1 .0[i][j], lattice, labelling, i, j, &sum_params);
                    let boost = (1.0 + normalize_support(t, params.norm_factor))
                        * (1.0 + normalize_support(c, params.norm_factor));
                    match params.update {
                        // scale-free per word, so the sequence term is
                        // rescaled against the word's best reading
                        UpdateFn::Positive => (logs[j] - top).exp() * boost,
                        UpdateFn::Centered => normalize_support(logs[j].exp() * boost, params.norm_factor),
                        UpdateFn::Boltzmann { .. } => logs[j].exp() * boost / params.norm_factor,
                    }
                })
                .collect()
        }
    }
}

/// New weights for one word from its supports.
pub fn update_word(
    weights: &[f64],
    supports: &[f64],
    fun: UpdateFn,
    temperature: f64,
    word: usize,
) -> Result<Vec<f64>, RelaxError> {
    let violation = |reading: usize| RelaxError::DomainViolation {
        word,
        reading,
        support: supports[reading],
    };
    match fun {
        UpdateFn::Centered => {
            if let Some(k) = supports.iter().position(|s| !(-1.0..=1.0).contains(s)) {
                return Err(violation(k));
            }
            let raw: Vec<f64> = weights.iter().zip(supports).map(|(p, s)| p * (1.0 + s)).collect();
            Ok(normalized_or_keep(raw, weights))
        }
        UpdateFn::Positive => {
            if let Some(k) = supports.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(violation(k));
            }
            let raw: Vec<f64> = weights.iter().zip(supports).map(|(p, s)| p * s).collect();
            Ok(normalized_or_keep(raw, weights))
        }
        UpdateFn::Boltzmann { .. } => {
            if let Some(k) = supports.iter().position(|s| !s.is_finite()) {
                return Err(violation(k));
            }
            let top = supports.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let raw: Vec<f64> = supports.iter().map(|s| ((s - top) / temperature).exp()).collect();
            Ok(normalized_or_keep(raw, weights))
        }
    }
}

fn normalized_or_keep(raw: Vec<f64>, old: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        raw.iter().map(|x| x / total).collect()
    } else {
        old.to_vec()
    }
}

/// Synchronous update of every word from per-word supports.
pub fn update(
    labelling: &Labelling,
    supports: &[Vec<f64>],
    fun: UpdateFn,
    temperature: f64,
) -> Result<Labelling, RelaxError> {
    let weights = labelling
        .weights
        .iter()
        .zip(supports)
        .enumerate()
        .map(|(i, (w, s))| update_word(w, s, fun, temperature, i))
        .collect::<Result<_, _>>()?;
    Ok(Labelling {
        weights,
        iteration: labelling.iteration + 1,
    })
}

/// Supports of all variables, computed in the given word order from the
/// current labelling only.
pub fn supports_in_order(
    knowledge: Knowledge,
    lattice: &Lattice,
    labelling: &Labelling,
    params: &RelaxParams,
    order: &[usize],
) -> Vec<Vec<f64>> {
    let planned = Planned::new(knowledge, lattice);
    supports_planned(&planned, lattice, labelling, params, order)
}

fn supports_planned(
    planned: &Planned,
    lattice: &Lattice,
    labelling: &Labelling,
    params: &RelaxParams,
    order: &[usize],
) -> Vec<Vec<f64>> {
    let best = labelling.argmax();
    let mut out = vec![Vec::new(); lattice.len()];
    for &i in order {
        out[i] = word_supports(planned, lattice, labelling, &best, i, params);
    }
    out
}

/// One deterministic iteration visiting words in `order`.
pub fn step_in_order(
    knowledge: Knowledge,
    lattice: &Lattice,
    labelling: &Labelling,
    params: &RelaxParams,
    order: &[usize],
    temperature: f64,
) -> Result<Labelling, RelaxError> {
    let s = supports_in_order(knowledge, lattice, labelling, params, order);
    update(labelling, &s, params.update, temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Euclidean distance between consecutive labellings.
    pub global_distance: f64,
    /// Mean over words of the per-word Euclidean distance.
    pub avg_distance: f64,
    /// Mean absolute change of the supports from the previous iteration.
    pub avg_support_variation: f64,
    pub max_support_variation: f64,
    pub d_global_distance: f64,
    pub d_avg_distance: f64,
    pub d_avg_support_variation: f64,
    pub d_max_support_variation: f64,
    /// Mean over words of the weighted support `Σ_j p_j S_j`.
    pub mean_avg_support: f64,
    /// Whether no word's weighted support decreased.
    pub avg_support_monotone: bool,
    pub max_change: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationDiagnostics {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl IterationDiagnostics {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub const CSV_HEADER: &'static str = "iteration,global_distance,avg_distance,avg_support_variation,max_support_variation,d_global_distance,d_avg_distance,d_avg_support_variation,d_max_support_variation,mean_avg_support,avg_support_monotone,max_change";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.iteration,
                r.global_distance,
                r.avg_distance,
                r.avg_support_variation,
                r.max_support_variation,
                r.d_global_distance,
                r.d_avg_distance,
                r.d_avg_support_variation,
                r.d_max_support_variation,
                r.mean_avg_support,
                r.avg_support_monotone,
                r.max_change
            ));
        }
        out
    }
}

fn weighted_supports(labelling: &Labelling, supports: &[Vec<f64>]) -> Vec<f64> {
    labelling
        .weights
        .iter()
        .zip(supports)
        .map(|(w, s)| w.iter().zip(s).map(|(p, x)| p * x).sum())
        .collect()
}

/// Iterates support and update from `init` until convergence or
/// `max_iters`.
pub fn relax_from(
    lattice: &Lattice,
    knowledge: Knowledge,
    params: &RelaxParams,
    init: Labelling,
) -> Result<(Labelling, IterationDiagnostics), RelaxError> {
    relax_observed(lattice, knowledge, params, init, |_| {})
}

/// As [`relax_from`], calling `observe` with the labelling after every
/// iteration.
pub fn relax_observed(
    lattice: &Lattice,
    knowledge: Knowledge,
    params: &RelaxParams,
    init: Labelling,
    mut observe: impl FnMut(&Labelling),
) -> Result<(Labelling, IterationDiagnostics), RelaxError> {
    params.validate()?;
    if matches!(knowledge, Knowledge::Grammar(_)) == (params.support == SupportFn::Sequence) {
        return Err(if params.support == SupportFn::Sequence {
            RelaxError::MissingModel
        } else {
            RelaxError::InvalidParams("a sequence model needs the sequence support".into())
        });
    }
    if let Knowledge::Sequence { model, .. } = knowledge {
        model.validate()?;
    }
    let planned = Planned::new(knowledge, lattice);
    let order: Vec<usize> = (0..lattice.len()).collect();
    let mut temperature = match params.update {
        UpdateFn::Boltzmann { t0, .. } => t0,
        _ => 1.0,
    };
    let mut rng = params.stochastic_seed.map(ChaCha8Rng::seed_from_u64);
    let stochastic = rng.is_some() && matches!(params.update, UpdateFn::Boltzmann { .. });
    let mut labelling = init;
    let mut diag = IterationDiagnostics::default();
    let mut prev_supports: Option<Vec<Vec<f64>>> = None;
    let mut prev_weighted: Option<Vec<f64>> = None;
    for _ in 0..params.max_iters {
        let supports = supports_planned(&planned, lattice, &labelling, params, &order);
        let mut next = update(&labelling, &supports, params.update, temperature)?;
        if stochastic {
            let r = rng.as_mut().expect("stochastic rng");
            for w in &mut next.weights {
                let u: f64 = r.gen();
                let mut acc = 0.0;
                let mut pick = w.len() - 1;
                for (k, &p) in w.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                w.iter_mut().enumerate().for_each(|(k, x)| *x = f64::from(u8::from(k == pick)));
            }
        }
        let weighted = weighted_supports(&labelling, &supports);
        let record = record(&labelling, &next, &supports, prev_supports.as_deref(), &weighted, prev_weighted.as_deref(), diag.records.last());
        let max_change = record.max_change;
        diag.records.push(record);
        labelling = next;
        observe(&labelling);
        prev_supports = Some(supports);
        prev_weighted = Some(weighted);
        let done = if stochastic {
            temperature < STOCHASTIC_MIN_TEMPERATURE && max_change == 0.0
        } else {
            max_change < params.epsilon
        };
        if let UpdateFn::Boltzmann { cooling, .. } = params.update {
            temperature *= cooling;
        }
        if done {
            diag.converged = true;
            break;
        }
    }
    Ok((labelling, diag))
}

fn record(
    old: &Labelling,
    new: &Labelling,
    supports: &[Vec<f64>],
    prev_supports: Option<&[Vec<f64>]>,
    weighted: &[f64],
    prev_weighted: Option<&[f64]>,
    last: Option<&IterationRecord>,
) -> IterationRecord {
    let mut sq_total = 0.0;
    let mut per_word = 0.0;
    let mut max_change: f64 = 0.0;
    for (a, b) in old.weights.iter().zip(&new.weights) {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        max_change = a.iter().zip(b).fold(max_change, |m, (x, y)| m.max((x - y).abs()));
        sq_total += sq;
        per_word += sq.sqrt();
    }
    let n_words = old.weights.len().max(1) as f64;
    let (mut var_sum, mut var_max, mut var_n) = (0.0, 0.0f64, 0usize);
    for (i, s) in supports.iter().enumerate() {
        for (j, x) in s.iter().enumerate() {
            let before = prev_supports.map_or(0.0, |p| p[i][j]);
            let d = (x - before).abs();
            var_sum += d;
            var_max = var_max.max(d);
            var_n += 1;
        }
    }
    let avg_var = if var_n > 0 { var_sum / var_n as f64 } else { 0.0 };
    let global = sq_total.sqrt();
    let avg = per_word / n_words;
    let diff = |now: f64, f: fn(&IterationRecord) -> f64| last.map_or(0.0, |l| now - f(l));
    IterationRecord {
        iteration: old.iteration + 1,
        global_distance: global,
        avg_distance: avg,
        avg_support_variation: avg_var,
        max_support_variation: var_max,
        d_global_distance: diff(global, |r| r.global_distance),
        d_avg_distance: diff(avg, |r| r.avg_distance),
        d_avg_support_variation: diff(avg_var, |r| r.avg_support_variation),
        d_max_support_variation: diff(var_max, |r| r.max_support_variation),
        mean_avg_support: weighted.iter().sum::<f64>() / n_words,
        avg_support_monotone: prev_weighted
            .is_none_or(|p| p.iter().zip(weighted).all(|(a, b)| *b >= *a - 1e-12)),
        max_change,
    }
}

/// Relaxes a lattice from the initial labelling chosen by `params.init`.
pub fn relax(
    lattice: &Lattice,
    knowledge: Knowledge,
    params: &RelaxParams,
) -> Result<(Labelling, IterationDiagnostics), RelaxError> {
    relax_from(lattice, knowledge, params, init_labelling(lattice, params.init))
}

/// Builds the lattice of a sentence and relaxes it.
pub fn relax_sentence(
    sentence: &Sentence,
    lexicon: &Lexicon,
    knowledge: Knowledge,
    params: &RelaxParams,
) -> Result<(Lattice, Labelling, IterationDiagnostics), RelaxError> {
    let lattice = Lattice::new(sentence, lexicon)?;
    let (l, d) = relax(&lattice, knowledge, params)?;
    Ok((lattice, l, d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Argmax,
    /// Every reading within `theta` of the word's top weight, as a ratio.
    Threshold(f64),
    /// One uniformly drawn reading among the threshold survivors.
    Forced { theta: f64, seed: u64 },
}

/// Chosen candidate indices per word, in candidate order.
pub fn decode(labelling: &Labelling, mode: DecodeMode) -> Vec<Vec<usize>> {
    let survivors = |w: &[f64], theta: f64| -> Vec<usize> {
        let top = w.iter().copied().fold(0.0, f64::max);
        (0..w.len()).filter(|&k| w[k] >= theta * top).collect()
    };
    match mode {
        DecodeMode::Argmax => labelling.weights.iter().map(|w| vec![argmax(w)]).collect(),
        DecodeMode::Threshold(theta) => labelling.weights.iter().map(|w| survivors(w, theta)).collect(),
        DecodeMode::Forced { theta, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            labelling
                .weights
                .iter()
                .map(|w| {
                    let s = survivors(w, theta);
                    vec![s[rng.gen_range(0..s.len())]]
                })
                .collect()
        }
    }
}

pub fn decode_readings(lattice: &Lattice, labelling: &Labelling, mode: DecodeMode) -> Vec<Vec<Reading>> {
    decode(labelling, mode)
        .into_iter()
        .enumerate()
        .map(|(i, ks)| ks.into_iter().map(|k| lattice.candidates[i][k].clone()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::parse_grammar;

    fn lattice(spec: &[(&str, &[(&str, u64)])]) -> Lattice {
        Lattice {
            words: spec.iter().map(|(w, _)| w.to_string()).collect(),
            candidates: spec
                .iter()
                .map(|(_, c)| c.iter().map(|(t, _)| Reading::new(t).unwrap()).collect())
                .collect(),
            counts: spec
                .iter()
                .map(|(_, c)| c.iter().map(|(_, n)| *n).collect())
                .collect(),
        }
    }

    fn compiled(text: &str) -> CompiledGrammar {
        CompiledGrammar::new(&parse_grammar(text).unwrap()).unwrap()
    }

    #[test]
    fn lexical_and_uniform_init() {
        let lat = lattice(&[("the", &[("DT", 5)]), ("run", &[("NN", 1), ("VB", 3)])]);
        let l = init_labelling(&lat, InitMode::Lexical);
        assert_eq!(l.weights, vec![vec![1.0], vec![0.25, 0.75]]);
        let u = init_labelling(&lat, InitMode::Uniform);
        assert_eq!(u.weights[1], vec![0.5, 0.5]);
        let r1 = init_labelling(&lat, InitMode::Random(3));
        assert_eq!(r1, init_labelling(&lat, InitMode::Random(3)));
        assert!(r1.is_simplex(1e-12));
    }

    #[test]
    fn influence_is_weight_times_context() {
        let lat = lattice(&[("a", &[("X", 1), ("Z", 1)]), ("b", &[("T", 1)]), ("c", &[("Y", 1), ("Z", 1)])]);
        let l = Labelling {
            weights: vec![vec![0.5, 0.5], vec![1.0], vec![0.5, 0.5]],
            iteration: 0,
        };
        let g = parse_grammar("4.0 (T) (-1 (X)) (1 (Y));\n4.0 (T);\n4.0 (Z) (1 (T));").unwrap();
        let cfg = MatchConfig::default();
        assert_eq!(influence(&g.constraints[0], &g, &lat, &l, 1, 0, cfg), 1.0);
        assert_eq!(influence(&g.constraints[1], &g, &lat, &l, 1, 0, cfg), 4.0);
        assert_eq!(influence(&g.constraints[2], &g, &lat, &l, 1, 0, cfg), 0.0);
    }

    #[test]
    fn support_functions_combine_influences() {
        let lat = lattice(&[("a", &[("X", 1)]), ("b", &[("T", 1)]), ("c", &[("Y", 1)])]);
        let l = init_labelling(&lat, InitMode::Uniform);
        let g = compiled("0.3 (T) (-1 (X));\n-0.1 (T) (1 (Y));");
        let p = RelaxParams::default();
        assert!((support(&g, &lat, &l, 1, 0, &p) - 0.2).abs() < 1e-15);
        let g = compiled("0.25 (T) (-1 (X));\n0.25 (T) (-1 (X));\n0.4 (T) (1 (Y));");
        let prod = RelaxParams {
            support: SupportFn::ProdOfSums,
            ..p
        };
        assert!((support(&g, &lat, &l, 1, 0, &prod) - 0.2).abs() < 1e-15);
        let max = RelaxParams {
            support: SupportFn::ProdOfMax,
            ..p
        };
        assert!((support(&g, &lat, &l, 1, 0, &max) - 0.1).abs() < 1e-15);
        let none = compiled("1 (Q);");
        assert_eq!(support(&none, &lat, &l, 1, 0, &p), 0.0);
        assert_eq!(support(&none, &lat, &l, 1, 0, &prod), 0.0);
    }

    #[test]
    fn normalization_clamps() {
        assert_eq!(normalize_support(20.0, 10.0), 1.0);
        assert_eq!(normalize_support(5.0, 10.0), 0.5);
        assert_eq!(normalize_support(-30.0, 10.0), -1.0);
    }

    #[test]
    fn centered_update() {
        let next = update_word(&[0.5, 0.5], &[0.5, -0.5], UpdateFn::Centered, 1.0, 0).unwrap();
        assert_eq!(next, vec![0.75, 0.25]);
        let same = update_word(&[0.3, 0.7], &[0.0, 0.0], UpdateFn::Centered, 1.0, 0).unwrap();
        assert_eq!(same, vec![0.3, 0.7]);
        assert!(matches!(
            update_word(&[0.5, 0.5], &[1.5, 0.0], UpdateFn::Centered, 1.0, 2),
            Err(RelaxError::DomainViolation { word: 2, reading: 0, .. })
        ));
    }

    #[test]
    fn positive_update() {
        let next = update_word(&[0.5, 0.5], &[3.0, 1.0], UpdateFn::Positive, 1.0, 0).unwrap();
        assert_eq!(next, vec![0.75, 0.25]);
        assert!(update_word(&[0.5, 0.5], &[-0.5, 1.0], UpdateFn::Positive, 1.0, 0).is_err());
        let zero = update_word(&[0.5, 0.5], &[0.0, 0.0], UpdateFn::Positive, 1.0, 0).unwrap();
        assert_eq!(zero, vec![0.5, 0.5]);
    }

    #[test]
    fn cold_boltzmann_is_one_hot() {
        let b = UpdateFn::Boltzmann {
            t0: 1.0,
            cooling: 0.9,
        };
        let next = update_word(&[0.5, 0.5], &[1.0, 0.0], b, 0.01, 0).unwrap();
        assert!(next[0] > 1.0 - 1e-9);
    }

    #[test]
    fn empty_grammar_is_a_fixed_point() {
        let lat = lattice(&[("run", &[("NN", 1), ("VB", 3)])]);
        let g = CompiledGrammar::empty();
        let (l, d) = relax(&lat, Knowledge::Grammar(&g), &RelaxParams::default()).unwrap();
        assert_eq!(l.weights, init_labelling(&lat, InitMode::Lexical).weights);
        assert!(d.converged);
        assert_eq!(d.iterations(), 1);
    }

    #[test]
    fn mutual_reinforcement_converges() {
        let lat = lattice(&[("x", &[("A", 3), ("B", 2)]), ("y", &[("A", 3), ("B", 2)])]);
        let g = compiled("5 (A) (-1 (A));\n5 (A) (1 (A));\n-5 (B) (-1 (A));\n-5 (B) (1 (A));");
        let (l, d) = relax(&lat, Knowledge::Grammar(&g), &RelaxParams::default()).unwrap();
        assert!(l.weights.iter().all(|w| w[0] >= 0.999));
        assert!(d.records.iter().all(|r| r.avg_support_monotone));
        assert!(d.iterations() <= 100);
    }

    #[test]
    fn select_beats_remove() {
        let lat = lattice(&[("w", &[("X", 1), ("Y", 1), ("Z", 1)])]);
        let g = compiled("SELECT (X);\nREMOVE (X);\nREMOVE (Y);");
        let p = RelaxParams {
            init: InitMode::Uniform,
            ..RelaxParams::default()
        };
        let (l, _) = relax(&lat, Knowledge::Grammar(&g), &p).unwrap();
        assert_eq!(decode(&l, DecodeMode::Argmax), vec![vec![0]]);
    }

    #[test]
    fn sequence_support_is_the_chain_product() {
        let lat = lattice(&[("a", &[("A", 1)]), ("b", &[("B", 1)])]);
        let model = SequenceModel {
            start: [("A".to_string(), 1.0)].into_iter().collect(),
            transitions: [(
                "A".to_string(),
                [("A".to_string(), 0.5), ("B".to_string(), 0.5)].into_iter().collect(),
            )]
            .into_iter()
            .collect(),
            floor: 1e-6,
        };
        let l = init_labelling(&lat, InitMode::Lexical);
        let e = CompiledGrammar::empty();
        let p = RelaxParams::default();
        assert_eq!(sequence_support(&lat, &l, &model, &e, &e, 1, 0, &p), 0.5);
    }

    #[test]
    fn sequence_relaxation_with_positive_update() {
        let lat = lattice(&[("a", &[("A", 1)]), ("b", &[("A", 1), ("B", 1)])]);
        let model = SequenceModel {
            start: [("A".to_string(), 0.9), ("B".to_string(), 0.1)].into_iter().collect(),
            transitions: [
                ("A".to_string(), [("A".to_string(), 0.2), ("B".to_string(), 0.8)].into_iter().collect()),
                ("B".to_string(), [("A".to_string(), 0.5), ("B".to_string(), 0.5)].into_iter().collect()),
            ]
            .into_iter()
            .collect(),
            floor: 1e-6,
        };
        let e = CompiledGrammar::empty();
        let p = RelaxParams {
            support: SupportFn::Sequence,
            update: UpdateFn::Positive,
            ..RelaxParams::default()
        };
        let k = Knowledge::Sequence {
            model: &model,
            trigrams: &e,
            hand: &e,
        };
        let (l, d) = relax(&lat, k, &p).unwrap();
        assert!(d.converged);
        assert_eq!(l.argmax(), vec![0, 1]);
        assert_eq!(
            relax(&lat, Knowledge::Grammar(&e), &p),
            Err(RelaxError::MissingModel)
        );
    }

    #[test]
    fn decoding_modes() {
        let l = Labelling {
            weights: vec![vec![0.75, 0.25], vec![0.5, 0.5]],
            iteration: 0,
        };
        assert_eq!(decode(&l, DecodeMode::Argmax), vec![vec![0], vec![0]]);
        assert_eq!(decode(&l, DecodeMode::Threshold(0.5)), vec![vec![0], vec![0, 1]]);
        let f = DecodeMode::Forced { theta: 0.5, seed: 9 };
        assert_eq!(decode(&l, f), decode(&l, f));
        assert_eq!(decode(&l, f)[0], vec![0]);
    }

    #[test]
    fn estimated_model_is_normalized() {
        let c = crate::corpus::parse_tagged_corpus("a\tA\nb\tB\n\nb\tB\n", crate::corpus::CorpusFormat::Tagged).unwrap();
        let m = SequenceModel::estimate(&c, 0.5, &[]).unwrap();
        m.validate().unwrap();
        assert!((m.start_prob("A") - 1.5 / 3.0).abs() < 1e-15);
        assert!((m.transition_prob("A", "B") - 1.5 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn diagnostics_csv_has_a_row_per_iteration() {
        let lat = lattice(&[("x", &[("A", 3), ("B", 2)]), ("y", &[("A", 3), ("B", 2)])]);
        let g = compiled("5 (A) (-1 (A));\n5 (A) (1 (A));");
        let (_, d) = relax(&lat, Knowledge::Grammar(&g), &RelaxParams::default()).unwrap();
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), d.iterations() + 1);
        assert!(csv.starts_with("iteration,global_distance"));
    }

    #[test]
    fn observer_sees_every_iteration() {
        let lat = lattice(&[("x", &[("A", 3), ("B", 2)]), ("y", &[("A", 3), ("B", 2)])]);
        let g = compiled("5 (A) (-1 (A));\n5 (A) (1 (A));");
        let params = RelaxParams::default();
        let mut seen = Vec::new();
        let (last, d) = relax_observed(&lat, Knowledge::Grammar(&g), &params, init_labelling(&lat, params.init), |l| {
            seen.push(l.clone())
        })
        .unwrap();
        assert_eq!(seen.len(), d.iterations());
        assert_eq!(seen.last(), Some(&last));
        assert!(seen.iter().enumerate().all(|(k, l)| l.iteration == k + 1));
    }
}
