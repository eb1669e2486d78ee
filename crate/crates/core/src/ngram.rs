//! Constraint acquisition from corpus counts: bigram and trigram
//! constraints, corpus weighting of hand-written rules, and back-off models
//! that prefer trigrams and fall back to bigrams.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::cg::{
    match_conditions, Atom, Condition, Constraint, ConstraintKind, FeaturePattern, Grammar,
    Lattice, MatchConfig, MatchResult, Position, Span,
};
use crate::corpus::{Corpus, BOUNDARY, POS};
use crate::stats::{compatibility, CompatibilityMeasure, EventCounts, SmoothingSpec, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum NGramError {
    #[error("sentence {sentence}, token {token}: no {feature:?} feature")]
    MissingFeature {
        sentence: usize,
        token: usize,
        feature: String,
    },
    #[error("n-gram order must be 2 or 3, got {0}")]
    InvalidOrder(usize),
    #[error("the corpus has no tokens")]
    EmptyCorpus,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Counts of tag n-grams over sentences padded with one boundary token on
/// each side.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramTable {
    pub order: usize,
    pub counts: BTreeMap<Vec<String>, u64>,
    /// Per-tag token counts; the boundary counts once per pad.
    pub unigram: BTreeMap<String, u64>,
    pub total_tokens: u64,
}

impl NGramTable {
    /// Number of n-gram windows counted.
    pub fn windows(&self) -> u64 {
        self.counts.values().sum()
    }

    fn focus_counts(&self, focus: usize) -> BTreeMap<&str, u64> {
        let mut out = BTreeMap::new();
        for (gram, &n) in &self.counts {
            *out.entry(gram[focus].as_str()).or_insert(0) += n;
        }
        out
    }

    fn context_counts(&self, focus: usize) -> BTreeMap<Vec<&str>, u64> {
        let mut out = BTreeMap::new();
        for (gram, &n) in &self.counts {
            *out.entry(context_of(gram, focus)).or_insert(0) += n;
        }
        out
    }
}

fn context_of(gram: &[String], focus: usize) -> Vec<&str> {
    gram.iter()
        .enumerate()
        .filter(|&(j, _)| j != focus)
        .map(|(_, t)| t.as_str())
        .collect()
}

pub fn collect_ngrams(
    corpus: &Corpus,
    order: usize,
    feature: &str,
) -> Result<NGramTable, NGramError> {
    if !(2..=3).contains(&order) {
        return Err(NGramError::InvalidOrder(order));
    }
    let mut counts = BTreeMap::new();
    let mut unigram = BTreeMap::new();
    let mut total_tokens = 0;
    for (si, sentence) in corpus.sentences.iter().enumerate() {
        let mut tags = vec![BOUNDARY.to_string()];
        for (ti, token) in sentence.tokens.iter().enumerate() {
            let tag = token
                .gold
                .as_ref()
                .and_then(|g| g.get(feature))
                .ok_or_else(|| NGramError::MissingFeature {
                    sentence: si,
                    token: ti,
                    feature: feature.to_string(),
                })?;
            tags.push(tag.to_string());
        }
        tags.push(BOUNDARY.to_string());
        total_tokens += sentence.len() as u64;
        for t in &tags {
            *unigram.entry(t.clone()).or_insert(0) += 1;
        }
        for w in tags.windows(order) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    if total_tokens == 0 {
        return Err(NGramError::EmptyCorpus);
    }
    Ok(NGramTable {
        order,
        counts,
        unigram,
        total_tokens,
    })
}

/// Text dump: `#order`, `#windows` and `#tokens` header lines, then one
/// `tag TAB count` line per unigram and `tag tag [tag] TAB count` per n-gram.
pub fn dump_ngram_table(table: &NGramTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "#order {}", table.order);
    let _ = writeln!(out, "#windows {}", table.windows());
    let _ = writeln!(out, "#tokens {}", table.total_tokens);
    for (tag, n) in &table.unigram {
        let _ = writeln!(out, "{tag}\t{n}");
    }
    for (gram, n) in &table.counts {
        let _ = writeln!(out, "{}\t{n}", gram.join(" "));
    }
    out
}

pub fn parse_ngram_table(text: &str) -> Result<NGramTable, NGramError> {
    let mut order = None;
    let mut windows = None;
    let mut total_tokens = None;
    let mut counts = BTreeMap::new();
    let mut unigram = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| NGramError::Parse { line, reason };
        let l = raw.trim_end();
        if l.is_empty() {
            continue;
        }
        if let Some(rest) = l.strip_prefix('#') {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| err("bad header".into()))?;
            let v: u64 = value
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number {value:?}")))?;
            match key {
                "order" => order = Some(v as usize),
                "windows" => windows = Some(v),
                "tokens" => total_tokens = Some(v),
                _ => return Err(err(format!("unknown header {key:?}"))),
            }
            continue;
        }
        let (gram, n) = l
            .split_once('\t')
            .ok_or_else(|| err("expected tags TAB count".into()))?;
        let n: u64 = n.parse().map_err(|_| err(format!("bad count {n:?}")))?;
        let tags: Vec<String> = gram.split_whitespace().map(str::to_string).collect();
        match tags.len() {
            1 => {
                unigram.insert(tags.into_iter().next().unwrap(), n);
            }
            k if Some(k) == order => {
                counts.insert(tags, n);
            }
            k => return Err(err(format!("{k} tags on an order {order:?} line"))),
        }
    }
    let missing = |what: &str| NGramError::Parse {
        line: 0,
        reason: format!("missing #{what} header"),
    };
    let order = order.ok_or_else(|| missing("order"))?;
    if !(2..=3).contains(&order) {
        return Err(NGramError::InvalidOrder(order));
    }
    let table = NGramTable {
        order,
        counts,
        unigram,
        total_tokens: total_tokens.ok_or_else(|| missing("tokens"))?,
    };
    if let Some(w) = windows {
        if w != table.windows() {
            return Err(NGramError::Parse {
                line: 0,
                reason: format!("#windows {w} but counts sum to {}", table.windows()),
            });
        }
    }
    if let Some(t) = table
        .counts
        .keys()
        .flatten()
        .find(|t| !table.unigram.contains_key(*t))
    {
        return Err(NGramError::Parse {
            line: 0,
            reason: format!("tag {t:?} has no unigram count"),
        });
    }
    Ok(table)
}

fn value_pattern(feature: &str, value: &str) -> FeaturePattern {
    if feature == POS || value == BOUNDARY {
        FeaturePattern::tag(value)
    } else {
        FeaturePattern {
            disjuncts: vec![vec![Atom::Feature {
                name: feature.to_string(),
                value: value.to_string(),
            }]],
        }
    }
}

/// One constraint per focus position of every n-gram, in table order; the
/// remaining tags become conditions at their offsets from the focus.
fn ngram_constraints(
    table: &NGramTable,
    feature: &str,
    measure: &CompatibilityMeasure,
    smoothing: &SmoothingSpec,
    keep: impl Fn(u64) -> bool,
) -> Result<Vec<Constraint>, NGramError> {
    let total = table.windows();
    let focus_counts: Vec<_> = (0..table.order).map(|f| table.focus_counts(f)).collect();
    let context_counts: Vec<_> = (0..table.order).map(|f| table.context_counts(f)).collect();
    let mut out = Vec::new();
    for (gram, &n) in &table.counts {
        if !keep(n) {
            continue;
        }
        for focus in 0..table.order {
            let counts = EventCounts::new(
                focus_counts[focus][gram[focus].as_str()],
                context_counts[focus][&context_of(gram, focus)],
                n,
                total,
            )?;
            let weight = compatibility(&counts, measure, smoothing)?;
            let conditions = gram
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != focus)
                .map(|(j, t)| Condition::at(j as i32 - focus as i32, value_pattern(feature, t)))
                .collect();
            out.push(Constraint::weighted(
                weight,
                value_pattern(feature, &gram[focus]),
                conditions,
            ));
        }
    }
    Ok(out)
}

pub fn acquire_ngram_grammar(
    table: &NGramTable,
    measure: &CompatibilityMeasure,
    smoothing: &SmoothingSpec,
) -> Result<Grammar, NGramError> {
    acquire_feature_grammar(table, POS, measure, smoothing)
}

/// As [`acquire_ngram_grammar`] for a table counted over `feature`.
pub fn acquire_feature_grammar(
    table: &NGramTable,
    feature: &str,
    measure: &CompatibilityMeasure,
    smoothing: &SmoothingSpec,
) -> Result<Grammar, NGramError> {
    let constraints = ngram_constraints(table, feature, measure, smoothing, |_| true)?;
    Ok(Grammar::from_constraints(constraints))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffSpec {
    /// Minimum trigram count for the trigram tier.
    pub k: u64,
}

impl BackoffSpec {
    pub fn new(k: u64) -> Result<Self, NGramError> {
        if k == 0 {
            return Err(NGramError::Parse {
                line: 0,
                reason: "back-off threshold must be at least 1".into(),
            });
        }
        Ok(BackoffSpec { k })
    }
}

/// (focus, offset, context) triples of a constraint, one per condition.
fn covered_pairs(c: &Constraint) -> impl Iterator<Item = (String, Position, String)> + '_ {
    c.conditions.iter().map(move |cond| {
        (
            format!("{:?}", c.target),
            cond.position,
            format!("{:?}", cond.pattern),
        )
    })
}

/// Trigram constraints seen at least `spec.k` times, plus the bigram
/// constraints whose (focus, offset, context tag) no surviving trigram
/// constraint covers.
pub fn build_backoff_grammar(
    bi: &NGramTable,
    tri: &NGramTable,
    spec: BackoffSpec,
    measure: &CompatibilityMeasure,
    smoothing: &SmoothingSpec,
) -> Result<Grammar, NGramError> {
    if bi.order != 2 {
        return Err(NGramError::InvalidOrder(bi.order));
    }
    if tri.order != 3 {
        return Err(NGramError::InvalidOrder(tri.order));
    }
    let mut constraints = ngram_constraints(tri, POS, measure, smoothing, |n| n >= spec.k)?;
    let covered: BTreeSet<_> = constraints.iter().flat_map(covered_pairs).collect();
    let bigram = ngram_constraints(bi, POS, measure, smoothing, |_| true)?;
    constraints.extend(
        bigram
            .into_iter()
            .filter(|c| !covered_pairs(c).any(|pair| covered.contains(&pair))),
    );
    Ok(Grammar::from_constraints(constraints))
}

/// A problem met while weighting one constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub constraint: usize,
    pub span: Option<Span>,
    pub message: String,
    /// Whether the constraint was left out of the output.
    pub dropped: bool,
}

/// Replaces every `?` weight with the compatibility of the constraint's
/// target and context over the gold corpus. Numeric weights and strict rules
/// pass through.
pub fn weight_hand_grammar(
    g: &Grammar,
    corpus: &Corpus,
    measure: &CompatibilityMeasure,
    smoothing: &SmoothingSpec,
) -> Result<(Grammar, Vec<Diagnostic>), NGramError> {
    let mut lattices = Vec::with_capacity(corpus.sentences.len());
    for (si, s) in corpus.sentences.iter().enumerate() {
        let mut readings = Vec::with_capacity(s.len());
        for (ti, t) in s.tokens.iter().enumerate() {
            let gold = t.gold.clone().ok_or_else(|| NGramError::MissingFeature {
                sentence: si,
                token: ti,
                feature: POS.to_string(),
            })?;
            readings.push(vec![gold]);
        }
        lattices.push(Lattice::from_parts(
            s.wordforms().map(str::to_string).collect(),
            readings,
        ));
    }
    let total = corpus.token_count() as u64;
    if total == 0 {
        return Err(NGramError::EmptyCorpus);
    }
    let mut out = Grammar {
        sets: g.sets.clone(),
        constraints: Vec::new(),
        strict_select: g.strict_select,
        strict_remove: g.strict_remove,
        spans: Vec::new(),
    };
    let mut diagnostics = Vec::new();
    for (idx, c) in g.constraints.iter().enumerate() {
        let span = g.span(idx);
        let keep = |c: Constraint, out: &mut Grammar| {
            out.constraints.push(c);
            if let Some(s) = span {
                out.spans.push(s);
            }
        };
        if c.kind != ConstraintKind::Unweighted {
            keep(c.clone(), &mut out);
            continue;
        }
        let counts = event_counts(c, g, &lattices, total)?;
        let mut report = |message: String, dropped| {
            diagnostics.push(Diagnostic {
                constraint: idx,
                span,
                message,
                dropped,
            })
        };
        if counts.n_e == 0 {
            report("context never matched".into(), false);
        }
        match compatibility(&counts, measure, smoothing) {
            Ok(w) => keep(
                Constraint {
                    kind: ConstraintKind::Weighted(w),
                    ..c.clone()
                },
                &mut out,
            ),
            Err(e @ StatsError::DegenerateDistribution { .. }) => {
                report(format!("dropped: {e}"), true);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if out.spans.len() != out.constraints.len() {
        out.spans.clear();
    }
    Ok((out, diagnostics))
}

fn event_counts(
    c: &Constraint,
    g: &Grammar,
    lattices: &[Lattice],
    total: u64,
) -> Result<EventCounts, NGramError> {
    let (mut n_h, mut n_e, mut n_he) = (0, 0, 0);
    for lat in lattices {
        let weights = vec![vec![1.0]; lat.len()];
        for i in 0..lat.len() {
            let h = c
                .target
                .matches(&g.sets, &lat.words[i], &lat.candidates[i][0]);
            let MatchResult {
                applicable,
                context_weight,
            } = match_conditions(
                &c.conditions,
                &g.sets,
                lat,
                &weights,
                i,
                0,
                MatchConfig::default(),
            );
            let e = applicable && context_weight > 0.0;
            n_h += u64::from(h);
            n_e += u64::from(e);
            n_he += u64::from(h && e);
        }
    }
    Ok(EventCounts::new(n_h, n_e, n_he, total)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::{parse_grammar, serialize_grammar};
    use crate::corpus::{parse_tagged_corpus, CorpusFormat};
    use crate::stats::MeasureKind;

    fn corpus(text: &str) -> Corpus {
        parse_tagged_corpus(text, CorpusFormat::Tagged).unwrap()
    }

    fn key(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|t| t.to_string()).collect()
    }

    const AB: &str = "a\tA\nb\tB\n";

    #[test]
    fn bigram_windows_are_padded() {
        let t = collect_ngrams(&corpus(AB), 2, POS).unwrap();
        let expected: BTreeMap<_, _> = [
            (key(&["<<<", "A"]), 1),
            (key(&["A", "B"]), 1),
            (key(&["B", "<<<"]), 1),
        ]
        .into_iter()
        .collect();
        assert_eq!(t.counts, expected);
        assert_eq!(t.total_tokens, 2);
        assert_eq!(t.unigram["<<<"], 2);
    }

    #[test]
    fn trigrams_on_two_tokens() {
        let t = collect_ngrams(&corpus(AB), 3, POS).unwrap();
        assert_eq!(t.windows(), 2);
        assert!(t.counts.contains_key(&key(&["<<<", "A", "B"])));
        assert!(t.counts.contains_key(&key(&["A", "B", "<<<"])));
    }

    #[test]
    fn missing_feature_is_reported() {
        let c = corpus("a\tA\nb\tB\tsyn=@NH\n");
        assert_eq!(
            collect_ngrams(&c, 2, "syn"),
            Err(NGramError::MissingFeature {
                sentence: 0,
                token: 0,
                feature: "syn".into()
            })
        );
        assert_eq!(collect_ngrams(&c, 4, POS), Err(NGramError::InvalidOrder(4)));
    }

    #[test]
    fn dump_round_trips() {
        let t = collect_ngrams(&corpus("a\tA\nb\tB\nc\tA\n\nd\tB\n"), 3, POS).unwrap();
        assert_eq!(parse_ngram_table(&dump_ngram_table(&t)).unwrap(), t);
        assert!(parse_ngram_table("#order 2\n#tokens 1\nA B\t1\n").is_err());
    }

    #[test]
    fn bigram_constraints_are_mirrored() {
        let t = collect_ngrams(&corpus("a\tDT\nb\tNN\nc\tVB\n\nd\tDT\ne\tVB\n"), 2, POS).unwrap();
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let s = SmoothingSpec::lidstone(0.5, 16).unwrap();
        let g = acquire_ngram_grammar(&t, &m, &s).unwrap();
        assert_eq!(g.constraints.len(), 2 * t.counts.len());
        let text = serialize_grammar(&g);
        assert!(text.contains("(DT)\n    (1 (NN));"), "{text}");
        assert!(text.contains("(NN)\n    (-1 (DT));"), "{text}");
        for pair in g.constraints.chunks(2) {
            assert!((pair[0].weight().unwrap() - pair[1].weight().unwrap()).abs() < 1e-12);
        }
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn toy_table_weights_match_hand_mi() {
        // windows: (A,B)x2 (A,A)x1 (B,A)x1 ; total 4
        let counts: BTreeMap<_, _> = [
            (key(&["A", "B"]), 2),
            (key(&["A", "A"]), 1),
            (key(&["B", "A"]), 1),
        ]
        .into_iter()
        .collect();
        let t = NGramTable {
            order: 2,
            counts,
            unigram: [("A".to_string(), 4), ("B".to_string(), 3)]
                .into_iter()
                .collect(),
            total_tokens: 5,
        };
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let g = acquire_ngram_grammar(&t, &m, &SmoothingSpec::Mle).unwrap();
        // (A,A), focus first A: H = first slot A = 3, E = second slot A = 2,
        // joint 1
        let aa = (1.0f64 / 4.0 / (2.0 / 4.0 * 3.0 / 4.0)).log2();
        assert!((g.constraints[0].weight().unwrap() - aa).abs() < 1e-12);
        // (A,B): focus B in second slot: H = 2, E = 3, joint 2
        let ab = (2.0f64 / 4.0 / (2.0 / 4.0 * 3.0 / 4.0)).log2();
        assert!((g.constraints[3].weight().unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn trigram_constraints_cover_each_focus() {
        let t = collect_ngrams(&corpus("a\tX\nb\tY\nc\tZ\n"), 3, POS).unwrap();
        let m = CompatibilityMeasure::new(MeasureKind::CondProb);
        let g = acquire_ngram_grammar(&t, &m, &SmoothingSpec::Mle).unwrap();
        assert_eq!(g.constraints.len(), 3 * t.counts.len());
        let text = serialize_grammar(&g);
        assert!(text.contains("(Y)\n    (-1 (X))\n    (1 (Z));"), "{text}");
        assert!(text.contains("(X)\n    (1 (Y))\n    (2 (Z));"), "{text}");
        assert!(text.contains("(Z)\n    (-2 (X))\n    (-1 (Y));"), "{text}");
    }

    fn tables(text: &str) -> (NGramTable, NGramTable) {
        let c = corpus(text);
        (
            collect_ngrams(&c, 2, POS).unwrap(),
            collect_ngrams(&c, 3, POS).unwrap(),
        )
    }

    const MIXED: &str = "a\tX\nb\tY\nc\tZ\n\na\tX\nb\tY\nc\tZ\n\nd\tY\ne\tX\n";

    #[test]
    fn backoff_limits() {
        let (bi, tri) = tables(MIXED);
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let s = SmoothingSpec::lidstone(0.5, 64).unwrap();
        let full = build_backoff_grammar(&bi, &tri, BackoffSpec::new(1).unwrap(), &m, &s).unwrap();
        assert_eq!(full, acquire_ngram_grammar(&tri, &m, &s).unwrap());
        let none = build_backoff_grammar(&bi, &tri, BackoffSpec { k: u64::MAX }, &m, &s).unwrap();
        assert_eq!(none, acquire_ngram_grammar(&bi, &m, &s).unwrap());
    }

    #[test]
    fn backoff_tiers_match_hand_partition() {
        let (bi, tri) = tables(MIXED);
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let s = SmoothingSpec::lidstone(0.5, 64).unwrap();
        let g = build_backoff_grammar(&bi, &tri, BackoffSpec::new(2).unwrap(), &m, &s).unwrap();
        // surviving trigrams: <<< X Y, X Y Z, Y Z <<< (twice each)
        let tri_part = g
            .constraints
            .iter()
            .filter(|c| c.conditions.len() == 2)
            .count();
        assert_eq!(tri_part, 9);
        // bigrams of "Y X": (<<<,Y) (Y,X) (X,<<<); none is covered by a
        // surviving trigram context, so all six mirrored constraints remain;
        // every bigram of the first two sentences is covered
        let bi_text: Vec<String> = g
            .constraints
            .iter()
            .filter(|c| c.conditions.len() == 1)
            .map(|c| serialize_grammar(&Grammar::from_constraints(vec![c.clone()])))
            .collect();
        assert_eq!(bi_text.len(), 6, "{bi_text:?}");
        for c in &bi_text {
            assert!(!c.contains("(Z)"), "{c}");
        }
    }

    const HAND: &str = "m\tMD\nr\tVB\n\nm\tMD\nr\tVB\n\nt\tDT\nr\tNN\n\nm\tMD\nx\tRB\n";

    #[test]
    fn hand_weights_from_counts() {
        let c = corpus(HAND);
        let g = parse_grammar("? (VB) (-1 (MD));\n1.5 (NN) (-1 (DT));\nSELECT (DT);").unwrap();
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let (w, diags) = weight_hand_grammar(&g, &c, &m, &SmoothingSpec::Mle).unwrap();
        assert!(diags.is_empty());
        // 8 tokens; VB twice; MD before 3 tokens; joint 2
        let expected = (2.0f64 / 8.0 / (2.0 / 8.0 * 3.0 / 8.0)).log2();
        assert!((w.constraints[0].weight().unwrap() - expected).abs() < 1e-12);
        assert_eq!(w.constraints[1], g.constraints[1]);
        assert_eq!(w.constraints[2], g.constraints[2]);
        let (again, _) = weight_hand_grammar(&w, &c, &m, &SmoothingSpec::Mle).unwrap();
        assert_eq!(again, w);
    }

    #[test]
    fn never_matching_rule() {
        let c = corpus(HAND);
        let g = parse_grammar("? (VB) (-1 (JJ));").unwrap();
        let m = CompatibilityMeasure::new(MeasureKind::MutualInfo);
        let (w, diags) = weight_hand_grammar(&g, &c, &m, &SmoothingSpec::Mle).unwrap();
        assert!(w.constraints.is_empty());
        assert!(diags.iter().any(|d| d.dropped));
        let s = SmoothingSpec::lidstone(0.5, 2).unwrap();
        let (w, diags) = weight_hand_grammar(&g, &c, &m, &s).unwrap();
        assert_eq!(w.constraints.len(), 1);
        assert!(w.constraints[0].weight().unwrap().is_finite());
        assert!(diags.iter().all(|d| !d.dropped));
        assert_eq!(diags.len(), 1);
    }
}
