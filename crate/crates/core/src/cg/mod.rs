//! Extended Constraint Grammar: weighted context constraints alongside the
//! classical SELECT/REMOVE rules.
//!
//! A constraint names a target pattern tested on the focus reading and a
//! list of positional conditions on the neighbouring words. Patterns are kept
//! in disjunctive normal form: a list of alternatives, each a conjunction of
//! atoms.

mod matcher;
mod parser;
mod serialize;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use matcher::{match_conditions, match_constraint, Lattice, MatchConfig, MatchResult};
pub use parser::parse_grammar;
pub use serialize::serialize_grammar;

use crate::corpus::Reading;

/// Default compatibility for SELECT rules.
pub const DEFAULT_STRICT_SELECT: f64 = 60.0;
/// Default compatibility for REMOVE rules; weaker so SELECT wins a tie.
pub const DEFAULT_STRICT_REMOVE: f64 = -50.0;

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("{line}:{col}: syntax error: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error("{line}:{col}: unknown set {name:?}")]
    UnknownSet {
        name: String,
        line: usize,
        col: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    /// Matches any tag-like feature value of the reading (everything but
    /// the lemma).
    Tag(String),
    /// Matches the token's surface form.
    Word(String),
    Feature {
        name: String,
        value: String,
    },
    /// Reference to a named pattern of the owning grammar.
    Set(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePattern {
    pub disjuncts: Vec<Vec<Atom>>,
}

impl FeaturePattern {
    pub fn tag(tag: &str) -> Self {
        FeaturePattern {
            disjuncts: vec![vec![Atom::Tag(tag.to_string())]],
        }
    }

    /// One alternative per tag.
    pub fn any_tag<S: AsRef<str>>(tags: &[S]) -> Self {
        FeaturePattern {
            disjuncts: tags
                .iter()
                .map(|t| vec![Atom::Tag(t.as_ref().to_string())])
                .collect(),
        }
    }

    pub fn any_word<S: AsRef<str>>(words: &[S]) -> Self {
        FeaturePattern {
            disjuncts: words
                .iter()
                .map(|w| vec![Atom::Word(w.as_ref().to_string())])
                .collect(),
        }
    }

    /// Whether the pattern holds for `reading` of a token spelled `wordform`.
    pub fn matches(
        &self,
        sets: &BTreeMap<String, FeaturePattern>,
        wordform: &str,
        reading: &Reading,
    ) -> bool {
        self.disjuncts.iter().any(|conj| {
            conj.iter()
                .all(|atom| atom.matches(sets, wordform, reading))
        })
    }

    /// The single tag of a one-atom pattern, if it is one.
    pub fn as_single_tag(&self) -> Option<&str> {
        match self.disjuncts.as_slice() {
            [conj] => match conj.as_slice() {
                [Atom::Tag(t)] => Some(t),
                _ => None,
            },
            _ => None,
        }
    }
}

impl Atom {
    fn matches(
        &self,
        sets: &BTreeMap<String, FeaturePattern>,
        wordform: &str,
        reading: &Reading,
    ) -> bool {
        match self {
            Atom::Tag(tag) => reading
                .features()
                .iter()
                .any(|(name, value)| name != "lemma" && value == tag),
            Atom::Word(word) => wordform == word,
            Atom::Feature { name, value } if name == "wordform" => wordform == value,
            Atom::Feature { name, value } => reading.get(name) == Some(value.as_str()),
            Atom::Set(name) => sets
                .get(name)
                .is_some_and(|p| p.matches(sets, wordform, reading)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Position {
    /// Fixed offset from the focus word.
    Fixed(i32),
    /// Scan starting at the offset and moving away from the focus in the
    /// offset's direction.
    Scan(i32),
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Position::Fixed(o) => write!(f, "{o}"),
            Position::Scan(o) => write!(f, "*{o}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub position: Position,
    pub careful: bool,
    pub negated: bool,
    pub pattern: FeaturePattern,
    /// Only with [`Position::Scan`].
    pub barrier: Option<FeaturePattern>,
}

impl Condition {
    pub fn at(offset: i32, pattern: FeaturePattern) -> Self {
        Condition {
            position: Position::Fixed(offset),
            careful: false,
            negated: false,
            pattern,
            barrier: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintKind {
    Weighted(f64),
    /// Written `?`; the weight is to be estimated from a corpus.
    Unweighted,
    Select,
    Remove,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub target: FeaturePattern,
    pub conditions: Vec<Condition>,
}

impl Constraint {
    pub fn weighted(weight: f64, target: FeaturePattern, conditions: Vec<Condition>) -> Self {
        Constraint {
            kind: ConstraintKind::Weighted(weight),
            target,
            conditions,
        }
    }

    pub fn weight(&self) -> Option<f64> {
        match self.kind {
            ConstraintKind::Weighted(w) => Some(w),
            _ => None,
        }
    }

    /// Sorted condition positions; constraints sharing it involve the same
    /// sentence-relative variables.
    pub fn position_key(&self) -> Vec<Position> {
        let mut key: Vec<_> = self.conditions.iter().map(|c| c.position).collect();
        key.sort();
        key
    }
}

/// Source location of a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub sets: BTreeMap<String, FeaturePattern>,
    pub constraints: Vec<Constraint>,
    pub strict_select: f64,
    pub strict_remove: f64,
    /// One entry per constraint when parsed from text; not part of equality.
    pub spans: Vec<Span>,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            sets: BTreeMap::new(),
            constraints: Vec::new(),
            strict_select: DEFAULT_STRICT_SELECT,
            strict_remove: DEFAULT_STRICT_REMOVE,
            spans: Vec::new(),
        }
    }
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.sets == other.sets
            && self.constraints == other.constraints
            && self.strict_select == other.strict_select
            && self.strict_remove == other.strict_remove
    }
}

impl Grammar {
    pub fn from_constraints(constraints: Vec<Constraint>) -> Self {
        Grammar {
            constraints,
            ..Grammar::default()
        }
    }

    pub fn span(&self, idx: usize) -> Option<Span> {
        self.spans.get(idx).copied()
    }

    /// Concatenates constraint sets; sets of later grammars win on name clashes.
    pub fn extend(&mut self, other: Grammar) {
        self.sets.extend(other.sets);
        let pad = self.constraints.len().saturating_sub(self.spans.len());
        self.spans
            .extend(std::iter::repeat(Span::default()).take(pad));
        self.spans.extend(other.spans);
        self.constraints.extend(other.constraints);
    }

    pub fn is_fully_weighted(&self) -> bool {
        self.constraints
            .iter()
            .all(|c| matches!(c.kind, ConstraintKind::Weighted(_)))
    }

    /// Largest absolute weight among weighted constraints.
    pub fn max_abs_weight(&self) -> f64 {
        self.constraints
            .iter()
            .filter_map(Constraint::weight)
            .fold(0.0, |m, w| m.max(w.abs()))
    }
}

/// Rewrites SELECT and REMOVE as weighted constraints with the grammar's
/// strict values. SELECT only raises its own target; competing readings lose
/// weight through normalization in the updating step.
pub fn desugar_strict(g: &Grammar) -> Grammar {
    let mut out = g.clone();
    for c in &mut out.constraints {
        c.kind = match c.kind {
            ConstraintKind::Select => ConstraintKind::Weighted(g.strict_select),
            ConstraintKind::Remove => ConstraintKind::Weighted(g.strict_remove),
            other => other,
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desugar_maps_strict_rules() {
        let g = parse_grammar("SELECT (@NH);\nREMOVE (@>N) (1 (CC));\n3.5 (NN);").unwrap();
        let d = desugar_strict(&g);
        assert_eq!(d.constraints[0].kind, ConstraintKind::Weighted(60.0));
        assert_eq!(d.constraints[1].kind, ConstraintKind::Weighted(-50.0));
        assert_eq!(d.constraints[2].kind, ConstraintKind::Weighted(3.5));
        assert_eq!(d.constraints.len(), g.constraints.len());
        assert_eq!(desugar_strict(&d), d);
    }

    #[test]
    fn desugar_without_strict_rules_is_identity() {
        let g = parse_grammar("1.5 (DT) (1 (NN));").unwrap();
        assert_eq!(desugar_strict(&g), g);
    }

    #[test]
    fn tag_atoms_ignore_lemma() {
        let sets = BTreeMap::new();
        let r = Reading::with_features([("pos", "NN"), ("lemma", "VB"), ("syn", "@NH")]).unwrap();
        assert!(FeaturePattern::tag("NN").matches(&sets, "x", &r));
        assert!(FeaturePattern::tag("@NH").matches(&sets, "x", &r));
        assert!(!FeaturePattern::tag("VB").matches(&sets, "x", &r));
        let lemma = FeaturePattern {
            disjuncts: vec![vec![Atom::Feature {
                name: "lemma".into(),
                value: "VB".into(),
            }]],
        };
        assert!(lemma.matches(&sets, "x", &r));
    }

    #[test]
    fn position_key_is_order_free() {
        let a = parse_grammar("1 (A) (-1 (B)) (1 (C));").unwrap();
        let b = parse_grammar("1 (A) (1 (C)) (-1 (B));").unwrap();
        assert_eq!(
            a.constraints[0].position_key(),
            b.constraints[0].position_key()
        );
    }
}
