//! Graded application of constraints against a weighted labelling.
//!
//! A condition contributes the probability mass its pattern receives at the
//! position it resolves to. Star scans stop at the first position where the
//! pattern is present (some matching candidate weighs more than the presence
//! threshold) and abort when a BARRIER pattern is present first. Careful
//! conditions only count when the matched mass reaches `careful_mass`. The
//! focus reading counts as though its weight were 1.

use std::collections::BTreeMap;

use super::{Condition, Constraint, FeaturePattern, Position};
use crate::corpus::{CorpusError, Lexicon, Reading, Sentence, BOUNDARY};

/// A sentence with the candidate readings of every word.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub words: Vec<String>,
    pub candidates: Vec<Vec<Reading>>,
    /// Lexical counts aligned with `candidates`.
    pub counts: Vec<Vec<u64>>,
}

impl Lattice {
    pub fn new(sentence: &Sentence, lexicon: &Lexicon) -> Result<Self, CorpusError> {
        let mut words = Vec::with_capacity(sentence.len());
        let mut candidates = Vec::with_capacity(sentence.len());
        let mut counts = Vec::with_capacity(sentence.len());
        for token in &sentence.tokens {
            let cands = lexicon.candidates(&token.wordform)?;
            words.push(token.wordform.clone());
            counts.push(cands.iter().map(|(_, c)| *c).collect());
            candidates.push(cands.into_iter().map(|(r, _)| r).collect());
        }
        Ok(Lattice {
            words,
            candidates,
            counts,
        })
    }

    /// Each word with the given readings, all counted once.
    pub fn from_parts(words: Vec<String>, candidates: Vec<Vec<Reading>>) -> Self {
        let counts = candidates.iter().map(|c| vec![1; c.len()]).collect();
        Lattice {
            words,
            candidates,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub presence_threshold: f64,
    pub careful_mass: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            presence_threshold: 0.0,
            careful_mass: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub applicable: bool,
    pub context_weight: f64,
}

impl MatchResult {
    const NONE: MatchResult = MatchResult {
        applicable: false,
        context_weight: 0.0,
    };
}

struct View<'a> {
    sets: &'a BTreeMap<String, FeaturePattern>,
    lattice: &'a Lattice,
    weights: &'a [Vec<f64>],
    focus: usize,
    focus_reading: usize,
    config: MatchConfig,
}

impl View<'_> {
    fn in_range(&self, pos: isize) -> bool {
        pos >= 0 && (pos as usize) < self.lattice.len()
    }

    fn boundary_matches(&self, pattern: &FeaturePattern) -> bool {
        pattern.matches(self.sets, BOUNDARY, &Reading::boundary())
    }

    /// Weights of matching candidates at `pos`, clipped to 1.
    fn mass(&self, pattern: &FeaturePattern, pos: isize) -> f64 {
        if !self.in_range(pos) {
            return if self.boundary_matches(pattern) {
                1.0
            } else {
                0.0
            };
        }
        let p = pos as usize;
        let word = &self.lattice.words[p];
        let mass: f64 = self.lattice.candidates[p]
            .iter()
            .enumerate()
            .filter(|(_, r)| pattern.matches(self.sets, word, r))
            .map(|(k, _)| {
                if p == self.focus && k == self.focus_reading {
                    1.0
                } else {
                    self.weights[p][k]
                }
            })
            .sum();
        mass.min(1.0)
    }

    fn present(&self, pattern: &FeaturePattern, pos: isize) -> bool {
        if !self.in_range(pos) {
            return self.boundary_matches(pattern);
        }
        let p = pos as usize;
        let word = &self.lattice.words[p];
        self.lattice.candidates[p].iter().enumerate().any(|(k, r)| {
            let w = if p == self.focus && k == self.focus_reading {
                1.0
            } else {
                self.weights[p][k]
            };
            w > self.config.presence_threshold && pattern.matches(self.sets, word, r)
        })
    }

    fn careful_mass(&self, pattern: &FeaturePattern, pos: isize) -> f64 {
        let m = self.mass(pattern, pos);
        if m >= self.config.careful_mass {
            m
        } else {
            0.0
        }
    }

    fn raw_mass(&self, cond: &Condition) -> f64 {
        let focus = self.focus as isize;
        match cond.position {
            Position::Fixed(offset) => {
                let pos = focus + offset as isize;
                if cond.careful {
                    self.careful_mass(&cond.pattern, pos)
                } else {
                    self.mass(&cond.pattern, pos)
                }
            }
            Position::Scan(start) => {
                let step: isize = if start < 0 { -1 } else { 1 };
                let n = self.lattice.len() as isize;
                let mut pos = focus + start as isize;
                // one virtual boundary token on each side ends the scan
                while (-1..=n).contains(&pos) {
                    let found = if cond.careful {
                        self.careful_mass(&cond.pattern, pos) > 0.0
                    } else {
                        self.present(&cond.pattern, pos)
                    };
                    if found {
                        return self.mass(&cond.pattern, pos);
                    }
                    if cond.barrier.as_ref().is_some_and(|b| self.present(b, pos)) {
                        return 0.0;
                    }
                    if !self.in_range(pos) {
                        break;
                    }
                    pos += step;
                }
                0.0
            }
        }
    }

    fn factor(&self, cond: &Condition) -> f64 {
        let m = self.raw_mass(cond);
        if cond.negated {
            1.0 - m
        } else {
            m
        }
    }
}

/// Context weight of `conditions` around `(focus, focus_reading)`, ignoring
/// the target.
pub fn match_conditions(
    conditions: &[Condition],
    sets: &BTreeMap<String, FeaturePattern>,
    lattice: &Lattice,
    weights: &[Vec<f64>],
    focus: usize,
    focus_reading: usize,
    config: MatchConfig,
) -> MatchResult {
    let view = View {
        sets,
        lattice,
        weights,
        focus,
        focus_reading,
        config,
    };
    let mut product = 1.0;
    for cond in conditions {
        product *= view.factor(cond);
        if product <= 0.0 {
            return MatchResult::NONE;
        }
    }
    MatchResult {
        applicable: true,
        context_weight: product.clamp(0.0, 1.0),
    }
}

pub fn match_constraint(
    c: &Constraint,
    sets: &BTreeMap<String, FeaturePattern>,
    lattice: &Lattice,
    weights: &[Vec<f64>],
    focus: usize,
    focus_reading: usize,
    config: MatchConfig,
) -> MatchResult {
    let reading = &lattice.candidates[focus][focus_reading];
    if !c.target.matches(sets, &lattice.words[focus], reading) {
        return MatchResult::NONE;
    }
    match_conditions(
        &c.conditions,
        sets,
        lattice,
        weights,
        focus,
        focus_reading,
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::super::parse_grammar;
    use super::*;

    fn lattice(spec: &[(&str, &[&str])]) -> Lattice {
        Lattice::from_parts(
            spec.iter().map(|(w, _)| w.to_string()).collect(),
            spec.iter()
                .map(|(_, tags)| tags.iter().map(|t| Reading::new(t).unwrap()).collect())
                .collect(),
        )
    }

    fn run(
        grammar: &str,
        lat: &Lattice,
        weights: &[Vec<f64>],
        focus: usize,
        reading: usize,
    ) -> MatchResult {
        let g = parse_grammar(grammar).unwrap();
        match_constraint(
            &g.constraints[0],
            &g.sets,
            lat,
            weights,
            focus,
            reading,
            MatchConfig::default(),
        )
    }

    #[test]
    fn certain_previous_modal() {
        let lat = lattice(&[("can", &["MD"]), ("run", &["NN", "VB"])]);
        let w = vec![vec![1.0], vec![0.5, 0.5]];
        let r = run("4.8 (VB) (-1 (MD));", &lat, &w, 1, 1);
        assert!(r.applicable);
        assert_eq!(r.context_weight, 1.0);
        let r = run("4.8 (VB) (-1 (MD));", &lat, &w, 1, 0);
        assert_eq!(r, MatchResult::NONE);
    }

    #[test]
    fn product_of_two_masses() {
        let lat = lattice(&[("a", &["X", "Z"]), ("b", &["T"]), ("c", &["Y", "Z"])]);
        let w = vec![vec![0.5, 0.5], vec![1.0], vec![0.8, 0.2]];
        let r = run("1 (T) (-1 (X)) (1 (Y));", &lat, &w, 1, 0);
        assert!(r.applicable);
        assert!((r.context_weight - 0.40).abs() < 1e-12);
    }

    #[test]
    fn barrier_blocks_scan() {
        let text = "SETS\nVAUX = (\"has\");\n10 (VBN) (*-1 VAUX BARRIER (VBN));";
        let lat = lattice(&[
            ("has", &["VBZ"]),
            ("been", &["VBN"]),
            ("seen", &["VBN", "VBD"]),
        ]);
        let w = vec![vec![1.0], vec![1.0], vec![0.5, 0.5]];
        assert_eq!(run(text, &lat, &w, 2, 0), MatchResult::NONE);
        let lat = lattice(&[
            ("has", &["VBZ"]),
            ("really", &["RB"]),
            ("seen", &["VBN", "VBD"]),
        ]);
        let w = vec![vec![1.0], vec![1.0], vec![0.5, 0.5]];
        assert_eq!(run(text, &lat, &w, 2, 0).context_weight, 1.0);
    }

    #[test]
    fn out_of_range_offsets_see_the_boundary() {
        let lat = lattice(&[("the", &["DT"])]);
        let w = vec![vec![1.0]];
        assert_eq!(
            run("1 (DT) (-1 <<<) (1 <<<);", &lat, &w, 0, 0).context_weight,
            1.0
        );
        assert_eq!(run("1 (DT) (-3 <<<);", &lat, &w, 0, 0).context_weight, 1.0);
        assert!(!run("1 (DT) (1 (NN));", &lat, &w, 0, 0).applicable);
    }

    #[test]
    fn careful_scan_to_boundary() {
        let g = "REMOVE (@>N) (*1C <<< OR (@V) BARRIER (@NH));";
        let lat = lattice(&[("x", &["@>N", "@NH"]), ("y", &["@V", "@NH"])]);
        // ambiguous @V at 1 is not careful, the scan passes it and hits the
        // @NH barrier
        let w = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!(!run(g, &lat, &w, 0, 0).applicable);
        let w = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        assert_eq!(run(g, &lat, &w, 0, 0).context_weight, 1.0);
        let lat = lattice(&[("x", &["@>N", "@NH"]), ("y", &["@>N"])]);
        let w = vec![vec![0.5, 0.5], vec![1.0]];
        assert_eq!(run(g, &lat, &w, 0, 0).context_weight, 1.0);
    }

    #[test]
    fn negated_focus_condition_uses_focus_as_certain() {
        let g = "REMOVE (@>N) (NOT 0 (DET));";
        let lat = lattice(&[("x", &["@>N", "DET"])]);
        let w = vec![vec![0.7, 0.3]];
        let r = run(g, &lat, &w, 0, 0);
        assert!((r.context_weight - 0.7).abs() < 1e-12);
        let g = "1 (DET) (NOT 0 (DET));";
        assert!(!run(g, &lat, &w, 0, 1).applicable);
    }

    #[test]
    fn wordform_tests() {
        let lat = lattice(&[("As", &["IN", "RB"]), ("good", &["JJ"])]);
        let w = vec![vec![0.5, 0.5], vec![1.0]];
        let r = run("2.366 (RB) (0 \"as\" \"As\") (1 JJ);", &lat, &w, 0, 1);
        assert_eq!(r.context_weight, 1.0);
    }
}
