//! Tagging accuracy, precision and recall of partially disambiguated
//! output, and the accuracy a noisy test corpus reports for a tagger.

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{Corpus, Lexicon, Reading};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("sentence {sentence}: {expected} gold tokens but {got} predictions")]
    LengthMismatch {
        sentence: usize,
        expected: usize,
        got: usize,
    },
    #[error("sentence {sentence}, token {token} has no gold reading")]
    MissingGold { sentence: usize, token: usize },
    #[error("sentence {sentence}, token {token} has an empty prediction set")]
    EmptySet { sentence: usize, token: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub total: usize,
    /// Tokens with two or more candidates (unknown words included).
    pub ambiguous: usize,
    /// Tokens whose output is exactly the gold reading.
    pub correct: usize,
    pub ambiguous_correct: usize,
    pub proposed: usize,
    pub correct_proposed: usize,
    /// Tokens whose output contains the gold reading.
    pub covered: usize,
    pub overall_accuracy: f64,
    /// Absent when no token is ambiguous.
    pub ambiguous_accuracy: Option<f64>,
    pub precision: f64,
    pub recall: f64,
}

impl EvalReport {
    fn from_counts(
        total: usize,
        ambiguous: Option<(usize, usize)>,
        correct: usize,
        proposed: usize,
        correct_proposed: usize,
        covered: usize,
    ) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (amb, amb_correct) = ambiguous.unwrap_or((0, 0));
        EvalReport {
            total,
            ambiguous: amb,
            correct,
            ambiguous_correct: amb_correct,
            proposed,
            correct_proposed,
            covered,
            overall_accuracy: ratio(correct, total),
            ambiguous_accuracy: (amb > 0).then(|| ratio(amb_correct, amb)),
            precision: ratio(correct_proposed, proposed),
            recall: ratio(covered, total),
        }
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("total", self.total.to_string()),
            ("ambiguous", self.ambiguous.to_string()),
            ("correct", self.correct.to_string()),
            ("ambiguous_correct", self.ambiguous_correct.to_string()),
            ("proposed", self.proposed.to_string()),
            ("correct_proposed", self.correct_proposed.to_string()),
            ("covered", self.covered.to_string()),
            ("overall_accuracy", format!("{:.6}", self.overall_accuracy)),
            (
                "ambiguous_accuracy",
                self.ambiguous_accuracy
                    .map_or_else(|| "NA".to_string(), |a| format!("{a:.6}")),
            ),
            ("precision", format!("{:.6}", self.precision)),
            ("recall", format!("{:.6}", self.recall)),
        ]
    }

    /// One `key=value` line per field.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Header line and one data row.
    pub fn to_csv(&self) -> String {
        let fields = self.fields();
        let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        let row: Vec<&str> = fields.iter().map(|(_, v)| v.as_str()).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn gold_of(gold: &Corpus, si: usize, ti: usize) -> Result<&Reading, EvalError> {
    gold.sentences[si].tokens[ti]
        .gold
        .as_ref()
        .ok_or(EvalError::MissingGold {
            sentence: si,
            token: ti,
        })
}

fn check_lengths<T>(gold: &Corpus, predicted: &[Vec<T>]) -> Result<(), EvalError> {
    if predicted.len() != gold.sentences.len() {
        return Err(EvalError::LengthMismatch {
            sentence: predicted.len().min(gold.sentences.len()),
            expected: gold.sentences.len(),
            got: predicted.len(),
        });
    }
    for (si, (s, p)) in gold.sentences.iter().zip(predicted).enumerate() {
        if s.len() != p.len() {
            return Err(EvalError::LengthMismatch {
                sentence: si,
                expected: s.len(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// One reading per token. Ambiguity is judged by the lexicon.
pub fn evaluate_full(gold: &Corpus, predicted: &[Vec<Reading>], lexicon: &Lexicon) -> Result<EvalReport, EvalError> {
    check_lengths(gold, predicted)?;
    let (mut total, mut correct, mut amb, mut amb_correct) = (0, 0, 0, 0);
    for (si, (s, p)) in gold.sentences.iter().zip(predicted).enumerate() {
        for (ti, (t, r)) in s.tokens.iter().zip(p).enumerate() {
            let ok = gold_of(gold, si, ti)? == r;
            total += 1;
            correct += usize::from(ok);
            if lexicon.ambiguity(&t.wordform) >= 2 {
                amb += 1;
                amb_correct += usize::from(ok);
            }
        }
    }
    Ok(EvalReport::from_counts(
        total,
        Some((amb, amb_correct)),
        correct,
        total,
        correct,
        correct,
    ))
}

/// A set of readings per token.
pub fn evaluate_partial(gold: &Corpus, predicted: &[Vec<Vec<Reading>>]) -> Result<EvalReport, EvalError> {
    check_lengths(gold, predicted)?;
    let (mut total, mut correct, mut proposed, mut covered) = (0, 0, 0, 0);
    for (si, (s, p)) in gold.sentences.iter().zip(predicted).enumerate() {
        for (ti, set) in p.iter().enumerate().take(s.len()) {
            if set.is_empty() {
                return Err(EvalError::EmptySet {
                    sentence: si,
                    token: ti,
                });
            }
            let g = gold_of(gold, si, ti)?;
            let hit = set.contains(g);
            total += 1;
            proposed += set.len();
            covered += usize::from(hit);
            correct += usize::from(hit && set.len() == 1);
        }
    }
    Ok(EvalReport::from_counts(total, None, correct, proposed, covered, covered))
}

/// Tagger quality split by whether the test corpus itself is right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionParams {
    /// Fraction of the test corpus that is correctly tagged.
    pub c: f64,
    /// P(tagger right | corpus right).
    pub q1: f64,
    /// P(tagger right | corpus wrong).
    pub q2: f64,
    /// Average candidate count of ambiguous words.
    pub a: f64,
}

impl DistortionParams {
    pub fn new(c: f64, q1: f64, q2: f64, a: f64) -> Result<Self, EvalError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(c) && unit(q1) && unit(q2)) {
            return Err(EvalError::InvalidParams("probabilities must lie in [0,1]".into()));
        }
        if !(a > 1.0) {
            return Err(EvalError::InvalidParams("ambiguity ratio must exceed 1".into()));
        }
        Ok(DistortionParams { c, q1, q2, a })
    }
}

/// Accuracy measured against the noisy corpus: agreement where the corpus
/// is right, plus chance agreement on one of the `a - 1` wrong tags where
/// both corpus and tagger are wrong.
pub fn distortion_model(p: &DistortionParams) -> f64 {
    p.c * p.q1 + (1.0 - p.c) * (1.0 - p.q2) / (p.a - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_lexicon, parse_tagged_corpus, CorpusFormat, DEFAULT_CLOSED_CLASS};

    fn r(t: &str) -> Reading {
        Reading::new(t).unwrap()
    }

    fn setup() -> (Corpus, Lexicon) {
        // 10 tokens; "run" and "can" ambiguous (4 tokens)
        let text = "the\tDT\nrun\tNN\nis\tVBZ\nok\tJJ\n\nrun\tVB\nthe\tDT\ncan\tNN\n\ncan\tMD\ngo\tVB\nhome\tNN\n";
        let c = parse_tagged_corpus(text, CorpusFormat::Tagged).unwrap();
        let lex = build_lexicon(&c, 1, DEFAULT_CLOSED_CLASS);
        (c, lex)
    }

    fn gold(c: &Corpus) -> Vec<Vec<Reading>> {
        c.gold_readings().unwrap()
    }

    #[test]
    fn perfect_output() {
        let (c, lex) = setup();
        let rep = evaluate_full(&c, &gold(&c), &lex).unwrap();
        assert_eq!(rep.overall_accuracy, 1.0);
        assert_eq!(rep.ambiguous_accuracy, Some(1.0));
    }

    #[test]
    fn one_ambiguous_error() {
        let (c, lex) = setup();
        let mut p = gold(&c);
        p[1][2] = r("MD");
        let rep = evaluate_full(&c, &p, &lex).unwrap();
        assert_eq!(rep.total, 10);
        assert_eq!(rep.ambiguous, 4);
        assert!((rep.overall_accuracy - 0.9).abs() < 1e-15);
        assert_eq!(rep.ambiguous_accuracy, Some(0.75));
    }

    #[test]
    fn no_ambiguity_is_absent() {
        let c = parse_tagged_corpus("a\tX\nb\tY\n", CorpusFormat::Tagged).unwrap();
        let lex = build_lexicon(&c, 1, DEFAULT_CLOSED_CLASS);
        let rep = evaluate_full(&c, &gold(&c), &lex).unwrap();
        assert_eq!(rep.ambiguous_accuracy, None);
        assert!(rep.to_kv().contains("ambiguous_accuracy=NA"));
    }

    #[test]
    fn partial_precision_and_recall() {
        let c = parse_tagged_corpus("a\tX\nb\tY\n", CorpusFormat::Tagged).unwrap();
        let rep = evaluate_partial(&c, &[vec![vec![r("X"), r("Z")], vec![r("Y")]]]).unwrap();
        assert_eq!(rep.recall, 1.0);
        assert!((rep.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.overall_accuracy, 0.5);
        let single = evaluate_partial(&c, &[vec![vec![r("X")], vec![r("Q")]]]).unwrap();
        assert_eq!(single.precision, single.recall);
        assert_eq!(single.precision, single.overall_accuracy);
    }

    #[test]
    fn mismatched_lengths() {
        let (c, lex) = setup();
        let mut p = gold(&c);
        p[2].pop();
        assert_eq!(
            evaluate_full(&c, &p, &lex),
            Err(EvalError::LengthMismatch {
                sentence: 2,
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn exports() {
        let (c, lex) = setup();
        let rep = evaluate_full(&c, &gold(&c), &lex).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(rep.to_kv().contains("overall_accuracy=1.000000"));
    }

    #[test]
    fn distortion_endpoints() {
        let p = DistortionParams::new(0.95, 1.0, 0.0, 2.5).unwrap();
        assert!((distortion_model(&p) - 0.98333).abs() < 1e-5);
        let far = DistortionParams::new(0.95, 0.95, 0.95, 1e9).unwrap();
        assert!((distortion_model(&far) - 0.9025).abs() < 1e-9);
        assert!(DistortionParams::new(0.95, 1.0, 0.0, 1.0).is_err());
    }
}
