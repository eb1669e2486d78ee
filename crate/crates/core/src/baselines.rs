//! Reference taggers: the most likely reading per word, and exact decoding
//! of the bigram sequence model by dynamic programming or by enumeration.
//!
//! Sequences are scored as the start probability of the first tag times,
//! per word, the lexical probability of its reading and the transition
//! from the previous tag. Among sequences within `SCORE_TOLERANCE` (in log
//! space) of the best, the one whose pos tags come first lexicographically
//! wins.

use thiserror::Error;

use crate::cg::Lattice;
use crate::corpus::{CorpusError, Lexicon, Reading, Sentence};
use crate::relax::{lexical_prob, SequenceModel};

/// Alias: the baseline HMM shares the relaxation sequence model.
pub type HmmModel = SequenceModel;

/// Log-score slack under which two sequences count as tied.
pub const SCORE_TOLERANCE: f64 = 1e-9;

/// Largest number of sequences brute force will enumerate.
pub const MAX_SEARCH_SPACE: u128 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("{0} candidate sequences exceed the enumeration limit")]
    SearchSpaceTooLarge(u128),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Highest-count reading per word, ties to the smaller pos; unknown words
/// get the first open-class reading.
pub fn most_likely_tag(sentence: &Sentence, lexicon: &Lexicon) -> Result<Vec<Reading>, CorpusError> {
    sentence
        .tokens
        .iter()
        .map(|t| {
            let cands = lexicon.candidates(&t.wordform)?;
            if !lexicon.is_known(&t.wordform) {
                return Ok(cands[0].0.clone());
            }
            let best = cands
                .iter()
                .max_by(|(ra, ca), (rb, cb)| ca.cmp(cb).then_with(|| rb.pos().cmp(ra.pos()).then_with(|| rb.cmp(ra))))
                .expect("nonempty candidates");
            Ok(best.0.clone())
        })
        .collect()
}

/// Candidate indices of word `i` in tie-break order.
fn ordered(lattice: &Lattice, i: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lattice.candidates[i].len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&lattice.candidates[i][a], &lattice.candidates[i][b]);
        ra.pos().cmp(rb.pos()).then_with(|| ra.cmp(rb))
    });
    idx
}

fn local(model: &SequenceModel, lattice: &Lattice, i: usize, prev: Option<usize>, j: usize) -> f64 {
    let tag = lattice.candidates[i][j].pos();
    let trans = match prev {
        None => model.start_prob(tag),
        Some(p) => model.transition_prob(lattice.candidates[i - 1][p].pos(), tag),
    };
    trans.ln() + lexical_prob(lattice, i, j).ln()
}

/// Best sequence of candidate indices under the bigram model.
pub fn viterbi_lattice(lattice: &Lattice, model: &SequenceModel) -> Vec<usize> {
    let n = lattice.len();
    if n == 0 {
        return Vec::new();
    }
    // best[i][j]: best log score of words i+1.. given reading j at i
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); n];
    best[n - 1] = vec![0.0; lattice.candidates[n - 1].len()];
    for i in (0..n - 1).rev() {
        best[i] = (0..lattice.candidates[i].len())
            .map(|j| {
                (0..lattice.candidates[i + 1].len())
                    .map(|k| local(model, lattice, i + 1, Some(j), k) + best[i + 1][k])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    let total = |i: usize, prev: Option<usize>, j: usize| local(model, lattice, i, prev, j) + best[i][j];
    let target = (0..lattice.candidates[0].len())
        .map(|j| total(0, None, j))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(n);
    let mut prefix = 0.0;
    let mut prev = None;
    for i in 0..n {
        let order = ordered(lattice, i);
        let pick = order
            .iter()
            .copied()
            .find(|&j| prefix + total(i, prev, j) >= target - SCORE_TOLERANCE)
            .unwrap_or(order[0]);
        prefix += local(model, lattice, i, prev, pick);
        out.push(pick);
        prev = Some(pick);
    }
    out
}

/// Exhaustive search with the same scoring and tie rule as
/// [`viterbi_lattice`].
pub fn brute_force_lattice(lattice: &Lattice, model: &SequenceModel) -> Result<Vec<usize>, BaselineError> {
    let space: u128 = lattice
        .candidates
        .iter()
        .map(|c| c.len() as u128)
        .try_fold(1u128, |acc, m| acc.checked_mul(m).filter(|&x| x <= MAX_SEARCH_SPACE).ok_or(acc.saturating_mul(m)))
        .map_err(BaselineError::SearchSpaceTooLarge)?;
    let n = lattice.len();
    let orders: Vec<Vec<usize>> = (0..n).map(|i| ordered(lattice, i)).collect();
    let mut scored: Vec<(f64, Vec<usize>)> = Vec::with_capacity(space as usize);
    let mut digits = vec![0usize; n];
    loop {
        let seq: Vec<usize> = (0..n).map(|i| orders[i][digits[i]]).collect();
        let score = (0..n)
            .map(|i| local(model, lattice, i, i.checked_sub(1).map(|p| seq[p]), seq[i]))
            .sum::<f64>();
        scored.push((score, seq));
        let mut k = n;
        loop {
            if k == 0 {
                let top = scored.iter().map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
                // enumeration runs in tie-break order, so the first near-best wins
                let (_, seq) = scored
                    .into_iter()
                    .find(|(s, _)| *s >= top - SCORE_TOLERANCE)
                    .expect("nonempty search space");
                return Ok(seq);
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < orders[k].len() {
                break;
            }
            digits[k] = 0;
        }
    }
}

pub fn viterbi_tag(sentence: &Sentence, lexicon: &Lexicon, model: &HmmModel) -> Result<Vec<Reading>, BaselineError> {
    let lattice = Lattice::new(sentence, lexicon)?;
    Ok(readings(&lattice, &viterbi_lattice(&lattice, model)))
}

pub fn brute_force_tag(sentence: &Sentence, lexicon: &Lexicon, model: &HmmModel) -> Result<Vec<Reading>, BaselineError> {
    let lattice = Lattice::new(sentence, lexicon)?;
    Ok(readings(&lattice, &brute_force_lattice(&lattice, model)?))
}

fn readings(lattice: &Lattice, seq: &[usize]) -> Vec<Reading> {
    seq.iter()
        .enumerate()
        .map(|(i, &j)| lattice.candidates[i][j].clone())
        .collect()
}
