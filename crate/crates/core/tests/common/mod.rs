#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxtag::cg::Lattice;
use relaxtag::corpus::{parse_hmm_spec, HmmSpec, Reading};
use relaxtag::relax::SequenceModel;

/// A small first-order generator with several ambiguous words.
pub fn small_spec() -> HmmSpec {
    parse_hmm_spec(
        "[start]\nDT 0.5\nNN 0.2\nPR 0.3\n\
         [transitions]\n\
         DT NN 0.7\nDT JJ 0.3\n\
         JJ NN 0.8\nJJ JJ 0.2\n\
         NN VB 0.5\nNN NN 0.2\nNN IN 0.3\n\
         PR VB 0.9\nPR NN 0.1\n\
         VB DT 0.5\nVB IN 0.3\nVB PR 0.2\n\
         IN DT 0.7\nIN NN 0.3\n\
         [emissions]\n\
         DT the 0.6\nDT a 0.4\n\
         NN run 0.2\nNN can 0.2\nNN dog 0.3\nNN fly 0.3\n\
         VB run 0.3\nVB can 0.2\nVB fly 0.2\nVB like 0.3\n\
         JJ fast 0.6\nJJ like 0.4\n\
         IN like 0.3\nIN in 0.7\n\
         PR they 0.5\nPR we 0.5\n\
         [length]\nmin 2\nmax 8\n",
    )
    .unwrap()
}

pub fn tag_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("T{k}")).collect()
}

fn random_row(rng: &mut ChaCha8Rng, tags: &[String]) -> BTreeMap<String, f64> {
    // strictly positive, as a smoothed model would be
    let raw: Vec<f64> = tags.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    tags.iter().cloned().zip(raw.iter().map(|x| x / total)).collect()
}

/// A random smoothed bigram model over `tags`.
pub fn random_model(rng: &mut ChaCha8Rng, tags: &[String]) -> SequenceModel {
    SequenceModel {
        start: random_row(rng, tags),
        transitions: tags.iter().map(|t| (t.clone(), random_row(rng, tags))).collect(),
        floor: 1e-6,
    }
}

/// A random lattice of `len` words, each with 1..=`max_cands` distinct tags
/// and random positive lexical counts.
pub fn random_lattice(rng: &mut ChaCha8Rng, tags: &[String], len: usize, max_cands: usize) -> Lattice {
    let mut words = Vec::new();
    let mut candidates = Vec::new();
    let mut counts = Vec::new();
    for k in 0..len {
        let m = rng.gen_range(1..=max_cands.min(tags.len()));
        let mut pool: Vec<&String> = tags.iter().collect();
        let mut cands = Vec::new();
        for _ in 0..m {
            let pick = rng.gen_range(0..pool.len());
            cands.push(Reading::new(pool.swap_remove(pick)).unwrap());
        }
        words.push(format!("w{k}"));
        counts.push((0..m).map(|_| rng.gen_range(1..20)).collect());
        candidates.push(cands);
    }
    Lattice {
        words,
        candidates,
        counts,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
