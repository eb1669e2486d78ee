//! Part-of-speech and shallow-syntax disambiguation by relaxation labelling
//! over a hybrid language model of weighted context constraints.
//!
//! The pieces, bottom up:
//!
//! - [`corpus`]: tagged corpora, lexica, ambiguity classes, synthetic data.
//! - [`cg`]: the weighted Constraint Grammar dialect and its graded matcher.
//! - [`stats`]: probability estimates and compatibility measures.
//! - [`ngram`]: n-gram constraint acquisition, corpus weighting of hand
//!   rules, back-off models.
//! - [`dtree`]: statistical decision trees per ambiguity class, translated
//!   into constraints.
//! - [`relax`]: the relaxation labelling solver.
//! - [`baselines`]: most-likely tag and bigram Viterbi taggers.
//! - [`eval`]: accuracy, precision/recall and the noisy-corpus distortion model.

pub mod baselines;
pub mod cg;
pub mod corpus;
pub mod dtree;
pub mod eval;
pub mod ngram;
pub mod relax;
pub mod stats;
