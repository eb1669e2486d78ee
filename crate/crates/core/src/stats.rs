//! Event counts, smoothed probability estimates and the compatibility
//! measures that turn them into constraint weights.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid smoothing: {0}")]
    InvalidSmoothing(String),
    #[error("log base must be a finite real > 1, got {0}")]
    InvalidLogBase(f64),
    #[error("{measure} is undefined here: {reason}")]
    DegenerateDistribution {
        measure: MeasureKind,
        reason: &'static str,
    },
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
}

/// Occurrence counts of a focus event H, a context event E and their joint
/// occurrence, out of `total` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventCounts {
    pub n_h: u64,
    pub n_e: u64,
    pub n_he: u64,
    pub total: u64,
}

impl EventCounts {
    pub fn new(n_h: u64, n_e: u64, n_he: u64, total: u64) -> Result<Self, StatsError> {
        let c = EventCounts {
            n_h,
            n_e,
            n_he,
            total,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        let err = |m: String| Err(StatsError::InvalidCounts(m));
        if self.total == 0 {
            return err("total must be positive".into());
        }
        if self.n_he > self.n_h.min(self.n_e) {
            return err(format!(
                "joint count {} exceeds a marginal ({}, {})",
                self.n_he, self.n_h, self.n_e
            ));
        }
        if self.n_h > self.total || self.n_e > self.total {
            return err(format!(
                "marginals ({}, {}) exceed total {}",
                self.n_h, self.n_e, self.total
            ));
        }
        if self.n_h + self.n_e - self.n_he > self.total {
            return err(format!(
                "union of H and E ({}) exceeds total {}",
                self.n_h + self.n_e - self.n_he,
                self.total
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothingSpec {
    Mle,
    /// Adds `lambda` to every count; `vocab_size` is the number of outcomes
    /// sharing the probability mass.
    Lidstone {
        lambda: f64,
        vocab_size: u64,
    },
}

impl SmoothingSpec {
    pub const DEFAULT_LAMBDA: f64 = 0.5;
    /// Each event either occurs in a window or does not.
    pub const DEFAULT_VOCAB: u64 = 2;

    pub fn lidstone(lambda: f64, vocab_size: u64) -> Result<Self, StatsError> {
        let s = SmoothingSpec::Lidstone { lambda, vocab_size };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StatsError> {
        match *self {
            SmoothingSpec::Mle => Ok(()),
            SmoothingSpec::Lidstone { lambda, vocab_size } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    Err(StatsError::InvalidSmoothing(format!(
                        "lambda must be positive, got {lambda}"
                    )))
                } else if vocab_size == 0 {
                    Err(StatsError::InvalidSmoothing(
                        "vocabulary size must be positive".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn prob(&self, n: u64, total: u64) -> f64 {
        match *self {
            SmoothingSpec::Mle => n as f64 / total as f64,
            SmoothingSpec::Lidstone { lambda, vocab_size } => {
                (n as f64 + lambda) / (total as f64 + lambda * vocab_size as f64)
            }
        }
    }
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec::Lidstone {
            lambda: Self::DEFAULT_LAMBDA,
            vocab_size: Self::DEFAULT_VOCAB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probabilities {
    pub p_h: f64,
    pub p_e: f64,
    pub p_he: f64,
}

pub fn estimate(counts: &EventCounts, s: &SmoothingSpec) -> Probabilities {
    Probabilities {
        p_h: s.prob(counts.n_h, counts.total),
        p_e: s.prob(counts.n_e, counts.total),
        p_he: s.prob(counts.n_he, counts.total),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureKind {
    CondProb,
    MutualInfo,
    AssocScore,
    RelEntropy,
    Correlation,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 5] = [
        MeasureKind::CondProb,
        MeasureKind::MutualInfo,
        MeasureKind::AssocScore,
        MeasureKind::RelEntropy,
        MeasureKind::Correlation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::CondProb => "cond-prob",
            MeasureKind::MutualInfo => "mi",
            MeasureKind::AssocScore => "assoc",
            MeasureKind::RelEntropy => "rel-entropy",
            MeasureKind::Correlation => "correlation",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasureKind {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MeasureKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| StatsError::UnknownMeasure(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityMeasure {
    pub kind: MeasureKind,
    pub log_base: f64,
}

impl CompatibilityMeasure {
    pub fn new(kind: MeasureKind) -> Self {
        CompatibilityMeasure {
            kind,
            log_base: 2.0,
        }
    }

    pub fn with_log_base(kind: MeasureKind, log_base: f64) -> Result<Self, StatsError> {
        if !(log_base > 1.0 && log_base.is_finite()) {
            return Err(StatsError::InvalidLogBase(log_base));
        }
        Ok(CompatibilityMeasure { kind, log_base })
    }

    fn log(&self, x: f64) -> f64 {
        x.ln() / self.log_base.ln()
    }
}

impl Default for CompatibilityMeasure {
    fn default() -> Self {
        CompatibilityMeasure::new(MeasureKind::MutualInfo)
    }
}

pub fn compatibility(
    counts: &EventCounts,
    m: &CompatibilityMeasure,
    s: &SmoothingSpec,
) -> Result<f64, StatsError> {
    counts.validate()?;
    s.validate()?;
    compatibility_from_probs(&estimate(counts, s), m)
}

pub fn compatibility_from_probs(
    p: &Probabilities,
    m: &CompatibilityMeasure,
) -> Result<f64, StatsError> {
    let Probabilities { p_h, p_e, p_he } = *p;
    let degenerate = |reason| {
        Err(StatsError::DegenerateDistribution {
            measure: m.kind,
            reason,
        })
    };
    let mi = || m.log(p_he / (p_h * p_e));
    match m.kind {
        MeasureKind::CondProb => {
            if p_e <= 0.0 {
                return degenerate("the context never occurs");
            }
            Ok((p_he / p_e).min(1.0))
        }
        MeasureKind::MutualInfo => {
            if p_he <= 0.0 {
                return degenerate("the joint event never occurs");
            }
            Ok(mi())
        }
        MeasureKind::AssocScore => {
            if p_he <= 0.0 {
                return degenerate("the joint event never occurs");
            }
            Ok((p_he / p_e) * mi())
        }
        MeasureKind::RelEntropy => {
            let cells = [
                (p_he, p_h, p_e),
                (p_h - p_he, p_h, 1.0 - p_e),
                (p_e - p_he, 1.0 - p_h, p_e),
                (1.0 - p_h - p_e + p_he, 1.0 - p_h, 1.0 - p_e),
            ];
            let sum: f64 = cells
                .iter()
                .filter(|(joint, _, _)| *joint > 0.0)
                .map(|&(joint, px, py)| joint * m.log(joint / (px * py)))
                .sum();
            Ok(sum.max(0.0))
        }
        MeasureKind::Correlation => {
            let var = (p_e - p_e * p_e) * (p_h - p_h * p_h);
            if var <= 0.0 {
                return degenerate("a marginal probability is 0 or 1");
            }
            Ok(((p_he - p_e * p_h) / var.sqrt()).clamp(-1.0, 1.0))
        }
    }
}
