use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relaxtag::cg::MatchConfig;
use relaxtag::corpus::DEFAULT_CLOSED_CLASS;
use relaxtag::dtree::{Selector, TreeParams};
use relaxtag::relax::{DecodeMode, InitMode, RelaxParams, SupportFn, UpdateFn};
use relaxtag::stats::{CompatibilityMeasure, MeasureKind, SmoothingSpec};

/// Train, apply and evaluate relaxation-labelling taggers.
#[derive(Parser, Debug)]
#[command(name = "relaxtag", version, about)]
pub struct Cli {
    /// key=value file supplying defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 picks one per core
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Acquire bigram, trigram or back-off constraints from a tagged corpus
    TrainNgrams(TrainNgramsArgs),
    /// Learn decision trees per ambiguity class and emit their constraints
    LearnTrees(LearnTreesArgs),
    /// Replace '?' weights of a hand-written grammar with corpus estimates
    WeightGrammar(WeightGrammarArgs),
    /// Disambiguate a token file
    Tag(TagArgs),
    /// Score predicted against gold readings
    Eval(EvalArgs),
    /// Iterations and tuning accuracy over a grid of normalization factors
    SweepNorm(SweepNormArgs),
    /// Sample a tagged corpus from a generative model file
    GenSynthetic(GenSyntheticArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureArg {
    CondProb,
    Mi,
    Assoc,
    RelEntropy,
    Correlation,
}

impl From<MeasureArg> for MeasureKind {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::CondProb => MeasureKind::CondProb,
            MeasureArg::Mi => MeasureKind::MutualInfo,
            MeasureArg::Assoc => MeasureKind::AssocScore,
            MeasureArg::RelEntropy => MeasureKind::RelEntropy,
            MeasureArg::Correlation => MeasureKind::Correlation,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingArg {
    Mle,
    Lidstone,
}

#[derive(Args, Debug, Clone)]
pub struct EstimationArgs {
    /// Compatibility measure
    #[arg(long, value_enum, default_value_t = MeasureArg::Mi)]
    pub measure: MeasureArg,
    /// Probability estimator
    #[arg(long, value_enum, default_value_t = SmoothingArg::Lidstone)]
    pub smoothing: SmoothingArg,
    /// Lidstone additive constant
    #[arg(long, default_value_t = SmoothingSpec::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Lidstone number of outcomes
    #[arg(long, default_value_t = SmoothingSpec::DEFAULT_VOCAB)]
    pub vocab: u64,
}

impl EstimationArgs {
    pub fn measure(&self) -> CompatibilityMeasure {
        CompatibilityMeasure::new(self.measure.into())
    }

    pub fn smoothing(&self) -> Result<SmoothingSpec, String> {
        match self.smoothing {
            SmoothingArg::Mle => Ok(SmoothingSpec::Mle),
            SmoothingArg::Lidstone => SmoothingSpec::lidstone(self.lambda, self.vocab).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct LexiconArgs {
    /// Lexicon file
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Drop lexicon readings seen fewer times when building from a corpus
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Tags excluded from the unknown-word candidates (comma separated)
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CLOSED_CLASS.iter().map(|s| s.to_string()))]
    pub closed_class: Vec<String>,
}

impl LexiconArgs {
    pub fn closed_class(&self) -> Vec<&str> {
        self.closed_class.iter().map(String::as_str).collect()
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupportArg {
    Sum,
    ProdOfSums,
    ProdOfMax,
    Sequence,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateArg {
    Centered,
    Positive,
    Boltzmann,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitArg {
    Lexical,
    Uniform,
    Random,
}

#[derive(Args, Debug, Clone)]
pub struct RelaxArgs {
    /// Support function
    #[arg(long, value_enum, default_value_t = SupportArg::Sum)]
    pub support: SupportArg,
    /// Updating function
    #[arg(long, value_enum, default_value_t = UpdateArg::Centered)]
    pub update: UpdateArg,
    /// Supports are divided by this before updating
    #[arg(long, default_value_t = 10.0)]
    pub norm_factor: f64,
    /// Stop once no weight moves more than this
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Initial labelling
    #[arg(long, value_enum, default_value_t = InitArg::Lexical)]
    pub init: InitArg,
    /// Seed of random initial labellings
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Boltzmann starting temperature
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// Boltzmann temperature factor per iteration
    #[arg(long, default_value_t = 0.95)]
    pub cooling: f64,
    /// Boltzmann only: sample one-hot labellings with this seed
    #[arg(long)]
    pub stochastic_seed: Option<u64>,
    /// Ignore influences of smaller magnitude
    #[arg(long)]
    pub influence_threshold: Option<f64>,
    /// Readings count as present in a star scan above this weight
    #[arg(long, default_value_t = MatchConfig::default().presence_threshold)]
    pub presence_threshold: f64,
    /// Mass a careful condition needs
    #[arg(long, default_value_t = MatchConfig::default().careful_mass)]
    pub careful_mass: f64,
    /// Lidstone constant of the sequence model estimated from --train
    #[arg(long, default_value_t = 0.5)]
    pub hmm_lambda: f64,
}

impl RelaxArgs {
    /// Parameters for sentence `index`; seeded modes get per-sentence seeds.
    pub fn params(&self, index: usize) -> RelaxParams {
        let offset = index as u64;
        RelaxParams {
            support: match self.support {
                SupportArg::Sum => SupportFn::Sum,
                SupportArg::ProdOfSums => SupportFn::ProdOfSums,
                SupportArg::ProdOfMax => SupportFn::ProdOfMax,
                SupportArg::Sequence => SupportFn::Sequence,
            },
            update: match self.update {
                UpdateArg::Centered => UpdateFn::Centered,
                UpdateArg::Positive => UpdateFn::Positive,
                UpdateArg::Boltzmann => UpdateFn::Boltzmann {
                    t0: self.t0,
                    cooling: self.cooling,
                },
            },
            norm_factor: self.norm_factor,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            matching: MatchConfig {
                presence_threshold: self.presence_threshold,
                careful_mass: self.careful_mass,
            },
            init: match self.init {
                InitArg::Lexical => InitMode::Lexical,
                InitArg::Uniform => InitMode::Uniform,
                InitArg::Random => InitMode::Random(self.init_seed.wrapping_add(offset)),
            },
            stochastic_seed: self.stochastic_seed.map(|s| s.wrapping_add(offset)),
            influence_threshold: self.influence_threshold,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainNgramsArgs {
    /// Tagged training corpus
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// N-gram order, 2 or 3
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Emit a back-off grammar: trigrams seen at least K times, bigrams elsewhere
    #[arg(long, value_name = "K")]
    pub backoff: Option<u64>,
    /// Feature the n-grams are counted over
    #[arg(long, default_value = relaxtag::corpus::POS)]
    pub feature: String,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Grammar output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the n-gram count table
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct LearnTreesArgs {
    /// Tagged training corpus
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    /// Learn only the N most frequent ambiguity classes
    #[arg(long, value_name = "N")]
    pub classes: Option<usize>,
    /// Learn only the named classes, such as IN-RB (repeatable)
    #[arg(long = "class", value_name = "NAME")]
    pub class_names: Vec<String>,
    #[arg(long, default_value_t = TreeParams::default().min_leaf)]
    pub min_leaf: usize,
    /// Confidence of the chi-square test merging value groups
    #[arg(long, default_value_t = TreeParams::default().chi2_confidence)]
    pub chi2: f64,
    /// Stop splitting nodes at least this pure
    #[arg(long, default_value_t = TreeParams::default().purity_stop)]
    pub purity: f64,
    /// Fraction of each class's examples held out for pruning
    #[arg(long, default_value_t = TreeParams::default().holdout_fraction)]
    pub holdout: f64,
    #[arg(long, default_value_t = TreeParams::default().seed)]
    pub seed: u64,
    /// Split selection measure
    #[arg(long, default_value = "gain-ratio", value_parser = parse_selector)]
    pub selector: Selector,
    /// Compatibility measure of the emitted constraints
    #[arg(long, value_enum, default_value_t = MeasureArg::Mi)]
    pub measure: MeasureArg,
    /// Grammar output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the pruned trees
    #[arg(long, value_name = "FILE")]
    pub trees: Option<PathBuf>,
}

fn parse_selector(s: &str) -> Result<Selector, String> {
    s.parse()
}

impl LearnTreesArgs {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            min_leaf: self.min_leaf,
            chi2_confidence: self.chi2,
            purity_stop: self.purity,
            holdout_fraction: self.holdout,
            seed: self.seed,
            selector: self.selector,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct WeightGrammarArgs {
    /// Grammar with '?' weights
    #[arg(long, value_name = "FILE")]
    pub grammar: PathBuf,
    /// Tagged corpus the weights are estimated from
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// Grammar output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaggerArg {
    Relax,
    MostLikely,
    Viterbi,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeArg {
    Argmax,
    Threshold,
    Forced,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[command(flatten)]
    pub lexicon: LexiconArgs,
    /// Constraint grammar; repeated grammars are concatenated
    #[arg(long = "grammar", value_name = "FILE")]
    pub grammars: Vec<PathBuf>,
    /// Trigram constraints boosting the sequence support (repeatable)
    #[arg(long = "trigrams", value_name = "FILE")]
    pub trigrams: Vec<PathBuf>,
    #[command(flatten)]
    pub relax: RelaxArgs,
}

#[derive(Args, Debug, Clone)]
pub struct TagArgs {
    /// Tokens to tag, one per line; columns after the first are ignored
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Tagged output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TaggerArg::Relax)]
    pub tagger: TaggerArg,
    /// Tagged corpus for the lexicon (without --lexicon) and the sequence model
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Reading selection from the final labelling
    #[arg(long, value_enum, default_value_t = DecodeArg::Argmax)]
    pub decode: DecodeArg,
    /// Threshold and forced decoding keep readings within this ratio of the best
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Seed of forced decoding
    #[arg(long, default_value_t = 0)]
    pub decode_seed: u64,
    /// Per-iteration diagnostics CSV of every sentence
    #[arg(long, value_name = "FILE")]
    pub diagnostics: Option<PathBuf>,
}

impl TagArgs {
    pub fn decode_mode(&self, index: usize) -> DecodeMode {
        match self.decode {
            DecodeArg::Argmax => DecodeMode::Argmax,
            DecodeArg::Threshold => DecodeMode::Threshold(self.theta),
            DecodeArg::Forced => DecodeMode::Forced {
                theta: self.theta,
                seed: self.decode_seed.wrapping_add(index as u64),
            },
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Kv,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Gold tagged corpus
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Predicted readings, as written by tag
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Lexicon deciding which words are ambiguous; built from the gold corpus when absent
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_CLOSED_CLASS.iter().map(|s| s.to_string()))]
    pub closed_class: Vec<String>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Kv)]
    pub format: ReportFormat,
    /// Report output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepNormArgs {
    /// Tagged corpus; its tail serves as the tuning set
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Fraction of sentences held out for tuning
    #[arg(long, default_value_t = 0.2)]
    pub tune_fraction: f64,
    /// Normalization factors to try
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0])]
    pub kappas: Vec<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Estimation of the bigram grammar acquired when no --grammar is given
    #[command(flatten)]
    pub estimation: EstimationArgs,
    /// CSV output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GenSyntheticArgs {
    /// Generative model file
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub sentences: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus output; standard output when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
