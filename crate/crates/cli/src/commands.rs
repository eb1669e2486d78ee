use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use relaxtag::baselines::{most_likely_tag, viterbi_lattice};
use relaxtag::cg::{serialize_grammar, Grammar, Lattice};
use relaxtag::corpus::{
    ambiguity_classes, build_lexicon, sample_synthetic_corpus, serialize_corpus, Corpus, CorpusFormat, Lexicon,
    Reading, POS,
};
use relaxtag::dtree::{class_priors, dump_tree, extract_examples, train_pruned_tree, tree_to_grammar, DTreeError};
use relaxtag::eval::{evaluate_full, evaluate_partial, EvalReport};
use relaxtag::ngram::{
    acquire_feature_grammar, build_backoff_grammar, collect_ngrams, dump_ngram_table, weight_hand_grammar, BackoffSpec,
};
use relaxtag::relax::{
    decode_readings, init_labelling, relax_observed, CompiledGrammar, IterationDiagnostics, Knowledge, Labelling,
    RelaxError, RelaxParams, SequenceModel,
};

use crate::args::{
    Command, EstimationArgs, EvalArgs, GenSyntheticArgs, LearnTreesArgs, LexiconArgs, ModelArgs, ReportFormat,
    SupportArg, SweepNormArgs, TagArgs, TaggerArg, TrainNgramsArgs, WeightGrammarArgs,
};
use crate::io::{
    format_tagged, load_corpus, load_grammar, load_hmm_spec, load_lexicon, load_weighted_grammars, parse_tagged_sets,
    read_text, write_output, DataError,
};

#[derive(Debug)]
pub enum CliError {
    /// A flag is missing, inconsistent or out of range.
    Usage(String),
    Data(DataError),
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::TrainNgrams(a) => train_ngrams(a),
        Command::LearnTrees(a) => learn_trees(a),
        Command::WeightGrammar(a) => weight_grammar(a),
        Command::Tag(a) => tag(a),
        Command::Eval(a) => eval(a),
        Command::SweepNorm(a) => sweep_norm(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
    }
}

fn smoothing(e: &EstimationArgs) -> CliResult<relaxtag::stats::SmoothingSpec> {
    e.smoothing().map_err(|m| usage(format!("--lambda/--vocab: {m}")))
}

fn train_ngrams(a: &TrainNgramsArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus, CorpusFormat::Tagged)?;
    let measure = a.estimation.measure();
    let smoothing = smoothing(&a.estimation)?;
    let data = |e: relaxtag::ngram::NGramError| DataError::whole(&a.corpus, e);
    let (grammar, table) = match a.backoff {
        Some(k) => {
            if a.feature != POS {
                return Err(usage("--backoff only works over pos"));
            }
            let spec = BackoffSpec::new(k).map_err(|_| usage("--backoff must be at least 1"))?;
            let bi = collect_ngrams(&corpus, 2, POS).map_err(data)?;
            let tri = collect_ngrams(&corpus, 3, POS).map_err(data)?;
            (build_backoff_grammar(&bi, &tri, spec, &measure, &smoothing).map_err(data)?, tri)
        }
        None => {
            if !(2..=3).contains(&a.order) {
                return Err(usage(format!("--order must be 2 or 3, got {}", a.order)));
            }
            let table = collect_ngrams(&corpus, a.order, &a.feature).map_err(data)?;
            (acquire_feature_grammar(&table, &a.feature, &measure, &smoothing).map_err(data)?, table)
        }
    };
    if let Some(p) = &a.table {
        write_output(Some(p), &dump_ngram_table(&table))?;
    }
    write_output(a.out.as_deref(), &serialize_grammar(&grammar))?;
    eprintln!("{} constraints from {} n-gram types", grammar.constraints.len(), table.counts.len());
    Ok(())
}

fn lexicon_for(args: &LexiconArgs, train: Option<(&Corpus, &Path)>) -> CliResult<Lexicon> {
    match (&args.lexicon, train) {
        (Some(p), _) => Ok(load_lexicon(p, &args.closed_class())?),
        (None, Some((c, _))) => Ok(build_lexicon(c, args.min_count, &args.closed_class())),
        (None, None) => Err(usage("--lexicon or --train is required")),
    }
}

fn learn_trees(a: &LearnTreesArgs) -> CliResult<()> {
    let corpus = load_corpus(&a.corpus, CorpusFormat::Tagged)?;
    let lexicon = lexicon_for(&a.lexicon, Some((&corpus, &a.corpus)))?;
    let params = a.tree_params();
    params.validate().map_err(|e| usage(e.to_string()))?;
    let mut classes = ambiguity_classes(&lexicon);
    if !a.class_names.is_empty() {
        for name in &a.class_names {
            if !classes.iter().any(|c| &c.name() == name) {
                return Err(usage(format!("--class {name}: no such ambiguity class")));
            }
        }
        classes.retain(|c| a.class_names.contains(&c.name()));
    }
    if let Some(n) = a.classes {
        classes.truncate(n);
    }
    let measure = relaxtag::stats::CompatibilityMeasure::new(a.measure.into());
    let learned: Vec<Result<Option<(String, String, Grammar)>, DTreeError>> = classes
        .par_iter()
        .map(|cls| {
            let examples = match extract_examples(&corpus, cls) {
                Ok(e) => e,
                Err(DTreeError::EmptyClass(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let (pruned, full) = match train_pruned_tree(&examples, &params) {
                Ok(t) => t,
                Err(DTreeError::InsufficientExamples { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let g = tree_to_grammar(&pruned, &class_priors(&pruned), cls, &measure)?;
            let summary = format!(
                "{}: {} examples, {} leaves after pruning ({} before), {} constraints",
                cls.name(),
                examples.len(),
                pruned.leaf_count(),
                full.leaf_count(),
                g.constraints.len()
            );
            Ok(Some((summary, format!("# class {}\n{}", cls.name(), dump_tree(&pruned)), g)))
        })
        .collect();
    let mut grammar = Grammar::default();
    let mut trees = String::new();
    for (cls, r) in classes.iter().zip(learned) {
        match r.map_err(|e| DataError::whole(&a.corpus, format!("class {}: {e}", cls.name())))? {
            Some((summary, dump, g)) => {
                eprintln!("{summary}");
                trees.push_str(&dump);
                grammar.extend(g);
            }
            None => eprintln!("{}: skipped, too few examples", cls.name()),
        }
    }
    if let Some(p) = &a.trees {
        write_output(Some(p), &trees)?;
    }
    write_output(a.out.as_deref(), &serialize_grammar(&grammar))?;
    Ok(())
}

fn weight_grammar(a: &WeightGrammarArgs) -> CliResult<()> {
    let g = load_grammar(&a.grammar)?;
    let corpus = load_corpus(&a.corpus, CorpusFormat::Tagged)?;
    let smoothing = smoothing(&a.estimation)?;
    let (weighted, diagnostics) = weight_hand_grammar(&g, &corpus, &a.estimation.measure(), &smoothing)
        .map_err(|e| DataError::whole(&a.corpus, e))?;
    for d in diagnostics {
        let loc = match d.span {
            Some(s) => DataError::at_col(&a.grammar, s.line, s.col, &d.message),
            None => DataError::whole(&a.grammar, &d.message),
        };
        eprintln!("{loc}{}", if d.dropped { " (dropped)" } else { "" });
    }
    write_output(a.out.as_deref(), &serialize_grammar(&weighted))?;
    Ok(())
}

/// Everything needed to relax one sentence.
struct Relaxer {
    lexicon: Lexicon,
    grammar: CompiledGrammar,
    trigrams: CompiledGrammar,
    model: Option<SequenceModel>,
}

fn compile(g: &Grammar, what: &str) -> CliResult<CompiledGrammar> {
    CompiledGrammar::new(g).map_err(|e| usage(format!("{what}: {e}")))
}

fn check_params(p: &RelaxParams) -> CliResult<()> {
    p.validate().map_err(|e| usage(e.to_string()))
}

impl Relaxer {
    /// `train` supplies the sequence model; `default_grammar` is used when
    /// no --grammar is given.
    fn new(
        m: &ModelArgs,
        lexicon: Lexicon,
        train: Option<&Corpus>,
        default_grammar: impl FnOnce() -> CliResult<Grammar>,
    ) -> CliResult<Self> {
        check_params(&m.relax.params(0))?;
        let sequence = m.relax.support == SupportArg::Sequence;
        if !sequence && !m.trigrams.is_empty() {
            return Err(usage("--trigrams needs --support sequence"));
        }
        let grammar = if m.grammars.is_empty() && !sequence {
            default_grammar()?
        } else {
            load_weighted_grammars(&m.grammars)?
        };
        let trigrams = load_weighted_grammars(&m.trigrams)?;
        let model = if sequence {
            let train = train.ok_or_else(|| usage("--support sequence needs --train"))?;
            let tags: Vec<String> = lexicon.tagset().into_iter().collect();
            Some(SequenceModel::estimate(train, m.relax.hmm_lambda, &tags).map_err(|e| usage(format!("--hmm-lambda: {e}")))?)
        } else {
            None
        };
        Ok(Relaxer {
            grammar: compile(&grammar, "--grammar")?,
            trigrams: compile(&trigrams, "--trigrams")?,
            lexicon,
            model,
        })
    }

    fn knowledge(&self) -> Knowledge<'_> {
        match &self.model {
            Some(model) => Knowledge::Sequence {
                model,
                trigrams: &self.trigrams,
                hand: &self.grammar,
            },
            None => Knowledge::Grammar(&self.grammar),
        }
    }

    fn relax(
        &self,
        lattice: &Lattice,
        params: &RelaxParams,
        observe: impl FnMut(&Labelling),
    ) -> Result<(Labelling, IterationDiagnostics), RelaxError> {
        relax_observed(lattice, self.knowledge(), params, init_labelling(lattice, params.init), observe)
    }
}

fn lattice(s: &relaxtag::corpus::Sentence, lexicon: &Lexicon, path: &Path, index: usize) -> CliResult<Lattice> {
    Lattice::new(s, lexicon).map_err(|e| DataError::whole(path, format!("sentence {}: {e}", index + 1)).into())
}

type Tagged = (Vec<String>, Vec<Vec<Reading>>, Option<IterationDiagnostics>);

fn tag(a: &TagArgs) -> CliResult<()> {
    let input = load_corpus(&a.input, CorpusFormat::Raw)?;
    let train = a.train.as_ref().map(|p| load_corpus(p, CorpusFormat::Tagged).map(|c| (c, p))).transpose()?;
    let lexicon = lexicon_for(&a.model.lexicon, train.as_ref().map(|(c, p)| (c, p.as_path())))?;
    if matches!(a.decode, crate::args::DecodeArg::Threshold | crate::args::DecodeArg::Forced)
        && !(a.theta > 0.0 && a.theta <= 1.0)
    {
        return Err(usage("--theta must lie in (0,1]"));
    }
    let train_corpus = train.as_ref().map(|(c, _)| c);
    let tagged: Vec<CliResult<Tagged>> = match a.tagger {
        TaggerArg::Relax => {
            let relaxer = Relaxer::new(&a.model, lexicon, train_corpus, || Ok(Grammar::default()))?;
            input
                .sentences
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let lat = lattice(s, &relaxer.lexicon, &a.input, i)?;
                    let params = a.model.relax.params(i);
                    let (l, diag) = relaxer
                        .relax(&lat, &params, |_| {})
                        .map_err(|e| DataError::whole(&a.input, format!("sentence {}: {e}", i + 1)))?;
                    Ok((lat.words.clone(), decode_readings(&lat, &l, a.decode_mode(i)), Some(diag)))
                })
                .collect()
        }
        TaggerArg::MostLikely => input
            .sentences
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let r = most_likely_tag(s, &lexicon)
                    .map_err(|e| DataError::whole(&a.input, format!("sentence {}: {e}", i + 1)))?;
                Ok((s.wordforms().map(str::to_string).collect(), r.into_iter().map(|r| vec![r]).collect(), None))
            })
            .collect(),
        TaggerArg::Viterbi => {
            let train = train_corpus.ok_or_else(|| usage("--tagger viterbi needs --train"))?;
            let tags: Vec<String> = lexicon.tagset().into_iter().collect();
            let model = SequenceModel::estimate(train, a.model.relax.hmm_lambda, &tags)
                .map_err(|e| usage(format!("--hmm-lambda: {e}")))?;
            input
                .sentences
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let lat = lattice(s, &lexicon, &a.input, i)?;
                    let best = viterbi_lattice(&lat, &model);
                    let readings = best.iter().enumerate().map(|(k, &j)| vec![lat.candidates[k][j].clone()]).collect();
                    Ok((lat.words, readings, None))
                })
                .collect()
        }
    };
    let tagged: Vec<Tagged> = tagged.into_iter().collect::<CliResult<_>>()?;
    if let Some(p) = &a.diagnostics {
        let mut csv = format!("sentence,{}\n", IterationDiagnostics::CSV_HEADER);
        for (i, (_, _, d)) in tagged.iter().enumerate() {
            for row in d.iter().flat_map(|d| d.to_csv().lines().skip(1).map(str::to_string).collect::<Vec<_>>()) {
                let _ = writeln!(csv, "{},{row}", i + 1);
            }
        }
        write_output(Some(p), &csv)?;
    }
    let sets: Vec<(Vec<String>, Vec<Vec<Reading>>)> = tagged.into_iter().map(|(w, r, _)| (w, r)).collect();
    write_output(a.out.as_deref(), &format_tagged(&sets))?;
    Ok(())
}

fn report_text(r: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Kv => r.to_kv(),
        ReportFormat::Csv => r.to_csv(),
    }
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    let gold = load_corpus(&a.gold, CorpusFormat::Tagged)?;
    let pred = parse_tagged_sets(&read_text(&a.pred)?, &a.pred)?;
    if pred.len() != gold.sentences.len() {
        return Err(DataError::whole(
            &a.pred,
            format!("{} sentences, the gold corpus has {}", pred.len(), gold.sentences.len()),
        )
        .into());
    }
    for (k, ((words, _), g)) in pred.iter().zip(&gold.sentences).enumerate() {
        if !words.iter().map(String::as_str).eq(g.wordforms()) {
            return Err(DataError::whole(&a.pred, format!("sentence {}: words differ from the gold corpus", k + 1)).into());
        }
    }
    let data = |e: relaxtag::eval::EvalError| DataError::whole(&a.pred, e);
    let report = if pred.iter().all(|(_, r)| r.iter().all(|set| set.len() == 1)) {
        let closed: Vec<&str> = a.closed_class.iter().map(String::as_str).collect();
        let lexicon = match &a.lexicon {
            Some(p) => load_lexicon(p, &closed)?,
            None => build_lexicon(&gold, 1, &closed),
        };
        let single: Vec<Vec<Reading>> = pred
            .into_iter()
            .map(|(_, r)| r.into_iter().map(|mut set| set.remove(0)).collect())
            .collect();
        evaluate_full(&gold, &single, &lexicon).map_err(data)?
    } else {
        let sets: Vec<Vec<Vec<Reading>>> = pred.into_iter().map(|(_, r)| r).collect();
        evaluate_partial(&gold, &sets).map_err(data)?
    };
    write_output(a.out.as_deref(), &report_text(&report, a.format))?;
    Ok(())
}

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Argmax candidate indices after every iteration, the initial labelling
/// first, plus the diagnostics.
type Trajectory = (Vec<Vec<usize>>, IterationDiagnostics);

fn sweep_norm(a: &SweepNormArgs) -> CliResult<()> {
    if !(a.tune_fraction > 0.0 && a.tune_fraction < 1.0) {
        return Err(usage("--tune-fraction must lie in (0,1)"));
    }
    if let Some(k) = a.kappas.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(usage(format!("--kappas: {k} is not a positive factor")));
    }
    let corpus = load_corpus(&a.corpus, CorpusFormat::Tagged)?;
    let (train, tune) = corpus.split_tail(a.tune_fraction);
    if train.sentences.is_empty() || tune.sentences.is_empty() {
        return Err(DataError::whole(&a.corpus, "too few sentences for a tuning split").into());
    }
    let lexicon = lexicon_for(&a.model.lexicon, Some((&train, &a.corpus)))?;
    let relaxer = Relaxer::new(&a.model, lexicon, Some(&train), || {
        let table = collect_ngrams(&train, 2, POS).map_err(|e| DataError::whole(&a.corpus, e))?;
        acquire_feature_grammar(&table, POS, &a.estimation.measure(), &smoothing(&a.estimation)?)
            .map_err(|e| DataError::whole(&a.corpus, e).into())
    })?;
    let lattices: Vec<Lattice> = tune
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| lattice(s, &relaxer.lexicon, &a.corpus, i))
        .collect::<CliResult<_>>()?;
    let mut csv = String::from(
        "norm_factor,mean_iterations,max_iterations,converged,accuracy,ambiguous_accuracy,best_iteration,best_accuracy,best_ambiguous_accuracy\n",
    );
    for &kappa in &a.kappas {
        let runs: Vec<Result<Trajectory, RelaxError>> = lattices
            .par_iter()
            .enumerate()
            .map(|(i, lat)| {
                let params = RelaxParams {
                    norm_factor: kappa,
                    ..a.model.relax.params(i)
                };
                let mut path = vec![init_labelling(lat, params.init).argmax()];
                let (_, diag) = relaxer.relax(lat, &params, |l| path.push(l.argmax()))?;
                Ok((path, diag))
            })
            .collect();
        let runs: Vec<Trajectory> = runs
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| usage(format!("--norm-factor {kappa}: {e}")))?;
        let longest = runs.iter().map(|(p, _)| p.len() - 1).max().unwrap_or(0);
        let score = |t: usize| -> CliResult<EvalReport> {
            let pred: Vec<Vec<Reading>> = runs
                .iter()
                .zip(&lattices)
                .map(|((path, _), lat)| {
                    let best = &path[t.min(path.len() - 1)];
                    best.iter().enumerate().map(|(k, &j)| lat.candidates[k][j].clone()).collect()
                })
                .collect();
            evaluate_full(&tune, &pred, &relaxer.lexicon).map_err(|e| DataError::whole(&a.corpus, e).into())
        };
        let reports: Vec<EvalReport> = (0..=longest).map(score).collect::<CliResult<_>>()?;
        let mut best = 0;
        for (t, r) in reports.iter().enumerate() {
            if r.correct > reports[best].correct {
                best = t;
            }
        }
        let last = &reports[longest];
        let iterations: Vec<usize> = runs.iter().map(|(_, d)| d.iterations()).collect();
        let converged = runs.iter().filter(|(_, d)| d.converged).count();
        let _ = writeln!(
            csv,
            "{kappa},{:.3},{},{converged},{:.6},{},{best},{:.6},{}",
            iterations.iter().sum::<usize>() as f64 / iterations.len() as f64,
            iterations.iter().max().unwrap_or(&0),
            last.overall_accuracy,
            na(last.ambiguous_accuracy),
            reports[best].overall_accuracy,
            na(reports[best].ambiguous_accuracy),
        );
    }
    write_output(a.out.as_deref(), &csv)?;
    if relaxer.model.is_none() && relaxer.grammar.is_empty() {
        eprintln!("warning: the grammar is empty; every factor gives the initial labelling");
    }
    Ok(())
}

fn gen_synthetic(a: &GenSyntheticArgs) -> CliResult<()> {
    if a.sentences == 0 {
        return Err(usage("--sentences must be positive"));
    }
    let spec = load_hmm_spec(&a.spec)?;
    let corpus = sample_synthetic_corpus(&spec, a.sentences, a.seed).map_err(|e| DataError::whole(&a.spec, e))?;
    write_output(a.out.as_deref(), &serialize_corpus(&corpus))?;
    Ok(())
}
