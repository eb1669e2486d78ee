use std::collections::BTreeMap;

use proptest::prelude::*;
use relaxtag::cg::{
    desugar_strict, match_conditions, parse_grammar, serialize_grammar, Atom, Condition, Constraint, ConstraintKind,
    FeaturePattern, Grammar, Lattice, MatchConfig, Position,
};
use relaxtag::corpus::{
    ambiguity_classes, build_lexicon, parse_tagged_corpus, sample_synthetic_corpus, serialize_corpus, Corpus,
    CorpusFormat, HmmSpec, Reading, Sentence, Token, BOUNDARY, DEFAULT_CLOSED_CLASS,
};
use relaxtag::relax::{
    step_in_order, update, CompiledGrammar, Knowledge, Labelling, RelaxParams, UpdateFn,
};
use relaxtag::stats::{
    compatibility, compatibility_from_probs, estimate, CompatibilityMeasure, EventCounts, MeasureKind, Probabilities,
    SmoothingSpec,
};

const TAGS: &[&str] = &["A", "B", "C", "D"];

fn tag() -> impl Strategy<Value = String> {
    prop::sample::select(TAGS).prop_map(str::to_string)
}

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,4}"
}

fn reading() -> impl Strategy<Value = Reading> {
    (tag(), prop::option::of("[a-z]{1,3}")).prop_map(|(t, lemma)| match lemma {
        Some(l) => Reading::with_features([("pos", t.as_str()), ("lemma", l.as_str())]).unwrap(),
        None => Reading::new(&t).unwrap(),
    })
}

fn corpus() -> impl Strategy<Value = Corpus> {
    let token = (word(), reading()).prop_map(|(w, r)| Token {
        wordform: w,
        gold: Some(r),
    });
    let sentence = prop::collection::vec(token, 1..6).prop_map(|tokens| Sentence { tokens });
    prop::collection::vec(sentence, 1..5).prop_map(|s| Corpus::new(s).unwrap())
}

fn pattern() -> impl Strategy<Value = FeaturePattern> {
    let atom = prop_oneof![
        tag().prop_map(Atom::Tag),
        word().prop_map(Atom::Word),
        ("[a-z]{1,3}", "[a-z]{1,3}").prop_map(|(n, v)| Atom::Feature { name: n, value: v }),
    ];
    prop::collection::vec(prop::collection::vec(atom, 1..3), 1..3).prop_map(|disjuncts| FeaturePattern { disjuncts })
}

fn condition() -> impl Strategy<Value = Condition> {
    (-3i32..=3, any::<bool>(), any::<bool>(), any::<bool>(), pattern(), prop::option::of(pattern())).prop_map(
        |(o, scan, careful, negated, pattern, barrier)| Condition {
            position: match (scan, o) {
                (true, 0) => Position::Scan(1),
                (true, o) => Position::Scan(o),
                (false, o) => Position::Fixed(o),
            },
            careful,
            negated,
            pattern,
            barrier: if scan { barrier } else { None },
        },
    )
}

fn kind() -> impl Strategy<Value = ConstraintKind> {
    prop_oneof![
        (-1e3f64..1e3).prop_map(ConstraintKind::Weighted),
        Just(ConstraintKind::Unweighted),
        Just(ConstraintKind::Select),
        Just(ConstraintKind::Remove),
    ]
}

fn grammar() -> impl Strategy<Value = Grammar> {
    let constraint = (kind(), pattern(), prop::collection::vec(condition(), 0..4)).prop_map(
        |(kind, target, conditions)| Constraint {
            kind,
            target,
            conditions,
        },
    );
    prop::collection::vec(constraint, 1..5).prop_map(Grammar::from_constraints)
}

/// Words with 1-3 tag candidates each and a random simplex labelling.
fn lattice_and_weights(max_len: usize) -> impl Strategy<Value = (Lattice, Vec<Vec<f64>>)> {
    prop::collection::vec(
        (
            prop::sample::subsequence(TAGS.to_vec(), 1..=3),
            prop::collection::vec(0.01f64..1.0, 3),
        ),
        1..=max_len,
    )
    .prop_map(|words| {
        let mut names = Vec::new();
        let mut cands = Vec::new();
        let mut weights = Vec::new();
        for (k, (tags, raw)) in words.into_iter().enumerate() {
            names.push(format!("w{k}"));
            let raw = &raw[..tags.len()];
            let total: f64 = raw.iter().sum();
            weights.push(raw.iter().map(|x| x / total).collect());
            cands.push(tags.iter().map(|t| Reading::new(t).unwrap()).collect());
        }
        (Lattice::from_parts(names, cands), weights)
    })
}

fn same_structure(a: &Grammar, b: &Grammar) -> bool {
    a.constraints == b.constraints && a.sets == b.sets
}

proptest! {
    #[test]
    fn corpus_round_trip(c in corpus()) {
        let text = serialize_corpus(&c);
        prop_assert_eq!(parse_tagged_corpus(&text, CorpusFormat::Tagged).unwrap(), c);
    }

    #[test]
    fn lexicon_counts_match_frequency(c in corpus()) {
        let lex = build_lexicon(&c, 1, DEFAULT_CLOSED_CLASS);
        let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
        for t in c.sentences.iter().flat_map(|s| &s.tokens) {
            *freq.entry(&t.wordform).or_default() += 1;
        }
        for (w, n) in freq {
            let total: u64 = lex.candidates(w).unwrap().iter().map(|(_, c)| c).sum();
            prop_assert_eq!(total, n);
        }
    }

    #[test]
    fn ambiguity_classes_partition(c in corpus()) {
        let lex = build_lexicon(&c, 1, DEFAULT_CLOSED_CLASS);
        let classes = ambiguity_classes(&lex);
        let mut seen = std::collections::BTreeSet::new();
        for cls in &classes {
            for m in &cls.members {
                prop_assert!(seen.insert(m.clone()), "word in two classes");
                prop_assert!(lex.pos_set(m).len() >= 2);
            }
        }
        for t in c.sentences.iter().flat_map(|s| &s.tokens) {
            if lex.pos_set(&t.wordform).len() >= 2 {
                prop_assert!(seen.contains(&t.wordform));
            }
        }
    }

    #[test]
    fn synthetic_sampling_is_pure(seed in any::<u64>(), n in 1usize..20) {
        let spec = toy_spec();
        prop_assert_eq!(
            sample_synthetic_corpus(&spec, n, seed).unwrap(),
            sample_synthetic_corpus(&spec, n, seed).unwrap()
        );
    }

    #[test]
    fn grammar_round_trip(g in grammar()) {
        let text = serialize_grammar(&g);
        let parsed = parse_grammar(&text).unwrap();
        prop_assert!(same_structure(&parsed, &g), "{}", text);
        let again = parse_grammar(&serialize_grammar(&parsed)).unwrap();
        prop_assert!(same_structure(&again, &parsed));
    }

    #[test]
    fn desugar_idempotent(g in grammar()) {
        let d = desugar_strict(&g);
        prop_assert_eq!(d.constraints.len(), g.constraints.len());
        prop_assert!(d.constraints.iter().all(|c| !matches!(c.kind, ConstraintKind::Select | ConstraintKind::Remove)));
        prop_assert_eq!(desugar_strict(&d), d);
    }

    #[test]
    fn matcher_agrees_with_reference(
        (lattice, weights) in lattice_and_weights(5),
        conds in prop::collection::vec((-2i32..=2, any::<bool>(), prop::sample::subsequence(vec!["A", "B", "C", "D", BOUNDARY], 1..=2)), 0..3),
        focus_pick in any::<prop::sample::Index>(),
        reading_pick in any::<prop::sample::Index>(),
    ) {
        let i = focus_pick.index(lattice.len());
        let j = reading_pick.index(lattice.candidates[i].len());
        let conditions: Vec<Condition> = conds
            .iter()
            .map(|(o, neg, tags)| Condition { negated: *neg, ..Condition::at(*o, FeaturePattern::any_tag(tags)) })
            .collect();
        let r = match_conditions(&conditions, &BTreeMap::new(), &lattice, &weights, i, j, MatchConfig::default());
        let expected = reference_context_weight(&conditions, &lattice, &weights, i, j);
        prop_assert!((0.0..=1.0).contains(&r.context_weight));
        prop_assert_eq!(r.applicable, expected > 0.0);
        prop_assert!((r.context_weight - expected).abs() < 1e-12, "{} vs {}", r.context_weight, expected);
    }

    #[test]
    fn one_hot_scans_are_classical(
        (lattice, _) in lattice_and_weights(6),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 6),
        start in prop_oneof![Just(-1i32), Just(1)],
        target in tag(),
        barrier in tag(),
        careful in any::<bool>(),
    ) {
        let chosen: Vec<usize> = (0..lattice.len()).map(|k| picks[k].index(lattice.candidates[k].len())).collect();
        let weights: Vec<Vec<f64>> = chosen
            .iter()
            .zip(&lattice.candidates)
            .map(|(&c, cands)| (0..cands.len()).map(|k| f64::from(u8::from(k == c))).collect())
            .collect();
        let cond = Condition {
            position: Position::Scan(start),
            careful,
            negated: false,
            pattern: FeaturePattern::tag(&target),
            barrier: Some(FeaturePattern::tag(&barrier)),
        };
        let focus = 0.max(lattice.len() as i32 / 2) as usize;
        let r = match_conditions(&[cond], &BTreeMap::new(), &lattice, &weights, focus, chosen[focus], MatchConfig::default());
        // classical: first word in the scan direction whose unique reading is the
        // target, unless a barrier reading comes first
        let mut p = focus as i32 + start;
        let mut expected = false;
        while p >= 0 && (p as usize) < lattice.len() {
            let pos = lattice.candidates[p as usize][chosen[p as usize]].pos().to_string();
            if pos == target {
                expected = true;
                break;
            }
            if pos == barrier {
                break;
            }
            p += start.signum();
        }
        prop_assert_eq!(r.applicable, expected);
        prop_assert_eq!(r.context_weight, f64::from(u8::from(expected)));
    }

    #[test]
    fn updates_stay_on_simplex(
        (_, weights) in lattice_and_weights(6),
        raw in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 3), 6),
        which in 0usize..3,
    ) {
        let l = Labelling { weights, iteration: 0 };
        let supports: Vec<Vec<f64>> = l.weights.iter().zip(&raw).map(|(w, s)| s[..w.len()].to_vec()).collect();
        let (fun, s) = match which {
            0 => (UpdateFn::Centered, supports),
            1 => (UpdateFn::Positive, supports.iter().map(|v| v.iter().map(|x| x.abs()).collect()).collect()),
            _ => (UpdateFn::Boltzmann { t0: 1.0, cooling: 0.9 }, supports),
        };
        let next = update(&l, &s, fun, 0.5).unwrap();
        prop_assert!(next.is_simplex(1e-9));
    }

    #[test]
    fn synchronous_order_is_irrelevant(
        (lattice, weights) in lattice_and_weights(6),
        order_seed in any::<u64>(),
    ) {
        let g = CompiledGrammar::new(&chain_grammar()).unwrap();
        let l = Labelling { weights, iteration: 0 };
        let params = RelaxParams::default();
        let forward: Vec<usize> = (0..lattice.len()).collect();
        let mut shuffled = forward.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(order_seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let a = step_in_order(Knowledge::Grammar(&g), &lattice, &l, &params, &forward, 1.0).unwrap();
        let b = step_in_order(Knowledge::Grammar(&g), &lattice, &l, &params, &shuffled, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scaling_weights_and_factor_is_invisible(
        (lattice, weights) in lattice_and_weights(6),
        factor in prop_oneof![Just(0.5f64), Just(2.0), Just(4.0), Just(0.25)],
    ) {
        let base = chain_grammar();
        let mut scaled = base.clone();
        scaled.strict_select *= factor;
        scaled.strict_remove *= factor;
        for c in &mut scaled.constraints {
            if let ConstraintKind::Weighted(w) = c.kind {
                c.kind = ConstraintKind::Weighted(w * factor);
            }
        }
        let (g1, g2) = (CompiledGrammar::new(&base).unwrap(), CompiledGrammar::new(&scaled).unwrap());
        let p1 = RelaxParams { max_iters: 20, ..RelaxParams::default() };
        let p2 = RelaxParams { norm_factor: p1.norm_factor * factor, ..p1 };
        let mut l1 = Labelling { weights: weights.clone(), iteration: 0 };
        let mut l2 = l1.clone();
        let order: Vec<usize> = (0..lattice.len()).collect();
        for _ in 0..20 {
            l1 = step_in_order(Knowledge::Grammar(&g1), &lattice, &l1, &p1, &order, 1.0).unwrap();
            l2 = step_in_order(Knowledge::Grammar(&g2), &lattice, &l2, &p2, &order, 1.0).unwrap();
            for (a, b) in l1.weights.iter().flatten().zip(l2.weights.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn mi_relent_correlation_are_symmetric(t in counts_table()) {
        let (n_h, n_e, n_he, total) = t;
        let a = EventCounts::new(n_h, n_e, n_he, total).unwrap();
        let b = EventCounts::new(n_e, n_h, n_he, total).unwrap();
        let smooth = SmoothingSpec::lidstone(0.5, 4).unwrap();
        for kind in [MeasureKind::MutualInfo, MeasureKind::RelEntropy, MeasureKind::Correlation] {
            let m = CompatibilityMeasure::new(kind);
            match (compatibility(&a, &m, &smooth), compatibility(&b, &m, &smooth)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() <= 1e-12, "{kind}: {x} vs {y}"),
                (Err(_), Err(_)) => {}
                (x, y) => prop_assert!(false, "{kind}: {x:?} vs {y:?}"),
            }
        }
    }

    #[test]
    fn mi_sign_follows_dependence(t in counts_table()) {
        let (n_h, n_e, n_he, total) = t;
        let c = EventCounts::new(n_h, n_e, n_he, total).unwrap();
        let s = SmoothingSpec::lidstone(0.5, 4).unwrap();
        let p = estimate(&c, &s);
        let mi = compatibility(&c, &CompatibilityMeasure::new(MeasureKind::MutualInfo), &s).unwrap();
        let dep = p.p_he - p.p_h * p.p_e;
        if dep.abs() > 1e-12 {
            prop_assert_eq!(mi > 0.0, dep > 0.0);
        }
    }

    #[test]
    fn rel_entropy_matches_four_cell_sum(p_h in 0.01f64..0.99, p_e in 0.01f64..0.99, frac in 0.0f64..=1.0) {
        // a valid joint: max(0, pH + pE - 1) <= pHE <= min(pH, pE)
        let lo = (p_h + p_e - 1.0).max(0.0);
        let hi = p_h.min(p_e);
        let p_he = lo + frac * (hi - lo);
        let probs = Probabilities { p_h, p_e, p_he };
        let got = compatibility_from_probs(&probs, &CompatibilityMeasure::new(MeasureKind::RelEntropy));
        let cells = [
            (p_he, p_h, p_e),
            (p_h - p_he, p_h, 1.0 - p_e),
            (p_e - p_he, 1.0 - p_h, p_e),
            (1.0 - p_h - p_e + p_he, 1.0 - p_h, 1.0 - p_e),
        ];
        let brute: f64 = cells
            .iter()
            .filter(|(j, _, _)| *j > 0.0)
            .map(|(j, a, b)| j * (j / (a * b)).log2())
            .sum::<f64>()
            .max(0.0);
        match got {
            Ok(x) => prop_assert!((x - brute).abs() <= 1e-12, "{x} vs {brute}"),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn lidstone_tends_to_mle(t in counts_table()) {
        let (n_h, n_e, n_he, total) = t;
        let c = EventCounts::new(n_h, n_e, n_he, total).unwrap();
        let mle = estimate(&c, &SmoothingSpec::Mle);
        let lid = estimate(&c, &SmoothingSpec::lidstone(1e-9, 4).unwrap());
        prop_assert!((mle.p_h - lid.p_h).abs() < 1e-6);
        prop_assert!((mle.p_e - lid.p_e).abs() < 1e-6);
        prop_assert!((mle.p_he - lid.p_he).abs() < 1e-6);
    }
}

fn counts_table() -> impl Strategy<Value = (u64, u64, u64, u64)> {
    (1u64..500, 0u64..500, 0u64..500, 0u64..500).prop_map(|(total, a, b, c)| {
        let n_h = a % (total + 1);
        let n_e = b % (total + 1);
        let lo = (n_h + n_e).saturating_sub(total);
        let hi = n_h.min(n_e);
        let n_he = lo + c % (hi - lo + 1);
        (n_h, n_e, n_he, total)
    })
}

fn reference_context_weight(conds: &[Condition], lattice: &Lattice, weights: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let sets = BTreeMap::new();
    let boundary = Reading::boundary();
    let mut product = 1.0;
    for c in conds {
        let Position::Fixed(o) = c.position else { unreachable!() };
        let p = i as i64 + i64::from(o);
        let mass: f64 = if p < 0 || p as usize >= lattice.len() {
            f64::from(u8::from(c.pattern.matches(&sets, BOUNDARY, &boundary)))
        } else {
            let p = p as usize;
            lattice.candidates[p]
                .iter()
                .enumerate()
                .filter(|(_, r)| c.pattern.matches(&sets, &lattice.words[p], r))
                .map(|(k, _)| if p == i && k == j { 1.0 } else { weights[p][k] })
                .sum::<f64>()
                .min(1.0)
        };
        product *= if c.negated { 1.0 - mass } else { mass };
    }
    product.max(0.0)
}

fn chain_grammar() -> Grammar {
    parse_grammar(
        "2.5 (A) (-1 (B));\n-1.5 (B) (1 (A));\n3 (C) (-1 (A) OR (B)) (1 (D));\n-4 (D) (*1 (A) BARRIER (C));\nSELECT (B) (NOT -1 (C));\nREMOVE (A) (1C (B));\n",
    )
    .unwrap()
}

fn toy_spec() -> HmmSpec {
    let text = "[start]\nA 0.6\nB 0.4\n[transitions]\nA A 0.3\nA B 0.7\nB A 0.5\nB B 0.5\n[emissions]\nA x 0.5\nA y 0.5\nB y 0.4\nB z 0.6\n[length]\nmin 1\nmax 6\n";
    relaxtag::corpus::parse_hmm_spec(text).unwrap()
}
