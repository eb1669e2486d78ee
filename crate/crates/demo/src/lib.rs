//! Browser bindings: relaxation trajectories of a small lattice, the
//! noisy-corpus distortion curve and a normalization-factor sweep. Each
//! operation returns JSON.

use relaxtag::cg::{parse_grammar, Lattice};
use relaxtag::corpus::Reading;
use relaxtag::eval::{distortion_model, DistortionParams};
use relaxtag::relax::{
    init_labelling, relax_observed, CompiledGrammar, Knowledge, RelaxParams, SupportFn, UpdateFn,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// One word per line: `word TAG:count TAG:count ...`.
pub fn parse_lattice(text: &str) -> Result<Lattice, String> {
    let mut words = Vec::new();
    let mut candidates = Vec::new();
    let mut counts = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let mut cands = Vec::new();
        let mut cs = Vec::new();
        for p in parts {
            let (tag, n) = p.split_once(':').unwrap_or((p, "1"));
            let n: u64 = n.parse().map_err(|_| format!("line {}: bad count in {p:?}", k + 1))?;
            if n == 0 {
                return Err(format!("line {}: counts must be positive", k + 1));
            }
            cands.push(Reading::new(tag).map_err(|e| format!("line {}: {e}", k + 1))?);
            cs.push(n);
        }
        if cands.is_empty() {
            return Err(format!("line {}: {word} has no readings", k + 1));
        }
        words.push(word.to_string());
        candidates.push(cands);
        counts.push(cs);
    }
    if words.is_empty() {
        return Err("the sentence is empty".into());
    }
    Ok(Lattice {
        words,
        candidates,
        counts,
    })
}

fn support_fn(name: &str) -> Result<SupportFn, String> {
    match name {
        "sum" => Ok(SupportFn::Sum),
        "prod-of-sums" => Ok(SupportFn::ProdOfSums),
        "prod-of-max" => Ok(SupportFn::ProdOfMax),
        _ => Err(format!("unknown support function {name:?}")),
    }
}

fn update_fn(name: &str) -> Result<UpdateFn, String> {
    match name {
        "centered" => Ok(UpdateFn::Centered),
        "positive" => Ok(UpdateFn::Positive),
        "boltzmann" => Ok(UpdateFn::Boltzmann { t0: 1.0, cooling: 0.9 }),
        _ => Err(format!("unknown updating function {name:?}")),
    }
}

fn setup(grammar: &str, sentence: &str) -> Result<(CompiledGrammar, Lattice), String> {
    let g = parse_grammar(grammar).map_err(|e| format!("grammar {e}"))?;
    let g = CompiledGrammar::new(&g).map_err(|e| e.to_string())?;
    Ok((g, parse_lattice(sentence)?))
}

/// Weights of every reading after each iteration, the initial labelling
/// first.
pub fn trajectory_json(grammar: &str, sentence: &str, kappa: f64, support: &str, update: &str) -> Result<String, String> {
    let (g, lattice) = setup(grammar, sentence)?;
    let params = RelaxParams {
        support: support_fn(support)?,
        update: update_fn(update)?,
        norm_factor: kappa,
        ..RelaxParams::default()
    };
    let init = init_labelling(&lattice, params.init);
    let mut steps = vec![init.weights.clone()];
    let (last, diag) = relax_observed(&lattice, Knowledge::Grammar(&g), &params, init, |l| steps.push(l.weights.clone()))
        .map_err(|e| e.to_string())?;
    let best = last.argmax();
    let out = json!({
        "words": lattice.words,
        "readings": lattice.candidates.iter().map(|c| c.iter().map(|r| r.pos().to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "steps": steps,
        "converged": diag.converged,
        "best": lattice.candidates.iter().zip(&best).map(|(c, &j)| c[j].pos().to_string()).collect::<Vec<_>>(),
    });
    Ok(out.to_string())
}

/// Accuracy measured on a test corpus that is right on a fraction `c` of
/// its tokens, for `points` true tagger accuracies evenly spaced in
/// [lo, hi]. The tagger is equally good where the corpus is right and wrong.
pub fn distortion_json(c: f64, ambiguity: f64, lo: f64, hi: f64, points: usize) -> Result<String, String> {
    if points < 2 || !(lo <= hi) {
        return Err("need at least two points and lo <= hi".into());
    }
    let curve = (0..points)
        .map(|k| {
            let q = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let p = DistortionParams::new(c, q, q, ambiguity).map_err(|e| e.to_string())?;
            Ok(json!({ "accuracy": q, "reported": distortion_model(&p) }))
        })
        .collect::<Result<Vec<Value>, String>>()?;
    Ok(json!({ "c": c, "ambiguity": ambiguity, "curve": curve }).to_string())
}

/// Iterations to convergence and the winning readings for each factor.
pub fn sweep_json(grammar: &str, sentence: &str, kappas: &[f64]) -> Result<String, String> {
    let (g, lattice) = setup(grammar, sentence)?;
    let rows = kappas
        .iter()
        .map(|&kappa| {
            let params = RelaxParams {
                norm_factor: kappa,
                ..RelaxParams::default()
            };
            let init = init_labelling(&lattice, params.init);
            let (l, diag) = relax_observed(&lattice, Knowledge::Grammar(&g), &params, init, |_| {}).map_err(|e| e.to_string())?;
            let best: Vec<String> = lattice
                .candidates
                .iter()
                .zip(l.argmax())
                .map(|(c, j)| c[j].pos().to_string())
                .collect();
            Ok(json!({
                "kappa": kappa,
                "iterations": diag.iterations(),
                "converged": diag.converged,
                "best": best,
            }))
        })
        .collect::<Result<Vec<Value>, String>>()?;
    Ok(Value::Array(rows).to_string())
}

#[wasm_bindgen]
pub fn trajectory(grammar: &str, sentence: &str, kappa: f64, support: &str, update: &str) -> Result<String, JsValue> {
    trajectory_json(grammar, sentence, kappa, support, update).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn distortion(c: f64, ambiguity: f64, lo: f64, hi: f64, points: usize) -> Result<String, JsValue> {
    distortion_json(c, ambiguity, lo, hi, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(grammar: &str, sentence: &str, kappas: &[f64]) -> Result<String, JsValue> {
    sweep_json(grammar, sentence, kappas).map_err(|e| JsValue::from_str(&e))
}
