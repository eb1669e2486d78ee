//! Tagged corpora, lexica with candidate readings, ambiguity classes and a
//! seeded synthetic corpus generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Reserved pos of the virtual sentence-boundary token.
pub const BOUNDARY: &str = "<<<";

/// Feature holding the part-of-speech tag; every reading carries it.
pub const POS: &str = "pos";

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("corpus contains no sentences")]
    EmptyCorpus,
    #[error("invalid feature {name:?}={value:?}: {reason}")]
    InvalidFeature {
        name: String,
        value: String,
        reason: &'static str,
    },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("line {line}: {reason}")]
    Spec { line: usize, reason: String },
    #[error("no candidate readings for {0:?}")]
    NoCandidates(String),
}

/// One candidate analysis of a word: an ordered bundle of named features.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reading {
    features: BTreeMap<String, String>,
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
}

fn check_feature(name: &str, value: &str) -> Result<(), CorpusError> {
    let err = |reason| {
        Err(CorpusError::InvalidFeature {
            name: name.to_string(),
            value: value.to_string(),
            reason,
        })
    };
    if !valid_name(name) {
        return err("feature names are lowercase identifiers");
    }
    if value.is_empty() {
        return err("empty value");
    }
    if value.chars().any(|c| c.is_whitespace() || c == '|') {
        return err("values may not contain whitespace or '|'");
    }
    if name != POS && value.contains(',') {
        return err("non-pos values may not contain ','");
    }
    Ok(())
}

impl Reading {
    /// A reading with only a pos feature.
    pub fn new(pos: &str) -> Result<Self, CorpusError> {
        Self::with_features([(POS, pos)])
    }

    pub fn with_features<'a, I>(features: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut map = BTreeMap::new();
        for (name, value) in features {
            check_feature(name, value)?;
            map.insert(name.to_string(), value.to_string());
        }
        if !map.contains_key(POS) {
            return Err(CorpusError::InvalidFeature {
                name: POS.to_string(),
                value: String::new(),
                reason: "every reading needs a pos feature",
            });
        }
        Ok(Reading { features: map })
    }

    /// The boundary pseudo-reading used for out-of-sentence positions.
    pub fn boundary() -> Self {
        let mut features = BTreeMap::new();
        features.insert(POS.to_string(), BOUNDARY.to_string());
        Reading { features }
    }

    pub fn pos(&self) -> &str {
        &self.features[POS]
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.features.get(name).map(String::as_str)
    }

    pub fn features(&self) -> &BTreeMap<String, String> {
        &self.features
    }

    /// Features other than pos, in name order.
    pub fn extra_features(&self) -> impl Iterator<Item = (&str, &str)> {
        self.features
            .iter()
            .filter(|(k, _)| k.as_str() != POS)
            .map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl fmt::Display for Reading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.pos())?;
        for (k, v) in self.extra_features() {
            write!(f, ",{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub wordform: String,
    pub gold: Option<Reading>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        Sentence {
            tokens: words
                .iter()
                .map(|w| Token {
                    wordform: w.as_ref().to_string(),
                    gold: None,
                })
                .collect(),
        }
    }

    pub fn wordforms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.wordform.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub tagset: BTreeSet<String>,
}

impl Corpus {
    /// Builds a corpus and derives its tagset from the gold readings.
    pub fn new(sentences: Vec<Sentence>) -> Result<Self, CorpusError> {
        if sentences.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let tagset = sentences
            .iter()
            .flat_map(|s| s.tokens.iter())
            .filter_map(|t| t.gold.as_ref().map(|g| g.pos().to_string()))
            .collect();
        Ok(Corpus { sentences, tagset })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Gold readings of every sentence, or `None` if some token is untagged.
    pub fn gold_readings(&self) -> Option<Vec<Vec<Reading>>> {
        self.sentences
            .iter()
            .map(|s| s.tokens.iter().map(|t| t.gold.clone()).collect())
            .collect()
    }

    /// Splits off the last `ceil(fraction * n)` sentences (at least one when
    /// there are two or more sentences).
    pub fn split_tail(&self, fraction: f64) -> (Corpus, Corpus) {
        let n = self.sentences.len();
        let tail = ((n as f64 * fraction).ceil() as usize).clamp(usize::from(n > 1), n - 1);
        let head = self.sentences[..n - tail].to_vec();
        let rest = self.sentences[n - tail..].to_vec();
        (
            Corpus::new(head).expect("nonempty head"),
            Corpus::new(rest).unwrap_or_else(|_| self.clone()),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `wordform TAB pos (TAB key=value)*`
    Tagged,
    /// First column is the wordform; any further columns are ignored.
    Raw,
}

/// Token lines always contain a TAB, so a `#` line without one is a comment.
fn is_comment(line: &str) -> bool {
    line.starts_with('#') && !line.contains('\t')
}

fn parse_token(line: &str, line_no: usize, format: CorpusFormat) -> Result<Token, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedLine {
        line: line_no,
        reason,
    };
    let mut cols = line.split('\t');
    let wordform = cols.next().unwrap_or_default();
    if wordform.is_empty() || wordform.chars().any(char::is_whitespace) {
        return Err(malformed("empty or space-containing wordform".into()));
    }
    if format == CorpusFormat::Raw {
        return Ok(Token {
            wordform: wordform.to_string(),
            gold: None,
        });
    }
    let pos = cols
        .next()
        .ok_or_else(|| malformed("expected wordform<TAB>pos".into()))?;
    let mut features = vec![(POS, pos)];
    for col in cols {
        let (k, v) = col
            .split_once('=')
            .ok_or_else(|| malformed(format!("column {col:?} is not key=value")))?;
        if k == POS {
            return Err(malformed("pos given twice".into()));
        }
        features.push((k, v));
    }
    let gold = Reading::with_features(features).map_err(|e| malformed(e.to_string()))?;
    Ok(Token {
        wordform: wordform.to_string(),
        gold: Some(gold),
    })
}

pub fn parse_tagged_corpus(text: &str, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut current),
                });
            }
            continue;
        }
        if is_comment(line) {
            continue;
        }
        current.push(parse_token(line, idx + 1, format)?);
    }
    if !current.is_empty() {
        sentences.push(Sentence { tokens: current });
    }
    Corpus::new(sentences)
}

fn write_reading_columns(out: &mut String, reading: &Reading) {
    out.push('\t');
    out.push_str(reading.pos());
    for (k, v) in reading.extra_features() {
        out.push('\t');
        out.push_str(k);
        out.push('=');
        out.push_str(v);
    }
}

pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for sentence in &corpus.sentences {
        for token in &sentence.tokens {
            out.push_str(&token.wordform);
            if let Some(gold) = &token.gold {
                write_reading_columns(&mut out, gold);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Default closed-class tags: determiners, prepositions, conjunctions and
/// punctuation of the Penn tagset, plus the boundary tag.
pub const DEFAULT_CLOSED_CLASS: &[&str] = &[
    "DT", "PDT", "WDT", "IN", "CC", "TO", ".", ",", ":", "``", "''", "(", ")", "-LRB-", "-RRB-",
    "#", "$", BOUNDARY,
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    /// Readings per wordform, sorted by reading, counts ≥ 1.
    pub entries: BTreeMap<String, Vec<(Reading, u64)>>,
    /// Fallback candidates for words absent from `entries`.
    pub open_class_readings: Vec<Reading>,
}

pub fn build_lexicon(corpus: &Corpus, min_count: u64, closed_class: &[&str]) -> Lexicon {
    let mut counts: BTreeMap<String, BTreeMap<Reading, u64>> = BTreeMap::new();
    for token in corpus.sentences.iter().flat_map(|s| s.tokens.iter()) {
        if let Some(gold) = &token.gold {
            *counts
                .entry(token.wordform.clone())
                .or_default()
                .entry(gold.clone())
                .or_default() += 1;
        }
    }
    let entries = counts
        .into_iter()
        .filter_map(|(word, readings)| {
            let kept: Vec<_> = readings
                .into_iter()
                .filter(|(_, c)| *c >= min_count.max(1))
                .collect();
            (!kept.is_empty()).then_some((word, kept))
        })
        .collect();
    Lexicon {
        entries,
        open_class_readings: open_class(&corpus.tagset, closed_class),
    }
}

/// Tagset minus the closed-class tags; the full tagset if nothing is left.
pub fn open_class(tagset: &BTreeSet<String>, closed_class: &[&str]) -> Vec<Reading> {
    let open: Vec<_> = tagset
        .iter()
        .filter(|t| !closed_class.contains(&t.as_str()))
        .filter_map(|t| Reading::new(t).ok())
        .collect();
    if open.is_empty() {
        tagset.iter().filter_map(|t| Reading::new(t).ok()).collect()
    } else {
        open
    }
}

impl Lexicon {
    pub fn is_known(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Candidate readings with their counts; unknown words get the open-class
    /// readings with uniform count 1.
    pub fn candidates(&self, word: &str) -> Result<Vec<(Reading, u64)>, CorpusError> {
        match self.entries.get(word) {
            Some(entry) => Ok(entry.clone()),
            None if self.open_class_readings.is_empty() => {
                Err(CorpusError::NoCandidates(word.to_string()))
            }
            None => Ok(self
                .open_class_readings
                .iter()
                .map(|r| (r.clone(), 1))
                .collect()),
        }
    }

    /// Lexical probability P(reading | word) per candidate.
    pub fn lexical_probs(&self, word: &str) -> Result<Vec<(Reading, f64)>, CorpusError> {
        let cands = self.candidates(word)?;
        let total: u64 = cands.iter().map(|(_, c)| c).sum();
        Ok(cands
            .into_iter()
            .map(|(r, c)| (r, c as f64 / total as f64))
            .collect())
    }

    /// Number of candidates, counting unknown words as open-class ambiguous.
    pub fn ambiguity(&self, word: &str) -> usize {
        self.entries
            .get(word)
            .map_or(self.open_class_readings.len(), Vec::len)
    }

    pub fn pos_set(&self, word: &str) -> BTreeSet<&str> {
        self.entries
            .get(word)
            .map(|e| e.iter().map(|(r, _)| r.pos()).collect())
            .unwrap_or_default()
    }

    /// Human-readable entry, e.g. `the: CD 1, DT 47715`.
    pub fn describe(&self, word: &str) -> Option<String> {
        let entry = self.entries.get(word)?;
        let items: Vec<_> = entry.iter().map(|(r, c)| format!("{r} {c}")).collect();
        Some(format!("{word}: {}", items.join(", ")))
    }

    pub fn tagset(&self) -> BTreeSet<String> {
        self.entries
            .values()
            .flatten()
            .map(|(r, _)| r.pos().to_string())
            .chain(self.open_class_readings.iter().map(|r| r.pos().to_string()))
            .collect()
    }
}

const OPEN_CLASS_DIRECTIVE: &str = "#open-class ";

fn format_reading_count(reading: &Reading, count: u64) -> String {
    let mut s = format!("{}:{count}", reading.pos());
    for (k, v) in reading.extra_features() {
        s.push_str(&format!(",{k}={v}"));
    }
    s
}

pub fn serialize_lexicon(lexicon: &Lexicon) -> String {
    let mut out = String::new();
    let open: Vec<_> = lexicon
        .open_class_readings
        .iter()
        .map(|r| format_reading_count(r, 1))
        .collect();
    out.push_str(OPEN_CLASS_DIRECTIVE);
    out.push_str(&open.join(" "));
    out.push('\n');
    for (word, entry) in &lexicon.entries {
        let items: Vec<_> = entry
            .iter()
            .map(|(r, c)| format_reading_count(r, *c))
            .collect();
        out.push_str(word);
        out.push('\t');
        out.push_str(&items.join(" "));
        out.push('\n');
    }
    out
}

/// Parses `pos:count(,key=value)*`. The pos itself may contain ':' or ','
/// (Penn's colon and comma tags), so the count is located as the first
/// `:digits` run followed by end or `,`.
fn parse_reading_count(item: &str) -> Option<(Reading, u64)> {
    let bytes = item.as_bytes();
    for (idx, _) in item.match_indices(':') {
        if idx == 0 {
            continue;
        }
        let digits_end = bytes[idx + 1..]
            .iter()
            .position(|b| !b.is_ascii_digit())
            .map_or(bytes.len(), |p| idx + 1 + p);
        if digits_end == idx + 1 {
            continue;
        }
        if digits_end != bytes.len() && bytes[digits_end] != b',' {
            continue;
        }
        let pos = &item[..idx];
        let count: u64 = item[idx + 1..digits_end].parse().ok()?;
        let mut features = vec![(POS, pos)];
        if digits_end < bytes.len() {
            for kv in item[digits_end + 1..].split(',') {
                features.push(kv.split_once('=')?);
            }
        }
        return Reading::with_features(features).ok().map(|r| (r, count));
    }
    None
}

pub fn parse_lexicon(text: &str, closed_class: &[&str]) -> Result<Lexicon, CorpusError> {
    let mut lexicon = Lexicon::default();
    let mut open = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let malformed = |reason: String| CorpusError::MalformedLine {
            line: idx + 1,
            reason,
        };
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(OPEN_CLASS_DIRECTIVE) {
            let readings = rest
                .split_whitespace()
                .map(|item| {
                    parse_reading_count(item)
                        .map(|(r, _)| r)
                        .ok_or_else(|| malformed(format!("bad reading {item:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            open = Some(readings);
            continue;
        }
        if is_comment(line) {
            continue;
        }
        let (word, rest) = line
            .split_once('\t')
            .ok_or_else(|| malformed("expected wordform<TAB>readings".into()))?;
        let mut entry: Vec<(Reading, u64)> = rest
            .split_whitespace()
            .map(|item| match parse_reading_count(item) {
                Some((r, c)) if c >= 1 => Ok((r, c)),
                _ => Err(malformed(format!("bad reading {item:?}"))),
            })
            .collect::<Result<_, _>>()?;
        if entry.is_empty() {
            return Err(malformed("entry without readings".into()));
        }
        entry.sort_by(|a, b| a.0.cmp(&b.0));
        entry.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        lexicon.entries.insert(word.to_string(), entry);
    }
    lexicon.open_class_readings = match open {
        Some(readings) => readings,
        None => open_class(&lexicon.tagset(), closed_class),
    };
    Ok(lexicon)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityClass {
    pub readings: BTreeSet<String>,
    pub members: BTreeSet<String>,
}

impl AmbiguityClass {
    /// Class name such as `IN-RB`.
    pub fn name(&self) -> String {
        self.readings.iter().cloned().collect::<Vec<_>>().join("-")
    }
}

/// Groups ambiguous words by identical pos-sets, most frequent class first.
pub fn ambiguity_classes(lexicon: &Lexicon) -> Vec<AmbiguityClass> {
    let mut groups: BTreeMap<BTreeSet<String>, (BTreeSet<String>, u64)> = BTreeMap::new();
    for (word, entry) in &lexicon.entries {
        let pos_set: BTreeSet<String> = entry.iter().map(|(r, _)| r.pos().to_string()).collect();
        if pos_set.len() < 2 {
            continue;
        }
        let occurrences: u64 = entry.iter().map(|(_, c)| c).sum();
        let group = groups.entry(pos_set).or_default();
        group.0.insert(word.clone());
        group.1 += occurrences;
    }
    let mut classes: Vec<_> = groups.into_iter().collect();
    // stable sort keeps readings order among equal counts
    classes.sort_by(|a, b| b.1 .1.cmp(&a.1 .1));
    classes
        .into_iter()
        .map(|(readings, (members, _))| AmbiguityClass { readings, members })
        .collect()
}

/// Generative model for synthetic corpora: a first-order tag chain with
/// optional second-order rows, per-tag word emissions and a uniform length
/// range.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSpec {
    pub start: BTreeMap<String, f64>,
    pub transitions: BTreeMap<String, BTreeMap<String, f64>>,
    /// P(next | prev2, prev1); takes precedence over `transitions` when present.
    pub trigrams: BTreeMap<(String, String), BTreeMap<String, f64>>,
    pub emissions: BTreeMap<String, BTreeMap<String, f64>>,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for HmmSpec {
    fn default() -> Self {
        HmmSpec {
            start: BTreeMap::new(),
            transitions: BTreeMap::new(),
            trigrams: BTreeMap::new(),
            emissions: BTreeMap::new(),
            min_len: 5,
            max_len: 15,
        }
    }
}

const ROW_TOLERANCE: f64 = 1e-9;

fn check_row(name: &str, row: &BTreeMap<String, f64>) -> Result<(), CorpusError> {
    if row.is_empty() {
        return Err(CorpusError::InvalidDistribution(format!(
            "{name}: empty row"
        )));
    }
    if row.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(CorpusError::InvalidDistribution(format!(
            "{name}: negative or non-finite probability"
        )));
    }
    let sum: f64 = row.values().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(CorpusError::InvalidDistribution(format!(
            "{name}: sums to {sum}"
        )));
    }
    Ok(())
}

impl HmmSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        check_row("[start]", &self.start)?;
        for (tag, row) in &self.transitions {
            check_row(&format!("[transitions] {tag}"), row)?;
        }
        for ((a, b), row) in &self.trigrams {
            check_row(&format!("[trigrams] {a} {b}"), row)?;
        }
        for (tag, row) in &self.emissions {
            check_row(&format!("[emissions] {tag}"), row)?;
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(CorpusError::InvalidDistribution(format!(
                "length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        let reachable = self
            .start
            .keys()
            .chain(self.transitions.values().flat_map(|r| r.keys()))
            .chain(self.trigrams.values().flat_map(|r| r.keys()));
        for tag in reachable {
            if !self.emissions.contains_key(tag) {
                return Err(CorpusError::InvalidDistribution(format!(
                    "tag {tag} has no emission row"
                )));
            }
            if self.max_len > 1 && !self.transitions.contains_key(tag) {
                return Err(CorpusError::InvalidDistribution(format!(
                    "tag {tag} has no transition row"
                )));
            }
        }
        Ok(())
    }
}

/// Text form with `[start]`, `[transitions]`, `[trigrams]`, `[emissions]` and
/// `[length]` sections; rows are whitespace separated, probability last.
pub fn parse_hmm_spec(text: &str) -> Result<HmmSpec, CorpusError> {
    let mut spec = HmmSpec::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        let err = |reason: String| CorpusError::Spec {
            line: idx + 1,
            reason,
        };
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let number = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("expected a number, got {s:?}")))
        };
        match (section.as_str(), fields.as_slice()) {
            ("start", [tag, p]) => {
                spec.start.insert(tag.to_string(), number(p)?);
            }
            ("transitions", [from, to, p]) => {
                spec.transitions
                    .entry(from.to_string())
                    .or_default()
                    .insert(to.to_string(), number(p)?);
            }
            ("trigrams", [a, b, c, p]) => {
                spec.trigrams
                    .entry((a.to_string(), b.to_string()))
                    .or_default()
                    .insert(c.to_string(), number(p)?);
            }
            ("emissions", [tag, word, p]) => {
                spec.emissions
                    .entry(tag.to_string())
                    .or_default()
                    .insert(word.to_string(), number(p)?);
            }
            ("length", ["min", n]) => {
                spec.min_len = n.parse().map_err(|_| err(format!("bad length {n:?}")))?;
            }
            ("length", ["max", n]) => {
                spec.max_len = n.parse().map_err(|_| err(format!("bad length {n:?}")))?;
            }
            ("", _) => return Err(err("row outside of any section".into())),
            (s, _) => return Err(err(format!("unexpected row in [{s}]"))),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn serialize_hmm_spec(spec: &HmmSpec) -> String {
    let mut out = String::from("[start]\n");
    for (tag, p) in &spec.start {
        out.push_str(&format!("{tag} {p}\n"));
    }
    out.push_str("\n[transitions]\n");
    for (from, row) in &spec.transitions {
        for (to, p) in row {
            out.push_str(&format!("{from} {to} {p}\n"));
        }
    }
    if !spec.trigrams.is_empty() {
        out.push_str("\n[trigrams]\n");
        for ((a, b), row) in &spec.trigrams {
            for (c, p) in row {
                out.push_str(&format!("{a} {b} {c} {p}\n"));
            }
        }
    }
    out.push_str("\n[emissions]\n");
    for (tag, row) in &spec.emissions {
        for (word, p) in row {
            out.push_str(&format!("{tag} {word} {p}\n"));
        }
    }
    out.push_str(&format!(
        "\n[length]\nmin {}\nmax {}\n",
        spec.min_len, spec.max_len
    ));
    out
}

fn draw<'a>(row: &'a BTreeMap<String, f64>, rng: &mut ChaCha8Rng) -> &'a str {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (key, p) in row {
        acc += p;
        if u < acc {
            return key;
        }
    }
    row.keys().next_back().expect("validated nonempty row")
}

/// Deterministic for fixed `(spec, n_sentences, seed)`.
pub fn sample_synthetic_corpus(
    spec: &HmmSpec,
    n_sentences: usize,
    seed: u64,
) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    if n_sentences == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut tags: Vec<&str> = Vec::with_capacity(len);
        let mut tokens = Vec::with_capacity(len);
        for k in 0..len {
            let tag = if k == 0 {
                draw(&spec.start, &mut rng)
            } else {
                let prev = tags[k - 1];
                let second_order = (k >= 2)
                    .then(|| {
                        spec.trigrams
                            .get(&(tags[k - 2].to_string(), prev.to_string()))
                    })
                    .flatten();
                match second_order {
                    Some(row) => draw(row, &mut rng),
                    None => draw(&spec.transitions[prev], &mut rng),
                }
            };
            tags.push(tag);
            let word = draw(&spec.emissions[tag], &mut rng);
            tokens.push(Token {
                wordform: word.to_string(),
                gold: Some(Reading::new(tag)?),
            });
        }
        sentences.push(Sentence { tokens });
    }
    Corpus::new(sentences)
}
