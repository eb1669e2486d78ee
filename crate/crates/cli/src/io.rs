use std::fmt;
use std::path::Path;

use relaxtag::cg::{parse_grammar, ConstraintKind, Grammar, GrammarError};
use relaxtag::corpus::{
    parse_hmm_spec, parse_lexicon, parse_tagged_corpus, Corpus, CorpusError, CorpusFormat, HmmSpec, Lexicon,
    Reading, POS,
};

/// A problem with an input or output file, located as `file[:line[:col]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for DataError {}

impl DataError {
    pub fn whole(path: &Path, message: impl fmt::Display) -> Self {
        DataError {
            location: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn file(path: &Path, e: std::io::Error) -> Self {
        Self::whole(path, e)
    }

    pub fn at(path: &Path, line: usize, message: impl fmt::Display) -> Self {
        DataError {
            location: format!("{}:{line}", path.display()),
            message: message.to_string(),
        }
    }

    pub fn at_col(path: &Path, line: usize, col: usize, message: impl fmt::Display) -> Self {
        DataError {
            location: format!("{}:{line}:{col}", path.display()),
            message: message.to_string(),
        }
    }

    fn corpus(path: &Path, e: CorpusError) -> Self {
        match e {
            CorpusError::MalformedLine { line, reason } => Self::at(path, line, format!("malformed line: {reason}")),
            CorpusError::Spec { line, reason } => Self::at(path, line, reason),
            e => Self::whole(path, e),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::file(path, e))
}

/// Writes to `path`, or to standard output when absent.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), DataError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| DataError::file(p, e)),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| DataError::file(Path::new("<stdout>"), e))
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, DataError> {
    parse_tagged_corpus(&read_text(path)?, format).map_err(|e| DataError::corpus(path, e))
}

pub fn load_lexicon(path: &Path, closed_class: &[&str]) -> Result<Lexicon, DataError> {
    parse_lexicon(&read_text(path)?, closed_class).map_err(|e| DataError::corpus(path, e))
}

pub fn load_hmm_spec(path: &Path) -> Result<HmmSpec, DataError> {
    parse_hmm_spec(&read_text(path)?).map_err(|e| DataError::corpus(path, e))
}

pub fn load_grammar(path: &Path) -> Result<Grammar, DataError> {
    parse_grammar(&read_text(path)?).map_err(|e| match e {
        GrammarError::Syntax { line, col, expected } => {
            DataError::at_col(path, line, col, format!("syntax error: expected {expected}"))
        }
        GrammarError::UnknownSet { name, line, col } => DataError::at_col(path, line, col, format!("unknown set {name:?}")),
    })
}

/// Loads and concatenates grammars, refusing constraints left unweighted.
pub fn load_weighted_grammars(paths: &[impl AsRef<Path>]) -> Result<Grammar, DataError> {
    let mut out = Grammar::default();
    for path in paths {
        let path = path.as_ref();
        let g = load_grammar(path)?;
        if let Some(idx) = g.constraints.iter().position(|c| c.kind == ConstraintKind::Unweighted) {
            let msg = "constraint has no weight; run weight-grammar first";
            return Err(match g.span(idx) {
                Some(s) => DataError::at_col(path, s.line, s.col, msg),
                None => DataError::whole(path, msg),
            });
        }
        out.extend(g);
    }
    Ok(out)
}

/// Tagged TSV with one or more readings per token. Several readings share
/// the pos column joined by '|'; a feature column `key=v1|v2` gives each
/// reading its value, an empty value meaning the reading lacks the feature.
pub fn format_tagged(sentences: &[(Vec<String>, Vec<Vec<Reading>>)]) -> String {
    let mut out = String::new();
    for (k, (words, readings)) in sentences.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for (word, rs) in words.iter().zip(readings) {
            out.push_str(word);
            out.push('\t');
            out.push_str(&rs.iter().map(Reading::pos).collect::<Vec<_>>().join("|"));
            let mut keys: Vec<&str> = rs.iter().flat_map(|r| r.extra_features().map(|(k, _)| k)).collect();
            keys.sort_unstable();
            keys.dedup();
            for key in keys {
                let values: Vec<&str> = rs.iter().map(|r| r.get(key).unwrap_or("")).collect();
                out.push('\t');
                out.push_str(key);
                out.push('=');
                out.push_str(&values.join("|"));
            }
            out.push('\n');
        }
    }
    out
}

fn parse_token_sets(line: &str) -> Result<(String, Vec<Reading>), String> {
    let mut cols = line.split('\t');
    let word = cols.next().unwrap_or_default();
    if word.is_empty() {
        return Err("empty wordform".into());
    }
    let pos_col = cols.next().ok_or("expected wordform<TAB>pos")?;
    let pos: Vec<&str> = pos_col.split('|').collect();
    let mut features: Vec<Vec<(&str, &str)>> = pos.iter().map(|p| vec![(POS, *p)]).collect();
    for col in cols {
        let (key, values) = col.split_once('=').ok_or_else(|| format!("column {col:?} is not key=value"))?;
        let values: Vec<&str> = values.split('|').collect();
        if values.len() != pos.len() {
            return Err(format!("{key} has {} values for {} readings", values.len(), pos.len()));
        }
        for (f, v) in features.iter_mut().zip(values) {
            if !v.is_empty() {
                f.push((key, v));
            }
        }
    }
    let readings = features
        .into_iter()
        .map(|f| Reading::with_features(f).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok((word.to_string(), readings))
}

/// Reads the output of [`format_tagged`]: per sentence, the words and the
/// reading sets.
pub fn parse_tagged_sets(text: &str, path: &Path) -> Result<Vec<(Vec<String>, Vec<Vec<Reading>>)>, DataError> {
    let mut out = Vec::new();
    let mut current: (Vec<String>, Vec<Vec<Reading>>) = (Vec::new(), Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.0.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') && !line.contains('\t') {
            continue;
        }
        let (word, readings) = parse_token_sets(line).map_err(|e| DataError::at(path, idx + 1, e))?;
        current.0.push(word);
        current.1.push(readings);
    }
    if !current.0.is_empty() {
        out.push(current);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(pos: &str, lemma: Option<&str>) -> Reading {
        let mut f = vec![(POS, pos)];
        if let Some(l) = lemma {
            f.push(("lemma", l));
        }
        Reading::with_features(f).unwrap()
    }

    #[test]
    fn tagged_sets_round_trip() {
        let sentences = vec![
            (
                vec!["runs".to_string(), "fast".to_string()],
                vec![
                    vec![reading("NNS", Some("run")), reading("VBZ", Some("run"))],
                    vec![reading("RB", None), reading("JJ", Some("fast"))],
                ],
            ),
            (vec!["."].into_iter().map(String::from).collect(), vec![vec![reading(".", None)]]),
        ];
        let text = format_tagged(&sentences);
        assert_eq!(text, "runs\tNNS|VBZ\tlemma=run|run\nfast\tRB|JJ\tlemma=|fast\n\n.\t.\n");
        assert_eq!(parse_tagged_sets(&text, Path::new("p")).unwrap(), sentences);
    }

    #[test]
    fn mismatched_feature_values_are_located() {
        let err = parse_tagged_sets("a\tX\n\nb\tX|Y\tlemma=b\n", Path::new("p.tsv")).unwrap_err();
        assert_eq!(err.location, "p.tsv:3");
    }
}
