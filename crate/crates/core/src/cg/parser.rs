//! Recursive-descent parser for the grammar dialect.
//!
//! ```text
//! grammar    := ("STRICT" number number ";")? ("SETS"? setdef)* statement*
//! setdef     := NAME "=" pattern ";"
//! statement  := head pattern condition* ";"
//! head       := number | "?" | "SELECT" | "REMOVE"
//! condition  := "(" "NOT"? position pattern ("BARRIER" pattern)? ")"
//! position   := "*"? ["-"] digits "C"?
//! pattern    := orlist ("+" orlist)*
//! orlist     := primary ("OR"? primary)*
//! primary    := "(" atom+ ")" | atom
//! atom       := "word" | <literal-tag> | $SET | name=value | TAG-or-SET
//! ```
//!
//! `+` intersects or-lists, so `VAUX + (VBD) OR (VB)` reads as VAUX and one
//! of the verb tags. A bare identifier names a set when one is defined under
//! that name, otherwise it is a tag. `<...>` is always a literal tag, e.g.
//! `<,>` for the comma tag; `<<<` is the sentence boundary.

use std::collections::BTreeMap;

use super::{
    Atom, Condition, Constraint, ConstraintKind, FeaturePattern, Grammar, GrammarError, Position,
    Span,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Semi,
    Plus,
    Eq,
    Question,
    Quoted(String),
    Literal(String),
    SetRef(String),
    /// Numbers and positions; interpreted by context.
    Num(String),
    Word(String),
}

#[derive(Debug, Clone)]
struct Lexeme {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_numeric_like(s: &str) -> bool {
    let body = s.strip_prefix('*').unwrap_or(s);
    let body = body.strip_prefix(['-', '+']).unwrap_or(body);
    body.starts_with(|c: char| c.is_ascii_digit())
        && body.chars().all(|c| {
            c.is_ascii_digit()
                || c == '.'
                || c == 'C'
                || c == 'e'
                || c == 'E'
                || c == '-'
                || c == '+'
        })
}

fn lex(text: &str) -> Result<Vec<Lexeme>, GrammarError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let push = |out: &mut Vec<Lexeme>, tok| {
            out.push(Lexeme {
                tok,
                line: start_line,
                col: start_col,
            })
        };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    {
                        let ch = chars[i];
                        advance(&mut i, &mut line, &mut col, ch)
                    };
                }
            }
            '(' | ')' | ';' => {
                push(
                    &mut out,
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Semi,
                    },
                );
                advance(&mut i, &mut line, &mut col, c);
            }
            '"' => {
                advance(&mut i, &mut line, &mut col, c);
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None | Some('\n') => {
                            return Err(GrammarError::Syntax {
                                line: start_line,
                                col: start_col,
                                expected: "closing '\"'".into(),
                            })
                        }
                        Some('"') => {
                            advance(&mut i, &mut line, &mut col, '"');
                            break;
                        }
                        Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                            s.push(chars[i + 1]);
                            advance(&mut i, &mut line, &mut col, '\\');
                            advance(&mut i, &mut line, &mut col, s.chars().last().unwrap());
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(&mut i, &mut line, &mut col, ch);
                        }
                    }
                }
                push(&mut out, Tok::Quoted(s));
            }
            '<' => {
                if chars[i..].starts_with(&['<', '<', '<']) {
                    for _ in 0..3 {
                        advance(&mut i, &mut line, &mut col, '<');
                    }
                    push(&mut out, Tok::Literal(crate::corpus::BOUNDARY.to_string()));
                    continue;
                }
                advance(&mut i, &mut line, &mut col, c);
                let mut s = String::new();
                while let Some(&ch) = chars.get(i) {
                    if ch == '>' && !s.is_empty() {
                        break;
                    }
                    if ch.is_whitespace() {
                        break;
                    }
                    s.push(ch);
                    advance(&mut i, &mut line, &mut col, ch);
                }
                if chars.get(i) != Some(&'>') {
                    return Err(GrammarError::Syntax {
                        line: start_line,
                        col: start_col,
                        expected: "closing '>' of literal tag".into(),
                    });
                }
                advance(&mut i, &mut line, &mut col, '>');
                push(&mut out, Tok::Literal(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = chars.get(i) {
                    if ch.is_whitespace() || matches!(ch, '(' | ')' | ';' | '"') {
                        break;
                    }
                    s.push(ch);
                    advance(&mut i, &mut line, &mut col, ch);
                }
                let tok = match s.as_str() {
                    "+" => Tok::Plus,
                    "=" => Tok::Eq,
                    "?" => Tok::Question,
                    _ if s.len() > 1 && s.starts_with('$') => Tok::SetRef(s[1..].to_string()),
                    _ if is_numeric_like(&s) => Tok::Num(s),
                    _ => Tok::Word(s),
                };
                push(&mut out, tok);
            }
        }
    }
    Ok(out)
}

/// Sets must be defined before use, so a set body can only refer to earlier
/// sets and references never form cycles.
struct Parser {
    toks: Vec<Lexeme>,
    pos: usize,
    eof: (usize, usize),
    sets: BTreeMap<String, FeaturePattern>,
}

const KEYWORDS: &[&str] = &["OR", "NOT", "BARRIER", "SELECT", "REMOVE", "SETS", "STRICT"];

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map_or(self.eof, |l| (l.line, l.col))
    }

    fn error<T>(&self, expected: &str) -> Result<T, GrammarError> {
        let (line, col) = self.here();
        Err(GrammarError::Syntax {
            line,
            col,
            expected: expected.to_string(),
        })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn is_word(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), GrammarError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn grammar(mut self) -> Result<Grammar, GrammarError> {
        let mut g = Grammar::default();
        if self.is_word("STRICT") {
            self.pos += 1;
            g.strict_select = self.number()?;
            g.strict_remove = self.number()?;
            if !(g.strict_select > 0.0 && g.strict_remove < 0.0) {
                return self.error("STRICT <positive> <negative>");
            }
            self.expect(Tok::Semi, "';'")?;
        }
        loop {
            if self.is_word("SETS") {
                self.pos += 1;
                continue;
            }
            let is_setdef = matches!(
                (self.peek(), self.peek_at(1)),
                (Some(Tok::Word(_)), Some(Tok::Eq))
            );
            if !is_setdef {
                break;
            }
            let Some(Tok::Word(name)) = self.bump() else {
                unreachable!()
            };
            if KEYWORDS.contains(&name.as_str()) {
                self.pos -= 1;
                return self.error("set name");
            }
            self.pos += 1;
            let pattern = self.pattern()?;
            self.expect(Tok::Semi, "';' after set definition")?;
            self.sets.insert(name, pattern);
        }
        while self.peek().is_some() {
            let (line, col) = self.here();
            let c = self.statement()?;
            g.constraints.push(c);
            g.spans.push(Span { line, col });
        }
        g.sets = self.sets;
        Ok(g)
    }

    fn number(&mut self) -> Result<f64, GrammarError> {
        match self.peek() {
            Some(Tok::Num(s)) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    self.pos += 1;
                    Ok(v)
                }
                _ => self.error("finite number"),
            },
            _ => self.error("number"),
        }
    }

    fn statement(&mut self) -> Result<Constraint, GrammarError> {
        let kind = match self.peek() {
            Some(Tok::Question) => {
                self.pos += 1;
                ConstraintKind::Unweighted
            }
            Some(Tok::Num(_)) => ConstraintKind::Weighted(self.number()?),
            Some(Tok::Word(w)) if w == "SELECT" => {
                self.pos += 1;
                ConstraintKind::Select
            }
            Some(Tok::Word(w)) if w == "REMOVE" => {
                self.pos += 1;
                ConstraintKind::Remove
            }
            _ => return self.error("weight, '?', SELECT or REMOVE"),
        };
        let target = self.pattern()?;
        let mut conditions = Vec::new();
        while self.peek() == Some(&Tok::LParen) {
            conditions.push(self.condition()?);
        }
        self.expect(Tok::Semi, "'(' condition or ';'")?;
        Ok(Constraint {
            kind,
            target,
            conditions,
        })
    }

    fn condition_starts(&self) -> bool {
        self.peek() == Some(&Tok::LParen)
            && match self.peek_at(1) {
                Some(Tok::Num(_)) => true,
                Some(Tok::Word(w)) => w == "NOT",
                _ => false,
            }
    }

    fn condition(&mut self) -> Result<Condition, GrammarError> {
        self.expect(Tok::LParen, "'('")?;
        let negated = if self.is_word("NOT") {
            self.pos += 1;
            true
        } else {
            false
        };
        let (position, careful) = match self.peek() {
            Some(Tok::Num(s)) => match parse_position(s) {
                Some(p) => {
                    self.pos += 1;
                    p
                }
                None => return self.error("position such as -1, 2C, *1 or *-1C"),
            },
            _ => return self.error("position"),
        };
        let pattern = self.pattern()?;
        let barrier = if self.is_word("BARRIER") {
            if !matches!(position, Position::Scan(_)) {
                return self.error("BARRIER only after a '*' scan position");
            }
            self.pos += 1;
            Some(self.pattern()?)
        } else {
            None
        };
        self.expect(Tok::RParen, "')' closing condition")?;
        Ok(Condition {
            position,
            careful,
            negated,
            pattern,
            barrier,
        })
    }

    fn pattern(&mut self) -> Result<FeaturePattern, GrammarError> {
        let mut dnf = self.orlist()?;
        while self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            let rhs = self.orlist()?;
            let mut product = Vec::with_capacity(dnf.len() * rhs.len());
            for a in &dnf {
                for b in &rhs {
                    product.push(a.iter().chain(b.iter()).cloned().collect());
                }
            }
            dnf = product;
        }
        Ok(FeaturePattern { disjuncts: dnf })
    }

    /// Adjacent primaries are alternatives, as in `(0 "as" "As")`; a '('
    /// followed by a position starts the next condition instead.
    fn orlist(&mut self) -> Result<Vec<Vec<Atom>>, GrammarError> {
        let mut alts = vec![self.primary()?];
        loop {
            if self.is_word("OR") {
                self.pos += 1;
                alts.push(self.primary()?);
            } else if self.primary_starts() && !self.condition_starts() {
                alts.push(self.primary()?);
            } else {
                break;
            }
        }
        Ok(alts)
    }

    fn primary_starts(&self) -> bool {
        match self.peek() {
            Some(Tok::LParen) => !matches!(self.peek_at(1), Some(Tok::Num(_))),
            Some(Tok::Quoted(_)) | Some(Tok::Literal(_)) | Some(Tok::SetRef(_)) => true,
            Some(Tok::Word(w)) => !KEYWORDS.contains(&w.as_str()),
            _ => false,
        }
    }

    fn primary(&mut self) -> Result<Vec<Atom>, GrammarError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let mut atoms = vec![self.atom()?];
            while self.peek() != Some(&Tok::RParen) {
                atoms.push(self.atom()?);
            }
            self.pos += 1;
            Ok(atoms)
        } else {
            Ok(vec![self.atom()?])
        }
    }

    fn atom(&mut self) -> Result<Atom, GrammarError> {
        let (line, col) = self.here();
        let atom = match self.peek().cloned() {
            Some(Tok::Quoted(w)) => Atom::Word(w),
            Some(Tok::Literal(t)) => Atom::Tag(t),
            Some(Tok::SetRef(name)) => {
                if !self.sets.contains_key(&name) {
                    return Err(GrammarError::UnknownSet { name, line, col });
                }
                Atom::Set(name)
            }
            Some(Tok::Word(w)) if !KEYWORDS.contains(&w.as_str()) => match w.split_once('=') {
                Some((name, value)) if !name.is_empty() && !value.is_empty() => Atom::Feature {
                    name: name.to_string(),
                    value: value.to_string(),
                },
                Some(_) => return self.error("name=value"),
                None if self.sets.contains_key(&w) => Atom::Set(w),
                None => Atom::Tag(w),
            },
            _ => return self.error("tag, \"word\", <literal> or set name"),
        };
        self.pos += 1;
        Ok(atom)
    }
}

fn parse_position(s: &str) -> Option<(Position, bool)> {
    let (scan, body) = match s.strip_prefix('*') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (body, careful) = match body.strip_suffix('C') {
        Some(rest) => (rest, true),
        None => (body, false),
    };
    if body.is_empty() || body.contains('.') || body.starts_with('+') {
        return None;
    }
    let offset: i32 = body.parse().ok()?;
    if scan {
        (offset != 0).then_some((Position::Scan(offset), careful))
    } else {
        Some((Position::Fixed(offset), careful))
    }
}

pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let toks = lex(text)?;
    let lines = text.lines().count().max(1);
    let last_len = text.lines().last().map_or(0, |l| l.chars().count());
    Parser {
        toks,
        pos: 0,
        eof: (lines, last_len + 1),
        sets: BTreeMap::new(),
    }
    .grammar()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_weighted_bigram_constraint() {
        let g = parse_grammar("4.846532 (VB)\n (-1 (MD));").unwrap();
        assert_eq!(g.constraints.len(), 1);
        let c = &g.constraints[0];
        assert_eq!(c.kind, ConstraintKind::Weighted(4.846532));
        assert_eq!(c.target, FeaturePattern::tag("VB"));
        assert_eq!(
            c.conditions,
            vec![Condition::at(-1, FeaturePattern::tag("MD"))]
        );
        assert_eq!(g.span(0), Some(Span { line: 1, col: 1 }));
    }

    #[test]
    fn parses_remove_with_not_and_careful() {
        let g =
            parse_grammar("REMOVE (@>N)\n (NOT 0 (DET) OR (NUM) OR (A))\n (1C (CC))\n (2C (DET));")
                .unwrap();
        let c = &g.constraints[0];
        assert_eq!(c.kind, ConstraintKind::Remove);
        assert_eq!(c.target, FeaturePattern::tag("@>N"));
        assert_eq!(c.conditions.len(), 3);
        let not0 = &c.conditions[0];
        assert!(not0.negated && !not0.careful);
        assert_eq!(not0.position, Position::Fixed(0));
        assert_eq!(not0.pattern, FeaturePattern::any_tag(&["DET", "NUM", "A"]));
        assert!(c.conditions[1].careful && c.conditions[2].careful);
        assert_eq!(c.conditions[2].position, Position::Fixed(2));
    }

    #[test]
    fn unterminated_statement_is_a_syntax_error() {
        match parse_grammar("10 (VBN) (-1 (MD)") {
            Err(GrammarError::Syntax { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_grammar("10 (VBN) (-1 (MD))").is_err());
    }

    #[test]
    fn parses_barrier_scan_with_set() {
        let text = "SETS\nVAUX = (\"is\") OR (\"was\") OR (\"has\");\n\
            10 (VBN)\n (*-1 VAUX + (VBD) OR (VB) OR (VBZ)\n BARRIER (VBN) OR (IN) OR (<,>));";
        let g = parse_grammar(text).unwrap();
        assert_eq!(g.sets["VAUX"].disjuncts.len(), 3);
        let cond = &g.constraints[0].conditions[0];
        assert_eq!(cond.position, Position::Scan(-1));
        assert_eq!(cond.pattern.disjuncts.len(), 3);
        assert_eq!(
            cond.pattern.disjuncts[0],
            vec![Atom::Set("VAUX".into()), Atom::Tag("VBD".into())]
        );
        let barrier = cond.barrier.as_ref().unwrap();
        assert_eq!(barrier.disjuncts[2], vec![Atom::Tag(",".into())]);
    }

    #[test]
    fn parses_tree_style_wordform_tests() {
        let g = parse_grammar("-5.81 (IN) (0 \"as\" \"As\") (1 RB) (2 IN);").unwrap();
        let c = &g.constraints[0];
        assert_eq!(
            c.conditions[0].pattern,
            FeaturePattern::any_word(&["as", "As"])
        );
        assert_eq!(c.conditions[1].pattern, FeaturePattern::tag("RB"));
        let g = parse_grammar("-2.82059 (DT \"all\") (1 (RB));").unwrap();
        assert_eq!(
            g.constraints[0].target.disjuncts[0],
            vec![Atom::Tag("DT".into()), Atom::Word("all".into())]
        );
    }

    #[test]
    fn boundary_and_careful_scan() {
        let g = parse_grammar("REMOVE (@>N) (*1C <<< OR (@V) OR (@CS) BARRIER (@NH));").unwrap();
        let cond = &g.constraints[0].conditions[0];
        assert_eq!(cond.position, Position::Scan(1));
        assert!(cond.careful);
        assert_eq!(cond.pattern.disjuncts[0], vec![Atom::Tag("<<<".into())]);
    }

    #[test]
    fn unknown_explicit_set() {
        assert_eq!(
            parse_grammar("1 (A) (1 $NOPE);"),
            Err(GrammarError::UnknownSet {
                name: "NOPE".into(),
                line: 1,
                col: 10
            })
        );
    }

    #[test]
    fn unweighted_and_strict_header() {
        let g = parse_grammar("STRICT 70 -55;\n? (NN) (-1 (DT));").unwrap();
        assert_eq!(g.strict_select, 70.0);
        assert_eq!(g.strict_remove, -55.0);
        assert_eq!(g.constraints[0].kind, ConstraintKind::Unweighted);
    }

    #[test]
    fn barrier_needs_scan() {
        assert!(matches!(
            parse_grammar("1 (A) (1 (B) BARRIER (C));"),
            Err(GrammarError::Syntax { .. })
        ));
        assert!(parse_grammar("1 (A) (*0 (B));").is_err());
    }

    #[test]
    fn comments_and_feature_atoms() {
        let g = parse_grammar("# hand rules\n2 (syn=@NH) (-1 (lemma=the)); # trailing\n").unwrap();
        assert_eq!(
            g.constraints[0].target.disjuncts[0],
            vec![Atom::Feature {
                name: "syn".into(),
                value: "@NH".into()
            }]
        );
    }
}
