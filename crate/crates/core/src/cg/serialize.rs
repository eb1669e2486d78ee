use std::collections::BTreeMap;
use std::fmt::Write;

use super::{
    Atom, Condition, Constraint, ConstraintKind, FeaturePattern, Grammar, DEFAULT_STRICT_REMOVE,
    DEFAULT_STRICT_SELECT,
};
use crate::corpus::BOUNDARY;

fn needs_literal(tag: &str, sets: &BTreeMap<String, FeaturePattern>) -> bool {
    const RESERVED: &[&str] = &[
        "OR", "NOT", "BARRIER", "SELECT", "REMOVE", "SETS", "STRICT", "+", "=", "?",
    ];
    tag.chars()
        .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ';' | '"' | '#' | '='))
        || tag.starts_with('<')
        || (tag.starts_with('$') && tag.len() > 1)
        || RESERVED.contains(&tag)
        || tag.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '*')
        || sets.contains_key(tag)
}

fn write_atom(out: &mut String, atom: &Atom, sets: &BTreeMap<String, FeaturePattern>) {
    match atom {
        Atom::Tag(t) if t == BOUNDARY => out.push_str(BOUNDARY),
        Atom::Tag(t) if needs_literal(t, sets) => {
            let _ = write!(out, "<{t}>");
        }
        Atom::Tag(t) => out.push_str(t),
        Atom::Word(w) => {
            out.push('"');
            for c in w.chars() {
                if matches!(c, '"' | '\\') {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        Atom::Feature { name, value } => {
            let _ = write!(out, "{name}={value}");
        }
        Atom::Set(name) => out.push_str(name),
    }
}

fn write_pattern(
    out: &mut String,
    pattern: &FeaturePattern,
    sets: &BTreeMap<String, FeaturePattern>,
) {
    for (k, conj) in pattern.disjuncts.iter().enumerate() {
        if k > 0 {
            out.push_str(" OR ");
        }
        if let [atom @ Atom::Set(_)] = conj.as_slice() {
            write_atom(out, atom, sets);
            continue;
        }
        out.push('(');
        for (a, atom) in conj.iter().enumerate() {
            if a > 0 {
                out.push(' ');
            }
            write_atom(out, atom, sets);
        }
        out.push(')');
    }
}

fn write_condition(out: &mut String, cond: &Condition, sets: &BTreeMap<String, FeaturePattern>) {
    out.push('(');
    if cond.negated {
        out.push_str("NOT ");
    }
    let _ = write!(out, "{}", cond.position);
    if cond.careful {
        out.push('C');
    }
    out.push(' ');
    write_pattern(out, &cond.pattern, sets);
    if let Some(barrier) = &cond.barrier {
        out.push_str(" BARRIER ");
        write_pattern(out, barrier, sets);
    }
    out.push(')');
}

fn write_constraint(out: &mut String, c: &Constraint, sets: &BTreeMap<String, FeaturePattern>) {
    let head = match c.kind {
        ConstraintKind::Weighted(w) => format!("{w}"),
        ConstraintKind::Unweighted => "?".to_string(),
        ConstraintKind::Select => "SELECT".to_string(),
        ConstraintKind::Remove => "REMOVE".to_string(),
    };
    out.push_str(&head);
    out.push(' ');
    write_pattern(out, &c.target, sets);
    for cond in &c.conditions {
        out.push_str("\n    ");
        write_condition(out, cond, sets);
    }
    out.push_str(";\n");
}

/// Text form accepted by [`super::parse_grammar`]; weights are written in
/// shortest round-trip form.
pub fn serialize_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    if g.strict_select != DEFAULT_STRICT_SELECT || g.strict_remove != DEFAULT_STRICT_REMOVE {
        let _ = writeln!(out, "STRICT {} {};", g.strict_select, g.strict_remove);
    }
    if !g.sets.is_empty() {
        out.push_str("SETS\n");
        // earlier sets may be referenced by later ones; emit dependencies first
        for name in set_order(&g.sets) {
            let _ = write!(out, "{name} = ");
            write_pattern(&mut out, &g.sets[name], &g.sets);
            out.push_str(";\n");
        }
        out.push('\n');
    }
    for c in &g.constraints {
        write_constraint(&mut out, c, &g.sets);
    }
    out
}

fn set_order(sets: &BTreeMap<String, FeaturePattern>) -> Vec<&String> {
    fn visit<'a>(
        name: &'a String,
        sets: &'a BTreeMap<String, FeaturePattern>,
        done: &mut Vec<&'a String>,
        active: &mut Vec<&'a String>,
    ) {
        if done.contains(&name) || active.contains(&name) {
            return;
        }
        active.push(name);
        for atom in sets[name].disjuncts.iter().flatten() {
            if let Atom::Set(dep) = atom {
                if let Some((key, _)) = sets.get_key_value(dep) {
                    visit(key, sets, done, active);
                }
            }
        }
        active.pop();
        done.push(name);
    }
    let mut done = Vec::new();
    for name in sets.keys() {
        visit(name, sets, &mut done, &mut Vec::new());
    }
    done
}

#[cfg(test)]
mod tests {
    use super::super::parse_grammar;
    use super::*;

    const APPENDIX: &str = "4.846532 (VB)\n (-1 (MD));\n\
        REMOVE (@>N)\n (NOT 0 (DET) OR (NUM) OR (A))\n (1C (CC))\n (2C (DET));\n";

    #[test]
    fn round_trips_sample_constraints() {
        let g = parse_grammar(APPENDIX).unwrap();
        let text = serialize_grammar(&g);
        assert!(text.contains("4.846532 (VB)"));
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn sets_come_first() {
        let g =
            parse_grammar("SETS\nVAUX = (\"is\") OR (\"has\");\n10 (VBN) (*-1 VAUX BARRIER (IN));")
                .unwrap();
        let text = serialize_grammar(&g);
        assert!(text.starts_with("SETS\nVAUX = "));
        assert!(text.find("SETS").unwrap() < text.find("10 (VBN)").unwrap());
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn awkward_tags_become_literals() {
        let g = parse_grammar(
            "SETS\nN = (NN) OR (NNS);\n1 (<,>) (1 (<(>) OR (<N>) OR N OR <<< OR (<OR>));",
        )
        .unwrap();
        let text = serialize_grammar(&g);
        assert!(text.contains("(<(>)"), "{text}");
        assert!(text.contains("(<N>)"), "{text}");
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }

    #[test]
    fn strict_values_survive() {
        let g = parse_grammar("STRICT 12.5 -3;\nSELECT (A);").unwrap();
        assert_eq!(parse_grammar(&serialize_grammar(&g)).unwrap(), g);
    }
}
