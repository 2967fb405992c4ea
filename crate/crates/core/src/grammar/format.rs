//! Line-oriented grammar files.
//!
//! ```text
//! # comment
//! grammar raising
//! start S
//! nt SUB arity=2
//! nt TV arity=1 verb subtype=su,obj
//! nt PREF arity=1 inner=subject-verb
//! const NP = "de student" | "de docent"
//! const PAIR = "left words,right words"
//! rule B4: SUB(x1 x3.1, x2 x3.2) <- NP RV SUB
//! inherit A1 when 2=obj: subj 2 = np(1); pass 4 = np(3) as object
//! ```
//!
//! Positions and coordinates are 1-based. `xI` abbreviates `xI.1`. A rule's
//! right-hand side may pin a subtype (`TV.su`); otherwise it ranges over all
//! subtypes of the category. Inheritance items are `subj P = np(Q) [as SCOPE]`,
//! `subj P = incoming [as SCOPE]`, `pass P = np(Q) as SCOPE`,
//! `pass P = incoming [as SCOPE]`, `pass P = none` and `flag NAME`.

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    CoordRef, Grammar, InheritanceScheme, InnerPhrases, Marking, NonTerminal, PassValue,
    Propagation, Rule, Scope, StringTuple, SubjectSource, Symbol, VerbSubject,
};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError {
        line,
        message: message.into(),
    })
}

pub fn parse_grammar(text: &str) -> Result<Grammar, FormatError> {
    let mut g = Grammar::new("", "");
    let mut schemes: Vec<(usize, String, InheritanceScheme)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .map(|(k, r)| (k, r.trim()))
            .unwrap_or((content, ""));
        match keyword {
            "grammar" => g.id = single_word(rest, line, "grammar")?,
            "start" => g.start = single_word(rest, line, "start")?,
            "nt" => g.nonterminals.push(parse_nt(rest, line)?),
            "const" => {
                let (sym, values) = parse_const(rest, line)?;
                for v in values {
                    g.add_constant(sym.clone(), v);
                }
            }
            "rule" => g.rules.push(parse_rule(rest, line)?),
            "inherit" => {
                let (label, scheme) = parse_inherit(rest, line)?;
                schemes.push((line, label, scheme));
            }
            other => return err(line, format!("unknown declaration `{other}`")),
        }
    }

    for (line, label, scheme) in schemes {
        match g.rules.iter_mut().find(|r| r.label == label) {
            Some(rule) => rule.schemes.push(scheme),
            None => return err(line, format!("inherit for unknown rule `{label}`")),
        }
    }
    if g.start.is_empty() {
        return err(0, "missing `start` declaration");
    }
    Ok(g)
}

fn single_word(rest: &str, line: usize, what: &str) -> Result<String, FormatError> {
    let mut words = rest.split_whitespace();
    match (words.next(), words.next()) {
        (Some(w), None) => Ok(w.to_owned()),
        _ => err(line, format!("`{what}` takes exactly one name")),
    }
}

fn parse_nt(rest: &str, line: usize) -> Result<NonTerminal, FormatError> {
    let mut words = rest.split_whitespace();
    let Some(name) = words.next() else {
        return err(line, "`nt` needs a name");
    };
    let mut nt = NonTerminal::new(name, 0);
    let mut arity = None;
    for w in words {
        match w.split_once('=') {
            Some(("arity", v)) => match v.parse::<usize>() {
                Ok(a) => arity = Some(a),
                Err(_) => return err(line, format!("bad arity `{v}`")),
            },
            Some(("subtype", v)) => nt.subtypes = v.split(',').map(str::to_owned).collect(),
            Some(("inner", v)) => match InnerPhrases::parse(v) {
                Some(i) => nt.inner = Some(i),
                None => return err(line, format!("unknown inner structure `{v}`")),
            },
            None if w == "verb" => nt.marking = Marking::Verb,
            None if w == "noun" => nt.marking = Marking::Noun,
            _ => return err(line, format!("unexpected attribute `{w}`")),
        }
    }
    match arity {
        Some(a) => nt.arity = a,
        None => return err(line, format!("`{name}` is missing `arity=`")),
    }
    Ok(nt)
}

fn parse_const(rest: &str, line: usize) -> Result<(Symbol, Vec<StringTuple>), FormatError> {
    let Some((name, values)) = rest.split_once('=') else {
        return err(line, "`const` needs `NAME = \"...\"`");
    };
    let name = name.trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return err(line, format!("bad constant target `{name}`"));
    }
    let mut out = Vec::new();
    let mut s = values.trim();
    loop {
        let Some(body) = s.strip_prefix('"') else {
            return err(line, "expected a quoted constant");
        };
        let Some(end) = body.find('"') else {
            return err(line, "unterminated quote");
        };
        let coords: Vec<&str> = body[..end].split(',').collect();
        let tuple = StringTuple::from_strs(&coords);
        if tuple.coords().iter().any(Vec::is_empty) {
            return err(line, "empty constant coordinate");
        }
        out.push(tuple);
        s = body[end + 1..].trim_start();
        if s.is_empty() {
            break;
        }
        match s.strip_prefix('|') {
            Some(next) => s = next.trim_start(),
            None => return err(line, "expected `|` between constants"),
        }
    }
    Ok((Symbol::parse(name), out))
}

fn parse_index(s: &str, line: usize) -> Result<usize, FormatError> {
    match s.parse::<usize>() {
        Ok(i) if i >= 1 => Ok(i - 1),
        _ => err(line, format!("expected a 1-based index, got `{s}`")),
    }
}

fn parse_coord_ref(s: &str, line: usize) -> Result<CoordRef, FormatError> {
    let Some(body) = s.strip_prefix('x') else {
        return err(line, format!("bad coordinate reference `{s}`"));
    };
    let (arg, coord) = match body.split_once('.') {
        Some((a, c)) => (parse_index(a, line)?, parse_index(c, line)?),
        None => (parse_index(body, line)?, 0),
    };
    Ok(CoordRef::new(arg, coord))
}

fn parse_rule(rest: &str, line: usize) -> Result<Rule, FormatError> {
    let Some((label, body)) = rest.split_once(':') else {
        return err(line, "`rule` needs `LABEL: LHS(...) <- RHS`");
    };
    let Some((lhs, rhs)) = body.split_once("<-") else {
        return err(line, "rule is missing `<-`");
    };
    let lhs = lhs.trim();
    let (Some(open), Some(inner)) = (lhs.find('('), lhs.strip_suffix(')')) else {
        return err(line, "left-hand side must look like `NAME(...)`");
    };
    let lhs_name = lhs[..open].trim();
    let mut recipe = Vec::new();
    for coord in inner[open + 1..].split(',') {
        let refs = coord
            .split_whitespace()
            .map(|r| parse_coord_ref(r, line))
            .collect::<Result<Vec<_>, _>>()?;
        if refs.is_empty() {
            return err(line, "empty recipe coordinate");
        }
        recipe.push(refs);
    }
    let rhs: Vec<Symbol> = rhs.split_whitespace().map(Symbol::parse).collect();
    if rhs.is_empty() {
        return err(line, "rule has an empty right-hand side");
    }
    Ok(Rule {
        label: label.trim().to_owned(),
        lhs: Symbol::parse(lhs_name),
        rhs,
        recipe,
        schemes: Vec::new(),
    })
}

fn parse_np(s: &str, line: usize) -> Result<usize, FormatError> {
    match s.strip_prefix("np(").and_then(|r| r.strip_suffix(')')) {
        Some(i) => parse_index(i, line),
        None => err(line, format!("expected `np(N)`, got `{s}`")),
    }
}

fn parse_tag(words: &[&str], line: usize) -> Result<Option<Scope>, FormatError> {
    match words {
        [] => Ok(None),
        ["as", s] => match Scope::parse(s) {
            Some(scope) => Ok(Some(scope)),
            None => err(line, format!("unknown scope `{s}`")),
        },
        _ => err(line, format!("unexpected `{}`", words.join(" "))),
    }
}

fn parse_inherit(rest: &str, line: usize) -> Result<(String, InheritanceScheme), FormatError> {
    let Some((head, items)) = rest.split_once(':') else {
        return err(line, "`inherit` needs `LABEL [when ...]: items`");
    };
    let mut scheme = InheritanceScheme::default();
    let head = head.trim();
    let (label, cond) = match head.split_once(" when ") {
        Some((l, c)) => (l.trim(), Some(c)),
        None => (head, None),
    };
    for c in cond.into_iter().flat_map(|c| c.split(',')) {
        let Some((pos, tag)) = c.trim().split_once('=') else {
            return err(line, format!("bad condition `{c}`"));
        };
        scheme
            .when
            .push((parse_index(pos.trim(), line)?, tag.trim().to_owned()));
    }

    for item in items.split(';') {
        let padded = item.replace('=', " = ");
        let words: Vec<&str> = padded.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["flag", name] => scheme.flags.push((*name).to_owned()),
            ["subj", pos, "=", value, tail @ ..] => {
                let source = if *value == "incoming" {
                    SubjectSource::Incoming
                } else {
                    SubjectSource::Direct(parse_np(value, line)?)
                };
                scheme.subjects.push(VerbSubject {
                    position: parse_index(pos, line)?,
                    source,
                    scope: parse_tag(tail, line)?,
                });
            }
            ["pass", pos, "=", value, tail @ ..] => {
                let value = match *value {
                    "incoming" => PassValue::SameAsIncoming,
                    "none" => PassValue::Nothing,
                    v => PassValue::Np(parse_np(v, line)?),
                };
                scheme.passes.push(Propagation {
                    target: parse_index(pos, line)?,
                    value,
                    tag: parse_tag(tail, line)?,
                });
            }
            _ => return err(line, format!("cannot parse inheritance item `{}`", item.trim())),
        }
    }
    Ok((label.to_owned(), scheme))
}

fn quote(t: &StringTuple) -> String {
    format!("\"{}\"", t.to_strings().join(","))
}

fn scope_suffix(scope: Option<Scope>) -> String {
    scope.map(|s| format!(" as {s}")).unwrap_or_default()
}

pub(crate) fn write_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "grammar {}", g.id);
    let _ = writeln!(out, "start {}", g.start);
    out.push('\n');
    for nt in &g.nonterminals {
        let _ = write!(out, "nt {} arity={}", nt.name, nt.arity);
        match nt.marking {
            Marking::Verb => out.push_str(" verb"),
            Marking::Noun => out.push_str(" noun"),
            Marking::Unmarked => {}
        }
        if !nt.subtypes.is_empty() {
            let _ = write!(out, " subtype={}", nt.subtypes.join(","));
        }
        if let Some(inner) = nt.inner {
            let _ = write!(out, " inner={}", inner.as_str());
        }
        out.push('\n');
    }
    out.push('\n');
    for (sym, values) in &g.constants {
        let shown: Vec<String> = values.iter().map(quote).collect();
        let _ = writeln!(out, "const {sym} = {}", shown.join(" | "));
    }
    out.push('\n');
    for rule in &g.rules {
        let coords: Vec<String> = rule
            .recipe
            .iter()
            .map(|c| {
                c.iter()
                    .map(|r| {
                        let arity = g.nonterminal(&rule.rhs[r.arg].name).map_or(0, |n| n.arity);
                        if arity == 1 && r.coord == 0 {
                            format!("x{}", r.arg + 1)
                        } else {
                            format!("x{}.{}", r.arg + 1, r.coord + 1)
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let rhs: Vec<String> = rule.rhs.iter().map(Symbol::to_string).collect();
        let _ = writeln!(
            out,
            "rule {}: {}({}) <- {}",
            rule.label,
            rule.lhs,
            coords.join(", "),
            rhs.join(" ")
        );
        for s in &rule.schemes {
            let _ = write!(out, "inherit {}", rule.label);
            if !s.when.is_empty() {
                let conds: Vec<String> = s.when.iter().map(|(p, t)| format!("{}={t}", p + 1)).collect();
                let _ = write!(out, " when {}", conds.join(", "));
            }
            let mut items = Vec::new();
            for v in &s.subjects {
                let src = match v.source {
                    SubjectSource::Direct(np) => format!("np({})", np + 1),
                    SubjectSource::Incoming => "incoming".to_owned(),
                };
                items.push(format!("subj {} = {src}{}", v.position + 1, scope_suffix(v.scope)));
            }
            for p in &s.passes {
                let val = match p.value {
                    PassValue::SameAsIncoming => "incoming".to_owned(),
                    PassValue::Np(np) => format!("np({})", np + 1),
                    PassValue::Nothing => "none".to_owned(),
                };
                items.push(format!("pass {} = {val}{}", p.target + 1, scope_suffix(p.tag)));
            }
            for f in &s.flags {
                items.push(format!("flag {f}"));
            }
            let _ = writeln!(out, ": {}", items.join("; "));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
grammar small
start S
nt S arity=1
nt SUB arity=2
nt NP arity=1 noun
nt V arity=1 verb subtype=a,b
const NP = "de student" | "de docent"
const V.a = "leren"
const V.b = "eten"
rule R1: S(x1.1 x1.2) <- SUB   # comment
rule R2: SUB(x1, x2) <- NP V
inherit R2: subj 2 = np(1)
"#;

    #[test]
    fn parses_small_grammar() {
        let g = parse_grammar(SMALL).unwrap();
        assert_eq!(g.id, "small");
        assert_eq!(g.arity_of("SUB").unwrap(), 2);
        assert_eq!(g.constants_of(&Symbol::plain("NP")).len(), 2);
        assert_eq!(g.rule("R2").unwrap().schemes.len(), 1);
        assert!(g.validate().is_valid(), "{:?}", g.validate().violations);
    }

    #[test]
    fn written_text_parses_back() {
        let g = parse_grammar(SMALL).unwrap();
        assert_eq!(parse_grammar(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_grammar("start S\nnt S arity=1\nnt X\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse_grammar("start S\nconst NP = \"a\" \"b\"\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_grammar("start S\ninherit Q: subj 1 = np(2)\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("unknown rule"));
    }

    #[test]
    fn rejects_empty_coordinates() {
        assert!(parse_grammar("start S\nconst A = \"a,\"\n").is_err());
        assert!(parse_grammar("start S\nrule R: S(x1, ) <- A B\n").is_err());
    }
}
