//! Category-to-wordlist lexicons, seeded sampling of lexical realizations
//! and sentence post-processing.

mod sample;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::{Grammar, StringTuple, Symbol};

pub use sample::{
    postprocess, realize, sample_realizations, tree_rng, uniform_below, GenerationConfig,
    GenerationError, Processed,
};

pub const DEFAULT_LEXICON_TEXT: &str = include_str!("../../data/default.lex");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("slot {0} is missing")]
    MissingSlot(Symbol),
    #[error("slot {0} is empty")]
    EmptySlot(Symbol),
    #[error("slot {slot}: entry `{entry}` has {found} coordinates, expected {expected}")]
    Arity {
        slot: Symbol,
        entry: String,
        expected: usize,
        found: usize,
    },
    #[error("slots {a} and {b} share the entry `{entry}`")]
    SharedEntry { a: Symbol, b: Symbol, entry: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

/// Ordered constant tuples per lexical slot.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub slots: BTreeMap<Symbol, Vec<StringTuple>>,
}

fn line_error(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Line {
        line,
        message: message.into(),
    }
}

impl Lexicon {
    /// Parses `slot NT[.sub] : a ; b c ; d,e` lines. Repeated slot lines
    /// extend the slot; a repeated entry is an error.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut slots: BTreeMap<Symbol, Vec<StringTuple>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let rest = line
                .strip_prefix("slot ")
                .ok_or_else(|| line_error(n, "expected `slot NAME : entries`"))?;
            let (name, entries) = rest
                .split_once(':')
                .ok_or_else(|| line_error(n, "missing `:` after the slot name"))?;
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(line_error(n, format!("bad slot name `{name}`")));
            }
            let sym = Symbol::parse(name);
            let slot = slots.entry(sym.clone()).or_default();
            for entry in entries.split(';') {
                let coords: Vec<&str> = entry.split(',').map(str::trim).collect();
                if coords.iter().any(|c| c.is_empty()) {
                    return Err(line_error(n, format!("empty entry or coordinate in slot {sym}")));
                }
                let value = StringTuple::from_strs(&coords);
                if slot.contains(&value) {
                    return Err(line_error(n, format!("duplicate entry `{}` in slot {sym}", value.plain())));
                }
                slot.push(value);
            }
        }
        Ok(Lexicon { slots })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|e| LexiconError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_LEXICON_TEXT).expect("bundled lexicon parses")
    }

    pub fn slot(&self, sym: &Symbol) -> &[StringTuple] {
        self.slots.get(sym).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether the slot holds a single-coordinate entry with this text.
    pub fn contains(&self, sym: &Symbol, text: &str) -> bool {
        self.slot(sym).iter().any(|t| t.plain() == text)
    }

    /// Checks that every lexical slot of the grammar is present, non-empty
    /// and arity-consistent.
    pub fn check(&self, g: &Grammar) -> Result<(), LexiconError> {
        for sym in lexical_slots(g) {
            let entries = self
                .slots
                .get(&sym)
                .ok_or_else(|| LexiconError::MissingSlot(sym.clone()))?;
            if entries.is_empty() {
                return Err(LexiconError::EmptySlot(sym));
            }
            let expected = g.arity_of(&sym.name).unwrap_or(1);
            if let Some(bad) = entries.iter().find(|e| e.arity() != expected) {
                return Err(LexiconError::Arity {
                    slot: sym.clone(),
                    entry: bad.plain(),
                    expected,
                    found: bad.arity(),
                });
            }
        }
        // Subtype slots of one category (e.g. TV.su and TV.obj) must not overlap.
        for nt in g.nonterminals.iter().filter(|n| n.subtypes.len() > 1) {
            let syms = nt.symbols();
            for (i, a) in syms.iter().enumerate() {
                for b in &syms[i + 1..] {
                    if let Some(e) = self.slot(a).iter().find(|e| self.slot(b).contains(e)) {
                        return Err(LexiconError::SharedEntry {
                            a: a.clone(),
                            b: b.clone(),
                            entry: e.plain(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// A copy of the grammar whose constants are exactly this lexicon's
    /// entries for the grammar's lexical slots.
    pub fn populate(&self, g: &Grammar) -> Result<Grammar, LexiconError> {
        self.check(g)?;
        let mut out = g.clone();
        out.constants = lexical_slots(g)
            .into_iter()
            .map(|s| {
                let v = self.slots[&s].clone();
                (s, v)
            })
            .collect();
        Ok(out)
    }

    /// Canonical text: slots in symbol order, one line each.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (sym, entries) in &self.slots {
            let joined: Vec<String> = entries.iter().map(StringTuple::plain).collect();
            writeln!(out, "slot {sym} : {}", joined.join(" ; ")).unwrap();
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

/// Symbols of the categories that never occur on a left-hand side, i.e.
/// the leaves every derivation bottoms out in.
pub fn lexical_slots(g: &Grammar) -> Vec<Symbol> {
    g.nonterminals
        .iter()
        .filter(|n| !g.rules.iter().any(|r| r.lhs.name == n.name))
        .flat_map(|n| n.symbols())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};

    #[test]
    fn default_lexicon_cardinalities() {
        let lex = Lexicon::default_lexicon();
        let size = |s: &str| lex.slot(&Symbol::parse(s)).len();
        assert_eq!(size("TV.su"), 9);
        assert_eq!(size("TV.obj"), 33);
        assert_eq!(size("INF_c.su"), 9);
        assert_eq!(size("INF_c.obj"), 33);
        assert_eq!(size("CV"), 2);
        assert_eq!(size("RV"), 6);
        assert_eq!(size("ADV"), 30);
        assert!(size("NP") >= 100);
        assert!(lex.slot(&Symbol::parse("NP")).iter().all(|t| t.plain().starts_with("de ")));
        assert!(lex.contains(&Symbol::parse("TV.obj"), "vraagt"));
        assert!(lex.contains(&Symbol::parse("RV"), "leren"));
        assert!(lex.contains(&Symbol::parse("RV"), "helpen"));
    }

    #[test]
    fn default_lexicon_covers_both_grammars() {
        let lex = Lexicon::default_lexicon();
        for g in [control_grammar(), raising_grammar()] {
            let p = lex.populate(&g).unwrap();
            assert!(p.validate().is_valid());
            assert_eq!(p.constants_of(&Symbol::parse("NP")).len(), lex.slot(&Symbol::parse("NP")).len());
        }
    }

    #[test]
    fn lexical_slots_of_control() {
        let names: Vec<String> = lexical_slots(&control_grammar()).iter().map(|s| s.to_string()).collect();
        assert_eq!(
            names,
            ["NP", "TV.su", "TV.obj", "CV", "INF_iv", "INF_tv", "INF_c.su", "INF_c.obj", "TE", "ADV"]
        );
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let dup = "slot NP : de hond\n\nslot NP : de kat ; de hond\n";
        assert!(matches!(Lexicon::parse(dup), Err(LexiconError::Line { line: 3, .. })));
        assert!(matches!(
            Lexicon::parse("# c\nNP : de hond"),
            Err(LexiconError::Line { line: 2, .. })
        ));
        assert!(matches!(
            Lexicon::parse("slot NP de hond"),
            Err(LexiconError::Line { line: 1, .. })
        ));
        assert!(matches!(
            Lexicon::parse("slot NP : de hond ; ; de kat"),
            Err(LexiconError::Line { line: 1, .. })
        ));
    }

    #[test]
    fn missing_and_arity_errors() {
        let lex = Lexicon::parse("slot NP : de hond\nslot PREF : Iemand ziet\n").unwrap();
        assert!(matches!(lex.check(&raising_grammar()), Err(LexiconError::MissingSlot(_))));
        let mut g = raising_grammar();
        g.nonterminals.iter_mut().find(|n| n.name == "NP").unwrap().arity = 2;
        let full = Lexicon::default_lexicon();
        assert!(matches!(full.check(&g), Err(LexiconError::Arity { .. })));
    }

    #[test]
    fn subtype_slots_must_be_disjoint() {
        let mut text = DEFAULT_LEXICON_TEXT.to_owned();
        text.push_str("slot TV.su : vraagt\n");
        let lex = Lexicon::parse(&text).unwrap();
        assert!(matches!(
            lex.check(&control_grammar()),
            Err(LexiconError::SharedEntry { .. })
        ));
    }

    #[test]
    fn hash_ignores_layout_but_not_content() {
        let a = Lexicon::parse("slot NP : de hond ; de kat\nslot TE : te").unwrap();
        let b = Lexicon::parse("# x\nslot TE:te\nslot NP : de hond\nslot NP: de kat").unwrap();
        let c = Lexicon::parse("slot NP : de kat ; de hond\nslot TE : te").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(Lexicon::parse(&a.canonical_text()).unwrap(), a);
    }
}
