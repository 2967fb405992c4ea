//! Multiple context-free grammars over word tuples.
//!
//! A non-terminal derives a tuple of `arity` word sequences. Rules combine
//! the tuples of their right-hand side by concatenating coordinates in the
//! order given by a linear recipe. Terminal material only enters through
//! constants attached to non-terminals, so every word of a yield can be
//! traced back to the leaf that introduced it.

mod format;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{parse_grammar, FormatError};
pub use validate::{Diagnostic, DiagnosticKind, ValidationReport};

/// A sequence of words.
pub type Phrase = Vec<String>;

/// A fixed-arity tuple of phrases, the value carried by a non-terminal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StringTuple(pub Vec<Phrase>);

impl StringTuple {
    /// Builds a tuple from whitespace-separated coordinate strings.
    pub fn from_strs(coords: &[&str]) -> Self {
        StringTuple(
            coords
                .iter()
                .map(|c| c.split_whitespace().map(str::to_owned).collect())
                .collect(),
        )
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[Phrase] {
        &self.0
    }

    /// All words of all coordinates, in coordinate order.
    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.0.iter().flatten()
    }

    /// Coordinates rendered as space-joined strings.
    /// Coordinates joined by commas, as written in lexicon files.
    pub fn plain(&self) -> String {
        self.to_strings().join(",")
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.0.iter().map(|c| c.join(" ")).collect()
    }
}

impl fmt::Display for StringTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "\"{}\"", c.join(" "))?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marking {
    #[default]
    Unmarked,
    Verb,
    Noun,
}

/// Internal phrase structure of the constants of an unmarked category.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InnerPhrases {
    /// All words but the last form a noun phrase, the last word is a verb
    /// whose subject is that noun phrase.
    SubjectVerb,
}

impl InnerPhrases {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerPhrases::SubjectVerb => "subject-verb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subject-verb" => Some(InnerPhrases::SubjectVerb),
            _ => None,
        }
    }
}

/// A declared non-terminal category.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonTerminal {
    pub name: String,
    pub arity: usize,
    pub marking: Marking,
    /// Subtype tags (e.g. `su`, `obj`); empty when the category is not subtyped.
    pub subtypes: Vec<String>,
    pub inner: Option<InnerPhrases>,
}

impl NonTerminal {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        NonTerminal {
            name: name.into(),
            arity,
            marking: Marking::Unmarked,
            subtypes: Vec::new(),
            inner: None,
        }
    }

    pub fn verb(mut self) -> Self {
        self.marking = Marking::Verb;
        self
    }

    pub fn noun(mut self) -> Self {
        self.marking = Marking::Noun;
        self
    }

    pub fn with_subtypes(mut self, tags: &[&str]) -> Self {
        self.subtypes = tags.iter().map(|t| t.to_string()).collect();
        self
    }

    pub fn with_inner(mut self, inner: InnerPhrases) -> Self {
        self.inner = Some(inner);
        self
    }

    /// The concrete symbols this category expands to.
    pub fn symbols(&self) -> Vec<Symbol> {
        if self.subtypes.is_empty() {
            vec![Symbol::plain(&self.name)]
        } else {
            self.subtypes
                .iter()
                .map(|t| Symbol::subtyped(&self.name, t))
                .collect()
        }
    }
}

/// A non-terminal name with an optional subtype, written `TV` or `TV.su`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub subtype: Option<String>,
}

impl Symbol {
    pub fn plain(name: &str) -> Self {
        Symbol {
            name: name.to_owned(),
            subtype: None,
        }
    }

    pub fn subtyped(name: &str, subtype: &str) -> Self {
        Symbol {
            name: name.to_owned(),
            subtype: Some(subtype.to_owned()),
        }
    }

    pub fn parse(s: &str) -> Self {
        match s.split_once('.') {
            Some((n, t)) => Symbol::subtyped(n, t),
            None => Symbol::plain(s),
        }
    }

    /// True when `self` (possibly unpinned) admits the concrete symbol `other`.
    pub fn admits(&self, other: &Symbol) -> bool {
        self.name == other.name && (self.subtype.is_none() || self.subtype == other.subtype)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subtype {
            Some(t) => write!(f, "{}.{}", self.name, t),
            None => f.write_str(&self.name),
        }
    }
}

/// Reference to coordinate `coord` of right-hand-side argument `arg` (both 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoordRef {
    pub arg: usize,
    pub coord: usize,
}

impl CoordRef {
    pub fn new(arg: usize, coord: usize) -> Self {
        CoordRef { arg, coord }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Subject,
    Object,
    None,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Subject => "subject",
            Scope::Object => "object",
            Scope::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subject" => Some(Scope::Subject),
            "object" => Some(Scope::Object),
            "none" => Some(Scope::None),
            _ => None,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubjectSource {
    /// The subject is the noun at this right-hand-side position.
    Direct(usize),
    /// The subject is the one propagated into the rule from above.
    Incoming,
}

/// Subject assignment for one verbal right-hand-side position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbSubject {
    pub position: usize,
    pub source: SubjectSource,
    /// Explicit scope label. When absent, direct subjects are labelled
    /// `none` and incoming subjects take the tag of the propagation.
    pub scope: Option<Scope>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassValue {
    SameAsIncoming,
    Np(usize),
    Nothing,
}

/// What a clause-valued right-hand-side position receives as understood subject.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Propagation {
    pub target: usize,
    pub value: PassValue,
    /// Scope tag carried down; `None` keeps the incoming tag.
    pub tag: Option<Scope>,
}

/// Subject inheritance decoration of a rule, selected by the subtypes of its
/// right-hand side.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InheritanceScheme {
    /// Conditions `(position, subtype)`; all must hold for the scheme to apply.
    pub when: Vec<(usize, String)>,
    pub subjects: Vec<VerbSubject>,
    pub passes: Vec<Propagation>,
    pub flags: Vec<String>,
}

// Builder methods take 1-based positions, as written in grammar files.
impl InheritanceScheme {
    pub fn when(conds: &[(usize, &str)]) -> Self {
        InheritanceScheme {
            when: conds.iter().map(|&(p, t)| (p - 1, t.to_owned())).collect(),
            ..Default::default()
        }
    }

    pub fn direct(self, verb: usize, np: usize) -> Self {
        self.subject(verb, SubjectSource::Direct(np - 1), None)
    }

    pub fn direct_as(self, verb: usize, np: usize, scope: Scope) -> Self {
        self.subject(verb, SubjectSource::Direct(np - 1), Some(scope))
    }

    pub fn incoming(self, verb: usize) -> Self {
        self.subject(verb, SubjectSource::Incoming, None)
    }

    fn subject(mut self, verb: usize, source: SubjectSource, scope: Option<Scope>) -> Self {
        self.subjects.push(VerbSubject {
            position: verb - 1,
            source,
            scope,
        });
        self
    }

    pub fn pass_np(self, target: usize, np: usize, tag: Scope) -> Self {
        self.pass(target, PassValue::Np(np - 1), Some(tag))
    }

    pub fn pass_incoming(self, target: usize, tag: Option<Scope>) -> Self {
        self.pass(target, PassValue::SameAsIncoming, tag)
    }

    fn pass(mut self, target: usize, value: PassValue, tag: Option<Scope>) -> Self {
        self.passes.push(Propagation {
            target: target - 1,
            value,
            tag,
        });
        self
    }

    pub fn flag(mut self, name: &str) -> Self {
        self.flags.push(name.to_owned());
        self
    }
}

impl InheritanceScheme {
    pub fn matches(&self, rhs: &[Symbol]) -> bool {
        self.when.iter().all(|(pos, tag)| {
            rhs.get(*pos)
                .and_then(|s| s.subtype.as_deref())
                .is_some_and(|t| t == tag)
        })
    }

    pub fn subject_of(&self, position: usize) -> Option<&VerbSubject> {
        self.subjects.iter().find(|s| s.position == position)
    }

    pub fn pass_to(&self, position: usize) -> Option<&Propagation> {
        self.passes.iter().find(|p| p.target == position)
    }

    pub fn uses_incoming(&self) -> bool {
        self.subjects
            .iter()
            .any(|s| s.source == SubjectSource::Incoming)
            || self
                .passes
                .iter()
                .any(|p| p.value == PassValue::SameAsIncoming)
    }
}

/// A rewrite rule `lhs(recipe) <- rhs...` with its inheritance schemes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub label: String,
    pub lhs: Symbol,
    /// Right-hand-side categories; an unpinned subtyped category ranges over
    /// all its subtypes.
    pub rhs: Vec<Symbol>,
    /// One entry per left-hand-side coordinate.
    pub recipe: Vec<Vec<CoordRef>>,
    pub schemes: Vec<InheritanceScheme>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ApplyError {
    #[error("rule {label} takes {expected} arguments, got {found}")]
    ArgumentCount {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("rule {label}: argument {position} has arity {found}, expected {expected}")]
    ArityMismatch {
        label: String,
        position: usize,
        expected: usize,
        found: usize,
    },
}

impl Rule {
    pub fn new(label: &str, lhs: &str, recipe: Vec<Vec<CoordRef>>, rhs: &[&str]) -> Self {
        Rule {
            label: label.to_owned(),
            lhs: Symbol::parse(lhs),
            rhs: rhs.iter().map(|s| Symbol::parse(s)).collect(),
            recipe,
            schemes: Vec::new(),
        }
    }

    pub fn with_scheme(mut self, scheme: InheritanceScheme) -> Self {
        self.schemes.push(scheme);
        self
    }

    /// Number of coordinates the recipe consumes from argument `arg`.
    pub fn arg_arity(&self, arg: usize) -> usize {
        self.recipe.iter().flatten().filter(|r| r.arg == arg).count()
    }

    /// The first scheme whose subtype conditions hold for the concrete `rhs`.
    pub fn scheme_for(&self, rhs: &[Symbol]) -> Option<&InheritanceScheme> {
        self.schemes.iter().find(|s| s.matches(rhs))
    }

    /// Concatenates argument coordinates in recipe order.
    pub fn apply(&self, args: &[StringTuple]) -> Result<StringTuple, ApplyError> {
        if args.len() != self.rhs.len() {
            return Err(ApplyError::ArgumentCount {
                label: self.label.clone(),
                expected: self.rhs.len(),
                found: args.len(),
            });
        }
        for (i, a) in args.iter().enumerate() {
            let expected = self.arg_arity(i);
            if a.arity() != expected {
                return Err(ApplyError::ArityMismatch {
                    label: self.label.clone(),
                    position: i + 1,
                    expected,
                    found: a.arity(),
                });
            }
        }
        let coords = self
            .recipe
            .iter()
            .map(|coord| {
                coord
                    .iter()
                    .flat_map(|r| args[r.arg].0[r.coord].iter().cloned())
                    .collect()
            })
            .collect();
        Ok(StringTuple(coords))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("unknown non-terminal `{0}`")]
    UnknownNonTerminal(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

/// A normalized MCFG with verb/noun marking and inheritance schemes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub id: String,
    pub start: String,
    pub nonterminals: Vec<NonTerminal>,
    pub constants: BTreeMap<Symbol, Vec<StringTuple>>,
    pub rules: Vec<Rule>,
}

impl Grammar {
    pub fn new(id: &str, start: &str) -> Self {
        Grammar {
            id: id.to_owned(),
            start: start.to_owned(),
            nonterminals: Vec::new(),
            constants: BTreeMap::new(),
            rules: Vec::new(),
        }
    }

    pub fn nonterminal(&self, name: &str) -> Option<&NonTerminal> {
        self.nonterminals.iter().find(|n| n.name == name)
    }

    pub fn arity_of(&self, name: &str) -> Result<usize, GrammarError> {
        self.nonterminal(name)
            .map(|n| n.arity)
            .ok_or_else(|| GrammarError::UnknownNonTerminal(name.to_owned()))
    }

    pub fn rule(&self, label: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.label == label)
    }

    /// Maximal arity over all non-terminals.
    pub fn multiplicity(&self) -> usize {
        self.nonterminals.iter().map(|n| n.arity).max().unwrap_or(0)
    }

    pub fn marking(&self, name: &str) -> Marking {
        self.nonterminal(name).map(|n| n.marking).unwrap_or_default()
    }

    pub fn verb_marked(&self) -> Vec<&str> {
        self.marked(Marking::Verb)
    }

    pub fn noun_marked(&self) -> Vec<&str> {
        self.marked(Marking::Noun)
    }

    fn marked(&self, m: Marking) -> Vec<&str> {
        self.nonterminals
            .iter()
            .filter(|n| n.marking == m)
            .map(|n| n.name.as_str())
            .collect()
    }

    pub fn constants_of(&self, sym: &Symbol) -> &[StringTuple] {
        self.constants.get(sym).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Adds a constant, ignoring exact duplicates.
    pub fn add_constant(&mut self, sym: Symbol, value: StringTuple) {
        let entry = self.constants.entry(sym).or_default();
        if !entry.contains(&value) {
            entry.push(value);
        }
    }

    /// Applies the rule with the given label, checking argument arities
    /// against the declared non-terminals.
    pub fn apply_rule(&self, label: &str, args: &[StringTuple]) -> Result<StringTuple, GrammarError> {
        let rule = self
            .rule(label)
            .ok_or_else(|| GrammarError::UnknownRule(label.to_owned()))?;
        if args.len() == rule.rhs.len() {
            for (i, (sym, a)) in rule.rhs.iter().zip(args).enumerate() {
                let expected = self.arity_of(&sym.name)?;
                if a.arity() != expected {
                    return Err(ApplyError::ArityMismatch {
                        label: rule.label.clone(),
                        position: i + 1,
                        expected,
                        found: a.arity(),
                    }
                    .into());
                }
            }
        }
        Ok(rule.apply(args)?)
    }

    /// All concrete right-hand sides `rule` can be instantiated with.
    pub fn rhs_combinations(&self, rule: &Rule) -> Vec<Vec<Symbol>> {
        validate::rhs_combinations(self, rule)
    }

    /// Non-terminals that receive an understood subject from some scheme.
    pub fn clause_valued(&self) -> std::collections::BTreeSet<String> {
        validate::clause_valued(self)
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    pub fn to_text(&self) -> String {
        format::write_grammar(self)
    }
}

/// Shorthand for building recipes: `coords(&[&[(1, 1), (3, 1)], &[(2, 1), (3, 2)]])`
/// with 1-based `(argument, coordinate)` pairs.
pub fn recipe(coords: &[&[(usize, usize)]]) -> Vec<Vec<CoordRef>> {
    coords
        .iter()
        .map(|c| c.iter().map(|&(a, k)| CoordRef::new(a - 1, k - 1)).collect())
        .collect()
}
