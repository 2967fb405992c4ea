//! Abstract derivation trees: enumeration to a depth bound, linearization
//! into annotated yields, subject resolution and brute-force recognition.

mod recognize;
mod trace;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{Grammar, StringTuple, Symbol};

pub use recognize::recognize_bruteforce;
pub use trace::{linearize, resolve_subjects, AnnotatedYield, SubjectResolution, VerbInfo};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Apply {
        rule: String,
        children: Vec<AbstractTree>,
    },
    Leaf,
}

/// A derivation: rule applications over lexical leaves. Every node records
/// the concrete (subtyped) symbol it produces.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstractTree {
    pub symbol: Symbol,
    pub kind: NodeKind,
}

impl AbstractTree {
    pub fn leaf(symbol: Symbol) -> Self {
        AbstractTree {
            symbol,
            kind: NodeKind::Leaf,
        }
    }

    pub fn apply(symbol: Symbol, rule: &str, children: Vec<AbstractTree>) -> Self {
        AbstractTree {
            symbol,
            kind: NodeKind::Apply {
                rule: rule.to_owned(),
                children,
            },
        }
    }

    /// Rule-application nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match &self.kind {
            NodeKind::Leaf => 0,
            NodeKind::Apply { children, .. } => {
                1 + children.iter().map(AbstractTree::depth).max().unwrap_or(0)
            }
        }
    }

    /// Leaf symbols in left-to-right (preorder) order.
    pub fn leaves(&self) -> Vec<&Symbol> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Symbol>) {
        match &self.kind {
            NodeKind::Leaf => out.push(&self.symbol),
            NodeKind::Apply { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Rule labels in preorder.
    pub fn rules(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let NodeKind::Apply { rule, .. } = &t.kind {
                out.push(rule.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a AbstractTree)) {
        f(self);
        if let NodeKind::Apply { children, .. } = &self.kind {
            for c in children {
                c.walk(f);
            }
        }
    }

    /// Preorder tokens: rule labels for applications, symbols for leaves.
    pub fn sort_key(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |t| match &t.kind {
            NodeKind::Apply { rule, .. } => out.push(rule.clone()),
            NodeKind::Leaf => out.push(t.symbol.to_string()),
        });
        out
    }
}

/// Bracketed form, e.g. `B1(PREF, B2(NP, INF_iv))`.
impl fmt::Display for AbstractTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NodeKind::Leaf => write!(f, "{}", self.symbol),
            NodeKind::Apply { rule, children } => {
                write!(f, "{rule}(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DerivationError {
    #[error("no assignment for leaf {index} ({symbol})")]
    MissingLeaf { index: usize, symbol: Symbol },
    #[error("leaf {index} is {expected} but the assignment gives {found}")]
    WrongCategory {
        index: usize,
        expected: Symbol,
        found: Symbol,
    },
    #[error("leaf {index}: {value} is not a constant of {symbol}")]
    UnknownConstant {
        index: usize,
        symbol: Symbol,
        value: String,
    },
    #[error("assignment has {extra} more entries than the tree has leaves")]
    ExtraAssignments { extra: usize },
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule {rule}: {message}")]
    Apply { rule: String, message: String },
    #[error("rule {rule}: no inheritance scheme for {rhs}")]
    NoScheme { rule: String, rhs: String },
    #[error("rule {rule} needs an incoming subject but none was propagated")]
    NothingPropagated { rule: String },
    #[error("rule {rule}: verb at position {position} has no subject")]
    UnresolvedVerb { rule: String, position: usize },
    #[error("rule {rule}: position {position} is not a noun phrase")]
    NotANoun { rule: String, position: usize },
    #[error("the root yields {0} coordinates, expected 1")]
    RootArity(usize),
}

/// A lexical choice for one leaf.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafChoice {
    pub symbol: Symbol,
    pub value: StringTuple,
}

/// Lexical choices for the leaves of a tree, in leaf order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<LeafChoice>);

impl Assignment {
    /// Pairs leaf symbols with values, e.g. for hand-built examples.
    pub fn from_leaves(tree: &AbstractTree, values: &[&str]) -> Self {
        Assignment(
            tree.leaves()
                .into_iter()
                .zip(values)
                .map(|(s, v)| LeafChoice {
                    symbol: s.clone(),
                    value: StringTuple::from_strs(&v.split(',').collect::<Vec<_>>()),
                })
                .collect(),
        )
    }
}

type Memo = HashMap<(Symbol, usize), Rc<Vec<AbstractTree>>>;

fn trees_of(g: &Grammar, sym: &Symbol, depth: usize, memo: &mut Memo) -> Rc<Vec<AbstractTree>> {
    if let Some(hit) = memo.get(&(sym.clone(), depth)) {
        return hit.clone();
    }
    let mut out = Vec::new();
    if !g.constants_of(sym).is_empty() {
        out.push(AbstractTree::leaf(sym.clone()));
    }
    if depth > 0 {
        for rule in g.rules.iter().filter(|r| &r.lhs == sym) {
            for combo in g.rhs_combinations(rule) {
                let options: Vec<Rc<Vec<AbstractTree>>> = combo
                    .iter()
                    .map(|c| trees_of(g, c, depth - 1, memo))
                    .collect();
                if options.iter().any(|o| o.is_empty()) {
                    continue;
                }
                let mut index = vec![0usize; options.len()];
                'product: loop {
                    let children = index
                        .iter()
                        .zip(&options)
                        .map(|(&i, o)| o[i].clone())
                        .collect();
                    out.push(AbstractTree::apply(sym.clone(), &rule.label, children));
                    for k in (0..index.len()).rev() {
                        index[k] += 1;
                        if index[k] < options[k].len() {
                            continue 'product;
                        }
                        index[k] = 0;
                    }
                    break;
                }
            }
        }
    }
    let out = Rc::new(out);
    memo.insert((sym.clone(), depth), out.clone());
    out
}

/// All distinct derivation trees of the start symbol with depth at most
/// `max_depth`, ordered lexicographically by their preorder rule labels and
/// leaf symbols. Trees that differ only in a subtype are distinct.
pub fn enumerate_trees(g: &Grammar, max_depth: usize) -> Vec<AbstractTree> {
    let mut memo = Memo::new();
    let start = Symbol::plain(&g.start);
    let mut trees: Vec<(Vec<String>, AbstractTree)> = trees_of(g, &start, max_depth, &mut memo)
        .iter()
        .map(|t| (t.sort_key(), t.clone()))
        .collect();
    trees.sort_by(|a, b| a.0.cmp(&b.0));
    trees.dedup_by(|a, b| a.0 == b.0);
    trees.into_iter().map(|(_, t)| t).collect()
}

/// Number of trees per exact depth.
pub fn depth_histogram(trees: &[AbstractTree]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for t in trees {
        *out.entry(t.depth()).or_default() += 1;
    }
    out
}
