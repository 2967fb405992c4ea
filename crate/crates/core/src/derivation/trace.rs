use serde::{Deserialize, Serialize};

use super::{AbstractTree, Assignment, DerivationError, NodeKind};
use crate::grammar::{
    Grammar, InnerPhrases, Marking, PassValue, Scope, StringTuple, SubjectSource, Symbol,
};

/// Per-verb annotation: the rule immediately dominating the verb and the
/// scope under which its subject was selected.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerbInfo {
    pub rule: String,
    pub scope: Scope,
    pub symbol: Symbol,
}

/// A linearized derivation with traced phrase spans.
///
/// Spans are sorted word-index sets, ordered by first index (shorter first
/// on ties). `subject_map[v]` is the noun index of verb `v`'s subject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedYield {
    pub words: Vec<String>,
    pub noun_spans: Vec<Vec<usize>>,
    pub verb_spans: Vec<Vec<usize>>,
    pub subject_map: Vec<usize>,
    pub verbs: Vec<VerbInfo>,
    /// Flags raised by the inheritance schemes used in the derivation.
    pub flags: Vec<String>,
}

impl AnnotatedYield {
    pub fn sentence(&self) -> String {
        self.words.join(" ")
    }

    /// The words of a span, in index order.
    pub fn span_text(&self, span: &[usize]) -> String {
        span.iter()
            .map(|&i| self.words[i].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Subject pairing of a tree, independent of lexical choice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectResolution {
    pub subject_map: Vec<usize>,
    pub verbs: Vec<VerbInfo>,
    pub n_nouns: usize,
    pub flags: Vec<String>,
}

struct Occurrence {
    marking: Marking,
    tokens: Vec<usize>,
    subject: Option<usize>,
    info: Option<VerbInfo>,
}

struct Node {
    children: Vec<usize>,
    occurrence: Option<usize>,
}

struct Tracer<'g, F> {
    grammar: &'g Grammar,
    leaf_value: F,
    leaf_count: usize,
    tokens: Vec<String>,
    occurrences: Vec<Occurrence>,
    nodes: Vec<Node>,
    flags: Vec<String>,
}

impl<'g, F> Tracer<'g, F>
where
    F: FnMut(usize, &Symbol) -> Result<StringTuple, DerivationError>,
{
    fn occurrence(&mut self, marking: Marking, tokens: Vec<usize>) -> usize {
        self.occurrences.push(Occurrence {
            marking,
            tokens,
            subject: None,
            info: None,
        });
        self.occurrences.len() - 1
    }

    /// Builds token tuples bottom-up and records marked occurrences.
    fn build(&mut self, t: &AbstractTree, parent_rule: Option<&str>) -> Result<Vec<Vec<usize>>, DerivationError> {
        let id = self.nodes.len();
        self.nodes.push(Node {
            children: Vec::new(),
            occurrence: None,
        });

        let tuple = match &t.kind {
            NodeKind::Leaf => {
                let index = self.leaf_count;
                self.leaf_count += 1;
                let value = (self.leaf_value)(index, &t.symbol)?;
                let tuple: Vec<Vec<usize>> = value
                    .coords()
                    .iter()
                    .map(|coord| {
                        coord
                            .iter()
                            .map(|w| {
                                self.tokens.push(w.clone());
                                self.tokens.len() - 1
                            })
                            .collect()
                    })
                    .collect();
                let inner = self.grammar.nonterminal(&t.symbol.name).and_then(|n| n.inner);
                if let Some(InnerPhrases::SubjectVerb) = inner {
                    let mut all: Vec<usize> = tuple.iter().flatten().copied().collect();
                    let verb = all.pop().expect("inner constants have at least two words");
                    let noun = self.occurrence(Marking::Noun, all);
                    let v = self.occurrence(Marking::Verb, vec![verb]);
                    self.occurrences[v].subject = Some(noun);
                    self.occurrences[v].info = Some(VerbInfo {
                        rule: parent_rule.unwrap_or_default().to_owned(),
                        scope: Scope::None,
                        symbol: t.symbol.clone(),
                    });
                }
                tuple
            }
            NodeKind::Apply { rule: label, children } => {
                let rule = self
                    .grammar
                    .rule(label)
                    .ok_or_else(|| DerivationError::UnknownRule(label.clone()))?;
                if children.len() != rule.rhs.len() {
                    return Err(DerivationError::Apply {
                        rule: label.clone(),
                        message: format!("{} children for {} slots", children.len(), rule.rhs.len()),
                    });
                }
                let mut parts = Vec::with_capacity(children.len());
                for (i, (child, slot)) in children.iter().zip(&rule.rhs).enumerate() {
                    if !slot.admits(&child.symbol) {
                        return Err(DerivationError::Apply {
                            rule: label.clone(),
                            message: format!("child {} is {}, expected {slot}", i + 1, child.symbol),
                        });
                    }
                    let child_id = self.nodes.len();
                    self.nodes[id].children.push(child_id);
                    let part = self.build(child, Some(label))?;
                    if part.len() != rule.arg_arity(i) {
                        return Err(DerivationError::Apply {
                            rule: label.clone(),
                            message: format!(
                                "child {} has arity {}, expected {}",
                                i + 1,
                                part.len(),
                                rule.arg_arity(i)
                            ),
                        });
                    }
                    parts.push(part);
                }
                rule.recipe
                    .iter()
                    .map(|coord| {
                        coord
                            .iter()
                            .flat_map(|r| parts[r.arg][r.coord].iter().copied())
                            .collect()
                    })
                    .collect()
            }
        };

        let marking = self.grammar.marking(&t.symbol.name);
        if marking != Marking::Unmarked {
            let tokens = tuple.iter().flatten().copied().collect();
            self.nodes[id].occurrence = Some(self.occurrence(marking, tokens));
        }
        Ok(tuple)
    }

    /// Assigns subjects top-down following the inheritance schemes.
    fn resolve(&mut self, t: &AbstractTree, id: usize, incoming: Option<(usize, Scope)>) -> Result<(), DerivationError> {
        let NodeKind::Apply { rule: label, children } = &t.kind else {
            return Ok(());
        };
        let rule = self
            .grammar
            .rule(label)
            .ok_or_else(|| DerivationError::UnknownRule(label.clone()))?;
        let concrete: Vec<Symbol> = children.iter().map(|c| c.symbol.clone()).collect();
        let scheme = rule.scheme_for(&concrete);
        let child_ids = self.nodes[id].children.clone();
        let occ_of = |pos: usize| child_ids.get(pos).and_then(|&c| self.nodes[c].occurrence);

        let mut passes = vec![None; children.len()];
        let mut assigned = Vec::new();
        for (i, child) in children.iter().enumerate() {
            if self.grammar.marking(&child.symbol.name) == Marking::Verb {
                let Some(scheme) = scheme else {
                    let rhs: Vec<String> = concrete.iter().map(Symbol::to_string).collect();
                    return Err(DerivationError::NoScheme {
                        rule: label.clone(),
                        rhs: rhs.join(" "),
                    });
                };
                let binding = scheme.subject_of(i).ok_or(DerivationError::UnresolvedVerb {
                    rule: label.clone(),
                    position: i + 1,
                })?;
                let (subject, scope) = match binding.source {
                    SubjectSource::Direct(np) => {
                        let occ = occ_of(np)
                            .filter(|&o| self.occurrences[o].marking == Marking::Noun)
                            .ok_or(DerivationError::NotANoun {
                                rule: label.clone(),
                                position: np + 1,
                            })?;
                        (occ, binding.scope.unwrap_or(Scope::None))
                    }
                    SubjectSource::Incoming => {
                        let (occ, tag) = incoming.ok_or_else(|| DerivationError::NothingPropagated {
                            rule: label.clone(),
                        })?;
                        (occ, binding.scope.unwrap_or(tag))
                    }
                };
                let verb = occ_of(i).expect("verb-marked children have occurrences");
                assigned.push((verb, subject, scope, child.symbol.clone()));
            }
            if let Some(p) = scheme.and_then(|s| s.pass_to(i)) {
                passes[i] = match p.value {
                    PassValue::Nothing => None,
                    PassValue::Np(np) => {
                        let occ = occ_of(np)
                            .filter(|&o| self.occurrences[o].marking == Marking::Noun)
                            .ok_or(DerivationError::NotANoun {
                                rule: label.clone(),
                                position: np + 1,
                            })?;
                        let tag = p.tag.or(incoming.map(|(_, t)| t)).unwrap_or(Scope::None);
                        Some((occ, tag))
                    }
                    PassValue::SameAsIncoming => {
                        let (occ, tag) = incoming.ok_or_else(|| DerivationError::NothingPropagated {
                            rule: label.clone(),
                        })?;
                        Some((occ, p.tag.unwrap_or(tag)))
                    }
                };
            }
        }
        for (verb, subject, scope, symbol) in assigned {
            self.occurrences[verb].subject = Some(subject);
            self.occurrences[verb].info = Some(VerbInfo {
                rule: label.clone(),
                scope,
                symbol,
            });
        }
        if let Some(s) = scheme {
            for f in &s.flags {
                if !self.flags.contains(f) {
                    self.flags.push(f.clone());
                }
            }
        }
        for (i, child) in children.iter().enumerate() {
            self.resolve(child, child_ids[i], passes[i])?;
        }
        Ok(())
    }
}

fn trace<F>(g: &Grammar, t: &AbstractTree, leaf_value: F) -> Result<(AnnotatedYield, usize), DerivationError>
where
    F: FnMut(usize, &Symbol) -> Result<StringTuple, DerivationError>,
{
    let mut tracer = Tracer {
        grammar: g,
        leaf_value,
        leaf_count: 0,
        tokens: Vec::new(),
        occurrences: Vec::new(),
        nodes: Vec::new(),
        flags: Vec::new(),
    };
    let root = tracer.build(t, None)?;
    tracer.resolve(t, 0, None)?;

    if root.len() != 1 {
        return Err(DerivationError::RootArity(root.len()));
    }
    let order = &root[0];
    let mut position = vec![0; tracer.tokens.len()];
    for (p, &tok) in order.iter().enumerate() {
        position[tok] = p;
    }
    let words = order.iter().map(|&tok| tracer.tokens[tok].clone()).collect();

    let spans: Vec<Vec<usize>> = tracer
        .occurrences
        .iter()
        .map(|o| {
            let mut s: Vec<usize> = o.tokens.iter().map(|&tok| position[tok]).collect();
            s.sort_unstable();
            s
        })
        .collect();
    let ordered = |m: Marking| {
        let mut ids: Vec<usize> = (0..tracer.occurrences.len())
            .filter(|&i| tracer.occurrences[i].marking == m)
            .collect();
        ids.sort_by_key(|&i| (spans[i].first().copied(), spans[i].len(), i));
        ids
    };
    let nouns = ordered(Marking::Noun);
    let verbs = ordered(Marking::Verb);
    let mut noun_rank = vec![usize::MAX; tracer.occurrences.len()];
    for (rank, &o) in nouns.iter().enumerate() {
        noun_rank[o] = rank;
    }

    let mut subject_map = Vec::with_capacity(verbs.len());
    let mut infos = Vec::with_capacity(verbs.len());
    for &v in &verbs {
        let occ = &tracer.occurrences[v];
        let (Some(subject), Some(info)) = (occ.subject, occ.info.clone()) else {
            return Err(DerivationError::UnresolvedVerb {
                rule: String::from("<root>"),
                position: 0,
            });
        };
        subject_map.push(noun_rank[subject]);
        infos.push(info);
    }

    Ok((
        AnnotatedYield {
            words,
            noun_spans: nouns.iter().map(|&i| spans[i].clone()).collect(),
            verb_spans: verbs.iter().map(|&i| spans[i].clone()).collect(),
            subject_map,
            verbs: infos,
            flags: tracer.flags,
        },
        tracer.leaf_count,
    ))
}

/// Evaluates the tree under a lexical assignment, tracing every marked
/// phrase to its (possibly discontinuous) word span and pairing each verb
/// with its subject.
pub fn linearize(g: &Grammar, t: &AbstractTree, a: &Assignment) -> Result<AnnotatedYield, DerivationError> {
    let (out, leaves) = trace(g, t, |index, symbol| {
        let choice = a.0.get(index).ok_or_else(|| DerivationError::MissingLeaf {
            index,
            symbol: symbol.clone(),
        })?;
        if &choice.symbol != symbol {
            return Err(DerivationError::WrongCategory {
                index,
                expected: symbol.clone(),
                found: choice.symbol.clone(),
            });
        }
        if !g.constants_of(symbol).contains(&choice.value) {
            return Err(DerivationError::UnknownConstant {
                index,
                symbol: symbol.clone(),
                value: choice.value.to_string(),
            });
        }
        Ok(choice.value.clone())
    })?;
    if a.0.len() > leaves {
        return Err(DerivationError::ExtraAssignments {
            extra: a.0.len() - leaves,
        });
    }
    Ok(out)
}

/// Resolves verb-subject pairings of a tree. The result does not depend on
/// lexical choice, so the first constant of each leaf category stands in.
pub fn resolve_subjects(g: &Grammar, t: &AbstractTree) -> Result<SubjectResolution, DerivationError> {
    let (y, _) = trace(g, t, |index, symbol| {
        g.constants_of(symbol)
            .first()
            .cloned()
            .ok_or_else(|| DerivationError::MissingLeaf {
                index,
                symbol: symbol.clone(),
            })
    })?;
    Ok(SubjectResolution {
        subject_map: y.subject_map,
        verbs: y.verbs,
        n_nouns: y.noun_spans.len(),
        flags: y.flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};
    use crate::derivation::enumerate_trees;

    fn leaf(s: &str) -> AbstractTree {
        AbstractTree::leaf(Symbol::parse(s))
    }

    fn node(sym: &str, rule: &str, children: Vec<AbstractTree>) -> AbstractTree {
        AbstractTree::apply(Symbol::parse(sym), rule, children)
    }

    fn causative_tree() -> AbstractTree {
        node(
            "S",
            "A2",
            vec![
                leaf("NP"),
                leaf("TV.obj"),
                leaf("NP"),
                leaf("NP"),
                leaf("CV"),
                node("VC", "A4", vec![leaf("TE"), leaf("INF_tv"), leaf("NP")]),
            ],
        )
    }

    #[test]
    fn causative_tree_spans_and_subjects() {
        let g = control_grammar();
        let t = causative_tree();
        assert_eq!(t.depth(), 2);
        let a = Assignment::from_leaves(
            &t,
            &["de docent", "vraagt", "de hond", "de student", "laten", "te", "doen", "de oefeningen"],
        );
        let y = linearize(&g, &t, &a).unwrap();
        assert_eq!(
            y.sentence(),
            "de docent vraagt de hond de student de oefeningen te laten doen"
        );
        assert_eq!(y.noun_spans, vec![vec![0, 1], vec![3, 4], vec![5, 6], vec![7, 8]]);
        assert_eq!(y.verb_spans, vec![vec![2], vec![10], vec![11]]);
        // vraagt -> de docent, laten -> de hond, doen -> de student
        assert_eq!(y.subject_map, vec![0, 1, 2]);
        let scopes: Vec<Scope> = y.verbs.iter().map(|v| v.scope).collect();
        assert_eq!(scopes, vec![Scope::None, Scope::Object, Scope::Object]);
        let rules: Vec<&str> = y.verbs.iter().map(|v| v.rule.as_str()).collect();
        assert_eq!(rules, vec!["A2", "A2", "A4"]);
    }

    #[test]
    fn raising_base_clause_with_prefix() {
        let g = raising_grammar();
        let t = node("S", "B1", vec![leaf("PREF"), node("SUB", "B2", vec![leaf("NP"), leaf("INF_iv")])]);
        let a = Assignment::from_leaves(&t, &["Iemand ziet", "de eend", "studeren"]);
        let y = linearize(&g, &t, &a).unwrap();
        assert_eq!(y.sentence(), "Iemand ziet de eend studeren");
        assert_eq!(y.noun_spans, vec![vec![0], vec![2, 3]]);
        assert_eq!(y.verb_spans, vec![vec![1], vec![4]]);
        assert_eq!(y.subject_map, vec![0, 1]);
        assert_eq!(y.verbs[0].rule, "B1");
        assert_eq!(y.verbs[1].rule, "B2");
    }

    #[test]
    fn assignment_errors() {
        let g = raising_grammar();
        let t = node("S", "B1", vec![leaf("PREF"), node("SUB", "B2", vec![leaf("NP"), leaf("INF_iv")])]);
        let short = Assignment::from_leaves(&t, &["Iemand ziet", "de eend"]);
        assert!(matches!(
            linearize(&g, &t, &short),
            Err(DerivationError::MissingLeaf { index: 2, .. })
        ));
        let mut wrong = Assignment::from_leaves(&t, &["Iemand ziet", "de eend", "studeren"]);
        wrong.0[1].symbol = Symbol::plain("RV");
        assert!(matches!(
            linearize(&g, &t, &wrong),
            Err(DerivationError::WrongCategory { index: 1, .. })
        ));
        let unknown = Assignment::from_leaves(&t, &["Iemand ziet", "de eend", "vliegen"]);
        assert!(matches!(
            linearize(&g, &t, &unknown),
            Err(DerivationError::UnknownConstant { index: 2, .. })
        ));
    }

    #[test]
    fn incoming_at_root_is_an_error() {
        let mut g = control_grammar();
        g.start = "VC".into();
        let t = node("VC", "A3", vec![leaf("TE"), leaf("INF_iv")]);
        assert_eq!(
            resolve_subjects(&g, &t).unwrap_err(),
            DerivationError::NothingPropagated { rule: "A3".into() }
        );
    }

    #[test]
    fn every_tree_resolves() {
        for (g, d) in [(control_grammar(), 3), (raising_grammar(), 5)] {
            for t in enumerate_trees(&g, d) {
                let r = resolve_subjects(&g, &t).unwrap();
                assert!(r.subject_map.iter().all(|&n| n < r.n_nouns));
            }
        }
    }
}
