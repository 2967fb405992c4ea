use std::collections::HashSet;

use super::{enumerate_trees, AbstractTree, Assignment, LeafChoice, NodeKind};
use crate::grammar::{Grammar, StringTuple};

/// Root-order layout of a tree: each entry is (leaf index, coordinate).
fn layout(g: &Grammar, t: &AbstractTree, next_leaf: &mut usize) -> Option<Vec<Vec<(usize, usize)>>> {
    match &t.kind {
        NodeKind::Leaf => {
            let leaf = *next_leaf;
            *next_leaf += 1;
            let arity = g.arity_of(&t.symbol.name).ok()?;
            Some((0..arity).map(|c| vec![(leaf, c)]).collect())
        }
        NodeKind::Apply { rule, children } => {
            let rule = g.rule(rule)?;
            let parts = children
                .iter()
                .map(|c| layout(g, c, next_leaf))
                .collect::<Option<Vec<_>>>()?;
            rule.recipe
                .iter()
                .map(|coord| {
                    coord
                        .iter()
                        .map(|r| parts.get(r.arg)?.get(r.coord).cloned())
                        .collect::<Option<Vec<_>>>()
                        .map(|v| v.concat())
                })
                .collect()
        }
    }
}

struct Search<'a> {
    words: &'a [String],
    segments: Vec<(usize, usize)>,
    options: Vec<&'a [StringTuple]>,
    bound: Vec<Option<usize>>,
    /// (segment, position) states known to fail with no pending bindings.
    dead: HashSet<(usize, usize)>,
}

impl Search<'_> {
    fn run(&mut self, seg: usize, pos: usize) -> bool {
        if seg == self.segments.len() {
            return pos == self.words.len();
        }
        let unbound_ahead = self.segments[seg..].iter().all(|&(l, _)| self.bound[l].is_none());
        if unbound_ahead && self.dead.contains(&(seg, pos)) {
            return false;
        }
        let (leaf, coord) = self.segments[seg];
        let found = match self.bound[leaf] {
            Some(choice) => {
                let phrase = &self.options[leaf][choice].coords()[coord];
                self.matches(phrase, pos) && self.run(seg + 1, pos + phrase.len())
            }
            None => {
                let mut ok = false;
                for choice in 0..self.options[leaf].len() {
                    let phrase = &self.options[leaf][choice].coords()[coord];
                    if !self.matches(phrase, pos) {
                        continue;
                    }
                    self.bound[leaf] = Some(choice);
                    if self.run(seg + 1, pos + phrase.len()) {
                        ok = true;
                        break;
                    }
                    self.bound[leaf] = None;
                }
                ok
            }
        };
        if !found && unbound_ahead {
            self.dead.insert((seg, pos));
        }
        found
    }

    fn matches(&self, phrase: &[String], pos: usize) -> bool {
        self.words.get(pos..pos + phrase.len()) == Some(phrase)
    }
}

/// Searches every tree up to `max_depth` for a lexical assignment whose
/// yield is exactly `words`. Returns the first hit in enumeration order.
pub fn recognize_bruteforce(
    g: &Grammar,
    words: &[String],
    max_depth: usize,
) -> Option<(AbstractTree, Assignment)> {
    for t in enumerate_trees(g, max_depth) {
        let mut next = 0;
        let Some(root) = layout(g, &t, &mut next) else {
            continue;
        };
        if root.len() != 1 {
            continue;
        }
        let leaves = t.leaves();
        let mut search = Search {
            words,
            segments: root[0].clone(),
            options: leaves.iter().map(|s| g.constants_of(s)).collect(),
            bound: vec![None; leaves.len()],
            dead: HashSet::new(),
        };
        if search.run(0, 0) {
            let assignment = Assignment(
                leaves
                    .iter()
                    .zip(&search.bound)
                    .map(|(s, b)| LeafChoice {
                        symbol: (*s).clone(),
                        value: g.constants_of(s)[b.expect("every leaf is bound")].clone(),
                    })
                    .collect(),
            );
            return Some((t, assignment));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};
    use crate::derivation::linearize;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn recognizes_cross_serial_sentence() {
        let g = control_grammar();
        let w = words("de docent vraagt de hond de student de oefeningen te laten doen");
        let (t, a) = recognize_bruteforce(&g, &w, 2).unwrap();
        assert_eq!(linearize(&g, &t, &a).unwrap().words, w);
        assert_eq!(t.rules(), vec!["A2", "A4"]);
    }

    #[test]
    fn rejects_broken_sentences() {
        let g = raising_grammar();
        assert!(recognize_bruteforce(&g, &words("Iemand ziet de eend studeren"), 3).is_some());
        assert!(recognize_bruteforce(&g, &words("Iemand ziet de eend"), 3).is_none());
        assert!(recognize_bruteforce(&g, &words("Iemand ziet studeren de eend"), 3).is_none());
        let c = control_grammar();
        assert!(recognize_bruteforce(&c, &words("de student belooft de docent te studeren"), 3).is_some());
        assert!(recognize_bruteforce(&c, &words("de student belooft de docent studeren"), 3).is_none());
    }
}
