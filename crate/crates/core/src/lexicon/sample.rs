use std::collections::HashSet;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Lexicon;
use crate::derivation::{AbstractTree, Assignment, LeafChoice, NodeKind};
use crate::grammar::{Grammar, InnerPhrases, Marking, StringTuple, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub realizations_per_tree: usize,
    pub seed: u64,
    pub max_depth: usize,
    pub capitalize: bool,
    pub punctuate: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            realizations_per_tree: 10,
            seed: 0,
            max_depth: 4,
            capitalize: true,
            punctuate: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error("realizations_per_tree must be at least 1")]
    ZeroRealizations,
    #[error("lexicon has no entries for slot {0}")]
    MissingSlot(Symbol),
    #[error("slot {slot} has {available} distinct nouns but a sentence needs {needed}")]
    SlotTooSmall {
        slot: Symbol,
        needed: usize,
        available: usize,
    },
    #[error("tree {tree}: only {found} of {wanted} distinct sentences after {attempts} draws")]
    NotEnoughDistinct {
        tree: usize,
        wanted: usize,
        found: usize,
        attempts: usize,
    },
    #[error("tree {tree}: {message}")]
    Derivation { tree: usize, message: String },
}

/// The generator behind all sampling: ChaCha20 seeded from the 64-bit
/// seed, one stream per tree index. Changing this changes every dataset.
pub fn tree_rng(seed: u64, tree_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tree_index);
    rng
}

/// Unbiased draw from `0..n` by rejection on 64-bit outputs.
pub fn uniform_below(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "empty range");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

/// Evaluates a tree on leaf values (in leaf order) by plain rule
/// application.
pub fn realize(g: &Grammar, t: &AbstractTree, values: &[StringTuple]) -> Result<StringTuple, String> {
    fn go(g: &Grammar, t: &AbstractTree, values: &[StringTuple], next: &mut usize) -> Result<StringTuple, String> {
        match &t.kind {
            NodeKind::Leaf => {
                let v = values.get(*next).ok_or("too few leaf values")?.clone();
                *next += 1;
                Ok(v)
            }
            NodeKind::Apply { rule, children } => {
                let args = children
                    .iter()
                    .map(|c| go(g, c, values, next))
                    .collect::<Result<Vec<_>, _>>()?;
                g.apply_rule(rule, &args).map_err(|e| e.to_string())
            }
        }
    }
    let mut next = 0;
    go(g, t, values, &mut next)
}

/// The noun phrase a leaf value contributes, if any.
fn noun_key(g: &Grammar, sym: &Symbol, value: &StringTuple) -> Option<String> {
    let nt = g.nonterminal(&sym.name)?;
    if nt.marking == Marking::Noun {
        return Some(value.plain());
    }
    if nt.inner == Some(InnerPhrases::SubjectVerb) {
        let words: Vec<&str> = value.words().map(String::as_str).collect();
        return Some(words[..words.len().saturating_sub(1)].join(" "));
    }
    None
}

/// Draws `cfg.realizations_per_tree` lexical assignments for tree number
/// `tree_index`. Noun phrases within a sentence are pairwise distinct and
/// the realized sentences are pairwise distinct; both are enforced by
/// rejection. The result depends only on (tree, tree_index, seed, lexicon).
pub fn sample_realizations(
    g: &Grammar,
    lex: &Lexicon,
    t: &AbstractTree,
    tree_index: usize,
    cfg: &GenerationConfig,
) -> Result<Vec<Assignment>, GenerationError> {
    if cfg.realizations_per_tree == 0 {
        return Err(GenerationError::ZeroRealizations);
    }
    let leaves = t.leaves();
    let options: Vec<&[StringTuple]> = leaves.iter().map(|s| lex.slot(s)).collect();
    for (s, o) in leaves.iter().zip(&options) {
        if o.is_empty() {
            return Err(GenerationError::MissingSlot((*s).clone()));
        }
    }
    let keys: Vec<Vec<Option<String>>> = leaves
        .iter()
        .zip(&options)
        .map(|(s, o)| o.iter().map(|v| noun_key(g, s, v)).collect())
        .collect();
    for s in &leaves {
        let needed = leaves.iter().filter(|x| *x == s).count();
        let distinct: HashSet<&String> = keys[leaves.iter().position(|x| x == s).unwrap()]
            .iter()
            .flatten()
            .collect();
        if !distinct.is_empty() && needed > distinct.len() {
            return Err(GenerationError::SlotTooSmall {
                slot: (*s).clone(),
                needed,
                available: distinct.len(),
            });
        }
    }

    let mut rng = tree_rng(cfg.seed, tree_index as u64);
    let wanted = cfg.realizations_per_tree;
    let budget = 100 + 50 * wanted;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(wanted);
    let mut attempts = 0;
    while out.len() < wanted {
        if attempts == budget {
            return Err(GenerationError::NotEnoughDistinct {
                tree: tree_index,
                wanted,
                found: out.len(),
                attempts,
            });
        }
        attempts += 1;
        let mut used: Vec<&String> = Vec::new();
        let mut picks = Vec::with_capacity(leaves.len());
        for (i, s) in leaves.iter().enumerate() {
            let free: Vec<usize> = (0..options[i].len())
                .filter(|&j| keys[i][j].as_ref().is_none_or(|k| !used.contains(&k)))
                .collect();
            if free.is_empty() {
                return Err(GenerationError::SlotTooSmall {
                    slot: (*s).clone(),
                    needed: used.len() + 1,
                    available: options[i].len(),
                });
            }
            let j = free[uniform_below(&mut rng, free.len())];
            if let Some(k) = &keys[i][j] {
                used.push(k);
            }
            picks.push(options[i][j].clone());
        }
        let sentence = realize(g, t, &picks).map_err(|message| GenerationError::Derivation {
            tree: tree_index,
            message,
        })?;
        if seen.insert(sentence) {
            out.push(Assignment(
                leaves
                    .iter()
                    .zip(picks)
                    .map(|(s, value)| LeafChoice {
                        symbol: (*s).clone(),
                        value,
                    })
                    .collect(),
            ));
        }
    }
    Ok(out)
}

/// A post-processed sentence. `words` are the surface forms (the first one
/// possibly capitalized); `offsets[i]` is the half-open character range of
/// `words[i]` in `sentence`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Processed {
    pub sentence: String,
    pub words: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

fn capitalize_first(w: &str) -> String {
    let mut chars = w.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Joins words with single spaces, optionally upper-casing the first
/// character and appending a period (unless the text already ends in
/// terminal punctuation).
pub fn postprocess(words: &[String], capitalize: bool, punctuate: bool) -> Processed {
    let mut surface: Vec<String> = words.to_vec();
    if capitalize {
        if let Some(first) = surface.first_mut() {
            *first = capitalize_first(first);
        }
    }
    let mut sentence = String::new();
    let mut offsets = Vec::with_capacity(surface.len());
    let mut pos = 0;
    for (i, w) in surface.iter().enumerate() {
        if i > 0 {
            sentence.push(' ');
            pos += 1;
        }
        let len = w.chars().count();
        offsets.push((pos, pos + len));
        sentence.push_str(w);
        pos += len;
    }
    if punctuate && !sentence.ends_with(['.', '!', '?']) {
        sentence.push('.');
    }
    Processed {
        sentence,
        words: surface,
        offsets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};
    use crate::derivation::{enumerate_trees, linearize};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn causative_tree(g: &Grammar) -> (usize, AbstractTree) {
        enumerate_trees(g, 2)
            .into_iter()
            .enumerate()
            .find(|(_, t)| {
                t.to_string() == "A2(NP, TV.obj, NP, NP, CV, A4(TE, INF_tv, NP))"
            })
            .unwrap()
    }

    #[test]
    fn causative_tree_gives_ten_distinct_sentences_with_same_structure() {
        let g = control_grammar();
        let lex = Lexicon::default_lexicon();
        let pg = lex.populate(&g).unwrap();
        let (i, t) = causative_tree(&g);
        let cfg = GenerationConfig::default();
        let draws = sample_realizations(&g, &lex, &t, i, &cfg).unwrap();
        assert_eq!(draws.len(), 10);
        let ys: Vec<_> = draws.iter().map(|a| linearize(&pg, &t, a).unwrap()).collect();
        let sentences: HashSet<String> = ys.iter().map(|y| y.sentence()).collect();
        assert_eq!(sentences.len(), 10);
        for y in &ys {
            assert_eq!(y.noun_spans, ys[0].noun_spans);
            assert_eq!(y.verb_spans, ys[0].verb_spans);
            assert_eq!(y.subject_map, ys[0].subject_map);
            let nouns: HashSet<String> = y.noun_spans.iter().map(|s| y.span_text(s)).collect();
            assert_eq!(nouns.len(), y.noun_spans.len());
        }
        assert_eq!(draws, sample_realizations(&g, &lex, &t, i, &cfg).unwrap());
        let other = GenerationConfig { seed: 1, ..cfg };
        assert_ne!(draws, sample_realizations(&g, &lex, &t, i, &other).unwrap());
    }

    #[test]
    fn singleton_slots_give_the_unique_realization() {
        let g = raising_grammar();
        let lex = Lexicon::parse(
            "slot PREF : Iemand ziet\nslot NP : de eend\nslot INF_iv : studeren\nslot INF_tv : eten\nslot RV : leren",
        )
        .unwrap();
        let t = &enumerate_trees(&g, 2)[0];
        let cfg = GenerationConfig {
            realizations_per_tree: 1,
            ..Default::default()
        };
        let a = sample_realizations(&g, &lex, t, 0, &cfg).unwrap();
        let s = realize(&g, t, &a[0].0.iter().map(|c| c.value.clone()).collect::<Vec<_>>()).unwrap();
        assert_eq!(s.plain(), "Iemand ziet de eend studeren");
        // Asking for two distinct sentences cannot succeed.
        let two = GenerationConfig {
            realizations_per_tree: 2,
            ..cfg
        };
        assert!(matches!(
            sample_realizations(&g, &lex, t, 0, &two),
            Err(GenerationError::NotEnoughDistinct { found: 1, .. })
        ));
    }

    #[test]
    fn too_few_nouns_names_the_slot() {
        let g = raising_grammar();
        let lex = Lexicon::parse(
            "slot PREF : Iemand ziet\nslot NP : de eend\nslot INF_iv : studeren\nslot INF_tv : eten\nslot RV : leren",
        )
        .unwrap();
        let b3 = &enumerate_trees(&g, 2)[1];
        let err = sample_realizations(&g, &lex, b3, 1, &GenerationConfig::default()).unwrap_err();
        assert_eq!(
            err,
            GenerationError::SlotTooSmall {
                slot: Symbol::plain("NP"),
                needed: 2,
                available: 1
            }
        );
        assert!(err.to_string().contains("NP"));
    }

    #[test]
    fn prefix_noun_counts_towards_distinctness() {
        let g = raising_grammar();
        let lex = Lexicon::parse(
            "slot PREF : de eend ziet\nslot NP : de eend ; de kat\nslot INF_iv : studeren\nslot INF_tv : eten\nslot RV : leren",
        )
        .unwrap();
        let t = &enumerate_trees(&g, 2)[0];
        let cfg = GenerationConfig {
            realizations_per_tree: 1,
            ..Default::default()
        };
        for seed in 0..20 {
            let a = sample_realizations(&g, &lex, t, 0, &GenerationConfig { seed, ..cfg.clone() }).unwrap();
            assert_eq!(a[0].0[1].value.plain(), "de kat");
        }
    }

    #[test]
    fn uniform_below_is_in_range_and_covers() {
        let mut rng = tree_rng(7, 3);
        let mut hits = [0usize; 5];
        for _ in 0..5000 {
            hits[uniform_below(&mut rng, 5)] += 1;
        }
        assert!(hits.iter().all(|&h| h > 850 && h < 1150), "{hits:?}");
    }

    #[test]
    fn postprocess_examples() {
        let p = postprocess(&words("de docent ziet de eend studeren"), true, true);
        assert_eq!(p.sentence, "De docent ziet de eend studeren.");
        assert_eq!(p.offsets[0], (0, 2));
        assert_eq!(p.offsets[5], (23, 31));
        assert_eq!(postprocess(&words("a"), true, true).sentence, "A.");
        assert_eq!(postprocess(&words("a b"), false, false).sentence, "a b");
        let again = postprocess(&words(&p.sentence), true, true);
        assert_eq!(again.sentence, p.sentence);
    }

    #[test]
    fn offsets_count_characters() {
        let p = postprocess(&words("één café"), true, true);
        assert_eq!(p.sentence, "Één café.");
        assert_eq!(p.offsets, vec![(0, 3), (4, 8)]);
        let chars: Vec<char> = p.sentence.chars().collect();
        for (w, &(s, e)) in p.words.iter().zip(&p.offsets) {
            assert_eq!(&chars[s..e].iter().collect::<String>(), w);
        }
    }
}
