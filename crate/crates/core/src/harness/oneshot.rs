//! One-shot mode: a single fresh realization per tree under a second seed,
//! used to tune the probe head before evaluating on the full dataset.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::dataset::{header_for, make_sample, Dataset, DatasetError};
use crate::builtin;
use crate::derivation::{enumerate_trees, linearize};
use crate::lexicon::{postprocess, sample_realizations, GenerationConfig, GenerationError, Lexicon};

/// How the tuning set is meant to be used. Only the probe head is trained;
/// the embedding model stays frozen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneShotProtocol {
    pub epochs: usize,
    pub tune_on: String,
    pub evaluate_on: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneShot {
    pub tuning: Dataset,
    pub protocol: OneShotProtocol,
    /// Trees whose every candidate sentence already occurs in the
    /// evaluation set (possible only with tiny lexicon slots).
    pub overlaps: usize,
}

/// Candidates tried per tree before accepting an overlap.
const CANDIDATES: usize = 20;

pub fn one_shot_mode(full: &Dataset, lex: &Lexicon, seed2: u64) -> Result<OneShot, DatasetError> {
    let h = &full.header;
    if seed2 == h.seed {
        return Err(DatasetError::Mismatch(format!(
            "one-shot seed {seed2} equals the dataset seed; choose a different one"
        )));
    }
    let g = builtin::by_id(&h.grammar).ok_or_else(|| DatasetError::UnknownGrammar(h.grammar.clone()))?;
    let populated = lex.populate(&g).map_err(|e| DatasetError::Generation(e.to_string()))?;
    let eval: HashSet<&str> = full.samples.iter().map(|s| s.sentence.as_str()).collect();
    let cfg = GenerationConfig {
        realizations_per_tree: 1,
        seed: seed2,
        ..h.config()
    };
    let trees = enumerate_trees(&g, h.max_depth);
    let mut samples = Vec::with_capacity(trees.len());
    let mut overlaps = 0;
    for (i, t) in trees.iter().enumerate() {
        let mut draws = None;
        for n in [CANDIDATES, 5, 1] {
            let c = GenerationConfig {
                realizations_per_tree: n,
                ..cfg.clone()
            };
            match sample_realizations(&g, lex, t, i, &c) {
                Ok(d) => {
                    draws = Some(d);
                    break;
                }
                Err(GenerationError::NotEnoughDistinct { .. }) => continue,
                Err(e) => return Err(DatasetError::Generation(e.to_string())),
            }
        }
        let draws = draws.ok_or_else(|| DatasetError::Generation(format!("tree {i}: no realization")))?;
        let yields = draws
            .iter()
            .map(|a| linearize(&populated, t, a))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DatasetError::Generation(format!("tree {i}: {e}")))?;
        let fresh = yields
            .iter()
            .position(|y| !eval.contains(postprocess(&y.words, cfg.capitalize, cfg.punctuate).sentence.as_str()));
        if fresh.is_none() {
            overlaps += 1;
        }
        let y = &yields[fresh.unwrap_or(0)];
        let mut s = make_sample(&g, i, &t.to_string(), t.depth(), 0, y, &cfg);
        s.id = format!("{}-oneshot-{i:05}", g.id);
        samples.push(s);
    }
    Ok(OneShot {
        tuning: Dataset {
            header: header_for(&g, lex, &cfg, trees.len(), &samples),
            samples,
        },
        protocol: OneShotProtocol {
            epochs: 10,
            tune_on: "one realization per tree, second seed".into(),
            evaluate_on: "the original dataset".into(),
            note: "only the probe parameters are tuned; embeddings are fixed".into(),
        },
        overlaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};
    use crate::harness::generate_dataset;

    fn full(g: &crate::grammar::Grammar, depth: usize) -> Dataset {
        let cfg = GenerationConfig {
            max_depth: depth,
            seed: 1,
            ..Default::default()
        };
        generate_dataset(g, &Lexicon::default_lexicon(), &cfg).unwrap()
    }

    #[test]
    fn one_realization_per_tree_disjoint_from_eval() {
        for (g, depth, trees) in [(raising_grammar(), 6, 10), (control_grammar(), 3, 120)] {
            let d = full(&g, depth);
            let o = one_shot_mode(&d, &Lexicon::default_lexicon(), 2).unwrap();
            assert_eq!(o.tuning.samples.len(), trees);
            assert_eq!(o.overlaps, 0);
            let eval: HashSet<&str> = d.samples.iter().map(|s| s.sentence.as_str()).collect();
            assert!(o.tuning.samples.iter().all(|s| !eval.contains(s.sentence.as_str())));
            let trees_seen: HashSet<usize> = o.tuning.samples.iter().map(|s| s.tree_id).collect();
            assert_eq!(trees_seen.len(), trees);
        }
    }

    #[test]
    fn seed_collision_is_rejected() {
        let d = full(&raising_grammar(), 3);
        assert!(one_shot_mode(&d, &Lexicon::default_lexicon(), 1).is_err());
    }
}
