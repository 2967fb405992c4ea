//! Reference predictors that need no embeddings.

use crate::lexicon::{tree_rng, uniform_below};
use crate::probe::PredictionRecord;

use super::dataset::AnnotatedSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    AdjacentNoun,
    UniformRandom,
}

impl Baseline {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adjacent-noun" => Some(Baseline::AdjacentNoun),
            "uniform-random" => Some(Baseline::UniformRandom),
            _ => None,
        }
    }
}

/// The noun phrase ending closest before the verb's first word; when no
/// noun precedes the verb, the first noun starting after it.
pub fn adjacent_noun_index(s: &AnnotatedSample, verb: usize) -> usize {
    let start = s.verb_spans[verb][0];
    let before = s
        .noun_spans
        .iter()
        .enumerate()
        .filter(|(_, sp)| *sp.last().unwrap() < start)
        .max_by_key(|(j, sp)| (*sp.last().unwrap(), usize::MAX - j));
    if let Some((j, _)) = before {
        return j;
    }
    s.noun_spans
        .iter()
        .enumerate()
        .filter(|(_, sp)| sp[0] > start)
        .min_by_key(|(_, sp)| sp[0])
        .map_or(0, |(j, _)| j)
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

pub fn adjacent_noun(samples: &[AnnotatedSample]) -> Vec<PredictionRecord> {
    samples
        .iter()
        .map(|s| {
            let picks: Vec<usize> = (0..s.n_verbs()).map(|v| adjacent_noun_index(s, v)).collect();
            let rows = picks.iter().map(|&j| one_hot(s.n_nouns, j)).collect();
            PredictionRecord::from_rows(s, rows, picks)
        })
        .collect()
}

/// Uniform probabilities; the predicted noun is a seeded uniform draw.
pub fn uniform_random(samples: &[AnnotatedSample], seed: u64) -> Vec<PredictionRecord> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = tree_rng(seed, i as u64);
            let picks: Vec<usize> = (0..s.n_verbs()).map(|_| uniform_below(&mut rng, s.n_nouns)).collect();
            let rows = (0..s.n_verbs()).map(|_| vec![1.0 / s.n_nouns as f64; s.n_nouns]).collect();
            PredictionRecord::from_rows(s, rows, picks)
        })
        .collect()
}

pub fn run_baseline(b: Baseline, samples: &[AnnotatedSample], seed: u64) -> Vec<PredictionRecord> {
    match b {
        Baseline::AdjacentNoun => adjacent_noun(samples),
        Baseline::UniformRandom => uniform_random(samples, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};
    use crate::harness::{consistency, generate_dataset};
    use crate::lexicon::{GenerationConfig, Lexicon};

    fn data(g: &crate::grammar::Grammar, depth: usize) -> Vec<AnnotatedSample> {
        let cfg = GenerationConfig {
            realizations_per_tree: 4,
            max_depth: depth,
            ..Default::default()
        };
        generate_dataset(g, &Lexicon::default_lexicon(), &cfg).unwrap().samples
    }

    #[test]
    fn adjacent_noun_picks_the_preceding_phrase() {
        let s = data(&raising_grammar(), 2);
        let x = &s[0]; // Iemand ziet de X studeren
        assert_eq!(adjacent_noun_index(x, 0), 0);
        assert_eq!(adjacent_noun_index(x, 1), 1);
    }

    #[test]
    fn adjacent_noun_falls_back_to_following_noun() {
        let s = data(&control_grammar(), 2);
        let inverted = s.iter().find(|x| x.verb_rules[0] == "A1^i").unwrap();
        // Fronted adverb: the finite verb precedes every noun.
        assert_eq!(adjacent_noun_index(inverted, 0), 0);
    }

    #[test]
    fn deterministic_predictors_are_fully_consistent() {
        for g in [control_grammar(), raising_grammar()] {
            let s = data(&g, 3);
            assert_eq!(consistency(&adjacent_noun(&s)), Some(1.0));
        }
    }

    #[test]
    fn uniform_random_is_seeded() {
        let s = data(&raising_grammar(), 3);
        assert_eq!(uniform_random(&s, 3), uniform_random(&s, 3));
        assert_ne!(uniform_random(&s, 3), uniform_random(&s, 4));
    }
}
