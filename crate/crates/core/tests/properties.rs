//! Randomized invariants over generation, file formats and the probe.

use std::collections::HashSet;

use proptest::prelude::*;

use xdeps::builtin::{control_grammar, raising_grammar};
use xdeps::derivation::{enumerate_trees, linearize, recognize_bruteforce};
use xdeps::harness::{
    generate_dataset, read_dataset_from, uniform_random, write_dataset_to, GroupKey, MetricsReport,
};
use xdeps::lexicon::{postprocess, sample_realizations, GenerationConfig, Lexicon};
use xdeps::probe::{
    grad_check, pool, read_embeddings_from, softmax, split_indices, synthesize_all,
    write_embeddings_to, EmbeddingHeader, EmbeddingRecord, EmbeddingSet, Instance, ProbeParams,
    SyntheticProvider,
};

fn grammar(control: bool) -> xdeps::grammar::Grammar {
    if control {
        control_grammar()
    } else {
        raising_grammar()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_samples_are_well_formed(control in any::<bool>(), depth in 2usize..4, seed in any::<u64>()) {
        let cfg = GenerationConfig { realizations_per_tree: 3, max_depth: depth, seed, ..Default::default() };
        let d = generate_dataset(&grammar(control), &Lexicon::default_lexicon(), &cfg).unwrap();
        let mut seen = HashSet::new();
        for s in &d.samples {
            prop_assert!(s.check().is_ok(), "{:?}", s.check());
            prop_assert!(seen.insert((s.tree_id, s.sentence.clone())));
            let chars: Vec<char> = s.sentence.chars().collect();
            for (w, &(a, b)) in s.words.iter().zip(&s.char_offsets) {
                prop_assert_eq!(&chars[a..b].iter().collect::<String>(), w);
            }
            // noun phrases are distinct within a sentence
            let nps: HashSet<String> = s.noun_spans.iter()
                .map(|sp| sp.iter().map(|&i| s.words[i].to_lowercase()).collect::<Vec<_>>().join(" "))
                .collect();
            prop_assert_eq!(nps.len(), s.n_nouns);
        }
    }

    #[test]
    fn dataset_files_round_trip(control in any::<bool>(), seed in any::<u64>()) {
        let cfg = GenerationConfig { realizations_per_tree: 2, max_depth: 3, seed, ..Default::default() };
        let d = generate_dataset(&grammar(control), &Lexicon::default_lexicon(), &cfg).unwrap();
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &d).unwrap();
        prop_assert_eq!(read_dataset_from(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn embedding_files_are_bit_exact(dim in 1usize..12, words in 1usize..6, bits in prop::collection::vec(any::<u32>(), 72)) {
        let n = words + 2;
        let vectors: Vec<f32> = (0..n * dim).map(|i| f32::from_bits(bits[i % bits.len()])).collect();
        let mut word_ids = vec![-1];
        word_ids.extend((0..words as i64).collect::<Vec<_>>());
        word_ids.push(-1);
        let set = EmbeddingSet::new(
            EmbeddingHeader { format_version: 1, dim, provider_name: "test".into() },
            vec![EmbeddingRecord { sentence_id: "s".into(), dim, word_ids, vectors: vectors.clone() }],
        );
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &set).unwrap();
        let back = read_embeddings_from(buf.as_slice()).unwrap();
        let got: Vec<u32> = back.get("s").unwrap().vectors.iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = vectors.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn postprocess_offsets_recover_words(words in prop::collection::vec("[a-zé]{1,6}", 1..8), cap in any::<bool>(), punct in any::<bool>()) {
        let p = postprocess(&words, cap, punct);
        let chars: Vec<char> = p.sentence.chars().collect();
        for (w, &(a, b)) in p.words.iter().zip(&p.offsets) {
            prop_assert_eq!(&chars[a..b].iter().collect::<String>(), w);
        }
        prop_assert_eq!(p.sentence.ends_with('.'), punct);
    }

    #[test]
    fn pooling_weights_form_a_distribution(rows in 1usize..6, dim in 1usize..5, vals in prop::collection::vec(-3.0f64..3.0, 40)) {
        let x: Vec<f64> = (0..rows * dim).map(|i| vals[i % vals.len()]).collect();
        let score: Vec<f64> = (0..dim).map(|i| vals[(i + 7) % vals.len()]).collect();
        let mask: Vec<usize> = (0..rows).step_by(2).collect();
        let (out, w) = pool(&x, dim, &mask, &score);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&a| a > 0.0));
        // the pooled vector lies in the box spanned by the masked rows
        for d in 0..dim {
            let col: Vec<f64> = mask.iter().map(|&t| x[t * dim + d]).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[d] >= lo - 1e-12 && out[d] <= hi + 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
        let mut a = v.clone();
        let mut b: Vec<f64> = v.iter().map(|x| x + c).collect();
        softmax(&mut a);
        softmax(&mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn split_is_a_partition(n in 0usize..200, frac in 0.0f64..0.99, seed in any::<u64>()) {
        let (tr, va) = split_indices(n, frac, seed);
        let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(va.len(), ((n as f64) * frac).round() as usize);
    }

    #[test]
    fn grouped_accuracy_is_coherent(control in any::<bool>(), seed in any::<u64>()) {
        let cfg = GenerationConfig { realizations_per_tree: 2, max_depth: 3, ..Default::default() };
        let d = generate_dataset(&grammar(control), &Lexicon::default_lexicon(), &cfg).unwrap();
        let r = MetricsReport::build(&uniform_random(&d.samples, seed), true, None).unwrap();
        for key in GroupKey::ALL {
            let rows = r.group(key);
            prop_assert_eq!(rows.iter().map(|g| g.total).sum::<usize>(), r.total);
            prop_assert_eq!(rows.iter().map(|g| g.correct).sum::<usize>(), r.correct);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn analytic_gradient_matches_finite_differences(
        dim in 3usize..10, k in 1usize..5, seed in any::<u64>(), pick in 0usize..1000, provider in 0usize..3,
    ) {
        let cfg = GenerationConfig { realizations_per_tree: 1, max_depth: 3, ..Default::default() };
        let d = generate_dataset(&control_grammar(), &Lexicon::default_lexicon(), &cfg).unwrap();
        let s = &d.samples[pick % d.samples.len()];
        let p = [SyntheticProvider::RandomFixed, SyntheticProvider::Oracle, SyntheticProvider::RandomFixed][provider];
        let emb = synthesize_all(p, std::slice::from_ref(s), dim, seed);
        let inst = Instance::new(s, emb.get(&s.id).unwrap()).unwrap();
        let params = ProbeParams::init(dim, k, 0.0, seed ^ 0x5eed);
        let err = grad_check(&params, &inst, 1e-5);
        prop_assert!(err <= 1e-4, "relative error {}", err);
    }

    #[test]
    fn realizations_are_recognized(control in any::<bool>(), tree in 0usize..200, seed in any::<u64>()) {
        let g = grammar(control);
        let lex = Lexicon::default_lexicon();
        let full = lex.populate(&g).unwrap();
        let trees = enumerate_trees(&g, 3);
        let t = &trees[tree % trees.len()];
        let cfg = GenerationConfig { realizations_per_tree: 1, seed, max_depth: 3, ..Default::default() };
        for a in sample_realizations(&g, &lex, t, tree, &cfg).unwrap() {
            let y = linearize(&full, t, &a).unwrap();
            prop_assert!(recognize_bruteforce(&full, &y.words, 3).is_some(), "{}", y.sentence());
        }
    }
}
