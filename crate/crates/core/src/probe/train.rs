use serde::{Deserialize, Serialize};

use super::embed::EmbeddingSet;
use super::model::{accumulate, forward, uniform01, Instance, ProbeParams};
use super::ProbeError;
use crate::grammar::Scope;
use crate::harness::AnnotatedSample;
use crate::lexicon::{tree_rng, uniform_below};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            batch_size: 32,
            dropout: 0.15,
            epochs: 80,
            k: 64,
            seed: 0,
        }
    }
}

/// Decoupled-weight-decay Adam over all probe parameters.
pub struct AdamW {
    hyper: Hyperparams,
    step: i32,
    m: ProbeParams,
    v: ProbeParams,
}

impl AdamW {
    pub fn new(p: &ProbeParams, hyper: &Hyperparams) -> Self {
        AdamW {
            hyper: hyper.clone(),
            step: 0,
            m: p.zeros_like(),
            v: p.zeros_like(),
        }
    }

    pub fn update(&mut self, p: &mut ProbeParams, g: &ProbeParams) {
        let h = &self.hyper;
        self.step += 1;
        let c1 = 1.0 - h.beta1.powi(self.step);
        let c2 = 1.0 - h.beta2.powi(self.step);
        let ms = self.m.fields_mut();
        let vs = self.v.fields_mut();
        for (((theta, grad), m), v) in p.fields_mut().into_iter().zip(g.fields()).zip(ms).zip(vs) {
            for i in 0..theta.len() {
                m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * grad[i];
                v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * grad[i] * grad[i];
                theta[i] *= 1.0 - h.lr * h.weight_decay;
                theta[i] -= h.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + h.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ProbeParams,
    pub history: Vec<EpochStats>,
    /// Epoch of the returned checkpoint; 0 means the initialization.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

/// Fraction of verbs whose argmax noun is the gold one.
pub fn instance_accuracy(p: &ProbeParams, data: &[Instance]) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for inst in data {
        for (row, &g) in forward(p, inst).iter().zip(&inst.gold) {
            hit += usize::from(argmax(row) == g);
            total += 1;
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Seeded Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], seed: u64, stream: u64) {
    let mut rng = tree_rng(seed, stream);
    for i in (1..items.len()).rev() {
        items.swap(i, uniform_below(&mut rng, i + 1));
    }
}

/// Splits `0..n` into (train, validation) index lists, validation taking
/// `round(n × frac)` items after a seeded shuffle. Both lists are sorted.
pub fn split_indices(n: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, seed, 1 << 40);
    let n_val = ((n as f64) * frac).round() as usize;
    let mut val = idx[..n_val.min(n)].to_vec();
    let mut train = idx[n_val.min(n)..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Instances for every sample, failing on a missing or misaligned record.
pub fn build_instances(samples: &[AnnotatedSample], emb: &EmbeddingSet) -> Result<Vec<Instance>, ProbeError> {
    samples
        .iter()
        .map(|s| Instance::new(s, emb.require(&s.id)?))
        .collect()
}

/// Trains from a fresh seeded initialization.
pub fn train_probe(train: &[Instance], val: &[Instance], hyper: &Hyperparams) -> Result<TrainOutcome, ProbeError> {
    let dim = train
        .first()
        .or(val.first())
        .map(|i| i.dim)
        .ok_or(ProbeError::EmptyData)?;
    let init = ProbeParams::init(dim, hyper.k, hyper.dropout, hyper.seed);
    train_from(init, train, val, hyper)
}

/// Trains starting from `init`; keeps the checkpoint with the best
/// validation accuracy (earliest on ties, the initialization counting as
/// epoch 0). Without validation data the last epoch is kept.
pub fn train_from(
    init: ProbeParams,
    train: &[Instance],
    val: &[Instance],
    hyper: &Hyperparams,
) -> Result<TrainOutcome, ProbeError> {
    if let Some(bad) = train.iter().chain(val).find(|i| i.dim != init.dim) {
        return Err(ProbeError::Alignment(format!(
            "{} has dimension {}, probe expects {}",
            bad.sentence_id, bad.dim, init.dim
        )));
    }
    let mut p = init;
    p.dropout_rate = hyper.dropout;
    let mut opt = AdamW::new(&p, hyper);
    let mut best = p.clone();
    let mut best_epoch = 0;
    let mut best_acc = instance_accuracy(&p, val);
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut drop_rng = tree_rng(hyper.seed, 1 << 41);
    let keep = 1.0 - hyper.dropout;

    for epoch in 1..=hyper.epochs {
        shuffle(&mut order, hyper.seed, epoch as u64);
        let mut epoch_loss = 0.0;
        let mut epoch_verbs = 0usize;
        for (b, batch) in order.chunks(hyper.batch_size.max(1)).enumerate() {
            let n_verbs: usize = batch.iter().map(|&i| train[i].gold.len()).sum();
            if n_verbs == 0 {
                continue;
            }
            let scale = 1.0 / n_verbs as f64;
            let mut grad = p.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let inst = &train[i];
                let x: Vec<f64> = if hyper.dropout > 0.0 {
                    inst.x
                        .iter()
                        .map(|&v| if uniform01(&mut drop_rng) < keep { v / keep } else { 0.0 })
                        .collect()
                } else {
                    inst.x.clone()
                };
                batch_loss += accumulate(&p, inst, &x, scale, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(ProbeError::NonFinite { epoch, batch: b });
            }
            opt.update(&mut p, &grad);
            epoch_loss += batch_loss;
            epoch_verbs += n_verbs;
        }
        let acc = instance_accuracy(&p, val);
        history.push(EpochStats {
            epoch,
            train_loss: if epoch_verbs > 0 { epoch_loss / epoch_verbs as f64 } else { 0.0 },
            val_accuracy: acc,
        });
        let better = match (acc, best_acc) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, _) => true,
        };
        if better {
            best = p.clone();
            best_epoch = epoch;
            best_acc = acc;
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        best_val_accuracy: best_acc,
    })
}

/// Probe output for one verb occurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbPrediction {
    pub probs: Vec<f64>,
    pub predicted: usize,
    pub gold: usize,
    pub rule: String,
    pub scope: Scope,
}

impl VerbPrediction {
    pub fn correct(&self) -> bool {
        self.predicted == self.gold
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence_id: String,
    pub tree_id: usize,
    pub depth: usize,
    pub n_nouns: usize,
    pub verbs: Vec<VerbPrediction>,
}

impl PredictionRecord {
    /// Wraps per-verb probability rows with the sample's gold and metadata.
    pub fn from_rows(sample: &AnnotatedSample, rows: Vec<Vec<f64>>, predicted: Vec<usize>) -> Self {
        PredictionRecord {
            sentence_id: sample.id.clone(),
            tree_id: sample.tree_id,
            depth: sample.depth,
            n_nouns: sample.n_nouns,
            verbs: rows
                .into_iter()
                .zip(predicted)
                .enumerate()
                .map(|(v, (probs, predicted))| VerbPrediction {
                    probs,
                    predicted,
                    gold: sample.subject_map[v],
                    rule: sample.verb_rules[v].clone(),
                    scope: sample.verb_scopes[v],
                })
                .collect(),
        }
    }
}

/// Prediction with dropout off; ties go to the lowest noun index.
pub fn predict(p: &ProbeParams, sample: &AnnotatedSample, emb: &EmbeddingSet) -> Result<PredictionRecord, ProbeError> {
    let inst = Instance::new(sample, emb.require(&sample.id)?)?;
    if inst.dim != p.dim {
        return Err(ProbeError::Alignment(format!(
            "{} has dimension {}, probe expects {}",
            sample.id, inst.dim, p.dim
        )));
    }
    let rows = forward(p, &inst);
    let predicted = rows.iter().map(|r| argmax(r)).collect();
    Ok(PredictionRecord::from_rows(sample, rows, predicted))
}

pub fn predict_all(p: &ProbeParams, samples: &[AnnotatedSample], emb: &EmbeddingSet) -> Result<Vec<PredictionRecord>, ProbeError> {
    samples.iter().map(|s| predict(p, s, emb)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::raising_grammar;
    use crate::harness::generate_dataset;
    use crate::lexicon::{GenerationConfig, Lexicon};
    use crate::probe::{synthesize_all, SyntheticProvider};

    fn data(per_tree: usize) -> Vec<AnnotatedSample> {
        let cfg = GenerationConfig {
            realizations_per_tree: per_tree,
            max_depth: 3,
            ..Default::default()
        };
        generate_dataset(&raising_grammar(), &Lexicon::default_lexicon(), &cfg)
            .unwrap()
            .samples
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut p = ProbeParams::init(2, 1, 0.0, 0);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.proj_verb[0] = 3.0;
        g.proj_noun[1] = -0.5;
        let h = Hyperparams {
            weight_decay: 0.0,
            ..Default::default()
        };
        AdamW::new(&p, &h).update(&mut p, &g);
        assert!((before.proj_verb[0] - p.proj_verb[0] - 1e-4).abs() < 1e-10);
        assert!((p.proj_noun[1] - before.proj_noun[1] - 1e-4).abs() < 1e-10);
        assert_eq!(p.proj_verb[1], before.proj_verb[1]);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let mut p = ProbeParams::init(2, 1, 0.0, 0);
        let before = p.clone();
        let g = p.zeros_like();
        let h = Hyperparams {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        AdamW::new(&p, &h).update(&mut p, &g);
        for (a, b) in p.proj_verb.iter().zip(&before.proj_verb) {
            assert!((a - b * 0.95).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let s = data(2);
        let emb = synthesize_all(SyntheticProvider::Positional, &s, 24, 0);
        let inst = build_instances(&s, &emb).unwrap();
        let h = Hyperparams {
            epochs: 0,
            k: 4,
            ..Default::default()
        };
        let out = train_probe(&inst, &inst, &h).unwrap();
        assert_eq!(out.params, ProbeParams::init(24, 4, 0.15, 0));
        assert!(out.history.is_empty());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let s = data(6);
        let emb = synthesize_all(SyntheticProvider::Oracle, &s, 16, 2);
        let inst = build_instances(&s, &emb).unwrap();
        let h = Hyperparams {
            epochs: 5,
            k: 8,
            lr: 1e-2,
            ..Default::default()
        };
        let a = train_probe(&inst, &inst, &h).unwrap();
        let b = train_probe(&inst, &inst, &h).unwrap();
        assert_eq!(a, b);
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    }

    #[test]
    fn missing_embedding_is_a_data_error() {
        let s = data(1);
        let emb = synthesize_all(SyntheticProvider::Oracle, &s[1..], 8, 0);
        assert!(matches!(build_instances(&s, &emb), Err(ProbeError::MissingEmbedding(_))));
    }

    #[test]
    fn prediction_rows_are_distributions() {
        let s = data(2);
        let emb = synthesize_all(SyntheticProvider::RandomFixed, &s, 8, 0);
        let p = ProbeParams::init(8, 3, 0.0, 4);
        for x in &s {
            let r = predict(&p, x, &emb).unwrap();
            assert_eq!(r.verbs.len(), x.n_verbs());
            for v in &r.verbs {
                assert_eq!(v.probs.len(), x.n_nouns);
                assert!((v.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(v.probs.iter().all(|&q| q >= 0.0));
                assert_eq!(v.predicted, argmax(&v.probs));
            }
            assert_eq!(r, predict(&p, x, &emb).unwrap());
        }
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let (t, v) = split_indices(10, 0.3, 5);
        assert_eq!(v.len(), 3);
        let mut all = [t.clone(), v.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!((t, v), split_indices(10, 0.3, 5));
    }
}
