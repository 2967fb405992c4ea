//! Span pooling, projection and masked verb-noun attention, with the
//! gradient of the cross-entropy loss written out by hand.

use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::embed::EmbeddingRecord;
use super::ProbeError;
use crate::harness::AnnotatedSample;
use crate::lexicon::tree_rng;

/// Probe weights. Projections are row-major `dim × k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub dim: usize,
    pub k: usize,
    pub dropout_rate: f64,
    pub pool_score_verb: Vec<f64>,
    pub pool_score_noun: Vec<f64>,
    pub proj_verb: Vec<f64>,
    pub proj_noun: Vec<f64>,
}

pub(crate) fn uniform01(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

impl ProbeParams {
    /// Projections uniform in ±1/√dim, score vectors zero.
    pub fn init(dim: usize, k: usize, dropout_rate: f64, seed: u64) -> Self {
        assert!(dim >= 1 && k >= 1, "dim and k must be positive");
        assert!((0.0..1.0).contains(&dropout_rate), "dropout must be in [0, 1)");
        let mut rng = tree_rng(seed, u64::MAX);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (2.0 * uniform01(&mut rng) - 1.0) * bound).collect() };
        let proj_verb = draw(dim * k);
        let proj_noun = draw(dim * k);
        ProbeParams {
            dim,
            k,
            dropout_rate,
            pool_score_verb: vec![0.0; dim],
            pool_score_noun: vec![0.0; dim],
            proj_verb,
            proj_noun,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ProbeParams {
            pool_score_verb: vec![0.0; self.dim],
            pool_score_noun: vec![0.0; self.dim],
            proj_verb: vec![0.0; self.dim * self.k],
            proj_noun: vec![0.0; self.dim * self.k],
            ..self.clone()
        }
    }

    /// The trainable arrays in a fixed order.
    pub fn fields(&self) -> [&Vec<f64>; 4] {
        [&self.pool_score_verb, &self.pool_score_noun, &self.proj_verb, &self.proj_noun]
    }

    pub fn fields_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.pool_score_verb,
            &mut self.pool_score_noun,
            &mut self.proj_verb,
            &mut self.proj_noun,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }
}

/// A sentence ready for the probe: subword vectors, subword masks per
/// phrase and gold subjects.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub sentence_id: String,
    pub dim: usize,
    /// Row-major `T × dim`.
    pub x: Vec<f64>,
    pub verb_masks: Vec<Vec<usize>>,
    pub noun_masks: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

impl Instance {
    /// Expands word-level spans to subword masks.
    pub fn new(sample: &AnnotatedSample, rec: &EmbeddingRecord) -> Result<Self, ProbeError> {
        rec.check(sample.words.len())
            .map_err(|m| ProbeError::Alignment(format!("{}: {m}", sample.id)))?;
        let masks = |spans: &[Vec<usize>]| -> Result<Vec<Vec<usize>>, ProbeError> {
            spans
                .iter()
                .map(|sp| {
                    let m = rec.mask_for(sp);
                    if m.is_empty() {
                        Err(ProbeError::Alignment(format!("{}: span {sp:?} has no subwords", sample.id)))
                    } else {
                        Ok(m)
                    }
                })
                .collect()
        };
        Ok(Instance {
            sentence_id: sample.id.clone(),
            dim: rec.dim,
            x: rec.vectors.iter().map(|&v| v as f64).collect(),
            verb_masks: masks(&sample.verb_spans)?,
            noun_masks: masks(&sample.noun_spans)?,
            gold: sample.subject_map.clone(),
        })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.x[t * self.dim..(t + 1) * self.dim]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax in place, shifted by the maximum for stability.
pub fn softmax(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Attentive pooling of one mask: scores are `score · x_t`, weights are
/// their softmax over the mask, the output is the weighted row sum.
/// Returns (pooled vector, weights).
pub fn pool(x: &[f64], dim: usize, mask: &[usize], score: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(!mask.is_empty(), "empty pooling mask");
    let row = |t: usize| &x[t * dim..(t + 1) * dim];
    let mut w: Vec<f64> = mask.iter().map(|&t| dot(score, row(t))).collect();
    softmax(&mut w);
    let mut out = vec![0.0; dim];
    for (&t, &a) in mask.iter().zip(&w) {
        for (o, v) in out.iter_mut().zip(row(t)) {
            *o += a * v;
        }
    }
    (out, w)
}

/// Pools every mask of a record (f32 input) with one score vector.
pub fn pool_spans(rec: &EmbeddingRecord, masks: &[Vec<usize>], score: &[f64]) -> Vec<Vec<f64>> {
    let x: Vec<f64> = rec.vectors.iter().map(|&v| v as f64).collect();
    masks.iter().map(|m| pool(&x, rec.dim, m, score).0).collect()
}

/// `P^T h` for a row-major `dim × k` matrix.
fn project(p: &[f64], h: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (d, &hd) in h.iter().enumerate() {
        if hd != 0.0 {
            for (o, w) in out.iter_mut().zip(&p[d * k..(d + 1) * k]) {
                *o += hd * w;
            }
        }
    }
    out
}

/// Row-wise softmax of projected dot products, masked entries exactly 0.
/// `mask[i][j]` false excludes noun `j` for verb `i`.
pub fn score_pairs(verbs: &[Vec<f64>], nouns: &[Vec<f64>], p: &ProbeParams, mask: &[Vec<bool>]) -> Vec<Vec<f64>> {
    assert_eq!(mask.len(), verbs.len(), "mask rows must match verbs");
    let qs: Vec<Vec<f64>> = verbs.iter().map(|v| project(&p.proj_verb, v, p.k)).collect();
    let ks: Vec<Vec<f64>> = nouns.iter().map(|n| project(&p.proj_noun, n, p.k)).collect();
    qs.iter()
        .zip(mask)
        .map(|(q, row)| {
            assert_eq!(row.len(), nouns.len(), "mask columns must match nouns");
            assert!(row.iter().any(|&b| b), "verb row with no candidate noun");
            let mut logits: Vec<f64> = ks
                .iter()
                .zip(row)
                .map(|(k, &on)| if on { dot(q, k) } else { f64::NEG_INFINITY })
                .collect();
            softmax(&mut logits);
            logits
        })
        .collect()
}

/// Forward pass of one sentence: probability rows over its nouns.
pub fn forward(p: &ProbeParams, inst: &Instance) -> Vec<Vec<f64>> {
    forward_on(p, inst, &inst.x)
}

fn forward_on(p: &ProbeParams, inst: &Instance, x: &[f64]) -> Vec<Vec<f64>> {
    let verbs: Vec<Vec<f64>> = inst
        .verb_masks
        .iter()
        .map(|m| pool(x, inst.dim, m, &p.pool_score_verb).0)
        .collect();
    let nouns: Vec<Vec<f64>> = inst
        .noun_masks
        .iter()
        .map(|m| pool(x, inst.dim, m, &p.pool_score_noun).0)
        .collect();
    let mask = vec![vec![true; nouns.len()]; verbs.len()];
    score_pairs(&verbs, &nouns, p, &mask)
}

/// Summed cross-entropy of the gold nouns of one sentence.
pub fn sentence_loss(p: &ProbeParams, inst: &Instance) -> f64 {
    forward(p, inst)
        .iter()
        .zip(&inst.gold)
        .map(|(row, &g)| -row[g].ln())
        .sum()
}

/// Backpropagation through pooling: accumulates into `dscore`.
fn pool_backward(x: &[f64], dim: usize, mask: &[usize], weights: &[f64], dh: &[f64], dscore: &mut [f64]) {
    let row = |t: usize| &x[t * dim..(t + 1) * dim];
    let da: Vec<f64> = mask.iter().map(|&t| dot(dh, row(t))).collect();
    let mean: f64 = weights.iter().zip(&da).map(|(a, d)| a * d).sum();
    for ((&t, &a), &d) in mask.iter().zip(weights).zip(&da) {
        let de = a * (d - mean);
        for (g, v) in dscore.iter_mut().zip(row(t)) {
            *g += de * v;
        }
    }
}

/// Forward and backward on rows `x` (possibly dropped out). Adds
/// `scale ×` the gradient of the summed sentence loss into `grad` and
/// returns the summed loss.
pub(crate) fn accumulate(p: &ProbeParams, inst: &Instance, x: &[f64], scale: f64, grad: &mut ProbeParams) -> f64 {
    let (dim, k) = (p.dim, p.k);
    let pooled = |masks: &[Vec<usize>], s: &[f64]| -> Vec<(Vec<f64>, Vec<f64>)> {
        masks.iter().map(|m| pool(x, dim, m, s)).collect()
    };
    let vp = pooled(&inst.verb_masks, &p.pool_score_verb);
    let np = pooled(&inst.noun_masks, &p.pool_score_noun);
    let qs: Vec<Vec<f64>> = vp.iter().map(|(h, _)| project(&p.proj_verb, h, k)).collect();
    let ks: Vec<Vec<f64>> = np.iter().map(|(h, _)| project(&p.proj_noun, h, k)).collect();

    let mut loss = 0.0;
    let mut dks = vec![vec![0.0; k]; ks.len()];
    for (i, q) in qs.iter().enumerate() {
        let mut prob: Vec<f64> = ks.iter().map(|kj| dot(q, kj)).collect();
        softmax(&mut prob);
        let g = inst.gold[i];
        loss -= prob[g].ln();
        let mut dq = vec![0.0; k];
        for (j, kj) in ks.iter().enumerate() {
            let dl = scale * (prob[j] - if j == g { 1.0 } else { 0.0 });
            for c in 0..k {
                dq[c] += dl * kj[c];
                dks[j][c] += dl * q[c];
            }
        }
        backprop_phrase(&vp[i], &dq, &p.proj_verb, &inst.verb_masks[i], x, dim, k, &mut grad.proj_verb, &mut grad.pool_score_verb);
    }
    for (j, dk) in dks.iter().enumerate() {
        backprop_phrase(&np[j], dk, &p.proj_noun, &inst.noun_masks[j], x, dim, k, &mut grad.proj_noun, &mut grad.pool_score_noun);
    }
    loss
}

/// Gradient through `P^T h` and the pooling that produced `h`.
#[allow(clippy::too_many_arguments)]
fn backprop_phrase(
    (h, weights): &(Vec<f64>, Vec<f64>),
    dout: &[f64],
    proj: &[f64],
    mask: &[usize],
    x: &[f64],
    dim: usize,
    k: usize,
    dproj: &mut [f64],
    dscore: &mut [f64],
) {
    let mut dh = vec![0.0; dim];
    for d in 0..dim {
        let prow = &proj[d * k..(d + 1) * k];
        dh[d] = dot(prow, dout);
        if h[d] != 0.0 {
            for (g, &o) in dproj[d * k..(d + 1) * k].iter_mut().zip(dout) {
                *g += h[d] * o;
            }
        }
    }
    pool_backward(x, dim, mask, weights, &dh, dscore);
}

/// Gradient of the mean per-verb loss of one sentence, without dropout.
pub fn gradient(p: &ProbeParams, inst: &Instance) -> (f64, ProbeParams) {
    let n = inst.gold.len().max(1) as f64;
    let mut g = p.zeros_like();
    let loss = accumulate(p, inst, &inst.x, 1.0 / n, &mut g);
    (loss / n, g)
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences over every parameter, with relative error
/// `|a − n| / max(|a| + |n|, 1e-6)`.
pub fn grad_check(p: &ProbeParams, inst: &Instance, epsilon: f64) -> f64 {
    let n = inst.gold.len().max(1) as f64;
    let (_, analytic) = gradient(p, inst);
    let mut probe = p.clone();
    let mut worst: f64 = 0.0;
    for f in 0..4 {
        for i in 0..p.fields()[f].len() {
            let orig = p.fields()[f][i];
            probe.fields_mut()[f][i] = orig + epsilon;
            let up = sentence_loss(&probe, inst) / n;
            probe.fields_mut()[f][i] = orig - epsilon;
            let down = sentence_loss(&probe, inst) / n;
            probe.fields_mut()[f][i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.fields()[f][i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
