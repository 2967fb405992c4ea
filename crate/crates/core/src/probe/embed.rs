//! Per-sentence subword embeddings, their JSONL file format and the
//! synthetic providers used for testing.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ProbeError;
use crate::harness::AnnotatedSample;
use crate::lexicon::tree_rng;

pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

/// Word id given to special subwords (sentence delimiters).
pub const SENTINEL: i64 = -1;

/// Subword vectors of one sentence, row-major `n_subwords × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRecord {
    pub sentence_id: String,
    pub dim: usize,
    pub word_ids: Vec<i64>,
    pub vectors: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn n_subwords(&self) -> usize {
        self.word_ids.len()
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.vectors[t * self.dim..(t + 1) * self.dim]
    }

    /// Checks alignment against a sentence of `n_words` words: word ids
    /// are non-decreasing over non-sentinel rows and cover every word.
    pub fn check(&self, n_words: usize) -> Result<(), String> {
        if self.vectors.len() != self.word_ids.len() * self.dim {
            return Err(format!(
                "{} values for {} subwords of dimension {}",
                self.vectors.len(),
                self.word_ids.len(),
                self.dim
            ));
        }
        let mut seen = vec![false; n_words];
        let mut last = -1;
        for &w in &self.word_ids {
            if w == SENTINEL {
                continue;
            }
            if w < last || w < 0 || w as usize >= n_words {
                return Err(format!("word id {w} out of order or range"));
            }
            seen[w as usize] = true;
            last = w;
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(format!("word {i} has no subword")),
            None => Ok(()),
        }
    }

    /// Subword rows of the words in `span`, excluding sentinels.
    pub fn mask_for(&self, span: &[usize]) -> Vec<usize> {
        (0..self.n_subwords())
            .filter(|&t| {
                let w = self.word_ids[t];
                w != SENTINEL && span.contains(&(w as usize))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingHeader {
    pub format_version: u32,
    pub dim: usize,
    pub provider_name: String,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    sentence_id: String,
    n_subwords: usize,
    word_ids: Vec<i64>,
    emb_b64: String,
}

/// An embedding file: header plus records in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub header: EmbeddingHeader,
    pub records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(header: EmbeddingHeader, records: Vec<EmbeddingRecord>) -> Self {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.sentence_id.clone(), i))
            .collect();
        EmbeddingSet { header, records, index }
    }

    pub fn get(&self, sentence_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(sentence_id).map(|&i| &self.records[i])
    }

    pub fn require(&self, sentence_id: &str) -> Result<&EmbeddingRecord, ProbeError> {
        self.get(sentence_id)
            .ok_or_else(|| ProbeError::MissingEmbedding(sentence_id.to_owned()))
    }
}

fn encode(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode(text: &str) -> Result<Vec<f32>, String> {
    let bytes = B64.decode(text).map_err(|e| e.to_string())?;
    if bytes.len() % 4 != 0 {
        return Err(format!("{} bytes is not a whole number of f32 values", bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_embeddings_to(out: &mut impl Write, set: &EmbeddingSet) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(&set.header).expect("header serializes"))?;
    for r in &set.records {
        let line = RecordLine {
            sentence_id: r.sentence_id.clone(),
            n_subwords: r.n_subwords(),
            word_ids: r.word_ids.clone(),
            emb_b64: encode(&r.vectors),
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("record serializes"))?;
    }
    Ok(())
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<(), ProbeError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_embeddings_to(&mut f, set)?;
    f.flush()?;
    Ok(())
}

pub fn read_embeddings_from(input: impl BufRead) -> Result<EmbeddingSet, ProbeError> {
    let mut lines = input.lines().enumerate();
    let err = |line: usize, message: String| ProbeError::Format { line, message };
    let (_, first) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let header: EmbeddingHeader = serde_json::from_str(&first?).map_err(|e| err(1, format!("bad header: {e}")))?;
    if header.format_version != EMBEDDING_FORMAT_VERSION {
        return Err(err(1, format!("unsupported format_version {}", header.format_version)));
    }
    if header.dim == 0 {
        return Err(err(1, "dim must be positive".into()));
    }
    let mut records = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let rec: RecordLine = serde_json::from_str(&line).map_err(|e| err(n, e.to_string()))?;
        if rec.word_ids.len() != rec.n_subwords {
            return Err(err(n, format!("{} word ids for {} subwords", rec.word_ids.len(), rec.n_subwords)));
        }
        let vectors = decode(&rec.emb_b64).map_err(|m| err(n, m))?;
        if vectors.len() != rec.n_subwords * header.dim {
            return Err(err(
                n,
                format!("{} values, expected {}×{}", vectors.len(), rec.n_subwords, header.dim),
            ));
        }
        if !ids.insert(rec.sentence_id.clone()) {
            return Err(err(n, format!("duplicate sentence id {}", rec.sentence_id)));
        }
        records.push(EmbeddingRecord {
            sentence_id: rec.sentence_id,
            dim: header.dim,
            word_ids: rec.word_ids,
            vectors,
        });
    }
    Ok(EmbeddingSet::new(header, records))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, ProbeError> {
    let f = std::fs::File::open(path)?;
    read_embeddings_from(std::io::BufReader::new(f))
}

/// The synthetic embedding providers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticProvider {
    /// One-hot word index from the start, one-hot word index from the end
    /// (both capped) and noun/verb/sentinel type bits.
    Positional,
    /// Every word of a noun phrase carries that noun's random code; every
    /// word of a verb phrase carries the code of its gold subject.
    Oracle,
    /// Seeded noise, independent of the annotation.
    RandomFixed,
}

impl SyntheticProvider {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticProvider::Positional => "positional",
            SyntheticProvider::Oracle => "oracle",
            SyntheticProvider::RandomFixed => "random-fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positional" => Some(SyntheticProvider::Positional),
            "oracle" => Some(SyntheticProvider::Oracle),
            "random-fixed" => Some(SyntheticProvider::RandomFixed),
            _ => None,
        }
    }

    /// Smallest usable dimension.
    pub fn min_dim(self) -> usize {
        match self {
            SyntheticProvider::Positional => 5,
            _ => 1,
        }
    }
}

/// Stream number derived from the sentence id, so vectors do not depend
/// on dataset order.
fn id_stream(id: &str) -> u64 {
    let d = Sha256::digest(id.as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn unit_noise(rng: &mut ChaCha20Rng) -> f32 {
    // 24 random bits mapped onto [-1, 1).
    ((rng.next_u32() >> 8) as f32 / (1u32 << 23) as f32) - 1.0
}

fn noise(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f32> {
    (0..dim).map(|_| unit_noise(rng)).collect()
}

/// Builds a record for one sample: a sentinel row, one row per word and a
/// closing sentinel row.
pub fn synthesize(p: SyntheticProvider, s: &AnnotatedSample, dim: usize, seed: u64) -> EmbeddingRecord {
    assert!(dim >= p.min_dim(), "dimension too small for {}", p.name());
    let n = s.words.len();
    let mut rng = tree_rng(seed, id_stream(&s.id));
    let mut word_ids = vec![SENTINEL];
    word_ids.extend(0..n as i64);
    word_ids.push(SENTINEL);

    let rows: Vec<Vec<f32>> = match p {
        SyntheticProvider::RandomFixed => (0..n + 2).map(|_| noise(&mut rng, dim)).collect(),
        SyntheticProvider::Oracle => {
            let codes: Vec<Vec<f32>> = (0..s.noun_spans.len()).map(|_| noise(&mut rng, dim)).collect();
            let mut rows: Vec<Vec<f32>> = (0..n + 2).map(|_| noise(&mut rng, dim)).collect();
            for (j, span) in s.noun_spans.iter().enumerate() {
                for &w in span {
                    rows[w + 1] = codes[j].clone();
                }
            }
            for (v, span) in s.verb_spans.iter().enumerate() {
                for &w in span {
                    rows[w + 1] = codes[s.subject_map[v]].clone();
                }
            }
            rows
        }
        SyntheticProvider::Positional => {
            let cap = (dim - 3) / 2;
            let (noun_bit, verb_bit, sentinel_bit) = (2 * cap, 2 * cap + 1, 2 * cap + 2);
            let mut rows = vec![vec![0f32; dim]; n + 2];
            rows[0][sentinel_bit] = 1.0;
            rows[n + 1][sentinel_bit] = 1.0;
            for w in 0..n {
                let row = &mut rows[w + 1];
                row[w.min(cap - 1)] = 1.0;
                row[cap + (n - 1 - w).min(cap - 1)] = 1.0;
                if s.noun_spans.iter().any(|sp| sp.contains(&w)) {
                    row[noun_bit] = 1.0;
                }
                if s.verb_spans.iter().any(|sp| sp.contains(&w)) {
                    row[verb_bit] = 1.0;
                }
            }
            rows
        }
    };
    EmbeddingRecord {
        sentence_id: s.id.clone(),
        dim,
        word_ids,
        vectors: rows.concat(),
    }
}

/// Synthesizes an embedding set for a whole dataset.
pub fn synthesize_all(p: SyntheticProvider, samples: &[AnnotatedSample], dim: usize, seed: u64) -> EmbeddingSet {
    EmbeddingSet::new(
        EmbeddingHeader {
            format_version: EMBEDDING_FORMAT_VERSION,
            dim,
            provider_name: p.name().to_owned(),
        },
        samples.iter().map(|s| synthesize(p, s, dim, seed)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::raising_grammar;
    use crate::harness::generate_dataset;
    use crate::lexicon::{GenerationConfig, Lexicon};

    fn samples() -> Vec<AnnotatedSample> {
        let cfg = GenerationConfig {
            realizations_per_tree: 3,
            max_depth: 3,
            ..Default::default()
        };
        generate_dataset(&raising_grammar(), &Lexicon::default_lexicon(), &cfg)
            .unwrap()
            .samples
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let s = samples();
        let mut set = synthesize_all(SyntheticProvider::RandomFixed, &s, 7, 3);
        // Values that text formats tend to mangle.
        set.records[0].vectors[0] = f32::MIN_POSITIVE;
        set.records[0].vectors[1] = -0.0;
        set.records[0].vectors[2] = 1.0e-45;
        set = EmbeddingSet::new(set.header.clone(), set.records.clone());
        let mut buf = Vec::new();
        write_embeddings_to(&mut buf, &set).unwrap();
        let back = read_embeddings_from(buf.as_slice()).unwrap();
        assert_eq!(back.records.len(), set.records.len());
        for (a, b) in back.records.iter().zip(&set.records) {
            let bits = |r: &EmbeddingRecord| r.vectors.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
            assert_eq!(a.word_ids, b.word_ids);
        }
    }

    #[test]
    fn synthetic_records_align() {
        let s = samples();
        for p in [SyntheticProvider::Positional, SyntheticProvider::Oracle, SyntheticProvider::RandomFixed] {
            for x in &s {
                let r = synthesize(p, x, 40, 1);
                r.check(x.words.len()).unwrap();
                assert_eq!(r.n_subwords(), x.words.len() + 2);
                assert_eq!(r, synthesize(p, x, 40, 1));
            }
        }
    }

    #[test]
    fn oracle_verbs_copy_their_subject_code() {
        let s = samples();
        let x = s.iter().find(|x| x.n_verbs() >= 3).unwrap();
        let r = synthesize(SyntheticProvider::Oracle, x, 8, 5);
        for (v, span) in x.verb_spans.iter().enumerate() {
            let noun_word = x.noun_spans[x.subject_map[v]][0];
            assert_eq!(r.row(span[0] + 1), r.row(noun_word + 1));
        }
    }

    #[test]
    fn masks_skip_sentinels() {
        let r = EmbeddingRecord {
            sentence_id: "x".into(),
            dim: 1,
            word_ids: vec![-1, 0, 0, 1, 2, -1],
            vectors: vec![0.0; 6],
        };
        assert_eq!(r.mask_for(&[0, 2]), vec![1, 2, 4]);
        assert!(r.check(3).is_ok());
        assert!(r.check(4).is_err());
        let bad = EmbeddingRecord {
            word_ids: vec![-1, 1, 0, 2, -1, -1],
            ..r
        };
        assert!(bad.check(3).is_err());
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let text = "{\"format_version\":1,\"dim\":2,\"provider_name\":\"t\"}\n\
                    {\"sentence_id\":\"a\",\"n_subwords\":1,\"word_ids\":[0],\"emb_b64\":\"AAAAAAAAAAA=\"}\n\
                    {\"sentence_id\":\"b\",\"n_subwords\":1,\"word_ids\":[0],\"emb_b64\":\"AAAAAA==\"}\n";
        match read_embeddings_from(text.as_bytes()) {
            Err(ProbeError::Format { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
