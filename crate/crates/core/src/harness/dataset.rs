//! Annotated samples, dataset generation and the JSONL dataset format.
//!
//! A dataset file is one header object followed by one sample per line.
//! Field order is fixed by the struct definitions, so the same samples
//! always serialize to the same bytes.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::builtin;
use crate::derivation::{enumerate_trees, linearize, AnnotatedYield};
use crate::grammar::{Grammar, Scope};
use crate::lexicon::{postprocess, sample_realizations, GenerationConfig, Lexicon};

pub const DATASET_FORMAT: &str = "xdeps-dataset";
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One generated sentence with its gold verb-subject annotation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub id: String,
    pub sentence: String,
    pub words: Vec<String>,
    /// Half-open character ranges of each word in `sentence`.
    pub char_offsets: Vec<(usize, usize)>,
    pub noun_spans: Vec<Vec<usize>>,
    pub verb_spans: Vec<Vec<usize>>,
    pub subject_map: Vec<usize>,
    pub grammar: String,
    pub tree_id: usize,
    pub tree: String,
    pub depth: usize,
    pub n_nouns: usize,
    pub verb_rules: Vec<String>,
    pub verb_scopes: Vec<Scope>,
    pub realization: usize,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl AnnotatedSample {
    pub fn n_verbs(&self) -> usize {
        self.verb_spans.len()
    }

    /// Checks the structural invariants a well-formed sample satisfies.
    pub fn check(&self) -> Result<(), String> {
        let n = self.words.len();
        if self.char_offsets.len() != n {
            return Err(format!("{} offsets for {n} words", self.char_offsets.len()));
        }
        let chars: Vec<char> = self.sentence.chars().collect();
        for (w, &(s, e)) in self.words.iter().zip(&self.char_offsets) {
            if s > e || e > chars.len() || chars[s..e].iter().collect::<String>() != *w {
                return Err(format!("offset ({s}, {e}) does not spell `{w}`"));
            }
        }
        for span in self.noun_spans.iter().chain(&self.verb_spans) {
            if span.is_empty() || span.iter().any(|&i| i >= n) || span.windows(2).any(|p| p[0] >= p[1]) {
                return Err(format!("bad span {span:?}"));
            }
        }
        if self.n_nouns != self.noun_spans.len() {
            return Err(format!("n_nouns {} but {} noun spans", self.n_nouns, self.noun_spans.len()));
        }
        let v = self.verb_spans.len();
        if self.subject_map.len() != v || self.verb_rules.len() != v || self.verb_scopes.len() != v {
            return Err("per-verb fields disagree in length".into());
        }
        if let Some(&bad) = self.subject_map.iter().find(|&&j| j >= self.n_nouns) {
            return Err(format!("subject index {bad} out of range"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub format_version: u32,
    pub grammar: String,
    pub lexicon_hash: String,
    pub seed: u64,
    pub max_depth: usize,
    pub per_tree: usize,
    pub capitalize: bool,
    pub punctuate: bool,
    pub n_trees: usize,
    pub n_samples: usize,
    /// SHA-256 over the serialized sample lines.
    pub samples_sha256: String,
    pub tool_version: String,
}

impl DatasetHeader {
    pub fn config(&self) -> GenerationConfig {
        GenerationConfig {
            realizations_per_tree: self.per_tree,
            seed: self.seed,
            max_depth: self.max_depth,
            capitalize: self.capitalize,
            punctuate: self.punctuate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<AnnotatedSample>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Generation(String),
    #[error("unknown grammar `{0}`")]
    UnknownGrammar(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn sample_line(s: &AnnotatedSample) -> String {
    serde_json::to_string(s).expect("samples serialize")
}

fn samples_hash(samples: &[AnnotatedSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(sample_line(s).as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Builds a sample from a traced yield.
pub fn make_sample(
    g: &Grammar,
    tree_id: usize,
    tree: &str,
    depth: usize,
    realization: usize,
    y: &AnnotatedYield,
    cfg: &GenerationConfig,
) -> AnnotatedSample {
    let p = postprocess(&y.words, cfg.capitalize, cfg.punctuate);
    AnnotatedSample {
        id: format!("{}-{tree_id:05}-{realization:03}", g.id),
        sentence: p.sentence,
        words: p.words,
        char_offsets: p.offsets,
        noun_spans: y.noun_spans.clone(),
        verb_spans: y.verb_spans.clone(),
        subject_map: y.subject_map.clone(),
        grammar: g.id.clone(),
        tree_id,
        tree: tree.to_owned(),
        depth,
        n_nouns: y.noun_spans.len(),
        verb_rules: y.verbs.iter().map(|v| v.rule.clone()).collect(),
        verb_scopes: y.verbs.iter().map(|v| v.scope).collect(),
        realization,
        seed: cfg.seed,
        flags: y.flags.clone(),
    }
}

/// Generates every tree up to `cfg.max_depth` with
/// `cfg.realizations_per_tree` realizations each, ordered by tree index
/// then realization index.
pub fn generate_dataset(g: &Grammar, lex: &Lexicon, cfg: &GenerationConfig) -> Result<Dataset, DatasetError> {
    let populated = lex
        .populate(g)
        .map_err(|e| DatasetError::Generation(e.to_string()))?;
    let trees = enumerate_trees(g, cfg.max_depth);
    let mut samples = Vec::with_capacity(trees.len() * cfg.realizations_per_tree);
    for (i, t) in trees.iter().enumerate() {
        let draws = sample_realizations(g, lex, t, i, cfg).map_err(|e| DatasetError::Generation(e.to_string()))?;
        let shown = t.to_string();
        let depth = t.depth();
        for (r, a) in draws.iter().enumerate() {
            let y = linearize(&populated, t, a).map_err(|e| DatasetError::Generation(format!("tree {i}: {e}")))?;
            samples.push(make_sample(g, i, &shown, depth, r, &y, cfg));
        }
    }
    Ok(Dataset {
        header: header_for(g, lex, cfg, trees.len(), &samples),
        samples,
    })
}

pub fn header_for(
    g: &Grammar,
    lex: &Lexicon,
    cfg: &GenerationConfig,
    n_trees: usize,
    samples: &[AnnotatedSample],
) -> DatasetHeader {
    DatasetHeader {
        format: DATASET_FORMAT.into(),
        format_version: DATASET_FORMAT_VERSION,
        grammar: g.id.clone(),
        lexicon_hash: lex.hash(),
        seed: cfg.seed,
        max_depth: cfg.max_depth,
        per_tree: cfg.realizations_per_tree,
        capitalize: cfg.capitalize,
        punctuate: cfg.punctuate,
        n_trees,
        n_samples: samples.len(),
        samples_sha256: samples_hash(samples),
        tool_version: TOOL_VERSION.into(),
    }
}

pub fn write_dataset_to(out: &mut impl Write, d: &Dataset) -> std::io::Result<()> {
    writeln!(out, "{}", serde_json::to_string(&d.header).expect("header serializes"))?;
    for s in &d.samples {
        writeln!(out, "{}", sample_line(s))?;
    }
    Ok(())
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<(), DatasetError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dataset_to(&mut f, d)?;
    f.flush()?;
    Ok(())
}

pub fn read_dataset_from(input: impl BufRead) -> Result<Dataset, DatasetError> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or(DatasetError::Line {
        line: 1,
        message: "missing header".into(),
    })?;
    let header: DatasetHeader = serde_json::from_str(&first?).map_err(|e| DatasetError::Line {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if header.format != DATASET_FORMAT || header.format_version != DATASET_FORMAT_VERSION {
        return Err(DatasetError::Line {
            line: 1,
            message: format!("unsupported format {} v{}", header.format, header.format_version),
        });
    }
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Line { line: i + 1, message };
        let s: AnnotatedSample = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        s.check().map_err(err)?;
        if !ids.insert(s.id.clone()) {
            return Err(err(format!("duplicate sample id {}", s.id)));
        }
        samples.push(s);
    }
    if samples.len() != header.n_samples {
        return Err(DatasetError::Mismatch(format!(
            "header announces {} samples, file has {}",
            header.n_samples,
            samples.len()
        )));
    }
    Ok(Dataset { header, samples })
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let f = std::fs::File::open(path)?;
    read_dataset_from(std::io::BufReader::new(f))
}

/// Outcome of re-deriving a dataset from its header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub stored_hash: String,
    pub content_hash: String,
    pub regenerated_hash: String,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.stored_hash == self.content_hash && self.content_hash == self.regenerated_hash
    }
}

/// Checks the header's sample hash against the file content, then
/// regenerates the dataset from the header's settings and compares.
pub fn verify_dataset(d: &Dataset, lex: &Lexicon) -> Result<VerifyReport, DatasetError> {
    let g = builtin::by_id(&d.header.grammar).ok_or_else(|| DatasetError::UnknownGrammar(d.header.grammar.clone()))?;
    if lex.hash() != d.header.lexicon_hash {
        return Err(DatasetError::Mismatch(format!(
            "lexicon hash {} differs from the header's {}",
            lex.hash(),
            d.header.lexicon_hash
        )));
    }
    let again = generate_dataset(&g, lex, &d.header.config())?;
    Ok(VerifyReport {
        stored_hash: d.header.samples_sha256.clone(),
        content_hash: samples_hash(&d.samples),
        regenerated_hash: again.header.samples_sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{control_grammar, raising_grammar};

    fn small(g: &Grammar, depth: usize, per_tree: usize) -> Dataset {
        let cfg = GenerationConfig {
            realizations_per_tree: per_tree,
            seed: 11,
            max_depth: depth,
            ..Default::default()
        };
        generate_dataset(g, &Lexicon::default_lexicon(), &cfg).unwrap()
    }

    fn roundtrip(d: &Dataset) -> Dataset {
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, d).unwrap();
        read_dataset_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn control_dataset_round_trips() {
        let d = small(&control_grammar(), 3, 10);
        assert_eq!(d.samples.len(), 1200);
        assert_eq!(roundtrip(&d), d);
        assert!(d.samples.iter().all(|s| s.check().is_ok()));
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let g = raising_grammar();
        let d = small(&g, 1, 3);
        assert!(d.samples.is_empty());
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &d).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(roundtrip(&d), d);
    }

    #[test]
    fn sample_metadata() {
        let d = small(&raising_grammar(), 3, 2);
        let s = &d.samples[0];
        assert_eq!(s.id, "raising-00000-000");
        assert_eq!(s.tree, "B1(PREF, B2(NP, INF_iv))");
        assert_eq!(s.depth, 2);
        assert_eq!(s.n_nouns, 2);
        assert!(s.sentence.starts_with("Iemand ziet de "));
        assert!(s.sentence.ends_with('.'));
        assert_eq!(s.verb_rules, vec!["B1", "B2"]);
    }

    #[test]
    fn read_errors_carry_line_numbers() {
        let d = small(&raising_grammar(), 2, 2);
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let clean: Vec<String> = text.lines().map(String::from).collect();
        let mut lines = clean.clone();
        lines[1] = lines[1].replace("\"n_nouns\":2", "\"n_nouns\":5");
        let broken = lines.join("\n");
        match read_dataset_from(broken.as_bytes()) {
            Err(DatasetError::Line { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let mut lines = clean;
        lines[2] = "{not json".into();
        match read_dataset_from(lines.join("\n").as_bytes()) {
            Err(DatasetError::Line { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_dataset_from("".as_bytes()) {
            Err(DatasetError::Line { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn verify_detects_tampering() {
        let lex = Lexicon::default_lexicon();
        let mut d = small(&raising_grammar(), 3, 2);
        assert!(verify_dataset(&d, &lex).unwrap().ok());
        d.samples[1].sentence = d.samples[1].sentence.replace("Iemand", "Niemand");
        assert!(!verify_dataset(&d, &lex).unwrap().ok());
        let other = Lexicon::parse("slot NP : de hond").unwrap();
        assert!(verify_dataset(&d, &other).is_err());
    }
}
