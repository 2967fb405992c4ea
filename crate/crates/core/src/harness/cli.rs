//! The `xdeps` command line. Exit codes: 0 success, 1 usage error,
//! 2 data error.

use std::collections::HashSet;
use std::fmt::Display;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::{
    generate_dataset, one_shot_mode, read_dataset, run_baseline, verify_dataset, write_dataset,
    AnnotatedSample, Baseline, GroupKey, MetricsReport,
};
use crate::builtin;
use crate::derivation::{depth_histogram, enumerate_trees, AbstractTree, NodeKind};
use crate::grammar::Grammar;
use crate::lexicon::{GenerationConfig, Lexicon};
use crate::probe::{
    build_instances, predict_all, read_embeddings, split_indices, synthesize_all, train_from,
    train_probe, write_embeddings, EpochStats, Hyperparams, PredictionRecord, ProbeParams,
    SyntheticProvider,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "xdeps", version, about = "Generate cross-serial dependency corpora and probe verb-subject pairing")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate an annotated dataset.
    Generate(GenerateArgs),
    /// Print derivation tree counts per depth.
    Enumerate(EnumerateArgs),
    /// Re-derive a dataset from its header and compare hashes.
    Verify(VerifyArgs),
    /// Train the probe.
    Train(TrainArgs),
    /// Run a trained probe over a dataset.
    Predict(PredictArgs),
    /// Summarize predictions as accuracy tables.
    Report(ReportArgs),
    /// Build the one-shot tuning set, optionally tune and evaluate.
    OneShot(OneShotArgs),
    /// Write synthetic embeddings for a dataset.
    SynthEmbed(SynthArgs),
    /// Predictions of a reference predictor.
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    grammar: String,
    #[arg(long)]
    max_depth: usize,
    #[arg(long, default_value_t = 10)]
    per_tree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lexicon file; the bundled lexicon when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_capitalize: bool,
    #[arg(long)]
    no_punctuate: bool,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[arg(long)]
    grammar: String,
    #[arg(long)]
    max_depth: usize,
    /// Also list every tree.
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    path: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    val_split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 80)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    k: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.15)]
    dropout: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Which samples to predict: all, val or train (as split at training).
    #[arg(long, default_value = "all")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    preds: PathBuf,
    /// Comma-separated groupings among n_nouns, depth, rule, scope.
    #[arg(long, default_value = "n_nouns,depth,rule,scope")]
    group_by: String,
    /// Keep adverb variants apart instead of merging them into A1^X-style groups.
    #[arg(long)]
    no_aggregate: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OneShotArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed2: u64,
    /// Where to write the tuning set.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Trained probe to tune; requires both embedding files.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    tuning_embeddings: Option<PathBuf>,
    #[arg(long)]
    eval_embeddings: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Predictions of the tuned probe on the original dataset.
    #[arg(long)]
    preds_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    provider: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    /// adjacent-noun or uniform-random.
    #[arg(long)]
    predictor: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// A trained probe with the settings that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub provider: String,
    pub hyper: Hyperparams,
    pub val_split: f64,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub history: Vec<EpochStats>,
    pub val_ids: Vec<String>,
    pub params: ProbeParams,
}

#[derive(Serialize, Deserialize)]
struct PredsHeader {
    format: String,
    provider: String,
}

const PREDS_FORMAT: &str = "xdeps-predictions";

enum Failure {
    Usage(String),
    Data(String),
}

type Outcome = Result<(), Failure>;

fn data<E: Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn grammar(id: &str) -> Result<Grammar, Failure> {
    builtin::by_id(id).ok_or_else(|| Failure::Usage(format!("unknown grammar `{id}` (expected control or raising)")))
}

fn lexicon(path: &Option<PathBuf>) -> Result<Lexicon, Failure> {
    match path {
        Some(p) => Lexicon::load(p).map_err(data),
        None => Ok(Lexicon::default_lexicon()),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Generate(a) => generate(a, out),
        Cmd::Enumerate(a) => enumerate(a, out),
        Cmd::Verify(a) => verify(a, out),
        Cmd::Train(a) => train(a, out),
        Cmd::Predict(a) => predict(a, out),
        Cmd::Report(a) => report(a, out),
        Cmd::OneShot(a) => one_shot(a, out),
        Cmd::SynthEmbed(a) => synth(a, out),
        Cmd::Baseline(a) => baseline(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_DATA
        }
    }
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Outcome {
    let g = grammar(&a.grammar)?;
    if a.per_tree == 0 || a.max_depth == 0 {
        return Err(Failure::Usage("--per-tree and --max-depth must be positive".into()));
    }
    let lex = lexicon(&a.lexicon)?;
    let cfg = GenerationConfig {
        realizations_per_tree: a.per_tree,
        seed: a.seed,
        max_depth: a.max_depth,
        capitalize: !a.no_capitalize,
        punctuate: !a.no_punctuate,
    };
    let d = generate_dataset(&g, &lex, &cfg).map_err(data)?;
    write_dataset(&a.out, &d).map_err(data)?;
    writeln!(
        out,
        "wrote {} samples from {} trees to {} (samples sha256 {})",
        d.samples.len(),
        d.header.n_trees,
        a.out.display(),
        d.header.samples_sha256
    )
    .map_err(data)
}

/// Bracketed form with subtypes dropped.
fn shape(t: &AbstractTree) -> String {
    match &t.kind {
        NodeKind::Leaf => t.symbol.name.clone(),
        NodeKind::Apply { rule, children } => {
            let inner: Vec<String> = children.iter().map(shape).collect();
            format!("{rule}({})", inner.join(", "))
        }
    }
}

/// Reference one-shot set sizes reported for the two grammars at their
/// standard depth bounds.
fn reference_count(id: &str, depth: usize) -> Option<usize> {
    match (id, depth) {
        ("control", 4) => Some(307),
        ("raising", 6) => Some(30),
        _ => None,
    }
}

fn enumerate(a: EnumerateArgs, out: &mut dyn Write) -> Outcome {
    let g = grammar(&a.grammar)?;
    let trees = enumerate_trees(&g, a.max_depth);
    let hist = depth_histogram(&trees);
    let mut text = format!("grammar {}, max depth {}\n{:<8}{:>8}\n", g.id, a.max_depth, "depth", "trees");
    for (d, n) in &hist {
        text += &format!("{d:<8}{n:>8}\n");
    }
    text += &format!("{:<8}{:>8}\n", "total", trees.len());
    let shapes: HashSet<String> = trees.iter().map(shape).collect();
    let mut cumulative = 0;
    let mut running = 0;
    for n in hist.values() {
        running += n;
        cumulative += running;
    }
    text += &format!("without subtype distinction: {}\n", shapes.len());
    text += &format!("summed over depth bounds {}..{}: {cumulative}\n", hist.keys().next().unwrap_or(&0), a.max_depth);
    text += "convention: depth = rule applications on the longest root-to-leaf path; \
             trees that differ only in a verb subtype (su/obj) count separately\n";
    if let Some(r) = reference_count(&g.id, a.max_depth) {
        if r == trees.len() {
            text += &format!("matches the reference one-shot set size {r}\n");
        } else {
            text += &format!(
                "deviation: the reference one-shot set size is {r}; this convention gives {}, \
                 which is kept as the regression value\n",
                trees.len()
            );
        }
    }
    if a.list {
        for (i, t) in trees.iter().enumerate() {
            text += &format!("{i:>6}  d{}  {t}\n", t.depth());
        }
    }
    out.write_all(text.as_bytes()).map_err(data)
}

fn verify(a: VerifyArgs, out: &mut dyn Write) -> Outcome {
    let d = read_dataset(&a.path).map_err(data)?;
    let lex = lexicon(&a.lexicon)?;
    let r = verify_dataset(&d, &lex).map_err(data)?;
    writeln!(out, "stored      {}", r.stored_hash).map_err(data)?;
    writeln!(out, "content     {}", r.content_hash).map_err(data)?;
    writeln!(out, "regenerated {}", r.regenerated_hash).map_err(data)?;
    if r.ok() {
        writeln!(out, "ok").map_err(data)
    } else {
        Err(Failure::Data("dataset does not match its regeneration".into()))
    }
}

fn check_hyper(h: &Hyperparams) -> Outcome {
    if h.k == 0 || h.batch_size == 0 || !(0.0..1.0).contains(&h.dropout) || h.lr <= 0.0 {
        return Err(Failure::Usage("need k ≥ 1, batch size ≥ 1, 0 ≤ dropout < 1 and lr > 0".into()));
    }
    Ok(())
}

fn train(a: TrainArgs, out: &mut dyn Write) -> Outcome {
    if !(0.0..1.0).contains(&a.val_split) {
        return Err(Failure::Usage("--val-split must be in [0, 1)".into()));
    }
    let hyper = Hyperparams {
        lr: a.lr,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        dropout: a.dropout,
        epochs: a.epochs,
        k: a.k,
        seed: a.seed,
        ..Default::default()
    };
    check_hyper(&hyper)?;
    let d = read_dataset(&a.data).map_err(data)?;
    let emb = read_embeddings(&a.embeddings).map_err(data)?;
    let (tr, va) = split_indices(d.samples.len(), a.val_split, a.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| d.samples[i].clone()).collect::<Vec<_>>();
    let (train_s, val_s) = (pick(&tr), pick(&va));
    let train_i = build_instances(&train_s, &emb).map_err(data)?;
    let val_i = build_instances(&val_s, &emb).map_err(data)?;
    let o = train_probe(&train_i, &val_i, &hyper).map_err(data)?;
    for e in o.history.iter().filter(|e| e.epoch % 10 == 0 || e.epoch == o.history.len()) {
        writeln!(
            out,
            "epoch {:>3}  loss {:.4}  val {}",
            e.epoch,
            e.train_loss,
            e.val_accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
        )
        .map_err(data)?;
    }
    writeln!(
        out,
        "best epoch {} (val {})",
        o.best_epoch,
        o.best_val_accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
    )
    .map_err(data)?;
    let file = ParamsFile {
        provider: emb.header.provider_name.clone(),
        hyper,
        val_split: a.val_split,
        best_epoch: o.best_epoch,
        best_val_accuracy: o.best_val_accuracy,
        history: o.history,
        val_ids: val_s.iter().map(|s| s.id.clone()).collect(),
        params: o.params,
    };
    std::fs::write(&a.out, serde_json::to_string(&file).expect("params serialize")).map_err(data)
}

fn load_params(path: &Path) -> Result<ParamsFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(data)?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_preds(path: &Path, provider: &str, preds: &[PredictionRecord]) -> Outcome {
    let mut f = BufWriter::new(std::fs::File::create(path).map_err(data)?);
    let header = PredsHeader {
        format: PREDS_FORMAT.into(),
        provider: provider.into(),
    };
    writeln!(f, "{}", serde_json::to_string(&header).unwrap()).map_err(data)?;
    for p in preds {
        writeln!(f, "{}", serde_json::to_string(p).unwrap()).map_err(data)?;
    }
    f.flush().map_err(data)
}

/// Reads a predictions file: header line, then one record per line.
pub fn read_preds(path: &Path) -> Result<(String, Vec<PredictionRecord>), String> {
    let f = std::fs::File::open(path).map_err(|e| e.to_string())?;
    let mut lines = std::io::BufReader::new(f).lines().enumerate();
    let first = lines
        .next()
        .ok_or("line 1: missing header")?
        .1
        .map_err(|e| e.to_string())?;
    let header: PredsHeader = serde_json::from_str(&first).map_err(|e| format!("line 1: {e}"))?;
    if header.format != PREDS_FORMAT {
        return Err(format!("line 1: not a predictions file ({})", header.format));
    }
    let mut preds = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| e.to_string())?;
        if !line.trim().is_empty() {
            preds.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
        }
    }
    Ok((header.provider, preds))
}

fn predict(a: PredictArgs, out: &mut dyn Write) -> Outcome {
    let pf = load_params(&a.params)?;
    let d = read_dataset(&a.data).map_err(data)?;
    let emb = read_embeddings(&a.embeddings).map_err(data)?;
    let val: HashSet<&str> = pf.val_ids.iter().map(String::as_str).collect();
    let chosen: Vec<AnnotatedSample> = match a.split.as_str() {
        "all" => d.samples.clone(),
        "val" => d.samples.iter().filter(|s| val.contains(s.id.as_str())).cloned().collect(),
        "train" => d.samples.iter().filter(|s| !val.contains(s.id.as_str())).cloned().collect(),
        other => return Err(Failure::Usage(format!("unknown split `{other}` (all, val or train)"))),
    };
    let preds = predict_all(&pf.params, &chosen, &emb).map_err(data)?;
    write_preds(&a.out, &emb.header.provider_name, &preds)?;
    let acc = super::accuracy(&preds);
    writeln!(
        out,
        "{} sentences, accuracy {}",
        preds.len(),
        acc.map_or("n/a".into(), |v| format!("{v:.4}"))
    )
    .map_err(data)
}

fn report(a: ReportArgs, out: &mut dyn Write) -> Outcome {
    let keys = a
        .group_by
        .split(',')
        .map(|k| GroupKey::parse(k.trim()).ok_or_else(|| Failure::Usage(format!("unknown grouping `{k}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let (provider, preds) = read_preds(&a.preds).map_err(Failure::Data)?;
    let r = MetricsReport::build(&preds, !a.no_aggregate, Some(&provider)).map_err(data)?;
    if let Some(p) = &a.json {
        std::fs::write(p, r.to_json()).map_err(data)?;
    }
    out.write_all(r.to_text(&keys).as_bytes()).map_err(data)
}

fn one_shot(a: OneShotArgs, out: &mut dyn Write) -> Outcome {
    let d = read_dataset(&a.data).map_err(data)?;
    let lex = lexicon(&a.lexicon)?;
    let o = one_shot_mode(&d, &lex, a.seed2).map_err(data)?;
    write_dataset(&a.out, &o.tuning).map_err(data)?;
    writeln!(
        out,
        "wrote {} tuning samples ({} trees, {} overlapping the evaluation set) to {}",
        o.tuning.samples.len(),
        o.tuning.header.n_trees,
        o.overlaps,
        a.out.display()
    )
    .map_err(data)?;
    writeln!(out, "protocol: {}", serde_json::to_string(&o.protocol).unwrap()).map_err(data)?;

    let Some(params) = &a.params else { return Ok(()) };
    let (Some(te), Some(ee)) = (&a.tuning_embeddings, &a.eval_embeddings) else {
        return Err(Failure::Usage("--params needs --tuning-embeddings and --eval-embeddings".into()));
    };
    let pf = load_params(params)?;
    let tune_emb = read_embeddings(te).map_err(data)?;
    let eval_emb = read_embeddings(ee).map_err(data)?;
    let hyper = Hyperparams {
        epochs: a.epochs.unwrap_or(o.protocol.epochs),
        ..pf.hyper.clone()
    };
    let tune = build_instances(&o.tuning.samples, &tune_emb).map_err(data)?;
    let tuned = train_from(pf.params, &tune, &[], &hyper).map_err(data)?;
    let preds = predict_all(&tuned.params, &d.samples, &eval_emb).map_err(data)?;
    if let Some(p) = &a.preds_out {
        write_preds(p, &eval_emb.header.provider_name, &preds)?;
    }
    let r = MetricsReport::build(&preds, true, Some(&eval_emb.header.provider_name)).map_err(data)?;
    out.write_all(r.to_text(&GroupKey::ALL).as_bytes()).map_err(data)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Outcome {
    let p = SyntheticProvider::parse(&a.provider)
        .ok_or_else(|| Failure::Usage(format!("unknown provider `{}` (positional, oracle, random-fixed)", a.provider)))?;
    if a.dim < p.min_dim() {
        return Err(Failure::Usage(format!("--dim must be at least {} for {}", p.min_dim(), p.name())));
    }
    let d = read_dataset(&a.data).map_err(data)?;
    let set = synthesize_all(p, &d.samples, a.dim, a.seed);
    write_embeddings(&a.out, &set).map_err(data)?;
    writeln!(out, "wrote {} {} embeddings of dimension {} to {}", set.records.len(), p.name(), a.dim, a.out.display()).map_err(data)
}

fn baseline(a: BaselineArgs, out: &mut dyn Write) -> Outcome {
    let b = Baseline::parse(&a.predictor)
        .ok_or_else(|| Failure::Usage(format!("unknown predictor `{}` (adjacent-noun, uniform-random)", a.predictor)))?;
    let d = read_dataset(&a.data).map_err(data)?;
    let preds = run_baseline(b, &d.samples, a.seed);
    write_preds(&a.out, &a.predictor, &preds)?;
    writeln!(
        out,
        "{} sentences, accuracy {}",
        preds.len(),
        super::accuracy(&preds).map_or("n/a".into(), |v| format!("{v:.4}"))
    )
    .map_err(data)
}
