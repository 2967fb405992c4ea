//! Span-selection probe: attentive pooling over phrase masks, low-rank
//! projections and masked dot-product attention from verbs to nouns.

mod embed;
mod model;
mod train;

use thiserror::Error;

pub use embed::{
    read_embeddings, read_embeddings_from, synthesize, synthesize_all, write_embeddings,
    write_embeddings_to, EmbeddingHeader, EmbeddingRecord, EmbeddingSet, SyntheticProvider,
    EMBEDDING_FORMAT_VERSION, SENTINEL,
};
pub use model::{
    forward, grad_check, gradient, pool, pool_spans, score_pairs, sentence_loss, softmax,
    Instance, ProbeParams,
};
pub use train::{
    argmax, build_instances, instance_accuracy, predict, predict_all, shuffle, split_indices,
    train_from, train_probe, AdamW, EpochStats, Hyperparams, PredictionRecord, TrainOutcome,
    VerbPrediction,
};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("no embedding for sentence {0}")]
    MissingEmbedding(String),
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("non-finite loss in epoch {epoch}, batch {batch}; lower the learning rate or check the embeddings")]
    NonFinite { epoch: usize, batch: usize },
    #[error("no training or validation data")]
    EmptyData,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
