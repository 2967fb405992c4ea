//! Dataset files, metrics, reference predictors, one-shot mode and the
//! command-line surface.

mod baselines;
pub mod cli;
mod dataset;
mod metrics;
mod oneshot;

pub use baselines::{adjacent_noun, adjacent_noun_index, run_baseline, uniform_random, Baseline};
pub use dataset::{
    generate_dataset, header_for, make_sample, read_dataset, read_dataset_from, verify_dataset,
    write_dataset, write_dataset_to, AnnotatedSample, Dataset, DatasetError, DatasetHeader,
    VerifyReport, DATASET_FORMAT, DATASET_FORMAT_VERSION, TOOL_VERSION,
};
pub use metrics::{
    accuracy, coherence_gap, consistency, grouped_accuracy, modal_frequency, random_baseline,
    random_baseline_of, variant_aliases, GroupKey, GroupRow, MetricsError, MetricsReport,
};
pub use oneshot::{one_shot_mode, OneShot, OneShotProtocol};
