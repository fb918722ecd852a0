//! Training, retrieval evaluation, domain-gap diagnostics and the variant
//! comparison suite.

mod diag;
mod eval;
mod gradcheck;
mod suite;
mod train;

pub use diag::{diagnose, pca_2d, DiagnosticsReport, Pca, ProjectedPoint};
pub use eval::{
    cosine_similarity, evaluate, ground_truth_ranks, median_rank, recall_at_k, EvalReport, RetrievalMetrics,
    RECALL_DEPTHS,
};
pub use gradcheck::{loss_gradient_checks, LossGradCheck, KINK_DISTANCE, LOSS_NAMES};
pub use suite::{run_experiment_suite, suite_csv, suite_variants, SuiteRow, Variant};
pub use train::{train, EpochLog, Supervision, TrainConfig, TrainCounters, TrainOutcome, GRADIENT_REVERSAL};
