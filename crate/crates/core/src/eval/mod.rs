//! Retrieval evaluation: bilingual lexicon induction scores and significance testing.

pub mod bli;
pub mod stats;

pub use bli::{bli_evaluate, bli_evaluate_projected, BliResult, BliSummary, QueryRecord};
pub use stats::{bonferroni, paired_ttest, rank_correlation, shuffling_test, CorrelationKind, SignificanceReport, TestKind};
