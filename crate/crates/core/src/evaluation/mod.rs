//! Taxonomy quality metrics: silhouette, LLM judge scores, and coverage of a
//! labeled test set with label utilization.

mod coverage;
mod judge;
mod silhouette;

pub use coverage::{
    coverage_at, coverage_report, label_test_sentences, macro_f1, parse_id_list, read_labeled_test_set,
    utilization, write_labeled_test_set, CoverageReport, LabeledSentence, LabeledTestSet, SimilarityTable,
    TauResult, DEFAULT_TAUS,
};
pub use judge::{
    judge_taxonomy, parse_judge_reply, Clarity, Completeness, HierarchicalCoherence, JudgeScores, Orthogonality,
};
pub use silhouette::{silhouette_level, silhouette_mean};
