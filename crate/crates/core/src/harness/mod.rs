//! Metrics, suites of synthetic scenarios, and file formats.

pub mod embedding_file;
pub mod metrics;
pub mod suite;

pub use embedding_file::{sidecar_path, EmbeddingFile};
pub use metrics::{precision_at_k, quantile, rank_stats, target_ranks, RankStats};
pub use suite::{
    record_suite, run_suite, severity_sweep, suite_specs, summarize, Aggregate, EvalSummary, Method, MethodSummary,
    RankingSet, ScenarioEval, ScenarioMetrics, ScenarioRecord, SuiteRecord, SweepPoint, MAX_K,
};
