//! Metrics against the retrained reference, the query-count bound of a
//! distinguishing attacker, and the benchmark runner with its results tree.

mod bench;
mod metrics;
mod report;
mod results;

pub use bench::{run_benchmark, BenchmarkPlan, DatasetPlan, Method, ARCH_KIND};
pub use metrics::{
    kl_to_reference, mean_kl, stein_queries, MetricsReport, QueryCounts, Rte, SteinQueries,
    DEFAULT_ALPHAS,
};
pub use report::{mean_std, report, report_rows, ReportOptions, ReportRow, ReportStyle};
pub use results::{
    ArchResults, ErrorEntry, ErrorInfo, FileMeta, MethodEntry, MethodOutcome, ResultFile,
    ResultsTree, SeedEntry, SeedOutcome, TargetBlock, TIMING_KEYS,
};
