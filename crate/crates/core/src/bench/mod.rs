//! Analytic latency model and plaintext-versus-secure benchmarking.

pub mod model;
pub mod report;
pub mod run;

pub use model::{commit_time, evaluate, transaction_latency, LatencyModelParams, LatencyModelResult, ModelError};
pub use report::{compare, nearest_rank, BenchError, BenchReport, OverheadComparison, Workload};
pub use run::{local_cluster, run_live_bench, run_sim_bench, LiveBenchOptions, WARMUP_COMMITS};
