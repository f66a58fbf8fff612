use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::net::TransportMode;
use crate::raft::NodeId;

/// Commands driven to commit by a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    pub clients: usize,
    pub command_size: usize,
    pub total_ops: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            clients: 4,
            command_size: 64,
            total_ops: 5_000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("no leader elected within the warm-up budget")]
    NoLeader,
    #[error("reports come from different workloads")]
    MismatchedWorkload,
    #[error("baseline {0} is zero or undefined; change is undefined")]
    UndefinedBaseline(&'static str),
    #[error("workload did not finish: {0}")]
    Incomplete(String),
    #[error("live cluster: {0}")]
    Live(String),
}

/// Nearest-rank percentile of an ascending sample.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: TransportMode,
    pub workload: Workload,
    /// Measurement window in seconds.
    pub duration: f64,
    pub operations_completed: u64,
    /// Committed commands per second.
    pub throughput: f64,
    /// Submit-to-commit latency in milliseconds; `None` without samples.
    pub latency_p50: Option<f64>,
    pub latency_p95: Option<f64>,
    pub latency_mean: Option<f64>,
    pub rejections: BTreeMap<NodeId, u64>,
}

impl BenchReport {
    /// Builds a report from per-command latencies (ms) over a window.
    pub fn from_samples(
        mode: TransportMode,
        workload: Workload,
        duration: f64,
        mut latencies: Vec<f64>,
        rejections: BTreeMap<NodeId, u64>,
    ) -> Self {
        latencies.sort_by(f64::total_cmp);
        let ops = latencies.len() as u64;
        let mean = (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / ops as f64);
        BenchReport {
            mode,
            workload,
            duration,
            operations_completed: ops,
            throughput: if duration > 0.0 { ops as f64 / duration } else { 0.0 },
            latency_p50: nearest_rank(&latencies, 50.0),
            latency_p95: nearest_rank(&latencies, 95.0),
            latency_mean: mean,
            rejections,
        }
    }

    /// A report carrying only summary figures, e.g. published numbers.
    pub fn from_summary(mode: TransportMode, workload: Workload, throughput: f64, mean_latency: f64) -> Self {
        BenchReport {
            mode,
            workload,
            duration: 0.0,
            operations_completed: 0,
            throughput,
            latency_p50: None,
            latency_p95: None,
            latency_mean: Some(mean_latency),
            rejections: BTreeMap::new(),
        }
    }

    fn fmt_ms(v: Option<f64>) -> String {
        v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "undefined".into())
    }

    /// `metric<TAB>value` lines.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode\t{}", self.mode);
        let _ = writeln!(out, "clients\t{}", self.workload.clients);
        let _ = writeln!(out, "command_size\t{}", self.workload.command_size);
        let _ = writeln!(out, "total_ops\t{}", self.workload.total_ops);
        let _ = writeln!(out, "duration_s\t{:.6}", self.duration);
        let _ = writeln!(out, "operations_completed\t{}", self.operations_completed);
        let _ = writeln!(out, "throughput_ops_s\t{:.3}", self.throughput);
        let _ = writeln!(out, "latency_p50_ms\t{}", Self::fmt_ms(self.latency_p50));
        let _ = writeln!(out, "latency_p95_ms\t{}", Self::fmt_ms(self.latency_p95));
        let _ = writeln!(out, "latency_mean_ms\t{}", Self::fmt_ms(self.latency_mean));
        for (id, n) in &self.rejections {
            let _ = writeln!(out, "rejected.{id}\t{n}");
        }
        out
    }

    pub fn table(&self) -> String {
        let rows = [
            ("mode", self.mode.to_string()),
            ("operations", self.operations_completed.to_string()),
            ("duration (s)", format!("{:.3}", self.duration)),
            ("throughput (ops/s)", format!("{:.2}", self.throughput)),
            ("latency p50 (ms)", Self::fmt_ms(self.latency_p50)),
            ("latency p95 (ms)", Self::fmt_ms(self.latency_p95)),
            ("latency mean (ms)", Self::fmt_ms(self.latency_mean)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<20} {v:>14}");
        }
        out
    }
}

/// Relative change of secure over default, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadComparison {
    pub throughput_change_pct: f64,
    pub latency_change_pct: f64,
}

impl OverheadComparison {
    pub fn from_values(
        default_throughput: f64,
        secure_throughput: f64,
        default_latency: f64,
        secure_latency: f64,
    ) -> Result<Self, BenchError> {
        if default_throughput <= 0.0 || !default_throughput.is_finite() {
            return Err(BenchError::UndefinedBaseline("throughput"));
        }
        if default_latency <= 0.0 || !default_latency.is_finite() {
            return Err(BenchError::UndefinedBaseline("latency"));
        }
        Ok(OverheadComparison {
            throughput_change_pct: (secure_throughput - default_throughput) / default_throughput * 100.0,
            latency_change_pct: (secure_latency - default_latency) / default_latency * 100.0,
        })
    }

    pub fn table(&self, default: &BenchReport, secure: &BenchReport) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>14} {:>14} {:>10}", "Metric", "Default", "Secure", "Change %");
        let _ = writeln!(
            out,
            "{:<20} {:>14.2} {:>14.2} {:>+10.2}",
            "Throughput (ops/s)", default.throughput, secure.throughput, self.throughput_change_pct
        );
        let _ = writeln!(
            out,
            "{:<20} {:>14.3} {:>14.3} {:>+10.2}",
            "Latency mean (ms)",
            default.latency_mean.unwrap_or(f64::NAN),
            secure.latency_mean.unwrap_or(f64::NAN),
            self.latency_change_pct
        );
        out
    }

    pub fn machine_lines(&self) -> String {
        format!(
            "throughput_change_pct\t{:.4}\nlatency_change_pct\t{:.4}\n",
            self.throughput_change_pct, self.latency_change_pct
        )
    }
}

/// Secure relative to default; both must come from the same workload.
pub fn compare(default: &BenchReport, secure: &BenchReport) -> Result<OverheadComparison, BenchError> {
    if default.workload != secure.workload {
        return Err(BenchError::MismatchedWorkload);
    }
    OverheadComparison::from_values(
        default.throughput,
        secure.throughput,
        default.latency_mean.ok_or(BenchError::UndefinedBaseline("latency"))?,
        secure.latency_mean.ok_or(BenchError::UndefinedBaseline("latency"))?,
    )
}
