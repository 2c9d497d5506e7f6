//! Overhead measurements for the tracking demo.
//!
//! Six scenarios are measured against three message sizes. Each run is
//! closed-loop: a fixed number of virtual users, each with its own
//! connection, sends the next call only after the previous response has
//! been decoded. Latency is measured on the client with a monotonic clock.

pub mod harness;
pub mod ordering;
pub mod report;
pub mod scenario;

pub use harness::{percentile, run_bench, run_cell, BenchConfig, BenchError, LocalServers, RunSample, Targets, Tokens};
pub use ordering::{check_orderings, OrderingCheck};
pub use report::{emit_report, BenchReport, BenchRow, ReportFormat};
pub use scenario::{bench_policy, scenario_rule, Scenario, ScenarioKind};
