//! The expected shape of a report: enforcement costs something, more
//! enforcement work costs more, and bigger messages cost more.

use std::fmt;

use crate::report::{BenchReport, BenchRow};
use crate::scenario::ScenarioKind;

/// Differences smaller than this many combined standard errors of the run
/// means count as noise.
pub const NOISE_SIGMAS: f64 = 3.0;
/// Differences smaller than this fraction of the larger value count as
/// noise, whatever the run-to-run spread.
pub const RELATIVE_FLOOR: f64 = 0.02;

/// Latency chain, cheapest first.
pub const LATENCY_CHAIN: [ScenarioKind; 4] =
    [ScenarioKind::Baseline, ScenarioKind::NoOp, ScenarioKind::AllDenied, ScenarioKind::Maximized];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MeanLatency,
    Throughput,
}

/// `lower <= higher` within `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub metric: Metric,
    pub lower: (ScenarioKind, usize),
    pub higher: (ScenarioKind, usize),
    pub lower_value: f64,
    pub higher_value: f64,
    pub tolerance: f64,
}

impl OrderingCheck {
    fn new(metric: Metric, lower: &BenchRow, higher: &BenchRow) -> Self {
        let (lower_value, higher_value, se) = match metric {
            Metric::MeanLatency => {
                (lower.mean_ms, higher.mean_ms, lower.mean_ms_stderr().hypot(higher.mean_ms_stderr()))
            }
            Metric::Throughput => (lower.rps, higher.rps, lower.rps_stderr().hypot(higher.rps_stderr())),
        };
        let tolerance = (NOISE_SIGMAS * se).max(RELATIVE_FLOOR * lower_value.abs().max(higher_value.abs()));
        OrderingCheck {
            metric,
            lower: (lower.scenario, lower.fields),
            higher: (higher.scenario, higher.fields),
            lower_value,
            higher_value,
            tolerance,
        }
    }

    pub fn holds(&self) -> bool {
        self.lower_value <= self.higher_value + self.tolerance
    }
}

impl fmt::Display for OrderingCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (unit, name) = match self.metric {
            Metric::MeanLatency => ("ms", "mean"),
            Metric::Throughput => ("rps", "rps"),
        };
        write!(
            f,
            "{} {name} {}/{} {:.3} <= {}/{} {:.3} (+{:.3} {unit} noise): {}",
            if self.holds() { "ok  " } else { "FAIL" },
            self.lower.0,
            self.lower.1,
            self.lower_value,
            self.higher.0,
            self.higher.1,
            self.higher_value,
            self.tolerance,
            if self.holds() { "holds" } else { "violated" },
        )
    }
}

/// Every ordering the report has the rows for:
///
/// * mean latency Baseline <= NoOp <= AllDenied <= Maximized per size,
/// * throughput in the reverse order,
/// * mean latency non-decreasing in field count per scenario.
pub fn check_orderings(report: &BenchReport) -> Vec<OrderingCheck> {
    let mut sizes: Vec<usize> = report.rows.iter().map(|r| r.fields).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut checks = Vec::new();
    for &fields in &sizes {
        for pair in LATENCY_CHAIN.windows(2) {
            if let (Some(cheap), Some(costly)) = (report.row(pair[0], fields), report.row(pair[1], fields)) {
                checks.push(OrderingCheck::new(Metric::MeanLatency, cheap, costly));
                checks.push(OrderingCheck::new(Metric::Throughput, costly, cheap));
            }
        }
    }
    for kind in ScenarioKind::ALL {
        for pair in sizes.windows(2) {
            if let (Some(small), Some(big)) = (report.row(kind, pair[0]), report.row(kind, pair[1])) {
                checks.push(OrderingCheck::new(Metric::MeanLatency, small, big));
            }
        }
    }
    checks
}
