use std::collections::HashMap;
use std::time::{Duration, Instant};

use fieldguard_core::{mint_token, InterceptorConfig, SigningKey, TokenError, VerifyKey};
use fieldguard_demo::{spawn_server, ClientError, RunningServer, Settings, TrackingClient, Variant, Wiring};
use thiserror::Error;

use crate::report::{BenchReport, BenchRow};
use crate::scenario::{bench_policy, Scenario, ScenarioKind};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{scenario}/{fields}: {errors} of {total} requests failed, above the {limit}% limit")]
    ErrorRate { scenario: ScenarioKind, fields: usize, errors: u64, total: u64, limit: f64 },
    #[error("{scenario}/{fields}: no request completed")]
    NoRequests { scenario: ScenarioKind, fields: usize },
    #[error("cannot connect: {0}")]
    Connect(#[from] ClientError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("cannot start server: {0}")]
    Server(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Virtual users, each with its own connection.
    pub concurrency: usize,
    /// Measured time per run.
    pub duration: Duration,
    /// Unmeasured time before each run.
    pub warmup: Duration,
    pub runs: usize,
    pub seed: u64,
    /// Abort when more than this fraction of requests fail.
    pub max_error_rate: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            concurrency: 10,
            duration: Duration::from_secs(60),
            warmup: Duration::from_secs(10),
            runs: 1,
            seed: 0,
            max_error_rate: 0.01,
        }
    }
}

impl BenchConfig {
    fn check(&self) -> Result<(), BenchError> {
        if self.concurrency == 0 {
            return Err(BenchError::Config("concurrency must be positive".into()));
        }
        if self.runs == 0 {
            return Err(BenchError::Config("at least one run is needed".into()));
        }
        if self.duration.is_zero() {
            return Err(BenchError::Config("duration must be positive".into()));
        }
        Ok(())
    }
}

/// Where each wiring is being served.
#[derive(Debug, Clone)]
pub enum Targets {
    /// One external server; only scenarios matching its wiring make sense.
    Single(String),
    PerWiring {
        baseline: String,
        noop: String,
        enforcing: String,
    },
}

impl Targets {
    pub fn for_wiring(&self, wiring: Wiring) -> &str {
        match self {
            Targets::Single(target) => target,
            Targets::PerWiring { baseline, noop, enforcing } => match wiring {
                Wiring::Baseline => baseline,
                Wiring::NoOp => noop,
                Wiring::Enforcing => enforcing,
            },
        }
    }
}

/// One server per wiring on localhost, stopped when dropped.
#[derive(Debug)]
pub struct LocalServers {
    baseline: RunningServer,
    noop: RunningServer,
    enforcing: RunningServer,
}

impl LocalServers {
    pub async fn start(verify_key: VerifyKey, seed: Option<u64>) -> Result<Self, BenchError> {
        let mut config = InterceptorConfig::new(verify_key);
        if let Some(seed) = seed {
            config = config.with_rng_seed(seed);
        }
        let settings = Settings::new(config);
        Ok(LocalServers {
            baseline: spawn_server(Wiring::Baseline, settings.clone()).await?,
            noop: spawn_server(Wiring::NoOp, settings.clone()).await?,
            enforcing: spawn_server(Wiring::Enforcing, settings).await?,
        })
    }

    pub fn targets(&self) -> Targets {
        Targets::PerWiring {
            baseline: self.baseline.target(),
            noop: self.noop.target(),
            enforcing: self.enforcing.target(),
        }
    }
}

/// Tokens for the enforcing scenarios.
#[derive(Debug, Clone, Default)]
pub struct Tokens(HashMap<ScenarioKind, String>);

impl Tokens {
    pub fn mint(key: &SigningKey, expiration_hours: f64, now: u64) -> Result<Self, TokenError> {
        let doc = bench_policy();
        let mut tokens = HashMap::new();
        for kind in ScenarioKind::ALL {
            if let Some(purpose) = kind.purpose() {
                let token = mint_token(&doc, fieldguard_demo::SERVICE_NAME, purpose, key, expiration_hours, now)?;
                tokens.insert(kind, token);
            }
        }
        Ok(Tokens(tokens))
    }

    pub fn get(&self, kind: ScenarioKind) -> Option<&str> {
        self.0.get(&kind).map(String::as_str)
    }
}

/// Raw measurements of one run of one cell.
#[derive(Debug, Clone, Default)]
pub struct RunSample {
    pub latencies_ms: Vec<f64>,
    pub errors: u64,
    /// From the end of warmup to the last measured response.
    pub elapsed: Duration,
}

impl RunSample {
    pub fn requests(&self) -> u64 {
        self.latencies_ms.len() as u64
    }

    pub fn mean_ms(&self) -> f64 {
        self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len().max(1) as f64
    }

    pub fn rps(&self) -> f64 {
        self.requests() as f64 / self.elapsed.as_secs_f64().max(f64::MIN_POSITIVE)
    }
}

struct UserSample {
    latencies_ms: Vec<f64>,
    errors: u64,
    last_done: Option<Instant>,
}

async fn virtual_user(mut client: TrackingClient, variant: Variant, measure_from: Instant, end: Instant) -> UserSample {
    let mut sample = UserSample { latencies_ms: Vec::new(), errors: 0, last_done: None };
    loop {
        let sent = Instant::now();
        if sent >= end {
            break;
        }
        let result = client.track(variant, "order-1").await;
        let done = Instant::now();
        if sent < measure_from {
            continue;
        }
        match result {
            Ok(_) => sample.latencies_ms.push((done - sent).as_secs_f64() * 1e3),
            Err(_) => sample.errors += 1,
        }
        sample.last_done = Some(done);
    }
    sample
}

/// Closed-loop load on one cell: `concurrency` users, each sending its next
/// request as soon as the previous response is decoded.
pub async fn run_cell(
    target: &str,
    token: Option<&str>,
    variant: Variant,
    config: &BenchConfig,
) -> Result<RunSample, BenchError> {
    config.check()?;
    let mut clients = Vec::with_capacity(config.concurrency);
    for _ in 0..config.concurrency {
        clients.push(TrackingClient::connect(target, token).await?);
    }
    let measure_from = Instant::now() + config.warmup;
    let end = measure_from + config.duration;
    let users: Vec<_> =
        clients.into_iter().map(|client| tokio::spawn(virtual_user(client, variant, measure_from, end))).collect();
    let mut run = RunSample::default();
    let mut last_done = measure_from;
    for user in users {
        let sample = user.await.expect("virtual user panicked");
        run.latencies_ms.extend(sample.latencies_ms);
        run.errors += sample.errors;
        last_done = last_done.max(sample.last_done.unwrap_or(measure_from));
    }
    run.elapsed = (last_done - measure_from).max(config.duration);
    Ok(run)
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn aggregate(scenario: Scenario, runs: &[RunSample]) -> BenchRow {
    let mut pooled: Vec<f64> = runs.iter().flat_map(|r| r.latencies_ms.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let run_mean_ms: Vec<f64> = runs.iter().map(RunSample::mean_ms).collect();
    let run_rps: Vec<f64> = runs.iter().map(RunSample::rps).collect();
    let n = runs.len().max(1) as f64;
    BenchRow {
        scenario: scenario.kind,
        fields: scenario.variant.field_count(),
        requests: runs.iter().map(RunSample::requests).sum(),
        mean_ms: run_mean_ms.iter().sum::<f64>() / n,
        p50_ms: percentile(&pooled, 50.0),
        p95_ms: percentile(&pooled, 95.0),
        p99_ms: percentile(&pooled, 99.0),
        rps: run_rps.iter().sum::<f64>() / n,
        errors: runs.iter().map(|r| r.errors).sum(),
        run_mean_ms,
        run_rps,
    }
}

/// Runs every cell of `matrix` `config.runs` times. Runs are interleaved
/// (run 1 of every cell, then run 2, ...) so slow drift of the machine
/// spreads over all cells.
pub async fn run_bench(
    targets: &Targets,
    matrix: &[Scenario],
    config: &BenchConfig,
    tokens: &Tokens,
    mut progress: impl FnMut(Scenario, usize, &RunSample),
) -> Result<BenchReport, BenchError> {
    config.check()?;
    let mut samples: Vec<Vec<RunSample>> = vec![Vec::new(); matrix.len()];
    for run in 0..config.runs {
        for (cell, scenario) in matrix.iter().enumerate() {
            let target = targets.for_wiring(scenario.kind.wiring());
            let sample = run_cell(target, tokens.get(scenario.kind), scenario.variant, config).await?;
            let total = sample.requests() + sample.errors;
            let fields = scenario.variant.field_count();
            if total == 0 {
                return Err(BenchError::NoRequests { scenario: scenario.kind, fields });
            }
            if sample.errors as f64 > config.max_error_rate * total as f64 {
                return Err(BenchError::ErrorRate {
                    scenario: scenario.kind,
                    fields,
                    errors: sample.errors,
                    total,
                    limit: config.max_error_rate * 100.0,
                });
            }
            progress(*scenario, run, &sample);
            samples[cell].push(sample);
        }
    }
    Ok(BenchReport {
        duration_s: config.duration.as_secs_f64(),
        warmup_s: config.warmup.as_secs_f64(),
        concurrency: config.concurrency,
        runs: config.runs,
        seed: config.seed,
        rows: matrix.iter().zip(&samples).map(|(s, runs)| aggregate(*s, runs)).collect(),
    })
}
