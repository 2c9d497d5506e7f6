use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::Parser;
use fieldguard_bench::{
    check_orderings, emit_report, run_bench, BenchConfig, LocalServers, ReportFormat, Scenario, ScenarioKind, Targets,
    Tokens,
};
use fieldguard_core::{SigningKey, VerifyKey};
use fieldguard_demo::Variant;

/// Measure the latency and throughput cost of response minimization.
///
/// Without --target, one server per wiring is started in-process.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Existing server, e.g. http://127.0.0.1:50051. It must run the wiring the
    /// selected scenarios need.
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated scenarios, or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Comma-separated field counts (13, 26, 52), or `all`.
    #[arg(long, default_value = "all")]
    fields: String,
    #[arg(long, default_value_t = 10)]
    concurrency: usize,
    #[arg(long, default_value_t = 60.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 10.0)]
    warmup_s: f64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// csv, json or markdown
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the in-process servers' noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Private key that signs the scenario tokens.
    #[arg(long, default_value = "assets/keys/rsa-a/private.pem")]
    signing_key: PathBuf,
    /// Public key for the in-process servers.
    #[arg(long, default_value = "assets/keys/rsa-a/public.pem")]
    verify_key: PathBuf,
    /// Also print the ordering checks to standard error.
    #[arg(long)]
    check: bool,
}

fn parse_list<T>(text: &str, all: &[T], parse: impl Fn(&str) -> anyhow::Result<T>) -> anyhow::Result<Vec<T>>
where
    T: Copy,
{
    if text.eq_ignore_ascii_case("all") {
        return Ok(all.to_vec());
    }
    text.split(',').map(|s| parse(s.trim())).collect()
}

fn seconds(value: f64, flag: &str) -> anyhow::Result<Duration> {
    Duration::try_from_secs_f64(value).with_context(|| format!("--{flag} must be a non-negative number of seconds"))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let kinds = parse_list(&args.scenario, &ScenarioKind::ALL, |s| s.parse().map_err(anyhow::Error::msg))?;
    let variants = parse_list(&args.fields, &Variant::ALL, |s| {
        let n: usize = s.parse().with_context(|| format!("bad field count `{s}`"))?;
        Variant::from_field_count(n).with_context(|| format!("no {n}-field message (use 13, 26 or 52)"))
    })?;
    if kinds.is_empty() || variants.is_empty() {
        bail!("empty scenario matrix");
    }
    let matrix: Vec<Scenario> =
        kinds.iter().flat_map(|&k| variants.iter().map(move |&v| Scenario::new(k, v))).collect();
    let config = BenchConfig {
        concurrency: args.concurrency,
        duration: seconds(args.duration_s, "duration-s")?,
        warmup: seconds(args.warmup_s, "warmup-s")?,
        runs: args.runs,
        seed: args.seed,
        ..BenchConfig::default()
    };

    let pem = std::fs::read(&args.signing_key).with_context(|| args.signing_key.display().to_string())?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs();
    let tokens = Tokens::mint(&SigningKey::from_pem_auto(&pem)?, 24.0, now)?;

    let _servers;
    let targets = match &args.target {
        Some(target) => Targets::Single(target.clone()),
        None => {
            let pem = std::fs::read(&args.verify_key).with_context(|| args.verify_key.display().to_string())?;
            let servers = LocalServers::start(VerifyKey::from_pem_auto(&pem)?, Some(args.seed)).await?;
            let targets = servers.targets();
            _servers = servers;
            targets
        }
    };

    let report = run_bench(&targets, &matrix, &config, &tokens, |scenario, run, sample| {
        eprintln!(
            "run {} {}/{}: {} requests, mean {:.3} ms, {:.1} rps, {} errors",
            run + 1,
            scenario.kind,
            scenario.variant,
            sample.requests(),
            sample.mean_ms(),
            sample.rps(),
            sample.errors
        );
    })
    .await?;

    if args.check {
        for check in check_orderings(&report) {
            eprintln!("{check}");
        }
    }
    match &args.out {
        Some(path) => {
            let mut file = File::create(path).with_context(|| path.display().to_string())?;
            emit_report(&report, args.format, &mut file)?;
            file.flush()?;
        }
        None => emit_report(&report, args.format, &mut std::io::stdout().lock())?,
    }
    Ok(())
}
