use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fieldguard_core::DEFAULT_METADATA_KEY;
use fieldguard_demo::{run_server, Settings, TrackingClient, Variant, Wiring};
use tokio::net::TcpListener;

/// Food-delivery tracking demo server and client.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the tracking service.
    Serve {
        #[arg(long, env = "FIELDGUARD_DEMO_PORT", default_value_t = 50051)]
        port: u16,
        /// baseline, noop or enforcing
        #[arg(long, default_value = "enforcing")]
        wiring: Wiring,
        /// Public key that verifies policy tokens.
        #[arg(long, env = "FIELDGUARD_VERIFY_KEY")]
        verify_key: PathBuf,
        #[arg(long, default_value = DEFAULT_METADATA_KEY)]
        metadata_key: String,
        /// Makes noised values reproducible.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Issue one tracking call and print the response as JSON.
    Call {
        #[arg(long, default_value = "http://127.0.0.1:50051")]
        target: String,
        #[arg(long, env = "FIELDGUARD_TOKEN")]
        token: Option<String>,
        #[arg(long, default_value = DEFAULT_METADATA_KEY)]
        metadata_key: String,
        #[arg(long, default_value_t = 13)]
        fields: usize,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    match Args::parse().command {
        Command::Serve { port, wiring, verify_key, metadata_key, seed } => {
            let settings = Settings::from_key_file(&verify_key)?;
            let mut config = settings.interceptor_config().with_metadata_key(metadata_key)?;
            if let Some(seed) = seed {
                config = config.with_rng_seed(seed);
            }
            let listener =
                TcpListener::bind(("0.0.0.0", port)).await.with_context(|| format!("cannot listen on port {port}"))?;
            eprintln!("trackingservice ({wiring:?}) listening on {}", listener.local_addr()?);
            run_server(listener, wiring, Settings::new(config)).await?;
        }
        Command::Call { target, token, metadata_key, fields } => {
            let Some(variant) = Variant::from_field_count(fields) else {
                bail!("--fields must be 13, 26 or 52");
            };
            let mut client = TrackingClient::connect_with_key(&target, token.as_deref(), &metadata_key).await?;
            let response = client.track(variant, "order-1").await?;
            println!("{}", serde_json::to_string_pretty(&response.to_json())?);
        }
    }
    Ok(())
}
