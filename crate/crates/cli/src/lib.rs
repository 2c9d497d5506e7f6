//! The `fieldguard` command-line tool.
//!
//! [`run`] takes the arguments and output streams explicitly so the whole
//! tool can be driven from tests. Exit codes: 0 on success, 1 when the
//! command fails, 2 on a usage error. Every failure prints one line
//! starting with `error: ` to standard error.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use fieldguard_core::{
    lookup_rule, minimize_message, mint_token, parse_field_catalog, parse_policy, request_rng, validate_against_schema,
    verify_token, CompiledRule, FlatMessage, PolicyError, SigningKey, TokenError, VerifyKey,
};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "fieldguard", version, about = "Policy tokens and field minimization for RPC responses")]
struct Cli {
    /// Print structured output as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KeyAlgorithm {
    /// RSA 2048, for RS256 tokens.
    Rsa,
    /// ECDSA on P-256, for ES256 tokens.
    Ecdsa,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a development key pair (private.pem, public.pem).
    Keygen {
        #[arg(long, value_enum)]
        algorithm: KeyAlgorithm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mint a policy token for one service and purpose.
    Mint {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        service: String,
        #[arg(long)]
        purpose: String,
        /// PEM private key; RSA keys sign RS256, EC keys ES256.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        expiration_hours: f64,
    },
    /// Verify a token and print its claims.
    Verify {
        /// PEM public key.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        token: String,
    },
    /// Check a policy file, optionally against a message field catalog.
    Validate {
        #[arg(long)]
        policy: PathBuf,
        /// JSON catalog: {"fields": [{"name": ..., "kind": ...}]}
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Apply a purpose's rule to a flat JSON message.
    Preview {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        service: String,
        #[arg(long)]
        purpose: String,
        #[arg(long)]
        message: PathBuf,
        /// Seed for noised fields.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("{0}")]
    Other(String),
    /// Already reported on standard output.
    #[error("{0}")]
    Reported(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or_default()
}

/// Runs the tool with `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            if err.use_stderr() {
                let _ = write!(stderr, "{}", err.render());
                return 2;
            }
            let _ = write!(stdout, "{}", err.render());
            return 0;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let message = err.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "error: {message}");
            1
        }
    }
}

fn emit(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Other(format!("cannot write output: {e}")))
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Keygen { algorithm, out: dir } => {
            let (private, public) = keygen(*algorithm, dir)?;
            if cli.json {
                emit(out, json!({"private": private, "public": public}))
            } else {
                emit(out, format!("wrote {}\nwrote {}", private.display(), public.display()))
            }
        }
        Command::Mint { policy, service, purpose, key, expiration_hours } => {
            let doc = parse_policy(&read(policy)?)?;
            let pem = fs::read(key).map_err(io_err(key))?;
            let key = SigningKey::from_pem_auto(&pem)?;
            let token = mint_token(&doc, service, purpose, &key, *expiration_hours, now())?;
            if cli.json {
                emit(out, json!({"token": token}))
            } else {
                emit(out, token)
            }
        }
        Command::Verify { key, token } => {
            let pem = fs::read(key).map_err(io_err(key))?;
            let claims = verify_token(token.trim(), &VerifyKey::from_pem_auto(&pem)?, now())?;
            let report = json!({
                "service": claims.service,
                "purpose": claims.purpose,
                "issued_at": claims.issued_at,
                "expires_at": claims.expires_at,
                "rule": claims.rule.to_json_value(),
            });
            if cli.json {
                emit(out, report)
            } else {
                emit(out, format!("OK {} / {} until {}", claims.service, claims.purpose, claims.expires_at))
            }
        }
        Command::Validate { policy, schema } => validate(cli.json, policy, schema.as_deref(), out),
        Command::Preview { policy, service, purpose, message, seed } => {
            let doc = parse_policy(&read(policy)?)?;
            let rule = CompiledRule::from(lookup_rule(&doc, service, purpose)?);
            let value: Value = serde_json::from_str(&read(message)?)
                .map_err(|e| CliError::Other(format!("{}: {e}", message.display())))?;
            let mut flat = FlatMessage::from_json(value).map_err(|e| CliError::Other(e.to_string()))?;
            minimize_message(&mut flat, &rule, &mut request_rng(*seed)).map_err(|e| CliError::Other(e.to_string()))?;
            let result = flat.to_json();
            let text = if cli.json {
                result.to_string()
            } else {
                serde_json::to_string_pretty(&result).expect("JSON value serializes")
            };
            emit(out, text)
        }
    }
}

fn validate(as_json: bool, policy: &Path, schema: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let doc = match parse_policy(&read(policy)?) {
        Ok(doc) => doc,
        Err(err) => {
            if as_json {
                emit(out, json!({"ok": false, "errors": [err.to_string()], "warnings": []}))?;
            } else {
                emit(out, format!("error: {err}"))?;
            }
            return Err(CliError::Reported(format!("{} is not a valid policy", policy.display())));
        }
    };
    let catalog = match schema {
        Some(path) => Some(parse_field_catalog(&read(path)?)?),
        None => None,
    };
    let mut warnings = Vec::new();
    if let Some(catalog) = &catalog {
        for service in doc.services() {
            for rule in service.purposes() {
                for warning in validate_against_schema(rule, catalog) {
                    warnings.push((service.name().to_owned(), rule.purpose().to_owned(), warning));
                }
            }
        }
    }
    if as_json {
        let list: Vec<Value> = warnings
            .iter()
            .map(|(service, purpose, w)| {
                json!({"service": service, "purpose": purpose, "field": w.field(), "code": w.code(), "message": w.to_string()})
            })
            .collect();
        return emit(out, json!({"ok": true, "errors": [], "warnings": list}));
    }
    for (service, purpose, warning) in &warnings {
        emit(out, format!("warning: {service}/{purpose}: {warning}"))?;
    }
    emit(out, "OK")
}

fn create_new(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let mut file = OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
    file.write_all(contents).map_err(io_err(path))
}

fn keygen(algorithm: KeyAlgorithm, dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    use p256::pkcs8::{EncodePrivateKey, EncodePublicKey, LineEnding};

    let mut rng = rand::rngs::OsRng;
    let (private_pem, public_pem) = match algorithm {
        KeyAlgorithm::Rsa => {
            let key = rsa::RsaPrivateKey::new(&mut rng, 2048).map_err(|e| CliError::Other(e.to_string()))?;
            let private = key.to_pkcs8_pem(LineEnding::LF).map_err(|e| CliError::Other(e.to_string()))?;
            let public =
                key.to_public_key().to_public_key_pem(LineEnding::LF).map_err(|e| CliError::Other(e.to_string()))?;
            (private.to_string(), public)
        }
        KeyAlgorithm::Ecdsa => {
            let key = p256::SecretKey::random(&mut rng);
            let private = key.to_pkcs8_pem(LineEnding::LF).map_err(|e| CliError::Other(e.to_string()))?;
            let public =
                key.public_key().to_public_key_pem(LineEnding::LF).map_err(|e| CliError::Other(e.to_string()))?;
            (private.to_string(), public)
        }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let private = dir.join("private.pem");
    let public = dir.join("public.pem");
    create_new(&private, private_pem.as_bytes())?;
    create_new(&public, public_pem.as_bytes())?;
    Ok((private, public))
}
