use std::path::{Path, PathBuf};

use serde_json::{json, Value};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fieldguard(args: &[&str]) -> Output {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("fieldguard").chain(args.iter().copied());
    let code = fieldguard_cli::run(argv, &mut stdout, &mut stderr);
    Output { code, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

fn asset(rel: &str) -> String {
    format!("{}/../../assets/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path.to_str().unwrap().to_owned()
}

fn mint(policy: &str, purpose: &str, key: &str, hours: &str) -> Output {
    fieldguard(&[
        "mint",
        "--policy",
        policy,
        "--service",
        "trackingservice",
        "--purpose",
        purpose,
        "--key",
        key,
        "--expiration-hours",
        hours,
    ])
}

fn keygen_round_trip(algorithm: &str) {
    let dir = tempfile::tempdir().unwrap();
    let keys: PathBuf = dir.path().join("keys");
    let keys = keys.to_str().unwrap();
    let out = fieldguard(&["keygen", "--algorithm", algorithm, "--out", keys]);
    assert_eq!(out.code, 0, "{}", out.stderr);

    let private = format!("{keys}/private.pem");
    let public = format!("{keys}/public.pem");
    let minted = mint(&asset("policy.json"), "delivery", &private, "1");
    assert_eq!(minted.code, 0, "{}", minted.stderr);
    let token = minted.stdout.trim();
    assert_eq!(token.split('.').count(), 3);

    let verified = fieldguard(&["--json", "verify", "--key", &public, "--token", token]);
    assert_eq!(verified.code, 0, "{}", verified.stderr);
    let claims: Value = serde_json::from_str(&verified.stdout).unwrap();
    assert_eq!(claims["service"], "trackingservice");
    assert_eq!(claims["purpose"], "delivery");
    assert_eq!(claims["rule"]["generalized"]["age"], 10.0);

    let again = fieldguard(&["keygen", "--algorithm", algorithm, "--out", keys]);
    assert_eq!(again.code, 1);
    assert!(again.stderr.starts_with("error: "));
}

#[test]
fn rsa_keygen_mint_verify() {
    keygen_round_trip("rsa");
}

#[test]
fn ecdsa_keygen_mint_verify() {
    keygen_round_trip("ecdsa");
}

#[test]
fn keygen_into_unwritable_location_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "plain-file", "");
    let out = fieldguard(&["keygen", "--algorithm", "ecdsa", "--out", &format!("{file}/keys")]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: "), "{}", out.stderr);
}

#[test]
fn verify_rejects_a_token_from_another_key() {
    let token = mint(&asset("policy.json"), "marketing", &asset("keys/rsa-b/private.pem"), "1").stdout;
    let out = fieldguard(&["verify", "--key", &asset("keys/rsa-a/public.pem"), "--token", token.trim()]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: signature verification failed"), "{}", out.stderr);
}

#[test]
fn mint_reports_domain_errors() {
    let key = asset("keys/rsa-a/private.pem");
    let out = mint(&asset("policy.json"), "advertising", &key, "1");
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: "));
    assert!(out.stderr.contains("purpose not found"), "{}", out.stderr);
    assert!(out.stdout.is_empty());

    let out = mint(&asset("policy.json"), "delivery", &key, "0");
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: "), "{}", out.stderr);

    let out = mint(&asset("policy.json"), "delivery", &asset("keys/rsa-a/public.pem"), "1");
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: key error"), "{}", out.stderr);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(fieldguard(&[]).code, 2);
    assert_eq!(fieldguard(&["mint", "--policy", "p.json"]).code, 2);
    assert_eq!(fieldguard(&["keygen", "--algorithm", "dsa", "--out", "x"]).code, 2);
    let help = fieldguard(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("preview"));
}

#[test]
fn validate_accepts_the_shipped_policy() {
    let out = fieldguard(&["validate", "--policy", &asset("policy.json")]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout.trim(), "OK");
}

#[test]
fn validate_reports_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write(
        dir.path(),
        "conflict.json",
        r#"{"services":[{"name":"s","purposes":[{"name":"p","allowed":["age"],"reduced":{"age":2}}]}]}"#,
    );
    let out = fieldguard(&["validate", "--policy", &policy]);
    assert_eq!(out.code, 1);
    assert!(out.stdout.contains("conflict"), "{}", out.stdout);
    assert!(out.stderr.starts_with("error: "));

    let out = fieldguard(&["--json", "validate", "--policy", &policy]);
    let report: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["ok"], false);
}

#[test]
fn validate_warns_about_default_suppression() {
    let dir = tempfile::tempdir().unwrap();
    let policy =
        write(dir.path(), "policy.json", r#"{"services":[{"name":"s","purposes":[{"name":"p","allowed":["name"]}]}]}"#);
    let schema = write(
        dir.path(),
        "fields.json",
        r#"{"fields":[{"name":"name","kind":"string"},{"name":"age","kind":"integer"}]}"#,
    );
    let out = fieldguard(&["validate", "--policy", &policy, "--schema", &schema]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("warning: s/p: field `age` is not mentioned"), "{}", out.stdout);
    assert!(out.stdout.ends_with("OK\n"));

    let out = fieldguard(&["--json", "validate", "--policy", &policy, "--schema", &schema]);
    let report: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(report["warnings"][0]["code"], "default-suppressed");
    assert_eq!(report["warnings"][0]["field"], "age");
}

#[test]
fn validate_against_the_tracking_catalog() {
    let out = fieldguard(&[
        "--json",
        "validate",
        "--policy",
        &asset("policy.json"),
        "--schema",
        &asset("fixtures/tracking52.fields.json"),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: Value = serde_json::from_str(&out.stdout).unwrap();
    let codes: Vec<_> = report["warnings"].as_array().unwrap().iter().map(|w| w["code"].clone()).collect();
    assert!(codes.iter().all(|c| c == "default-suppressed"), "{codes:?}");
}

fn preview(policy: &str, purpose: &str, message: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "--json",
        "preview",
        "--policy",
        policy,
        "--service",
        "trackingservice",
        "--purpose",
        purpose,
        "--message",
        message,
    ];
    args.extend_from_slice(extra);
    fieldguard(&args)
}

#[test]
fn preview_composes_the_rule() {
    let dir = tempfile::tempdir().unwrap();
    let message = write(dir.path(), "m.json", r#"{"name":"Alice","age":25,"zip":"10623"}"#);
    let out = preview(&asset("policy.json"), "delivery", &message, &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let got: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(got, json!({"name": "Alice", "age": 21, "zip": ""}));
}

#[test]
fn preview_with_an_empty_rule_suppresses_everything() {
    let dir = tempfile::tempdir().unwrap();
    let policy = write(
        dir.path(),
        "policy.json",
        r#"{"services":[{"name":"trackingservice","purposes":[{"name":"nothing"}]}]}"#,
    );
    let message = write(dir.path(), "m.json", r#"{"name":"Alice","age":25,"balance":12.5}"#);
    let out = preview(&policy, "nothing", &message, &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let got: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(got, json!({"name": "", "age": -1, "balance": -1.0}));
}

#[test]
fn seeded_previews_repeat() {
    let fixture = asset("fixtures/tracking52.json");
    let first = preview(&asset("policy.json"), "research", &fixture, &["--seed", "42"]);
    let second = preview(&asset("policy.json"), "research", &fixture, &["--seed", "42"]);
    let other = preview(&asset("policy.json"), "research", &fixture, &["--seed", "43"]);
    assert_eq!(first.code, 0, "{}", first.stderr);
    assert_eq!(first.stdout, second.stdout);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn preview_matches_the_golden_fixtures() {
    for purpose in ["delivery", "marketing"] {
        for n in [13, 26, 52] {
            let out = preview(&asset("policy.json"), purpose, &asset(&format!("fixtures/tracking{n}.json")), &[]);
            let got: Value = serde_json::from_str(&out.stdout).unwrap();
            let golden = std::fs::read_to_string(asset(&format!("fixtures/golden/{purpose}-{n}.json"))).unwrap();
            assert_eq!(got, serde_json::from_str::<Value>(&golden).unwrap(), "{purpose}-{n}");
        }
    }
}

#[test]
fn preview_rejects_non_objects() {
    let dir = tempfile::tempdir().unwrap();
    let message = write(dir.path(), "m.json", "[1, 2]");
    let out = preview(&asset("policy.json"), "delivery", &message, &[]);
    assert_eq!(out.code, 1);
    assert!(out.stderr.starts_with("error: "));
}
