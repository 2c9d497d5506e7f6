use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use futures::executor::block_on;
use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::policy::{parse_policy, NoiseSpec, PurposeRule};
use crate::token::{mint_token, Algorithm, SigningKey};

const T0: u64 = 1_700_000_000;

fn key_path(dir: &str, file: &str) -> String {
    format!("{}/../../assets/keys/{dir}/{file}", env!("CARGO_MANIFEST_DIR"))
}

fn signing_key() -> SigningKey {
    SigningKey::from_pem_file(Algorithm::Es256, key_path("ec-a", "private.pem")).unwrap()
}

fn config(clock: Arc<FixedClock>) -> InterceptorConfig {
    let vk = VerifyKey::from_pem_file(Algorithm::Es256, key_path("ec-a", "public.pem")).unwrap();
    InterceptorConfig::new(vk).with_clock(clock).with_rng_seed(7)
}

fn token_for(rule: serde_json::Value, hours: f64) -> String {
    let doc = json!({"services": [{"name": "svc", "purposes": [rule.clone()]}]}).to_string();
    let doc = parse_policy(&doc).unwrap();
    let purpose = rule["name"].as_str().unwrap();
    mint_token(&doc, "svc", purpose, &signing_key(), hours, T0).unwrap()
}

fn metadata_with(token: &str) -> Metadata {
    attach_token(Metadata::new(), token, DEFAULT_METADATA_KEY)
}

fn alice() -> FlatMessage {
    FlatMessage::from_json(json!({"name": "Alice", "age": 25, "zip": "10623"})).unwrap()
}

#[test]
fn compile_maps_categories_and_defaults_to_suppress() {
    let rule = PurposeRule::builder("p").allow("name").generalize("age", 10.0).build().unwrap();
    let compiled = CompiledRule::from(&rule);
    assert_eq!(compiled.lookup("name"), &FieldAction::Pass);
    assert_eq!(compiled.lookup("age"), &FieldAction::Generalize(10.0));
    assert_eq!(compiled.lookup("zip"), &FieldAction::Suppress);

    let empty = CompiledRule::from(&PurposeRule::builder("p").build().unwrap());
    assert!(empty.is_empty());
    for name in ["name", "age", "", "anything"] {
        assert_eq!(empty.lookup(name), &FieldAction::Suppress);
    }
}

#[test]
fn compile_covers_all_four_categories() {
    let spec = NoiseSpec::laplace(0.5, 2.0).unwrap();
    let rule =
        PurposeRule::builder("p").allow("a").generalize("g", 10.0).noise("n", spec).reduce("r", 4.0).build().unwrap();
    let compiled = CompiledRule::from(&rule);
    assert_eq!(compiled.len(), 4);
    assert_eq!(compiled.lookup("a"), &FieldAction::Pass);
    assert_eq!(compiled.lookup("g"), &FieldAction::Generalize(10.0));
    assert_eq!(compiled.lookup("n"), &FieldAction::Noise(spec));
    assert_eq!(compiled.lookup("r"), &FieldAction::Reduce(4.0));
}

#[test]
fn valid_token_minimizes_response() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "allowed": ["name"], "generalized": {"age": 10}}), 1.0);
    let out = intercept_response(&metadata_with(&token), alice(), &config(clock)).unwrap();
    assert_eq!(out.to_json(), json!({"name": "Alice", "age": 21, "zip": ""}));
}

#[test]
fn missing_or_bad_tokens_fail_closed() {
    let clock = Arc::new(FixedClock::new(T0));
    let cfg = config(clock.clone());
    let err = intercept_response(&Metadata::new(), alice(), &cfg).unwrap_err();
    assert_eq!(err.code, RpcCode::Unauthenticated);

    let err = intercept_response(&metadata_with("not-a-token"), alice(), &cfg).unwrap_err();
    assert_eq!(err.code, RpcCode::Unauthenticated);

    let token = token_for(json!({"name": "p", "allowed": ["name"]}), 1.0);
    let mut tampered = token.clone().into_bytes();
    let at = token.find('.').unwrap() + 3;
    tampered[at] = if tampered[at] == b'x' { b'y' } else { b'x' };
    let err = intercept_response(&metadata_with(std::str::from_utf8(&tampered).unwrap()), alice(), &cfg).unwrap_err();
    assert_eq!(err.code, RpcCode::Unauthenticated);

    let mut binary = Metadata::new();
    binary.insert(DEFAULT_METADATA_KEY, vec![0xff, 0xfe]);
    assert_eq!(intercept_response(&binary, alice(), &cfg).unwrap_err().code, RpcCode::Unauthenticated);

    clock.set(T0 + 3600);
    let err = intercept_response(&metadata_with(&token), alice(), &cfg).unwrap_err();
    assert_eq!(err.code, RpcCode::PermissionDenied);
}

#[test]
fn tokens_under_other_keys_are_ignored() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "allowed": ["name"]}), 1.0);
    let md = attach_token(Metadata::new(), &token, "authorization");
    assert!(intercept_response(&md, alice(), &config(clock.clone())).is_err());

    let cfg = config(clock).with_metadata_key("x-custom-policy").unwrap();
    let md = attach_token(Metadata::new(), &token, "x-custom-policy");
    assert!(intercept_response(&md, alice(), &cfg).is_ok());
}

#[test]
fn metadata_keys_are_validated() {
    let cfg = config(Arc::new(FixedClock::new(T0)));
    assert!(cfg.clone().with_metadata_key("X-Purpose").is_err());
    assert!(cfg.clone().with_metadata_key("").is_err());
    assert!(cfg.clone().with_metadata_key("token-bin").is_err());
    assert!(cfg.clone().with_metadata_key("x purpose").is_err());
    assert!(cfg.with_metadata_key("x-purpose.v2").is_ok());
}

#[test]
fn attach_token_preserves_and_replaces() {
    let md = attach_token(Metadata::new(), "t", DEFAULT_METADATA_KEY);
    assert_eq!(md.len(), 1);
    assert_eq!(md.get("x-purpose-jwt"), Some(&b"t"[..]));

    let existing: Metadata = [("authorization", "Bearer b")].into_iter().collect();
    let md = attach_token(existing, "t", DEFAULT_METADATA_KEY);
    assert_eq!(md.len(), 2);
    assert_eq!(md.get("authorization"), Some(&b"Bearer b"[..]));

    let md = attach_token(md, "t2", DEFAULT_METADATA_KEY);
    assert_eq!(md.len(), 2);
    assert_eq!(md.get(DEFAULT_METADATA_KEY), Some(&b"t2"[..]));
}

#[test]
fn non_scalar_fields_pass_only_when_allowed() {
    let clock = Arc::new(FixedClock::new(T0));
    let msg = json!({"tags": ["a", "b"], "vip": true, "addr": {"city": "Berlin"}, "prefs": [1]});
    let token =
        token_for(json!({"name": "p", "allowed": ["tags"], "generalized": {"addr": 2}, "reduced": {"prefs": 1}}), 1.0);
    let out = intercept_response(&metadata_with(&token), FlatMessage::from_json(msg).unwrap(), &config(clock)).unwrap();
    assert_eq!(out.to_json(), json!({"tags": ["a", "b"], "vip": false, "addr": null, "prefs": []}));
}

#[test]
fn unusable_parameters_suppress_the_field() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "generalized": {"age": 2.5, "name": 1.5}, "reduced": {"lat": 0.5}}), 1.0);
    let msg = FlatMessage::from_json(json!({"age": 25, "name": "Alice", "lat": 52.5})).unwrap();
    let out = intercept_response(&metadata_with(&token), msg, &config(clock)).unwrap();
    assert_eq!(out.to_json(), json!({"age": -1, "name": "", "lat": 105.0}));
}

#[test]
fn seeded_noise_is_reproducible_across_requests() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "noised": {"age": {"mechanism": "laplace", "epsilon": 0.1}}}), 1.0);
    let cfg = config(clock);
    let a = intercept_response(&metadata_with(&token), alice(), &cfg).unwrap();
    let b = intercept_response(&metadata_with(&token), alice(), &cfg).unwrap();
    assert_eq!(a, b);
    assert!(matches!(a.get("age"), Some(ScalarValue::Int(_))));
}

struct Counting(AtomicUsize);

impl<M: Send> UnaryInterceptor<M> for Counting {
    fn intercept<'a>(&'a self, metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        Box::pin(async move {
            let out = next(metadata).await;
            self.0.fetch_add(1, Ordering::SeqCst);
            out
        })
    }
}

/// Adds a metadata entry before passing the call on.
struct Tagging;

impl<M: Send> UnaryInterceptor<M> for Tagging {
    fn intercept<'a>(&'a self, mut metadata: Metadata, next: UnaryHandler<'a, M>) -> BoxFuture<'a, Result<M, RpcError>>
    where
        M: 'a,
    {
        metadata.insert("x-trace-id", "abc");
        next(metadata)
    }
}

fn run<I: UnaryInterceptor<FlatMessage>>(
    interceptor: &I,
    metadata: Metadata,
    handler_calls: &AtomicUsize,
) -> Result<FlatMessage, RpcError> {
    block_on(interceptor.intercept(
        metadata,
        Box::new(move |md| {
            Box::pin(async move {
                handler_calls.fetch_add(1, Ordering::SeqCst);
                // The handler sees metadata added upstream and still has the token.
                assert!(md.get(DEFAULT_METADATA_KEY).is_some() || md.is_empty());
                Ok(alice())
            })
        }),
    ))
}

#[test]
fn chain_with_noop_matches_privacy_alone() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "allowed": ["name"], "reduced": {"zip": 4}}), 1.0);
    let privacy = PrivacyInterceptor::new(config(clock));
    let calls = AtomicUsize::new(0);
    let alone = run(&privacy, metadata_with(&token), &calls).unwrap();
    let chained = run(&chain(NoopInterceptor, privacy.clone()), metadata_with(&token), &calls).unwrap();
    let chained_other_way = run(&chain(privacy, NoopInterceptor), metadata_with(&token), &calls).unwrap();
    assert_eq!(alone, chained);
    assert_eq!(alone, chained_other_way);
    assert_eq!(alone.to_json(), json!({"name": "Alice", "age": -1, "zip": "1062"}));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn outer_counter_sees_one_invocation_per_response() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "allowed": ["name"]}), 1.0);
    let counting = Arc::new(Counting(AtomicUsize::new(0)));
    let chained = chain(PrivacyInterceptor::new(config(clock)), counting.clone());
    let calls = AtomicUsize::new(0);
    for _ in 0..5 {
        run(&chained, metadata_with(&token), &calls).unwrap();
    }
    assert_eq!(counting.0.load(Ordering::SeqCst), 5);
    assert_eq!(calls.load(Ordering::SeqCst), 5);
}

#[test]
fn privacy_failure_short_circuits_downstream() {
    let clock = Arc::new(FixedClock::new(T0));
    let downstream = Arc::new(Counting(AtomicUsize::new(0)));
    let upstream = Arc::new(Counting(AtomicUsize::new(0)));
    // upstream -> privacy -> downstream -> handler
    let stack = chain(chain(downstream.clone(), PrivacyInterceptor::new(config(clock))), upstream.clone());
    let calls = AtomicUsize::new(0);
    let err = run(&stack, Metadata::new(), &calls).unwrap_err();
    assert_eq!(err.code, RpcCode::Unauthenticated);
    assert_eq!(calls.load(Ordering::SeqCst), 0);
    assert_eq!(downstream.0.load(Ordering::SeqCst), 0);
    assert_eq!(upstream.0.load(Ordering::SeqCst), 1);
}

#[test]
fn privacy_leaves_other_metadata_alone() {
    let clock = Arc::new(FixedClock::new(T0));
    let token = token_for(json!({"name": "p", "allowed": ["name"]}), 1.0);
    let stack = chain(PrivacyInterceptor::new(config(clock)), Tagging);
    let out = block_on(stack.intercept(
        metadata_with(&token),
        Box::new(|md: Metadata| {
            Box::pin(async move {
                assert_eq!(md.get("x-trace-id"), Some(&b"abc"[..]));
                assert!(md.get(DEFAULT_METADATA_KEY).is_some());
                Ok(alice())
            })
        }),
    ))
    .unwrap();
    assert_eq!(out.get("name"), Some(&ScalarValue::Str("Alice".into())));
}

fn random_message() -> impl Strategy<Value = FlatMessage> {
    let value = prop_oneof![
        any::<i64>().prop_map(ScalarValue::Int),
        any::<u64>().prop_map(ScalarValue::Uint),
        (-1e9f64..1e9).prop_map(ScalarValue::Float),
        "[a-zA-Z0-9 ]{0,10}".prop_map(ScalarValue::Str),
    ];
    prop::collection::btree_map("[a-z]{1,4}", value, 1..20).prop_map(|fields| {
        let mut msg = FlatMessage::new();
        for (name, value) in fields {
            msg.insert(name, value);
        }
        msg
    })
}

fn random_rule() -> impl Strategy<Value = PurposeRule> {
    prop::collection::btree_map("[a-z]{1,4}", 0u8..5, 0..12).prop_map(|fields| {
        let mut builder = PurposeRule::builder("p");
        for (name, category) in fields {
            builder = match category {
                0 => builder.allow(name),
                1 => builder.generalize(name, 10.0),
                2 => builder.noise(name, NoiseSpec::laplace(1.0, 1.0).unwrap()),
                3 => builder.reduce(name, 3.0),
                // Names present in the rule with a category that does not apply.
                _ => builder,
            };
        }
        builder.build().unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unlisted_fields_are_always_suppressed(msg in random_message(), rule in random_rule(), seed in any::<u64>()) {
        let compiled = CompiledRule::from(&rule);
        let mut out = msg.clone();
        minimize_message(&mut out, &compiled, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let before = msg.fields();
        prop_assert_eq!(&out.fields(), &before);
        for field in before {
            let original = msg.get(&field.name).unwrap().clone();
            let now = out.get(&field.name).unwrap();
            if rule.category_of(&field.name).is_none() {
                prop_assert_eq!(now, &crate::minimize::suppress(original));
            } else if rule.allowed().contains(&field.name) {
                prop_assert_eq!(now, &original);
            }
        }
    }

    #[test]
    fn enforcement_is_idempotent_for_deterministic_actions(msg in random_message(), rule in random_rule()) {
        let compiled = CompiledRule::from(&rule);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut once = msg.clone();
        minimize_message(&mut once, &compiled, &mut rng).unwrap();
        let mut twice = once.clone();
        minimize_message(&mut twice, &compiled, &mut rng).unwrap();
        for field in msg.fields() {
            let stable = match compiled.lookup(&field.name) {
                FieldAction::Noise(_) => false,
                // Numeric division keeps shrinking the value; string truncation is stable.
                FieldAction::Reduce(_) => field.kind == FieldKind::String,
                _ => true,
            };
            if stable {
                prop_assert_eq!(once.get(&field.name), twice.get(&field.name), "field {}", field.name);
            }
        }
    }
}
