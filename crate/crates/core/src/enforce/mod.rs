//! The policy enforcement point: a unary response interceptor.
//!
//! For every response it
//!
//! 1. reads the policy token from the request metadata,
//! 2. verifies signature and expiry (failing the call if either is bad),
//! 3. rewrites each top-level field: allowed fields pass, minimized fields
//!    are transformed, every other field is suppressed.

mod interceptor;
mod reflect;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use interceptor::{chain, BoxFuture, Chain, NoopInterceptor, PrivacyInterceptor, UnaryHandler, UnaryInterceptor};
pub use reflect::{FlatMessage, ReflectError, ReflectMessage};

use crate::minimize::{apply_action, FieldAction, ScalarValue};
pub use crate::policy::{FieldInfo, FieldKind};
use crate::token::{verify_token, PolicyClaims, TokenError, VerifyKey};

/// Metadata key that carries the policy token.
pub const DEFAULT_METADATA_KEY: &str = "x-purpose-jwt";

/// Status codes, numbered as in gRPC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RpcCode {
    Cancelled,
    Unknown,
    InvalidArgument,
    NotFound,
    PermissionDenied,
    Unimplemented,
    Internal,
    Unavailable,
    Unauthenticated,
    Other(i32),
}

impl RpcCode {
    pub fn as_i32(self) -> i32 {
        match self {
            RpcCode::Cancelled => 1,
            RpcCode::Unknown => 2,
            RpcCode::InvalidArgument => 3,
            RpcCode::NotFound => 5,
            RpcCode::PermissionDenied => 7,
            RpcCode::Unimplemented => 12,
            RpcCode::Internal => 13,
            RpcCode::Unavailable => 14,
            RpcCode::Unauthenticated => 16,
            RpcCode::Other(code) => code,
        }
    }

    pub fn from_i32(code: i32) -> Self {
        match code {
            1 => RpcCode::Cancelled,
            2 => RpcCode::Unknown,
            3 => RpcCode::InvalidArgument,
            5 => RpcCode::NotFound,
            7 => RpcCode::PermissionDenied,
            12 => RpcCode::Unimplemented,
            13 => RpcCode::Internal,
            14 => RpcCode::Unavailable,
            16 => RpcCode::Unauthenticated,
            other => RpcCode::Other(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code:?}: {message}")]
pub struct RpcError {
    pub code: RpcCode,
    pub message: String,
}

impl RpcError {
    pub fn new(code: RpcCode, message: impl Into<String>) -> Self {
        RpcError { code, message: message.into() }
    }

    pub fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new(RpcCode::Unauthenticated, message)
    }

    pub fn permission_denied(message: impl Into<String>) -> Self {
        Self::new(RpcCode::PermissionDenied, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(RpcCode::Internal, message)
    }
}

impl From<TokenError> for RpcError {
    fn from(err: TokenError) -> Self {
        match err {
            TokenError::Expired { .. } => RpcError::permission_denied(err.to_string()),
            _ => RpcError::unauthenticated(err.to_string()),
        }
    }
}

impl From<ReflectError> for RpcError {
    fn from(err: ReflectError) -> Self {
        RpcError::internal(err.to_string())
    }
}

/// Request metadata: lowercase ASCII keys mapped to raw values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    entries: BTreeMap<String, Vec<u8>>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.entries.get(&key.to_ascii_lowercase()).map(Vec::as_slice)
    }

    /// Sets `key`, replacing any previous value.
    pub fn insert(&mut self, key: impl AsRef<str>, value: impl Into<Vec<u8>>) -> Option<Vec<u8>> {
        self.entries.insert(key.as_ref().to_ascii_lowercase(), value.into())
    }

    pub fn remove(&mut self, key: &str) -> Option<Vec<u8>> {
        self.entries.remove(&key.to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl<K: AsRef<str>, V: Into<Vec<u8>>> FromIterator<(K, V)> for Metadata {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut md = Metadata::new();
        for (k, v) in iter {
            md.insert(k, v);
        }
        md
    }
}

/// Source of the current time in unix seconds.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or_default()
    }
}

/// A settable clock for tests and simulations.
#[derive(Debug, Default)]
pub struct FixedClock(AtomicU64);

impl FixedClock {
    pub fn new(now: u64) -> Self {
        FixedClock(AtomicU64::new(now))
    }

    pub fn set(&self, now: u64) {
        self.0.store(now, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for FixedClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now(&self) -> u64 {
        (**self).now()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid metadata key `{0}`: use lowercase ASCII letters, digits, `-`, `_` or `.`, not ending in `-bin`")]
pub struct InvalidMetadataKey(pub String);

/// Validates a metadata key for the text-valued token header.
pub fn check_metadata_key(key: &str) -> Result<(), InvalidMetadataKey> {
    let ok = !key.is_empty()
        && !key.ends_with("-bin")
        && !key.starts_with(':')
        && key.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(InvalidMetadataKey(key.to_owned()))
    }
}

/// Immutable enforcement settings shared by all requests.
#[derive(Debug, Clone)]
pub struct InterceptorConfig {
    verify_key: VerifyKey,
    metadata_key: String,
    clock: Arc<dyn Clock>,
    rng_seed: Option<u64>,
}

impl InterceptorConfig {
    pub fn new(verify_key: VerifyKey) -> Self {
        InterceptorConfig {
            verify_key,
            metadata_key: DEFAULT_METADATA_KEY.to_owned(),
            clock: Arc::new(SystemClock),
            rng_seed: None,
        }
    }

    pub fn with_metadata_key(mut self, key: impl Into<String>) -> Result<Self, InvalidMetadataKey> {
        let key = key.into();
        check_metadata_key(&key)?;
        self.metadata_key = key;
        Ok(self)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Makes noising reproducible: every request draws from a fresh
    /// generator seeded with `seed`. Intended for tests and previews.
    pub fn with_rng_seed(mut self, seed: u64) -> Self {
        self.rng_seed = Some(seed);
        self
    }

    pub fn verify_key(&self) -> &VerifyKey {
        &self.verify_key
    }

    pub fn metadata_key(&self) -> &str {
        &self.metadata_key
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn rng_seed(&self) -> Option<u64> {
        self.rng_seed
    }

    /// Random source for one request.
    pub fn request_rng(&self) -> ChaCha8Rng {
        request_rng(self.rng_seed)
    }
}

/// The generator one request draws its noise from: seeded when `seed` is
/// given, otherwise from OS entropy.
pub fn request_rng(seed: Option<u64>) -> ChaCha8Rng {
    match seed {
        Some(seed) => ChaCha8Rng::seed_from_u64(seed),
        None => ChaCha8Rng::from_entropy(),
    }
}

/// Per-field actions of one verified decision. Unlisted fields are suppressed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompiledRule {
    actions: HashMap<String, FieldAction>,
}

static SUPPRESS: FieldAction = FieldAction::Suppress;

impl CompiledRule {
    pub fn lookup(&self, field: &str) -> &FieldAction {
        self.actions.get(field).unwrap_or(&SUPPRESS)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl From<&crate::policy::PurposeRule> for CompiledRule {
    fn from(rule: &crate::policy::PurposeRule) -> Self {
        let mut actions = HashMap::new();
        actions.extend(rule.allowed().iter().map(|f| (f.clone(), FieldAction::Pass)));
        actions.extend(rule.generalized().iter().map(|(f, p)| (f.clone(), FieldAction::Generalize(*p))));
        actions.extend(rule.noised().iter().map(|(f, s)| (f.clone(), FieldAction::Noise(*s))));
        actions.extend(rule.reduced().iter().map(|(f, p)| (f.clone(), FieldAction::Reduce(*p))));
        CompiledRule { actions }
    }
}

pub fn compile_rule(claims: &PolicyClaims) -> CompiledRule {
    CompiledRule::from(&claims.rule)
}

/// Reads and verifies the token carried in `metadata`.
pub fn authorize(metadata: &Metadata, config: &InterceptorConfig) -> Result<PolicyClaims, RpcError> {
    let raw = metadata
        .get(config.metadata_key())
        .ok_or_else(|| RpcError::unauthenticated(format!("missing `{}` metadata", config.metadata_key())))?;
    let token = std::str::from_utf8(raw)
        .map_err(|_| RpcError::unauthenticated(format!("`{}` metadata is not valid UTF-8", config.metadata_key())))?;
    Ok(verify_token(token.trim(), config.verify_key(), config.clock().now())?)
}

fn sentinel(kind: FieldKind) -> ScalarValue {
    match kind {
        FieldKind::UnsignedInteger => ScalarValue::Uint(0),
        FieldKind::Float => ScalarValue::Float(-1.0),
        FieldKind::String => ScalarValue::Str(String::new()),
        _ => ScalarValue::Int(-1),
    }
}

/// Rewrites every top-level field of `message` according to `rule`.
///
/// Scalars get their action applied; a parameter the value's kind cannot
/// use (e.g. a fractional bucket width on an integer) suppresses the field.
/// Non-scalar fields pass when allowed and are cleared otherwise.
pub fn minimize_message<M, R>(message: &mut M, rule: &CompiledRule, rng: &mut R) -> Result<(), RpcError>
where
    M: ReflectMessage + ?Sized,
    R: Rng + ?Sized,
{
    for field in message.fields() {
        let action = rule.lookup(&field.name);
        if matches!(action, FieldAction::Pass) {
            continue;
        }
        if field.kind.is_scalar() {
            let value = message.get_scalar(&field.name)?;
            let minimized = apply_action(value, action, rng).unwrap_or_else(|_| sentinel(field.kind));
            message.set_scalar(&field.name, minimized)?;
        } else {
            message.clear_field(&field.name)?;
        }
    }
    Ok(())
}

/// Verifies the token in `request_metadata` and minimizes `response`.
///
/// On any token failure the response is dropped and an error returned.
pub fn intercept_response<M: ReflectMessage>(
    request_metadata: &Metadata,
    mut response: M,
    config: &InterceptorConfig,
) -> Result<M, RpcError> {
    let claims = authorize(request_metadata, config)?;
    let rule = compile_rule(&claims);
    minimize_message(&mut response, &rule, &mut config.request_rng())?;
    Ok(response)
}

/// Client side: puts `token` under `metadata_key`, replacing an older token
/// and leaving all other entries alone.
pub fn attach_token(mut outgoing_metadata: Metadata, token: &str, metadata_key: &str) -> Metadata {
    outgoing_metadata.insert(metadata_key, token.as_bytes());
    outgoing_metadata
}

#[cfg(test)]
mod tests;
