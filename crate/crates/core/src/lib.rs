//! Purpose limitation and field-level data minimization for RPC responses.
//!
//! The crate is split along the classic access-control roles:
//!
//! * [`policy`] holds the machine-readable policy (which fields a given
//!   service may release for a given purpose, and how).
//! * [`token`] turns one purpose rule into a signed, expiring token that a
//!   client attaches to its requests.
//! * [`minimize`] implements the per-field transforms (suppression,
//!   generalization, noising and reduction).
//! * [`enforce`] is the response interceptor that verifies the token and
//!   rewrites every field of an outgoing message.

pub mod enforce;
pub mod minimize;
pub mod policy;
pub mod token;

pub use enforce::{
    attach_token, authorize, chain, check_metadata_key, compile_rule, intercept_response, minimize_message,
    request_rng, Chain, Clock, CompiledRule, FieldInfo, FieldKind, FixedClock, FlatMessage, InterceptorConfig,
    InvalidMetadataKey, Metadata, NoopInterceptor, PrivacyInterceptor, ReflectError, ReflectMessage, RpcCode, RpcError,
    SystemClock, UnaryHandler, UnaryInterceptor, DEFAULT_METADATA_KEY,
};
pub use minimize::{apply_action, generalize, noise, reduce, suppress, FieldAction, ParamError, ScalarValue};
pub use policy::{
    lookup_rule, parse_field_catalog, parse_policy, validate_against_schema, NoiseMechanism, NoiseSpec, PolicyDocument,
    PolicyError, PurposeRule, ServicePolicy, Warning,
};
pub use token::{mint_token, verify_token, Algorithm, PolicyClaims, SigningKey, TokenError, VerifyKey};
