//! Signed, expiring policy tokens.
//!
//! A token is a compact JWT whose payload carries one purpose rule:
//!
//! ```json
//! {"sub": "trackingservice", "purpose": "delivery",
//!  "policy": {"name": "delivery", "allowed": ["name"], "generalized": {"age": 10}},
//!  "iat": 1700000000, "exp": 1700003600}
//! ```
//!
//! `policy` has exactly the shape of a purpose object in the policy file, so
//! the enforcement side validates it with the same parser.

use std::fmt;
use std::path::Path;

use jsonwebtoken::errors::ErrorKind;
use jsonwebtoken::{DecodingKey, EncodingKey, Header, Validation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{lookup_rule, PolicyDocument, PolicyError, PurposeRule};

#[derive(Debug, Error)]
pub enum TokenError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("key error: {0}")]
    Key(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("signature verification failed: {0}")]
    Signature(String),
    #[error("token expired at {expires_at} (now {now})")]
    Expired { expires_at: u64, now: u64 },
    #[error("malformed token: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// RSASSA-PKCS1-v1_5 with SHA-256.
    Rs256,
    /// ECDSA on P-256 with SHA-256.
    Es256,
}

impl Algorithm {
    fn jwt(self) -> jsonwebtoken::Algorithm {
        match self {
            Algorithm::Rs256 => jsonwebtoken::Algorithm::RS256,
            Algorithm::Es256 => jsonwebtoken::Algorithm::ES256,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Rs256 => "RS256",
            Algorithm::Es256 => "ES256",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rs256" | "rsa" => Ok(Algorithm::Rs256),
            "es256" | "ecdsa" | "ec" => Ok(Algorithm::Es256),
            other => Err(TokenError::Key(format!("unsupported algorithm `{other}`"))),
        }
    }
}

/// PEM private key (PKCS#8) used to mint tokens.
#[derive(Clone)]
pub struct SigningKey {
    algorithm: Algorithm,
    key: EncodingKey,
}

impl SigningKey {
    pub fn from_pem(algorithm: Algorithm, pem: &[u8]) -> Result<Self, TokenError> {
        let key = match algorithm {
            Algorithm::Rs256 => EncodingKey::from_rsa_pem(pem),
            Algorithm::Es256 => EncodingKey::from_ec_pem(pem),
        }
        .map_err(|e| TokenError::Key(format!("cannot read {algorithm} private key: {e}")))?;
        let signing = SigningKey { algorithm, key };
        // PEM parsing accepts some keys the signer later rejects; find out now.
        jsonwebtoken::encode(&Header::new(algorithm.jwt()), &serde_json::json!({}), &signing.key)
            .map_err(|e| TokenError::Key(format!("unusable {algorithm} private key: {e}")))?;
        Ok(signing)
    }

    pub fn from_pem_file(algorithm: Algorithm, path: impl AsRef<Path>) -> Result<Self, TokenError> {
        let path = path.as_ref();
        let pem = std::fs::read(path).map_err(|e| TokenError::Key(format!("{}: {e}", path.display())))?;
        Self::from_pem(algorithm, &pem)
    }

    /// Reads a private key, picking the algorithm from the key type.
    pub fn from_pem_auto(pem: &[u8]) -> Result<Self, TokenError> {
        Self::from_pem(Algorithm::Rs256, pem).or_else(|_| Self::from_pem(Algorithm::Es256, pem))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKey").field("algorithm", &self.algorithm).finish_non_exhaustive()
    }
}

/// PEM public key (SPKI) used to verify tokens.
#[derive(Clone)]
pub struct VerifyKey {
    algorithm: Algorithm,
    key: DecodingKey,
}

impl VerifyKey {
    pub fn from_pem(algorithm: Algorithm, pem: &[u8]) -> Result<Self, TokenError> {
        let key = match algorithm {
            Algorithm::Rs256 => DecodingKey::from_rsa_pem(pem),
            Algorithm::Es256 => DecodingKey::from_ec_pem(pem),
        }
        .map_err(|e| TokenError::Key(format!("cannot read {algorithm} public key: {e}")))?;
        Ok(VerifyKey { algorithm, key })
    }

    pub fn from_pem_file(algorithm: Algorithm, path: impl AsRef<Path>) -> Result<Self, TokenError> {
        let path = path.as_ref();
        let pem = std::fs::read(path).map_err(|e| TokenError::Key(format!("{}: {e}", path.display())))?;
        Self::from_pem(algorithm, &pem)
    }

    /// Reads a public key, picking the algorithm from the key type.
    pub fn from_pem_auto(pem: &[u8]) -> Result<Self, TokenError> {
        Self::from_pem(Algorithm::Rs256, pem).or_else(|_| Self::from_pem(Algorithm::Es256, pem))
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }
}

impl fmt::Debug for VerifyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VerifyKey").field("algorithm", &self.algorithm).finish_non_exhaustive()
    }
}

/// The decision carried by a token.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyClaims {
    pub service: String,
    pub purpose: String,
    pub rule: PurposeRule,
    pub issued_at: u64,
    pub expires_at: u64,
}

#[derive(Serialize, Deserialize)]
struct WireClaims {
    sub: String,
    purpose: String,
    policy: serde_json::Value,
    iat: u64,
    exp: u64,
}

/// Looks up the rule for (service, purpose) and signs it into a token that
/// expires `expiration_hours` after `now` (unix seconds).
pub fn mint_token(
    doc: &PolicyDocument,
    service: &str,
    purpose: &str,
    key: &SigningKey,
    expiration_hours: f64,
    now: u64,
) -> Result<String, TokenError> {
    if !(expiration_hours.is_finite() && expiration_hours > 0.0) {
        return Err(TokenError::Param(format!(
            "expiration must be a positive number of hours, got {expiration_hours}"
        )));
    }
    let lifetime = (expiration_hours * 3600.0).round();
    if lifetime < 1.0 {
        return Err(TokenError::Param(format!("expiration of {expiration_hours} hours is shorter than one second")));
    }
    let expires_at = now
        .checked_add(lifetime as u64)
        .filter(|&exp| exp <= i64::MAX as u64)
        .ok_or_else(|| TokenError::Param(format!("expiration of {expiration_hours} hours overflows")))?;
    let rule = lookup_rule(doc, service, purpose)?;
    let claims = WireClaims {
        sub: service.to_owned(),
        purpose: purpose.to_owned(),
        policy: rule.to_json_value(),
        iat: now,
        exp: expires_at,
    };
    jsonwebtoken::encode(&Header::new(key.algorithm.jwt()), &claims, &key.key)
        .map_err(|e| TokenError::Key(format!("signing failed: {e}")))
}

/// Checks signature, structure and expiry (strictly `now < exp`) and
/// returns the carried decision.
pub fn verify_token(token: &str, key: &VerifyKey, now: u64) -> Result<PolicyClaims, TokenError> {
    if token.split('.').count() != 3 {
        return Err(TokenError::Malformed("expected three dot-separated segments".into()));
    }
    let mut validation = Validation::new(key.algorithm.jwt());
    validation.validate_exp = false;
    validation.validate_nbf = false;
    validation.validate_aud = false;
    validation.leeway = 0;
    validation.required_spec_claims.clear();

    let data = jsonwebtoken::decode::<WireClaims>(token, &key.key, &validation).map_err(|e| match e.kind() {
        ErrorKind::InvalidSignature | ErrorKind::InvalidAlgorithm | ErrorKind::InvalidAlgorithmName => {
            TokenError::Signature(e.to_string())
        }
        ErrorKind::InvalidKeyFormat | ErrorKind::InvalidEcdsaKey | ErrorKind::InvalidRsaKey(_) => {
            TokenError::Key(e.to_string())
        }
        _ => TokenError::Malformed(e.to_string()),
    })?;
    let wire = data.claims;

    let rule =
        PurposeRule::from_json_value(wire.policy).map_err(|e| TokenError::Malformed(format!("policy claim: {e}")))?;
    if rule.purpose() != wire.purpose {
        return Err(TokenError::Malformed(format!(
            "purpose claim `{}` does not match policy `{}`",
            wire.purpose,
            rule.purpose()
        )));
    }
    if wire.exp <= wire.iat {
        return Err(TokenError::Malformed("exp must be later than iat".into()));
    }
    if now >= wire.exp {
        return Err(TokenError::Expired { expires_at: wire.exp, now });
    }
    Ok(PolicyClaims { service: wire.sub, purpose: wire.purpose, rule, issued_at: wire.iat, expires_at: wire.exp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;

    const DOC: &str = r#"{"services":[{"name":"trackingservice","purposes":[
        {"name":"delivery","allowed":["name"],"generalized":{"age":10},
         "noised":{"latitude":{"mechanism":"gaussian","epsilon":1.0,"delta":1e-5}},
         "reduced":{"zip":4}}]}]}"#;

    const T0: u64 = 1_700_000_000;

    fn keys(dir: &str) -> (Vec<u8>, Vec<u8>) {
        let base = concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/keys/");
        (
            std::fs::read(format!("{base}{dir}/private.pem")).unwrap(),
            std::fs::read(format!("{base}{dir}/public.pem")).unwrap(),
        )
    }

    fn pair(alg: Algorithm, dir: &str) -> (SigningKey, VerifyKey) {
        let (private, public) = keys(dir);
        (SigningKey::from_pem(alg, &private).unwrap(), VerifyKey::from_pem(alg, &public).unwrap())
    }

    #[test]
    fn round_trip_both_algorithms() {
        let doc = parse_policy(DOC).unwrap();
        let expected = lookup_rule(&doc, "trackingservice", "delivery").unwrap();
        for (alg, dir) in [(Algorithm::Rs256, "rsa-a"), (Algorithm::Es256, "ec-a")] {
            let (sk, vk) = pair(alg, dir);
            let token = mint_token(&doc, "trackingservice", "delivery", &sk, 1.0, T0).unwrap();
            assert_eq!(token.split('.').count(), 3);
            let claims = verify_token(&token, &vk, T0).unwrap();
            assert_eq!(&claims.rule, expected);
            assert_eq!(claims.service, "trackingservice");
            assert_eq!(claims.purpose, "delivery");
            assert_eq!(claims.issued_at, T0);
            assert_eq!(claims.expires_at, T0 + 3600);
        }
    }

    #[test]
    fn zero_or_negative_expiration_is_rejected() {
        let doc = parse_policy(DOC).unwrap();
        let (sk, _) = pair(Algorithm::Rs256, "rsa-a");
        for hours in [0.0, -1.0, f64::NAN, 1e-6] {
            let err = mint_token(&doc, "trackingservice", "delivery", &sk, hours, T0).unwrap_err();
            assert!(matches!(err, TokenError::Param(_)), "{hours}: {err}");
        }
    }

    #[test]
    fn unknown_purpose_propagates_not_found() {
        let doc = parse_policy(DOC).unwrap();
        let (sk, _) = pair(Algorithm::Es256, "ec-a");
        match mint_token(&doc, "trackingservice", "marketing", &sk, 1.0, T0) {
            Err(TokenError::Policy(e)) => assert!(e.is_not_found()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_payload_fails_signature() {
        let doc = parse_policy(DOC).unwrap();
        let (sk, vk) = pair(Algorithm::Rs256, "rsa-a");
        let token = mint_token(&doc, "trackingservice", "delivery", &sk, 1.0, T0).unwrap();
        let first_dot = token.find('.').unwrap();
        let mut bytes = token.into_bytes();
        let idx = first_dot + 5;
        bytes[idx] = if bytes[idx] == b'A' { b'B' } else { b'A' };
        let tampered = String::from_utf8(bytes).unwrap();
        assert!(matches!(verify_token(&tampered, &vk, T0), Err(TokenError::Signature(_))));
    }

    #[test]
    fn expiry_is_strict() {
        let doc = parse_policy(DOC).unwrap();
        let (sk, vk) = pair(Algorithm::Es256, "ec-a");
        let token = mint_token(&doc, "trackingservice", "delivery", &sk, 1.0, T0).unwrap();
        assert!(verify_token(&token, &vk, T0 + 3599).is_ok());
        assert!(matches!(verify_token(&token, &vk, T0 + 3600), Err(TokenError::Expired { .. })));
        assert!(matches!(verify_token(&token, &vk, T0 + 3601), Err(TokenError::Expired { .. })));
    }

    #[test]
    fn foreign_keys_never_verify() {
        let doc = parse_policy(DOC).unwrap();
        let (sk_a, _) = pair(Algorithm::Rs256, "rsa-a");
        let (_, vk_b) = pair(Algorithm::Rs256, "rsa-b");
        let (_, vk_ec) = pair(Algorithm::Es256, "ec-a");
        let token = mint_token(&doc, "trackingservice", "delivery", &sk_a, 1.0, T0).unwrap();
        assert!(matches!(verify_token(&token, &vk_b, T0), Err(TokenError::Signature(_))));
        assert!(matches!(verify_token(&token, &vk_ec, T0), Err(TokenError::Signature(_))));

        let (sk_ec_a, _) = pair(Algorithm::Es256, "ec-a");
        let (_, vk_ec_b) = pair(Algorithm::Es256, "ec-b");
        let token = mint_token(&doc, "trackingservice", "delivery", &sk_ec_a, 1.0, T0).unwrap();
        assert!(matches!(verify_token(&token, &vk_ec_b, T0), Err(TokenError::Signature(_))));
    }

    #[test]
    fn malformed_tokens() {
        let (_, vk) = pair(Algorithm::Rs256, "rsa-a");
        for bad in ["", "abc", "a.b", "a.b.c.d", "..", "!!.??.##"] {
            let err = verify_token(bad, &vk, T0).unwrap_err();
            assert!(matches!(err, TokenError::Malformed(_) | TokenError::Signature(_)), "{bad:?}: {err}");
        }
        assert!(matches!(verify_token("a.b", &vk, T0), Err(TokenError::Malformed(_))));
    }

    #[test]
    fn invalid_embedded_rule_is_malformed() {
        let (private, public) = keys("rsa-a");
        let sk = SigningKey::from_pem(Algorithm::Rs256, &private).unwrap();
        let vk = VerifyKey::from_pem(Algorithm::Rs256, &public).unwrap();
        let claims = serde_json::json!({
            "sub": "s", "purpose": "p",
            "policy": {"name": "p", "allowed": ["age"], "reduced": {"age": 2}},
            "iat": T0, "exp": T0 + 10,
        });
        let token = jsonwebtoken::encode(&Header::new(jsonwebtoken::Algorithm::RS256), &claims, &sk.key).unwrap();
        assert!(matches!(verify_token(&token, &vk, T0), Err(TokenError::Malformed(_))));
    }

    #[test]
    fn mismatched_key_material_is_a_key_error() {
        let (rsa_private, rsa_public) = keys("rsa-a");
        let (ec_private, _) = keys("ec-a");
        assert!(matches!(SigningKey::from_pem(Algorithm::Es256, &rsa_private), Err(TokenError::Key(_))));
        assert!(matches!(SigningKey::from_pem(Algorithm::Rs256, &ec_private), Err(TokenError::Key(_))));
        assert!(matches!(SigningKey::from_pem(Algorithm::Rs256, b"garbage"), Err(TokenError::Key(_))));
        assert!(matches!(SigningKey::from_pem(Algorithm::Rs256, &rsa_public), Err(TokenError::Key(_))));
        assert_eq!(SigningKey::from_pem_auto(&ec_private).unwrap().algorithm(), Algorithm::Es256);
        assert_eq!(VerifyKey::from_pem_auto(&rsa_public).unwrap().algorithm(), Algorithm::Rs256);
    }

    #[test]
    fn verification_is_deterministic() {
        let doc = parse_policy(DOC).unwrap();
        let (sk, vk) = pair(Algorithm::Es256, "ec-a");
        let token = mint_token(&doc, "trackingservice", "delivery", &sk, 2.5, T0).unwrap();
        let a = verify_token(&token, &vk, T0 + 100).unwrap();
        let b = verify_token(&token, &vk, T0 + 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.expires_at, T0 + 9000);
    }
}
