//! Type-preserving minimization transforms for scalar field values.
//!
//! Every transform returns a value of the same kind it was given: an
//! integer field stays an integer, a string stays a string. That keeps
//! minimized responses decodable by clients compiled against the original
//! message schema.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::policy::{NoiseMechanism, NoiseSpec};

/// A scalar field value.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarValue {
    Int(i64),
    Uint(u64),
    Float(f64),
    Str(String),
}

impl ScalarValue {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ScalarValue::Int(_) => "integer",
            ScalarValue::Uint(_) => "unsigned-integer",
            ScalarValue::Float(_) => "float",
            ScalarValue::Str(_) => "string",
        }
    }

    pub fn same_kind(&self, other: &ScalarValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Int(v) => write!(f, "{v}"),
            ScalarValue::Uint(v) => write!(f, "{v}"),
            ScalarValue::Float(v) => write!(f, "{v}"),
            ScalarValue::Str(v) => write!(f, "{v:?}"),
        }
    }
}

/// What the enforcement point does with one field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldAction {
    Pass,
    Suppress,
    /// Bucket width for numbers, prefix length for strings.
    Generalize(f64),
    Noise(NoiseSpec),
    /// Divisor for numbers, prefix length for strings.
    Reduce(f64),
}

impl FieldAction {
    pub fn name(&self) -> &'static str {
        match self {
            FieldAction::Pass => "pass",
            FieldAction::Suppress => "suppress",
            FieldAction::Generalize(_) => "generalize",
            FieldAction::Noise(_) => "noise",
            FieldAction::Reduce(_) => "reduce",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{op} of a {kind} value: {reason}")]
pub struct ParamError {
    pub op: &'static str,
    pub kind: &'static str,
    pub reason: String,
}

impl ParamError {
    fn new(op: &'static str, value: &ScalarValue, reason: impl Into<String>) -> Self {
        ParamError { op, kind: value.kind_name(), reason: reason.into() }
    }
}

/// Replaces a value with its kind's sentinel: −1 for signed integers and
/// floats, the empty string for strings.
///
/// Unsigned integers cannot hold −1 and are suppressed to 0, which may be
/// indistinguishable from a legitimate zero.
pub fn suppress(value: ScalarValue) -> ScalarValue {
    match value {
        ScalarValue::Int(_) => ScalarValue::Int(-1),
        ScalarValue::Uint(_) => ScalarValue::Uint(0),
        ScalarValue::Float(_) => ScalarValue::Float(-1.0),
        ScalarValue::Str(_) => ScalarValue::Str(String::new()),
    }
}

/// Maps a number to the anchor of its bucket, or truncates a string.
///
/// With bucket width `r`, the anchor of `v` is `floor((v - 1) / r) * r + 1`,
/// so with `r = 10` the values 21..=30 all map to 21. Positive inputs always
/// stay positive. Integer results that leave the type's range saturate.
pub fn generalize(value: ScalarValue, param: f64) -> Result<ScalarValue, ParamError> {
    const OP: &str = "generalize";
    match value {
        ScalarValue::Str(s) => Ok(ScalarValue::Str(prefix(OP, s, param)?)),
        ScalarValue::Float(v) => {
            let r = positive(OP, &value, param)?;
            Ok(ScalarValue::Float(((v - 1.0) / r).floor() * r + 1.0))
        }
        ScalarValue::Int(v) => {
            let r = whole_positive(OP, &value, param)?;
            let anchor = bucket_anchor(i128::from(v), r);
            Ok(ScalarValue::Int(anchor.clamp(i128::from(i64::MIN), i128::from(i64::MAX)) as i64))
        }
        ScalarValue::Uint(v) => {
            let r = whole_positive(OP, &value, param)?;
            let anchor = bucket_anchor(i128::from(v), r);
            Ok(ScalarValue::Uint(anchor.clamp(0, i128::from(u64::MAX)) as u64))
        }
    }
}

/// Divides a number by the parameter (truncating for integers), or
/// truncates a string exactly like [`generalize`].
pub fn reduce(value: ScalarValue, param: f64) -> Result<ScalarValue, ParamError> {
    const OP: &str = "reduce";
    match value {
        ScalarValue::Str(s) => Ok(ScalarValue::Str(prefix(OP, s, param)?)),
        ScalarValue::Float(v) => {
            let d = positive(OP, &value, param)?;
            Ok(ScalarValue::Float(v / d))
        }
        ScalarValue::Int(v) => {
            let d = whole_positive(OP, &value, param)?;
            Ok(ScalarValue::Int((i128::from(v) / d) as i64))
        }
        ScalarValue::Uint(v) => {
            let d = whole_positive(OP, &value, param)?;
            Ok(ScalarValue::Uint((i128::from(v) / d) as u64))
        }
    }
}

/// Adds Laplace or Gaussian noise to a number. Strings are suppressed.
///
/// Integers are perturbed in floating point, rounded half away from zero
/// and saturated to the type's range.
pub fn noise<R: Rng + ?Sized>(value: ScalarValue, spec: &NoiseSpec, rng: &mut R) -> ScalarValue {
    match value {
        ScalarValue::Str(_) => suppress(value),
        ScalarValue::Float(v) => ScalarValue::Float(v + sample_noise(spec, rng)),
        // `as` casts from f64 saturate at the integer bounds.
        ScalarValue::Int(v) => ScalarValue::Int((v as f64 + sample_noise(spec, rng)).round() as i64),
        ScalarValue::Uint(v) => ScalarValue::Uint((v as f64 + sample_noise(spec, rng)).round() as u64),
    }
}

pub fn apply_action<R: Rng + ?Sized>(
    value: ScalarValue,
    action: &FieldAction,
    rng: &mut R,
) -> Result<ScalarValue, ParamError> {
    match action {
        FieldAction::Pass => Ok(value),
        FieldAction::Suppress => Ok(suppress(value)),
        FieldAction::Generalize(param) => generalize(value, *param),
        FieldAction::Noise(spec) => Ok(noise(value, spec, rng)),
        FieldAction::Reduce(param) => reduce(value, *param),
    }
}

impl NoiseSpec {
    /// Scale `b` of the Laplace distribution: sensitivity / epsilon.
    pub fn laplace_scale(&self) -> f64 {
        self.sensitivity() / self.epsilon()
    }

    /// Standard deviation of the Gaussian mechanism:
    /// sensitivity * sqrt(2 ln(1.25 / delta)) / epsilon. `None` for Laplace specs.
    pub fn gaussian_sigma(&self) -> Option<f64> {
        let delta = self.delta()?;
        Some(self.sensitivity() * (2.0 * (1.25 / delta).ln()).sqrt() / self.epsilon())
    }

    /// Variance of the configured noise distribution.
    pub fn variance(&self) -> f64 {
        match self.gaussian_sigma() {
            None => 2.0 * self.laplace_scale().powi(2),
            Some(sigma) => sigma * sigma,
        }
    }
}

/// Draws one zero-mean noise sample for `spec`.
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> f64 {
    match spec.mechanism() {
        NoiseMechanism::Laplace => {
            // The difference of two unit exponentials is a unit Laplace variate.
            let a: f64 = Exp1.sample(rng);
            let b: f64 = Exp1.sample(rng);
            spec.laplace_scale() * (a - b)
        }
        NoiseMechanism::Gaussian { .. } => {
            let sigma = spec.gaussian_sigma().expect("gaussian spec carries delta");
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        }
    }
}

fn bucket_anchor(v: i128, r: i128) -> i128 {
    (v - 1).div_euclid(r) * r + 1
}

fn positive(op: &'static str, value: &ScalarValue, param: f64) -> Result<f64, ParamError> {
    if param.is_finite() && param > 0.0 {
        Ok(param)
    } else {
        Err(ParamError::new(op, value, format!("parameter must be positive, got {param}")))
    }
}

// Parameters beyond 2^100 behave identically for 64-bit operands.
fn whole_positive(op: &'static str, value: &ScalarValue, param: f64) -> Result<i128, ParamError> {
    positive(op, value, param)?;
    if param.fract() != 0.0 {
        return Err(ParamError::new(op, value, format!("parameter must be a whole number, got {param}")));
    }
    Ok(param.min(2f64.powi(100)) as i128)
}

fn prefix(op: &'static str, s: String, param: f64) -> Result<String, ParamError> {
    if !(param >= 0.0 && param.is_finite() && param.fract() == 0.0) {
        let value = ScalarValue::Str(String::new());
        return Err(ParamError::new(
            op,
            &value,
            format!("prefix length must be a non-negative whole number, got {param}"),
        ));
    }
    let keep = param.min(usize::MAX as f64) as usize;
    match s.char_indices().nth(keep) {
        Some((cut, _)) => {
            let mut s = s;
            s.truncate(cut);
            Ok(s)
        }
        None => Ok(s),
    }
}
