use indexmap::IndexMap;
use serde_json::Value;
use thiserror::Error;

use crate::minimize::ScalarValue;
use crate::policy::{FieldInfo, FieldKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectError {
    #[error("message has no field `{0}`")]
    NoSuchField(String),
    #[error("field `{field}` is {actual}, not a {requested} value")]
    KindMismatch { field: String, actual: FieldKind, requested: &'static str },
    #[error("field `{field}`: {reason}")]
    Other { field: String, reason: String },
}

/// Field-level access to a message whose schema is known at runtime.
///
/// Only top-level fields are visible. Implementations report fields in
/// declaration order and must keep names, order and kinds unchanged across
/// `set_scalar` / `clear_field` calls.
pub trait ReflectMessage {
    fn fields(&self) -> Vec<FieldInfo>;

    /// Current value of a scalar field (integer, unsigned integer, float or string).
    fn get_scalar(&self, name: &str) -> Result<ScalarValue, ReflectError>;

    /// Overwrites a scalar field. The value must have the field's kind.
    fn set_scalar(&mut self, name: &str, value: ScalarValue) -> Result<(), ReflectError>;

    /// Resets a field to its empty/default value.
    fn clear_field(&mut self, name: &str) -> Result<(), ReflectError>;
}

/// A flat, ordered record of named values; the reflective view of a JSON
/// object such as `{"name": "Alice", "age": 25}`.
///
/// JSON numbers with a fractional part or exponent are floats, other
/// numbers are signed integers (unsigned only above `i64::MAX`). Booleans,
/// arrays, objects and nulls are carried as opaque non-scalar fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatMessage {
    fields: IndexMap<String, FlatValue>,
}

#[derive(Debug, Clone, PartialEq)]
enum FlatValue {
    Scalar(ScalarValue),
    Other(FieldKind, Value),
}

impl FlatMessage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: ScalarValue) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ScalarValue) {
        self.fields.insert(name.into(), FlatValue::Scalar(value));
    }

    pub fn get(&self, name: &str) -> Option<&ScalarValue> {
        match self.fields.get(name)? {
            FlatValue::Scalar(v) => Some(v),
            FlatValue::Other(..) => None,
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn from_json(value: Value) -> Result<Self, ReflectError> {
        let Value::Object(map) = value else {
            return Err(ReflectError::Other { field: String::new(), reason: "message must be a JSON object".into() });
        };
        let mut fields = IndexMap::with_capacity(map.len());
        for (name, value) in map {
            let flat = match value {
                Value::String(s) => FlatValue::Scalar(ScalarValue::Str(s)),
                Value::Number(n) => FlatValue::Scalar(if n.is_f64() {
                    ScalarValue::Float(n.as_f64().unwrap_or(f64::NAN))
                } else if let Some(i) = n.as_i64() {
                    ScalarValue::Int(i)
                } else {
                    ScalarValue::Uint(n.as_u64().unwrap_or_default())
                }),
                Value::Bool(_) => FlatValue::Other(FieldKind::Bool, value),
                Value::Array(_) => FlatValue::Other(FieldKind::Repeated, value),
                Value::Object(_) | Value::Null => FlatValue::Other(FieldKind::Nested, value),
            };
            fields.insert(name, flat);
        }
        Ok(FlatMessage { fields })
    }

    pub fn to_json(&self) -> Value {
        let map = self
            .fields
            .iter()
            .map(|(name, value)| {
                let json = match value {
                    FlatValue::Scalar(ScalarValue::Int(v)) => Value::from(*v),
                    FlatValue::Scalar(ScalarValue::Uint(v)) => Value::from(*v),
                    FlatValue::Scalar(ScalarValue::Float(v)) => Value::from(*v),
                    FlatValue::Scalar(ScalarValue::Str(v)) => Value::from(v.as_str()),
                    FlatValue::Other(_, v) => v.clone(),
                };
                (name.clone(), json)
            })
            .collect();
        Value::Object(map)
    }
}

fn scalar_kind(value: &ScalarValue) -> FieldKind {
    match value {
        ScalarValue::Int(_) => FieldKind::Integer,
        ScalarValue::Uint(_) => FieldKind::UnsignedInteger,
        ScalarValue::Float(_) => FieldKind::Float,
        ScalarValue::Str(_) => FieldKind::String,
    }
}

impl ReflectMessage for FlatMessage {
    fn fields(&self) -> Vec<FieldInfo> {
        self.fields
            .iter()
            .map(|(name, value)| {
                let kind = match value {
                    FlatValue::Scalar(v) => scalar_kind(v),
                    FlatValue::Other(kind, _) => *kind,
                };
                FieldInfo::new(name.clone(), kind)
            })
            .collect()
    }

    fn get_scalar(&self, name: &str) -> Result<ScalarValue, ReflectError> {
        match self.fields.get(name) {
            Some(FlatValue::Scalar(v)) => Ok(v.clone()),
            Some(FlatValue::Other(kind, _)) => {
                Err(ReflectError::KindMismatch { field: name.to_owned(), actual: *kind, requested: "scalar" })
            }
            None => Err(ReflectError::NoSuchField(name.to_owned())),
        }
    }

    fn set_scalar(&mut self, name: &str, value: ScalarValue) -> Result<(), ReflectError> {
        match self.fields.get_mut(name) {
            Some(FlatValue::Scalar(current)) if current.same_kind(&value) => {
                *current = value;
                Ok(())
            }
            Some(FlatValue::Scalar(current)) => Err(ReflectError::KindMismatch {
                field: name.to_owned(),
                actual: scalar_kind(current),
                requested: value.kind_name(),
            }),
            Some(FlatValue::Other(kind, _)) => {
                Err(ReflectError::KindMismatch { field: name.to_owned(), actual: *kind, requested: value.kind_name() })
            }
            None => Err(ReflectError::NoSuchField(name.to_owned())),
        }
    }

    fn clear_field(&mut self, name: &str) -> Result<(), ReflectError> {
        match self.fields.get_mut(name) {
            Some(FlatValue::Scalar(v)) => {
                *v = match v {
                    ScalarValue::Int(_) => ScalarValue::Int(0),
                    ScalarValue::Uint(_) => ScalarValue::Uint(0),
                    ScalarValue::Float(_) => ScalarValue::Float(0.0),
                    ScalarValue::Str(_) => ScalarValue::Str(String::new()),
                };
                Ok(())
            }
            Some(FlatValue::Other(kind, v)) => {
                *v = match kind {
                    FieldKind::Bool => Value::Bool(false),
                    FieldKind::Repeated => Value::Array(Vec::new()),
                    _ => Value::Null,
                };
                Ok(())
            }
            None => Err(ReflectError::NoSuchField(name.to_owned())),
        }
    }
}
