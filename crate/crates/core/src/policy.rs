//! The machine-readable access policy.
//!
//! A policy document lists services; each service lists the purposes it may
//! be called for, and each purpose sorts response field names into four
//! categories: `allowed` (released unchanged), `generalized`, `noised` and
//! `reduced` (released after minimization). Fields that appear in none of
//! them are suppressed.
//!
//! ```json
//! {
//!   "services": [
//!     {
//!       "name": "trackingservice",
//!       "purposes": [
//!         {
//!           "name": "delivery",
//!           "allowed": ["name", "street"],
//!           "generalized": {"age": 10},
//!           "noised": {"latitude": {"mechanism": "laplace", "epsilon": 1.0}},
//!           "reduced": {"zip": 4}
//!         }
//!       ]
//!     }
//!   ]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("conflict: field `{field}` of purpose `{purpose}` is listed under both `{first}` and `{second}`")]
    Conflict { purpose: String, field: String, first: &'static str, second: &'static str },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("service not found: `{0}`")]
    ServiceNotFound(String),
    #[error("purpose not found: `{purpose}` for service `{service}`")]
    PurposeNotFound { service: String, purpose: String },
}

impl PolicyError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, PolicyError::ServiceNotFound(_) | PolicyError::PurposeNotFound { .. })
    }

    fn from_json(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Syntax | Category::Eof | Category::Io => PolicyError::Syntax(err.to_string()),
            Category::Data => PolicyError::Schema(err.to_string()),
        }
    }
}

/// Noise distribution used by the `noised` category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMechanism {
    Laplace,
    /// Gaussian noise calibrated for (epsilon, delta)-differential privacy.
    Gaussian {
        delta: f64,
    },
}

/// Parameters of a noised field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    mechanism: NoiseMechanism,
    epsilon: f64,
    sensitivity: f64,
}

impl NoiseSpec {
    pub const DEFAULT_SENSITIVITY: f64 = 1.0;

    pub fn laplace(epsilon: f64, sensitivity: f64) -> Result<Self, PolicyError> {
        Self::new(NoiseMechanism::Laplace, epsilon, sensitivity)
    }

    pub fn gaussian(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self, PolicyError> {
        Self::new(NoiseMechanism::Gaussian { delta }, epsilon, sensitivity)
    }

    pub fn new(mechanism: NoiseMechanism, epsilon: f64, sensitivity: f64) -> Result<Self, PolicyError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(PolicyError::Param(format!("epsilon must be a positive number, got {epsilon}")));
        }
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(PolicyError::Param(format!("sensitivity must be a positive number, got {sensitivity}")));
        }
        if let NoiseMechanism::Gaussian { delta } = mechanism {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(PolicyError::Param(format!("delta must lie in (0, 1), got {delta}")));
            }
        }
        Ok(NoiseSpec { mechanism, epsilon, sensitivity })
    }

    pub fn mechanism(&self) -> NoiseMechanism {
        self.mechanism
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn delta(&self) -> Option<f64> {
        match self.mechanism {
            NoiseMechanism::Laplace => None,
            NoiseMechanism::Gaussian { delta } => Some(delta),
        }
    }
}

/// The rule set of one (service, purpose) pair.
///
/// Construct with [`PurposeRule::builder`] or by parsing; both paths enforce
/// that a field belongs to at most one category and that all parameters are
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PurposeRule {
    purpose: String,
    allowed: BTreeSet<String>,
    generalized: BTreeMap<String, f64>,
    noised: BTreeMap<String, NoiseSpec>,
    reduced: BTreeMap<String, f64>,
}

impl PurposeRule {
    pub fn builder(purpose: impl Into<String>) -> PurposeRuleBuilder {
        PurposeRuleBuilder { raw: RawPurpose { name: purpose.into(), ..RawPurpose::default() } }
    }

    pub fn purpose(&self) -> &str {
        &self.purpose
    }

    pub fn allowed(&self) -> &BTreeSet<String> {
        &self.allowed
    }

    pub fn generalized(&self) -> &BTreeMap<String, f64> {
        &self.generalized
    }

    pub fn noised(&self) -> &BTreeMap<String, NoiseSpec> {
        &self.noised
    }

    pub fn reduced(&self) -> &BTreeMap<String, f64> {
        &self.reduced
    }

    /// Category a field is listed under, if any.
    pub fn category_of(&self, field: &str) -> Option<Category> {
        if self.allowed.contains(field) {
            Some(Category::Allowed)
        } else if self.generalized.contains_key(field) {
            Some(Category::Generalized)
        } else if self.noised.contains_key(field) {
            Some(Category::Noised)
        } else if self.reduced.contains_key(field) {
            Some(Category::Reduced)
        } else {
            None
        }
    }

    /// Every field name mentioned by the rule, in category order.
    pub fn mentioned_fields(&self) -> impl Iterator<Item = (&str, Category)> {
        let allowed = self.allowed.iter().map(|f| (f.as_str(), Category::Allowed));
        let generalized = self.generalized.keys().map(|f| (f.as_str(), Category::Generalized));
        let noised = self.noised.keys().map(|f| (f.as_str(), Category::Noised));
        let reduced = self.reduced.keys().map(|f| (f.as_str(), Category::Reduced));
        allowed.chain(generalized).chain(noised).chain(reduced)
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty() && self.generalized.is_empty() && self.noised.is_empty() && self.reduced.is_empty()
    }

    /// Parses a single purpose object (`{"name": ..., "allowed": [...], ...}`).
    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let raw: RawPurpose = serde_json::from_str(text).map_err(PolicyError::from_json)?;
        raw.validate()
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, PolicyError> {
        let raw: RawPurpose = serde_json::from_value(value).map_err(PolicyError::from_json)?;
        raw.validate()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(RawPurpose::from(self)).expect("purpose rule serializes")
    }
}

pub struct PurposeRuleBuilder {
    raw: RawPurpose,
}

impl PurposeRuleBuilder {
    pub fn allow(mut self, field: impl Into<String>) -> Self {
        self.raw.allowed.push(field.into());
        self
    }

    pub fn generalize(mut self, field: impl Into<String>, param: f64) -> Self {
        self.raw.generalized.insert(field.into(), param);
        self
    }

    pub fn noise(mut self, field: impl Into<String>, spec: NoiseSpec) -> Self {
        self.raw.noised.insert(field.into(), RawNoise::from(&spec));
        self
    }

    pub fn reduce(mut self, field: impl Into<String>, param: f64) -> Self {
        self.raw.reduced.insert(field.into(), param);
        self
    }

    pub fn build(self) -> Result<PurposeRule, PolicyError> {
        self.raw.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Allowed,
    Generalized,
    Noised,
    Reduced,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Allowed => "allowed",
            Category::Generalized => "generalized",
            Category::Noised => "noised",
            Category::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServicePolicy {
    name: String,
    purposes: Vec<PurposeRule>,
}

impl ServicePolicy {
    pub fn new(name: impl Into<String>, purposes: Vec<PurposeRule>) -> Result<Self, PolicyError> {
        let name = name.into();
        if name.is_empty() {
            return Err(PolicyError::Schema("service name must not be empty".into()));
        }
        let mut seen = HashSet::new();
        for purpose in &purposes {
            if !seen.insert(purpose.purpose.as_str()) {
                return Err(PolicyError::Schema(format!(
                    "duplicate purpose `{}` in service `{name}`",
                    purpose.purpose
                )));
            }
        }
        Ok(ServicePolicy { name, purposes })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn purposes(&self) -> &[PurposeRule] {
        &self.purposes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDocument {
    services: Vec<ServicePolicy>,
}

impl PolicyDocument {
    pub fn new(services: Vec<ServicePolicy>) -> Result<Self, PolicyError> {
        if services.is_empty() {
            return Err(PolicyError::Schema("policy must list at least one service".into()));
        }
        let mut seen = HashSet::new();
        for service in &services {
            if !seen.insert(service.name.as_str()) {
                return Err(PolicyError::Schema(format!("duplicate service `{}`", service.name)));
            }
        }
        Ok(PolicyDocument { services })
    }

    pub fn services(&self) -> &[ServicePolicy] {
        &self.services
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawDocument::from(self)).expect("policy serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&RawDocument::from(self)).expect("policy serializes")
    }
}

impl std::str::FromStr for PolicyDocument {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_policy(s)
    }
}

/// Parses and validates a policy document.
pub fn parse_policy(document: &str) -> Result<PolicyDocument, PolicyError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(PolicyError::from_json)?;
    let services = raw
        .services
        .into_iter()
        .map(|service| {
            let purposes = service.purposes.into_iter().map(RawPurpose::validate).collect::<Result<Vec<_>, _>>()?;
            ServicePolicy::new(service.name, purposes)
        })
        .collect::<Result<Vec<_>, _>>()?;
    PolicyDocument::new(services)
}

/// Resolves the rule for a (service, purpose) pair.
pub fn lookup_rule<'a>(doc: &'a PolicyDocument, service: &str, purpose: &str) -> Result<&'a PurposeRule, PolicyError> {
    let svc = doc
        .services
        .iter()
        .find(|s| s.name == service)
        .ok_or_else(|| PolicyError::ServiceNotFound(service.to_owned()))?;
    svc.purposes
        .iter()
        .find(|p| p.purpose == purpose)
        .ok_or_else(|| PolicyError::PurposeNotFound { service: service.to_owned(), purpose: purpose.to_owned() })
}

/// Kind of a top-level message field, as seen by the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Integer,
    UnsignedInteger,
    Float,
    String,
    Bool,
    Bytes,
    Enum,
    Nested,
    Repeated,
}

impl FieldKind {
    /// Kinds the minimization transforms operate on.
    pub fn is_scalar(&self) -> bool {
        matches!(self, FieldKind::Integer | FieldKind::UnsignedInteger | FieldKind::Float | FieldKind::String)
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FieldKind::Integer => "integer",
            FieldKind::UnsignedInteger => "unsigned-integer",
            FieldKind::Float => "float",
            FieldKind::String => "string",
            FieldKind::Bool => "bool",
            FieldKind::Bytes => "bytes",
            FieldKind::Enum => "enum",
            FieldKind::Nested => "nested",
            FieldKind::Repeated => "repeated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldInfo {
    pub name: String,
    pub kind: FieldKind,
}

impl FieldInfo {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        FieldInfo { name: name.into(), kind }
    }
}

/// Parses a field catalog: `{"fields": [{"name": "age", "kind": "integer"}, ...]}`.
pub fn parse_field_catalog(text: &str) -> Result<Vec<FieldInfo>, PolicyError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct RawCatalog {
        fields: Vec<FieldInfo>,
    }
    let raw: RawCatalog = serde_json::from_str(text).map_err(PolicyError::from_json)?;
    let mut seen = HashSet::new();
    for field in &raw.fields {
        if !seen.insert(field.name.as_str()) {
            return Err(PolicyError::Schema(format!("duplicate catalog field `{}`", field.name)));
        }
    }
    Ok(raw.fields)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The rule names a field the message does not have.
    UnknownField { field: String, category: Category },
    /// A minimizer is applied to a kind it cannot transform; the field is suppressed.
    UnsupportedKind { field: String, kind: FieldKind, category: Category },
    /// Noising a string field suppresses it.
    NoisedString { field: String },
    /// Integer and string transforms take whole-number parameters; the field is suppressed.
    NonIntegralParam { field: String, kind: FieldKind, category: Category, param: f64 },
    /// The field is not mentioned by the rule and will be suppressed.
    DefaultSuppressed { field: String },
}

impl Warning {
    pub fn field(&self) -> &str {
        match self {
            Warning::UnknownField { field, .. }
            | Warning::UnsupportedKind { field, .. }
            | Warning::NoisedString { field }
            | Warning::NonIntegralParam { field, .. }
            | Warning::DefaultSuppressed { field } => field,
        }
    }

    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            Warning::UnknownField { .. } => "unknown-field",
            Warning::UnsupportedKind { .. } => "unsupported-kind",
            Warning::NoisedString { .. } => "noised-string",
            Warning::NonIntegralParam { .. } => "non-integral-param",
            Warning::DefaultSuppressed { .. } => "default-suppressed",
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnknownField { field, category } => {
                write!(f, "field `{field}` listed under `{category}` does not exist in the schema")
            }
            Warning::UnsupportedKind { field, kind, category } => write!(
                f,
                "field `{field}` of kind {kind} cannot be {category}; it will be suppressed"
            ),
            Warning::NoisedString { field } => {
                write!(f, "field `{field}` is a string; noising it suppresses it to an empty string")
            }
            Warning::NonIntegralParam {
                field,
                kind,
                category,
                param,
            } => write!(
                f,
                "field `{field}` of kind {kind} is {category} with non-integral parameter {param}; it will be suppressed"
            ),
            Warning::DefaultSuppressed { field } => {
                write!(f, "field `{field}` is not mentioned by the rule and will be suppressed")
            }
        }
    }
}

/// Lints a rule against the top-level fields of a message schema.
pub fn validate_against_schema(rule: &PurposeRule, field_catalog: &[FieldInfo]) -> Vec<Warning> {
    let kinds: BTreeMap<&str, FieldKind> = field_catalog.iter().map(|f| (f.name.as_str(), f.kind)).collect();
    let mut warnings = Vec::new();

    for (field, category) in rule.mentioned_fields() {
        let Some(&kind) = kinds.get(field) else {
            warnings.push(Warning::UnknownField { field: field.to_owned(), category });
            continue;
        };
        if category == Category::Allowed {
            continue;
        }
        if !kind.is_scalar() {
            warnings.push(Warning::UnsupportedKind { field: field.to_owned(), kind, category });
            continue;
        }
        let param = match category {
            Category::Generalized => rule.generalized[field],
            Category::Reduced => rule.reduced[field],
            _ => {
                if kind == FieldKind::String {
                    warnings.push(Warning::NoisedString { field: field.to_owned() });
                }
                continue;
            }
        };
        if kind != FieldKind::Float && param.fract() != 0.0 {
            warnings.push(Warning::NonIntegralParam { field: field.to_owned(), kind, category, param });
        }
    }

    for info in field_catalog {
        if rule.category_of(&info.name).is_none() {
            warnings.push(Warning::DefaultSuppressed { field: info.name.clone() });
        }
    }
    warnings
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    services: Vec<RawService>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawService {
    name: String,
    purposes: Vec<RawPurpose>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPurpose {
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    allowed: Vec<String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    generalized: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    noised: IndexMap<String, RawNoise>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    reduced: IndexMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawMechanism {
    Laplace,
    Gaussian,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    mechanism: RawMechanism,
    epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitivity: Option<f64>,
}

impl RawNoise {
    fn validate(&self, field: &str) -> Result<NoiseSpec, PolicyError> {
        let sensitivity = self.sensitivity.unwrap_or(NoiseSpec::DEFAULT_SENSITIVITY);
        let mechanism = match (self.mechanism, self.delta) {
            (RawMechanism::Laplace, None) => NoiseMechanism::Laplace,
            (RawMechanism::Laplace, Some(_)) => {
                return Err(PolicyError::Param(format!(
                    "noised field `{field}`: delta is only meaningful for the gaussian mechanism"
                )))
            }
            (RawMechanism::Gaussian, Some(delta)) => NoiseMechanism::Gaussian { delta },
            (RawMechanism::Gaussian, None) => {
                return Err(PolicyError::Param(format!(
                    "noised field `{field}`: the gaussian mechanism requires delta"
                )))
            }
        };
        NoiseSpec::new(mechanism, self.epsilon, sensitivity).map_err(|err| match err {
            PolicyError::Param(msg) => PolicyError::Param(format!("noised field `{field}`: {msg}")),
            other => other,
        })
    }
}

impl From<&NoiseSpec> for RawNoise {
    fn from(spec: &NoiseSpec) -> Self {
        let (mechanism, delta) = match spec.mechanism {
            NoiseMechanism::Laplace => (RawMechanism::Laplace, None),
            NoiseMechanism::Gaussian { delta } => (RawMechanism::Gaussian, Some(delta)),
        };
        RawNoise { mechanism, epsilon: spec.epsilon, delta, sensitivity: Some(spec.sensitivity) }
    }
}

fn check_param(purpose: &str, category: Category, field: &str, param: f64) -> Result<f64, PolicyError> {
    if param.is_finite() && param > 0.0 {
        Ok(param)
    } else {
        Err(PolicyError::Param(format!(
            "purpose `{purpose}`: {category} field `{field}` needs a positive parameter, got {param}"
        )))
    }
}

impl RawPurpose {
    fn validate(self) -> Result<PurposeRule, PolicyError> {
        let purpose = self.name;
        if purpose.is_empty() {
            return Err(PolicyError::Schema("purpose name must not be empty".into()));
        }

        let mut seen: BTreeMap<String, Category> = BTreeMap::new();
        let mut claim = |field: &str, category: Category| -> Result<(), PolicyError> {
            if field.is_empty() {
                return Err(PolicyError::Schema(format!("purpose `{purpose}`: empty field name under `{category}`")));
            }
            match seen.get(field) {
                Some(&first) if first == category => Err(PolicyError::Schema(format!(
                    "purpose `{purpose}`: field `{field}` listed twice under `{category}`"
                ))),
                Some(&first) => Err(PolicyError::Conflict {
                    purpose: purpose.clone(),
                    field: field.to_owned(),
                    first: first.as_str(),
                    second: category.as_str(),
                }),
                None => {
                    seen.insert(field.to_owned(), category);
                    Ok(())
                }
            }
        };

        for field in &self.allowed {
            claim(field, Category::Allowed)?;
        }
        for field in self.generalized.keys() {
            claim(field, Category::Generalized)?;
        }
        for field in self.noised.keys() {
            claim(field, Category::Noised)?;
        }
        for field in self.reduced.keys() {
            claim(field, Category::Reduced)?;
        }

        let generalized = self
            .generalized
            .into_iter()
            .map(|(f, p)| check_param(&purpose, Category::Generalized, &f, p).map(|p| (f, p)))
            .collect::<Result<_, _>>()?;
        let reduced = self
            .reduced
            .into_iter()
            .map(|(f, p)| check_param(&purpose, Category::Reduced, &f, p).map(|p| (f, p)))
            .collect::<Result<_, _>>()?;
        let noised =
            self.noised.into_iter().map(|(f, n)| n.validate(&f).map(|spec| (f, spec))).collect::<Result<_, _>>()?;

        Ok(PurposeRule { purpose, allowed: self.allowed.into_iter().collect(), generalized, noised, reduced })
    }
}

impl From<&PurposeRule> for RawPurpose {
    fn from(rule: &PurposeRule) -> Self {
        RawPurpose {
            name: rule.purpose.clone(),
            allowed: rule.allowed.iter().cloned().collect(),
            generalized: rule.generalized.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            noised: rule.noised.iter().map(|(k, v)| (k.clone(), RawNoise::from(v))).collect(),
            reduced: rule.reduced.iter().map(|(k, v)| (k.clone(), *v)).collect(),
        }
    }
}

impl From<&PolicyDocument> for RawDocument {
    fn from(doc: &PolicyDocument) -> Self {
        RawDocument {
            services: doc
                .services
                .iter()
                .map(|s| RawService {
                    name: s.name.clone(),
                    purposes: s.purposes.iter().map(RawPurpose::from).collect(),
                })
                .collect(),
        }
    }
}
