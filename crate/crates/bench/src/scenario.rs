use std::fmt;
use std::str::FromStr;

use fieldguard_core::policy::PurposeRuleBuilder;
use fieldguard_core::{FieldKind, FlatMessage, NoiseSpec, PolicyDocument, PurposeRule, ReflectMessage, ServicePolicy};
use fieldguard_demo::{Variant, Wiring, SERVICE_NAME};
use serde::{Deserialize, Serialize};

/// The six measured configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// No interceptor, no token.
    Baseline,
    /// An interceptor that forwards the response unchanged.
    NoOp,
    /// Enforcing, with an empty rule: every field is suppressed.
    AllDenied,
    /// Enforcing, every field allowed.
    AllAllowed,
    /// Enforcing, even-numbered fields allowed and the rest minimized.
    Mixed,
    /// Enforcing, every field minimized.
    Maximized,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Baseline,
        ScenarioKind::NoOp,
        ScenarioKind::AllDenied,
        ScenarioKind::AllAllowed,
        ScenarioKind::Mixed,
        ScenarioKind::Maximized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Baseline => "baseline",
            ScenarioKind::NoOp => "no-op",
            ScenarioKind::AllDenied => "all-denied",
            ScenarioKind::AllAllowed => "all-allowed",
            ScenarioKind::Mixed => "mixed",
            ScenarioKind::Maximized => "maximized",
        }
    }

    pub fn wiring(self) -> Wiring {
        match self {
            ScenarioKind::Baseline => Wiring::Baseline,
            ScenarioKind::NoOp => Wiring::NoOp,
            _ => Wiring::Enforcing,
        }
    }

    /// The purpose whose token the clients send, if any.
    pub fn purpose(self) -> Option<&'static str> {
        match self.wiring() {
            Wiring::Enforcing => Some(self.name()),
            _ => None,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.to_ascii_lowercase().replace('_', "-");
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == wanted || k.name().replace('-', "") == wanted)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// One cell of the matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub variant: Variant,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, variant: Variant) -> Self {
        Scenario { kind, variant }
    }

    /// All six kinds crossed with all three sizes.
    pub fn full_matrix() -> Vec<Scenario> {
        let mut cells = Vec::new();
        for kind in ScenarioKind::ALL {
            for variant in Variant::ALL {
                cells.push(Scenario::new(kind, variant));
            }
        }
        cells
    }
}

const BUCKET: f64 = 10.0;
const PREFIX: f64 = 3.0;

#[derive(Clone, Copy)]
enum Minimizer {
    Generalize,
    Noise,
    Reduce,
}

/// Numbers cycle through generalize, noise and reduce; strings, which
/// noising would only suppress, alternate between generalize and reduce.
fn minimizer_for(kind: FieldKind, nth: usize) -> Minimizer {
    if kind == FieldKind::String {
        [Minimizer::Generalize, Minimizer::Reduce][nth % 2]
    } else {
        [Minimizer::Generalize, Minimizer::Noise, Minimizer::Reduce][nth % 3]
    }
}

fn add_minimized(rule: PurposeRuleBuilder, name: &str, kind: FieldKind, nth: usize) -> PurposeRuleBuilder {
    let param = if kind == FieldKind::String { PREFIX } else { BUCKET };
    match minimizer_for(kind, nth) {
        Minimizer::Generalize => rule.generalize(name, param),
        Minimizer::Reduce => rule.reduce(name, param),
        Minimizer::Noise => rule.noise(name, NoiseSpec::laplace(1.0, 1.0).expect("valid noise")),
    }
}

/// The rule a scenario's token carries, written against the 52-field
/// message; the smaller messages use a prefix of its fields.
pub fn scenario_rule(kind: ScenarioKind) -> Option<PurposeRule> {
    let purpose = kind.purpose()?;
    let fixture = FlatMessage::from_json(serde_json::from_str(Variant::F52.fixture_json()).expect("valid fixture"))
        .expect("flat fixture");
    let mut rule = PurposeRule::builder(purpose);
    let mut minimized = 0;
    for (idx, field) in fixture.fields().into_iter().enumerate() {
        match kind {
            ScenarioKind::AllDenied => {}
            ScenarioKind::AllAllowed => rule = rule.allow(field.name),
            ScenarioKind::Mixed if idx % 2 == 0 => rule = rule.allow(field.name),
            _ => {
                rule = add_minimized(rule, &field.name, field.kind, minimized);
                minimized += 1;
            }
        }
    }
    Some(rule.build().expect("scenario rules are consistent"))
}

/// A policy with one purpose per enforcing scenario.
pub fn bench_policy() -> PolicyDocument {
    let purposes = ScenarioKind::ALL.into_iter().filter_map(scenario_rule).collect();
    let service = ServicePolicy::new(SERVICE_NAME, purposes).expect("distinct purposes");
    PolicyDocument::new(vec![service]).expect("one service")
}
