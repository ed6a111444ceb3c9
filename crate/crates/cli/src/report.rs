//! Reports printed by every command, as JSON or as flattened `key = value` text.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Bumped whenever a report field is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Certified,
    Denied,
    Violation,
    AssumptionFailed,
    InputError,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success | Outcome::Certified => 0,
            Outcome::Denied | Outcome::Violation => 1,
            Outcome::AssumptionFailed => 2,
            Outcome::InputError => 3,
            Outcome::Inconclusive => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub exit_code: i32,
    #[serde(default)]
    pub certificates: Vec<Value>,
    #[serde(default)]
    pub results: Map<String, Value>,
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default)]
    pub messages: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config: &str, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: config.into(),
            seed,
            outcome: Outcome::Success,
            exit_code: 0,
            certificates: Vec::new(),
            results: Map::new(),
            files: Vec::new(),
            messages: Vec::new(),
        }
    }

    pub fn set_outcome(&mut self, outcome: Outcome) {
        self.outcome = outcome;
        self.exit_code = outcome.exit_code();
    }

    /// Keeps the more severe of the current and the given outcome.
    pub fn escalate(&mut self, outcome: Outcome) {
        let rank = |o: Outcome| match o {
            Outcome::Success | Outcome::Certified => 0,
            Outcome::Inconclusive => 1,
            Outcome::Denied | Outcome::Violation => 2,
            Outcome::AssumptionFailed => 3,
            Outcome::InputError => 4,
        };
        if rank(outcome) > rank(self.outcome) {
            self.set_outcome(outcome);
        }
    }

    pub fn put(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One `path = value` line per leaf, with numbers printed exactly as in the JSON rendering.
    pub fn to_text(&self) -> String {
        let v = serde_json::to_value(self).expect("report serializes");
        let mut out = String::new();
        flatten("", &v, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, x) in m {
                let p = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&p, x, out);
            }
        }
        Value::Array(a) if !a.is_empty() => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::String(s) => out.push_str(&format!("{prefix} = {s}\n")),
        other => out.push_str(&format!("{prefix} = {other}\n")),
    }
}
