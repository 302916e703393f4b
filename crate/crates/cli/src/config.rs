//! Experiment configuration: one JSON document per run.

use degenlab_core::bvp::ProblemKind;
use degenlab_core::checks::Profile;
use degenlab_core::coefficients::CoefficientSpec;
use degenlab_core::operators::Composition;
use degenlab_core::quadratic::ReplayOptions;
use degenlab_core::weights::WeightSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Weight,
    Corona,
    Spec,
    Qest,
    Bvp,
    Replay,
    Suite,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Weight => "weight",
            CommandName::Corona => "corona",
            CommandName::Spec => "spec",
            CommandName::Qest => "qest",
            CommandName::Bvp => "bvp",
            CommandName::Replay => "replay",
            CommandName::Suite => "suite",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Settings shared by every command.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub format: Format,
}

fn identity_weight() -> WeightSpec {
    WeightSpec::identity()
}

fn identity_b() -> CoefficientSpec {
    CoefficientSpec::Identity
}

fn db() -> Composition {
    Composition::DB
}

/// `{command: weight, kind: ...}`: the weight parameters sit at the top
/// level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightConfig {
    #[serde(flatten)]
    pub weight: WeightSpec,
    #[serde(default = "WeightConfig::default_depth")]
    pub depth: u32,
    #[serde(default = "WeightConfig::default_samples")]
    pub samples: usize,
}

impl WeightConfig {
    fn default_depth() -> u32 {
        10
    }
    fn default_samples() -> usize {
        256
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoronaConfig {
    #[serde(default = "identity_weight")]
    pub weight: WeightSpec,
    pub sigma_w: f64,
    #[serde(default = "CoronaConfig::default_depth")]
    pub depth: u32,
}

impl CoronaConfig {
    fn default_depth() -> u32 {
        10
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    #[serde(default = "identity_weight", alias = "w")]
    pub weight: WeightSpec,
    #[serde(default = "identity_b", rename = "B")]
    pub b: CoefficientSpec,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "db")]
    pub composition: Composition,
    #[serde(default = "SpecConfig::default_samples")]
    pub samples: usize,
}

impl SpecConfig {
    fn default_samples() -> usize {
        8
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QestConfig {
    #[serde(default = "identity_weight", alias = "w")]
    pub weight: WeightSpec,
    #[serde(default = "identity_b", rename = "B")]
    pub b: CoefficientSpec,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "QestConfig::default_probes")]
    pub probes: usize,
}

impl QestConfig {
    fn default_probes() -> usize {
        32
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpConfig {
    #[serde(default = "identity_weight", alias = "w")]
    pub weight: WeightSpec,
    /// Coefficients A/w of the divergence-form equation.
    #[serde(default = "identity_b", rename = "A_over_w")]
    pub a_over_w: CoefficientSpec,
    #[serde(rename = "N")]
    pub n: usize,
    pub problem: ProblemKind,
    #[serde(default = "BvpConfig::default_modes")]
    pub modes: usize,
    /// Also compare with the finite-difference solver (A = wI·(A/w) on a
    /// strip of height `tmax`).
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "BvpConfig::default_tmax")]
    pub tmax: f64,
}

impl BvpConfig {
    fn default_modes() -> usize {
        4
    }
    fn default_tmax() -> f64 {
        4.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    #[serde(default = "identity_weight", alias = "w")]
    pub weight: WeightSpec,
    #[serde(default = "identity_b", rename = "B")]
    pub b: CoefficientSpec,
    #[serde(rename = "N")]
    pub n: usize,
    /// Root cube [level, index] of the replay.
    #[serde(default)]
    pub root: [u64; 2],
    #[serde(default = "ReplayConfig::default_calibration")]
    pub calibration_samples: usize,
    #[serde(default)]
    pub options: Option<ReplayOptions>,
}

impl ReplayConfig {
    fn default_calibration() -> usize {
        8
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "SuiteConfig::default_profile")]
    pub profile: Profile,
    /// Subset of criterion ids; all when empty.
    #[serde(default)]
    pub criteria: Vec<u32>,
}

impl SuiteConfig {
    fn default_profile() -> Profile {
        Profile::Smoke
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum CommandConfig {
    Weight(WeightConfig),
    Corona(CoronaConfig),
    Spec(SpecConfig),
    Qest(QestConfig),
    Bvp(BvpConfig),
    Replay(ReplayConfig),
    Suite(SuiteConfig),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: CommandName,
    pub common: Common,
    pub params: CommandConfig,
    /// The document as read, echoed into the manifest.
    pub raw: Value,
}

/// Invalid configuration, with the offending field when known.
#[derive(Debug)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "invalid config: field `{field}`: {}", self.message),
            None => write!(f, "invalid config: {}", self.message),
        }
    }
}

fn err(field: Option<&str>, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.map(str::to_owned), message: message.into() }
}

fn typed<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, ConfigError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        let inner = e.into_inner().to_string();
        // serde names missing and unknown fields only in the message
        let named = field.or_else(|| {
            inner.split('`').nth(1).map(str::to_owned).filter(|_| inner.contains("field"))
        });
        ConfigError { field: named, message: inner }
    })
}

impl ExperimentConfig {
    /// Parses a config document. `expected` is the command named on the
    /// command line; the document may omit `command` or must agree with it.
    pub fn parse(text: &str, expected: CommandName) -> Result<Self, ConfigError> {
        let raw: Value = serde_json::from_str(text)
            .map_err(|e| err(None, format!("malformed JSON at line {} column {}: {e}", e.line(), e.column())))?;
        let Value::Object(mut map) = raw.clone() else {
            return Err(err(None, "the config must be a JSON object"));
        };
        let command = match map.remove("command") {
            None => expected,
            Some(v) => {
                let c: CommandName = serde_json::from_value(v).map_err(|e| err(Some("command"), e.to_string()))?;
                if c != expected {
                    return Err(err(Some("command"), format!("config is for `{}`, invoked as `{}`", c.as_str(), expected.as_str())));
                }
                c
            }
        };
        let mut common_map = serde_json::Map::new();
        for key in ["seed", "output", "format"] {
            if let Some(v) = map.remove(key) {
                common_map.insert(key.to_owned(), v);
            }
        }
        let common: Common = typed(Value::Object(common_map))?;
        let rest = Value::Object(map);
        let params = match command {
            CommandName::Weight => {
                let w: WeightConfig = typed(rest)?;
                CommandConfig::Weight(w)
            }
            CommandName::Corona => CommandConfig::Corona(typed(rest)?),
            CommandName::Spec => CommandConfig::Spec(typed(rest)?),
            CommandName::Qest => CommandConfig::Qest(typed(rest)?),
            CommandName::Bvp => CommandConfig::Bvp(typed(rest)?),
            CommandName::Replay => CommandConfig::Replay(typed(rest)?),
            CommandName::Suite => CommandConfig::Suite(typed(rest)?),
        };
        Ok(ExperimentConfig { command, common, params, raw })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_weight_config() {
        let c = ExperimentConfig::parse(r#"{"command": "weight", "kind": "constant"}"#, CommandName::Weight).unwrap();
        match c.params {
            CommandConfig::Weight(w) => assert_eq!(w.weight, WeightSpec::Constant { value: 1.0 }),
            _ => panic!("wrong command"),
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = ExperimentConfig::parse(r#"{"command": "qest", "N": "many"}"#, CommandName::Qest).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("N"));
        let e = ExperimentConfig::parse(r#"{"command": "qest", "N": 64, "probs": 3}"#, CommandName::Qest).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("probs"));
        let e = ExperimentConfig::parse(r#"{"command": "qest"}"#, CommandName::Qest).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("N"));
        let e = ExperimentConfig::parse(r#"{"command": "spec", "N": 64}"#, CommandName::Qest).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("command"));
    }

    #[test]
    fn malformed_json_reports_position() {
        let e = ExperimentConfig::parse("{\"command\": \"qest\",\n \"N\": }", CommandName::Qest).unwrap_err();
        assert!(e.message.contains("line 2"), "{}", e.message);
    }
}
