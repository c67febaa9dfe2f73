use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::checklist::Requirement;
use super::TestManagerError;
use crate::classifier::{ClassifierConfig, DetectorNoise};
use crate::driver::DriverSpec;
use crate::scenario::SimConfig;

/// One fully resolved test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseConfig {
    pub tc_index: u32,
    /// Simulation configuration after merging defaults and overrides.
    pub sim: SimConfig,
    pub driver: DriverSpec,
    pub seed: u64,
    pub detector_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub name: String,
    pub defaults: SimConfig,
    pub cases: Vec<TestCaseConfig>,
    pub pass_criteria: BTreeMap<u8, Requirement>,
    pub classifier: ClassifierConfig,
    pub detector_noise: DetectorNoise,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    name: String,
    #[serde(default)]
    defaults: Value,
    cases: Vec<Value>,
    #[serde(default)]
    pass_criteria: BTreeMap<String, Value>,
    #[serde(default)]
    classifier: Option<Value>,
    #[serde(default)]
    detector_noise: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    tc_index: u32,
    #[serde(default)]
    sim_overrides: Value,
    driver: DriverSpec,
    seed: u64,
    detector_seed: u64,
}

/// Recursively merges `patch` into `base`; objects merge key by key and any
/// other value replaces the base value.
fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (_, Value::Null) => {}
        (slot, p) => *slot = p.clone(),
    }
}

fn resolve_sim(
    base: &Value,
    patch: &Value,
    context: &str,
    errors: &mut Vec<String>,
) -> Option<SimConfig> {
    if !(patch.is_object() || patch.is_null()) {
        errors.push(format!("{context}: must be an object"));
        return None;
    }
    let mut merged = base.clone();
    merge(&mut merged, patch);
    match serde_json::from_value::<SimConfig>(merged) {
        Ok(sim) => {
            if let Err(list) = sim.validate() {
                errors.extend(list.into_iter().map(|e| format!("{context}: {e}")));
            }
            Some(sim)
        }
        Err(e) => {
            errors.push(format!("{context}: {e}"));
            None
        }
    }
}

/// Parses and validates a series document. All problems are collected and
/// reported together.
pub fn parse_series(text: &str) -> Result<SeriesConfig, TestManagerError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| TestManagerError::Parse(e.to_string()))?;
    let raw: RawSeries = serde_json::from_value(doc)
        .map_err(|e| TestManagerError::Validation(vec![e.to_string()]))?;
    let mut errors = Vec::new();

    let builtin = serde_json::to_value(SimConfig::default()).expect("defaults serialize");
    let defaults = resolve_sim(&builtin, &raw.defaults, "defaults", &mut errors);
    let mut base = builtin;
    merge(&mut base, &raw.defaults);

    let sub = |value: Option<Value>, name: &str, errors: &mut Vec<String>| -> Option<Value> {
        value.and_then(|v| {
            if v.is_object() {
                Some(v)
            } else {
                errors.push(format!("{name}: must be an object"));
                None
            }
        })
    };
    let classifier = match sub(raw.classifier, "classifier", &mut errors) {
        None => ClassifierConfig::default(),
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errors.push(format!("classifier: {e}"));
            ClassifierConfig::default()
        }),
    };
    let detector_noise = match sub(raw.detector_noise, "detector_noise", &mut errors) {
        None => DetectorNoise::default(),
        Some(v) => serde_json::from_value(v).unwrap_or_else(|e| {
            errors.push(format!("detector_noise: {e}"));
            DetectorNoise::default()
        }),
    };
    if !(detector_noise.sigma_t >= 0.0 && detector_noise.sigma_swa >= 0.0) {
        errors.push("detector_noise: standard deviations must be >= 0".to_string());
    }

    let mut pass_criteria = BTreeMap::new();
    for (key, value) in raw.pass_criteria {
        let id = key
            .trim_start_matches(['Q', 'q'])
            .parse::<u8>()
            .ok()
            .filter(|id| (1..=10).contains(id));
        let requirement = serde_json::from_value::<Requirement>(value.clone()).ok();
        match (id, requirement) {
            (Some(id), Some(r)) => {
                pass_criteria.insert(id, r);
            }
            (None, _) => errors.push(format!(
                "pass_criteria: unknown question id `{key}` (expected 1-10)"
            )),
            (_, None) => errors.push(format!(
                "pass_criteria.{key}: expected \"YES\", \"NO\" or \"ANY\", got {value}"
            )),
        }
    }

    if raw.cases.is_empty() {
        errors.push("cases: a series needs at least one case".to_string());
    }
    let mut seen = BTreeSet::new();
    let mut cases = Vec::new();
    for (i, value) in raw.cases.into_iter().enumerate() {
        let context = format!("cases[{i}]");
        let case: RawCase = match serde_json::from_value(value) {
            Ok(c) => c,
            Err(e) => {
                errors.push(format!("{context}: {e}"));
                continue;
            }
        };
        if !seen.insert(case.tc_index) {
            errors.push(format!("{context}: duplicate tc_index {}", case.tc_index));
        }
        if let Err(e) = case.driver.validate() {
            errors.push(format!("{context}.driver: {e}"));
        }
        let sim = resolve_sim(
            &base,
            &case.sim_overrides,
            &format!("{context}.sim_overrides"),
            &mut errors,
        );
        if let Some(sim) = sim {
            cases.push(TestCaseConfig {
                tc_index: case.tc_index,
                sim,
                driver: case.driver,
                seed: case.seed,
                detector_seed: case.detector_seed,
            });
        }
    }

    match (errors.is_empty(), defaults) {
        (true, Some(defaults)) => Ok(SeriesConfig {
            name: raw.name,
            defaults,
            cases,
            pass_criteria,
            classifier,
            detector_noise,
        }),
        _ => Err(TestManagerError::Validation(errors)),
    }
}

/// Deep-merges a partial configuration object onto `base` and validates the
/// result.
pub fn apply_overrides(base: &SimConfig, overrides: &Value) -> Result<SimConfig, Vec<String>> {
    let base = serde_json::to_value(base).expect("config serializes");
    let mut errors = Vec::new();
    match resolve_sim(&base, overrides, "config", &mut errors) {
        Some(sim) if errors.is_empty() => Ok(sim),
        _ => Err(errors),
    }
}

/// Parses a partial simulation configuration; missing keys take the
/// built-in defaults.
pub fn parse_sim_config(text: &str) -> Result<SimConfig, TestManagerError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| TestManagerError::Parse(e.to_string()))?;
    apply_overrides(&SimConfig::default(), &value).map_err(TestManagerError::Validation)
}

pub fn load_series(path: &Path) -> Result<SeriesConfig, TestManagerError> {
    let text = std::fs::read_to_string(path).map_err(|e| TestManagerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_series(&text)
}
