//! Bundled example scenarios.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scenario::{Scenario, ScenarioSpec};

/// Names of the bundled scenarios.
pub const NAMES: [&str; 7] = [
    "mirror",
    "cone",
    "line",
    "teardrop",
    "trivial",
    "mirror_conformal",
    "cone_conformal",
];

/// Raw JSON of a bundled scenario.
pub fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "mirror" => include_str!("../fixtures/mirror.json"),
        "cone" => include_str!("../fixtures/cone.json"),
        "line" => include_str!("../fixtures/line.json"),
        "teardrop" => include_str!("../fixtures/teardrop.json"),
        "trivial" => include_str!("../fixtures/trivial.json"),
        "mirror_conformal" => include_str!("../fixtures/mirror_conformal.json"),
        "cone_conformal" => include_str!("../fixtures/cone_conformal.json"),
        _ => return None,
    })
}

pub fn spec(name: &str) -> Result<ScenarioSpec> {
    let text = source(name).ok_or_else(|| Error::Config(format!("no bundled scenario `{name}`")))?;
    ScenarioSpec::from_json(text)
}

pub fn load<T: Scalar>(name: &str) -> Result<Scenario<T>> {
    Scenario::build(spec(name)?)
}
