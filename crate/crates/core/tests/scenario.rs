use orbidiff::fixtures;
use orbidiff::orbifold::ChartId;
use orbidiff::scenario::{Scenario, ScenarioSpec};
use orbidiff::{Error, Scenario32, Scenario64};
use serde_json::{json, Value};

fn mirror_json() -> Value {
    serde_json::from_str(fixtures::source("mirror").unwrap()).unwrap()
}

fn load(v: &Value) -> orbidiff::error::Result<Scenario64> {
    Scenario::from_json(&serde_json::to_string_pretty(v).unwrap())
}

fn config_message(r: orbidiff::error::Result<Scenario64>) -> String {
    match r {
        Err(Error::Config(m)) => m,
        other => panic!("expected a config error, got {:?}", other.map(|s| s.name().to_string())),
    }
}

#[test]
fn every_bundled_fixture_round_trips() {
    for name in [
        "mirror",
        "mirror_conformal",
        "cone",
        "cone_conformal",
        "line",
        "teardrop",
        "trivial",
    ] {
        let spec = fixtures::spec(name).unwrap();
        assert_eq!(ScenarioSpec::from_json(&spec.to_json()).unwrap(), spec, "{name}");
        let s: Scenario64 = fixtures::load(name).unwrap();
        assert_eq!(s.name(), name);
    }
    assert!(fixtures::source("nonexistent").is_none());
}

#[test]
fn single_precision_scenarios() {
    let s: Scenario32 = fixtures::load("mirror").unwrap();
    let v = s.section("sigma").unwrap().eval(ChartId(0), &[1.0f32, 1.0]).unwrap();
    assert!((v[0] - 0.04).abs() < 1e-6 && (v[1] + 0.03).abs() < 1e-6);
}

#[test]
fn type_errors_report_line_column_and_path() {
    let text = fixtures::source("mirror")
        .unwrap()
        .replacen("\"radius\": 10.0", "\"radius\": \"ten\"", 1);
    let msg = config_message(Scenario::from_json(&text));
    assert!(msg.contains("line 15") && msg.contains("column"), "{msg}");
    assert!(msg.contains("atlas.charts[0].region"), "{msg}");
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v = mirror_json();
    v["commands"]["stepsize"] = json!(0.1);
    let msg = config_message(load(&v));
    assert!(msg.contains("stepsize"), "{msg}");
}

#[test]
fn unknown_chart_keys_are_rejected() {
    let mut v = mirror_json();
    v["fields"]["sigma"]["charts"]["V"] = v["fields"]["sigma"]["charts"]["*"].clone();
    let msg = config_message(load(&v));
    assert!(msg.contains("unknown chart `V`"), "{msg}");
}

#[test]
fn wildcard_is_the_fallback() {
    let mut v: Value = serde_json::from_str(fixtures::source("teardrop").unwrap()).unwrap();
    v["fields"] = json!({
        "z": {"charts": {"*": {"kind": "zero"}}},
        "missing": {"charts": {"A": {"kind": "zero"}}}
    });
    v["curves"] = json!({});
    v["maps"] = json!({});
    v["commands"] = json!({});
    let msg = config_message(load(&v));
    assert!(msg.contains("no field for chart `B`"), "{msg}");
    v["fields"].as_object_mut().unwrap().remove("missing");
    let s = load(&v).unwrap();
    assert!(s.section("z").unwrap().is_zero());
}

#[test]
fn commands_must_refer_to_known_names() {
    let mut v = mirror_json();
    v["commands"]["evolve"]["curve"] = json!("nope");
    assert!(config_message(load(&v)).contains("unknown curve `nope`"));
    let mut v = mirror_json();
    v["commands"]["equivariance"]["map"] = json!("nope");
    assert!(config_message(load(&v)).contains("unknown map `nope`"));
    let mut v = mirror_json();
    v["commands"]["step"] = json!(-1.0);
    assert!(config_message(load(&v)).contains("step"));
}

#[test]
fn sections_that_break_symmetry_are_invalid() {
    let mut v = mirror_json();
    v["fields"]["sigma"]["charts"]["*"] = json!({"kind": "constant", "vector": [0.1, 0.0]});
    assert!(matches!(load(&v), Err(Error::Validation(_))));
}
