#![allow(dead_code)]

use std::path::PathBuf;

use hypodb::workspace::{HypothesisSpec, Workspace};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn spec(model: &str, name: &str, upsilon: u64) -> HypothesisSpec {
    HypothesisSpec {
        name: name.into(),
        upsilon: Some(upsilon),
        structure: read(model),
        ..Default::default()
    }
}

/// φ=1 with Hill (28), Adair (31) and Dash (32), one trial each, and the
/// surrogate observation set.
pub fn judy_workspace(root: &std::path::Path) -> Workspace {
    let mut ws = Workspace::init(root).unwrap();
    ws.register_phenomenon("Hemoglobin oxygen saturation", None)
        .unwrap();
    for (model, name, u, trial) in [
        ("hill.model", "HbO.Hill", 28, "hill_trial.csv"),
        ("adair.model", "HbO.Adair", 31, "adair_trial.csv"),
        ("dash.model", "HbO.Dash", 32, "dash_trial.csv"),
    ] {
        ws.register_hypothesis(&spec(model, name, u)).unwrap();
        ws.load_trial(1, u, read(trial).as_bytes()).unwrap();
    }
    ws.load_observations(
        1,
        read("obs_surrogate.csv").as_bytes(),
        &["pO2".to_string()],
        "surrogate",
    )
    .unwrap();
    ws
}
