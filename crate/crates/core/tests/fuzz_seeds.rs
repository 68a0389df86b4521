//! The fuzz corpus seeds should stay well-formed as the file formats evolve,
//! otherwise fuzzing starts from inputs that bounce off the first check.

use std::fs;
use std::path::PathBuf;

use flexneeds::measurement::{parse_measurements, parse_timestamp};
use flexneeds::reduction::ReductionMapping;
use flexneeds::scenario::ScenarioMeta;
use flexneeds::{FlexKind, FlexNeeds, LoadProfile, NetworkModel, RunConfig, ScenarioSet};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn network_seeds() {
    for (name, data) in seeds("network_json") {
        let parsed = NetworkModel::from_json(text(&data));
        // One seed exercises the per-phase rejection path.
        assert_eq!(parsed.is_ok(), name != "three_phase.json", "{name}");
    }
}

#[test]
fn csv_seeds() {
    for (name, data) in seeds("measurement_csv") {
        let r = parse_measurements(data.as_slice(), None);
        assert!(r.is_ok(), "{name}: {:?}", r.err());
    }
    for (name, data) in seeds("load_csv") {
        assert!(LoadProfile::read_csv(data.as_slice()).is_ok(), "{name}");
    }
    for (name, data) in seeds("scenario_csv") {
        assert!(
            ScenarioSet::read_csv(data.as_slice(), None).is_ok(),
            "{name}"
        );
    }
    for (name, data) in seeds("flex_csv") {
        // First byte picks the kind, as in the fuzz target.
        let kind = if data[0] & 1 == 0 {
            FlexKind::Predicted
        } else {
            FlexKind::Actual
        };
        assert!(FlexNeeds::read_csv(&data[1..], kind).is_ok(), "{name}");
    }
}

#[test]
fn json_sidecar_seeds() {
    for (name, data) in seeds("run_config") {
        assert!(serde_json::from_slice::<RunConfig>(&data).is_ok(), "{name}");
    }
    for (name, data) in seeds("scenario_meta") {
        assert!(
            serde_json::from_slice::<ScenarioMeta>(&data).is_ok(),
            "{name}"
        );
    }
    for (name, data) in seeds("reduction_mapping") {
        assert!(
            serde_json::from_slice::<ReductionMapping>(&data).is_ok(),
            "{name}"
        );
    }
}

#[test]
fn timestamp_seeds() {
    for (name, data) in seeds("timestamp") {
        assert!(parse_timestamp(text(&data)).is_some(), "{name}");
    }
}
