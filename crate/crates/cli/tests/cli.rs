use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fna(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fna"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TWO_BUS: &str = r#"{
  "base_power_kva": 100.0,
  "buses": [
    {"id": "n0", "nominal_voltage": 230.0, "v_min_pu": 0.9, "v_max_pu": 1.1, "has_load": false, "has_generation": false},
    {"id": "n1", "nominal_voltage": 230.0, "v_min_pu": 0.9, "v_max_pu": 1.1, "has_load": true, "has_generation": false}
  ],
  "branches": [
    {"id": "l", "from_bus": "n0", "to_bus": "n1", "r": 0.001, "x": 0.0005, "rating": 17.391304347826086, "loading_limit_fraction": 1.0}
  ],
  "transformer": {"id": "t", "rating": 100.0, "loading_limit_fraction": 1.0, "secondary_bus": "n0"},
  "measurements": [{"id": "m", "branch_id": "l", "measured_quantities": ["P", "Q"]}]
}"#;

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = fna(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for sub in [
        "reduce",
        "measurements",
        "scenarios",
        "fna",
        "evaluate",
        "sweep",
        "demo",
        "powerflow",
    ] {
        assert!(stdout(&o).contains(sub), "help lists {sub}");
        assert_eq!(fna(&[sub, "--help"], dir.path()).status.code(), Some(0));
    }
    assert_eq!(fna(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        fna(&["fna", "--network", "x.json"], dir.path())
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn missing_measurement_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("net.json"), TWO_BUS).unwrap();
    let o = fna(
        &[
            "sweep",
            "--network",
            "net.json",
            "--measurements",
            "no_such_d2.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_d2.csv"), "{}", stderr(&o));
}

#[test]
fn malformed_network_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("net.json"), "{ not json").unwrap();
    let o = fna(&["reduce", "--network", "net.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error ["), "{}", stderr(&o));
}

#[test]
fn overload_dispatch_and_infeasibility_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("net.json"), TWO_BUS).unwrap();

    // 4 kVA limit, 6 kW load, no reactive flow: 2 kW up-flexibility.
    fs::write(
        p.join("ok.csv"),
        "scenario,timestep,bus,p_kw,q_kvar\n0,0,n1,6,0\n",
    )
    .unwrap();
    let o = fna(
        &[
            "fna",
            "--network",
            "net.json",
            "--scenarios",
            "ok.csv",
            "--risk",
            "0",
            "--out",
            "ok",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(p.join("ok/flex_pred_eps0.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("0,n1,")).unwrap();
    let up: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((up - 2.0).abs() < 1e-6, "{row}");

    // Reactive flow alone exceeds the limit: no active dispatch can help.
    fs::write(
        p.join("bad.csv"),
        "scenario,timestep,bus,p_kw,q_kvar\n0,0,n1,1,5\n",
    )
    .unwrap();
    let o = fna(
        &[
            "fna",
            "--network",
            "net.json",
            "--scenarios",
            "bad.csv",
            "--risk",
            "0",
            "--out",
            "bad",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("fna-opf"), "{}", stderr(&o));
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    flexneeds::fixtures::mfn().write(p.join("in")).unwrap();

    let o = fna(&["reduce", "--network", "in/network.json", "--out", "r"], p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Number of loads"));
    for f in [
        "reduced_network.json",
        "reduction_mapping.json",
        "size_report.txt",
    ] {
        assert!(p.join("r").join(f).exists(), "{f}");
    }

    let reduced = [
        "--reduced",
        "r/reduced_network.json",
        "--mapping",
        "r/reduction_mapping.json",
    ];
    let mut args = vec!["scenarios"];
    args.extend(reduced);
    args.extend([
        "--measurements",
        "in/measurements_d2.csv",
        "-S",
        "20",
        "--out",
        "s",
    ]);
    let o = fna(&args, p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = fna(
        &[
            "fna",
            "--network",
            "r/reduced_network.json",
            "--scenarios",
            "s/scenarios.csv",
            "--scenarios-meta",
            "s/scenarios_meta.json",
            "--risk",
            "0.1",
            "--risk",
            "0",
            "--out",
            "f",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(p.join("f/flex_pred_eps0.csv").exists());
    assert!(p.join("f/flex_pred_eps0.1.json").exists());

    let mut args = vec!["actual"];
    args.extend(reduced);
    args.extend([
        "--measurements",
        "in/measurements_demo.csv",
        "--out",
        "f/actual.csv",
    ]);
    let o = fna(&args, p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = fna(
        &[
            "evaluate",
            "--pred",
            "f/flex_pred_eps0.1.csv",
            "--actual",
            "f/actual.csv",
            "--out",
            "e",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("| S1 (%) |"));
    assert!(p.join("e/kpi.json").exists());

    let mut args = vec!["measurements"];
    args.extend(reduced);
    args.extend([
        "--measurements",
        "in/measurements_d2.csv",
        "--out",
        "mean.csv",
    ]);
    assert_eq!(fna(&args, p).status.code(), Some(0));
    let o = fna(
        &[
            "powerflow",
            "--network",
            "r/reduced_network.json",
            "--loads",
            "mean.csv",
            "--method",
            "linear",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("timestep,element,id,voltage_pu"));
    assert!(text.lines().any(|l| l.starts_with("23,")));
    let o = fna(
        &[
            "powerflow",
            "--network",
            "r/reduced_network.json",
            "--loads",
            "mean.csv",
            "--timestep",
            "99",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_config_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    flexneeds::fixtures::mfn().write(p.join("in")).unwrap();
    fs::write(
        p.join("run.json"),
        r#"{"network": "in/network.json", "measurements": "in/measurements_d2.csv",
            "realized": "in/measurements_demo.csv", "output_dir": "from-config",
            "scenarios": 30, "risk_levels": [0.0, 0.5]}"#,
    )
    .unwrap();
    let o = fna(
        &[
            "sweep",
            "--config",
            "run.json",
            "--out",
            "from-flag",
            "--seed",
            "7",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!p.join("from-config").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("from-flag/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["scenarios"], 30);
    assert!(p.join("from-flag/flex_pred_eps0.5.csv").exists());
    assert!(p.join("from-flag/kpi_table.md").exists());
}

#[test]
fn demo_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let a = fna(&["demo", "--fixture", "mfn", "--out", "a"], p);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(stdout(&a).contains("| S3 (kW) |"));
    let b = fna(
        &["demo", "--fixture", "mfn", "--out", "b", "--workers", "3"],
        p,
    );
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    for entry in fs::read_dir(p.join("a/mfn")).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy();
        if name.ends_with(".csv") || name.ends_with(".md") || name == "kpi.json" {
            let x = fs::read(p.join("a/mfn").join(&*name)).unwrap();
            let y = fs::read(p.join("b/mfn").join(&*name)).unwrap();
            assert!(x == y, "{name} differs");
        }
    }
}
