//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Lines are written straight to stdout so they show up without
//! `--nocapture`. A criterion listed in `UNATTAINABLE` is reported as FAIL
//! like any other, but only breaks the run if it unexpectedly passes.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flexneeds::fixtures::{self, random_light_loads, random_radial, Fixture};
use flexneeds::kpi::{confusion_counts, kpi_s1, kpi_s2, kpi_s3, STANDARD_RISK_LEVELS};
use flexneeds::loads::LoadProfile;
use flexneeds::measurement::load_measurements;
use flexneeds::network::{Branch, Bus, NetworkDocument, Transformer};
use flexneeds::opf::{
    aggregate_chance_constrained, corrected_dni, solve_timestep, FlexKind, OpfOptions,
};
use flexneeds::pipeline::{predict, prepare_profile, run_pipeline, RunConfig};
use flexneeds::powerflow::detect_dni_at;
use flexneeds::reduction::NetworkSize;
use flexneeds::{
    generate_scenarios, linearized_flow, load_network, reduce_network, sweep_flow, FlexNeeds,
    NetworkModel, RatingRule, S3,
};

/// (criterion, reason) pairs that cannot pass with a connected radial model.
const UNATTAINABLE: &[(u32, &str)] = &[(
    1,
    "32 branches over 38 buses leaves 6 buses without a branch; no connected tree has that shape",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// 1. Reduction fidelity on the shipped fixtures.
fn reduction_fidelity() -> Outcome {
    let targets = [("mfn", (32, 38, 25)), ("mlq", (40, 40, 30))];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, (br, nodes, loads)) in targets {
        let clock = Instant::now();
        let full = load_network(shipped(name).join("network.json")).unwrap();
        let red = reduce_network(&full, RatingRule::Max).unwrap();
        let secs = clock.elapsed().as_secs_f64();
        let size = NetworkSize::of(&red.net);
        let worst = red
            .net
            .branches()
            .iter()
            .flat_map(|b| {
                let parts = &red.branch_map[&b.id];
                let sum = |f: fn(&Branch) -> f64| -> f64 {
                    parts
                        .iter()
                        .map(|id| f(&full.branches()[full.branch_index(id).unwrap()]))
                        .sum()
                };
                [rel(b.r, sum(|o| o.r)), rel(b.x, sum(|o| o.x))]
            })
            .fold(0.0, f64::max);
        let ok_size = (size.branches, size.nodes, size.loads) == (br, nodes, loads);
        pass &= ok_size && worst <= 1e-12 && secs < 1.0;
        notes.push(format!(
            "{name} {}/{}/{} (want {br}/{nodes}/{loads}), impedance err {worst:.1e}, {secs:.3}s",
            size.branches, size.nodes, size.loads
        ));
    }
    outcome(pass, notes.join("; "))
}

// 2. Linearized flow against the AC sweep on light random loads.
fn oracle_equivalence() -> Outcome {
    let clock = Instant::now();
    let (mut dv, mut df) = (0.0f64, 0.0f64);
    for seed in 0..50u64 {
        let n = 2 + (seed as usize * 7) % 39;
        let net = random_radial(seed, n);
        let (p, q) = random_light_loads(&net, seed, 0.2);
        let lin = linearized_flow(&net, &p, &q);
        let ac = sweep_flow(&net, &p, &q, 1e-10, 100);
        for b in 0..n {
            dv = dv.max((lin.voltage_pu[b] - ac.voltage_pu[b]).abs());
        }
        for k in 0..net.branch_count() {
            let scale = ac.s_kva[k].max(1e-3 * net.branch_limit_kva(k));
            df = df.max((lin.s_kva[k] - ac.s_kva[k]).abs() / scale);
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(
        dv <= 0.005 && df <= 0.02 && secs < 10.0,
        format!(
            "max |dv| {dv:.2e} pu, max flow err {:.3}%, {secs:.2}s",
            100.0 * df
        ),
    )
}

fn bus(id: &str, flexible: bool) -> Bus {
    Bus {
        id: id.into(),
        nominal_voltage: 230.0,
        v_min_pu: 0.95,
        v_max_pu: 1.05,
        has_load: flexible,
        has_generation: false,
    }
}

fn two_bus() -> NetworkModel {
    let doc = NetworkDocument {
        base_power_kva: 100.0,
        buses: vec![bus("n0", false), bus("n1", true)],
        branches: vec![Branch {
            id: "l".into(),
            from_bus: "n0".into(),
            to_bus: "n1".into(),
            r: 0.001,
            x: 0.0005,
            rating: 4000.0 / 230.0,
            loading_limit_fraction: 1.0,
        }],
        transformer: Transformer {
            id: "t".into(),
            rating: 100.0,
            loading_limit_fraction: 1.0,
            secondary_bus: "n0".into(),
        },
        measurements: Vec::new(),
    };
    NetworkModel::from_document(doc).unwrap()
}

/// Five-bus tree with a single flexible bus at its deepest point and a load
/// there large enough to overload its path.
fn five_bus_case(seed: u64) -> (NetworkModel, Vec<f64>, Vec<f64>, usize) {
    let base = random_radial(seed, 5);
    let deepest = (0..5).max_by_key(|&b| (base.depth(b), b)).unwrap();
    let mut doc = base.into_document();
    let stretch = if seed.is_multiple_of(2) { 1.0 } else { 12.0 };
    for (i, b) in doc.buses.iter_mut().enumerate() {
        b.has_load = i == deepest;
        b.has_generation = false;
    }
    for br in &mut doc.branches {
        br.r *= stretch;
        br.x *= stretch;
    }
    let net = NetworkModel::from_document(doc).unwrap();
    let (mut p, mut q) = random_light_loads(&net, seed, 0.3);
    let tightest = net
        .path_to(deepest)
        .iter()
        .map(|&k| net.branch_limit_kva(k))
        .fold(f64::INFINITY, f64::min);
    p[deepest] += tightest * (1.1 + 0.1 * (seed % 5) as f64);
    q[deepest] += 0.1 * tightest;
    (net, p, q, deepest)
}

fn brute_force(net: &NetworkModel, p: &[f64], q: &[f64], bus: usize) -> Option<f64> {
    let feasible = |f: f64| {
        let mut pp = p.to_vec();
        pp[bus] -= f;
        detect_dni_at(&linearized_flow(net, &pp, q), net, 0, 1e-9).is_empty()
    };
    let reach = p.iter().map(|v| v.abs()).sum::<f64>() + 100.0;
    let steps = (reach / 0.01) as i64;
    (0..=steps).find_map(|k| {
        let f = k as f64 * 0.01;
        (feasible(f) || feasible(-f)).then_some(f)
    })
}

// 3. LP optimum on hand and brute-forced cases.
fn lp_correctness() -> Outcome {
    let net = two_bus();
    let s = solve_timestep(&net, &[0.0, 6.0], &[0.0, 0.0], &OpfOptions::default()).unwrap();
    let hand = s.flex.as_ref().map(|f| f[1]).unwrap_or(f64::NAN);
    let mut pass = (hand - 2.0).abs() <= 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (net, p, q, b) = five_bus_case(seed);
        let lp = solve_timestep(&net, &p, &q, &OpfOptions::default()).unwrap();
        match (lp.flex.is_some(), brute_force(&net, &p, &q, b)) {
            (true, Some(best)) => worst = worst.max((lp.objective - best).abs()),
            (false, None) => {}
            _ => pass = false,
        }
    }
    pass &= worst <= 0.02;
    outcome(
        pass,
        format!("2-bus flex {hand:.9} kW; 20 cases max |LP - grid| {worst:.4} kW"),
    )
}

fn mean_profile(
    fx: &Fixture,
    dir: &Path,
) -> (NetworkModel, flexneeds::ReducedNetwork, LoadProfile) {
    fx.write(dir).unwrap();
    let full = load_network(dir.join("network.json")).unwrap();
    let red = reduce_network(&full, RatingRule::Max).unwrap();
    let d2 = load_measurements(dir.join("measurements_d2.csv"), Some(&full)).unwrap();
    let (_, mean, _) = prepare_profile(&d2, &red, 0.95, 60).unwrap();
    (full, red, mean)
}

// 4. Discarding and in-model coverage of retained scenarios.
fn chance_constraint() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for fx in [fixtures::mlq(), fixtures::mfn()] {
        let name = fx.name;
        let (_, red, mean) = mean_profile(&fx, &tmp.path().join(name));
        let cfg = RunConfig {
            scenarios: 200,
            workers: 4,
            ..RunConfig::default()
        };
        let (set, solves) = predict(&red, &mean, &cfg).unwrap();
        let ids: Vec<String> = red.net.buses().iter().map(|b| b.id.clone()).collect();
        let (needs, meta) = aggregate_chance_constrained(&solves, 0.25, &ids).unwrap();
        let discarded_ok =
            meta.discarded_per_timestep == 50 && meta.retained.iter().all(|r| r.len() == 150);
        let mut checked = 0;
        let mut violations = 0;
        for (t, retained) in meta.retained.iter().enumerate() {
            for &s in retained {
                let loads = set.scenario(s).to_bus_loads(&red.net).unwrap();
                checked += 1;
                match &solves[s].steps[t].flex {
                    Some(own) => {
                        let dni = corrected_dni(&red.net, &loads.p[t], &loads.q[t], own, &needs, t);
                        violations += usize::from(!dni.is_empty());
                    }
                    None => violations += 1,
                }
            }
        }
        pass &= discarded_ok && violations == 0;
        notes.push(format!(
            "{name}: discarded {}/200 per step, {checked} retained checks, {violations} uncovered",
            meta.discarded_per_timestep
        ));
    }
    outcome(pass, notes.join("; "))
}

fn demo_config(fx: &Fixture, dir: &Path, workers: usize) -> RunConfig {
    let input = dir.join("input");
    fx.write(&input).unwrap();
    RunConfig {
        network: Some(input.join("network.json")),
        measurements: Some(input.join("measurements_d2.csv")),
        realized: Some(input.join("measurements_demo.csv")),
        output_dir: dir.join("out"),
        workers,
        ..RunConfig::default()
    }
}

// 5. KPIs over the standard risk grid.
fn risk_monotonicity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for fx in [fixtures::mlq(), fixtures::mfn()] {
        let name = fx.name;
        let cfg = demo_config(&fx, &tmp.path().join(name), 4);
        let reports = run_pipeline(&cfg).unwrap().reports;
        let mono = reports.windows(2).all(|w| {
            let ok = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => b <= a,
                (None, None) => true,
                _ => false,
            };
            ok(w[0].s1, w[1].s1) && ok(w[0].s2, w[1].s2) && w[1].s3.value() <= w[0].s3.value()
        });
        pass &= mono && reports.len() == STANDARD_RISK_LEVELS.len();
        let s3: Vec<String> = reports
            .iter()
            .map(|r| format!("{:.0}", r.s3.value()))
            .collect();
        notes.push(format!("{name} monotone {mono}, S3 [{}]", s3.join(" ")));
        let at = |eps: f64| reports.iter().find(|r| r.risk_level == Some(eps)).unwrap();
        match name {
            "mfn" => {
                let zero_from = STANDARD_RISK_LEVELS.iter().find(|&&e| {
                    reports
                        .iter()
                        .filter(|r| r.risk_level >= Some(e))
                        .all(|r| r.s3.value() == 0.0)
                });
                let ok = reports
                    .iter()
                    .filter(|r| r.risk_level >= Some(0.25))
                    .all(|r| r.s3 == S3::Kw(0.0))
                    && at(0.0).s3.value() > 0.0;
                pass &= ok;
                notes.push(format!("mfn S3 zero from eps {:?}", zero_from));
            }
            _ => {
                let ok = at(0.7).s3.value() < 0.0;
                pass &= ok;
                notes.push(format!("mlq S3 at eps 0.7 = {:.1}%", at(0.7).s3.value()));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn grid(values: &[&[f64]], kind: FlexKind) -> FlexNeeds {
    let ids = (0..values[0].len()).map(|b| format!("b{b}")).collect();
    let rows: Vec<Vec<f64>> = values.iter().map(|r| r.to_vec()).collect();
    FlexNeeds::from_signed(kind, ids, &rows)
}

// 6. Hand-computed KPI values.
fn kpi_formulas() -> Outcome {
    use FlexKind::{Actual, Predicted};
    struct Case {
        pred: FlexNeeds,
        act: FlexNeeds,
        s1: Option<f64>,
        s2: Option<f64>,
        s3: S3,
        confusion: Option<[usize; 4]>,
    }
    let case = |p: &[&[f64]], a: &[&[f64]], s1, s2, s3, confusion| Case {
        pred: grid(p, Predicted),
        act: grid(a, Actual),
        s1,
        s2,
        s3,
        confusion,
    };
    let mut pair = grid(&[&[0.0]], Predicted);
    pair.up[0][0] = 1.0;
    pair.down[0][0] = 3.0;
    let cases = vec![
        case(
            &[&[2.0, 0.0], &[0.0, 1.0]],
            &[&[2.0, 0.0], &[0.0, 1.0]],
            Some(100.0),
            Some(0.0),
            S3::Percent(0.0),
            Some([2, 0, 0, 2]),
        ),
        case(
            &[&[3.0]],
            &[&[2.0]],
            Some(100.0),
            Some(1.0),
            S3::Percent(50.0),
            None,
        ),
        case(
            &[&[1.0]],
            &[&[2.0]],
            Some(0.0),
            Some(-1.0),
            S3::Percent(-50.0),
            None,
        ),
        case(
            &[&[1.5, 0.0], &[0.0, 2.5]],
            &[&[0.0, 0.0], &[0.0, 0.0]],
            None,
            None,
            S3::Kw(4.0),
            Some([0, 2, 0, 2]),
        ),
        case(
            &[&[0.0, 0.0]],
            &[&[0.0, 0.0]],
            None,
            None,
            S3::Kw(0.0),
            Some([0, 0, 0, 2]),
        ),
        case(
            &[&[-3.0]],
            &[&[2.0]],
            Some(100.0),
            Some(1.0),
            S3::Percent(50.0),
            None,
        ),
        case(
            &[&[1.0, 2.0], &[0.5, 4.0]],
            &[&[1.0, 1.0], &[1.0, 1.0]],
            Some(75.0),
            Some(3.5),
            S3::Percent(87.5),
            None,
        ),
        case(
            &[&[2.0, 4.0]],
            &[&[2.0, 0.0]],
            Some(100.0),
            Some(0.0),
            S3::Percent(200.0),
            Some([1, 1, 0, 0]),
        ),
        Case {
            pred: pair,
            act: grid(&[&[-2.5]], Actual),
            s1: Some(100.0),
            s2: Some(0.5),
            s3: S3::Percent(20.0),
            confusion: Some([1, 0, 0, 0]),
        },
        case(
            &[&[0.0], &[0.75], &[0.25]],
            &[&[0.25], &[0.5], &[0.0]],
            Some(50.0),
            Some(0.0),
            S3::Percent(100.0 * 0.25 / 0.75),
            Some([1, 1, 1, 0]),
        ),
    ];
    let mut bad = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let got = (
            kpi_s1(&c.pred, &c.act).unwrap(),
            kpi_s2(&c.pred, &c.act).unwrap(),
            kpi_s3(&c.pred, &c.act).unwrap(),
        );
        let mut ok = got == (c.s1, c.s2, c.s3);
        if let Some([tp, fp, fn_, tn]) = c.confusion {
            let m = confusion_counts(&c.pred, &c.act, 0.1).unwrap();
            ok &= (m.tp, m.fp, m.fn_, m.tn) == (tp, fp, fn_, tn);
        }
        if !ok {
            bad.push(format!("grid {i}: got {got:?}"));
        }
    }
    let n = cases.len();
    if bad.is_empty() {
        outcome(true, format!("{n} grids exact, 2 with undefined S1/S2"))
    } else {
        outcome(false, bad.join("; "))
    }
}

fn read_dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let e = e.unwrap();
            e.file_type().unwrap().is_file().then(|| {
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
        })
        .collect()
}

/// Manifest without wall-clock timings and, optionally, the worker count.
fn manifest_core(bytes: &[u8], drop_workers: bool) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    let obj = v.as_object_mut().unwrap();
    obj.remove("timings_s");
    if drop_workers {
        obj["config"].as_object_mut().unwrap().remove("workers");
    }
    // Output paths are relative file names already; the config holds absolute ones.
    for key in ["network", "measurements", "realized", "output_dir"] {
        obj["config"].as_object_mut().unwrap().remove(key);
    }
    v
}

// 7. Reproducibility of full runs.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixtures::mlq();
    let runs: Vec<_> = [("a", 1), ("b", 1), ("c", 4)]
        .iter()
        .map(|&(tag, workers)| {
            let cfg = demo_config(&fx, &tmp.path().join(tag), workers);
            run_pipeline(&cfg).unwrap();
            read_dir_files(&cfg.output_dir)
        })
        .collect();
    let mut diffs = Vec::new();
    for (other, drop_workers) in [(1, false), (2, true)] {
        if runs[0].keys().ne(runs[other].keys()) {
            diffs.push(format!("run {other}: different file set"));
            continue;
        }
        for (name, bytes) in &runs[0] {
            let same = if name == "manifest.json" {
                manifest_core(bytes, drop_workers)
                    == manifest_core(&runs[other][name], drop_workers)
            } else {
                *bytes == runs[other][name]
            };
            if !same {
                diffs.push(format!("run {other}: {name}"));
            }
        }
    }
    outcome(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!(
                "{} files identical across repeat and 1 vs 4 workers (manifest timings excluded)",
                runs[0].len()
            )
        } else {
            diffs.join(", ")
        },
    )
}

// 8. Scenario statistics at S = 100 000.
fn scenario_statistics() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, mean) = mean_profile(&fixtures::mfn(), tmp.path());
    let full_set = generate_scenarios(&mean, 0.3, 2, 1).unwrap();
    let exact0 = full_set.p[0] == mean.p && full_set.q[0] == mean.q;
    // Three aggregated buses over the whole day keep memory modest.
    let sub = LoadProfile {
        bus_ids: mean.bus_ids[..3].to_vec(),
        p: mean.p.iter().map(|r| r[..3].to_vec()).collect(),
        q: mean.q.iter().map(|r| r[..3].to_vec()).collect(),
    };
    let n = 100_000;
    let set = generate_scenarios(&sub, 0.3, n, 2024).unwrap();
    let exact0 = exact0 && set.p[0] == sub.p;
    let mut worst = 0.0f64;
    let mut cells = 0;
    for t in 0..sub.timesteps() {
        for l in 0..sub.points() {
            let m = sub.p[t][l];
            let target = 0.3 * m.abs();
            let values = (0..n).map(|s| set.p[s][t][l]);
            let avg = values.clone().sum::<f64>() / n as f64;
            let var = values.map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if target == 0.0 {
                worst = worst.max(if sd == 0.0 { 0.0 } else { f64::INFINITY });
            } else {
                worst = worst.max((sd - target).abs() / target);
            }
            cells += 1;
        }
    }
    outcome(
        exact0 && worst <= 0.02,
        format!(
            "{cells} cells, worst std deviation from target {:.3}%, scenario 0 exact {exact0}",
            100.0 * worst
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        (1, "reduction fidelity", reduction_fidelity),
        (2, "linearized vs sweep oracle", oracle_equivalence),
        (3, "LP correctness", lp_correctness),
        (4, "chance-constraint semantics", chance_constraint),
        (5, "risk monotonicity and KPI patterns", risk_monotonicity),
        (6, "KPI hand values", kpi_formulas),
        (7, "determinism", determinism),
        (8, "scenario statistics", scenario_statistics),
    ];
    let mut out = std::io::stdout().lock();
    let mut broken = Vec::new();
    for (id, name, run) in criteria {
        let r = run();
        let known = UNATTAINABLE.iter().find(|(c, _)| *c == id);
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {id} {verdict}: {name}: {}", r.detail).unwrap();
        match (r.pass, known) {
            (false, Some((_, why))) => writeln!(out, "    unattainable: {why}").unwrap(),
            (true, Some(_)) => broken.push(format!("{id} passes but is listed as unattainable")),
            (false, None) => broken.push(format!("{id} failed")),
            (true, None) => {}
        }
    }
    out.flush().unwrap();
    assert!(broken.is_empty(), "{}", broken.join("; "));
}
