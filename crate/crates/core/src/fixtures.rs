//! Deterministic synthetic networks and measurement days.
//!
//! Two demo-style fixtures mimic a PV-rich, lightly loaded feeder (`mfn`) and
//! a congested feeder with a current-only substation meter (`mlq`). Each is a
//! skeleton of aggregation buses and junctions whose edges expand into chains
//! of original lines, padded with unmeasured side subtrees. Measurements come
//! from exact power flows over the original network.
//!
//! Also home to the random radial networks used by property tests.

use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measurement::{write_measurements, MeasurementSeries, Sample};
use crate::network::{
    Branch, Bus, MeasurementLocation, NetworkDocument, NetworkModel, Quantity, Transformer,
};
use crate::powerflow::sweep_flow;

pub const NOMINAL_VOLTAGE: f64 = 230.0;
const STEPS_PER_DAY: usize = 96;
const LAGGING_RATIO: f64 = 0.328_684_105_873_079_2; // tan(acos(0.95))

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Residential,
    Evening,
    Morning,
    Commercial,
}

impl Shape {
    fn hourly(self) -> [f64; 24] {
        match self {
            Shape::Residential => [
                0.35, 0.30, 0.28, 0.27, 0.28, 0.35, 0.55, 0.70, 0.60, 0.50, 0.45, 0.45, 0.50, 0.45,
                0.42, 0.45, 0.55, 0.75, 0.95, 1.00, 0.90, 0.75, 0.60, 0.45,
            ],
            Shape::Evening => [
                0.30, 0.28, 0.25, 0.25, 0.25, 0.30, 0.45, 0.50, 0.40, 0.35, 0.35, 0.35, 0.38, 0.35,
                0.35, 0.40, 0.55, 0.80, 0.95, 1.00, 0.97, 0.85, 0.60, 0.40,
            ],
            Shape::Morning => [
                0.30, 0.30, 0.35, 0.40, 0.55, 0.75, 0.90, 1.00, 0.97, 0.92, 0.85, 0.70, 0.60, 0.50,
                0.45, 0.42, 0.42, 0.45, 0.50, 0.50, 0.45, 0.40, 0.35, 0.30,
            ],
            Shape::Commercial => [
                0.20, 0.20, 0.20, 0.20, 0.20, 0.25, 0.40, 0.70, 0.90, 1.00, 1.00, 0.95, 0.90, 0.95,
                1.00, 0.95, 0.85, 0.60, 0.40, 0.30, 0.25, 0.20, 0.20, 0.20,
            ],
        }
    }
}

const PV_SHAPE: [f64; 24] = [
    0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.08, 0.20, 0.36, 0.53, 0.68, 0.80, 0.87, 0.88, 0.83, 0.73,
    0.59, 0.43, 0.27, 0.13, 0.04, 0.0, 0.0, 0.0,
];

/// Quarter-hour value of an hourly shape, linear between hour midpoints.
fn quarter(shape: &[f64; 24], step: usize) -> f64 {
    let h = (step as f64 + 0.5) / 4.0 - 0.5;
    let lo = h.floor();
    let frac = h - lo;
    let a = shape[(lo as i64).rem_euclid(24) as usize];
    let b = shape[((lo as i64) + 1).rem_euclid(24) as usize];
    a + (b - a) * frac
}

#[derive(Debug, Clone)]
struct Node {
    parent: usize,
    /// Aggregation bus (measured) or plain junction.
    region: Option<Region>,
    /// Target Δ(v²) across the edge at the downstream consumption peak.
    drop: f64,
    /// Thermal limit in kVA; defaults to a multiple of the downstream peak.
    limit_kva: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Region {
    shape: Shape,
    peak_kw: f64,
    pv_kwp: f64,
}

fn agg(parent: usize, shape: Shape, peak_kw: f64, pv_kwp: f64) -> Node {
    Node {
        parent,
        region: Some(Region {
            shape,
            peak_kw,
            pv_kwp,
        }),
        drop: 0.004,
        limit_kva: None,
    }
}

fn junction(parent: usize) -> Node {
    Node {
        parent,
        region: None,
        drop: 0.004,
        limit_kva: None,
    }
}

struct Design {
    name: &'static str,
    seed: u64,
    n_buses: usize,
    n_loads: usize,
    /// Index 0 is the transformer secondary; index 1 the substation meter.
    nodes: Vec<Node>,
    transformer_kva: f64,
    /// Peak-to-limit headroom of unconstrained edges.
    headroom: f64,
    current_only_substation: bool,
    demo_load_scale: f64,
    demo_pv_scale: f64,
}

/// A generated fixture: original network plus D-2 and demo-day measurements.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub network: NetworkDocument,
    pub d2: Vec<MeasurementSeries>,
    pub demo: Vec<MeasurementSeries>,
}

impl Fixture {
    pub fn model(&self) -> Result<NetworkModel> {
        NetworkModel::from_document(self.network.clone())
    }

    /// Writes `network.json`, `measurements_d2.csv` and `measurements_demo.csv`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let net_path = dir.join("network.json");
        std::fs::write(&net_path, self.network.to_json() + "\n")
            .map_err(|e| Error::io(&net_path, e))?;
        for (file, series) in [
            ("measurements_d2.csv", &self.d2),
            ("measurements_demo.csv", &self.demo),
        ] {
            let path = dir.join(file);
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_measurements(series, f)?;
        }
        Ok(())
    }
}

pub fn d2_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 6, 10).expect("valid date")
}

pub fn demo_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 6, 12).expect("valid date")
}

fn build(design: &Design) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let nodes = &design.nodes;
    let k = nodes.len();

    // Downstream consumption peak per skeleton node (sizing only).
    let mut peak_below = vec![0.0; k];
    for i in (1..k).rev() {
        let own = nodes[i].region.map_or(0.0, |r| r.peak_kw.max(r.pv_kwp));
        peak_below[i] += own;
        let p = nodes[i].parent;
        if p != i {
            let v = peak_below[i];
            peak_below[p] += v;
        }
    }

    let bus = |id: String| Bus {
        id,
        nominal_voltage: NOMINAL_VOLTAGE,
        v_min_pu: 0.95,
        v_max_pu: 1.05,
        has_load: false,
        has_generation: false,
    };
    let mut buses = vec![bus("n000".into())];
    let mut parent_of: Vec<Option<usize>> = vec![None];
    let mut branches: Vec<Branch> = Vec::new();
    let mut skeleton_bus = vec![0usize; k];
    let mut measured_branch = vec![String::new(); k];

    let new_bus = |buses: &mut Vec<Bus>, parent_of: &mut Vec<Option<usize>>, parent: usize| {
        let idx = buses.len();
        buses.push(bus(format!("n{idx:03}")));
        parent_of.push(Some(parent));
        idx
    };

    // Chain lengths, with the substation edge kept to one line.
    let lengths: Vec<usize> = (0..k)
        .map(|i| if i <= 1 { 1 } else { rng.random_range(2..=8) })
        .collect();
    for i in 1..k {
        let node = &nodes[i];
        let from = skeleton_bus[node.parent];
        let p_peak = peak_below[i].max(1.0);
        let r_total = node.drop * NOMINAL_VOLTAGE * NOMINAL_VOLTAGE / (2000.0 * p_peak);
        let limit = node.limit_kva.unwrap_or(design.headroom * p_peak);
        let fraction = 0.4;
        let rating = limit * 1000.0 / (NOMINAL_VOLTAGE * fraction);
        let weights: Vec<f64> = (0..lengths[i])
            .map(|_| rng.random_range(0.5..1.5))
            .collect();
        let wsum: f64 = weights.iter().sum();
        let mut at = from;
        for w in &weights {
            let to = new_bus(&mut buses, &mut parent_of, at);
            let id = format!("l{:03}", branches.len() + 1);
            branches.push(Branch {
                id: id.clone(),
                from_bus: buses[at].id.clone(),
                to_bus: buses[to].id.clone(),
                r: r_total * w / wsum,
                x: 0.3 * r_total * w / wsum,
                rating,
                loading_limit_fraction: fraction,
            });
            measured_branch[i] = id;
            at = to;
        }
        skeleton_bus[i] = at;
    }

    // Side subtrees: one seed bus under every aggregation bus, the rest
    // anywhere below the substation meter.
    let side_line = |branches: &mut Vec<Branch>, buses: &[Bus], from: usize, to: usize| {
        let id = format!("l{:03}", branches.len() + 1);
        branches.push(Branch {
            id,
            from_bus: buses[from].id.clone(),
            to_bus: buses[to].id.clone(),
            r: 0.02,
            x: 0.006,
            rating: 120.0,
            loading_limit_fraction: 0.4,
        });
    };
    let mut load_buses = Vec::new();
    for i in 1..k {
        if nodes[i].region.is_some() {
            let to = new_bus(&mut buses, &mut parent_of, skeleton_bus[i]);
            side_line(&mut branches, &buses, skeleton_bus[i], to);
            load_buses.push(to);
        }
    }
    assert!(
        buses.len() <= design.n_buses,
        "{}: skeleton exceeds bus budget",
        design.name
    );
    while buses.len() < design.n_buses {
        let from = rng.random_range(skeleton_bus[1]..buses.len());
        let to = new_bus(&mut buses, &mut parent_of, from);
        side_line(&mut branches, &buses, from, to);
    }
    let candidates: Vec<usize> = (skeleton_bus[1]..buses.len())
        .filter(|b| !load_buses.contains(b))
        .collect();
    let mut candidates = candidates;
    while load_buses.len() < design.n_loads {
        let pick = rng.random_range(0..candidates.len());
        load_buses.push(candidates.swap_remove(pick));
    }
    load_buses.sort_unstable();

    // Region of each bus: nearest skeleton aggregation bus at or above it.
    let mut region_of: Vec<Option<usize>> = vec![None; buses.len()];
    let agg_node_of_bus =
        |b: usize| (1..k).find(|&i| skeleton_bus[i] == b && nodes[i].region.is_some());
    for b in 1..buses.len() {
        region_of[b] = match agg_node_of_bus(b) {
            Some(i) => Some(i),
            None => region_of[parent_of[b].expect("non-root")],
        };
    }

    // Split each region's peak and PV across its load buses.
    let mut cons_peak = vec![0.0; buses.len()];
    let mut pv_peak = vec![0.0; buses.len()];
    let mut shape_of = vec![Shape::Residential; buses.len()];
    let mut phase = vec![0.0; buses.len()];
    for i in 1..k {
        let Some(region) = nodes[i].region else {
            continue;
        };
        let members: Vec<usize> = load_buses
            .iter()
            .copied()
            .filter(|&b| region_of[b] == Some(i))
            .collect();
        let w: Vec<f64> = members.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let ws: f64 = w.iter().sum();
        for (m, wi) in members.iter().zip(&w) {
            cons_peak[*m] = region.peak_kw * wi / ws;
            shape_of[*m] = region.shape;
        }
        if region.pv_kwp > 0.0 {
            let pv_members: Vec<usize> = members.iter().copied().step_by(2).collect();
            let share = region.pv_kwp / pv_members.len() as f64;
            for m in pv_members {
                pv_peak[m] = share;
                buses[m].has_generation = true;
            }
        }
    }
    for &b in &load_buses {
        buses[b].has_load = true;
        phase[b] = rng.random_range(0.0..std::f64::consts::TAU);
    }

    let mut measurements = Vec::new();
    let mut meter_nodes = Vec::new();
    for i in 1..k {
        if nodes[i].region.is_some() {
            let current_only = i == 1 && design.current_only_substation;
            measurements.push(MeasurementLocation {
                id: format!("m{:02}", measurements.len()),
                branch_id: measured_branch[i].clone(),
                measured_quantities: if current_only {
                    vec![Quantity::IAbs]
                } else {
                    vec![Quantity::P, Quantity::Q]
                },
            });
            meter_nodes.push(i);
        }
    }

    let network = NetworkDocument {
        base_power_kva: 100.0,
        buses,
        branches,
        transformer: Transformer {
            id: format!("tr-{}", design.name),
            rating: design.transformer_kva,
            loading_limit_fraction: 0.5,
            secondary_bus: "n000".into(),
        },
        measurements,
    };
    let model =
        NetworkModel::from_document(network.clone()).expect("fixture is a valid radial network");

    let day = |date: NaiveDate, load_scale: f64, pv_scale: f64| -> Vec<MeasurementSeries> {
        let start = date.and_hms_opt(0, 0, 0).expect("midnight");
        let n = model.bus_count();
        let branch_idx: Vec<usize> = model
            .measurements()
            .iter()
            .map(|m| model.branch_index(&m.branch_id).expect("measured branch"))
            .collect();
        let mut samples: Vec<Vec<Sample>> =
            vec![Vec::with_capacity(STEPS_PER_DAY); branch_idx.len()];
        for step in 0..STEPS_PER_DAY {
            let mut p = vec![0.0; n];
            let mut q = vec![0.0; n];
            for b in 0..n {
                if cons_peak[b] == 0.0 && pv_peak[b] == 0.0 {
                    continue;
                }
                let ripple =
                    1.0 + 0.05 * (phase[b] + step as f64 * std::f64::consts::TAU / 24.0).sin();
                let cons =
                    load_scale * cons_peak[b] * quarter(&shape_of[b].hourly(), step) * ripple;
                let pv = pv_scale * pv_peak[b] * quarter(&PV_SHAPE, step);
                p[b] = cons - pv;
                q[b] = cons * LAGGING_RATIO;
            }
            let op = sweep_flow(&model, &p, &q, 1e-10, 100);
            assert!(op.converged, "fixture power flow must converge");
            let ts: NaiveDateTime = start + TimeDelta::minutes(15 * step as i64);
            for (m, &kb) in branch_idx.iter().enumerate() {
                let from = model.branch_from(kb);
                let v = op.voltage_pu[from] * NOMINAL_VOLTAGE;
                let current = op.s_kva[kb] * 1000.0 / v;
                let meter = &model.measurements()[m];
                let sample = if meter.measured_quantities == [Quantity::IAbs] {
                    Sample {
                        timestamp: ts,
                        p_kw: None,
                        q_kvar: None,
                        i_a: Some(round6(current)),
                    }
                } else {
                    Sample {
                        timestamp: ts,
                        p_kw: Some(round6(op.p_kw[kb])),
                        q_kvar: Some(round6(op.q_kvar[kb])),
                        i_a: Some(round6(current)),
                    }
                };
                samples[m].push(sample);
            }
        }
        model
            .measurements()
            .iter()
            .zip(samples)
            .map(|(m, s)| MeasurementSeries::new(m.id.clone(), s).expect("uniform fixture series"))
            .collect()
    };
    let d2 = day(d2_date(), 1.0, 1.0);
    let demo = day(demo_date(), design.demo_load_scale, design.demo_pv_scale);
    debug_assert_eq!(meter_nodes.len(), model.measurements().len());
    Fixture {
        name: design.name,
        network,
        d2,
        demo,
    }
}

/// Meter readings carry six decimals.
fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Congested feeder: 603 buses, 331 loads, 30 meters (current-only at the
/// substation); reduces to 40 buses. Two leaves overload, one in the evening
/// and one in the morning, and the demo day runs 5% above D-2.
pub fn mlq() -> Fixture {
    use Shape::*;
    let mut nodes = vec![junction(0)];
    let mut add = |n: Node| {
        nodes.push(n);
        nodes.len() - 1
    };
    let s = add(agg(0, Residential, 4.0, 0.0));
    let j1 = add(junction(s));
    let a1 = add(agg(j1, Residential, 8.0, 0.0));
    let a2 = add(agg(j1, Residential, 7.0, 0.0));
    let j2 = add(junction(a1));
    add(agg(j2, Residential, 6.0, 0.0));
    add(agg(j2, Commercial, 9.0, 0.0));
    let j3 = add(junction(s));
    let a5 = add(agg(j3, Residential, 8.0, 0.0));
    add(agg(j3, Residential, 6.5, 0.0));
    add(agg(j3, Commercial, 10.0, 0.0));
    let j4 = add(junction(a5));
    add(agg(j4, Residential, 5.0, 0.0));
    add(agg(j4, Residential, 7.5, 0.0));
    let j5 = add(junction(s));
    let a10 = add(agg(j5, Residential, 6.0, 0.0));
    let a11 = add(agg(j5, Residential, 7.0, 0.0));
    let j6 = add(junction(a10));
    add(agg(j6, Residential, 5.5, 0.0));
    add(agg(j6, Residential, 6.0, 0.0));
    add(agg(j6, Commercial, 8.0, 0.0));
    let j7 = add(junction(a11));
    add(agg(j7, Residential, 6.5, 0.0));
    let hot_morning = add(agg(j7, Morning, 10.0, 0.0));
    let j8 = add(junction(s));
    let a17 = add(agg(j8, Residential, 7.0, 0.0));
    let a18 = add(agg(j8, Residential, 6.0, 0.0));
    let a19 = add(agg(a17, Residential, 5.0, 0.0));
    add(agg(a19, Residential, 6.0, 0.0));
    let j9 = add(junction(a18));
    add(agg(j9, Residential, 5.5, 0.0));
    let a22 = add(agg(j9, Residential, 6.0, 0.0));
    add(agg(a22, Commercial, 7.0, 0.0));
    let a24 = add(agg(s, Residential, 7.0, 0.0));
    let a25 = add(agg(a24, Residential, 6.0, 0.0));
    let hot_evening = add(agg(a25, Evening, 12.0, 0.0));
    let a27 = add(agg(s, Residential, 8.0, 0.0));
    add(agg(a27, Residential, 6.0, 0.0));
    add(agg(a2, Residential, 5.0, 0.0));

    // Limits a little below the realized peaks of the two hot leaves.
    nodes[hot_evening].limit_kva = Some(MLQ_EVENING_LIMIT_KVA);
    nodes[hot_morning].limit_kva = Some(MLQ_MORNING_LIMIT_KVA);
    nodes[s].drop = 0.002;

    build(&Design {
        name: "mlq",
        seed: 94,
        n_buses: 603,
        n_loads: 331,
        nodes,
        transformer_kva: 630.0,
        headroom: 2.5,
        current_only_substation: true,
        demo_load_scale: 1.05,
        demo_pv_scale: 1.0,
    })
}

const MLQ_EVENING_LIMIT_KVA: f64 = 11.0;
const MLQ_MORNING_LIMIT_KVA: f64 = 9.0;

/// PV-rich, lightly loaded feeder: 561 buses, 222 loads, 25 meters; reduces
/// to 38 buses. One remote PV cluster can push its bus over the voltage band
/// around noon; the demo day is cloudier and quieter than D-2.
pub fn mfn() -> Fixture {
    use Shape::*;
    let mut nodes = vec![junction(0)];
    let mut add = |n: Node| {
        nodes.push(n);
        nodes.len() - 1
    };
    let s = add(agg(0, Residential, 3.0, 0.0));
    let j1 = add(junction(s));
    let j2 = add(junction(j1));
    add(agg(j2, Residential, 6.0, 4.0));
    add(agg(j2, Residential, 5.0, 3.0));
    let j3 = add(junction(j1));
    add(agg(j3, Residential, 5.5, 4.0));
    let a4 = add(agg(j3, Residential, 6.0, 2.0));
    let j4 = add(junction(a4));
    add(agg(j4, Residential, 4.0, 3.0));
    add(agg(j4, Commercial, 7.0, 5.0));
    let j5 = add(junction(s));
    let j6 = add(junction(j5));
    add(agg(j6, Residential, 5.0, 4.0));
    add(agg(j6, Residential, 4.5, 3.0));
    let j7 = add(junction(j5));
    add(agg(j7, Residential, 6.0, 3.0));
    let a10 = add(agg(j7, Residential, 5.0, 4.0));
    let j8 = add(junction(a10));
    add(agg(j8, Residential, 4.0, 2.0));
    add(agg(j8, Residential, 4.5, 3.0));
    let j9 = add(junction(s));
    let a13 = add(agg(j9, Residential, 5.0, 3.0));
    let j10 = add(junction(j9));
    add(agg(j10, Residential, 4.0, 3.0));
    add(agg(j10, Residential, 5.0, 4.0));
    let a16 = add(agg(a13, Residential, 4.0, 2.0));
    let pv_hot = add(agg(a16, Residential, 3.0, MFN_PV_KWP));
    let j11 = add(junction(s));
    let a18 = add(agg(j11, Residential, 5.0, 3.0));
    add(agg(j11, Commercial, 6.0, 4.0));
    let j12 = add(junction(a18));
    add(agg(j12, Residential, 4.0, 3.0));
    add(agg(j12, Residential, 4.5, 2.0));
    let a22 = add(agg(s, Residential, 5.0, 3.0));
    add(agg(a22, Residential, 4.0, 3.0));
    add(agg(s, Residential, 4.5, 3.0));

    nodes[pv_hot].drop = MFN_PV_DROP;
    nodes[a16].drop = 0.003;

    build(&Design {
        name: "mfn",
        seed: 4420,
        n_buses: 561,
        n_loads: 222,
        nodes,
        transformer_kva: 400.0,
        headroom: 3.0,
        current_only_substation: false,
        demo_load_scale: 0.9,
        demo_pv_scale: 0.9,
    })
}

const MFN_PV_KWP: f64 = 30.0;
const MFN_PV_DROP: f64 = 0.095;

/// Random radial network for property tests: `n_buses` buses at 230 V, each
/// non-root bus hanging off a uniformly chosen earlier bus. Every bus carries
/// a load; about a third also have generation.
pub fn random_radial(seed: u64, n_buses: usize) -> NetworkModel {
    assert!(n_buses >= 2, "need at least two buses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buses = Vec::with_capacity(n_buses);
    let mut branches = Vec::with_capacity(n_buses - 1);
    for i in 0..n_buses {
        buses.push(Bus {
            id: format!("b{i}"),
            nominal_voltage: NOMINAL_VOLTAGE,
            v_min_pu: 0.95,
            v_max_pu: 1.05,
            has_load: i > 0,
            has_generation: i > 0 && rng.random_bool(0.33),
        });
        if i > 0 {
            let parent = rng.random_range(0..i);
            // 10 to 60 m of 0.2 ohm/km cable.
            let r = rng.random_range(0.002..0.012);
            branches.push(Branch {
                id: format!("l{i}"),
                from_bus: format!("b{parent}"),
                to_bus: format!("b{i}"),
                r,
                x: r * rng.random_range(0.3..0.6),
                rating: rng.random_range(100.0..400.0),
                loading_limit_fraction: rng.random_range(0.4..=1.0),
            });
        }
    }
    let doc = NetworkDocument {
        base_power_kva: 100.0,
        buses,
        branches,
        transformer: Transformer {
            id: "tr".into(),
            rating: 400.0,
            loading_limit_fraction: 0.5,
            secondary_bus: "b0".into(),
        },
        measurements: Vec::new(),
    };
    NetworkModel::from_document(doc).expect("random tree is radial")
}

/// Per-bus loads whose accumulated branch flows stay within `fraction` of each
/// branch's thermal limit.
pub fn random_light_loads(net: &NetworkModel, seed: u64, fraction: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.bus_count();
    let mut p: Vec<f64> = (0..n)
        .map(|b| {
            if b == net.root() {
                0.0
            } else {
                rng.random_range(-0.5..1.0)
            }
        })
        .collect();
    let q: Vec<f64> = p
        .iter()
        .map(|v| v.abs() * rng.random_range(0.0..0.4))
        .collect();
    let mut q = q;
    // Scale everything so the most loaded branch sits at `fraction` of its limit.
    let pf = crate::powerflow::downstream_sums(net, &p);
    let qf = crate::powerflow::downstream_sums(net, &q);
    let worst = (0..net.branch_count())
        .map(|k| pf[k].hypot(qf[k]) / net.branch_limit_kva(k))
        .fold(0.0f64, f64::max);
    if worst > 0.0 {
        let s = fraction / worst * rng.random_range(0.5..1.0);
        p.iter_mut().for_each(|v| *v *= s);
        q.iter_mut().for_each(|v| *v *= s);
    }
    (p, q)
}
