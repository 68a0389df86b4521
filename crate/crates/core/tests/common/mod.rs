//! Shared builders for the optimization and KPI tests.
#![allow(dead_code)]

use flexneeds::fixtures::{random_light_loads, random_radial};
use flexneeds::loads::LoadProfile;
use flexneeds::opf::{solve_scenarios, OpfOptions, ScenarioSolve};
use flexneeds::{generate_scenarios, NetworkModel, ScenarioSet};

/// Small random tree; `stretch` scales every impedance so voltage limits bind too.
pub fn network(seed: u64, n: usize, stretch: f64) -> NetworkModel {
    let mut doc = random_radial(seed, n).into_document();
    for br in &mut doc.branches {
        br.r *= stretch;
        br.x *= stretch;
    }
    NetworkModel::from_document(doc).unwrap()
}

/// Mean profile over the non-root buses whose heaviest hour loads the worst
/// element at `peak` times its limit.
pub fn profile(net: &NetworkModel, seed: u64, peak: f64, timesteps: usize) -> LoadProfile {
    let (p, q) = random_light_loads(net, seed, peak);
    let keep: Vec<usize> = (0..net.bus_count()).filter(|&b| b != net.root()).collect();
    let scale = |t: usize| 0.4 + 0.6 * (t + 1) as f64 / timesteps as f64;
    LoadProfile {
        bus_ids: keep.iter().map(|&b| net.buses()[b].id.clone()).collect(),
        p: (0..timesteps)
            .map(|t| keep.iter().map(|&b| p[b] * scale(t)).collect())
            .collect(),
        q: (0..timesteps)
            .map(|t| keep.iter().map(|&b| q[b] * scale(t)).collect())
            .collect(),
    }
}

pub fn solved(
    net: &NetworkModel,
    mean: &LoadProfile,
    s: usize,
    seed: u64,
    workers: usize,
) -> (ScenarioSet, Vec<ScenarioSolve>) {
    let set = generate_scenarios(mean, 0.3, s, seed).unwrap();
    let solves = solve_scenarios(net, &set, &OpfOptions::default(), workers).unwrap();
    (set, solves)
}

pub fn bus_ids(net: &NetworkModel) -> Vec<String> {
    net.buses().iter().map(|b| b.id.clone()).collect()
}
