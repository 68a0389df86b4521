//! Observability-based network reduction and nested-measurement load aggregation.
//!
//! Each measured branch gets an aggregated load at its downstream bus. Branches
//! with no aggregated load below them are pruned, and series chains of unloaded
//! buses collapse into single branches with summed impedance.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::LoadProfile;
use crate::measurement::{fmt_ts, MeasurementSeries};
use crate::network::{Branch, Bus, MeasurementLocation, NetworkDocument, NetworkModel};

/// How the rating of a merged series chain is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingRule {
    #[default]
    Max,
    Min,
}

impl std::str::FromStr for RatingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(RatingRule::Max),
            "min" => Ok(RatingRule::Min),
            other => Err(Error::InvalidParameter(format!(
                "rating rule must be `max` or `min`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatedLoadBus {
    pub bus: String,
    pub measurement: String,
    /// Index of the immediately enclosing measurement in the aggregated list.
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub net: NetworkModel,
    pub aggregated_load_buses: Vec<AggregatedLoadBus>,
    /// Original bus id to reduced bus id; `None` when removed.
    pub bus_map: BTreeMap<String, Option<String>>,
    /// Reduced branch id to the original branches merged into it, root side first.
    pub branch_map: BTreeMap<String, Vec<String>>,
    pub warnings: Vec<String>,
}

/// JSON sidecar carrying the reduction mappings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionMapping {
    pub bus_map: BTreeMap<String, String>,
    pub branch_map: BTreeMap<String, Vec<String>>,
    pub aggregated_load_buses: Vec<AggregatedLoadBus>,
    pub warnings: Vec<String>,
}

pub const REMOVED: &str = "removed";

impl ReducedNetwork {
    pub fn mapping(&self) -> ReductionMapping {
        ReductionMapping {
            bus_map: self
                .bus_map
                .iter()
                .map(|(k, v)| (k.clone(), v.clone().unwrap_or_else(|| REMOVED.to_owned())))
                .collect(),
            branch_map: self.branch_map.clone(),
            aggregated_load_buses: self.aggregated_load_buses.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// Rebuilds a reduced network from its saved JSON pair.
    pub fn from_parts(net: NetworkModel, mapping: ReductionMapping) -> Result<Self> {
        for agg in &mapping.aggregated_load_buses {
            if net.bus_index(&agg.bus).is_none() {
                return Err(Error::DanglingReference {
                    kind: "bus",
                    id: agg.bus.clone(),
                });
            }
        }
        Ok(ReducedNetwork {
            net,
            bus_map: mapping
                .bus_map
                .into_iter()
                .map(|(k, v)| (k, (v != REMOVED).then_some(v)))
                .collect(),
            branch_map: mapping.branch_map,
            aggregated_load_buses: mapping.aggregated_load_buses,
            warnings: mapping.warnings,
        })
    }

    pub fn aggregated_bus_ids(&self) -> Vec<String> {
        self.aggregated_load_buses
            .iter()
            .map(|a| a.bus.clone())
            .collect()
    }
}

/// Element counts in the layout of a network-size table. The branch count
/// includes the transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSize {
    pub branches: usize,
    pub nodes: usize,
    pub loads: usize,
}

impl NetworkSize {
    pub fn of(net: &NetworkModel) -> Self {
        NetworkSize {
            branches: net.branch_count() + 1,
            nodes: net.bus_count(),
            loads: net.buses().iter().filter(|b| b.has_load).count(),
        }
    }
}

/// Original-vs-reduced size table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeReport {
    pub name: String,
    pub original: NetworkSize,
    pub reduced: NetworkSize,
}

impl fmt::Display for SizeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20}{:>10}{:>10}", "", self.name, "")?;
        writeln!(f, "{:<20}{:>10}{:>10}", "", "Original", "Reduced")?;
        writeln!(
            f,
            "{:<20}{:>10}{:>10}",
            "Number of branches", self.original.branches, self.reduced.branches
        )?;
        writeln!(
            f,
            "{:<20}{:>10}{:>10}",
            "Number of nodes", self.original.nodes, self.reduced.nodes
        )?;
        writeln!(
            f,
            "{:<20}{:>10}{:>10}",
            "Number of loads", self.original.loads, self.reduced.loads
        )
    }
}

pub fn reduce_network(net: &NetworkModel, rating_rule: RatingRule) -> Result<ReducedNetwork> {
    if net.measurements().is_empty() {
        return Err(Error::InvalidParameter(
            "network reduction needs at least one measurement location".into(),
        ));
    }
    let n = net.bus_count();
    let mut warnings = Vec::new();

    // (measurement index, aggregation bus)
    let mut agg_bus_of = Vec::with_capacity(net.measurements().len());
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (mi, m) in net.measurements().iter().enumerate() {
        let k = net
            .branch_index(&m.branch_id)
            .ok_or_else(|| Error::DanglingReference {
                kind: "branch",
                id: m.branch_id.clone(),
            })?;
        let v = net.branch_to(k);
        if let Some(other) = owner[v] {
            return Err(Error::Measurement {
                location: m.id.clone(),
                message: format!(
                    "shares branch `{}` with measurement `{}`",
                    m.branch_id,
                    net.measurements()[other].id
                ),
            });
        }
        if net.child_branches(v).is_empty() {
            warnings.push(format!(
                "measurement `{}` sits on leaf branch `{}`; load placed at its end bus `{}`",
                m.id,
                m.branch_id,
                net.buses()[v].id
            ));
        }
        owner[v] = Some(mi);
        agg_bus_of.push(v);
    }

    // Measurement nesting: the nearest measured bus strictly above each one.
    let parent_of: Vec<Option<usize>> = agg_bus_of
        .iter()
        .map(|&v| {
            let mut b = v;
            while let Some(k) = net.parent_branch(b) {
                b = net.branch_from(k);
                if let Some(mi) = owner[b] {
                    return Some(mi);
                }
            }
            None
        })
        .collect();

    let mut keep = vec![false; n];
    keep[net.root()] = true;
    for &v in &agg_bus_of {
        let mut b = v;
        while !keep[b] {
            keep[b] = true;
            match net.parent_branch(b) {
                Some(k) => b = net.branch_from(k),
                None => break,
            }
        }
    }

    let kept_children: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            net.child_branches(u)
                .iter()
                .copied()
                .filter(|&k| keep[net.branch_to(k)])
                .collect()
        })
        .collect();
    let is_anchor = |b: usize| b == net.root() || owner[b].is_some() || kept_children[b].len() != 1;

    let generation_below = aggregation_generation(net, &owner);

    let mut buses: Vec<Bus> = Vec::new();
    let mut branches: Vec<Branch> = Vec::new();
    let mut branch_map = BTreeMap::new();
    let mut reduced_branch_of: Vec<Option<usize>> = vec![None; net.branch_count()];

    for &u in net.bfs_order() {
        if !keep[u] || !is_anchor(u) {
            continue;
        }
        let orig = &net.buses()[u];
        buses.push(Bus {
            has_load: owner[u].is_some(),
            has_generation: owner[u].is_some() && generation_below[u],
            ..orig.clone()
        });
        for &first in &kept_children[u] {
            let mut chain = vec![first];
            let mut end = net.branch_to(first);
            while !is_anchor(end) {
                let next = kept_children[end][0];
                chain.push(next);
                end = net.branch_to(next);
            }
            let merged = merge_chain(net, &chain, rating_rule);
            for &k in &chain {
                reduced_branch_of[k] = Some(branches.len());
            }
            branch_map.insert(
                merged.id.clone(),
                chain
                    .iter()
                    .map(|&k| net.branches()[k].id.clone())
                    .collect(),
            );
            branches.push(merged);
        }
    }

    let measurements = net
        .measurements()
        .iter()
        .map(|m| {
            let k = net.branch_index(&m.branch_id).expect("checked above");
            let rk = reduced_branch_of[k].expect("measured branches are kept");
            MeasurementLocation {
                branch_id: branches[rk].id.clone(),
                ..m.clone()
            }
        })
        .collect();

    let bus_map = net
        .buses()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            (
                b.id.clone(),
                (keep[i] && is_anchor(i)).then(|| b.id.clone()),
            )
        })
        .collect();

    let aggregated_load_buses = agg_bus_of
        .iter()
        .enumerate()
        .map(|(mi, &v)| AggregatedLoadBus {
            bus: net.buses()[v].id.clone(),
            measurement: net.measurements()[mi].id.clone(),
            parent: parent_of[mi],
        })
        .collect();

    let doc = NetworkDocument {
        base_power_kva: net.base_power_kva(),
        buses,
        branches,
        transformer: net.transformer().clone(),
        measurements,
    };
    Ok(ReducedNetwork {
        net: NetworkModel::from_document(doc)?,
        aggregated_load_buses,
        bus_map,
        branch_map,
        warnings,
    })
}

fn merge_chain(net: &NetworkModel, chain: &[usize], rule: RatingRule) -> Branch {
    let first = &net.branches()[chain[0]];
    if chain.len() == 1 {
        return first.clone();
    }
    let last = &net.branches()[*chain.last().expect("nonempty")];
    let mut chosen = first;
    for &k in &chain[1..] {
        let br = &net.branches()[k];
        let better = match rule {
            RatingRule::Max => br.rating > chosen.rating,
            RatingRule::Min => br.rating < chosen.rating,
        };
        if better {
            chosen = br;
        }
    }
    Branch {
        id: format!("{}..{}", first.id, last.id),
        from_bus: first.from_bus.clone(),
        to_bus: last.to_bus.clone(),
        r: chain.iter().map(|&k| net.branches()[k].r).sum(),
        x: chain.iter().map(|&k| net.branches()[k].x).sum(),
        rating: chosen.rating,
        loading_limit_fraction: chosen.loading_limit_fraction,
    }
}

/// For each aggregation bus, whether any generation sits in the region its
/// measurement covers exclusively.
fn aggregation_generation(net: &NetworkModel, owner: &[Option<usize>]) -> Vec<bool> {
    let n = net.bus_count();
    let mut region_owner: Vec<Option<usize>> = vec![None; n];
    let mut out = vec![false; n];
    for &u in net.bfs_order() {
        let inherited = net
            .parent_branch(u)
            .and_then(|k| region_owner[net.branch_from(k)]);
        region_owner[u] = if owner[u].is_some() {
            Some(u)
        } else {
            inherited
        };
        if let Some(a) = region_owner[u] {
            out[a] |= net.buses()[u].has_generation;
        }
    }
    out
}

/// Converts measured branch flows into aggregated loads:
/// each measurement's flow minus the flows of the measurements nested directly
/// below it. Line losses between measurement points stay in the difference.
pub fn aggregate_measured_flows(
    series: &[MeasurementSeries],
    reduced: &ReducedNetwork,
) -> Result<(Vec<NaiveDateTime>, LoadProfile)> {
    let aggs = &reduced.aggregated_load_buses;
    let mut picked: Vec<&MeasurementSeries> = Vec::with_capacity(aggs.len());
    for a in aggs {
        let s = series
            .iter()
            .find(|s| s.location_id == a.measurement)
            .ok_or_else(|| Error::Measurement {
                location: a.measurement.clone(),
                message: "no time series for this location".into(),
            })?;
        picked.push(s);
    }
    let reference = picked[0];
    for s in &picked[1..] {
        if s.resolution != reference.resolution
            || s.len() != reference.len()
            || s.timestamps().ne(reference.timestamps())
        {
            return Err(Error::Misaligned {
                a: reference.location_id.clone(),
                b: s.location_id.clone(),
            });
        }
    }

    let values = |s: &MeasurementSeries| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut p = Vec::with_capacity(s.len());
        let mut q = Vec::with_capacity(s.len());
        for smp in &s.samples {
            let missing = |what: &str| Error::Measurement {
                location: s.location_id.clone(),
                message: format!("no {what} at {}", fmt_ts(smp.timestamp)),
            };
            p.push(smp.p_kw.ok_or_else(|| missing("P"))?);
            q.push(smp.q_kvar.ok_or_else(|| missing("Q"))?);
        }
        Ok((p, q))
    };
    let flows = picked
        .iter()
        .map(|s| values(s))
        .collect::<Result<Vec<_>>>()?;

    let t_count = reference.len();
    let mut p = vec![vec![0.0; aggs.len()]; t_count];
    let mut q = vec![vec![0.0; aggs.len()]; t_count];
    for (l, a) in aggs.iter().enumerate() {
        for t in 0..t_count {
            p[t][l] += flows[l].0[t];
            q[t][l] += flows[l].1[t];
            if let Some(parent) = a.parent {
                p[t][parent] -= flows[l].0[t];
                q[t][parent] -= flows[l].1[t];
            }
        }
    }
    Ok((
        reference.timestamps().collect(),
        LoadProfile {
            bus_ids: reduced.aggregated_bus_ids(),
            p,
            q,
        },
    ))
}
