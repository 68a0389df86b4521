//! Radial single-phase-equivalent network model.
//!
//! A [`NetworkDocument`] is the raw JSON form. A [`NetworkModel`] is a validated,
//! root-oriented document plus the cached tree structure every solver walks.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    /// Line-to-neutral voltage of the single-phase equivalent, in volts.
    pub nominal_voltage: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    #[serde(default)]
    pub has_load: bool,
    #[serde(default)]
    pub has_generation: bool,
}

impl Bus {
    pub fn is_flexible(&self) -> bool {
        self.has_load || self.has_generation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// Ohms.
    pub r: f64,
    /// Ohms.
    pub x: f64,
    /// Thermal ampacity in amps.
    pub rating: f64,
    pub loading_limit_fraction: f64,
}

impl Branch {
    /// Ampacity after the loading-limit tightening.
    pub fn effective_limit_a(&self) -> f64 {
        self.rating * self.loading_limit_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub id: String,
    /// kVA.
    pub rating: f64,
    pub loading_limit_fraction: f64,
    pub secondary_bus: String,
}

impl Transformer {
    pub fn limit_kva(&self) -> f64 {
        self.rating * self.loading_limit_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quantity {
    P,
    Q,
    #[serde(rename = "I_abs")]
    IAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementLocation {
    pub id: String,
    pub branch_id: String,
    pub measured_quantities: Vec<Quantity>,
}

/// Network file contents before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub base_power_kva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub transformer: Transformer,
    #[serde(default)]
    pub measurements: Vec<MeasurementLocation>,
}

const THREE_PHASE_KEYS: &[&str] = &[
    "phases",
    "phase",
    "n_phases",
    "three_phase",
    "r_abc",
    "x_abc",
    "r_a",
    "r_b",
    "r_c",
    "x_a",
    "x_b",
    "x_c",
    "rating_a",
    "rating_b",
    "rating_c",
];

impl NetworkDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(schema_error)?;
        reject_three_phase(&value)?;
        serde_json::from_value(value).map_err(schema_error)
    }

    pub fn to_json(&self) -> String {
        // Only plain data; serialization cannot fail.
        serde_json::to_string_pretty(self).expect("network document serializes")
    }
}

fn schema_error(err: serde_json::Error) -> Error {
    let msg = err.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "<document>".to_owned());
    Error::schema(field, msg)
}

fn reject_three_phase(value: &serde_json::Value) -> Result<()> {
    let Some(obj) = value.as_object() else {
        return Ok(());
    };
    for section in ["buses", "branches", "measurements"] {
        let Some(items) = obj.get(section).and_then(|v| v.as_array()) else {
            continue;
        };
        for (i, item) in items.iter().enumerate() {
            if let Some(fields) = item.as_object() {
                if let Some(key) = fields
                    .keys()
                    .find(|k| THREE_PHASE_KEYS.contains(&k.as_str()))
                {
                    return Err(Error::ThreePhase {
                        field: format!("{section}[{i}].{key}"),
                    });
                }
            }
        }
    }
    if let Some(fields) = obj.get("transformer").and_then(|v| v.as_object()) {
        if let Some(key) = fields
            .keys()
            .find(|k| THREE_PHASE_KEYS.contains(&k.as_str()))
        {
            return Err(Error::ThreePhase {
                field: format!("transformer.{key}"),
            });
        }
    }
    Ok(())
}

fn check_positive(field: String, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::schema(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn check_fraction(field: String, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::schema(
            field,
            format!("must lie in (0, 1], got {value}"),
        ))
    }
}

/// Field-level checks plus reference integrity. Topology is checked separately.
fn validate_fields(doc: &NetworkDocument) -> Result<()> {
    check_positive("base_power_kva".into(), doc.base_power_kva)?;
    if doc.buses.is_empty() {
        return Err(Error::schema("buses", "at least one bus is required"));
    }

    let mut bus_ids = HashSet::new();
    for (i, bus) in doc.buses.iter().enumerate() {
        if bus.id.is_empty() {
            return Err(Error::schema(format!("buses[{i}].id"), "empty id"));
        }
        if !bus_ids.insert(bus.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "bus",
                id: bus.id.clone(),
            });
        }
        check_positive(format!("buses[{i}].nominal_voltage"), bus.nominal_voltage)?;
        check_positive(format!("buses[{i}].v_min_pu"), bus.v_min_pu)?;
        if !(bus.v_max_pu.is_finite() && bus.v_max_pu > bus.v_min_pu) {
            return Err(Error::schema(
                format!("buses[{i}].v_max_pu"),
                format!(
                    "must exceed v_min_pu ({} <= {})",
                    bus.v_max_pu, bus.v_min_pu
                ),
            ));
        }
    }

    let mut branch_ids = HashSet::new();
    for (i, br) in doc.branches.iter().enumerate() {
        if !branch_ids.insert(br.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "branch",
                id: br.id.clone(),
            });
        }
        for end in [&br.from_bus, &br.to_bus] {
            if !bus_ids.contains(end.as_str()) {
                return Err(Error::DanglingReference {
                    kind: "bus",
                    id: end.clone(),
                });
            }
        }
        if br.from_bus == br.to_bus {
            return Err(Error::NonRadial(format!(
                "branch `{}` is a self-loop on `{}`",
                br.id, br.from_bus
            )));
        }
        for (name, v) in [("r", br.r), ("x", br.x)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::schema(
                    format!("branches[{i}].{name}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::schema(
                format!("branches[{i}].r"),
                "r and x cannot both be zero",
            ));
        }
        check_positive(format!("branches[{i}].rating"), br.rating)?;
        check_fraction(
            format!("branches[{i}].loading_limit_fraction"),
            br.loading_limit_fraction,
        )?;
    }

    check_positive("transformer.rating".into(), doc.transformer.rating)?;
    check_fraction(
        "transformer.loading_limit_fraction".into(),
        doc.transformer.loading_limit_fraction,
    )?;

    let mut meas_ids = HashSet::new();
    for (i, m) in doc.measurements.iter().enumerate() {
        if !meas_ids.insert(m.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "measurement",
                id: m.id.clone(),
            });
        }
        if !branch_ids.contains(m.branch_id.as_str()) {
            return Err(Error::DanglingReference {
                kind: "branch",
                id: m.branch_id.clone(),
            });
        }
        if m.measured_quantities.is_empty() {
            return Err(Error::schema(
                format!("measurements[{i}].measured_quantities"),
                "must be nonempty",
            ));
        }
    }
    Ok(())
}

/// Re-orients every branch away from the transformer secondary bus.
///
/// Fails when the root is missing, a cycle exists, or a bus is unreachable.
pub fn validate_orientation(doc: &NetworkDocument) -> Result<NetworkDocument> {
    let index: HashMap<&str, usize> = doc
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let root = *index
        .get(doc.transformer.secondary_bus.as_str())
        .ok_or_else(|| {
            Error::NoRoot(format!(
                "transformer secondary bus `{}` is not a bus",
                doc.transformer.secondary_bus
            ))
        })?;

    let n = doc.buses.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, br) in doc.branches.iter().enumerate() {
        let a = *index
            .get(br.from_bus.as_str())
            .ok_or_else(|| Error::DanglingReference {
                kind: "bus",
                id: br.from_bus.clone(),
            })?;
        let b = *index
            .get(br.to_bus.as_str())
            .ok_or_else(|| Error::DanglingReference {
                kind: "bus",
                id: br.to_bus.clone(),
            })?;
        adj[a].push((b, k));
        adj[b].push((a, k));
    }

    let mut parent_branch: Vec<Option<usize>> = vec![None; n];
    let mut parent_bus: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &(v, k) in &adj[u] {
            if parent_branch[u] == Some(k) {
                continue;
            }
            if seen[v] {
                let cycle = describe_cycle(doc, &parent_bus, u, v);
                return Err(Error::NonRadial(format!("cycle {cycle}")));
            }
            seen[v] = true;
            parent_branch[v] = Some(k);
            parent_bus[v] = Some(u);
            queue.push_back(v);
        }
    }
    if let Some(lost) = seen.iter().position(|s| !s) {
        return Err(Error::NonRadial(format!(
            "bus `{}` is disconnected from root `{}`",
            doc.buses[lost].id, doc.buses[root].id
        )));
    }

    let mut out = doc.clone();
    for v in 0..n {
        if let (Some(k), Some(u)) = (parent_branch[v], parent_bus[v]) {
            let br = &mut out.branches[k];
            if br.from_bus != doc.buses[u].id {
                std::mem::swap(&mut br.from_bus, &mut br.to_bus);
            }
        }
    }
    Ok(out)
}

fn describe_cycle(doc: &NetworkDocument, parent: &[Option<usize>], a: usize, b: usize) -> String {
    let ancestors = |mut x: usize| {
        let mut path = vec![x];
        while let Some(p) = parent[x] {
            path.push(p);
            x = p;
        }
        path
    };
    let pa = ancestors(a);
    let pb = ancestors(b);
    let in_b: HashSet<usize> = pb.iter().copied().collect();
    let meet = *pa.iter().find(|x| in_b.contains(x)).unwrap_or(&a);
    let mut ids: Vec<&str> = pa
        .iter()
        .take_while(|&&x| x != meet)
        .map(|&x| doc.buses[x].id.as_str())
        .collect();
    ids.push(&doc.buses[meet].id);
    let tail: Vec<&str> = pb
        .iter()
        .take_while(|&&x| x != meet)
        .map(|&x| doc.buses[x].id.as_str())
        .collect();
    ids.extend(tail.into_iter().rev());
    ids.push(&doc.buses[a].id);
    ids.join("–")
}

/// Cached parent/child structure of an oriented radial network.
#[derive(Debug, Clone, PartialEq)]
struct Tree {
    bus_index: HashMap<String, usize>,
    branch_index: HashMap<String, usize>,
    root: usize,
    branch_from: Vec<usize>,
    branch_to: Vec<usize>,
    parent_branch: Vec<Option<usize>>,
    child_branches: Vec<Vec<usize>>,
    bfs_order: Vec<usize>,
    depth: Vec<usize>,
}

impl Tree {
    fn build(doc: &NetworkDocument) -> Self {
        let bus_index: HashMap<String, usize> = doc
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let branch_index: HashMap<String, usize> = doc
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let n = doc.buses.len();
        let root = bus_index[&doc.transformer.secondary_bus];
        let branch_from: Vec<usize> = doc
            .branches
            .iter()
            .map(|b| bus_index[&b.from_bus])
            .collect();
        let branch_to: Vec<usize> = doc.branches.iter().map(|b| bus_index[&b.to_bus]).collect();
        let mut parent_branch = vec![None; n];
        let mut child_branches = vec![Vec::new(); n];
        for k in 0..doc.branches.len() {
            parent_branch[branch_to[k]] = Some(k);
            child_branches[branch_from[k]].push(k);
        }
        let mut bfs_order = Vec::with_capacity(n);
        let mut depth = vec![0; n];
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            bfs_order.push(u);
            for &k in &child_branches[u] {
                let v = branch_to[k];
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
        Tree {
            bus_index,
            branch_index,
            root,
            branch_from,
            branch_to,
            parent_branch,
            child_branches,
            bfs_order,
            depth,
        }
    }
}

/// A validated, root-oriented radial network. Immutable once built.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    doc: NetworkDocument,
    tree: Tree,
}

impl PartialEq for NetworkModel {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl NetworkModel {
    /// Validates `doc`, orients it away from the root, and caches the tree.
    pub fn from_document(doc: NetworkDocument) -> Result<Self> {
        validate_fields(&doc)?;
        if doc.branches.len() + 1 != doc.buses.len() {
            // Still run orientation so the error names a cycle or a stray bus.
            validate_orientation(&doc)?;
            return Err(Error::NonRadial(format!(
                "{} branches for {} buses",
                doc.branches.len(),
                doc.buses.len()
            )));
        }
        let doc = validate_orientation(&doc)?;
        let tree = Tree::build(&doc);
        Ok(NetworkModel { doc, tree })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(NetworkDocument::from_json(text)?)
    }

    pub fn to_json(&self) -> String {
        self.doc.to_json()
    }

    pub fn document(&self) -> &NetworkDocument {
        &self.doc
    }

    pub fn into_document(self) -> NetworkDocument {
        self.doc
    }

    pub fn buses(&self) -> &[Bus] {
        &self.doc.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.doc.branches
    }

    pub fn transformer(&self) -> &Transformer {
        &self.doc.transformer
    }

    pub fn measurements(&self) -> &[MeasurementLocation] {
        &self.doc.measurements
    }

    pub fn base_power_kva(&self) -> f64 {
        self.doc.base_power_kva
    }

    pub fn bus_count(&self) -> usize {
        self.doc.buses.len()
    }

    pub fn branch_count(&self) -> usize {
        self.doc.branches.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.tree.bus_index.get(id).copied()
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.tree.branch_index.get(id).copied()
    }

    pub fn root(&self) -> usize {
        self.tree.root
    }

    pub fn branch_from(&self, branch: usize) -> usize {
        self.tree.branch_from[branch]
    }

    pub fn branch_to(&self, branch: usize) -> usize {
        self.tree.branch_to[branch]
    }

    /// The branch feeding `bus`, `None` for the root.
    pub fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.tree.parent_branch[bus]
    }

    pub fn child_branches(&self, bus: usize) -> &[usize] {
        &self.tree.child_branches[bus]
    }

    /// Buses in breadth-first order from the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.tree.bfs_order
    }

    pub fn depth(&self, bus: usize) -> usize {
        self.tree.depth[bus]
    }

    /// Branches on the path from the root down to `bus`, root side first.
    pub fn path_to(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.tree.depth[bus]);
        let mut b = bus;
        while let Some(k) = self.tree.parent_branch[b] {
            path.push(k);
            b = self.tree.branch_from[k];
        }
        path.reverse();
        path
    }

    /// Nominal voltage (V) used to convert a branch ampacity into apparent power.
    pub fn branch_voltage(&self, branch: usize) -> f64 {
        self.doc.buses[self.tree.branch_to[branch]].nominal_voltage
    }

    /// Thermal limit of a branch in kVA at nominal voltage.
    pub fn branch_limit_kva(&self, branch: usize) -> f64 {
        self.doc.branches[branch].effective_limit_a() * self.branch_voltage(branch) / 1000.0
    }

    /// Unreduced thermal capacity (rating × nominal voltage) in kVA.
    pub fn branch_capacity_kva(&self, branch: usize) -> f64 {
        self.doc.branches[branch].rating * self.branch_voltage(branch) / 1000.0
    }

    /// True when `ancestor` lies on the root path of `bus` (or equals it).
    pub fn is_ancestor(&self, ancestor: usize, bus: usize) -> bool {
        let mut b = bus;
        loop {
            if b == ancestor {
                return true;
            }
            match self.tree.parent_branch[b] {
                Some(k) => b = self.tree.branch_from[k],
                None => return false,
            }
        }
    }

    /// All buses in the subtree rooted at `bus`, in BFS order.
    pub fn subtree(&self, bus: usize) -> Vec<usize> {
        let mut out = vec![bus];
        let mut i = 0;
        while i < out.len() {
            let u = out[i];
            out.extend(
                self.tree.child_branches[u]
                    .iter()
                    .map(|&k| self.tree.branch_to[k]),
            );
            i += 1;
        }
        out
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkModel::from_json(&text)
}

pub fn save_network(net: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, net.to_json()).map_err(|e| Error::io(path, e))
}
