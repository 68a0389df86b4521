//! Power flow over radial networks.
//!
//! [`linearized_flow`] is the lossless branch-flow model the optimizer embeds;
//! [`sweep_flow`] is the exact backward/forward sweep used to check it and to
//! evaluate realized operating points.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkModel;

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub voltage_pu: Vec<f64>,
    /// Sending-end flows per branch.
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
    pub s_kva: Vec<f64>,
    /// Power drawn through the transformer.
    pub root_p_kw: f64,
    pub root_q_kvar: f64,
    pub root_s_kva: f64,
    pub losses_kw: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl OperatingPoint {
    pub fn branch_loading_pct(&self, net: &NetworkModel, branch: usize) -> f64 {
        100.0 * self.s_kva[branch] / net.branch_capacity_kva(branch)
    }

    pub fn transformer_loading_pct(&self, net: &NetworkModel) -> f64 {
        100.0 * self.root_s_kva / net.transformer().rating
    }

    /// Element-level CSV dump for plotting.
    pub fn write_csv<W: Write>(&self, net: &NetworkModel, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        wtr.write_record([
            "element",
            "id",
            "voltage_pu",
            "p_kw",
            "q_kvar",
            "s_kva",
            "loading_pct",
        ])
        .map_err(err)?;
        for (b, bus) in net.buses().iter().enumerate() {
            wtr.write_record([
                "bus",
                &bus.id,
                &self.voltage_pu[b].to_string(),
                "",
                "",
                "",
                "",
            ])
            .map_err(err)?;
        }
        for (k, br) in net.branches().iter().enumerate() {
            wtr.write_record([
                "branch",
                &br.id,
                "",
                &self.p_kw[k].to_string(),
                &self.q_kvar[k].to_string(),
                &self.s_kva[k].to_string(),
                &self.branch_loading_pct(net, k).to_string(),
            ])
            .map_err(err)?;
        }
        wtr.write_record([
            "transformer",
            &net.transformer().id,
            "",
            &self.root_p_kw.to_string(),
            &self.root_q_kvar.to_string(),
            &self.root_s_kva.to_string(),
            &self.transformer_loading_pct(net).to_string(),
        ])
        .map_err(err)?;
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn check_injections(net: &NetworkModel, p: &[f64], q: &[f64]) {
    assert_eq!(p.len(), net.bus_count(), "one P injection per bus");
    assert_eq!(q.len(), net.bus_count(), "one Q injection per bus");
}

/// Sums `values` over each branch's downstream subtree.
pub(crate) fn downstream_sums(net: &NetworkModel, values: &[f64]) -> Vec<f64> {
    let mut acc = values.to_vec();
    let mut flow = vec![0.0; net.branch_count()];
    for &b in net.bfs_order().iter().rev() {
        if let Some(k) = net.parent_branch(b) {
            flow[k] = acc[b];
            acc[net.branch_from(k)] += acc[b];
        }
    }
    flow
}

/// Voltage-squared drop coefficient of a branch: Δ(v²) per kW of flow through r
/// (or per kvar through x), in pu².
pub(crate) fn drop_coefficients(net: &NetworkModel, branch: usize) -> (f64, f64) {
    let br = &net.branches()[branch];
    let v = net.branch_voltage(branch);
    let scale = 2.0 * 1000.0 / (v * v);
    (br.r * scale, br.x * scale)
}

/// Lossless linearized branch-flow (LinDistFlow).
///
/// `p`, `q` are per-bus loads in kW / kvar (negative = injection).
pub fn linearized_flow(net: &NetworkModel, p: &[f64], q: &[f64]) -> OperatingPoint {
    check_injections(net, p, q);
    let p_kw = downstream_sums(net, p);
    let q_kvar = downstream_sums(net, q);
    let mut w = vec![1.0; net.bus_count()];
    for &b in net.bfs_order() {
        if let Some(k) = net.parent_branch(b) {
            let (cr, cx) = drop_coefficients(net, k);
            w[b] = w[net.branch_from(k)] - (cr * p_kw[k] + cx * q_kvar[k]);
        }
    }
    let s_kva = p_kw.iter().zip(&q_kvar).map(|(a, b)| a.hypot(*b)).collect();
    let root_p_kw: f64 = p.iter().sum();
    let root_q_kvar: f64 = q.iter().sum();
    OperatingPoint {
        voltage_pu: w.iter().map(|v| v.max(0.0).sqrt()).collect(),
        p_kw,
        q_kvar,
        s_kva,
        root_p_kw,
        root_q_kvar,
        root_s_kva: root_p_kw.hypot(root_q_kvar),
        losses_kw: 0.0,
        converged: true,
        iterations: 0,
    }
}

/// Exact backward/forward sweep with constant-power loads.
///
/// Stops once the largest per-unit voltage update falls below `tol`; returns
/// the last iterate with `converged = false` after `max_iter` sweeps.
pub fn sweep_flow(
    net: &NetworkModel,
    p: &[f64],
    q: &[f64],
    tol: f64,
    max_iter: usize,
) -> OperatingPoint {
    check_injections(net, p, q);
    assert!(tol > 0.0, "sweep tolerance must be positive");
    let n = net.bus_count();
    let m = net.branch_count();
    let nominal: Vec<f64> = net.buses().iter().map(|b| b.nominal_voltage).collect();
    let mut v: Vec<Complex64> = nominal.iter().map(|&vn| Complex64::new(vn, 0.0)).collect();
    let load: Vec<Complex64> = p
        .iter()
        .zip(q)
        .map(|(&pp, &qq)| Complex64::new(pp, qq) * 1000.0)
        .collect();
    let z: Vec<Complex64> = net
        .branches()
        .iter()
        .map(|b| Complex64::new(b.r, b.x))
        .collect();
    let mut current = vec![Complex64::new(0.0, 0.0); m];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut acc: Vec<Complex64> = (0..n).map(|b| (load[b] / v[b]).conj()).collect();
        for &b in net.bfs_order().iter().rev() {
            if let Some(k) = net.parent_branch(b) {
                current[k] = acc[b];
                let from = net.branch_from(k);
                let ib = acc[b];
                acc[from] += ib;
            }
        }
        let mut delta: f64 = 0.0;
        for &b in net.bfs_order() {
            if let Some(k) = net.parent_branch(b) {
                let updated = v[net.branch_from(k)] - z[k] * current[k];
                delta = delta.max((updated - v[b]).norm() / nominal[b]);
                v[b] = updated;
            }
        }
        if !delta.is_finite() {
            break;
        }
        if delta < tol {
            converged = true;
            break;
        }
    }

    let mut p_kw = vec![0.0; m];
    let mut q_kvar = vec![0.0; m];
    let mut s_kva = vec![0.0; m];
    let mut losses_kw = 0.0;
    for k in 0..m {
        let s = v[net.branch_from(k)] * current[k].conj() / 1000.0;
        p_kw[k] = s.re;
        q_kvar[k] = s.im;
        s_kva[k] = s.norm();
        losses_kw += current[k].norm_sqr() * z[k].re / 1000.0;
    }
    let root = net.root();
    let mut root_s = load[root] / 1000.0;
    for &k in net.child_branches(root) {
        root_s += Complex64::new(p_kw[k], q_kvar[k]);
    }
    OperatingPoint {
        voltage_pu: v
            .iter()
            .zip(&nominal)
            .map(|(x, vn)| x.norm() / vn)
            .collect(),
        p_kw,
        q_kvar,
        s_kva,
        root_p_kw: root_s.re,
        root_q_kvar: root_s.im,
        root_s_kva: root_s.norm(),
        losses_kw,
        converged,
        iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DniKind {
    Overvoltage,
    Undervoltage,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dni {
    pub timestep: usize,
    pub element: String,
    pub kind: DniKind,
    /// Excess beyond the limit, in pu for voltage and kVA for thermal.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DniReport {
    pub entries: Vec<Dni>,
}

impl DniReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: DniReport) {
        self.entries.extend(other.entries);
    }
}

/// Lists every limit violation of `op`, tagged with timestep 0.
pub fn detect_dni(op: &OperatingPoint, net: &NetworkModel) -> DniReport {
    detect_dni_at(op, net, 0, 0.0)
}

/// Lists violations exceeding their limit by more than `tol` (pu or kVA).
pub fn detect_dni_at(
    op: &OperatingPoint,
    net: &NetworkModel,
    timestep: usize,
    tol: f64,
) -> DniReport {
    let mut entries = Vec::new();
    for (b, bus) in net.buses().iter().enumerate() {
        let v = op.voltage_pu[b];
        if v < bus.v_min_pu - tol {
            entries.push(Dni {
                timestep,
                element: bus.id.clone(),
                kind: DniKind::Undervoltage,
                magnitude: bus.v_min_pu - v,
            });
        } else if v > bus.v_max_pu + tol {
            entries.push(Dni {
                timestep,
                element: bus.id.clone(),
                kind: DniKind::Overvoltage,
                magnitude: v - bus.v_max_pu,
            });
        }
    }
    for (k, br) in net.branches().iter().enumerate() {
        let limit = net.branch_limit_kva(k);
        if op.s_kva[k] > limit + tol {
            entries.push(Dni {
                timestep,
                element: br.id.clone(),
                kind: DniKind::Thermal,
                magnitude: op.s_kva[k] - limit,
            });
        }
    }
    let tr = net.transformer();
    if op.root_s_kva > tr.limit_kva() + tol {
        entries.push(Dni {
            timestep,
            element: tr.id.clone(),
            kind: DniKind::Thermal,
            magnitude: op.root_s_kva - tr.limit_kva(),
        });
    }
    DniReport { entries }
}
