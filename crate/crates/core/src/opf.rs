//! Flexibility-minimizing OPF per scenario and the risk-level aggregation of
//! scenario solutions into predicted flexibility needs.
//!
//! Flexibility `f` at a bus is a correction to its net load: positive values
//! reduce load (or raise injection), negative values curtail generation (or
//! raise consumption). Only active power is flexible.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{check_complete, check_grid_size, csv_err, read_long_rows, BusLoads};
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::network::NetworkModel;
use crate::powerflow::{
    detect_dni_at, downstream_sums, drop_coefficients, linearized_flow, DniReport,
};
use crate::scenario::ScenarioSet;

/// LP solutions below this magnitude (kW) are reported as exactly zero.
const FLEX_FLOOR_KW: f64 = 1e-9;
/// Slack when re-checking corrected operating points, in pu or kVA.
pub const CORRECTION_TOL: f64 = 1e-6;

/// How the apparent-power circle of a thermal limit enters the LP. Reactive
/// flow is fixed within a solve, so both forms reduce to bounds on |P|.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThermalModel {
    /// |P| ≤ √(S² − Q²), the circle itself.
    #[default]
    Exact,
    /// Circumscribed regular octagon: |P| ≤ S, |Q| ≤ S, |P| + |Q| ≤ √2·S.
    Octagon,
}

impl std::str::FromStr for ThermalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ThermalModel::Exact),
            "octagon" => Ok(ThermalModel::Octagon),
            other => Err(Error::InvalidParameter(format!(
                "thermal model must be `exact` or `octagon`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpfOptions {
    pub thermal: ThermalModel,
    pub max_iter: usize,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions {
            thermal: ThermalModel::Exact,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimestepSolve {
    /// Per-bus flexibility in kW; `None` when the LP is infeasible.
    pub flex: Option<Vec<f64>>,
    /// Σ|f| in kW; infinite when infeasible.
    pub objective: f64,
    /// Constraints that could not be met when infeasible.
    pub binding: Vec<String>,
}

impl TimestepSolve {
    pub fn is_feasible(&self) -> bool {
        self.flex.is_some()
    }

    fn zero(buses: usize) -> Self {
        TimestepSolve {
            flex: Some(vec![0.0; buses]),
            objective: 0.0,
            binding: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSolve {
    pub scenario: usize,
    pub steps: Vec<TimestepSolve>,
}

impl ScenarioSolve {
    pub fn is_feasible(&self) -> bool {
        self.steps.iter().all(TimestepSolve::is_feasible)
    }

    pub fn objective(&self) -> f64 {
        self.steps.iter().map(|s| s.objective).sum()
    }
}

/// Upper bound on |P| through an element carrying fixed reactive flow `q`,
/// or `None` when `q` alone breaks the limit.
fn active_bound(limit_kva: f64, q: f64, model: ThermalModel) -> Option<f64> {
    match model {
        ThermalModel::Exact => {
            let room = limit_kva * limit_kva - q * q;
            (room >= 0.0).then(|| room.sqrt())
        }
        ThermalModel::Octagon => (q.abs() <= limit_kva)
            .then(|| limit_kva.min(std::f64::consts::SQRT_2 * limit_kva - q.abs())),
    }
}

fn squared_voltages(net: &NetworkModel, p_flow: &[f64], q_flow: &[f64]) -> Vec<f64> {
    let mut w = vec![1.0; net.bus_count()];
    for &b in net.bfs_order() {
        if let Some(k) = net.parent_branch(b) {
            let (cr, cx) = drop_coefficients(net, k);
            w[b] = w[net.branch_from(k)] - (cr * p_flow[k] + cx * q_flow[k]);
        }
    }
    w
}

/// Solves the single-timestep flexibility LP for loads `p`, `q` (per bus).
pub fn solve_timestep(
    net: &NetworkModel,
    p: &[f64],
    q: &[f64],
    opts: &OpfOptions,
) -> Result<TimestepSolve> {
    let n = net.bus_count();
    let flexible: Vec<usize> = (0..n).filter(|&b| net.buses()[b].is_flexible()).collect();
    let p_flow = downstream_sums(net, p);
    let q_flow = downstream_sums(net, q);
    let w0 = squared_voltages(net, &p_flow, &q_flow);
    let root_p: f64 = p.iter().sum();
    let root_q: f64 = q.iter().sum();

    // Thermal bounds first: reactive overloads cannot be fixed by active flexibility.
    let mut bounds = Vec::with_capacity(net.branch_count() + 1);
    let mut unfixable = Vec::new();
    for k in 0..net.branch_count() {
        match active_bound(net.branch_limit_kva(k), q_flow[k], opts.thermal) {
            Some(b) => bounds.push(b),
            None => {
                unfixable.push(format!("thermal:{}", net.branches()[k].id));
                bounds.push(0.0);
            }
        }
    }
    let tr_bound = active_bound(net.transformer().limit_kva(), root_q, opts.thermal);
    if tr_bound.is_none() {
        unfixable.push(format!("thermal:{}", net.transformer().id));
    }
    if !unfixable.is_empty() {
        return Ok(TimestepSolve {
            flex: None,
            objective: f64::INFINITY,
            binding: unfixable,
        });
    }
    let tr_bound = tr_bound.expect("checked");

    let voltage_ok = (0..n).all(|b| {
        let bus = &net.buses()[b];
        w0[b] <= bus.v_max_pu * bus.v_max_pu && w0[b] >= bus.v_min_pu * bus.v_min_pu
    });
    let thermal_ok =
        (0..net.branch_count()).all(|k| p_flow[k].abs() <= bounds[k]) && root_p.abs() <= tr_bound;
    if voltage_ok && thermal_ok {
        return Ok(TimestepSolve::zero(n));
    }

    let nf = flexible.len();
    // Sensitivity of each element to a unit of flexibility at each flexible bus.
    // below[k][i]: flexible bus i sits downstream of branch k.
    let below: Vec<Vec<bool>> = (0..net.branch_count())
        .map(|k| {
            let top = net.branch_to(k);
            flexible.iter().map(|&b| net.is_ancestor(top, b)).collect()
        })
        .collect();
    let paths: Vec<Vec<usize>> = (0..n).map(|b| net.path_to(b)).collect();

    // Every candidate row reads `sign · (coeffs · f) ≤ rhs` with f = f⁺ − f⁻.
    let mut rows: Vec<(Vec<f64>, f64, f64, String)> = Vec::new();
    let mut push = |coeffs: Vec<f64>, sign: f64, rhs: f64, label: String| {
        if rhs >= 0.0 && coeffs.iter().all(|c| *c == 0.0) {
            return;
        }
        rows.push((coeffs, sign, rhs, label));
    };

    for b in 0..n {
        if b == net.root() {
            continue;
        }
        let bus = &net.buses()[b];
        // ∂w_b/∂f_i: Σ over shared path branches of the r-drop coefficient.
        let sens: Vec<f64> = (0..nf)
            .map(|i| {
                paths[b]
                    .iter()
                    .filter(|&&k| below[k][i])
                    .map(|&k| drop_coefficients(net, k).0)
                    .sum()
            })
            .collect();
        let vmax2 = bus.v_max_pu * bus.v_max_pu;
        let vmin2 = bus.v_min_pu * bus.v_min_pu;
        push(
            sens.clone(),
            1.0,
            vmax2 - w0[b],
            format!("overvoltage:{}", bus.id),
        );
        push(
            sens,
            -1.0,
            w0[b] - vmin2,
            format!("undervoltage:{}", bus.id),
        );
    }
    for k in 0..net.branch_count() {
        let ones: Vec<f64> = below[k]
            .iter()
            .map(|&d| if d { 1.0 } else { 0.0 })
            .collect();
        let id = &net.branches()[k].id;
        // P_k(f) = P_k − Σ f  ∈  [−bound, bound]
        push(
            ones.clone(),
            -1.0,
            bounds[k] - p_flow[k],
            format!("thermal:{id}"),
        );
        push(
            ones,
            1.0,
            bounds[k] + p_flow[k],
            format!("thermal-reverse:{id}"),
        );
    }
    let tr = &net.transformer().id;
    push(
        vec![1.0; nf],
        -1.0,
        tr_bound - root_p,
        format!("thermal:{tr}"),
    );
    push(
        vec![1.0; nf],
        1.0,
        tr_bound + root_p,
        format!("thermal-reverse:{tr}"),
    );

    // Row generation: start from the rows broken at f = 0 and add whatever the
    // current optimum breaks until nothing is left.
    let mut active: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].2 < 0.0).collect();
    let mut in_active = vec![false; rows.len()];
    for &r in &active {
        in_active[r] = true;
    }
    loop {
        let mut lp = LinearProgram::new(vec![1.0; 2 * nf]);
        for &r in &active {
            let (coeffs, sign, rhs, _) = &rows[r];
            let mut row = Vec::with_capacity(2 * nf);
            row.extend(coeffs.iter().map(|c| sign * c));
            row.extend(coeffs.iter().map(|c| -sign * c));
            lp.add_le(row, *rhs);
        }
        match lp::solve(&lp, opts.max_iter)? {
            LpOutcome::Optimal { x, .. } => {
                let f: Vec<f64> = (0..nf).map(|i| x[i] - x[nf + i]).collect();
                let broken: Vec<usize> = (0..rows.len())
                    .filter(|&r| !in_active[r])
                    .filter(|&r| {
                        let (coeffs, sign, rhs, _) = &rows[r];
                        let lhs: f64 = coeffs.iter().zip(&f).map(|(c, v)| c * v).sum();
                        sign * lhs > rhs + 1e-9 * rhs.abs().max(1.0)
                    })
                    .collect();
                if broken.is_empty() {
                    let mut flex = vec![0.0; n];
                    let mut objective = 0.0;
                    for (i, &b) in flexible.iter().enumerate() {
                        if f[i].abs() >= FLEX_FLOOR_KW {
                            flex[b] = f[i];
                            objective += f[i].abs();
                        }
                    }
                    return Ok(TimestepSolve {
                        flex: Some(flex),
                        objective,
                        binding: Vec::new(),
                    });
                }
                for r in broken {
                    in_active[r] = true;
                    active.push(r);
                }
            }
            LpOutcome::Infeasible { violated_rows } => {
                return Ok(TimestepSolve {
                    flex: None,
                    objective: f64::INFINITY,
                    binding: violated_rows
                        .into_iter()
                        .map(|r| rows[active[r]].3.clone())
                        .collect(),
                })
            }
            LpOutcome::Unbounded => unreachable!("objective is bounded below by zero"),
        }
    }
}

/// Solves every timestep of one load profile independently.
pub fn solve_scenario_opf(
    net: &NetworkModel,
    loads: &BusLoads,
    opts: &OpfOptions,
) -> Result<ScenarioSolve> {
    if !loads.is_finite() {
        return Err(Error::InvalidParameter("loads must be finite".into()));
    }
    let steps = (0..loads.timesteps())
        .map(|t| solve_timestep(net, &loads.p[t], &loads.q[t], opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSolve { scenario: 0, steps })
}

/// Solves all scenarios on `workers` threads. Output order and values do not
/// depend on the worker count.
pub fn solve_scenarios(
    net: &NetworkModel,
    set: &ScenarioSet,
    opts: &OpfOptions,
    workers: usize,
) -> Result<Vec<ScenarioSolve>> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..set.len())
            .into_par_iter()
            .map(|s| {
                let loads = set.scenario(s).to_bus_loads(net)?;
                let mut solve = solve_scenario_opf(net, &loads, opts)?;
                solve.scenario = s;
                Ok(solve)
            })
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlexKind {
    Predicted,
    Actual,
}

/// T × B flexibility needs split into up (positive) and down (negative) parts.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexNeeds {
    pub kind: FlexKind,
    /// Risk level; `None` for actual needs.
    pub risk_level: Option<f64>,
    pub bus_ids: Vec<String>,
    pub up: Vec<Vec<f64>>,
    pub down: Vec<Vec<f64>>,
}

pub const FLEX_CSV_HEADER: [&str; 4] = ["timestep", "bus", "flex_up_kw", "flex_down_kw"];

impl FlexNeeds {
    pub fn zeros(kind: FlexKind, bus_ids: Vec<String>, timesteps: usize) -> Self {
        let b = bus_ids.len();
        FlexNeeds {
            kind,
            risk_level: None,
            bus_ids,
            up: vec![vec![0.0; b]; timesteps],
            down: vec![vec![0.0; b]; timesteps],
        }
    }

    /// Builds needs from signed values.
    pub fn from_signed(kind: FlexKind, bus_ids: Vec<String>, values: &[Vec<f64>]) -> Self {
        let mut out = Self::zeros(kind, bus_ids, values.len());
        for (t, row) in values.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                if v > 0.0 {
                    out.up[t][b] = v;
                } else if v < 0.0 {
                    out.down[t][b] = -v;
                }
            }
        }
        out
    }

    pub fn timesteps(&self) -> usize {
        self.up.len()
    }

    pub fn buses(&self) -> usize {
        self.bus_ids.len()
    }

    /// Signed value of largest magnitude; ties go to the up direction.
    pub fn value(&self, t: usize, b: usize) -> f64 {
        let (u, d) = (self.up[t][b], self.down[t][b]);
        if u >= d {
            u
        } else {
            -d
        }
    }

    pub fn magnitude(&self, t: usize, b: usize) -> f64 {
        self.up[t][b].max(self.down[t][b])
    }

    pub fn signed(&self) -> Vec<Vec<f64>> {
        (0..self.timesteps())
            .map(|t| (0..self.buses()).map(|b| self.value(t, b)).collect())
            .collect()
    }

    /// Up plus down volume per timestep (kW).
    pub fn temporal_totals(&self) -> Vec<(f64, f64)> {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| (u.iter().sum(), d.iter().sum()))
            .collect()
    }

    /// Up plus down volume per bus summed over time (kWh-equivalent at 1 h steps).
    pub fn locational_totals(&self) -> Vec<(f64, f64)> {
        (0..self.buses())
            .map(|b| {
                (
                    self.up.iter().map(|r| r[b]).sum(),
                    self.down.iter().map(|r| r[b]).sum(),
                )
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(FLEX_CSV_HEADER).map_err(csv_err)?;
        for t in 0..self.timesteps() {
            for (b, id) in self.bus_ids.iter().enumerate() {
                wtr.write_record([
                    t.to_string(),
                    id.clone(),
                    self.up[t][b].to_string(),
                    self.down[t][b].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn read_csv<R: Read>(reader: R, kind: FlexKind) -> Result<Self> {
        let rows = read_long_rows(reader, &FLEX_CSV_HEADER)?;
        let mut bus_ids: Vec<String> = Vec::new();
        let mut max_t = 0;
        for r in &rows {
            if !bus_ids.contains(&r.bus) {
                bus_ids.push(r.bus.clone());
            }
            max_t = max_t.max(r.timestep);
        }
        let t_count = if rows.is_empty() { 0 } else { max_t + 1 };
        check_grid_size(t_count, bus_ids.len(), rows.len())?;
        let mut up = vec![vec![f64::NAN; bus_ids.len()]; t_count];
        let mut down = up.clone();
        for r in &rows {
            if r.values.iter().any(|v| *v < 0.0) {
                return Err(Error::Csv {
                    line: r.line,
                    message: "flexibility volumes must be non-negative".into(),
                });
            }
            let b = bus_ids
                .iter()
                .position(|x| *x == r.bus)
                .expect("collected above");
            if !up[r.timestep][b].is_nan() {
                return Err(Error::Csv {
                    line: r.line,
                    message: format!(
                        "duplicate entry for timestep {} bus `{}`",
                        r.timestep, r.bus
                    ),
                });
            }
            up[r.timestep][b] = r.values[0];
            down[r.timestep][b] = r.values[1];
        }
        check_complete(&up, &bus_ids)?;
        Ok(FlexNeeds {
            kind,
            risk_level: None,
            bus_ids,
            up,
            down,
        })
    }

    pub fn load(path: impl AsRef<Path>, kind: FlexKind) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, kind)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleStep {
    pub scenario: usize,
    pub timestep: usize,
    pub binding: Vec<String>,
}

/// Bookkeeping of one chance-constrained aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationMeta {
    pub risk_level: f64,
    pub n_scenarios: usize,
    /// Scenarios discarded at every timestep, ⌊ε·S⌋.
    pub discarded_per_timestep: usize,
    /// Scenario indices retained at each timestep, ascending.
    pub retained: Vec<Vec<usize>>,
    pub infeasible: Vec<InfeasibleStep>,
}

/// Number of scenarios a risk level discards out of `s`.
pub fn discard_count(risk_level: f64, s: usize) -> usize {
    // The nudge absorbs binary round-off such as 0.29 * 100 = 28.999…
    ((risk_level * s as f64) + 1e-9).floor() as usize
}

/// Aggregates scenario solutions under risk level ε: at each timestep the
/// ⌊ε·S⌋ scenarios with the largest total |f| (infeasible ones first) are
/// discarded, and the envelope of the rest is kept separately for up and down.
pub fn aggregate_chance_constrained(
    solves: &[ScenarioSolve],
    risk_level: f64,
    bus_ids: &[String],
) -> Result<(FlexNeeds, AggregationMeta)> {
    if !(0.0..1.0).contains(&risk_level) {
        return Err(Error::InvalidParameter(format!(
            "risk level must lie in [0, 1), got {risk_level}"
        )));
    }
    let Some(first) = solves.first() else {
        return Err(Error::InvalidParameter("no scenario solutions".into()));
    };
    let t_count = first.steps.len();
    if solves.iter().any(|s| s.steps.len() != t_count) {
        return Err(Error::GridMismatch(
            "scenario solutions differ in length".into(),
        ));
    }
    let s_count = solves.len();
    let k = discard_count(risk_level, s_count);

    let mut needs = FlexNeeds::zeros(FlexKind::Predicted, bus_ids.to_vec(), t_count);
    needs.risk_level = Some(risk_level);
    let mut retained_all = Vec::with_capacity(t_count);
    let mut infeasible = Vec::new();

    for t in 0..t_count {
        let mut order: Vec<usize> = (0..s_count).collect();
        let key = |s: usize| {
            let step = &solves[s].steps[t];
            if step.is_feasible() {
                step.objective
            } else {
                f64::INFINITY
            }
        };
        order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
        let mut retained: Vec<usize> = order[k.min(s_count)..].to_vec();
        retained.sort_unstable();

        let mut any = false;
        for &s in &retained {
            let step = &solves[s].steps[t];
            let Some(flex) = &step.flex else {
                continue;
            };
            if flex.len() != bus_ids.len() {
                return Err(Error::GridMismatch(format!(
                    "solution has {} buses, expected {}",
                    flex.len(),
                    bus_ids.len()
                )));
            }
            any = true;
            for (b, &f) in flex.iter().enumerate() {
                if f > 0.0 {
                    needs.up[t][b] = needs.up[t][b].max(f);
                } else if f < 0.0 {
                    needs.down[t][b] = needs.down[t][b].max(-f);
                }
            }
        }
        if !any {
            return Err(Error::AllInfeasible { timestep: t });
        }
        for (s, solve) in solves.iter().enumerate() {
            let step = &solve.steps[t];
            if !step.is_feasible() {
                infeasible.push(InfeasibleStep {
                    scenario: s,
                    timestep: t,
                    binding: step.binding.clone(),
                });
            }
        }
        retained_all.push(retained);
    }
    let meta = AggregationMeta {
        risk_level,
        n_scenarios: s_count,
        discarded_per_timestep: k,
        retained: retained_all,
        infeasible,
    };
    Ok((needs, meta))
}

/// Ground-truth flexibility from one realized profile.
pub fn compute_actual_flex(
    net: &NetworkModel,
    realized: &BusLoads,
    opts: &OpfOptions,
) -> Result<FlexNeeds> {
    let solve = solve_scenario_opf(net, realized, opts)?;
    let mut values = Vec::with_capacity(solve.steps.len());
    for (t, step) in solve.steps.iter().enumerate() {
        let flex = step
            .flex
            .clone()
            .ok_or(Error::AllInfeasible { timestep: t })?;
        values.push(flex);
    }
    let ids = net.buses().iter().map(|b| b.id.clone()).collect();
    Ok(FlexNeeds::from_signed(FlexKind::Actual, ids, &values))
}

/// Activates a scenario's own dispatch, capped by the procured up/down
/// capacity, and reports any limit still violated on the linearized model.
pub fn corrected_dni(
    net: &NetworkModel,
    p: &[f64],
    q: &[f64],
    own_flex: &[f64],
    procured: &FlexNeeds,
    t: usize,
) -> DniReport {
    let corrected: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(b, &load)| {
            let a = own_flex[b].clamp(-procured.down[t][b], procured.up[t][b]);
            load - a
        })
        .collect();
    let op = linearized_flow(net, &corrected, q);
    detect_dni_at(&op, net, t, CORRECTION_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::{branch, bus, doc};

    /// Two buses, thermal limit of exactly `limit_kw` at nominal voltage.
    fn two_bus(limit_kw: f64) -> NetworkModel {
        let mut d = doc(
            vec![bus("root"), bus("leaf")],
            vec![branch("L", "root", "leaf")],
        );
        d.buses[1].has_load = true;
        d.branches[0].r = 0.01;
        d.branches[0].x = 0.01;
        d.branches[0].loading_limit_fraction = 0.4;
        d.branches[0].rating = limit_kw * 1000.0 / 230.0 / 0.4;
        NetworkModel::from_document(d).unwrap()
    }

    fn single(net: &NetworkModel, p: f64, q: f64) -> TimestepSolve {
        solve_timestep(net, &[0.0, p], &[0.0, q], &OpfOptions::default()).unwrap()
    }

    #[test]
    fn slack_system_needs_nothing() {
        let net = two_bus(4.0);
        let s = single(&net, 1.0, 0.0);
        assert_eq!(s.flex, Some(vec![0.0, 0.0]));
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn overload_hand_case() {
        let net = two_bus(4.0);
        let s = single(&net, 6.0, 0.0);
        let f = s.flex.unwrap();
        assert!((f[1] - 2.0).abs() < 1e-6, "{f:?}");
        assert!((s.objective - 2.0).abs() < 1e-6);
    }

    #[test]
    fn octagon_agrees_on_axis() {
        let net = two_bus(4.0);
        let opts = OpfOptions {
            thermal: ThermalModel::Octagon,
            ..Default::default()
        };
        let s = solve_timestep(&net, &[0.0, 6.0], &[0.0, 0.0], &opts).unwrap();
        assert!((s.flex.unwrap()[1] - 2.0).abs() < 1e-6);
        // With Q = 1 kvar the exact circle allows √15 kW, the octagon 4 kW.
        let exact = single(&net, 6.0, 1.0).objective;
        let oct = solve_timestep(&net, &[0.0, 6.0], &[0.0, 1.0], &opts)
            .unwrap()
            .objective;
        assert!((exact - (6.0 - 15f64.sqrt())).abs() < 1e-6);
        assert!((oct - 2.0).abs() < 1e-6);
    }

    #[test]
    fn reactive_overload_is_infeasible() {
        let net = two_bus(4.0);
        let s = single(&net, 1.0, 5.0);
        assert!(!s.is_feasible());
        assert_eq!(s.binding, vec!["thermal:L".to_owned()]);
    }

    #[test]
    fn reverse_flow_curtailment() {
        let net = two_bus(4.0);
        let s = single(&net, -5.0, 0.0);
        assert!((s.flex.unwrap()[1] + 1.0).abs() < 1e-6);
    }

    fn solve_with(flex: Vec<Vec<f64>>) -> ScenarioSolve {
        ScenarioSolve {
            scenario: 0,
            steps: flex
                .into_iter()
                .map(|f| TimestepSolve {
                    objective: f.iter().map(|v: &f64| v.abs()).sum(),
                    flex: Some(f),
                    binding: Vec::new(),
                })
                .collect(),
        }
    }

    #[test]
    fn identity_at_zero_risk() {
        let ids = vec!["a".to_owned(), "b".to_owned()];
        let s = solve_with(vec![vec![1.5, -2.0]]);
        let (needs, meta) = aggregate_chance_constrained(&[s], 0.0, &ids).unwrap();
        assert_eq!(needs.signed(), vec![vec![1.5, -2.0]]);
        assert_eq!(meta.discarded_per_timestep, 0);
    }

    #[test]
    fn hand_ranked_toy_set() {
        let ids = vec!["a".to_owned()];
        let solves: Vec<_> = [10.0, 7.0, 3.0, 0.0]
            .iter()
            .map(|&v| solve_with(vec![vec![v]]))
            .collect();
        let (needs, meta) = aggregate_chance_constrained(&solves, 0.25, &ids).unwrap();
        assert_eq!(meta.discarded_per_timestep, 1);
        assert_eq!(meta.retained[0], vec![1, 2, 3]);
        assert_eq!(needs.value(0, 0), 7.0);
    }

    #[test]
    fn opposite_signs_kept_as_pair() {
        let ids = vec!["a".to_owned()];
        let solves = vec![solve_with(vec![vec![2.0]]), solve_with(vec![vec![-3.0]])];
        let (needs, _) = aggregate_chance_constrained(&solves, 0.0, &ids).unwrap();
        assert_eq!(needs.up[0][0], 2.0);
        assert_eq!(needs.down[0][0], 3.0);
        assert_eq!(needs.value(0, 0), -3.0);
    }

    #[test]
    fn infeasible_ranked_worst() {
        let ids = vec!["a".to_owned()];
        let mut bad = solve_with(vec![vec![0.0]]);
        bad.steps[0].flex = None;
        let solves = vec![solve_with(vec![vec![1.0]]), bad];
        let (needs, meta) = aggregate_chance_constrained(&solves, 0.5, &ids).unwrap();
        assert_eq!(meta.retained[0], vec![0]);
        assert_eq!(needs.value(0, 0), 1.0);
        assert_eq!(meta.infeasible.len(), 1);
        let (_, all) = (0, aggregate_chance_constrained(&solves[1..], 0.0, &ids));
        assert!(matches!(all, Err(Error::AllInfeasible { timestep: 0 })));
    }

    #[test]
    fn risk_level_range() {
        let ids = vec!["a".to_owned()];
        let s = [solve_with(vec![vec![1.0]])];
        assert!(aggregate_chance_constrained(&s, 1.0, &ids).is_err());
        assert!(aggregate_chance_constrained(&s, -0.1, &ids).is_err());
    }

    #[test]
    fn discard_counts() {
        assert_eq!(discard_count(0.25, 200), 50);
        assert_eq!(discard_count(0.29, 100), 29);
        assert_eq!(discard_count(0.0, 200), 0);
        assert_eq!(discard_count(0.7, 200), 140);
    }

    #[test]
    fn actual_flex_overload() {
        let net = two_bus(4.0);
        let mut loads = BusLoads::zeros(2, 2);
        loads.p[0][1] = 6.0;
        loads.p[1][1] = 1.0;
        let act = compute_actual_flex(&net, &loads, &OpfOptions::default()).unwrap();
        assert!((act.value(0, 1) - 2.0).abs() < 1e-6);
        assert_eq!(act.value(1, 1), 0.0);
        assert_eq!(act.kind, FlexKind::Actual);
    }

    #[test]
    fn flex_csv_round_trip() {
        let needs = FlexNeeds::from_signed(
            FlexKind::Predicted,
            vec!["a".into(), "b".into()],
            &[vec![1.25, -0.5], vec![0.0, 3.0]],
        );
        let mut buf = Vec::new();
        needs.write_csv(&mut buf).unwrap();
        assert_eq!(
            FlexNeeds::read_csv(buf.as_slice(), FlexKind::Predicted).unwrap(),
            needs
        );
    }
}
