//! End-to-end runs: reduce, aggregate D-2 measurements, draw scenarios, solve,
//! aggregate per risk level and, with a realized day, score the predictions.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kpi::{
    kpi_table_csv, kpi_table_markdown, risk_sweep, KpiReport, DEFAULT_TOL_KW, STANDARD_RISK_LEVELS,
};
use crate::loads::LoadProfile;
use crate::measurement::{
    approximate_power_from_current, fill_reactive, fmt_ts, load_measurements, resample,
    MeasurementSeries, DEFAULT_POWER_FACTOR,
};
use crate::network::{load_network, NetworkModel};
use crate::opf::{
    aggregate_chance_constrained, compute_actual_flex, solve_scenarios, AggregationMeta, FlexNeeds,
    OpfOptions, ScenarioSolve, ThermalModel,
};
use crate::powerflow::{detect_dni_at, linearized_flow, sweep_flow, DniReport};
use crate::reduction::{
    aggregate_measured_flows, reduce_network, NetworkSize, RatingRule, ReducedNetwork, SizeReport,
};
use crate::scenario::{generate_scenarios, ScenarioSet, DEFAULT_SCENARIOS, DEFAULT_SIGMA_FRACTION};

pub const DEFAULT_SEED: u64 = 20240612;
pub const DEFAULT_RESOLUTION_MIN: u32 = 60;

/// Everything a run needs. Loadable from JSON; any field may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    /// D-2 measurements the scenarios are drawn around.
    pub measurements: Option<PathBuf>,
    /// Realized measurements of the day being predicted; enables scoring.
    pub realized: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub risk_levels: Vec<f64>,
    pub scenarios: usize,
    pub sigma_fraction: f64,
    pub seed: u64,
    pub power_factor: f64,
    pub resolution_min: u32,
    pub rating_rule: RatingRule,
    pub tol_kw: f64,
    pub workers: usize,
    pub thermal: ThermalModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: None,
            measurements: None,
            realized: None,
            output_dir: PathBuf::from("fna-out"),
            risk_levels: STANDARD_RISK_LEVELS.to_vec(),
            scenarios: DEFAULT_SCENARIOS,
            sigma_fraction: DEFAULT_SIGMA_FRACTION,
            seed: DEFAULT_SEED,
            power_factor: DEFAULT_POWER_FACTOR,
            resolution_min: DEFAULT_RESOLUTION_MIN,
            rating_rule: RatingRule::Max,
            tol_kw: DEFAULT_TOL_KW,
            workers: 1,
            thermal: ThermalModel::Exact,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for (name, path) in [
            ("network", &self.network),
            ("measurements", &self.measurements),
        ] {
            match path {
                None => return bad(format!("`{name}` path is required")),
                Some(p) if !p.exists() => {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                    ))
                }
                _ => {}
            }
        }
        if let Some(p) = &self.realized {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                ));
            }
        }
        if self.risk_levels.is_empty() {
            return bad("at least one risk level is required".into());
        }
        if let Some(e) = self.risk_levels.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return bad(format!("risk level {e} outside [0, 1)"));
        }
        if self.risk_levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("risk levels must be strictly increasing".into());
        }
        if self.scenarios == 0 {
            return bad("scenarios must be ≥ 1".into());
        }
        if !(self.sigma_fraction.is_finite() && self.sigma_fraction >= 0.0) {
            return bad(format!(
                "sigma_fraction {} must be ≥ 0",
                self.sigma_fraction
            ));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad(format!("power_factor {} outside (0, 1]", self.power_factor));
        }
        if self.resolution_min == 0 {
            return bad("resolution_min must be positive".into());
        }
        if self.tol_kw.is_nan() || self.tol_kw < 0.0 {
            return bad(format!("tol_kw {} must be ≥ 0", self.tol_kw));
        }
        if self.workers == 0 {
            return bad("workers must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn opf_options(&self) -> OpfOptions {
        OpfOptions {
            thermal: self.thermal,
            ..OpfOptions::default()
        }
    }
}

/// Turns raw meter series into aggregated loads on the reduced network:
/// fills P from |I| where needed, fills Q at `power_factor`, resamples to
/// `resolution_min` and subtracts nested flows.
pub fn prepare_profile(
    series: &[MeasurementSeries],
    reduced: &ReducedNetwork,
    power_factor: f64,
    resolution_min: u32,
) -> Result<(Vec<NaiveDateTime>, LoadProfile, Vec<String>)> {
    let mut prepared = Vec::with_capacity(series.len());
    let mut notes = Vec::new();
    for s in series {
        let Some(loc) = reduced
            .net
            .measurements()
            .iter()
            .find(|m| m.id == s.location_id)
        else {
            return Err(Error::UnknownLocation(s.location_id.clone()));
        };
        let k = reduced
            .net
            .branch_index(&loc.branch_id)
            .expect("reduced measurements reference reduced branches");
        let mut s = approximate_power_from_current(s, reduced.net.branch_voltage(k))?;
        if s.approximated {
            notes.push(format!(
                "`{}`: active power approximated from current at nominal voltage; overestimates flow and reads injections as load",
                s.location_id
            ));
        }
        s = fill_reactive(&s, power_factor)?;
        if s.resolution != resolution_min {
            s = resample(&s, resolution_min)?;
        }
        prepared.push(s);
    }
    let (ts, profile) = aggregate_measured_flows(&prepared, reduced)?;
    Ok((ts, profile, notes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub seed: u64,
    pub network_size: BTreeMap<&'static str, NetworkSize>,
    pub reduction_warnings: Vec<String>,
    pub measurement_notes: Vec<String>,
    pub timesteps: Vec<String>,
    pub infeasible_steps: usize,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per stage; the only non-reproducible content.
    pub timings_s: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub size: SizeReport,
    pub predictions: Vec<(FlexNeeds, AggregationMeta)>,
    pub actual: Option<FlexNeeds>,
    pub reports: Vec<KpiReport>,
    pub realized_dni: Option<DniReport>,
    pub outputs: Vec<PathBuf>,
}

fn risk_tag(eps: f64) -> String {
    format!("{eps}")
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

/// Runs the full pipeline and writes every artifact under `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut BTreeMap<&'static str, f64>| {
        timings.insert(name, clock.elapsed().as_secs_f64());
        clock = Instant::now();
    };
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut out = Outputs {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };

    let full = load_network(cfg.network.as_ref().expect("validated"))?;
    let reduced = reduce_network(&full, cfg.rating_rule)?;
    let size = SizeReport {
        name: cfg
            .network
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        original: NetworkSize::of(&full),
        reduced: NetworkSize::of(&reduced.net),
    };
    out.text("reduced_network.json", &(reduced.net.to_json() + "\n"))?;
    out.text(
        "reduction_mapping.json",
        &(serde_json::to_string_pretty(&reduced.mapping())? + "\n"),
    )?;
    out.text("size_report.txt", &size.to_string())?;
    lap("reduce", &mut timings);

    let d2 = load_measurements(cfg.measurements.as_ref().expect("validated"), Some(&full))?;
    let (timestamps, mean, mut notes) =
        prepare_profile(&d2, &reduced, cfg.power_factor, cfg.resolution_min)?;
    mean.save(out.path("mean_profile.csv"))?;
    lap("measurements", &mut timings);

    let set = generate_scenarios(&mean, cfg.sigma_fraction, cfg.scenarios, cfg.seed)?;
    let scen_csv = out.path("scenarios.csv");
    let scen_meta = out.path("scenarios_meta.json");
    set.save(scen_csv, scen_meta)?;
    lap("scenarios", &mut timings);

    let opts = cfg.opf_options();
    let solves = solve_scenarios(&reduced.net, &set, &opts, cfg.workers)?;
    let infeasible_steps = solves
        .iter()
        .flat_map(|s| &s.steps)
        .filter(|s| !s.is_feasible())
        .count();
    lap("opf", &mut timings);

    let bus_ids: Vec<String> = reduced.net.buses().iter().map(|b| b.id.clone()).collect();
    let mut predictions = Vec::with_capacity(cfg.risk_levels.len());
    for &eps in &cfg.risk_levels {
        let (needs, meta) = aggregate_chance_constrained(&solves, eps, &bus_ids)?;
        needs.save(out.path(&format!("flex_pred_eps{}.csv", risk_tag(eps))))?;
        out.text(
            &format!("flex_pred_eps{}.json", risk_tag(eps)),
            &(serde_json::to_string_pretty(&run_metadata(&meta))? + "\n"),
        )?;
        predictions.push((needs, meta));
    }
    write_plot_csvs(&mut out, &reduced.net, &set, &predictions)?;
    lap("aggregate", &mut timings);

    let mut actual = None;
    let mut reports = Vec::new();
    let mut realized_dni = None;
    if let Some(path) = &cfg.realized {
        let demo = load_measurements(path, Some(&full))?;
        let (demo_ts, realized, demo_notes) =
            prepare_profile(&demo, &reduced, cfg.power_factor, cfg.resolution_min)?;
        notes.extend(demo_notes);
        if demo_ts.len() != timestamps.len() {
            return Err(Error::GridMismatch(format!(
                "realized day has {} timesteps, D-2 has {}",
                demo_ts.len(),
                timestamps.len()
            )));
        }
        realized.save(out.path("realized_profile.csv"))?;
        let loads = realized.to_bus_loads(&reduced.net)?;
        let act = compute_actual_flex(&reduced.net, &loads, &opts)?;
        act.save(out.path("flex_actual.csv"))?;

        let mut dni = DniReport::default();
        for t in 0..loads.timesteps() {
            let op = sweep_flow(&reduced.net, &loads.p[t], &loads.q[t], 1e-10, 200);
            dni.extend(detect_dni_at(&op, &reduced.net, t, 0.0));
        }
        write_dni_csv(&mut out, "dni_realized.csv", &dni)?;

        reports = risk_sweep(&solves, &act, &cfg.risk_levels, cfg.tol_kw)?
            .into_iter()
            .map(|p| p.report)
            .collect();
        out.text(
            "kpi.json",
            &(serde_json::to_string_pretty(&reports)? + "\n"),
        )?;
        out.text("kpi_table.md", &kpi_table_markdown(&reports))?;
        out.text("kpi_table.csv", &kpi_table_csv(&reports))?;
        actual = Some(act);
        realized_dni = Some(dni);
        lap("evaluate", &mut timings);
    }

    let manifest_path = out.dir.join("manifest.json");
    let manifest = Manifest {
        tool: "flexneeds",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        seed: cfg.seed,
        network_size: BTreeMap::from([("original", size.original), ("reduced", size.reduced)]),
        reduction_warnings: reduced.warnings.clone(),
        measurement_notes: notes,
        timesteps: timestamps.iter().map(|t| fmt_ts(*t)).collect(),
        infeasible_steps,
        outputs: out
            .files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        timings_s: timings,
    };
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )
    .map_err(|e| Error::io(&manifest_path, e))?;
    out.files.push(manifest_path);

    Ok(RunSummary {
        size,
        predictions,
        actual,
        reports,
        realized_dni,
        outputs: out.files,
    })
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    risk_level: f64,
    n_scenarios: usize,
    discarded_per_timestep: usize,
    infeasible: &'a [crate::opf::InfeasibleStep],
}

fn run_metadata(meta: &AggregationMeta) -> RunMetadata<'_> {
    RunMetadata {
        risk_level: meta.risk_level,
        n_scenarios: meta.n_scenarios,
        discarded_per_timestep: meta.discarded_per_timestep,
        infeasible: &meta.infeasible,
    }
}

pub fn write_dni_csv_to<W: std::io::Write>(dni: &DniReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(["timestep", "element", "kind", "magnitude"])
        .map_err(err)?;
    for d in &dni.entries {
        let kind = serde_json::to_value(d.kind)?;
        w.write_record([
            d.timestep.to_string(),
            d.element.clone(),
            kind.as_str().unwrap_or_default().to_owned(),
            d.magnitude.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

fn write_dni_csv(out: &mut Outputs, name: &str, dni: &DniReport) -> Result<()> {
    let p = out.path(name);
    let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
    write_dni_csv_to(dni, f)
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn write_plot_csvs(
    out: &mut Outputs,
    net: &NetworkModel,
    set: &ScenarioSet,
    predictions: &[(FlexNeeds, AggregationMeta)],
) -> Result<()> {
    let mut temporal = String::from("risk_level,timestep,up_kw,down_kw\n");
    let mut locational = String::from("risk_level,bus,up_kw,down_kw\n");
    for (needs, _) in predictions {
        let eps = needs.risk_level.unwrap_or(0.0);
        for (t, (u, d)) in needs.temporal_totals().into_iter().enumerate() {
            temporal.push_str(&format!("{eps},{t},{u},{d}\n"));
        }
        for (b, (u, d)) in needs.locational_totals().into_iter().enumerate() {
            locational.push_str(&format!("{eps},{},{u},{d}\n", needs.bus_ids[b]));
        }
    }
    out.text("plot_temporal_flex.csv", &temporal)?;
    out.text("plot_locational_flex.csv", &locational)?;

    // Uncorrected loading spread over scenarios, per branch and timestep.
    let t_count = set.meta.timesteps;
    let m = net.branch_count();
    let mut loading = vec![vec![Vec::with_capacity(set.len()); m]; t_count];
    for s in 0..set.len() {
        let loads = set.scenario(s).to_bus_loads(net)?;
        for t in 0..t_count {
            let op = linearized_flow(net, &loads.p[t], &loads.q[t]);
            for (k, cell) in loading[t].iter_mut().enumerate() {
                cell.push(op.branch_loading_pct(net, k));
            }
        }
    }
    let mut fan = String::from("timestep,branch,p05,p25,p50,p75,p95,limit_pct\n");
    for (t, row) in loading.iter_mut().enumerate() {
        for (k, values) in row.iter_mut().enumerate() {
            values.sort_by(f64::total_cmp);
            fan.push_str(&format!(
                "{t},{},{},{},{},{},{},{}\n",
                net.branches()[k].id,
                percentile(values, 5.0),
                percentile(values, 25.0),
                percentile(values, 50.0),
                percentile(values, 75.0),
                percentile(values, 95.0),
                100.0 * net.branches()[k].loading_limit_fraction
            ));
        }
    }
    out.text("plot_loading_fan.csv", &fan)
}

/// Solves and aggregates without touching the filesystem (library use).
pub fn predict(
    reduced: &ReducedNetwork,
    mean: &LoadProfile,
    cfg: &RunConfig,
) -> Result<(ScenarioSet, Vec<ScenarioSolve>)> {
    let set = generate_scenarios(mean, cfg.sigma_fraction, cfg.scenarios, cfg.seed)?;
    let solves = solve_scenarios(&reduced.net, &set, &cfg.opf_options(), cfg.workers)?;
    Ok((set, solves))
}

/// Writes `text` to `path`, naming the path on failure.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
