//! `fna`: command-line front end for flexibility needs assessment.
//!
//! Exit codes: 0 ok, 1 input error, 2 infeasibility, 3 internal error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};

use flexneeds::fixtures;
use flexneeds::kpi::{evaluate, kpi_table_csv, kpi_table_markdown, DEFAULT_TOL_KW};
use flexneeds::loads::LoadProfile;
use flexneeds::measurement::load_measurements;
use flexneeds::opf::{
    aggregate_chance_constrained, compute_actual_flex, solve_scenarios, FlexKind, FlexNeeds,
    OpfOptions, ThermalModel,
};
use flexneeds::pipeline::{prepare_profile, run_pipeline, RunConfig, RunSummary};
use flexneeds::powerflow::{linearized_flow, sweep_flow};
use flexneeds::reduction::{
    reduce_network, NetworkSize, RatingRule, ReducedNetwork, ReductionMapping, SizeReport,
};
use flexneeds::scenario::{generate_scenarios, ScenarioSet};
use flexneeds::{load_network, Error, NetworkModel};

const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fna",
    version,
    about = "Flexibility needs assessment for radial LV networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a network to its measured skeleton and print the size table.
    Reduce(ReduceArgs),
    /// Aggregate a measurement file onto the reduced network's load buses.
    Measurements(MeasurementsArgs),
    /// Draw load scenarios around the aggregated D-2 profile.
    Scenarios(ScenariosArgs),
    /// Solve every scenario and aggregate flexibility needs per risk level.
    Fna(FnaArgs),
    /// Compute the flexibility a realized day actually needed.
    Actual(ActualArgs),
    /// Score predicted flexibility needs against actual ones.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline over a list of risk levels.
    Sweep(SweepArgs),
    /// Run the pipeline on the built-in synthetic demo networks.
    Demo(DemoArgs),
    /// Dump a power flow solution per timestep as CSV.
    Powerflow(PowerflowArgs),
}

#[derive(Args)]
struct ReduceArgs {
    /// Full network JSON.
    #[arg(long)]
    network: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "fna-out")]
    out: PathBuf,
    /// Rating of a merged series chain: `max` or `min` of its segments.
    #[arg(long, default_value = "max")]
    rating_rule: RatingRule,
}

/// Where a reduced network comes from: either reduce a full network now, or
/// load a saved reduced network with its mapping sidecar.
#[derive(Args)]
struct ReducedSource {
    /// Full network JSON; reduced on the fly.
    #[arg(long, conflicts_with_all = ["reduced", "mapping"])]
    network: Option<PathBuf>,
    /// Reduced network JSON written by `reduce`.
    #[arg(long, requires = "mapping")]
    reduced: Option<PathBuf>,
    /// Mapping sidecar written by `reduce`.
    #[arg(long, requires = "reduced")]
    mapping: Option<PathBuf>,
    #[arg(long, default_value = "max")]
    rating_rule: RatingRule,
}

impl ReducedSource {
    fn load(&self) -> anyhow::Result<ReducedNetwork> {
        match (&self.network, &self.reduced, &self.mapping) {
            (Some(n), _, _) => Ok(reduce_network(&load_network(n)?, self.rating_rule)?),
            (None, Some(r), Some(m)) => {
                let net = load_network(r)?;
                let text = read(m)?;
                let mapping: ReductionMapping = serde_json::from_str(&text)
                    .map_err(Error::from)
                    .with_context(|| format!("parsing {}", m.display()))?;
                Ok(ReducedNetwork::from_parts(net, mapping)?)
            }
            _ => Err(usage(
                "give --network, or --reduced together with --mapping",
            )),
        }
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// Measurement CSV (timestamp, location_id, p_kw, q_kvar, i_a).
    #[arg(long)]
    measurements: PathBuf,
    /// Power factor used where reactive power is missing.
    #[arg(long, default_value_t = flexneeds::measurement::DEFAULT_POWER_FACTOR)]
    pf: f64,
    /// Target resolution in minutes.
    #[arg(long, default_value_t = flexneeds::pipeline::DEFAULT_RESOLUTION_MIN)]
    resolution: u32,
}

#[derive(Args)]
struct MeasurementsArgs {
    #[command(flatten)]
    source: ReducedSource,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Output load profile CSV.
    #[arg(long, default_value = "fna-out/mean_profile.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct ScenariosArgs {
    #[command(flatten)]
    source: ReducedSource,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Number of scenarios.
    #[arg(short = 'S', long, default_value_t = flexneeds::scenario::DEFAULT_SCENARIOS)]
    scenarios: usize,
    /// Standard deviation as a fraction of the mean.
    #[arg(long, default_value_t = flexneeds::scenario::DEFAULT_SIGMA_FRACTION)]
    sigma: f64,
    #[arg(long, default_value_t = flexneeds::pipeline::DEFAULT_SEED)]
    seed: u64,
    /// Output directory for scenarios.csv and scenarios_meta.json.
    #[arg(long, default_value = "fna-out")]
    out: PathBuf,
}

#[derive(Args)]
struct OpfArgs {
    /// Thermal limit model: `exact` or `octagon`.
    #[arg(long, default_value = "exact")]
    thermal: ThermalModel,
    /// Worker threads for scenario solving; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl OpfArgs {
    fn options(&self) -> OpfOptions {
        OpfOptions {
            thermal: self.thermal,
            ..OpfOptions::default()
        }
    }
}

#[derive(Args)]
struct FnaArgs {
    /// Network the scenarios refer to (normally the reduced one).
    #[arg(long)]
    network: PathBuf,
    /// Scenario CSV (scenario, timestep, bus, p_kw, q_kvar).
    #[arg(long)]
    scenarios: PathBuf,
    /// Scenario metadata JSON; checked against the CSV when given.
    #[arg(long)]
    scenarios_meta: Option<PathBuf>,
    /// Risk level ε in [0, 1); repeat for several.
    #[arg(long = "risk", required = true)]
    risk: Vec<f64>,
    #[command(flatten)]
    opf: OpfArgs,
    #[arg(long, default_value = "fna-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ActualArgs {
    #[command(flatten)]
    source: ReducedSource,
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    opf: OpfArgs,
    /// Output flexibility CSV.
    #[arg(long, default_value = "fna-out/flex_actual.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted flexibility CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Actual flexibility CSV.
    #[arg(long)]
    actual: PathBuf,
    /// Threshold in kW for the confusion counts.
    #[arg(long, default_value_t = DEFAULT_TOL_KW)]
    tol: f64,
    /// Risk level to record in the report.
    #[arg(long)]
    risk: Option<f64>,
    #[arg(long, default_value = "fna-out")]
    out: PathBuf,
}

/// Run options; each flag overrides the matching field of `--config`.
#[derive(Args)]
struct SweepArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full network JSON.
    #[arg(long)]
    network: Option<PathBuf>,
    /// D-2 measurement CSV.
    #[arg(long)]
    measurements: Option<PathBuf>,
    /// Realized measurements of the predicted day; enables scoring.
    #[arg(long)]
    realized: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Risk level; repeat for several. Defaults to the standard grid.
    #[arg(long = "risk")]
    risk: Vec<f64>,
    /// Number of scenarios.
    #[arg(short = 'S', long)]
    scenarios: Option<usize>,
    /// Standard deviation as a fraction of the mean.
    #[arg(long)]
    sigma: Option<f64>,
    /// Scenario RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Power factor used where reactive power is missing.
    #[arg(long)]
    pf: Option<f64>,
    /// Target resolution in minutes.
    #[arg(long)]
    resolution: Option<u32>,
    /// Rating of a merged series chain: `max` or `min`.
    #[arg(long)]
    rating_rule: Option<RatingRule>,
    /// Threshold in kW for the confusion counts.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads for scenario solving.
    #[arg(long)]
    workers: Option<usize>,
    /// Thermal limit model: `exact` or `octagon`.
    #[arg(long)]
    thermal: Option<ThermalModel>,
}

impl SweepArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    cfg.$field = v;
                }
            };
        }
        if self.network.is_some() {
            cfg.network = self.network.clone();
        }
        if self.measurements.is_some() {
            cfg.measurements = self.measurements.clone();
        }
        if self.realized.is_some() {
            cfg.realized = self.realized.clone();
        }
        set!(output_dir, self.out);
        if !self.risk.is_empty() {
            cfg.risk_levels = self.risk.clone();
        }
        set!(scenarios, self.scenarios);
        set!(sigma_fraction, self.sigma);
        set!(seed, self.seed);
        set!(power_factor, self.pf);
        set!(resolution_min, self.resolution);
        set!(rating_rule, self.rating_rule);
        set!(tol_kw, self.tol);
        set!(workers, self.workers);
        set!(thermal, self.thermal);
        Ok(cfg)
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DemoFixture {
    Mlq,
    Mfn,
    All,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, value_enum, default_value = "all")]
    fixture: DemoFixture,
    #[arg(long, default_value = "fna-demo")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Risk level; repeat for several. Defaults to the standard grid.
    #[arg(long = "risk")]
    risk: Vec<f64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FlowMethod {
    /// Full AC backward/forward sweep.
    Sweep,
    /// Linearized flow.
    Linear,
}

#[derive(Args)]
struct PowerflowArgs {
    /// Network JSON whose bus ids the load profile uses.
    #[arg(long)]
    network: PathBuf,
    /// Load profile CSV (timestep, bus, p_kw, q_kvar).
    #[arg(long)]
    loads: PathBuf,
    #[arg(long, value_enum, default_value = "sweep")]
    method: FlowMethod,
    /// Only this timestep; all when omitted.
    #[arg(long)]
    timestep: Option<usize>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn usage(msg: &str) -> anyhow::Error {
    Error::InvalidParameter(msg.to_owned()).into()
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io {
            path: path.to_owned(),
            source: e,
        }
        .into()
    })
}

fn mkdir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io {
            path: dir.to_owned(),
            source: e,
        }
        .into()
    })
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    Ok(flexneeds::pipeline::write_text(path, text)?)
}

fn risk_file(eps: f64, ext: &str) -> String {
    format!("flex_pred_eps{eps}.{ext}")
}

fn cmd_reduce(a: &ReduceArgs) -> anyhow::Result<()> {
    let full = load_network(&a.network)?;
    let reduced = reduce_network(&full, a.rating_rule)?;
    let report = SizeReport {
        name: a
            .network
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        original: NetworkSize::of(&full),
        reduced: NetworkSize::of(&reduced.net),
    };
    mkdir(&a.out)?;
    write(
        &a.out.join("reduced_network.json"),
        &(reduced.net.to_json() + "\n"),
    )?;
    write(
        &a.out.join("reduction_mapping.json"),
        &(serde_json::to_string_pretty(&reduced.mapping())? + "\n"),
    )?;
    write(&a.out.join("size_report.txt"), &report.to_string())?;
    for w in &reduced.warnings {
        eprintln!("warning: {w}");
    }
    out(&report.to_string());
    Ok(())
}

fn profile(
    source: &ReducedSource,
    p: &ProfileArgs,
) -> anyhow::Result<(ReducedNetwork, LoadProfile)> {
    let reduced = source.load()?;
    let series = load_measurements(&p.measurements, None)?;
    let (_, profile, notes) = prepare_profile(&series, &reduced, p.pf, p.resolution)?;
    for n in notes {
        eprintln!("note: {n}");
    }
    Ok((reduced, profile))
}

fn cmd_measurements(a: &MeasurementsArgs) -> anyhow::Result<()> {
    let (_, profile) = profile(&a.source, &a.profile)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    profile.save(&a.out)?;
    Ok(())
}

fn cmd_scenarios(a: &ScenariosArgs) -> anyhow::Result<()> {
    let (_, mean) = profile(&a.source, &a.profile)?;
    let set = generate_scenarios(&mean, a.sigma, a.scenarios, a.seed)?;
    mkdir(&a.out)?;
    set.save(
        a.out.join("scenarios.csv"),
        a.out.join("scenarios_meta.json"),
    )?;
    Ok(())
}

fn cmd_fna(a: &FnaArgs) -> anyhow::Result<()> {
    let net = load_network(&a.network)?;
    let set = ScenarioSet::load(&a.scenarios, a.scenarios_meta.as_deref())?;
    let mut levels = a.risk.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let solves = solve_scenarios(&net, &set, &a.opf.options(), a.opf.workers)?;
    let bus_ids: Vec<String> = net.buses().iter().map(|b| b.id.clone()).collect();
    mkdir(&a.out)?;
    for eps in levels {
        let (needs, meta) = aggregate_chance_constrained(&solves, eps, &bus_ids)?;
        needs.save(a.out.join(risk_file(eps, "csv")))?;
        let json = serde_json::json!({
            "risk_level": meta.risk_level,
            "n_scenarios": meta.n_scenarios,
            "discarded_per_timestep": meta.discarded_per_timestep,
            "infeasible": meta.infeasible,
        });
        write(
            &a.out.join(risk_file(eps, "json")),
            &(serde_json::to_string_pretty(&json)? + "\n"),
        )?;
        let (up, down) = needs
            .temporal_totals()
            .iter()
            .fold((0.0, 0.0), |(u, d), &(a, b)| (u + a, d + b));
        out(&format!(
            "eps {eps}: discarded {}/{} per timestep, up {up:.3} kW, down {down:.3} kW\n",
            meta.discarded_per_timestep, meta.n_scenarios
        ));
    }
    Ok(())
}

fn cmd_actual(a: &ActualArgs) -> anyhow::Result<()> {
    let (reduced, realized) = profile(&a.source, &a.profile)?;
    let loads = realized.to_bus_loads(&reduced.net)?;
    let act = compute_actual_flex(&reduced.net, &loads, &a.opf.options())?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    act.save(&a.out)?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let mut pred = FlexNeeds::load(&a.pred, FlexKind::Predicted)?;
    pred.risk_level = a.risk;
    let act = FlexNeeds::load(&a.actual, FlexKind::Actual)?;
    let report = evaluate(&pred, &act, a.tol)?;
    let reports = [report];
    mkdir(&a.out)?;
    write(
        &a.out.join("kpi.json"),
        &(serde_json::to_string_pretty(&reports)? + "\n"),
    )?;
    let md = kpi_table_markdown(&reports);
    write(&a.out.join("kpi_table.md"), &md)?;
    write(&a.out.join("kpi_table.csv"), &kpi_table_csv(&reports))?;
    out(&md);
    Ok(())
}

/// Writes to stdout. A reader that hung up early (`fna ... | head`) is not an
/// error worth a panic, so that case ends the process quietly.
fn out(text: &str) {
    use std::io::Write as _;
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error [cli]: writing to stdout: {e}");
        std::process::exit(3);
    }
}

fn print_summary(s: &RunSummary) {
    out(&s.size.to_string());
    if !s.reports.is_empty() {
        out(&format!("\n{}", kpi_table_markdown(&s.reports)));
    }
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let summary = run_pipeline(&a.config()?)?;
    print_summary(&summary);
    Ok(())
}

fn cmd_demo(a: &DemoArgs) -> anyhow::Result<()> {
    let chosen = match a.fixture {
        DemoFixture::Mlq => vec![fixtures::mlq()],
        DemoFixture::Mfn => vec![fixtures::mfn()],
        DemoFixture::All => vec![fixtures::mlq(), fixtures::mfn()],
    };
    for fx in chosen {
        let dir = a.out.join(fx.name);
        let input = dir.join("input");
        fx.write(&input)?;
        let mut cfg = RunConfig {
            network: Some(input.join("network.json")),
            measurements: Some(input.join("measurements_d2.csv")),
            realized: Some(input.join("measurements_demo.csv")),
            output_dir: dir.clone(),
            workers: a.workers,
            ..RunConfig::default()
        };
        if !a.risk.is_empty() {
            cfg.risk_levels = a.risk.clone();
        }
        let summary = run_pipeline(&cfg)?;
        out(&format!("== {} ==\n", fx.name));
        print_summary(&summary);
        out("\n");
    }
    Ok(())
}

fn cmd_powerflow(a: &PowerflowArgs) -> anyhow::Result<()> {
    let net: NetworkModel = load_network(&a.network)?;
    let profile = LoadProfile::load(&a.loads)?;
    let loads = profile.to_bus_loads(&net)?;
    let steps: Vec<usize> = match a.timestep {
        Some(t) if t >= loads.timesteps() => {
            return Err(usage(&format!(
                "timestep {t} out of range; profile has {}",
                loads.timesteps()
            )))
        }
        Some(t) => vec![t],
        None => (0..loads.timesteps()).collect(),
    };
    let mut text = String::new();
    for (i, &t) in steps.iter().enumerate() {
        let op = match a.method {
            FlowMethod::Sweep => sweep_flow(&net, &loads.p[t], &loads.q[t], 1e-10, 200),
            FlowMethod::Linear => linearized_flow(&net, &loads.p[t], &loads.q[t]),
        };
        let mut buf = Vec::new();
        op.write_csv(&net, &mut buf)?;
        let body = String::from_utf8(buf).context("power flow CSV is not UTF-8")?;
        for (j, line) in body.lines().enumerate() {
            match (i, j) {
                (0, 0) => text.push_str(&format!("timestep,{line}\n")),
                (_, 0) => {}
                _ => text.push_str(&format!("{t},{line}\n")),
            }
        }
    }
    match &a.out {
        Some(p) => write(p, &text),
        None => {
            out(&text);
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Reduce(a) => cmd_reduce(a),
        Command::Measurements(a) => cmd_measurements(a),
        Command::Scenarios(a) => cmd_scenarios(a),
        Command::Fna(a) => cmd_fna(a),
        Command::Actual(a) => cmd_actual(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Demo(a) => cmd_demo(a),
        Command::Powerflow(a) => cmd_powerflow(a),
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_infeasibility() => EXIT_INFEASIBLE,
        Some(Error::IterationCap(_)) => EXIT_INTERNAL,
        Some(_) => EXIT_INPUT,
        None => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            let module = err
                .downcast_ref::<Error>()
                .map(Error::module)
                .unwrap_or("fna");
            eprintln!("error [{module}]: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
