//! Flexibility needs assessment for radial low-voltage distribution networks.
//!
//! The pipeline reduces a full network to its measured skeleton, turns D-2
//! measurements into aggregated load profiles, draws persistence scenarios,
//! solves a flexibility-minimizing OPF per scenario and aggregates the
//! solutions at a chosen risk level. KPIs compare predicted against actual
//! needs.

pub mod error;
pub mod fixtures;
pub mod kpi;
pub mod loads;
pub mod lp;
pub mod measurement;
pub mod network;
pub mod opf;
pub mod pipeline;
pub mod powerflow;
pub mod reduction;
pub mod scenario;

pub use error::{Error, Result};
pub use kpi::{evaluate, risk_sweep, KpiReport, S3};
pub use loads::{BusLoads, LoadProfile};
pub use measurement::{MeasurementSeries, Sample};
pub use network::{load_network, save_network, NetworkDocument, NetworkModel};
pub use opf::{FlexKind, FlexNeeds, OpfOptions, ThermalModel};
pub use pipeline::{run_pipeline, RunConfig};
pub use powerflow::{linearized_flow, sweep_flow, Dni, DniKind, DniReport, OperatingPoint};
pub use reduction::{reduce_network, RatingRule, ReducedNetwork};
pub use scenario::{generate_scenarios, ScenarioSet};
