//! Persistence-model Monte Carlo scenarios around a D-2 mean profile.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{check_complete, csv_err, read_long_rows, LoadProfile};

pub const DEFAULT_SCENARIOS: usize = 200;
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.30;

pub const CSV_HEADER: [&str; 5] = ["scenario", "timestep", "bus", "p_kw", "q_kvar"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub n_scenarios: usize,
    pub timesteps: usize,
    pub bus_ids: Vec<String>,
    /// Absent when the set was read from a CSV without its metadata sidecar.
    pub seed: Option<u64>,
    pub sigma_fraction: Option<f64>,
}

/// S × T × L load scenarios. Scenario 0 is the unperturbed mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub meta: ScenarioMeta,
    /// `p[s][t][l]` in kW.
    pub p: Vec<Vec<Vec<f64>>>,
    /// `q[s][t][l]` in kvar.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn scenario(&self, s: usize) -> LoadProfile {
        LoadProfile {
            bus_ids: self.meta.bus_ids.clone(),
            p: self.p[s].clone(),
            q: self.q[s].clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(CSV_HEADER).map_err(csv_err)?;
        for s in 0..self.len() {
            for t in 0..self.meta.timesteps {
                for (l, bus) in self.meta.bus_ids.iter().enumerate() {
                    wtr.write_record([
                        s.to_string(),
                        t.to_string(),
                        bus.clone(),
                        self.p[s][t][l].to_string(),
                        self.q[s][t][l].to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Reads the long CSV format. Seed and σ are not in the CSV; they come from
    /// the metadata sidecar when one is supplied.
    pub fn read_csv<R: Read>(reader: R, meta: Option<&ScenarioMeta>) -> Result<Self> {
        let rows = read_long_rows(reader, &CSV_HEADER)?;
        let mut bus_ids: Vec<String> = Vec::new();
        let (mut max_s, mut max_t) = (0usize, 0usize);
        let mut scen = Vec::with_capacity(rows.len());
        for r in &rows {
            let s: usize = r.prefix[0].parse().map_err(|_| Error::Csv {
                line: r.line,
                message: format!("bad scenario index {:?}", r.prefix[0]),
            })?;
            if s > 10_000_000 {
                return Err(Error::Csv {
                    line: r.line,
                    message: format!("scenario index {s} out of range"),
                });
            }
            if !bus_ids.contains(&r.bus) {
                bus_ids.push(r.bus.clone());
            }
            max_s = max_s.max(s);
            max_t = max_t.max(r.timestep);
            scen.push(s);
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                line: 1,
                message: "scenario file has no rows".into(),
            });
        }
        if let Some(m) = meta {
            if m.n_scenarios != max_s + 1 || m.timesteps != max_t + 1 {
                return Err(Error::GridMismatch(format!(
                    "metadata says {}×{}, file holds {}×{}",
                    m.n_scenarios,
                    m.timesteps,
                    max_s + 1,
                    max_t + 1
                )));
            }
        }
        let cells = (max_s + 1)
            .checked_mul(max_t + 1)
            .and_then(|c| c.checked_mul(bus_ids.len()))
            .filter(|&c| c <= rows.len())
            .ok_or_else(|| Error::Csv {
                line: 0,
                message: "scenario grid is incomplete".into(),
            })?;
        debug_assert!(cells <= rows.len());
        let blank = vec![vec![f64::NAN; bus_ids.len()]; max_t + 1];
        let mut p = vec![blank.clone(); max_s + 1];
        let mut q = p.clone();
        for (r, &s) in rows.iter().zip(&scen) {
            let l = bus_ids
                .iter()
                .position(|b| *b == r.bus)
                .expect("collected above");
            if !p[s][r.timestep][l].is_nan() {
                return Err(Error::Csv {
                    line: r.line,
                    message: format!(
                        "duplicate entry for scenario {s} timestep {} bus `{}`",
                        r.timestep, r.bus
                    ),
                });
            }
            p[s][r.timestep][l] = r.values[0];
            q[s][r.timestep][l] = r.values[1];
        }
        for grid in &p {
            check_complete(grid, &bus_ids)?;
        }
        let meta = match meta {
            Some(m) if m.bus_ids == bus_ids => m.clone(),
            Some(_) => {
                return Err(Error::GridMismatch(
                    "bus ids in scenario file differ from metadata".into(),
                ))
            }
            None => ScenarioMeta {
                n_scenarios: max_s + 1,
                timesteps: max_t + 1,
                bus_ids,
                seed: None,
                sigma_fraction: None,
            },
        };
        Ok(ScenarioSet { meta, p, q })
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let file = File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(file)?;
        let meta_path = meta_path.as_ref();
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(meta_path, json).map_err(|e| Error::io(meta_path, e))
    }

    pub fn load(csv_path: impl AsRef<Path>, meta_path: Option<&Path>) -> Result<Self> {
        let meta = match meta_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Some(serde_json::from_str::<ScenarioMeta>(&text)?)
            }
            None => None,
        };
        let csv_path = csv_path.as_ref();
        let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
        Self::read_csv(file, meta.as_ref())
    }
}

/// Draws `n_scenarios` profiles: scenario 0 is `mean` itself, every other cell
/// is `mean + σ·|mean|·z` with independent standard-normal `z` from a ChaCha8
/// stream seeded by `seed`, drawn in (scenario, timestep, point) order. P and Q
/// of a cell share the same `z`.
pub fn generate_scenarios(
    mean: &LoadProfile,
    sigma_fraction: f64,
    n_scenarios: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    if !(sigma_fraction.is_finite() && sigma_fraction >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma fraction must be finite and non-negative, got {sigma_fraction}"
        )));
    }
    if n_scenarios == 0 {
        return Err(Error::InvalidParameter("need at least one scenario".into()));
    }
    if mean
        .p
        .iter()
        .chain(&mean.q)
        .flatten()
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidParameter("mean profile is not finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(n_scenarios);
    let mut q = Vec::with_capacity(n_scenarios);
    p.push(mean.p.clone());
    q.push(mean.q.clone());
    for _ in 1..n_scenarios {
        let mut ps = mean.p.clone();
        let mut qs = mean.q.clone();
        for (prow, qrow) in ps.iter_mut().zip(qs.iter_mut()) {
            for (pv, qv) in prow.iter_mut().zip(qrow.iter_mut()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *pv += sigma_fraction * pv.abs() * z;
                *qv += sigma_fraction * qv.abs() * z;
            }
        }
        p.push(ps);
        q.push(qs);
    }
    Ok(ScenarioSet {
        meta: ScenarioMeta {
            n_scenarios,
            timesteps: mean.timesteps(),
            bus_ids: mean.bus_ids.clone(),
            seed: Some(seed),
            sigma_fraction: Some(sigma_fraction),
        },
        p,
        q,
    })
}
