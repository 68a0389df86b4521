//! Load profiles: per-timestep P/Q at the aggregated buses of a reduced network.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::NetworkModel;

pub const CSV_HEADER: [&str; 4] = ["timestep", "bus", "p_kw", "q_kvar"];

/// T × L load values (kW / kvar, positive = consumption) at named buses.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub bus_ids: Vec<String>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl LoadProfile {
    pub fn timesteps(&self) -> usize {
        self.p.len()
    }

    pub fn points(&self) -> usize {
        self.bus_ids.len()
    }

    /// Expands to a dense T × B grid over all buses of `net`.
    pub fn to_bus_loads(&self, net: &NetworkModel) -> Result<BusLoads> {
        let columns = self
            .bus_ids
            .iter()
            .map(|id| {
                net.bus_index(id).ok_or_else(|| Error::DanglingReference {
                    kind: "bus",
                    id: id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let b = net.bus_count();
        let mut out = BusLoads::zeros(self.timesteps(), b);
        for t in 0..self.timesteps() {
            for (l, &col) in columns.iter().enumerate() {
                out.p[t][col] += self.p[t][l];
                out.q[t][col] += self.q[t][l];
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(CSV_HEADER).map_err(csv_err)?;
        for t in 0..self.timesteps() {
            for (l, id) in self.bus_ids.iter().enumerate() {
                wtr.write_record([
                    t.to_string(),
                    id.clone(),
                    self.p[t][l].to_string(),
                    self.q[t][l].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// Parses the long format; every (timestep, bus) pair must appear exactly once.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_long_rows(reader, &CSV_HEADER)?;
        let mut bus_ids: Vec<String> = Vec::new();
        let mut max_t = 0usize;
        for r in &rows {
            if !bus_ids.contains(&r.bus) {
                bus_ids.push(r.bus.clone());
            }
            max_t = max_t.max(r.timestep);
        }
        let t_count = if rows.is_empty() { 0 } else { max_t + 1 };
        check_grid_size(t_count, bus_ids.len(), rows.len())?;
        let mut p = vec![vec![f64::NAN; bus_ids.len()]; t_count];
        let mut q = p.clone();
        for r in &rows {
            let l = bus_ids
                .iter()
                .position(|b| *b == r.bus)
                .expect("collected above");
            if !p[r.timestep][l].is_nan() {
                return Err(Error::Csv {
                    line: r.line,
                    message: format!(
                        "duplicate entry for timestep {} bus `{}`",
                        r.timestep, r.bus
                    ),
                });
            }
            p[r.timestep][l] = r.values[0];
            q[r.timestep][l] = r.values[1];
        }
        check_complete(&p, &bus_ids)?;
        Ok(LoadProfile { bus_ids, p, q })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

/// Dense T × B nodal loads over every bus of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct BusLoads {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl BusLoads {
    pub fn zeros(timesteps: usize, buses: usize) -> Self {
        BusLoads {
            p: vec![vec![0.0; buses]; timesteps],
            q: vec![vec![0.0; buses]; timesteps],
        }
    }

    pub fn timesteps(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(&self.q)
            .flatten()
            .all(|v| v.is_finite())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub(crate) struct LongRow {
    pub line: u64,
    pub prefix: Vec<String>,
    pub timestep: usize,
    pub bus: String,
    pub values: Vec<f64>,
}

/// Reads `[prefix.., timestep, bus, value..]` rows; the header must match exactly.
pub(crate) fn read_long_rows<R: Read>(reader: R, header: &[&str]) -> Result<Vec<LongRow>> {
    let ts_col = header
        .iter()
        .position(|h| *h == "timestep")
        .expect("long formats carry a timestep column");
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers().map_err(csv_err)?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} columns", header.len()),
            });
        }
        let timestep: usize = record[ts_col].parse().map_err(|_| Error::Csv {
            line,
            message: format!("bad timestep {:?}", &record[ts_col]),
        })?;
        // Guards against absurd allocations from a hostile timestep value.
        if timestep > 1_000_000 {
            return Err(Error::Csv {
                line,
                message: format!("timestep {timestep} out of range"),
            });
        }
        let bus = record[ts_col + 1].to_owned();
        if bus.is_empty() {
            return Err(Error::Csv {
                line,
                message: "empty bus id".into(),
            });
        }
        let mut values = Vec::with_capacity(header.len() - ts_col - 2);
        for (i, cell) in record.iter().enumerate().skip(ts_col + 2) {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                line,
                message: format!("`{}` is not a number: {cell:?}", header[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    message: format!("`{}` is not finite", header[i]),
                });
            }
            values.push(v);
        }
        rows.push(LongRow {
            line,
            prefix: record.iter().take(ts_col).map(str::to_owned).collect(),
            timestep,
            bus,
            values,
        });
    }
    Ok(rows)
}

/// Rejects a grid larger than the row count before allocating it; such a
/// grid cannot be complete anyway.
pub(crate) fn check_grid_size(t_count: usize, buses: usize, rows: usize) -> Result<()> {
    match t_count.checked_mul(buses) {
        Some(cells) if cells <= rows => Ok(()),
        _ => Err(Error::Csv {
            line: 0,
            message: format!("{t_count} timesteps × {buses} buses exceeds the {rows} rows given"),
        }),
    }
}

pub(crate) fn check_complete(grid: &[Vec<f64>], bus_ids: &[String]) -> Result<()> {
    for (t, row) in grid.iter().enumerate() {
        if let Some(l) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::Csv {
                line: 0,
                message: format!("missing entry for timestep {t} bus `{}`", bus_ids[l]),
            });
        }
    }
    Ok(())
}
