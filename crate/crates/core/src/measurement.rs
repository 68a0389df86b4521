//! Measurement time series: CSV ingestion, current-only approximation, resampling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeDelta};

use crate::error::{Error, Result};
use crate::network::NetworkModel;

pub const CSV_HEADER: [&str; 5] = ["timestamp", "location_id", "p_kw", "q_kvar", "i_a"];
pub const DEFAULT_POWER_FACTOR: f64 = 0.95;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub timestamp: NaiveDateTime,
    pub p_kw: Option<f64>,
    pub q_kvar: Option<f64>,
    pub i_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub location_id: String,
    /// Minutes between consecutive samples.
    pub resolution: u32,
    pub samples: Vec<Sample>,
    /// Set once P has been reconstructed from |I|; such P overestimates
    /// the flow and reports injections as loads.
    pub approximated: bool,
}

impl MeasurementSeries {
    /// Builds a series from unordered samples, enforcing uniform spacing.
    pub fn new(location_id: impl Into<String>, mut samples: Vec<Sample>) -> Result<Self> {
        let location_id = location_id.into();
        samples.sort_by_key(|s| s.timestamp);
        for s in &samples {
            if s.p_kw.is_none() && s.i_a.is_none() {
                return Err(Error::Measurement {
                    location: location_id,
                    message: format!("sample at {} has neither P nor I_abs", fmt_ts(s.timestamp)),
                });
            }
        }
        for w in samples.windows(2) {
            if w[0].timestamp == w[1].timestamp {
                return Err(Error::DuplicateTimestamp {
                    location: location_id,
                    timestamp: fmt_ts(w[0].timestamp),
                });
            }
        }
        if samples.len() < 2 {
            return Err(Error::Resolution(format!(
                "`{location_id}` needs at least two samples to infer its resolution"
            )));
        }
        let step = samples
            .windows(2)
            .map(|w| w[1].timestamp - w[0].timestamp)
            .min()
            .expect("at least one window");
        if step.num_seconds() % 60 != 0 {
            return Err(Error::NonUniformSpacing {
                location: location_id,
                timestamp: fmt_ts(samples[0].timestamp),
            });
        }
        for w in samples.windows(2) {
            let gap = w[1].timestamp - w[0].timestamp;
            if gap == step {
                continue;
            }
            let err = if gap.num_seconds() % step.num_seconds() == 0 {
                Error::MissingInterval {
                    location: location_id,
                    timestamp: fmt_ts(w[0].timestamp + step),
                }
            } else {
                Error::NonUniformSpacing {
                    location: location_id,
                    timestamp: fmt_ts(w[1].timestamp),
                }
            };
            return Err(err);
        }
        Ok(MeasurementSeries {
            location_id,
            resolution: (step.num_seconds() / 60) as u32,
            samples,
            approximated: false,
        })
    }

    /// True when no sample carries P but every sample carries |I|.
    pub fn is_current_only(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.p_kw.is_none() && s.i_a.is_some())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = NaiveDateTime> + '_ {
        self.samples.iter().map(|s| s.timestamp)
    }

    /// Σ P·Δt in kWh over samples carrying P.
    pub fn energy_kwh(&self) -> f64 {
        let hours = f64::from(self.resolution) / 60.0;
        self.samples.iter().filter_map(|s| s.p_kw).sum::<f64>() * hours
    }
}

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.naive_utc());
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
}

pub fn fmt_ts(ts: NaiveDateTime) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let v: f64 = raw.parse().map_err(|_| Error::Csv {
        line,
        message: format!("`{column}` is not a number: {raw:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            line,
            message: format!("`{column}` is not finite"),
        });
    }
    Ok(Some(v))
}

/// Parses measurement CSV. With `known`, location ids must match network
/// measurement ids. Series come back sorted by location id.
pub fn parse_measurements<R: Read>(
    reader: R,
    known: Option<&NetworkModel>,
) -> Result<Vec<MeasurementSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Csv {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }

    let mut grouped: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Csv {
                line,
                message: format!("expected {} columns", CSV_HEADER.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0]).ok_or_else(|| Error::Csv {
            line,
            message: format!("bad timestamp {:?}", &record[0]),
        })?;
        let location = record[1].to_owned();
        if location.is_empty() {
            return Err(Error::Csv {
                line,
                message: "empty location_id".into(),
            });
        }
        if let Some(net) = known {
            if !net.measurements().iter().any(|m| m.id == location) {
                return Err(Error::UnknownLocation(location));
            }
        }
        let sample = Sample {
            timestamp,
            p_kw: parse_cell(&record[2], line, "p_kw")?,
            q_kvar: parse_cell(&record[3], line, "q_kvar")?,
            i_a: parse_cell(&record[4], line, "i_a")?,
        };
        grouped.entry(location).or_default().push(sample);
    }

    grouped
        .into_iter()
        .map(|(loc, samples)| MeasurementSeries::new(loc, samples))
        .collect()
}

pub fn load_measurements(
    path: impl AsRef<Path>,
    known: Option<&NetworkModel>,
) -> Result<Vec<MeasurementSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(file, known)
}

pub fn write_measurements<W: Write>(series: &[MeasurementSeries], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    wtr.write_record(CSV_HEADER).map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for s in series {
        for smp in &s.samples {
            wtr.write_record([
                fmt_ts(smp.timestamp),
                s.location_id.clone(),
                cell(smp.p_kw),
                cell(smp.q_kvar),
                cell(smp.i_a),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::Csv {
        line: 0,
        message: e.to_string(),
    })
}

/// Fills missing P with |I| × V_nominal. Output P is never negative, so any
/// net injection behind the meter is read as a load.
pub fn approximate_power_from_current(
    series: &MeasurementSeries,
    nominal_voltage: f64,
) -> Result<MeasurementSeries> {
    if !(nominal_voltage.is_finite() && nominal_voltage > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nominal voltage must be positive, got {nominal_voltage}"
        )));
    }
    let mut out = series.clone();
    for s in &mut out.samples {
        if s.p_kw.is_some() {
            continue;
        }
        let i = s.i_a.ok_or_else(|| Error::Measurement {
            location: series.location_id.clone(),
            message: format!("no I_abs at {} to approximate P from", fmt_ts(s.timestamp)),
        })?;
        if i < 0.0 {
            return Err(Error::Measurement {
                location: series.location_id.clone(),
                message: format!("negative I_abs {i} at {}", fmt_ts(s.timestamp)),
            });
        }
        s.p_kw = Some(i * nominal_voltage / 1000.0);
        out.approximated = true;
    }
    Ok(out)
}

/// Fills missing Q from P at a fixed lagging power factor.
pub fn fill_reactive(series: &MeasurementSeries, power_factor: f64) -> Result<MeasurementSeries> {
    if !(power_factor > 0.0 && power_factor <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "power factor must lie in (0, 1], got {power_factor}"
        )));
    }
    let ratio = power_factor.acos().tan();
    let mut out = series.clone();
    for s in &mut out.samples {
        if s.q_kvar.is_none() {
            if let Some(p) = s.p_kw {
                s.q_kvar = Some(p * ratio);
            }
        }
    }
    Ok(out)
}

fn block_mean(values: impl Iterator<Item = Option<f64>>, k: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for v in values {
        sum += v?;
        n += 1;
    }
    (n == k).then(|| sum / k as f64)
}

/// Mean-aggregates to a coarser resolution that is a multiple of the source one.
pub fn resample(series: &MeasurementSeries, target_resolution: u32) -> Result<MeasurementSeries> {
    if target_resolution == 0 || !target_resolution.is_multiple_of(series.resolution) {
        return Err(Error::Resolution(format!(
            "{target_resolution} min is not a multiple of {} min",
            series.resolution
        )));
    }
    let k = (target_resolution / series.resolution) as usize;
    if !series.samples.len().is_multiple_of(k) {
        return Err(Error::Resolution(format!(
            "`{}`: {} samples do not fill whole {target_resolution}-min intervals",
            series.location_id,
            series.samples.len()
        )));
    }
    let samples = series
        .samples
        .chunks(k)
        .map(|block| Sample {
            timestamp: block[0].timestamp,
            p_kw: block_mean(block.iter().map(|s| s.p_kw), k),
            q_kvar: block_mean(block.iter().map(|s| s.q_kvar), k),
            i_a: block_mean(block.iter().map(|s| s.i_a), k),
        })
        .collect();
    Ok(MeasurementSeries {
        location_id: series.location_id.clone(),
        resolution: target_resolution,
        samples,
        approximated: series.approximated,
    })
}

/// Builds a uniform series starting at `start` (test and fixture helper).
pub fn uniform_series(
    location_id: &str,
    start: NaiveDateTime,
    resolution: u32,
    values: impl IntoIterator<Item = (Option<f64>, Option<f64>, Option<f64>)>,
) -> MeasurementSeries {
    let step = TimeDelta::minutes(i64::from(resolution));
    let samples = values
        .into_iter()
        .enumerate()
        .map(|(i, (p, q, ia))| Sample {
            timestamp: start + step * i as i32,
            p_kw: p,
            q_kvar: q,
            i_a: ia,
        })
        .collect();
    MeasurementSeries {
        location_id: location_id.to_owned(),
        resolution,
        samples,
        approximated: false,
    }
}
