//! Scores predicted against actual flexibility needs.
//!
//! All comparisons use magnitudes: a cell's predicted value is the larger of
//! its up and down volumes, so procuring in the wrong direction still counts
//! as covered. Only cells with nonzero actual need enter S1 and S2.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opf::{aggregate_chance_constrained, AggregationMeta, FlexNeeds, ScenarioSolve};

pub const DEFAULT_TOL_KW: f64 = 0.1;

/// Risk levels of the standard evaluation sweep.
pub const STANDARD_RISK_LEVELS: [f64; 11] =
    [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7];

/// S3 is relative when any actual need exists, otherwise the absolute
/// predicted volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", content = "value", rename_all = "lowercase")]
pub enum S3 {
    Percent(f64),
    Kw(f64),
}

impl S3 {
    pub fn value(self) -> f64 {
        match self {
            S3::Percent(v) | S3::Kw(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub risk_level: Option<f64>,
    /// Percent; `None` when there is no actual need.
    pub s1: Option<f64>,
    /// kW; `None` when there is no actual need.
    pub s2: Option<f64>,
    pub s3: S3,
    pub confusion: Confusion,
    pub tol_kw: f64,
}

fn check_grid(pred: &FlexNeeds, act: &FlexNeeds) -> Result<()> {
    if pred.timesteps() != act.timesteps() || pred.bus_ids != act.bus_ids {
        return Err(Error::GridMismatch(format!(
            "predicted grid {}×{} does not match actual grid {}×{}",
            pred.timesteps(),
            pred.buses(),
            act.timesteps(),
            act.buses()
        )));
    }
    Ok(())
}

fn cells<'a>(pred: &'a FlexNeeds, act: &'a FlexNeeds) -> impl Iterator<Item = (f64, f64)> + 'a {
    let b = pred.buses();
    (0..pred.timesteps() * b)
        .map(move |i| (pred.magnitude(i / b, i % b), act.magnitude(i / b, i % b)))
}

/// Share (%) of cells with actual need whose predicted magnitude covers it.
pub fn kpi_s1(pred: &FlexNeeds, act: &FlexNeeds) -> Result<Option<f64>> {
    check_grid(pred, act)?;
    let (mut hit, mut needed) = (0usize, 0usize);
    for (p, a) in cells(pred, act) {
        if a > 0.0 {
            needed += 1;
            if p >= a {
                hit += 1;
            }
        }
    }
    Ok((needed > 0).then(|| 100.0 * hit as f64 / needed as f64))
}

/// Net overestimation (kW) over cells with actual need.
pub fn kpi_s2(pred: &FlexNeeds, act: &FlexNeeds) -> Result<Option<f64>> {
    check_grid(pred, act)?;
    let mut any = false;
    let mut sum = 0.0;
    for (p, a) in cells(pred, act) {
        if a > 0.0 {
            any = true;
            sum += p - a;
        }
    }
    Ok(any.then_some(sum))
}

/// Total overestimation relative to actual need, or predicted volume in kW
/// when nothing was actually needed.
pub fn kpi_s3(pred: &FlexNeeds, act: &FlexNeeds) -> Result<S3> {
    check_grid(pred, act)?;
    let (mut sp, mut sa) = (0.0, 0.0);
    for (p, a) in cells(pred, act) {
        sp += p;
        sa += a;
    }
    Ok(if sa > 0.0 {
        S3::Percent(100.0 * (sp - sa) / sa)
    } else {
        S3::Kw(sp)
    })
}

pub fn confusion_counts(pred: &FlexNeeds, act: &FlexNeeds, tol_kw: f64) -> Result<Confusion> {
    if tol_kw.is_nan() || tol_kw < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tol_kw must be ≥ 0, got {tol_kw}"
        )));
    }
    check_grid(pred, act)?;
    let mut c = Confusion::default();
    for (p, a) in cells(pred, act) {
        match (p > tol_kw, a > tol_kw) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn evaluate(pred: &FlexNeeds, act: &FlexNeeds, tol_kw: f64) -> Result<KpiReport> {
    Ok(KpiReport {
        risk_level: pred.risk_level,
        s1: kpi_s1(pred, act)?,
        s2: kpi_s2(pred, act)?,
        s3: kpi_s3(pred, act)?,
        confusion: confusion_counts(pred, act, tol_kw)?,
        tol_kw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub report: KpiReport,
    pub needs: FlexNeeds,
    pub meta: AggregationMeta,
}

/// Aggregates `solves` at every risk level and scores each against `act`.
pub fn risk_sweep(
    solves: &[ScenarioSolve],
    act: &FlexNeeds,
    risk_levels: &[f64],
    tol_kw: f64,
) -> Result<Vec<SweepPoint>> {
    if risk_levels.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("risk levels must be sorted".into()));
    }
    risk_levels
        .par_iter()
        .map(|&eps| {
            let (needs, meta) = aggregate_chance_constrained(solves, eps, &act.bus_ids)?;
            let report = evaluate(&needs, act, tol_kw)?;
            Ok(SweepPoint {
                report,
                needs,
                meta,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "/".to_owned(), |x| format!("{x:.0}"))
}

/// Markdown table with one column per risk level.
pub fn kpi_table_markdown(reports: &[KpiReport]) -> String {
    let mut s = String::from("| KPI |");
    for r in reports {
        match r.risk_level {
            Some(e) => write!(s, " {e} |").unwrap(),
            None => s.push_str(" - |"),
        }
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(reports.len()));
    s.push_str("\n| S1 (%) |");
    for r in reports {
        write!(s, " {} |", fmt_opt(r.s1)).unwrap();
    }
    s.push_str("\n| S2 (kW) |");
    for r in reports {
        write!(s, " {} |", fmt_opt(r.s2)).unwrap();
    }
    let unit = match reports.first().map(|r| r.s3) {
        Some(S3::Kw(_)) => "kW",
        _ => "%",
    };
    write!(s, "\n| S3 ({unit}) |").unwrap();
    for r in reports {
        match r.s3 {
            S3::Percent(v) if unit == "%" => write!(s, " {v:.0} |").unwrap(),
            S3::Kw(v) if unit == "kW" => write!(s, " {v:.0} |").unwrap(),
            S3::Percent(v) => write!(s, " {v:.0}% |").unwrap(),
            S3::Kw(v) => write!(s, " {v:.0} kW |").unwrap(),
        }
    }
    for (name, get) in [
        ("TP", (|c: &Confusion| c.tp) as fn(&Confusion) -> usize),
        ("FP", |c| c.fp),
        ("FN", |c| c.fn_),
        ("TN", |c| c.tn),
    ] {
        write!(s, "\n| {name} |").unwrap();
        for r in reports {
            write!(s, " {} |", get(&r.confusion)).unwrap();
        }
    }
    s.push('\n');
    s
}

/// Long CSV, one row per report, full precision; undefined values are empty.
pub fn kpi_table_csv(reports: &[KpiReport]) -> String {
    let mut s = String::from("risk_level,s1_pct,s2_kw,s3_value,s3_unit,tp,fp,fn,tn\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let (v, unit) = match r.s3 {
            S3::Percent(v) => (v, "percent"),
            S3::Kw(v) => (v, "kw"),
        };
        writeln!(
            s,
            "{},{},{},{v},{unit},{},{},{},{}",
            opt(r.risk_level),
            opt(r.s1),
            opt(r.s2),
            r.confusion.tp,
            r.confusion.fp,
            r.confusion.fn_,
            r.confusion.tn
        )
        .unwrap();
    }
    s
}
