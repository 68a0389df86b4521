//! Dense two-phase primal simplex for small LPs of the form
//! `min c·x  s.t.  A x ≤ b,  x ≥ 0` (entries of `b` may be negative).
//!
//! Pivoting is deterministic: Dantzig pricing with lowest-index ties, falling
//! back to Bland's rule after a run of degenerate pivots.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-8;
const DEGENERATE_RUN: usize = 40;

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds `coeffs · x ≤ rhs`.
    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars());
        self.rows.push(coeffs);
        self.rhs.push(rhs);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
    },
    /// Rows whose phase-one artificial variables could not be driven to zero.
    Infeasible {
        violated_rows: Vec<usize>,
    },
    Unbounded,
}

struct Tableau {
    /// Row-major `(m + 1) × (cols + 1)`; last row is the cost row, last column the rhs.
    data: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.data[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        for j in 0..w {
            self.data[r * w + j] *= inv;
        }
        self.data[r * w + c] = 1.0;
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let factor = self.data[i * w + c];
            if factor == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.data[r * w + j];
                if v != 0.0 {
                    self.data[i * w + j] -= factor * v;
                }
            }
            self.data[i * w + c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `< active_cols`.
    fn optimize(&mut self, active_cols: usize, iter_budget: &mut usize) -> Result<bool> {
        let cost = self.m;
        let mut degenerate = 0usize;
        loop {
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -COST_EPS;
            for j in 0..active_cols {
                let d = self.at(cost, j);
                if d < -COST_EPS {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    let better = match leave {
                        None => true,
                        Some((r, best_ratio)) => {
                            ratio < best_ratio - 1e-12
                                || (ratio <= best_ratio + 1e-12 && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Ok(false);
            };
            if *iter_budget == 0 {
                return Err(Error::IterationCap(0));
            }
            *iter_budget -= 1;
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `lp`, performing at most `max_iter` pivots across both phases.
pub fn solve(lp: &LinearProgram, max_iter: usize) -> Result<LpOutcome> {
    let n = lp.n_vars();
    let m = lp.rows.len();

    // Row equilibration keeps voltage (pu²) and flow (kW) rows comparable.
    let scaled: Vec<(Vec<f64>, f64)> = lp
        .rows
        .iter()
        .zip(&lp.rhs)
        .map(|(row, &b)| {
            let s = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if s > 0.0 {
                (row.iter().map(|v| v / s).collect(), b / s)
            } else {
                (row.clone(), b)
            }
        })
        .collect();

    let negative: Vec<usize> = (0..m).filter(|&i| scaled[i].1 < 0.0).collect();
    let n_art = negative.len();
    // Columns: x (n) | slack (m) | artificial (n_art) | rhs
    let cols = n + m + n_art;
    let width = cols + 1;
    let mut t = Tableau {
        data: vec![0.0; (m + 1) * width],
        width,
        m,
        basis: vec![0; m],
    };
    let mut art_of_row = vec![None; m];
    for (a, &i) in negative.iter().enumerate() {
        art_of_row[i] = Some(n + m + a);
    }
    for (i, (row, b)) in scaled.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for (j, v) in row.iter().enumerate() {
            t.data[i * width + j] = sign * v;
        }
        t.data[i * width + n + i] = sign;
        t.data[i * width + cols] = sign * b;
        match art_of_row[i] {
            Some(a) => {
                t.data[i * width + a] = 1.0;
                t.basis[i] = a;
            }
            None => t.basis[i] = n + i,
        }
    }

    let mut budget = max_iter;
    let cap = |e: Error| match e {
        Error::IterationCap(_) => Error::IterationCap(max_iter),
        other => other,
    };

    if n_art > 0 {
        // Phase one: minimize the sum of artificials.
        for &i in &negative {
            for j in 0..width {
                t.data[m * width + j] -= t.data[i * width + j];
            }
        }
        for a in 0..n_art {
            t.data[m * width + n + m + a] = 0.0;
        }
        t.optimize(cols, &mut budget).map_err(cap)?;
        let infeasibility = -t.rhs(m);
        if infeasibility > FEAS_EPS {
            let violated_rows = (0..m)
                .filter(|&i| t.basis[i] >= n + m && t.rhs(i) > FEAS_EPS)
                .map(|i| negative[t.basis[i] - n - m])
                .collect();
            return Ok(LpOutcome::Infeasible { violated_rows });
        }
        // Pivot zero-level artificials out where possible.
        for i in 0..m {
            if t.basis[i] >= n + m {
                if let Some(c) = (0..n + m).find(|&j| t.at(i, j).abs() > PIVOT_EPS) {
                    t.pivot(i, c);
                }
            }
        }
    }

    // Phase two cost row over original columns.
    for j in 0..width {
        t.data[m * width + j] = 0.0;
    }
    for (j, &c) in lp.objective.iter().enumerate() {
        t.data[m * width + j] = c;
    }
    for i in 0..m {
        let bj = t.basis[i];
        let cb = if bj < n { lp.objective[bj] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                t.data[m * width + j] -= cb * t.data[i * width + j];
            }
        }
    }
    // Artificials left in the basis sit on redundant rows at level zero; they
    // are excluded from entering.
    if !t.optimize(n + m, &mut budget).map_err(cap)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &LinearProgram) -> (Vec<f64>, f64) {
        match solve(lp, 1000).unwrap() {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y  s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18  → (2, 6), 36
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let (x, obj) = optimal(&lp);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((obj + 36.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y  s.t.  x + y ≥ 2, x ≥ 0.5  → objective 2
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_le(vec![-1.0, -1.0], -2.0);
        lp.add_le(vec![-1.0, 0.0], -0.5);
        let (x, obj) = optimal(&lp);
        assert!((obj - 2.0).abs() < 1e-9);
        assert!(x[0] >= 0.5 - 1e-9);
    }

    #[test]
    fn infeasible_reports_rows() {
        // x ≤ 1 and x ≥ 3
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_le(vec![1.0], 1.0);
        lp.add_le(vec![-1.0], -3.0);
        match solve(&lp, 100).unwrap() {
            LpOutcome::Infeasible { violated_rows } => assert_eq!(violated_rows, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded() {
        let mut lp = LinearProgram::new(vec![-1.0]);
        lp.add_le(vec![-1.0], 0.0);
        assert_eq!(solve(&lp, 100).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn iteration_cap() {
        let mut lp = LinearProgram::new(vec![-3.0, -5.0]);
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        assert!(matches!(solve(&lp, 1), Err(Error::IterationCap(1))));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic Beale cycling example (cycles under naive Dantzig without anti-cycling).
        let mut lp = LinearProgram::new(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let (_, obj) = optimal(&lp);
        assert!((obj + 0.05).abs() < 1e-9);
    }
}
