//! Dense two-phase tableau simplex.
//!
//! Problems are stated as
//!
//! ```text
//! maximize    c·x
//! subject to  A_eq x  = b_eq
//!             A_le x <= b_le
//!             x_j >= l_j      (or x_j free)
//! ```
//!
//! Pivoting follows Bland's rule (lowest-index entering column, lowest-index
//! leaving basic variable among ratio ties), so the method terminates on
//! degenerate problems. Envelope LPs here have at most a few dozen
//! variables; nothing is sparse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
/// Slack optimum at or below this marks an implicit equality.
pub const IMPLICIT_TOL: f64 = 1e-9;

/// A single linear constraint `coeffs · x (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `rhs - coeffs·x`; nonnegative when an inequality row holds.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.dot(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    /// `None` marks a free variable.
    pub lower_bounds: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { value: f64, argmax: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpResult {
    pub fn status(&self) -> LpStatus {
        match self {
            LpResult::Optimal { .. } => LpStatus::Optimal,
            LpResult::Infeasible => LpStatus::Infeasible,
            LpResult::Unbounded => LpStatus::Unbounded,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpResult::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn argmax(&self) -> Option<&[f64]> {
        match self {
            LpResult::Optimal { argmax, .. } => Some(argmax),
            _ => None,
        }
    }
}

/// Rows of `inequalities` (and variables with a finite lower bound) that hold
/// with equality at every feasible point.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImplicitEqualities {
    pub inequalities: Vec<usize>,
    pub lower_bounds: Vec<usize>,
}

impl LinearProgram {
    /// All variables nonnegative, no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            equalities: Vec::new(),
            inequalities: Vec::new(),
            lower_bounds: vec![Some(0.0); n],
        }
    }

    /// All variables free.
    pub fn free(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            lower_bounds: vec![None; n],
            ..Self::new(objective)
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    pub fn eq(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.equalities.push(LinearRow::new(coeffs, rhs));
        self
    }

    pub fn le(mut self, coeffs: Vec<f64>, rhs: f64) -> Self {
        self.inequalities.push(LinearRow::new(coeffs, rhs));
        self
    }

    pub fn ge(self, coeffs: Vec<f64>, rhs: f64) -> Self {
        let neg = coeffs.into_iter().map(|a| -a).collect();
        self.le(neg, -rhs)
    }

    pub fn with_objective(&self, objective: Vec<f64>) -> Self {
        Self {
            objective,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = self
            .equalities
            .iter()
            .chain(&self.inequalities)
            .map(|r| r.coeffs.len())
            .chain(std::iter::once(self.lower_bounds.len()))
            .find(|&len| len != n);
        match bad {
            Some(found) => Err(Error::DimensionMismatch { expected: n, found }),
            None => Ok(()),
        }
    }

    /// Largest violation of any constraint at `x` (zero when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|r| (r.dot(x) - r.rhs).abs());
        let le = self.inequalities.iter().map(|r| (r.dot(x) - r.rhs).max(0.0));
        let lb = self
            .lower_bounds
            .iter()
            .zip(x)
            .map(|(l, v)| l.map_or(0.0, |l| (l - v).max(0.0)));
        eq.chain(le).chain(lb).fold(0.0, f64::max)
    }
}

pub fn maximize(lp: &LinearProgram) -> Result<LpResult> {
    lp.validate()?;
    Solver::build(lp).run(lp, false)
}

pub fn minimize(lp: &LinearProgram) -> Result<LpResult> {
    let neg = lp.with_objective(lp.objective.iter().map(|c| -c).collect());
    Ok(match maximize(&neg)? {
        LpResult::Optimal { value, argmax } => LpResult::Optimal {
            value: -value,
            argmax,
        },
        other => other,
    })
}

/// Phase-1 feasibility. The objective is ignored.
pub fn is_feasible(lp: &LinearProgram) -> Result<bool> {
    lp.validate()?;
    let outcome = Solver::build(lp).run(lp, true)?;
    Ok(outcome != LpResult::Infeasible)
}

/// Detects implicit equalities by maximizing the slack of every inequality
/// row and every finite lower bound over the feasible set.
pub fn implicit_equalities(lp: &LinearProgram) -> Result<ImplicitEqualities> {
    lp.validate()?;
    if !is_feasible(lp)? {
        return Err(Error::Infeasible);
    }
    let n = lp.dim();
    let mut out = ImplicitEqualities::default();
    for (i, row) in lp.inequalities.iter().enumerate() {
        let probe = lp.with_objective(row.coeffs.iter().map(|a| -a).collect());
        if let LpResult::Optimal { value, .. } = maximize(&probe)? {
            if row.rhs + value <= IMPLICIT_TOL {
                out.inequalities.push(i);
            }
        }
    }
    for (j, lower) in lp.lower_bounds.iter().enumerate() {
        let Some(l) = lower else { continue };
        let mut c = vec![0.0; n];
        c[j] = 1.0;
        if let LpResult::Optimal { value, .. } = maximize(&lp.with_objective(c))? {
            if value - l <= IMPLICIT_TOL {
                out.lower_bounds.push(j);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum Column {
    Shifted { col: usize, lower: f64 },
    Free { plus: usize, minus: usize },
}

struct Solver {
    columns: Vec<Column>,
    /// m rows of width `width + 1`; the last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
    first_artificial: usize,
}

impl Solver {
    fn build(lp: &LinearProgram) -> Self {
        let mut columns = Vec::with_capacity(lp.dim());
        let mut next = 0;
        for lb in &lp.lower_bounds {
            match lb {
                Some(lower) => {
                    columns.push(Column::Shifted { col: next, lower: *lower });
                    next += 1;
                }
                None => {
                    columns.push(Column::Free { plus: next, minus: next + 1 });
                    next += 2;
                }
            }
        }
        let structural = next;
        let n_slack = lp.inequalities.len();
        let m = lp.equalities.len() + n_slack;

        // Decide which rows need an artificial variable before sizing the tableau.
        let mut raw: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::with_capacity(m);
        let expand = |row: &LinearRow| -> (Vec<f64>, f64) {
            let mut coeffs = vec![0.0; structural];
            let mut rhs = row.rhs;
            for (a, col) in row.coeffs.iter().zip(&columns) {
                match *col {
                    Column::Shifted { col, lower } => {
                        coeffs[col] = *a;
                        rhs -= a * lower;
                    }
                    Column::Free { plus, minus } => {
                        coeffs[plus] = *a;
                        coeffs[minus] = -a;
                    }
                }
            }
            (coeffs, rhs)
        };
        for row in &lp.equalities {
            let (c, r) = expand(row);
            raw.push((c, r, None));
        }
        for (k, row) in lp.inequalities.iter().enumerate() {
            let (c, r) = expand(row);
            raw.push((c, r, Some(structural + k)));
        }

        let first_artificial = structural + n_slack;
        let n_art = raw
            .iter()
            .filter(|(_, rhs, slack)| slack.is_none() || *rhs < 0.0)
            .count();
        let width = first_artificial + n_art;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut art = first_artificial;
        for (coeffs, rhs, slack) in raw {
            let mut t = vec![0.0; width + 1];
            t[..structural].copy_from_slice(&coeffs);
            if let Some(s) = slack {
                t[s] = 1.0;
            }
            t[width] = rhs;
            if rhs < 0.0 {
                t.iter_mut().for_each(|v| *v = -*v);
            }
            match slack {
                Some(s) if rhs >= 0.0 => basis.push(s),
                _ => {
                    t[art] = 1.0;
                    basis.push(art);
                    art += 1;
                }
            }
            rows.push(t);
        }
        Self {
            columns,
            rows,
            basis,
            width,
            first_artificial,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= piv);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Primal simplex on the current basis. Returns `false` when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<bool> {
        let cmax = cost.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let dj_tol = 1e-10 * (1.0 + cmax);
        let rhs = self.width;
        let cap = 200 * (self.rows.len() + self.width) + 1000;
        for _ in 0..cap {
            let entering = (0..allowed).find(|&j| {
                let dj = cost[j]
                    - self
                        .rows
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                dj > dj_tol
            });
            let Some(c) = entering else { return Ok(true) };

            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] <= PIVOT_TOL {
                    continue;
                }
                let ratio = row[rhs].max(0.0) / row[c];
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return Ok(false),
            }
        }
        Err(Error::Numerical(
            "simplex iteration limit reached (anti-cycling failure)".into(),
        ))
    }

    fn run(mut self, lp: &LinearProgram, phase1_only: bool) -> Result<LpResult> {
        let rhs = self.width;
        let scale = 1.0
            + self
                .rows
                .iter()
                .map(|r| r[rhs].abs())
                .fold(0.0, f64::max);

        if self.first_artificial < self.width {
            let mut cost = vec![0.0; self.width];
            cost[self.first_artificial..].iter_mut().for_each(|c| *c = -1.0);
            self.optimize(&cost, self.width)?;
            let infeasibility: f64 = self
                .rows
                .iter()
                .zip(&self.basis)
                .filter(|(_, &b)| b >= self.first_artificial)
                .map(|(row, _)| row[rhs].abs())
                .sum();
            if infeasibility > FEAS_TOL * scale {
                return Ok(LpResult::Infeasible);
            }
            self.drive_out_artificials();
        }
        if phase1_only {
            return Ok(LpResult::Optimal {
                value: 0.0,
                argmax: self.extract(),
            });
        }

        let mut cost = vec![0.0; self.width];
        for (c, col) in lp.objective.iter().zip(&self.columns) {
            match *col {
                Column::Shifted { col, .. } => cost[col] = *c,
                Column::Free { plus, minus } => {
                    cost[plus] = *c;
                    cost[minus] = -c;
                }
            }
        }
        if !self.optimize(&cost, self.first_artificial)? {
            return Ok(LpResult::Unbounded);
        }
        let argmax = self.extract();
        let value = lp.objective.iter().zip(&argmax).map(|(c, x)| c * x).sum();
        Ok(LpResult::Optimal { value, argmax })
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and get dropped.
    fn drive_out_artificials(&mut self) {
        let mut i = 0;
        while i < self.rows.len() {
            if self.basis[i] < self.first_artificial {
                i += 1;
                continue;
            }
            let best = (0..self.first_artificial)
                .map(|j| (j, self.rows[i][j].abs()))
                .filter(|(_, a)| *a > PIVOT_TOL)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((j, _)) => {
                    self.pivot(i, j);
                    i += 1;
                }
                None => {
                    self.rows.remove(i);
                    self.basis.remove(i);
                }
            }
        }
    }

    fn extract(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.width];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            y[b] = row[self.width];
        }
        self.columns
            .iter()
            .map(|col| match *col {
                Column::Shifted { col, lower } => lower + y[col].max(0.0),
                Column::Free { plus, minus } => y[plus] - y[minus],
            })
            .collect()
    }
}
