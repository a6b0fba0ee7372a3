//! Built-in coherent risk measures.
//!
//! Each measure has a primal evaluator (its closed form) and an envelope
//! builder. `eval_primal(spec, X)` and `envelope_of(spec).support(X)` are two
//! independent routes to the same number.

use serde::{Deserialize, Serialize};

use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::lp::LinearRow;
use crate::space::{Density, ProbabilitySpace, RandomVariable};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    /// `E(X)`.
    Expectation,
    /// `ess sup X`.
    WorstCase,
    /// `sum_k w_k * max_{i in cell_k} x_i` over a partition of the atoms.
    Subdivide {
        cells: Vec<Vec<usize>>,
        weights: Vec<f64>,
    },
    /// `min_b { b + E[gamma1 (X-b)_+ - gamma2 (b-X)_+] }`, `0 <= gamma2 < 1 < gamma1`.
    Oce { gamma1: f64, gamma2: f64 },
    /// OCE with `gamma2 = 0`, `gamma1 = 1/(1-alpha)`.
    Cvar { alpha: f64 },
    /// `E(X) + lambda * ||(X - E X)_+||_2`.
    #[serde(rename = "meandev")]
    MeanDeviation { lambda: f64 },
}

impl MeasureSpec {
    pub fn name(&self) -> String {
        match self {
            MeasureSpec::Expectation => "expectation".into(),
            MeasureSpec::WorstCase => "worstcase".into(),
            MeasureSpec::Subdivide { cells, .. } => format!("subdivide[{} cells]", cells.len()),
            MeasureSpec::Oce { gamma1, gamma2 } => format!("oce[{gamma1},{gamma2}]"),
            MeasureSpec::Cvar { alpha } => format!("cvar[{alpha}]"),
            MeasureSpec::MeanDeviation { lambda } => format!("meandev[{lambda}]"),
        }
    }

    pub fn validate(&self, space: &ProbabilitySpace) -> Result<()> {
        match self {
            MeasureSpec::Expectation | MeasureSpec::WorstCase => Ok(()),
            MeasureSpec::Subdivide { cells, weights } => {
                validate_partition(cells, weights, space.atom_count())
            }
            MeasureSpec::Oce { gamma1, gamma2 } => {
                let ok = gamma1.is_finite() && 0.0 <= *gamma2 && *gamma2 < 1.0 && 1.0 < *gamma1;
                if ok {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "OCE requires 0 <= gamma2 < 1 < gamma1, got gamma1={gamma1}, gamma2={gamma2}"
                    )))
                }
            }
            MeasureSpec::Cvar { alpha } => {
                if (0.0..1.0).contains(alpha) {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!("CVaR alpha {alpha} outside [0, 1)")))
                }
            }
            MeasureSpec::MeanDeviation { lambda } => {
                if (0.0..=1.0).contains(lambda) {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec(format!(
                        "mean-deviation lambda {lambda} outside [0, 1]"
                    )))
                }
            }
        }
    }

    /// `(gamma1, gamma2)` for the OCE family members.
    fn oce_params(&self) -> Option<(f64, f64)> {
        match self {
            MeasureSpec::Oce { gamma1, gamma2 } => Some((*gamma1, *gamma2)),
            MeasureSpec::Cvar { alpha } => Some((1.0 / (1.0 - alpha), 0.0)),
            _ => None,
        }
    }
}

fn validate_partition(cells: &[Vec<usize>], weights: &[f64], n: usize) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidSpec(m));
    if cells.is_empty() {
        return bad("subdivide needs at least one cell".into());
    }
    if cells.len() != weights.len() {
        return bad(format!(
            "{} cells but {} weights",
            cells.len(),
            weights.len()
        ));
    }
    let mut seen = vec![false; n];
    for (k, cell) in cells.iter().enumerate() {
        if cell.is_empty() {
            return bad(format!("cell {k} is empty"));
        }
        for &i in cell {
            if i >= n {
                return bad(format!("cell {k} names atom {i}, space has {n}"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("atom {i} appears in more than one cell"));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return bad(format!("atom {i} is not covered by any cell"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return bad("subdivide weights must be positive".into());
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return bad(format!("subdivide weights sum to {total}, expected 1"));
    }
    Ok(())
}

/// Closed-form evaluation.
pub fn eval_primal(spec: &MeasureSpec, space: &ProbabilitySpace, x: &RandomVariable) -> Result<f64> {
    spec.validate(space)?;
    space.check_len(x.len())?;
    match spec {
        MeasureSpec::Expectation => space.expectation(x),
        MeasureSpec::WorstCase => space.ess_sup(x),
        MeasureSpec::Subdivide { cells, weights } => Ok(cells
            .iter()
            .zip(weights)
            .map(|(cell, w)| {
                w * cell
                    .iter()
                    .map(|&i| x.values()[i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()),
        MeasureSpec::Oce { .. } | MeasureSpec::Cvar { .. } => {
            let (g1, g2) = spec.oce_params().expect("OCE family");
            let beta = beta_star(space, x, g1, g2);
            Ok(oce_objective(space, x, beta, g1, g2))
        }
        MeasureSpec::MeanDeviation { lambda } => {
            let mean = space.expectation(x)?;
            let upside: Vec<f64> = x.values().iter().map(|v| (v - mean).max(0.0)).collect();
            Ok(mean + lambda * space.l2_norm(&upside)?)
        }
    }
}

/// `b + E[gamma1 (X-b)_+ - gamma2 (b-X)_+]`.
pub fn oce_objective(
    space: &ProbabilitySpace,
    x: &RandomVariable,
    beta: f64,
    gamma1: f64,
    gamma2: f64,
) -> f64 {
    beta + space
        .probs()
        .iter()
        .zip(x.values())
        .map(|(p, v)| p * (gamma1 * (v - beta).max(0.0) - gamma2 * (beta - v).max(0.0)))
        .sum::<f64>()
}

/// Minimizer of the OCE objective: the smallest atom value `z` with
/// `F(z) >= (gamma1 - 1) / (gamma1 - gamma2)`.
pub fn oce_beta_star(
    space: &ProbabilitySpace,
    x: &RandomVariable,
    gamma1: f64,
    gamma2: f64,
) -> Result<f64> {
    MeasureSpec::Oce { gamma1, gamma2 }.validate(space)?;
    space.check_len(x.len())?;
    Ok(beta_star(space, x, gamma1, gamma2))
}

/// Also accepts `gamma1 = 1` (CVaR at level 0), where the threshold is 0
/// and the minimizer is the smallest atom.
fn beta_star(space: &ProbabilitySpace, x: &RandomVariable, gamma1: f64, gamma2: f64) -> f64 {
    let threshold = (gamma1 - 1.0) / (gamma1 - gamma2);
    let mut atoms: Vec<(f64, f64)> = x
        .values()
        .iter()
        .copied()
        .zip(space.probs().iter().copied())
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = 0.0;
    let mut i = 0;
    while i < atoms.len() {
        let value = atoms[i].0;
        // Step the cdf over every atom sharing this value.
        while i < atoms.len() && atoms[i].0 == value {
            cdf += atoms[i].1;
            i += 1;
        }
        if cdf >= threshold {
            return value;
        }
    }
    atoms.last().map(|a| a.0).unwrap_or(0.0)
}

/// `Q0 = 1 + lambda [(X - EX)_+ - E(X - EX)_+] / ||(X - EX)_+||_2`, the
/// maximizer of `E(XQ)` over the mean-deviation ball.
pub fn mean_dev_maximizer(
    space: &ProbabilitySpace,
    x: &RandomVariable,
    lambda: f64,
) -> Result<Density> {
    MeasureSpec::MeanDeviation { lambda }.validate(space)?;
    space.check_len(x.len())?;
    if x.is_constant() {
        return Err(Error::ConstantInput);
    }
    let mean = space.expectation(x)?;
    let upside: Vec<f64> = x.values().iter().map(|v| (v - mean).max(0.0)).collect();
    let norm = space.l2_norm(&upside)?;
    if norm == 0.0 {
        return Err(Error::ConstantInput);
    }
    let upside_mean: f64 = space.probs().iter().zip(&upside).map(|(p, u)| p * u).sum();
    let q: Vec<f64> = upside
        .iter()
        .map(|u| 1.0 + lambda * (u - upside_mean) / norm)
        .collect();
    Density::new(space, q)
}

/// The risk envelope of a built-in measure.
pub fn envelope_of(spec: &MeasureSpec, space: &ProbabilitySpace) -> Result<Envelope> {
    spec.validate(space)?;
    let n = space.atom_count();
    let unit = |i: usize, v: f64| {
        let mut c = vec![0.0; n];
        c[i] = v;
        c
    };
    match spec {
        MeasureSpec::Expectation => Ok(Envelope::base_density(space)),
        MeasureSpec::WorstCase => Ok(Envelope::all_densities(space)),
        MeasureSpec::Subdivide { cells, weights } => {
            // Minkowski combination of the block envelopes collapses to
            // per-block mass constraints.
            let rows = cells
                .iter()
                .zip(weights)
                .map(|(cell, w)| {
                    let mut c = vec![0.0; n];
                    for &i in cell {
                        c[i] = space.probs()[i];
                    }
                    LinearRow::new(c, *w)
                })
                .collect();
            Envelope::from_constraints(space, rows, Vec::new())
        }
        MeasureSpec::Oce { .. } | MeasureSpec::Cvar { .. } => {
            let (g1, g2) = spec.oce_params().expect("OCE family");
            let mut rows: Vec<LinearRow> =
                (0..n).map(|i| LinearRow::new(unit(i, 1.0), g1)).collect();
            if g2 > 0.0 {
                rows.extend((0..n).map(|i| LinearRow::new(unit(i, -1.0), -g2)));
            }
            Envelope::from_constraints(space, Vec::new(), rows)
        }
        MeasureSpec::MeanDeviation { lambda } => Envelope::mean_dev_ball(space, *lambda),
    }
}

/// Anything that maps random variables on a fixed space to a risk value.
pub trait RiskFunctional {
    fn space(&self) -> &ProbabilitySpace;

    fn risk(&self, x: &RandomVariable) -> Result<f64>;

    /// Structured candidates for `R(X) <= E(X)` with nonconstant `X`.
    fn witnesses(&self) -> Vec<RandomVariable> {
        Vec::new()
    }
}
