//! Aversity diagnostics: is `R(X) > E(X)` for every nonconstant `X`?
//!
//! On a finite space a coherent measure is averse exactly when the constant
//! density `1` lies in the relative interior of its envelope, relative to
//! the set of all densities. That test is geometric and exact; random
//! search is only used to exhibit counterexamples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::envelope::{Envelope, EnvelopeRepr, CONTAINS_TOL};
use crate::error::{Error, Result};
use crate::geometry::{self, HullLimits};
use crate::lp::{self, LinearRow};
use crate::measures::RiskFunctional;
use crate::space::{Density, ProbabilitySpace, RandomVariable};

/// A row counts as strict at `1` when its slack is at least this.
pub const STRICT_TOL: f64 = 1e-9;
/// Slack allowed in `R(X) <= E(X)` when accepting a counterexample.
pub const COUNTEREXAMPLE_TOL: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-9;
const PROBE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Averse,
    NotAverse,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AversityReport {
    /// `{1}` is strictly contained in the envelope.
    pub necessary_holds: bool,
    /// `1` is a relative interior point of the envelope.
    pub sufficient_holds: bool,
    pub verdict: Verdict,
    pub counterexample: Option<RandomVariable>,
}

/// `1 ∈ Q` and `Q ≠ {1}`.
pub fn check_necessary(env: &Envelope) -> Result<bool> {
    let n = env.space().atom_count();
    if let EnvelopeRepr::MeanDevBall { lambda } = env.repr() {
        return Ok(*lambda > 0.0);
    }
    if !env.contains(&Density::one(n), CONTAINS_TOL)? {
        return Ok(false);
    }
    let p = env.space().probs();
    for (i, &pi) in p.iter().enumerate() {
        let e = RandomVariable::indicator(&[i], n);
        let hi = env.support(&e)?.value;
        let lo = -env.support(&e.scale(-1.0))?.value;
        if hi - pi > PROBE_TOL || pi - lo > PROBE_TOL {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Whether `1` lies in the relative interior of the envelope relative to
/// the set of all densities: the envelope must span the same affine hull
/// and `1` must strictly satisfy every inequality that is not implied tight.
pub fn check_relative_interior(env: &Envelope, limits: HullLimits) -> Result<bool> {
    let n = env.space().atom_count();
    if matches!(env.repr(), EnvelopeRepr::MeanDevBall { .. }) {
        return Err(Error::NotPolyhedral);
    }
    if !env.contains(&Density::one(n), CONTAINS_TOL)? {
        return Ok(false);
    }
    let h = env.to_constraint_rep(limits)?;
    let lp = h.system(vec![0.0; n]).expect("constraint envelope");
    let implicit = lp::implicit_equalities(&lp).map_err(|e| match e {
        Error::Infeasible => Error::EmptyEnvelope,
        other => other,
    })?;
    let p = env.space().probs();
    if lp.equalities.iter().any(|r| !parallel_to(&r.coeffs, p)) {
        return Ok(false);
    }
    let ones = vec![1.0; n];
    for (i, row) in lp.inequalities.iter().enumerate() {
        if implicit.inequalities.contains(&i) {
            if !parallel_to(&row.coeffs, p) {
                return Ok(false);
            }
        } else if row.slack(&ones) < STRICT_TOL {
            return Ok(false);
        }
    }
    for &j in &implicit.lower_bounds {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if !parallel_to(&e, p) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn parallel_to(a: &[f64], p: &[f64]) -> bool {
    let r = project_out(a, p);
    let scale = 1.0 + a.iter().map(|v| v.abs()).fold(0.0, f64::max);
    r.iter().all(|v| v.abs() <= PARALLEL_TOL * scale)
}

/// `a` minus its Euclidean projection onto `p`.
fn project_out(a: &[f64], p: &[f64]) -> Vec<f64> {
    let c = geometry::dot(a, p) / geometry::dot(p, p);
    a.iter().zip(p).map(|(ai, pi)| ai - c * pi).collect()
}

/// Exact aversity verdict for an envelope, with the envelope's own support
/// function used to search for a counterexample.
pub fn is_averse_finite(env: &Envelope, limits: HullLimits, trials: usize, seed: u64) -> Result<AversityReport> {
    is_averse_with(env, env, limits, trials, seed)
}

/// Exact aversity verdict for `measure`, whose envelope is `env`.
pub fn is_averse_with(
    measure: &dyn RiskFunctional,
    env: &Envelope,
    limits: HullLimits,
    trials: usize,
    seed: u64,
) -> Result<AversityReport> {
    let necessary_holds = check_necessary(env)?;
    let sufficient = match env.repr() {
        EnvelopeRepr::MeanDevBall { lambda } => Some(*lambda > 0.0),
        _ => match check_relative_interior(env, limits) {
            Ok(b) => Some(b),
            Err(Error::SizeLimit(_)) => None,
            Err(e) => return Err(e),
        },
    };
    let sufficient_holds = sufficient.unwrap_or(false);
    let counterexample = if sufficient_holds {
        None
    } else {
        falsify_aversity(measure, trials, seed)
    };
    let verdict = match (sufficient, &counterexample) {
        (Some(true), _) => Verdict::Averse,
        (Some(false), _) | (None, Some(_)) => Verdict::NotAverse,
        (None, None) => Verdict::Inconclusive,
    };
    Ok(AversityReport {
        necessary_holds,
        sufficient_holds,
        verdict,
        counterexample,
    })
}

/// Directions `X = y / p` on which the envelope's support is pinned:
/// `±` the part orthogonal to `p` of every equality and implicit equality,
/// and `±` every constraint row.
pub fn envelope_witnesses(env: &Envelope, limits: HullLimits) -> Vec<RandomVariable> {
    let n = env.space().atom_count();
    let p = env.space().probs().to_vec();
    let Ok(h) = env.to_constraint_rep(limits) else {
        return Vec::new();
    };
    let lp = h.system(vec![0.0; n]).expect("constraint envelope");
    let mut pinned: Vec<Vec<f64>> = lp.equalities.iter().map(|r| r.coeffs.clone()).collect();
    if let Ok(imp) = lp::implicit_equalities(&lp) {
        pinned.extend(imp.inequalities.iter().map(|&i| lp.inequalities[i].coeffs.clone()));
        pinned.extend(imp.lower_bounds.iter().map(|&j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        }));
    }
    let projected: Vec<Vec<f64>> = pinned.iter().map(|a| project_out(a, &p)).collect();
    let mut dirs = geometry::row_space(&projected, n);
    dirs.extend(lp.inequalities.iter().map(|r: &LinearRow| r.coeffs.clone()));
    dirs.extend((0..n).map(|j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        e
    }));
    let mut out = Vec::new();
    for y in dirs {
        let x: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi / pi).collect();
        if let Some(x) = normalized(x) {
            out.push(x.scale(-1.0));
            out.push(x);
        }
    }
    out
}

/// Rescales to unit sup norm; `None` for constants.
fn normalized(x: Vec<f64>) -> Option<RandomVariable> {
    let x = RandomVariable::new(x);
    if is_nonconstant(&x) {
        let m = x.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
        Some(x.scale(1.0 / m))
    } else {
        None
    }
}

fn is_nonconstant(x: &RandomVariable) -> bool {
    let v = x.values();
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| (a.min(t), b.max(t)));
    hi - lo > 1e-9 * (1.0 + hi.abs().max(lo.abs()))
}

fn is_counterexample(space: &ProbabilitySpace, measure: &dyn RiskFunctional, x: &RandomVariable) -> bool {
    if !is_nonconstant(x) {
        return false;
    }
    match (measure.risk(x), space.expectation(x)) {
        (Ok(r), Ok(e)) => r <= e + COUNTEREXAMPLE_TOL,
        _ => false,
    }
}

/// Searches for a nonconstant `X` with `R(X) <= E(X)`: structured witnesses
/// first, then `trials` standard Gaussian samples drawn from `seed`.
/// `None` proves nothing.
pub fn falsify_aversity(measure: &dyn RiskFunctional, trials: usize, seed: u64) -> Option<RandomVariable> {
    let space = measure.space().clone();
    let n = space.atom_count();
    if let Some(x) = measure
        .witnesses()
        .into_iter()
        .find(|x| is_counterexample(&space, measure, x))
    {
        return Some(x);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x = RandomVariable::new((0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
        if is_counterexample(&space, measure, &x) {
            return Some(x);
        }
    }
    None
}
