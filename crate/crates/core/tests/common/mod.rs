#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use riskenv::{MeasureSpec, ProbabilitySpace, RandomVariable};

pub fn space(rng: &mut impl Rng, n: usize) -> ProbabilitySpace {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ProbabilitySpace::renormalized(raw.iter().map(|v| v / total).collect()).unwrap()
}

/// Uniform draws, with occasional ties.
pub fn variable(rng: &mut impl Rng, n: usize, scale: f64) -> RandomVariable {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    if n > 2 && rng.random_bool(0.2) {
        v[1] = v[0];
    }
    RandomVariable::new(v)
}

/// Random partition of `0..n` into `r` nonempty cells with random masses.
pub fn subdivide(rng: &mut impl Rng, n: usize, r: usize) -> MeasureSpec {
    let mut atoms: Vec<usize> = (0..n).collect();
    atoms.shuffle(rng);
    let mut cells: Vec<Vec<usize>> = (0..r).map(|k| vec![atoms[k]]).collect();
    for &a in &atoms[r..] {
        cells[rng.random_range(0..r)].push(a);
    }
    let raw: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..r - 1].iter().sum();
    weights[r - 1] = 1.0 - head;
    MeasureSpec::Subdivide { cells, weights }
}

/// Subdivide whose cell masses equal the base probabilities of the cells.
pub fn subdivide_at_base(space: &ProbabilitySpace, cells: Vec<Vec<usize>>) -> MeasureSpec {
    let weights = cells
        .iter()
        .map(|c| c.iter().map(|&i| space.probs()[i]).sum())
        .collect();
    MeasureSpec::Subdivide { cells, weights }
}

/// Every built-in family, with the parameter grid used by the acceptance
/// criteria.
pub fn zoo(rng: &mut impl Rng, space: &ProbabilitySpace) -> Vec<MeasureSpec> {
    let n = space.atom_count();
    let mut out = vec![MeasureSpec::Expectation, MeasureSpec::WorstCase];
    if n >= 2 {
        let r = rng.random_range(2..=n.min(3));
        out.push(subdivide(rng, n, r));
    }
    out.push(MeasureSpec::Oce {
        gamma1: 2.0,
        gamma2: 0.25,
    });
    for alpha in [0.1, 0.5, 0.9] {
        out.push(MeasureSpec::Cvar { alpha });
    }
    for lambda in [0.0, 0.5, 1.0] {
        out.push(MeasureSpec::MeanDeviation { lambda });
    }
    out
}

pub fn is_polytope(spec: &MeasureSpec) -> bool {
    !matches!(spec, MeasureSpec::MeanDeviation { .. })
}
