//! Built-in self checks run by `riskenv --command selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{self, BoundMeasure, MeasureExpr};
use crate::aversity::{self, Verdict};
use crate::envelope::{Envelope, CONTAINS_TOL};
use crate::error::Result;
use crate::geometry::HullLimits;
use crate::measures::{self, MeasureSpec};
use crate::oracle::{self, DensityGrid};
use crate::space::{Density, ProbabilitySpace, RandomVariable};
use crate::uncertainty::{self, AffineFamily, UncertaintySet, INCLUSION_TOL};

const AGREE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Random space with `n` atoms, each probability at least `0.05 / n`.
pub fn random_space(rng: &mut impl Rng, n: usize) -> ProbabilitySpace {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    ProbabilitySpace::renormalized(raw.iter().map(|v| v / total).collect())
        .expect("positive weights")
}

pub fn random_variable(rng: &mut impl Rng, n: usize, scale: f64) -> RandomVariable {
    RandomVariable::new((0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

/// One instance of every built-in family on `space`.
pub fn builtin_zoo(space: &ProbabilitySpace) -> Vec<MeasureSpec> {
    let n = space.atom_count();
    let half = n.div_ceil(2);
    let mut zoo = vec![MeasureSpec::Expectation, MeasureSpec::WorstCase];
    if n >= 2 {
        zoo.push(MeasureSpec::Subdivide {
            cells: vec![(0..half).collect(), (half..n).collect()],
            weights: vec![0.6, 0.4],
        });
    }
    zoo.push(MeasureSpec::Oce {
        gamma1: 2.0,
        gamma2: 0.25,
    });
    for alpha in [0.1, 0.5, 0.9] {
        zoo.push(MeasureSpec::Cvar { alpha });
    }
    for lambda in [0.0, 0.5, 1.0] {
        zoo.push(MeasureSpec::MeanDeviation { lambda });
    }
    zoo
}

/// The two-atom space and density showing that the constant density is not
/// an L² interior point of the CVaR₀.₅ envelope.
pub fn l2_gap_instance(delta: f64) -> Result<(ProbabilitySpace, Density)> {
    let d2 = delta * delta;
    let space = ProbabilitySpace::new(vec![d2 / (16.0 + d2), 16.0 / (16.0 + d2)])?;
    let q = Density::new(&space, vec![3.0, 1.0 - d2 / 8.0])?;
    Ok((space, q))
}

/// Segment envelope `conv{1, (3/4, 3/2, 3/4)}` on three equally likely atoms.
pub fn segment_envelope() -> Result<Envelope> {
    let space = ProbabilitySpace::uniform(3)?;
    let q0 = Density::new(&space, vec![0.75, 1.5, 0.75])?;
    Envelope::from_vertices(&space, vec![Density::one(3), q0])
}

fn check(name: &str, f: impl FnOnce() -> Result<std::result::Result<String, String>>) -> Check {
    let (passed, detail) = match f() {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn verdict(ok: bool, detail: String) -> std::result::Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

pub fn run(seed: u64) -> SelftestReport {
    let checks = vec![
        check("primal-dual", || primal_dual(seed)),
        check("l2-gap-density", l2_gap),
        check("segment-envelope-not-averse", segment_not_averse),
        check("block-subdivide-witness", block_subdivide),
        check("averse-builtins", averse_builtins),
        check("envelope-calculus", || envelope_calculus(seed)),
        check("affine-image-preimage", || image_preimage(seed)),
        check("affine-evaluation", || affine_evaluation(seed)),
        check("oracle-sandwich", || oracle_sandwich(seed)),
        check("axioms", || axioms(seed)),
    ];
    SelftestReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn primal_dual(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for _ in 0..5 {
        let n = rng.random_range(2..=6);
        let space = random_space(&mut rng, n);
        for spec in builtin_zoo(&space) {
            let env = measures::envelope_of(&spec, &space)?;
            for _ in 0..5 {
                let x = random_variable(&mut rng, n, 10.0);
                let primal = measures::eval_primal(&spec, &space, &x)?;
                let dual = env.support(&x)?.value;
                worst = worst.max((primal - dual).abs());
                count += 1;
            }
        }
    }
    Ok(verdict(worst <= AGREE_TOL, format!("{count} evaluations, max gap {worst:.3e}")))
}

fn l2_gap() -> Result<std::result::Result<String, String>> {
    for delta in [0.1, 0.5, 0.9] {
        let (space, q) = l2_gap_instance(delta)?;
        let mean: f64 = space.probs().iter().zip(q.weights()).map(|(p, w)| p * w).sum();
        let diff: Vec<f64> = q.weights().iter().map(|w| w - 1.0).collect();
        let dist = space.l2_norm(&diff)?;
        let cvar = measures::envelope_of(&MeasureSpec::Cvar { alpha: 0.5 }, &space)?;
        if (mean - 1.0).abs() > 1e-12
            || (dist - delta / 2.0).abs() > 1e-12
            || cvar.contains(&q, CONTAINS_TOL)?
        {
            return Ok(Err(format!("delta {delta}: mean {mean}, distance {dist}")));
        }
    }
    Ok(Ok("delta in {0.1, 0.5, 0.9}".into()))
}

fn segment_not_averse() -> Result<std::result::Result<String, String>> {
    let env = segment_envelope()?;
    let x: RandomVariable = vec![-1.0, 0.0, 1.0].into();
    let r = env.support(&x)?.value;
    let e = env.space().expectation(&x)?;
    let report = aversity::is_averse_finite(&env, HullLimits::default(), 200, 0)?;
    Ok(verdict(
        r.abs() < 1e-12
            && e.abs() < 1e-12
            && report.necessary_holds
            && report.verdict == Verdict::NotAverse
            && report.counterexample.is_some(),
        format!("R(X) = {r}, E(X) = {e}, verdict {:?}", report.verdict),
    ))
}

fn block_subdivide() -> Result<std::result::Result<String, String>> {
    let space = ProbabilitySpace::new(vec![0.1, 0.15, 0.25, 0.2, 0.3])?;
    let cells = vec![vec![0, 1], vec![2], vec![3, 4]];
    let weights: Vec<f64> = cells
        .iter()
        .map(|c: &Vec<usize>| c.iter().map(|&i| space.probs()[i]).sum())
        .collect();
    let spec = MeasureSpec::Subdivide {
        cells: cells.clone(),
        weights,
    };
    let mut x = vec![0.0; 5];
    for (k, cell) in cells.iter().enumerate() {
        for &i in cell {
            x[i] = (k + 1) as f64;
        }
    }
    let x = RandomVariable::new(x);
    let r = measures::eval_primal(&spec, &space, &x)?;
    let e = space.expectation(&x)?;
    let env = measures::envelope_of(&spec, &space)?;
    let report = aversity::is_averse_finite(&env, HullLimits::default(), 50, 0)?;
    Ok(verdict(
        (r - e).abs() < 1e-12 && report.verdict == Verdict::NotAverse,
        format!("R(X) - E(X) = {:.3e}, verdict {:?}", r - e, report.verdict),
    ))
}

fn averse_builtins() -> Result<std::result::Result<String, String>> {
    let space = ProbabilitySpace::new(vec![0.1, 0.2, 0.3, 0.4])?;
    for spec in [
        MeasureSpec::Cvar { alpha: 0.1 },
        MeasureSpec::Cvar { alpha: 0.5 },
        MeasureSpec::Cvar { alpha: 0.9 },
        MeasureSpec::Oce { gamma1: 2.0, gamma2: 0.25 },
        MeasureSpec::MeanDeviation { lambda: 0.8 },
    ] {
        let env = measures::envelope_of(&spec, &space)?;
        let report = aversity::is_averse_finite(&env, HullLimits::default(), 200, 0)?;
        if report.verdict != Verdict::Averse {
            return Ok(Err(format!("{} reported {:?}", spec.name(), report.verdict)));
        }
    }
    Ok(Ok("CVaR, OCE and mean deviation averse".into()))
}

fn envelope_calculus(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let space = ProbabilitySpace::new(vec![0.2, 0.3, 0.5])?;
    let cvar = |alpha| MeasureExpr::Leaf(MeasureSpec::Cvar { alpha });
    let max = MeasureExpr::MaxOf(vec![MeasureExpr::Leaf(MeasureSpec::Expectation), cvar(0.5)]);
    let combo = MeasureExpr::combo(
        vec![0.3, 0.7],
        vec![cvar(0.5), MeasureExpr::Leaf(MeasureSpec::WorstCase)],
    );
    let inf = MeasureExpr::InfConv(vec![
        cvar(0.6),
        MeasureExpr::Leaf(MeasureSpec::Oce { gamma1: 3.0, gamma2: 0.5 }),
    ]);
    let lim = HullLimits::enumeration();
    let max_env = algebra::envelope(&max, &space, lim)?;
    let combo_env = algebra::envelope(&combo, &space, lim)?;
    let inf_env = algebra::envelope(&inf, &space, lim)?;
    let children = [
        MeasureSpec::Cvar { alpha: 0.6 },
        MeasureSpec::Oce { gamma1: 3.0, gamma2: 0.5 },
    ];
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let x = random_variable(&mut rng, 3, 5.0);
        worst = worst.max((algebra::eval(&max, &space, &x)? - max_env.support(&x)?.value).abs());
        worst = worst.max((algebra::eval(&combo, &space, &x)? - combo_env.support(&x)?.value).abs());
        let v = inf_env.support(&x)?.value;
        let floor = children
            .iter()
            .map(|c| measures::eval_primal(c, &space, &x))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if v > floor + 1e-9 {
            return Ok(Err(format!("intersection support {v} above children minimum {floor}")));
        }
    }
    let x: RandomVariable = vec![0.0, 1.0, 4.0].into();
    let grid = algebra::inf_convolution_oracle(&children[0], &children[1], &space, &x, 24)?;
    let v = inf_env.support(&x)?.value;
    Ok(verdict(
        worst <= AGREE_TOL && v >= grid.value - grid.slack - 1e-9 && v <= grid.value + 1e-9,
        format!("max gap {worst:.3e}; intersection {v} vs grid {} (slack {})", grid.value, grid.slack),
    ))
}

fn image_preimage(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
    let lim = HullLimits::enumeration();
    let space = ProbabilitySpace::new(vec![0.1, 0.2, 0.3, 0.4])?;
    let fam = AffineFamily::new(
        &space,
        vec![vec![1.0, -1.0, 2.0, 0.0].into(), vec![0.5, 3.0, -1.0, 1.0].into()],
    )?;
    let all = Envelope::all_densities(&space);
    let u_all = uncertainty::image_set(&all, &fam, lim)?;
    let back = uncertainty::preimage_envelope(&u_all, &fam, lim)?;
    for _ in 0..20 {
        let x = random_variable(&mut rng, 4, 5.0);
        let (a, b) = (all.support(&x)?.value, back.support(&x)?.value);
        if (a - b).abs() > AGREE_TOL {
            return Ok(Err(format!("preimage of image of all densities: {a} vs {b}")));
        }
    }
    // Three vertices of the full image pulled halfway to its centroid.
    let full = u_all.points(lim)?;
    let centroid: Vec<f64> = (0..2)
        .map(|d| full.iter().map(|p| p[d]).sum::<f64>() / full.len() as f64)
        .collect();
    let inner_pts = full
        .iter()
        .take(3)
        .map(|p| p.iter().zip(&centroid).map(|(a, c)| 0.5 * (a + c)).collect())
        .collect();
    let u = UncertaintySet::from_points(2, inner_pts)?;
    let round = uncertainty::image_set(&uncertainty::preimage_envelope(&u, &fam, lim)?, &fam, lim)?;
    for _ in 0..20 {
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if (u.support(&a)? - round.support(&a)?).abs() > AGREE_TOL {
            return Ok(Err("image of preimage differs from the set".into()));
        }
    }
    let narrow = measures::envelope_of(&MeasureSpec::Cvar { alpha: 0.3 }, &space)?;
    let wide = measures::envelope_of(&MeasureSpec::Cvar { alpha: 0.7 }, &space)?;
    let u_narrow = uncertainty::image_set(&narrow, &fam, lim)?;
    let u_wide = uncertainty::image_set(&wide, &fam, lim)?;
    let q_of_u = uncertainty::preimage_envelope(&u_narrow, &fam, lim)?;
    if !narrow.is_subset_of(&q_of_u, lim, CONTAINS_TOL)? {
        return Ok(Err("envelope not inside preimage of its image".into()));
    }
    if !u_narrow.is_subset_of(&u_wide, lim, INCLUSION_TOL)? {
        return Ok(Err("nested envelopes gave non-nested images".into()));
    }
    let fam1 = AffineFamily::new(&space, vec![vec![0.0, 1.0, 2.0, 3.0].into()])?;
    let inner = UncertaintySet::from_points(1, vec![vec![1.0], vec![1.5]])?;
    let outer = UncertaintySet::from_points(1, vec![vec![0.5], vec![2.0]])?;
    let qi = uncertainty::preimage_envelope(&inner, &fam1, lim)?;
    let qo = uncertainty::preimage_envelope(&outer, &fam1, lim)?;
    let forward = inner.is_subset_of(&outer, lim, INCLUSION_TOL)? && qi.is_subset_of(&qo, lim, CONTAINS_TOL)?;
    let backward = !outer.is_subset_of(&inner, lim, INCLUSION_TOL)? && !qo.is_subset_of(&qi, lim, CONTAINS_TOL)?;
    Ok(verdict(forward && backward, "inclusions preserved both ways".into()))
}

fn affine_evaluation(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x52);
    let lim = HullLimits::enumeration();
    let space = random_space(&mut rng, 5);
    let basis = (0..3).map(|_| random_variable(&mut rng, 5, 4.0)).collect();
    let fam = AffineFamily::new(&space, basis)?;
    let mut worst: f64 = 0.0;
    for spec in builtin_zoo(&space) {
        if matches!(spec, MeasureSpec::MeanDeviation { .. }) {
            continue;
        }
        let u = uncertainty::canonical_uncertainty_set(&spec.clone().into(), &fam, lim)?;
        for _ in 0..30 {
            let a0 = rng.random_range(-3.0..3.0);
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let primal = measures::eval_primal(&spec, &space, &fam.combine(a0, &a)?)?;
            worst = worst.max((primal - uncertainty::eval_on_affine(a0, &a, &u)?).abs());
        }
    }
    Ok(verdict(worst <= AGREE_TOL, format!("max gap {worst:.3e}")))
}

fn oracle_sandwich(seed: u64) -> Result<std::result::Result<String, String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x53);
    let k = 16;
    for _ in 0..3 {
        let space = random_space(&mut rng, 3);
        let grid = DensityGrid::new(&space, k)?;
        for spec in [
            MeasureSpec::WorstCase,
            MeasureSpec::Cvar { alpha: 0.5 },
            MeasureSpec::Oce { gamma1: 2.0, gamma2: 0.25 },
        ] {
            let env = measures::envelope_of(&spec, &space)?;
            let x = random_variable(&mut rng, 3, 5.0);
            let lower = oracle::brute_force_support(&env, &x, &grid)?;
            let exact = env.support(&x)?.value;
            let c = oracle::sandwich_constant(&space, &x)?;
            if lower > exact + 1e-9 || exact > lower + c / k as f64 {
                return Ok(Err(format!("{}: grid {lower}, exact {exact}", spec.name())));
            }
        }
    }
    Ok(Ok(format!("grid resolution {k}")))
}

fn axioms(seed: u64) -> Result<std::result::Result<String, String>> {
    let space = ProbabilitySpace::new(vec![0.15, 0.25, 0.35, 0.25])?;
    let mut exprs: Vec<MeasureExpr> = builtin_zoo(&space).into_iter().map(Into::into).collect();
    let cvar = |alpha| MeasureExpr::Leaf(MeasureSpec::Cvar { alpha });
    exprs.push(MeasureExpr::MaxOf(vec![cvar(0.2), MeasureExpr::Leaf(MeasureSpec::MeanDeviation { lambda: 0.5 })]));
    exprs.push(MeasureExpr::combo(vec![0.5, 0.5], vec![cvar(0.9), MeasureExpr::Leaf(MeasureSpec::Expectation)]));
    exprs.push(MeasureExpr::InfConv(vec![cvar(0.5), MeasureExpr::Leaf(MeasureSpec::WorstCase)]));
    for (i, expr) in exprs.iter().enumerate() {
        let m = BoundMeasure::new(expr.clone(), &space)?;
        let report = oracle::axiom_suite(&m, 30, seed.wrapping_add(i as u64), false);
        if !report.all_passed() {
            return Ok(Err(format!("{} failed: {:?}", expr.name(), report.results)));
        }
    }
    Ok(Ok(format!("{} measures pass A1, A2, A3, A5", exprs.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let report = run(0);
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
