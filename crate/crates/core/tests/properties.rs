mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskenv::algebra::{self, MeasureExpr};
use riskenv::aversity;
use riskenv::envelope::EnvelopeRepr;
use riskenv::lp::{self, LinearProgram, LpResult};
use riskenv::measures::{self, envelope_of};
use riskenv::{Density, Envelope, HullLimits, MeasureSpec, ProbabilitySpace, RandomVariable};

fn arb_space(max_atoms: usize) -> impl Strategy<Value = ProbabilitySpace> {
    prop::collection::vec(0.05f64..1.0, 2..=max_atoms).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        ProbabilitySpace::renormalized(raw.iter().map(|v| v / total).collect()).unwrap()
    })
}

fn arb_spec(n: usize) -> impl Strategy<Value = MeasureSpec> {
    let sub = (1usize..n.max(2)).prop_map(move |split| {
        let split = split.min(n - 1).max(1);
        MeasureSpec::Subdivide {
            cells: vec![(0..split).collect(), (split..n).collect()],
            weights: vec![0.35, 0.65],
        }
    });
    prop_oneof![
        Just(MeasureSpec::Expectation),
        Just(MeasureSpec::WorstCase),
        sub,
        (1.01f64..8.0, 0.0f64..0.99).prop_map(|(gamma1, gamma2)| MeasureSpec::Oce { gamma1, gamma2 }),
        (0.0f64..0.99).prop_map(|alpha| MeasureSpec::Cvar { alpha }),
        (0.0f64..=1.0).prop_map(|lambda| MeasureSpec::MeanDeviation { lambda }),
    ]
}

fn arb_case() -> impl Strategy<Value = (ProbabilitySpace, MeasureSpec, Vec<f64>, Vec<f64>)> {
    arb_space(7).prop_flat_map(|s| {
        let n = s.atom_count();
        (
            Just(s),
            arb_spec(n),
            prop::collection::vec(-20.0f64..20.0, n),
            prop::collection::vec(-20.0f64..20.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn primal_matches_support((s, spec, x, _) in arb_case()) {
        let x = RandomVariable::new(x);
        let primal = measures::eval_primal(&spec, &s, &x).unwrap();
        let env = envelope_of(&spec, &s).unwrap();
        let sup = env.support(&x).unwrap();
        prop_assert!((primal - sup.value).abs() <= 1e-7, "{} vs {}", primal, sup.value);
        prop_assert!(env.contains(&sup.maximizer, 1e-7).unwrap());
    }

    #[test]
    fn support_is_coherent((s, spec, x, y) in arb_case(), c in -10.0f64..10.0, k in 0.0f64..10.0) {
        let env = envelope_of(&spec, &s).unwrap();
        let r = |v: &RandomVariable| env.support(v).unwrap().value;
        let x = RandomVariable::new(x);
        let y = RandomVariable::new(y);
        let tol = 1e-7 * (1.0 + k);
        prop_assert!((r(&x.shift(c)) - r(&x) - c).abs() <= 1e-7);
        prop_assert!((r(&x.scale(k)) - k * r(&x)).abs() <= tol);
        prop_assert!(r(&x.combine(1.0, &y, 1.0)) <= r(&x) + r(&y) + 1e-7);
        let above = RandomVariable::new(x.values().iter().zip(y.values()).map(|(a, b)| a.max(*b)).collect());
        prop_assert!(r(&x) <= r(&above) + 1e-7);
        prop_assert!((r(&RandomVariable::constant(c, s.atom_count())) - c).abs() <= 1e-9);
    }

    #[test]
    fn risk_dominates_expectation((s, spec, x, _) in arb_case()) {
        // Subdivide with arbitrary cell masses may exclude the constant density.
        prop_assume!(!matches!(spec, MeasureSpec::Subdivide { .. }));
        let x = RandomVariable::new(x);
        let r = measures::eval_primal(&spec, &s, &x).unwrap();
        prop_assert!(r >= s.expectation(&x).unwrap() - 1e-9);
        prop_assert!(r <= s.ess_sup(&x).unwrap() + 1e-9);
    }

    #[test]
    fn cvar_is_oce(s in arb_space(8), alpha in 0.0f64..0.99, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::variable(&mut rng, s.atom_count(), 10.0);
        let cvar = measures::eval_primal(&MeasureSpec::Cvar { alpha }, &s, &x).unwrap();
        let oce = measures::eval_primal(&MeasureSpec::Oce { gamma1: 1.0 / (1.0 - alpha), gamma2: 0.0 }, &s, &x).unwrap();
        prop_assert!((cvar - oce).abs() <= 1e-9 * (1.0 + cvar.abs()));
    }

    #[test]
    fn compound_bounds(s in arb_space(4), seed in any::<u64>(), w in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = s.atom_count();
        let a = MeasureSpec::Cvar { alpha: rng.random_range(0.0..0.9) };
        let b = MeasureSpec::Oce { gamma1: rng.random_range(1.1..4.0), gamma2: rng.random_range(0.0..0.9) };
        let x = common::variable(&mut rng, n, 10.0);
        let ra = measures::eval_primal(&a, &s, &x).unwrap();
        let rb = measures::eval_primal(&b, &s, &x).unwrap();
        let max = algebra::eval(&MeasureExpr::MaxOf(vec![a.clone().into(), b.clone().into()]), &s, &x).unwrap();
        let combo = algebra::eval(&MeasureExpr::combo(vec![w, 1.0 - w], vec![a.clone().into(), b.clone().into()]), &s, &x).unwrap();
        let inf = algebra::eval(&MeasureExpr::InfConv(vec![a.into(), b.into()]), &s, &x).unwrap();
        prop_assert!(max >= ra - 1e-12 && max >= rb - 1e-12);
        prop_assert!(combo >= ra.min(rb) - 1e-9 && combo <= ra.max(rb) + 1e-9);
        prop_assert!(inf <= ra.min(rb) + 1e-9);
        prop_assert!(inf >= s.expectation(&x).unwrap() - 1e-9);
    }

    #[test]
    fn lp_strong_duality(seed in any::<u64>()) {
        // max c·x, Ax <= b, x >= 0  vs  min b·y, A^T y >= c, y >= 0
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0.1..3.0)).collect()).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..5.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..4.0)).collect();
        let mut primal = LinearProgram::new(c.clone());
        for (row, rhs) in a.iter().zip(&b) {
            primal = primal.le(row.clone(), *rhs);
        }
        let mut dual = LinearProgram::new(b.clone());
        for j in 0..n {
            dual = dual.ge(a.iter().map(|r| r[j]).collect(), c[j]);
        }
        let (LpResult::Optimal { value: p, argmax }, LpResult::Optimal { value: d, .. }) =
            (lp::maximize(&primal).unwrap(), lp::minimize(&dual).unwrap())
        else {
            return Err(TestCaseError::fail("bounded feasible pair"));
        };
        prop_assert!((p - d).abs() <= 1e-9 * (1.0 + p.abs()));
        prop_assert!(primal.max_violation(&argmax) <= 1e-9);
    }
}

/// Whether every direction in `dirs` leaves `1 + t d` inside the envelope.
fn moves_stay_inside(env: &Envelope, dirs: &[Vec<f64>], t: f64) -> bool {
    dirs.iter().all(|d| {
        let q: Vec<f64> = d.iter().map(|v| 1.0 + t * v).collect();
        q.iter().all(|v| *v >= 0.0) && env.contains(&Density::new(env.space(), q).unwrap(), 1e-11).unwrap()
    })
}

#[test]
fn relative_interior_matches_direction_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut agreed = 0;
    let mut interior = 0;
    while agreed < 100 {
        let n = rng.random_range(2..=4);
        let s = common::space(&mut rng, n);
        let p = s.probs().to_vec();
        let k = rng.random_range(1..=5);
        let mut pts = Vec::new();
        for _ in 0..k {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let mass: f64 = raw.iter().zip(&p).map(|(a, b)| a * b).sum();
            let q: Vec<f64> = raw.iter().map(|v| v / mass).collect();
            if rng.random_bool(0.6) {
                // Reflection through 1, shrunk to stay nonnegative.
                let top = q.iter().copied().fold(0.0, f64::max);
                let shrink = if top > 1.0 { 0.5f64.min(0.9 / (top - 1.0)) } else { 0.5 };
                let r: Vec<f64> = q.iter().map(|v| 1.0 - shrink * (v - 1.0)).collect();
                pts.push(Density::new(&s, r).unwrap());
            }
            pts.push(Density::new(&s, q).unwrap());
        }
        if rng.random_bool(0.5) {
            pts.push(Density::one(n));
        }
        let env = Envelope::from_vertices(&s, pts).unwrap();
        if !env.contains(&Density::one(n), 1e-12).unwrap() {
            continue;
        }
        // Tangent directions of the density simplex: pairwise moves, random
        // moves and the projected facet normals.
        let mut dirs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let mut d = vec![0.0; n];
                    d[i] = 1.0 / p[i];
                    d[j] = -1.0 / p[j];
                    dirs.push(d);
                }
            }
        }
        for _ in 0..20 {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean: f64 = raw.iter().zip(&p).map(|(a, b)| a * b).sum();
            dirs.push(raw.iter().map(|v| v - mean).collect());
        }
        let h = env.to_constraint_rep(HullLimits::default()).unwrap();
        if let EnvelopeRepr::Constraints { equalities, inequalities } = h.repr() {
            for r in equalities.iter().chain(inequalities) {
                let a: Vec<f64> = r.coeffs.iter().zip(&p).map(|(c, pi)| c / pi).collect();
                let mean: f64 = a.iter().zip(&p).map(|(x, y)| x * y).sum();
                let d: Vec<f64> = a.iter().map(|v| v - mean).collect();
                dirs.push(d.iter().map(|v| -v).collect());
                dirs.push(d);
            }
        }
        let geometric = aversity::check_relative_interior(&env, HullLimits::default()).unwrap();
        let by_moves = moves_stay_inside(&env, &dirs, 1e-7);
        assert_eq!(geometric, by_moves, "envelope {:?}", env);
        agreed += 1;
        interior += geometric as usize;
    }
    assert!(interior > 5 && interior < 95, "degenerate sample: {interior} interior");
}

#[test]
fn aversity_implication_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..10 {
        let n = rng.random_range(2..=6);
        let s = common::space(&mut rng, n);
        let mut envs: Vec<Envelope> = common::zoo(&mut rng, &s)
            .iter()
            .map(|spec| envelope_of(spec, &s).unwrap())
            .collect();
        envs.push(envelope_of(&common::subdivide_at_base(&s, vec![vec![0], (1..n).collect()]), &s).unwrap());
        for env in envs {
            let report = aversity::is_averse_finite(&env, HullLimits::enumeration(), 300, 9).unwrap();
            if report.sufficient_holds {
                assert!(report.necessary_holds);
                assert!(aversity::falsify_aversity(&env, 300, 1).is_none());
            }
            if let Some(x) = &report.counterexample {
                assert!(!report.sufficient_holds);
                assert!(env.support(x).unwrap().value <= s.expectation(x).unwrap() + 1e-9);
                assert!(!x.is_constant());
            }
        }
    }
}
