//! Compound measures built from envelope set operations.
//!
//! | expression           | value                     | envelope                     |
//! |----------------------|---------------------------|------------------------------|
//! | `combo(w, R_1..R_n)` | `sum w_i R_i(X)`          | `sum w_i Q_i` (Minkowski)    |
//! | `max(R_1..R_n)`      | `max_i R_i(X)`            | `conv(Q_1 ∪ … ∪ Q_n)`        |
//! | `infconv(R_1..R_n)`  | support of `∩ Q_i`        | `Q_1 ∩ … ∩ Q_n` (if nonempty)|
//!
//! Combos and maxima evaluate through their children's closed forms; the
//! envelope constructions exist to verify those identities.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::envelope::{Envelope, EnvelopeRepr};
use crate::error::{Error, Result};
use crate::geometry::{self, HullLimits};
use crate::measures::{self, MeasureSpec, RiskFunctional};
use crate::space::{Density, ProbabilitySpace, RandomVariable};

/// Cap on the number of points a Minkowski combination may materialize.
pub const MINKOWSKI_CAP: usize = 4096;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureExpr {
    Leaf(MeasureSpec),
    ConvexCombo {
        weights: Vec<f64>,
        children: Vec<MeasureExpr>,
    },
    MaxOf(Vec<MeasureExpr>),
    InfConv(Vec<MeasureExpr>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum NodeRepr {
    Combo {
        weights: Vec<f64>,
        children: Vec<MeasureExpr>,
    },
    Max {
        children: Vec<MeasureExpr>,
    },
    Infconv {
        children: Vec<MeasureExpr>,
    },
}

impl Serialize for MeasureExpr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MeasureExpr::Leaf(spec) => spec.serialize(s),
            MeasureExpr::ConvexCombo { weights, children } => NodeRepr::Combo {
                weights: weights.clone(),
                children: children.clone(),
            }
            .serialize(s),
            MeasureExpr::MaxOf(children) => NodeRepr::Max {
                children: children.clone(),
            }
            .serialize(s),
            MeasureExpr::InfConv(children) => NodeRepr::Infconv {
                children: children.clone(),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for MeasureExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        if value.get("op").is_some() {
            let node = NodeRepr::deserialize(value).map_err(D::Error::custom)?;
            Ok(match node {
                NodeRepr::Combo { weights, children } => {
                    MeasureExpr::ConvexCombo { weights, children }
                }
                NodeRepr::Max { children } => MeasureExpr::MaxOf(children),
                NodeRepr::Infconv { children } => MeasureExpr::InfConv(children),
            })
        } else {
            MeasureSpec::deserialize(value)
                .map(MeasureExpr::Leaf)
                .map_err(D::Error::custom)
        }
    }
}

impl From<MeasureSpec> for MeasureExpr {
    fn from(spec: MeasureSpec) -> Self {
        MeasureExpr::Leaf(spec)
    }
}

impl MeasureExpr {
    pub fn combo(weights: Vec<f64>, children: Vec<MeasureExpr>) -> Self {
        MeasureExpr::ConvexCombo { weights, children }
    }

    pub fn validate(&self, space: &ProbabilitySpace) -> Result<()> {
        match self {
            MeasureExpr::Leaf(spec) => spec.validate(space),
            MeasureExpr::ConvexCombo { weights, children } => {
                if children.is_empty() || weights.len() != children.len() {
                    return Err(Error::InvalidSpec(format!(
                        "combo has {} weights for {} children",
                        weights.len(),
                        children.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                    return Err(Error::InvalidSpec("combo weights must be positive".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::InvalidSpec(format!(
                        "combo weights sum to {total}, expected 1"
                    )));
                }
                children.iter().try_for_each(|c| c.validate(space))
            }
            MeasureExpr::MaxOf(children) | MeasureExpr::InfConv(children) => {
                if children.is_empty() {
                    return Err(Error::InvalidSpec("operator needs at least one child".into()));
                }
                children.iter().try_for_each(|c| c.validate(space))
            }
        }
    }

    pub fn name(&self) -> String {
        let list = |cs: &[MeasureExpr]| cs.iter().map(|c| c.name()).collect::<Vec<_>>().join(",");
        match self {
            MeasureExpr::Leaf(spec) => spec.name(),
            MeasureExpr::ConvexCombo { weights, children } => {
                format!("combo{weights:?}({})", list(children))
            }
            MeasureExpr::MaxOf(children) => format!("max({})", list(children)),
            MeasureExpr::InfConv(children) => format!("infconv({})", list(children)),
        }
    }
}

/// Evaluates an expression. Combos and maxima use their children's values;
/// inf-convolutions use the support function of the intersected envelope.
pub fn eval(expr: &MeasureExpr, space: &ProbabilitySpace, x: &RandomVariable) -> Result<f64> {
    expr.validate(space)?;
    eval_unchecked(expr, space, x)
}

fn eval_unchecked(expr: &MeasureExpr, space: &ProbabilitySpace, x: &RandomVariable) -> Result<f64> {
    match expr {
        MeasureExpr::Leaf(spec) => measures::eval_primal(spec, space, x),
        MeasureExpr::ConvexCombo { weights, children } => {
            let mut total = 0.0;
            for (w, c) in weights.iter().zip(children) {
                total += w * eval_unchecked(c, space, x)?;
            }
            Ok(total)
        }
        MeasureExpr::MaxOf(children) => {
            let mut best = f64::NEG_INFINITY;
            for c in children {
                best = best.max(eval_unchecked(c, space, x)?);
            }
            Ok(best)
        }
        MeasureExpr::InfConv(_) => {
            let env = envelope(expr, space, HullLimits::default())?;
            Ok(env.support(x)?.value)
        }
    }
}

fn vertices_for_hull(env: &Envelope, limits: HullLimits) -> Result<Vec<Density>> {
    env.vertex_list(limits).map_err(|e| match e {
        Error::NotPolyhedral => Error::RepresentationUnsupported(
            "mean-deviation ball has no vertex list".into(),
        ),
        other => other,
    })
}

/// The risk envelope of an expression.
///
/// Combos materialize the Minkowski combination of the children's vertex
/// lists, maxima concatenate vertex lists, and inf-convolutions concatenate
/// constraint rows.
pub fn envelope(expr: &MeasureExpr, space: &ProbabilitySpace, limits: HullLimits) -> Result<Envelope> {
    expr.validate(space)?;
    match expr {
        MeasureExpr::Leaf(spec) => measures::envelope_of(spec, space),
        MeasureExpr::ConvexCombo { weights, children } => {
            let mut points: Vec<Vec<f64>> = vec![vec![0.0; space.atom_count()]];
            for (w, child) in weights.iter().zip(children) {
                let verts = vertices_for_hull(&envelope(child, space, limits)?, limits)?;
                if points.len().saturating_mul(verts.len()) > MINKOWSKI_CAP {
                    return Err(Error::SizeLimit(format!(
                        "Minkowski combination exceeds {MINKOWSKI_CAP} points"
                    )));
                }
                points = points
                    .iter()
                    .flat_map(|p| {
                        verts.iter().map(move |v| {
                            p.iter().zip(v.weights()).map(|(a, b)| a + w * b).collect()
                        })
                    })
                    .collect();
            }
            let vertices = geometry::dedup_points(points)
                .into_iter()
                .map(|p| Density::new(space, p))
                .collect::<Result<Vec<_>>>()?;
            Envelope::from_vertices(space, vertices)
        }
        MeasureExpr::MaxOf(children) => {
            let mut points = Vec::new();
            for child in children {
                let verts = vertices_for_hull(&envelope(child, space, limits)?, limits)?;
                points.extend(verts.into_iter().map(|d| d.weights().to_vec()));
            }
            let vertices = geometry::dedup_points(points)
                .into_iter()
                .map(|p| Density::new(space, p))
                .collect::<Result<Vec<_>>>()?;
            Envelope::from_vertices(space, vertices)
        }
        MeasureExpr::InfConv(children) => {
            let mut eqs = Vec::new();
            let mut les = Vec::new();
            for child in children {
                let h = envelope(child, space, limits)?
                    .to_constraint_rep(limits)
                    .map_err(|e| match e {
                        Error::NotPolyhedral => Error::RepresentationUnsupported(
                            "cannot intersect a mean-deviation ball".into(),
                        ),
                        Error::EmptyEnvelope => Error::EmptyIntersection,
                        other => other,
                    })?;
                if let EnvelopeRepr::Constraints {
                    equalities,
                    inequalities,
                } = h.repr()
                {
                    eqs.extend(equalities.iter().cloned());
                    les.extend(inequalities.iter().cloned());
                }
            }
            let env = Envelope::from_constraints(space, eqs, les)?;
            if !env.is_nonempty()? {
                return Err(Error::EmptyIntersection);
            }
            Ok(env)
        }
    }
}

/// Result of the brute-force inf-convolution search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOracle {
    /// Smallest `R_A(X1) + R_B(X - X1)` found; an upper bound on the
    /// inf-convolution.
    pub value: f64,
    pub step: f64,
    /// `value - slack` bounds the inf-convolution from below provided an
    /// optimal split lies inside the searched range.
    pub slack: f64,
    pub range: (f64, f64),
    /// Always true: the search range is a padding heuristic, not a proof.
    pub range_is_heuristic: bool,
}

/// Grid search of `inf { R_A(X1) + R_B(X - X1) }` with each component of
/// `X1` ranging over `[min x - span, max x + span]` in `resolution` steps.
pub fn inf_convolution_oracle(
    spec_a: &MeasureSpec,
    spec_b: &MeasureSpec,
    space: &ProbabilitySpace,
    x: &RandomVariable,
    resolution: usize,
) -> Result<GridOracle> {
    space.check_len(x.len())?;
    spec_a.validate(space)?;
    spec_b.validate(space)?;
    let n = space.atom_count();
    if n > 4 {
        return Err(Error::SizeLimit(format!("grid oracle supports at most 4 atoms, got {n}")));
    }
    if resolution == 0 {
        return Err(Error::InvalidSpec("grid resolution must be positive".into()));
    }
    let lo_x = space.ess_inf(x)?;
    let hi_x = space.ess_sup(x)?;
    let span = hi_x - lo_x;
    let (lo, hi) = (lo_x - span, hi_x + span);
    let per_axis = if span == 0.0 { 1 } else { resolution + 1 };
    let total = (per_axis as u64).pow(n as u32);
    if total > 5_000_000 {
        return Err(Error::SizeLimit(format!("{total} grid points")));
    }
    let step = if span == 0.0 { 0.0 } else { (hi - lo) / resolution as f64 };

    let mut idx = vec![0usize; n];
    let mut best = f64::INFINITY;
    let mut x1 = vec![0.0; n];
    let mut x2 = vec![0.0; n];
    for _ in 0..total {
        for i in 0..n {
            x1[i] = lo + step * idx[i] as f64;
            x2[i] = x.values()[i] - x1[i];
        }
        let a = measures::eval_primal(spec_a, space, &RandomVariable::new(x1.clone()))?;
        let b = measures::eval_primal(spec_b, space, &RandomVariable::new(x2.clone()))?;
        best = best.min(a + b);
        for d in idx.iter_mut() {
            *d += 1;
            if *d < per_axis {
                break;
            }
            *d = 0;
        }
    }
    Ok(GridOracle {
        value: best,
        step,
        slack: step,
        range: (lo, hi),
        range_is_heuristic: true,
    })
}

/// An expression bound to a probability space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundMeasure {
    pub expr: MeasureExpr,
    pub space: ProbabilitySpace,
}

impl BoundMeasure {
    pub fn new(expr: impl Into<MeasureExpr>, space: &ProbabilitySpace) -> Result<Self> {
        let expr = expr.into();
        expr.validate(space)?;
        Ok(Self {
            expr,
            space: space.clone(),
        })
    }

    pub fn envelope(&self, limits: HullLimits) -> Result<Envelope> {
        envelope(&self.expr, &self.space, limits)
    }
}

impl RiskFunctional for BoundMeasure {
    fn space(&self) -> &ProbabilitySpace {
        &self.space
    }

    fn risk(&self, x: &RandomVariable) -> Result<f64> {
        eval_unchecked(&self.expr, &self.space, x)
    }

    fn witnesses(&self) -> Vec<RandomVariable> {
        let n = self.space.atom_count();
        let mut out = Vec::new();
        if let MeasureExpr::Leaf(MeasureSpec::Subdivide { cells, .. }) = &self.expr {
            // X = sum_k k * 1_{cell k}
            let mut v = vec![0.0; n];
            for (k, cell) in cells.iter().enumerate() {
                for &i in cell {
                    v[i] = (k + 1) as f64;
                }
            }
            out.push(RandomVariable::new(v));
        }
        if let Ok(env) = self.envelope(HullLimits::default()) {
            out.extend(env.witnesses());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(spec: MeasureSpec) -> MeasureExpr {
        MeasureExpr::Leaf(spec)
    }

    fn cvar(alpha: f64) -> MeasureExpr {
        leaf(MeasureSpec::Cvar { alpha })
    }

    #[test]
    fn combo_of_expectation_and_worst_case() {
        let s = ProbabilitySpace::uniform(2).unwrap();
        let x: RandomVariable = vec![0.0, 10.0].into();
        let e = MeasureExpr::combo(
            vec![0.5, 0.5],
            vec![leaf(MeasureSpec::Expectation), leaf(MeasureSpec::WorstCase)],
        );
        assert!((eval(&e, &s, &x).unwrap() - 7.5).abs() < 1e-12);
        let env = envelope(&e, &s, HullLimits::default()).unwrap();
        assert!((env.support(&x).unwrap().value - 7.5).abs() < 1e-12);
        // Segment {0.5 + 0.5 q : q in P}: endpoints (1.5, 0.5) and (0.5, 1.5).
        let EnvelopeRepr::Vertices { vertices } = env.repr() else { panic!() };
        assert_eq!(vertices.len(), 2);
    }

    #[test]
    fn max_with_expectation_is_cvar() {
        let s = ProbabilitySpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let e = MeasureExpr::MaxOf(vec![leaf(MeasureSpec::Expectation), cvar(0.5)]);
        let env = envelope(&e, &s, HullLimits::default()).unwrap();
        for x in [[1.0, 2.0, -3.0, 0.5], [0.0, 0.0, 0.0, 1.0], [-5.0, 2.0, 2.0, 1.0]] {
            let x: RandomVariable = x.to_vec().into();
            let c = eval(&cvar(0.5), &s, &x).unwrap();
            assert!((eval(&e, &s, &x).unwrap() - c).abs() < 1e-12);
            assert!((env.support(&x).unwrap().value - c).abs() < 1e-9);
        }
    }

    #[test]
    fn infconv_of_nested_boxes_is_tighter_box() {
        let s = ProbabilitySpace::uniform(4).unwrap();
        let e = MeasureExpr::InfConv(vec![cvar(0.5), cvar(0.9)]);
        let x: RandomVariable = vec![3.0, -1.0, 0.0, 7.0].into();
        let tight = eval(&cvar(0.5), &s, &x).unwrap();
        assert!((eval(&e, &s, &x).unwrap() - tight).abs() < 1e-9);
    }

    #[test]
    fn infconv_of_oce_boxes_intersects_bounds() {
        let s = ProbabilitySpace::uniform(3).unwrap();
        let e = MeasureExpr::InfConv(vec![
            leaf(MeasureSpec::Oce { gamma1: 3.0, gamma2: 0.1 }),
            leaf(MeasureSpec::Oce { gamma1: 2.0, gamma2: 0.5 }),
        ]);
        let x: RandomVariable = vec![0.0, 1.0, 5.0].into();
        // Box [0.5, 2]: put 2 on the top atom, 0.5 on the middle, rest 0.5.
        let expect = (0.5 * 0.0 + 0.5 * 1.0 + 2.0 * 5.0) / 3.0;
        assert!((eval(&e, &s, &x).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let s = ProbabilitySpace::uniform(2).unwrap();
        // Subdivide needs q_0 = 1.8; CVaR_0.2 caps q at 1.25.
        let e = MeasureExpr::InfConv(vec![
            leaf(MeasureSpec::Subdivide {
                cells: vec![vec![0], vec![1]],
                weights: vec![0.9, 0.1],
            }),
            cvar(0.2),
        ]);
        assert_eq!(
            eval(&e, &s, &vec![1.0, 2.0].into()),
            Err(Error::EmptyIntersection)
        );
        let ball = MeasureExpr::InfConv(vec![leaf(MeasureSpec::MeanDeviation { lambda: 0.5 }), cvar(0.5)]);
        assert!(matches!(
            eval(&ball, &s, &vec![1.0, 2.0].into()),
            Err(Error::RepresentationUnsupported(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let s = ProbabilitySpace::uniform(2).unwrap();
        let a = MeasureSpec::Cvar { alpha: 0.5 };
        let b = MeasureSpec::Cvar { alpha: 0.9 };
        let x: RandomVariable = vec![0.0, 10.0].into();
        let g = inf_convolution_oracle(&a, &b, &s, &x, 30).unwrap();
        assert!((g.value - 10.0).abs() < 1e-9, "{g:?}");
        assert!(g.range_is_heuristic);

        let c = RandomVariable::constant(2.5, 2);
        let g = inf_convolution_oracle(&a, &a, &s, &c, 10).unwrap();
        assert!((g.value - 2.5).abs() < 1e-12);

        let s5 = ProbabilitySpace::uniform(5).unwrap();
        assert!(matches!(
            inf_convolution_oracle(&a, &b, &s5, &RandomVariable::constant(0.0, 5), 4),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"op":"combo","weights":[0.25,0.75],"children":[
            {"kind":"expectation"},
            {"op":"max","children":[{"kind":"cvar","alpha":0.5},{"op":"infconv","children":[{"kind":"worstcase"}]}]}
        ]}"#;
        let e: MeasureExpr = serde_json::from_str(text).unwrap();
        let MeasureExpr::ConvexCombo { weights, children } = &e else { panic!() };
        assert_eq!(weights, &vec![0.25, 0.75]);
        assert!(matches!(children[1], MeasureExpr::MaxOf(_)));
        let back: MeasureExpr = serde_json::from_value(serde_json::to_value(&e).unwrap()).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<MeasureExpr>(r#"{"op":"min","children":[]}"#).is_err());
    }

    #[test]
    fn validation() {
        let s = ProbabilitySpace::uniform(2).unwrap();
        let bad = [
            MeasureExpr::combo(vec![0.5, 0.6], vec![cvar(0.1), cvar(0.2)]),
            MeasureExpr::combo(vec![1.0], vec![cvar(0.1), cvar(0.2)]),
            MeasureExpr::MaxOf(vec![]),
            MeasureExpr::InfConv(vec![cvar(1.5)]),
        ];
        for e in &bad {
            assert!(eval(e, &s, &vec![0.0, 1.0].into()).is_err(), "{e:?}");
        }
    }
}
