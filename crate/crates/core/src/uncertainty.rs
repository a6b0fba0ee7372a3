//! Uncertainty sets of affine families.
//!
//! For basis variables `X_1..X_n`, an envelope `Q` maps to the polytope
//! `U_Q = {(E(X_1 Q), …, E(X_n Q)) : Q in Q}` in `R^n`, and a polytope `U`
//! maps back to `Q_U = {Q : (E(X_i Q))_i in U}`. On the affine family
//! `a_0 + sum a_i X_i` the risk is `a_0 + max_{z in U_Q} a·z`.

use serde::Serialize;

use crate::algebra::{self, MeasureExpr};
use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::geometry::{self, HullLimits};
use crate::lp::{self, LinearProgram, LinearRow, LpResult};
use crate::space::{Density, ProbabilitySpace, RandomVariable};

/// Slack used when testing polytope inclusion.
pub const INCLUSION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily {
    space: ProbabilitySpace,
    basis: Vec<RandomVariable>,
}

impl AffineFamily {
    pub fn new(space: &ProbabilitySpace, basis: Vec<RandomVariable>) -> Result<Self> {
        if basis.is_empty() {
            return Err(Error::InvalidSpec("affine family needs a basis variable".into()));
        }
        for x in &basis {
            space.check_len(x.len())?;
        }
        Ok(Self {
            space: space.clone(),
            basis,
        })
    }

    pub fn space(&self) -> &ProbabilitySpace {
        &self.space
    }

    pub fn basis(&self) -> &[RandomVariable] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `a_0 + sum a_i X_i`.
    pub fn combine(&self, a0: f64, a: &[f64]) -> Result<RandomVariable> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: a.len(),
            });
        }
        let mut out = vec![a0; self.space.atom_count()];
        for (ai, x) in a.iter().zip(&self.basis) {
            for (o, v) in out.iter_mut().zip(x.values()) {
                *o += ai * v;
            }
        }
        Ok(RandomVariable::new(out))
    }

    /// `(E(X_1 q), …, E(X_n q))`.
    pub fn moments(&self, q: &Density) -> Result<Vec<f64>> {
        self.basis
            .iter()
            .map(|x| self.space.expectation_under(x, q))
            .collect()
    }

    /// Row `j` of the expectation map: `(p_j x_{1j}, …, p_j x_{nj})` as
    /// coefficient vectors per basis variable.
    fn weighted_basis(&self) -> Vec<Vec<f64>> {
        let p = self.space.probs();
        self.basis
            .iter()
            .map(|x| x.values().iter().zip(p).map(|(v, pj)| v * pj).collect())
            .collect()
    }
}

/// A polytope in `R^dim`, as a point list (its convex hull) or as rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UncertaintySet {
    Vertices {
        dim: usize,
        points: Vec<Vec<f64>>,
    },
    Halfspaces {
        dim: usize,
        equalities: Vec<LinearRow>,
        inequalities: Vec<LinearRow>,
    },
}

impl UncertaintySet {
    pub fn from_points(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyEnvelope);
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
        Ok(UncertaintySet::Vertices {
            dim,
            points: geometry::dedup_points(points),
        })
    }

    pub fn from_rows(dim: usize, equalities: Vec<LinearRow>, inequalities: Vec<LinearRow>) -> Result<Self> {
        if let Some(r) = equalities.iter().chain(&inequalities).find(|r| r.coeffs.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.coeffs.len(),
            });
        }
        Ok(UncertaintySet::Halfspaces {
            dim,
            equalities,
            inequalities,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            UncertaintySet::Vertices { dim, .. } | UncertaintySet::Halfspaces { dim, .. } => *dim,
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// `max { a·z : z in U }`.
    pub fn support(&self, a: &[f64]) -> Result<f64> {
        self.check_dim(a.len())?;
        match self {
            UncertaintySet::Vertices { points, .. } => points
                .iter()
                .map(|z| geometry::dot(a, z))
                .reduce(f64::max)
                .ok_or(Error::EmptyEnvelope),
            UncertaintySet::Halfspaces {
                equalities,
                inequalities,
                ..
            } => {
                let mut prog = LinearProgram::free(a.to_vec());
                prog.equalities.extend(equalities.iter().cloned());
                prog.inequalities.extend(inequalities.iter().cloned());
                match lp::maximize(&prog)? {
                    LpResult::Optimal { value, .. } => Ok(value),
                    LpResult::Infeasible => Err(Error::EmptyEnvelope),
                    LpResult::Unbounded => {
                        Err(Error::Numerical("uncertainty set is unbounded".into()))
                    }
                }
            }
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> Result<bool> {
        self.check_dim(z.len())?;
        match self {
            UncertaintySet::Vertices { points, .. } => {
                let densities: Vec<Density> =
                    points.iter().map(|v| Density::from_raw(v.clone())).collect();
                hull_distance(&densities, z).map(|d| d <= tol)
            }
            UncertaintySet::Halfspaces {
                equalities,
                inequalities,
                ..
            } => Ok(equalities.iter().all(|r| (r.dot(z) - r.rhs).abs() <= tol)
                && inequalities.iter().all(|r| r.dot(z) - r.rhs <= tol)),
        }
    }

    /// Facet description. Point lists go through hull computation.
    pub fn to_halfspaces(&self, limits: HullLimits) -> Result<UncertaintySet> {
        match self {
            UncertaintySet::Halfspaces { .. } => Ok(self.clone()),
            UncertaintySet::Vertices { dim, points } => {
                let h = geometry::facets_of_points(points, *dim, limits)?;
                UncertaintySet::from_rows(*dim, h.equalities, h.inequalities)
            }
        }
    }

    /// The vertex points (all listed points for a point list).
    pub fn points(&self, limits: HullLimits) -> Result<Vec<Vec<f64>>> {
        match self {
            UncertaintySet::Vertices { points, .. } => Ok(points.clone()),
            UncertaintySet::Halfspaces {
                dim,
                equalities,
                inequalities,
            } => {
                let pts = geometry::vertices_of_system(equalities, inequalities, *dim, limits.max_vertices)?;
                if pts.is_empty() {
                    return Err(Error::EmptyEnvelope);
                }
                Ok(pts)
            }
        }
    }

    /// `self ⊆ other`: every vertex of `self` lies in `other`.
    pub fn is_subset_of(&self, other: &UncertaintySet, limits: HullLimits, tol: f64) -> Result<bool> {
        let other = other.to_halfspaces(limits)?;
        for z in self.points(limits)? {
            if !other.contains(&z, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// L-infinity distance from `z` to the hull of `points`.
fn hull_distance(points: &[Density], z: &[f64]) -> Result<f64> {
    let nv = points.len();
    let mut objective = vec![0.0; nv + 1];
    objective[nv] = -1.0;
    let mut prog = LinearProgram::new(objective).eq(
        (0..=nv).map(|j| if j < nv { 1.0 } else { 0.0 }).collect(),
        1.0,
    );
    for (i, zi) in z.iter().enumerate() {
        let mut plus: Vec<f64> = points.iter().map(|v| v.weights()[i]).collect();
        plus.push(-1.0);
        let mut minus: Vec<f64> = points.iter().map(|v| -v.weights()[i]).collect();
        minus.push(-1.0);
        prog = prog.le(plus, *zi).le(minus, -zi);
    }
    match lp::maximize(&prog)? {
        LpResult::Optimal { value, .. } => Ok(-value),
        _ => Err(Error::Numerical("hull membership LP failed".into())),
    }
}

/// `U_Q`: the images of the envelope's vertices under the expectation map.
pub fn image_set(env: &Envelope, fam: &AffineFamily, limits: HullLimits) -> Result<UncertaintySet> {
    fam.space.check_len(env.space().atom_count())?;
    let vertices = env.vertex_list(limits).map_err(|e| match e {
        Error::NotPolyhedral => Error::RepresentationUnsupported(
            "mean-deviation envelope has no polytope image".into(),
        ),
        other => other,
    })?;
    let points = vertices
        .iter()
        .map(|v| fam.moments(v))
        .collect::<Result<Vec<_>>>()?;
    UncertaintySet::from_points(fam.dim(), points)
}

/// `Q_U`: the densities whose expected images lie in `U`.
pub fn preimage_envelope(u: &UncertaintySet, fam: &AffineFamily, limits: HullLimits) -> Result<Envelope> {
    u.check_dim(fam.dim())?;
    let UncertaintySet::Halfspaces {
        equalities,
        inequalities,
        ..
    } = u.to_halfspaces(limits)?
    else {
        unreachable!("converted to halfspaces");
    };
    let weighted = fam.weighted_basis();
    let n = fam.space.atom_count();
    let compose = |r: &LinearRow| {
        let mut coeffs = vec![0.0; n];
        for (g, w) in r.coeffs.iter().zip(&weighted) {
            for (c, wj) in coeffs.iter_mut().zip(w) {
                *c += g * wj;
            }
        }
        LinearRow::new(coeffs, r.rhs)
    };
    Envelope::from_constraints(
        &fam.space,
        equalities.iter().map(compose).collect(),
        inequalities.iter().map(compose).collect(),
    )
}

/// `a_0 + max { a·z : z in U }`.
pub fn eval_on_affine(a0: f64, a: &[f64], u: &UncertaintySet) -> Result<f64> {
    Ok(a0 + u.support(a)?)
}

/// The uncertainty set of a measure on an affine family: the image of the
/// measure's envelope.
pub fn canonical_uncertainty_set(
    expr: &MeasureExpr,
    fam: &AffineFamily,
    limits: HullLimits,
) -> Result<UncertaintySet> {
    let env = algebra::envelope(expr, &fam.space, limits)?;
    image_set(&env, fam, limits)
}

/// Dual membership test for `z in U`, where `U` is the uncertainty set with
/// the given vertex points: the LP
/// `max { a_0 + a·z : a_0 + a·u <= 1 for every vertex u }` over free
/// `(a_0, a)` is bounded (with value 1) exactly when `z in U`.
pub fn bilevel_membership(u: &UncertaintySet, z: &[f64], limits: HullLimits) -> Result<bool> {
    u.check_dim(z.len())?;
    let mut objective = vec![1.0];
    objective.extend_from_slice(z);
    let mut prog = LinearProgram::free(objective);
    for v in u.points(limits)? {
        let mut row = vec![1.0];
        row.extend(v);
        prog = prog.le(row, 1.0);
    }
    match lp::maximize(&prog)? {
        LpResult::Optimal { .. } => Ok(true),
        LpResult::Unbounded => Ok(false),
        LpResult::Infeasible => Err(Error::EmptyEnvelope),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{self, MeasureSpec};

    fn lim() -> HullLimits {
        HullLimits::enumeration()
    }

    fn two_atom_family() -> AffineFamily {
        let s = ProbabilitySpace::uniform(2).unwrap();
        AffineFamily::new(&s, vec![vec![0.0, 10.0].into()]).unwrap()
    }

    fn segment_ends(u: &UncertaintySet) -> (f64, f64) {
        (-u.support(&[-1.0]).unwrap(), u.support(&[1.0]).unwrap())
    }

    #[test]
    fn image_examples() {
        let fam = two_atom_family();
        let s = fam.space().clone();
        let one = image_set(&Envelope::base_density(&s), &fam, lim()).unwrap();
        assert_eq!(one, UncertaintySet::Vertices { dim: 1, points: vec![vec![5.0]] });
        for env in [
            Envelope::all_densities(&s),
            measures::envelope_of(&MeasureSpec::Cvar { alpha: 0.5 }, &s).unwrap(),
        ] {
            let (lo, hi) = segment_ends(&image_set(&env, &fam, lim()).unwrap());
            assert!(lo.abs() < 1e-12 && (hi - 10.0).abs() < 1e-12);
        }
        let ball = Envelope::mean_dev_ball(&s, 0.5).unwrap();
        assert!(matches!(image_set(&ball, &fam, lim()), Err(Error::RepresentationUnsupported(_))));
    }

    #[test]
    fn eval_on_affine_examples() {
        let fam = two_atom_family();
        let u = canonical_uncertainty_set(&MeasureSpec::Cvar { alpha: 0.5 }.into(), &fam, lim()).unwrap();
        assert_eq!(eval_on_affine(3.0, &[0.0], &u).unwrap(), 3.0);
        assert!((eval_on_affine(0.0, &[1.0], &u).unwrap() - 10.0).abs() < 1e-12);
        assert!(eval_on_affine(0.0, &[-1.0], &u).unwrap().abs() < 1e-12);
    }

    #[test]
    fn preimage_of_image_of_all_densities() {
        let s = ProbabilitySpace::new(vec![0.2, 0.3, 0.5]).unwrap();
        let fam = AffineFamily::new(&s, vec![vec![1.0, -2.0, 0.5].into(), vec![0.0, 3.0, 1.0].into()]).unwrap();
        let all = Envelope::all_densities(&s);
        let u = image_set(&all, &fam, lim()).unwrap();
        let back = preimage_envelope(&u, &fam, lim()).unwrap();
        for x in [[1.0, 2.0, 3.0], [-4.0, 0.0, 1.0], [0.3, -0.2, 0.0]] {
            let x: RandomVariable = x.to_vec().into();
            let a = all.support(&x).unwrap().value;
            let b = back.support(&x).unwrap().value;
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn single_point_preimage_is_moment_matching() {
        let s = ProbabilitySpace::uniform(3).unwrap();
        let fam = AffineFamily::new(&s, vec![vec![0.0, 1.0, 2.0].into()]).unwrap();
        let u = UncertaintySet::from_points(1, vec![vec![1.0]]).unwrap();
        let q = preimage_envelope(&u, &fam, lim()).unwrap();
        let other = Density::new(&s, vec![1.5, 0.0, 1.5]).unwrap();
        assert!(q.contains(&Density::one(3), 1e-9).unwrap());
        assert!(q.contains(&other, 1e-9).unwrap());
    }

    #[test]
    fn bilevel_predicate_matches_membership() {
        let fam = two_atom_family();
        let u = canonical_uncertainty_set(&MeasureSpec::Cvar { alpha: 0.2 }.into(), &fam, lim()).unwrap();
        let (lo, hi) = segment_ends(&u);
        assert!((lo - 3.75).abs() < 1e-9 && (hi - 6.25).abs() < 1e-9);
        for (z, inside) in [(5.0, true), (4.0, true), (3.5, false), (6.5, false), (-3.0, false)] {
            assert_eq!(bilevel_membership(&u, &[z], lim()).unwrap(), inside, "z = {z}");
        }
    }

    #[test]
    fn halfspace_points_and_inclusion() {
        let square = UncertaintySet::from_points(
            2,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let h = square.to_halfspaces(lim()).unwrap();
        assert_eq!(h.points(lim()).unwrap().len(), 4);
        let inner = UncertaintySet::from_points(2, vec![vec![0.2, 0.2], vec![0.8, 0.5]]).unwrap();
        assert!(inner.is_subset_of(&square, lim(), INCLUSION_TOL).unwrap());
        assert!(!square.is_subset_of(&inner, lim(), INCLUSION_TOL).unwrap());
        assert!(h.contains(&[0.5, 0.5], 1e-9).unwrap());
        assert!(!h.contains(&[1.5, 0.5], 1e-9).unwrap());
    }
}
