//! Risk envelopes and their support functions.
//!
//! An envelope is a convex set of densities on a finite space. The risk it
//! generates is `R(X) = max { E(XQ) : Q in envelope }`. Three encodings are
//! supported:
//!
//! * a vertex list (the envelope is the convex hull),
//! * linear constraints on top of the base density constraints
//!   `q >= 0, sum p_i q_i = 1`,
//! * the mean-deviation ball `{Q : ||Q - essinf Q||_2 <= lambda}`, which is
//!   not polyhedral and is handled in closed form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{self, HullLimits};
use crate::lp::{self, LinearProgram, LinearRow, LpResult};
use crate::measures;
use crate::space::{Density, ProbabilitySpace, RandomVariable, DENSITY_TOL};

/// Membership tolerance used by default in `contains`.
pub const CONTAINS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeRepr {
    Vertices {
        vertices: Vec<Density>,
    },
    Constraints {
        equalities: Vec<LinearRow>,
        inequalities: Vec<LinearRow>,
    },
    MeanDevBall {
        lambda: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    #[serde(flatten)]
    space: ProbabilitySpace,
    #[serde(flatten)]
    repr: EnvelopeRepr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportResult {
    pub value: f64,
    pub maximizer: Density,
}

impl Envelope {
    pub fn from_vertices(space: &ProbabilitySpace, vertices: Vec<Density>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::EmptyEnvelope);
        }
        for v in &vertices {
            Density::new(space, v.weights().to_vec())?;
        }
        Ok(Self {
            space: space.clone(),
            repr: EnvelopeRepr::Vertices { vertices },
        })
    }

    /// Base density constraints plus the given extra rows. Feasibility is
    /// checked lazily.
    pub fn from_constraints(
        space: &ProbabilitySpace,
        equalities: Vec<LinearRow>,
        inequalities: Vec<LinearRow>,
    ) -> Result<Self> {
        for r in equalities.iter().chain(&inequalities) {
            space.check_len(r.coeffs.len())?;
        }
        Ok(Self {
            space: space.clone(),
            repr: EnvelopeRepr::Constraints {
                equalities,
                inequalities,
            },
        })
    }

    pub fn mean_dev_ball(space: &ProbabilitySpace, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidSpec(format!(
                "mean-deviation lambda {lambda} outside [0, 1]"
            )));
        }
        Ok(Self {
            space: space.clone(),
            repr: EnvelopeRepr::MeanDevBall { lambda },
        })
    }

    /// Every density on the space.
    pub fn all_densities(space: &ProbabilitySpace) -> Self {
        Self {
            space: space.clone(),
            repr: EnvelopeRepr::Constraints {
                equalities: Vec::new(),
                inequalities: Vec::new(),
            },
        }
    }

    /// `{1}`.
    pub fn base_density(space: &ProbabilitySpace) -> Self {
        Self {
            space: space.clone(),
            repr: EnvelopeRepr::Vertices {
                vertices: vec![Density::one(space.atom_count())],
            },
        }
    }

    pub fn space(&self) -> &ProbabilitySpace {
        &self.space
    }

    pub fn repr(&self) -> &EnvelopeRepr {
        &self.repr
    }

    pub fn is_polyhedral(&self) -> bool {
        !matches!(self.repr, EnvelopeRepr::MeanDevBall { .. })
    }

    /// The constraint system of a `Constraints` envelope as an LP with the
    /// given objective. Base constraints come first: the mass equality is
    /// equality row 0 and `q >= 0` are the lower bounds.
    pub(crate) fn system(&self, objective: Vec<f64>) -> Option<LinearProgram> {
        let EnvelopeRepr::Constraints {
            equalities,
            inequalities,
        } = &self.repr
        else {
            return None;
        };
        let mut lp = LinearProgram::new(objective).eq(self.space.probs().to_vec(), 1.0);
        lp.equalities.extend(equalities.iter().cloned());
        lp.inequalities.extend(inequalities.iter().cloned());
        Some(lp)
    }

    /// `max { E(XQ) : Q in envelope }` with a maximizing density.
    pub fn support(&self, x: &RandomVariable) -> Result<SupportResult> {
        self.space.check_len(x.len())?;
        match &self.repr {
            EnvelopeRepr::Vertices { vertices } => {
                let mut best: Option<(f64, &Density)> = None;
                for v in vertices {
                    let val = self.space.expectation_under(x, v)?;
                    if best.is_none_or(|(b, _)| val > b) {
                        best = Some((val, v));
                    }
                }
                let (value, v) = best.ok_or(Error::EmptyEnvelope)?;
                Ok(SupportResult {
                    value,
                    maximizer: v.clone(),
                })
            }
            EnvelopeRepr::Constraints { .. } => {
                let objective = self
                    .space
                    .probs()
                    .iter()
                    .zip(x.values())
                    .map(|(p, v)| p * v)
                    .collect();
                let lp = self.system(objective).expect("constraint envelope");
                match lp::maximize(&lp)? {
                    LpResult::Optimal { argmax, .. } => {
                        let maximizer = Density::from_raw(clean_weights(argmax));
                        let value = self.space.expectation_under(x, &maximizer)?;
                        Ok(SupportResult { value, maximizer })
                    }
                    LpResult::Infeasible => Err(Error::EmptyEnvelope),
                    LpResult::Unbounded => Err(Error::Numerical(
                        "support LP unbounded over a set of densities".into(),
                    )),
                }
            }
            EnvelopeRepr::MeanDevBall { lambda } => {
                let mean = self.space.expectation(x)?;
                if x.is_constant() {
                    return Ok(SupportResult {
                        value: mean,
                        maximizer: Density::one(x.len()),
                    });
                }
                match measures::mean_dev_maximizer(&self.space, x, *lambda) {
                    Ok(q0) => {
                        let value = self.space.expectation_under(x, &q0)?;
                        Ok(SupportResult {
                            value,
                            maximizer: q0,
                        })
                    }
                    Err(Error::ConstantInput) => Ok(SupportResult {
                        value: mean,
                        maximizer: Density::one(x.len()),
                    }),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Membership of `q` within tolerance `tol`.
    pub fn contains(&self, q: &Density, tol: f64) -> Result<bool> {
        self.space.check_len(q.len())?;
        let w = q.weights();
        match &self.repr {
            EnvelopeRepr::Vertices { vertices } => {
                // min t  s.t.  |sum_v mu_v v - q| <= t,  mu in simplex
                let nv = vertices.len();
                let mut objective = vec![0.0; nv + 1];
                objective[nv] = -1.0;
                let mut lp = LinearProgram::new(objective).eq(
                    (0..=nv).map(|j| if j < nv { 1.0 } else { 0.0 }).collect(),
                    1.0,
                );
                for (i, &wi) in w.iter().enumerate() {
                    let mut plus: Vec<f64> = vertices.iter().map(|v| v.weights()[i]).collect();
                    plus.push(-1.0);
                    let mut minus: Vec<f64> = vertices.iter().map(|v| -v.weights()[i]).collect();
                    minus.push(-1.0);
                    lp = lp.le(plus, wi).le(minus, -wi);
                }
                match lp::maximize(&lp)? {
                    LpResult::Optimal { value, .. } => Ok(-value <= tol),
                    _ => Err(Error::Numerical("hull membership LP failed".into())),
                }
            }
            EnvelopeRepr::Constraints {
                equalities,
                inequalities,
            } => {
                if !base_feasible(&self.space, w, tol) {
                    return Ok(false);
                }
                let eq_ok = equalities.iter().all(|r| (r.dot(w) - r.rhs).abs() <= tol);
                let le_ok = inequalities.iter().all(|r| r.dot(w) - r.rhs <= tol);
                Ok(eq_ok && le_ok)
            }
            EnvelopeRepr::MeanDevBall { lambda } => {
                if !base_feasible(&self.space, w, tol) {
                    return Ok(false);
                }
                let floor = w.iter().copied().fold(f64::INFINITY, f64::min);
                let centered: Vec<f64> = w.iter().map(|v| v - floor).collect();
                Ok(self.space.l2_norm(&centered)? <= lambda + tol)
            }
        }
    }

    pub fn is_nonempty(&self) -> Result<bool> {
        match &self.repr {
            EnvelopeRepr::Vertices { vertices } => Ok(!vertices.is_empty()),
            EnvelopeRepr::Constraints { .. } => {
                let lp = self
                    .system(vec![0.0; self.space.atom_count()])
                    .expect("constraint envelope");
                lp::is_feasible(&lp)
            }
            EnvelopeRepr::MeanDevBall { .. } => Ok(true),
        }
    }

    /// Halfspace form. Vertex lists go through facet enumeration under
    /// `limits`; the mean-deviation ball is rejected.
    pub fn to_constraint_rep(&self, limits: HullLimits) -> Result<Envelope> {
        match &self.repr {
            EnvelopeRepr::Constraints { .. } => Ok(self.clone()),
            EnvelopeRepr::MeanDevBall { .. } => Err(Error::NotPolyhedral),
            EnvelopeRepr::Vertices { vertices } => {
                let n = self.space.atom_count();
                let points: Vec<Vec<f64>> = geometry::dedup_points(
                    vertices.iter().map(|v| v.weights().to_vec()).collect(),
                );
                let h = geometry::facets_of_points(&points, n, limits)?;
                Envelope::from_constraints(&self.space, h.equalities, h.inequalities)
            }
        }
    }

    /// Vertex form. Constraint systems go through vertex enumeration under
    /// `limits`; the mean-deviation ball is rejected.
    pub fn to_vertex_rep(&self, limits: HullLimits) -> Result<Envelope> {
        let vertices = self.vertex_list(limits)?;
        Ok(Envelope {
            space: self.space.clone(),
            repr: EnvelopeRepr::Vertices { vertices },
        })
    }

    /// The listed vertices, or the enumerated vertices of a constraint
    /// system.
    pub fn vertex_list(&self, limits: HullLimits) -> Result<Vec<Density>> {
        let n = self.space.atom_count();
        match &self.repr {
            EnvelopeRepr::Vertices { vertices } => Ok(vertices.clone()),
            EnvelopeRepr::MeanDevBall { .. } => Err(Error::NotPolyhedral),
            EnvelopeRepr::Constraints { .. } => {
                if n > limits.max_dim {
                    return Err(Error::SizeLimit(format!(
                        "{n} atoms exceeds enumeration limit {}",
                        limits.max_dim
                    )));
                }
                let lp = self.system(vec![0.0; n]).expect("constraint envelope");
                let q0 = match lp::maximize(&lp)? {
                    LpResult::Optimal { argmax, .. } => argmax,
                    LpResult::Infeasible => return Err(Error::EmptyEnvelope),
                    LpResult::Unbounded => unreachable!("zero objective"),
                };
                let eq_rows: Vec<Vec<f64>> =
                    lp.equalities.iter().map(|r| r.coeffs.clone()).collect();
                let basis = geometry::null_space(&eq_rows, n);
                let k = basis.len();
                let project = |a: &[f64]| -> Vec<f64> {
                    basis.iter().map(|b| geometry::dot(a, b)).collect()
                };
                let mut rows = Vec::with_capacity(n + lp.inequalities.len());
                for i in 0..n {
                    let coeffs = basis.iter().map(|b| -b[i]).collect();
                    rows.push(LinearRow::new(coeffs, q0[i]));
                }
                for r in &lp.inequalities {
                    rows.push(LinearRow::new(project(&r.coeffs), r.rhs - r.dot(&q0)));
                }
                let ts = geometry::vertices_of_halfspaces(&rows, k, limits.max_vertices)?;
                if ts.is_empty() {
                    return Err(Error::EmptyEnvelope);
                }
                Ok(ts
                    .into_iter()
                    .map(|t| {
                        let mut q = q0.clone();
                        for (tl, b) in t.iter().zip(&basis) {
                            for (qi, bi) in q.iter_mut().zip(b) {
                                *qi += tl * bi;
                            }
                        }
                        Density::from_raw(clean_weights(q))
                    })
                    .collect())
            }
        }
    }

    /// Every vertex of `self` lies in `other` (within `tol`).
    pub fn is_subset_of(&self, other: &Envelope, limits: HullLimits, tol: f64) -> Result<bool> {
        for v in self.vertex_list(limits)? {
            if !other.contains(&v, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl measures::RiskFunctional for Envelope {
    fn space(&self) -> &ProbabilitySpace {
        &self.space
    }

    fn risk(&self, x: &RandomVariable) -> Result<f64> {
        Ok(self.support(x)?.value)
    }

    fn witnesses(&self) -> Vec<RandomVariable> {
        crate::aversity::envelope_witnesses(self, HullLimits::default())
    }
}

fn base_feasible(space: &ProbabilitySpace, w: &[f64], tol: f64) -> bool {
    let mean: f64 = space.probs().iter().zip(w).map(|(p, q)| p * q).sum();
    w.iter().all(|q| *q >= -tol) && (mean - 1.0).abs() <= tol
}

/// Snaps LP roundoff below zero back onto the orthant.
fn clean_weights(mut q: Vec<f64>) -> Vec<f64> {
    for v in &mut q {
        if *v < 0.0 && *v > -DENSITY_TOL {
            *v = 0.0;
        }
    }
    q
}
