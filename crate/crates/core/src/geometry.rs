//! Small-dimension polytope conversions.
//!
//! Vertex enumeration uses the double-description method with a
//! combinatorial adjacency test, started from a bounding box that is
//! enlarged until no output vertex touches it. Facet enumeration runs the
//! same routine on the polar of the point set, taken around its centroid
//! inside the affine hull.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp::LinearRow;

const RANK_TOL: f64 = 1e-10;
const ACTIVE_TOL: f64 = 1e-9;

/// Size limits for hull and vertex computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HullLimits {
    pub max_vertices: usize,
    pub max_dim: usize,
}

impl Default for HullLimits {
    fn default() -> Self {
        Self {
            max_vertices: 64,
            max_dim: 8,
        }
    }
}

impl HullLimits {
    /// Looser limits for vertex enumeration of built-in envelopes.
    pub fn enumeration() -> Self {
        Self {
            max_vertices: 4096,
            max_dim: 8,
        }
    }
}

/// Halfspace description `{x : E x = e, A x <= b}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hrep {
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Singular vectors of the stacked rows, split into (row space, null space),
/// both orthonormal.
fn split_spaces(rows: &[Vec<f64>], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    // Pad to at least n rows so the thin SVD returns a full basis of R^n.
    let m = rows.len().max(n);
    let mut mat = DMatrix::<f64>::zeros(m, n);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            mat[(i, j)] = *v;
        }
    }
    let scale = rows.iter().map(|r| norm(r)).fold(1.0, f64::max);
    let svd = mat.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut row_space = Vec::new();
    let mut null_space = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        let v: Vec<f64> = v_t.row(k).iter().copied().collect();
        if *s > RANK_TOL * scale {
            row_space.push(v);
        } else {
            null_space.push(v);
        }
    }
    (row_space, null_space)
}

/// Orthonormal basis of `{x : r·x = 0 for every row r}`.
pub fn null_space(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    split_spaces(rows, n).1
}

/// Orthonormal basis of the span of `rows`.
pub fn row_space(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    split_spaces(rows, n).0
}

#[derive(Clone)]
struct BitSet(Vec<u64>);

impl BitSet {
    fn new(bits: usize) -> Self {
        Self(vec![0; bits.div_ceil(64)])
    }
    fn insert(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn contains(&self, i: usize) -> bool {
        self.0[i / 64] & (1 << (i % 64)) != 0
    }
    fn and(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a & b).collect())
    }
    fn is_subset(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a & !b == 0)
    }
    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn any_below(&self, limit: usize) -> bool {
        (0..limit).any(|i| self.contains(i))
    }
}

struct Vertex {
    x: Vec<f64>,
    active: BitSet,
}

/// Vertices of the bounded polytope `{x in R^dim : a_i·x <= b_i}`.
///
/// Returns an empty list when the system is infeasible. An unbounded
/// system is reported as [`Error::Numerical`].
pub fn vertices_of_halfspaces(
    rows: &[LinearRow],
    dim: usize,
    max_vertices: usize,
) -> Result<Vec<Vec<f64>>> {
    if rows.iter().any(|r| r.coeffs.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rows.iter().map(|r| r.coeffs.len()).find(|&l| l != dim).unwrap_or(0),
        });
    }
    if dim == 0 {
        let feasible = rows.iter().all(|r| r.rhs >= -ACTIVE_TOL);
        return Ok(if feasible { vec![Vec::new()] } else { Vec::new() });
    }
    // Normalize so activity tolerances are comparable across rows.
    let mut normalized = Vec::with_capacity(rows.len());
    for r in rows {
        let nr = norm(&r.coeffs);
        if nr <= RANK_TOL {
            if r.rhs < -ACTIVE_TOL {
                return Ok(Vec::new());
            }
            continue;
        }
        normalized.push(LinearRow::new(
            r.coeffs.iter().map(|a| a / nr).collect(),
            r.rhs / nr,
        ));
    }
    let rhs_scale = normalized.iter().map(|r| r.rhs.abs()).fold(1.0, f64::max);
    let mut bound = 10.0 * rhs_scale;
    for _ in 0..8 {
        let verts = double_description(&normalized, dim, bound, max_vertices)?;
        match verts {
            Some(v) => return Ok(v),
            None => bound *= 100.0,
        }
    }
    Err(Error::Numerical("polytope appears unbounded".into()))
}

/// One pass inside the box `|x_i| <= bound`. `Ok(None)` means a final
/// vertex touched the box and the pass must be repeated with a larger box.
fn double_description(
    rows: &[LinearRow],
    dim: usize,
    bound: f64,
    max_vertices: usize,
) -> Result<Option<Vec<Vec<f64>>>> {
    let n_box = 2 * dim;
    let total = n_box + rows.len();
    let box_cap = 1usize.checked_shl(dim as u32).unwrap_or(usize::MAX);
    if box_cap > 1 << 16 {
        return Err(Error::SizeLimit(format!("dimension {dim} too large for enumeration")));
    }
    let mut verts: Vec<Vertex> = (0..box_cap)
        .map(|mask| {
            let mut active = BitSet::new(total);
            let x = (0..dim)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        active.insert(2 * i);
                        bound
                    } else {
                        active.insert(2 * i + 1);
                        -bound
                    }
                })
                .collect();
            Vertex { x, active }
        })
        .collect();

    let work_cap = max_vertices.saturating_mul(64).max(1 << 12);
    for (k, row) in rows.iter().enumerate() {
        let h = n_box + k;
        let tol = ACTIVE_TOL * (1.0 + row.rhs.abs());
        let vals: Vec<f64> = verts.iter().map(|v| dot(&row.coeffs, &v.x) - row.rhs).collect();
        if vals.iter().all(|v| *v <= tol) {
            for (v, val) in verts.iter_mut().zip(&vals) {
                if val.abs() <= tol {
                    v.active.insert(h);
                }
            }
            continue;
        }
        let inside: Vec<usize> = (0..verts.len()).filter(|&i| vals[i] < -tol).collect();
        let outside: Vec<usize> = (0..verts.len()).filter(|&i| vals[i] > tol).collect();

        let mut created = Vec::new();
        for &u in &inside {
            for &w in &outside {
                let common = verts[u].active.and(&verts[w].active);
                if common.count() + 1 < dim {
                    continue;
                }
                let blocked = verts.iter().enumerate().any(|(r, v)| {
                    r != u && r != w && common.is_subset(&v.active)
                });
                if blocked {
                    continue;
                }
                let t = vals[u] / (vals[u] - vals[w]);
                let x = verts[u]
                    .x
                    .iter()
                    .zip(&verts[w].x)
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                let mut active = common;
                active.insert(h);
                created.push(Vertex { x, active });
            }
        }

        let mut next = Vec::with_capacity(verts.len() + created.len());
        for (v, val) in verts.into_iter().zip(&vals) {
            if *val <= tol {
                let mut v = v;
                if val.abs() <= tol {
                    v.active.insert(h);
                }
                next.push(v);
            }
        }
        next.extend(created);
        if next.len() > work_cap {
            return Err(Error::SizeLimit(format!(
                "intermediate vertex count {} exceeds {}",
                next.len(),
                work_cap
            )));
        }
        verts = next;
    }

    if verts.iter().any(|v| v.active.any_below(n_box)) {
        return Ok(None);
    }
    let out: Vec<Vec<f64>> = dedup_points(verts.into_iter().map(|v| v.x).collect());
    if out.len() > max_vertices {
        return Err(Error::SizeLimit(format!(
            "{} vertices exceeds limit {}",
            out.len(),
            max_vertices
        )));
    }
    Ok(Some(out))
}

/// Vertices of the bounded polytope `{x in R^dim : E x = e, A x <= b}`.
///
/// The equalities are eliminated through a null-space parametrization
/// around one feasible point. Empty when infeasible.
pub fn vertices_of_system(
    equalities: &[LinearRow],
    inequalities: &[LinearRow],
    dim: usize,
    max_vertices: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut lp = crate::lp::LinearProgram::free(vec![0.0; dim]);
    lp.equalities.extend(equalities.iter().cloned());
    lp.inequalities.extend(inequalities.iter().cloned());
    let x0 = match crate::lp::maximize(&lp)? {
        crate::lp::LpResult::Optimal { argmax, .. } => argmax,
        _ => return Ok(Vec::new()),
    };
    let eq_rows: Vec<Vec<f64>> = equalities.iter().map(|r| r.coeffs.clone()).collect();
    let basis = null_space(&eq_rows, dim);
    let rows: Vec<LinearRow> = inequalities
        .iter()
        .map(|r| {
            let coeffs = basis.iter().map(|b| dot(&r.coeffs, b)).collect();
            LinearRow::new(coeffs, r.rhs - r.dot(&x0))
        })
        .collect();
    let ts = vertices_of_halfspaces(&rows, basis.len(), max_vertices)?;
    Ok(ts
        .into_iter()
        .map(|t| {
            let mut x = x0.clone();
            for (tl, b) in t.iter().zip(&basis) {
                for (xi, bi) in x.iter_mut().zip(b) {
                    *xi += tl * bi;
                }
            }
            x
        })
        .collect())
}

/// Removes points within `1e-9` (relative) of an earlier one.
pub fn dedup_points(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let scale = 1.0 + norm(&p);
        let dup = out.iter().any(|q| {
            q.iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                <= 1e-9 * scale
        });
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Zeroes roundoff-sized entries of a unit-norm row.
fn snap_row(mut coeffs: Vec<f64>, mut rhs: f64, scale: f64) -> LinearRow {
    for c in &mut coeffs {
        if c.abs() < 1e-14 {
            *c = 0.0;
        }
    }
    if rhs.abs() < 1e-14 * scale {
        rhs = 0.0;
    }
    LinearRow::new(coeffs, rhs)
}

/// Exact halfspace description of the convex hull of `points` in `R^n`.
///
/// Equalities describe the affine hull; each inequality is a facet of the
/// hull inside it, with unit-norm coefficients.
pub fn facets_of_points(points: &[Vec<f64>], n: usize, limits: HullLimits) -> Result<Hrep> {
    if points.is_empty() {
        return Err(Error::EmptyEnvelope);
    }
    if points.len() > limits.max_vertices {
        return Err(Error::SizeLimit(format!(
            "{} points exceeds limit {}",
            points.len(),
            limits.max_vertices
        )));
    }
    if n > limits.max_dim {
        return Err(Error::SizeLimit(format!(
            "dimension {n} exceeds limit {}",
            limits.max_dim
        )));
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: p.len(),
        });
    }
    let centroid: Vec<f64> = (0..n)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / points.len() as f64)
        .collect();
    let offsets: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&centroid).map(|(a, c)| a - c).collect())
        .collect();
    let (basis, normals) = split_spaces(&offsets, n);

    let scale = 1.0 + centroid.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let equalities = normals
        .into_iter()
        .map(|u| {
            let rhs = dot(&u, &centroid);
            snap_row(u, rhs, scale)
        })
        .collect();

    let k = basis.len();
    if k == 0 {
        return Ok(Hrep {
            equalities,
            inequalities: Vec::new(),
        });
    }
    // Polar: {a in R^k : y_v·a <= 1} with y_v the projected offsets.
    let polar_rows: Vec<LinearRow> = offsets
        .iter()
        .map(|o| LinearRow::new(basis.iter().map(|b| dot(b, o)).collect(), 1.0))
        .collect();
    let polar_cap = facet_cap(points.len(), k);
    let polar_vertices = vertices_of_halfspaces(&polar_rows, k, polar_cap)?;
    let mut inequalities = Vec::with_capacity(polar_vertices.len());
    for a in polar_vertices {
        let mut g = vec![0.0; n];
        for (coef, b) in a.iter().zip(&basis) {
            for (gj, bj) in g.iter_mut().zip(b) {
                *gj += coef * bj;
            }
        }
        let rhs = 1.0 + dot(&g, &centroid);
        let ng = norm(&g);
        inequalities.push(snap_row(g.iter().map(|v| v / ng).collect(), rhs / ng, scale));
    }
    Ok(Hrep {
        equalities,
        inequalities,
    })
}

/// Upper bound theorem flavored cap on facet counts; generous for the
/// sizes allowed by [`HullLimits`].
fn facet_cap(points: usize, dim: usize) -> usize {
    let half = dim / 2;
    let mut c: usize = 1;
    for i in 0..half {
        c = c.saturating_mul(points.saturating_sub(i)).max(1) / (i + 1);
    }
    c.saturating_mul(4).clamp(16, 1 << 16)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        v.iter_mut()
            .for_each(|p| p.iter_mut().for_each(|x| *x = (*x * 1e9).round() / 1e9 + 0.0));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn square_vertices() {
        let rows = vec![
            LinearRow::new(vec![1.0, 0.0], 1.0),
            LinearRow::new(vec![-1.0, 0.0], 0.0),
            LinearRow::new(vec![0.0, 1.0], 1.0),
            LinearRow::new(vec![0.0, -1.0], 0.0),
        ];
        let v = vertices_of_halfspaces(&rows, 2, 16).unwrap();
        assert_eq!(
            sorted(v),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn far_away_polytope_needs_larger_box() {
        let rows = vec![
            LinearRow::new(vec![1.0], 1e4 + 1.0),
            LinearRow::new(vec![-1.0], -1e4),
        ];
        let v = sorted(vertices_of_halfspaces(&rows, 1, 4).unwrap());
        assert_eq!(v, vec![vec![1e4], vec![1e4 + 1.0]]);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let rows = vec![
            LinearRow::new(vec![1.0], 0.0),
            LinearRow::new(vec![-1.0], -1.0),
        ];
        assert!(vertices_of_halfspaces(&rows, 1, 4).unwrap().is_empty());
        let rows = vec![LinearRow::new(vec![1.0, 0.0], 0.0)];
        assert!(matches!(
            vertices_of_halfspaces(&rows, 2, 4),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn degenerate_pyramid_apex() {
        // Square pyramid: apex has four active facets in 3-d.
        let rows = vec![
            LinearRow::new(vec![0.0, 0.0, -1.0], 0.0),
            LinearRow::new(vec![1.0, 0.0, 1.0], 1.0),
            LinearRow::new(vec![-1.0, 0.0, 1.0], 1.0),
            LinearRow::new(vec![0.0, 1.0, 1.0], 1.0),
            LinearRow::new(vec![0.0, -1.0, 1.0], 1.0),
        ];
        let v = vertices_of_halfspaces(&rows, 3, 16).unwrap();
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn square_has_four_facets() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![0.5, 0.5],
        ];
        let h = facets_of_points(&pts, 2, HullLimits::default()).unwrap();
        assert!(h.equalities.is_empty());
        assert_eq!(h.inequalities.len(), 4);
        for p in &pts {
            assert!(h.inequalities.iter().all(|r| r.slack(p) >= -1e-12));
        }
        assert!(h.inequalities.iter().any(|r| r.slack(&[1.5, 0.5]) < 0.0));
    }

    #[test]
    fn segment_in_three_space() {
        let pts = vec![vec![1.0, 1.0, 1.0], vec![0.75, 1.5, 0.75]];
        let h = facets_of_points(&pts, 3, HullLimits::default()).unwrap();
        assert_eq!(h.equalities.len(), 2);
        assert_eq!(h.inequalities.len(), 2);
        let mid = [0.875, 1.25, 0.875];
        assert!(h.equalities.iter().all(|r| r.slack(&mid).abs() < 1e-12));
        assert!(h.inequalities.iter().all(|r| r.slack(&mid) > 1e-3));
        let beyond = [0.5, 2.0, 0.5];
        assert!(h.inequalities.iter().any(|r| r.slack(&beyond) < -1e-3));
    }

    #[test]
    fn single_point() {
        let h = facets_of_points(&[vec![1.0, 1.0]], 2, HullLimits::default()).unwrap();
        assert_eq!(h.equalities.len(), 2);
        assert!(h.inequalities.is_empty());
    }

    #[test]
    fn cube_facets_and_limits() {
        let mut pts = Vec::new();
        for m in 0..8u32 {
            pts.push((0..3).map(|i| f64::from(m >> i & 1)).collect::<Vec<_>>());
        }
        let h = facets_of_points(&pts, 3, HullLimits::default()).unwrap();
        assert_eq!(h.inequalities.len(), 6);
        let tight = HullLimits { max_vertices: 4, max_dim: 8 };
        assert!(matches!(facets_of_points(&pts, 3, tight), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn null_and_row_spaces() {
        let rows = vec![vec![1.0, 1.0, 1.0]];
        assert_eq!(null_space(&rows, 3).len(), 2);
        assert_eq!(row_space(&rows, 3).len(), 1);
        assert_eq!(null_space(&[], 2).len(), 2);
    }
}
