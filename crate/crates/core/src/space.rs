//! Finite probability spaces, random variables and densities.
//!
//! A [`ProbabilitySpace`] is a finite list of atoms with strictly positive
//! base probabilities. Random variables and densities are plain per-atom
//! vectors; every operation that pairs them with a space checks lengths.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(p) = 1` for base probabilities.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Feasibility slack for densities coming out of LP solves.
pub const DENSITY_TOL: f64 = 1e-9;
/// Ingestion renormalizes probabilities whose sum is off by at most this.
pub const RENORMALIZE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilitySpace {
    probs: Vec<f64>,
}

impl ProbabilitySpace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p <= 0.0)
        {
            return Err(Error::InvalidSpace(format!(
                "atom {i} has probability {p}; every atom must have positive probability"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidSpace(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Accepts weights whose sum is within [`RENORMALIZE_TOL`] of one and
    /// rescales them exactly onto the simplex.
    pub fn renormalized(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if !total.is_finite() || (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::InvalidSpace(format!(
                "probabilities sum to {total}; deviation from 1 exceeds {RENORMALIZE_TOL}"
            )));
        }
        Self::new(probs.into_iter().map(|p| p / total).collect())
    }

    pub fn uniform(atom_count: usize) -> Result<Self> {
        if atom_count == 0 {
            return Err(Error::InvalidSpace("no atoms".into()));
        }
        Self::new(vec![1.0 / atom_count as f64; atom_count])
    }

    pub fn atom_count(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                found: len,
            });
        }
        Ok(())
    }

    /// `E(X) = sum p_i x_i`.
    pub fn expectation(&self, x: &RandomVariable) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self.probs.iter().zip(x.values()).map(|(p, v)| p * v).sum())
    }

    /// `E(XQ) = sum p_i x_i q_i`, the expectation under the reweighted measure.
    pub fn expectation_under(&self, x: &RandomVariable, q: &Density) -> Result<f64> {
        self.check_len(x.len())?;
        self.check_len(q.len())?;
        Ok(self
            .probs
            .iter()
            .zip(x.values())
            .zip(q.weights())
            .map(|((p, v), w)| p * v * w)
            .sum())
    }

    /// Largest atom value. All atoms carry positive mass, so this is the
    /// essential supremum.
    pub fn ess_sup(&self, x: &RandomVariable) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(x.values().iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn ess_inf(&self, x: &RandomVariable) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(x.values().iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// `F(zeta) = P(X <= zeta)`.
    pub fn cdf(&self, x: &RandomVariable, zeta: f64) -> Result<f64> {
        self.check_len(x.len())?;
        let mass: f64 = self
            .probs
            .iter()
            .zip(x.values())
            .filter(|(_, v)| **v <= zeta)
            .map(|(p, _)| p)
            .sum();
        Ok(mass.min(1.0))
    }

    /// `||X||_2 = sqrt(E(X^2))`.
    pub fn l2_norm(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        Ok(self
            .probs
            .iter()
            .zip(x)
            .map(|(p, v)| p * v * v)
            .sum::<f64>()
            .sqrt())
    }
}

/// One real loss value per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVariable(Vec<f64>);

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, atom_count: usize) -> Self {
        Self(vec![value; atom_count])
    }

    pub fn indicator(cell: &[usize], atom_count: usize) -> Self {
        let mut v = vec![0.0; atom_count];
        for &i in cell {
            v[i] = 1.0;
        }
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn shift(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }

    /// `a * self + b * other`, atomwise.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }
}

impl From<Vec<f64>> for RandomVariable {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Nonnegative reweighting of the base measure with unit mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Density(Vec<f64>);

impl Density {
    /// Validates `q >= -DENSITY_TOL` and `E(Q) = 1` within [`DENSITY_TOL`].
    pub fn new(space: &ProbabilitySpace, weights: Vec<f64>) -> Result<Self> {
        space.check_len(weights.len())?;
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < -DENSITY_TOL)
        {
            return Err(Error::InvalidDensity(format!("q[{i}] = {w} is negative")));
        }
        let mean: f64 = space.probs().iter().zip(&weights).map(|(p, w)| p * w).sum();
        if (mean - 1.0).abs() > DENSITY_TOL {
            return Err(Error::InvalidDensity(format!("E(Q) = {mean}, expected 1")));
        }
        Ok(Self(weights))
    }

    /// Wraps weights without validation; used for LP output that is checked
    /// by the caller.
    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    /// The base density `Q = 1`.
    pub fn one(atom_count: usize) -> Self {
        Self(vec![1.0; atom_count])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &Density) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A probability space together with named random variables on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenarios {
    pub space: ProbabilitySpace,
    pub variables: Vec<(String, RandomVariable)>,
}

#[derive(Deserialize)]
struct ScenarioDoc {
    probs: Vec<f64>,
    #[serde(default)]
    variables: serde_json::Map<String, serde_json::Value>,
}

impl Scenarios {
    /// Parses `{"probs":[...], "variables":{"name":[...]}}`. Variables come
    /// back sorted by name.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        let space = ProbabilitySpace::renormalized(doc.probs)?;
        let mut variables = Vec::with_capacity(doc.variables.len());
        for (name, value) in doc.variables {
            let values: Vec<f64> = serde_json::from_value(value)
                .map_err(|e| Error::Schema(format!("variable {name:?}: {e}")))?;
            space
                .check_len(values.len())
                .map_err(|e| Error::Schema(format!("variable {name:?}: {e}")))?;
            variables.push((name, RandomVariable::new(values)));
        }
        Ok(Self { space, variables })
    }

    /// Parses CSV with a header row; column 1 is the probability and every
    /// further column is a named variable.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.is_empty() {
            return Err(Error::Schema("CSV has no columns".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let mut probs = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::Schema(format!(
                    "row {}: expected {} fields, found {}",
                    row + 1,
                    headers.len(),
                    record.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}: {s:?} is not a number", row + 1)))
            };
            probs.push(parse(&record[0])?);
            for (col, field) in record.iter().skip(1).enumerate() {
                columns[col].push(parse(field)?);
            }
        }
        let space = ProbabilitySpace::renormalized(probs)?;
        let variables = names
            .into_iter()
            .zip(columns)
            .map(|(n, c)| (n, RandomVariable::new(c)))
            .collect();
        Ok(Self { space, variables })
    }

    /// Dispatches on the file extension (`.csv` or anything else as JSON).
    pub fn from_path(path: &Path) -> Result<Self> {
        let is_csv = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("csv"))
            .unwrap_or(false);
        if is_csv {
            let file = std::fs::File::open(path)?;
            Self::from_csv_reader(file)
        } else {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        }
    }
}

impl fmt::Display for RandomVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_atoms() -> ProbabilitySpace {
        ProbabilitySpace::new(vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn expectation_examples() {
        let s = two_atoms();
        assert_eq!(s.expectation(&vec![0.0, 10.0].into()).unwrap(), 5.0);
        let single = ProbabilitySpace::new(vec![1.0]).unwrap();
        assert_eq!(single.expectation(&vec![-3.5].into()).unwrap(), -3.5);
        let u3 = ProbabilitySpace::uniform(3).unwrap();
        assert!(u3.expectation(&vec![-1.0, 0.0, 1.0].into()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn expectation_under_examples() {
        let s = two_atoms();
        let x: RandomVariable = vec![0.0, 10.0].into();
        let q = Density::new(&s, vec![0.0, 2.0]).unwrap();
        assert_eq!(s.expectation_under(&x, &q).unwrap(), 10.0);
        assert_eq!(s.expectation_under(&x, &Density::one(2)).unwrap(), 5.0);

        let u3 = ProbabilitySpace::uniform(3).unwrap();
        let q0 = Density::new(&u3, vec![0.75, 1.5, 0.75]).unwrap();
        let x3: RandomVariable = vec![-1.0, 0.0, 1.0].into();
        assert!(u3.expectation_under(&x3, &q0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn ess_sup_inf_and_cdf() {
        let u3 = ProbabilitySpace::uniform(3).unwrap();
        let x: RandomVariable = vec![1.0, 2.0, 3.0].into();
        assert_eq!(u3.ess_sup(&x).unwrap(), 3.0);
        assert_eq!(u3.ess_inf(&x).unwrap(), 1.0);
        let c = RandomVariable::constant(4.0, 3);
        assert_eq!(u3.ess_sup(&c).unwrap(), 4.0);
        assert_eq!(u3.ess_inf(&c).unwrap(), 4.0);

        let s = two_atoms();
        let x: RandomVariable = vec![0.0, 10.0].into();
        assert_eq!(s.ess_sup(&x).unwrap(), 10.0);
        assert_eq!(s.cdf(&x, -1.0).unwrap(), 0.0);
        assert_eq!(s.cdf(&x, 0.0).unwrap(), 0.5);
        assert_eq!(s.cdf(&x, 10.0).unwrap(), 1.0);
        assert_eq!(s.cdf(&x, 1e9).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = two_atoms();
        let err = s.expectation(&vec![1.0, 2.0, 3.0].into()).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 3 });
        assert!(s.expectation_under(&vec![1.0, 2.0].into(), &Density::one(3)).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(ProbabilitySpace::new(vec![]).is_err());
        assert!(ProbabilitySpace::new(vec![0.0, 1.0]).is_err());
        assert!(ProbabilitySpace::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilitySpace::new(vec![0.5, 0.5 + 1e-7]).is_err());
        let r = ProbabilitySpace::renormalized(vec![0.5, 0.5 + 1e-7]).unwrap();
        assert!((r.probs().iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOL);
        assert!(ProbabilitySpace::renormalized(vec![0.5, 0.5 + 1e-5]).is_err());
    }

    #[test]
    fn density_validation() {
        let s = two_atoms();
        assert!(Density::new(&s, vec![-0.1, 2.1]).is_err());
        assert!(Density::new(&s, vec![1.0, 1.1]).is_err());
        assert!(Density::new(&s, vec![-1e-10, 2.0 + 1e-10]).is_ok());
    }

    #[test]
    fn json_ingestion() {
        let sc = Scenarios::from_json_str(
            r#"{"probs":[0.25,0.25,0.5],"variables":{"b":[1,2,3],"a":[0,0,1]}}"#,
        )
        .unwrap();
        assert_eq!(sc.space.atom_count(), 3);
        assert_eq!(sc.variables[0].0, "a");
        assert_eq!(sc.variables[1].1.values(), &[1.0, 2.0, 3.0]);

        let bad = Scenarios::from_json_str(r#"{"probs":[0.5,0.5],"variables":{"a":[1]}}"#);
        assert!(matches!(bad, Err(Error::Schema(_))));
        let off = Scenarios::from_json_str(r#"{"probs":[0.5,0.6],"variables":{}}"#);
        assert!(matches!(off, Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn csv_ingestion() {
        let text = "prob,loss,gain\n0.5,0,1\n0.5,10,-1\n";
        let sc = Scenarios::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(sc.variables.len(), 2);
        assert_eq!(sc.variables[0].0, "loss");
        assert_eq!(sc.variables[0].1.values(), &[0.0, 10.0]);
        assert!(Scenarios::from_csv_reader("p,x\n0.5,abc\n0.5,1\n".as_bytes()).is_err());
    }
}
