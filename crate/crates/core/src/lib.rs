//! Coherent risk measures on finite probability spaces.
//!
//! Every measure here is evaluated two ways: a closed-form primal formula
//! and the support function of its risk envelope (a convex set of
//! densities). The two must agree; most of the test suite checks that.

pub mod algebra;
pub mod aversity;
pub mod cli;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod measures;
pub mod oracle;
pub mod selftest;
pub mod space;
pub mod uncertainty;

pub use algebra::{BoundMeasure, MeasureExpr};
pub use aversity::{AversityReport, Verdict};
pub use envelope::{Envelope, EnvelopeRepr, SupportResult};
pub use error::{Error, Result};
pub use geometry::HullLimits;
pub use measures::{MeasureSpec, RiskFunctional};
pub use space::{Density, ProbabilitySpace, RandomVariable, Scenarios};
pub use uncertainty::{AffineFamily, UncertaintySet};
