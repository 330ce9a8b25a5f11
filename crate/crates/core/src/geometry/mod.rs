//! H-polytope kernel: LP feasibility, intersection, vertex enumeration and
//! volume. Everything downstream (reachability, integration, metrics) sits on
//! these primitives.

mod hull;
mod linalg;
mod lp;
mod polytope;

pub use hull::{convex_hull, Facet, Hull};
pub use lp::{solve_lp, LpResult, LpStatus, Sense};
pub use polytope::{HPolytope, VPolytope};

use thiserror::Error;

/// Feasibility tolerance for LP witnesses: `C·x ≤ d + EPS_FEAS`.
pub const EPS_FEAS: f64 = 1e-7;
/// Polytopes with Chebyshev radius below this are treated as lower-dimensional
/// (zero volume, no vertex enumeration).
pub const EPS_DIM: f64 = 1e-8;
/// Vertices closer than this are merged during deduplication.
pub const EPS_DEDUP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is degenerate (Chebyshev radius below {EPS_DIM})")]
    DegenerateRegion,
    #[error("linear program is unbounded (polytope not box-bounded)")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}
