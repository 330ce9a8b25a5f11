//! H-polytope `{α : C·α ≤ d}` and the derived operations: emptiness,
//! intersection, Chebyshev center, vertex enumeration (dual convex hull) and
//! volume (centroid fan over the hull of the vertices).

use serde::{Deserialize, Serialize};

use super::hull::convex_hull;
use super::linalg::{det, dot, norm, solve};
use super::lp::{solve_lp, LpStatus, Sense};
use super::{GeometryError, EPS_DEDUP, EPS_DIM, EPS_FEAS};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HPolytope {
    #[serde(rename = "C")]
    constraints: Vec<Vec<f64>>,
    #[serde(rename = "d")]
    offsets: Vec<f64>,
}

/// Vertex representation; convex hull of `vertices` equals the source
/// H-polytope up to tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VPolytope {
    pub vertices: Vec<Vec<f64>>,
}

/// Deterministic jitter for hull retries: a fixed-seed LCG perturbs every
/// coordinate by at most `amount`, so repeated calls are reproducible.
fn jittered(points: &[Vec<f64>], amount: f64) -> Vec<Vec<f64>> {
    let mut state = 0x9e3779b97f4a7c15u64;
    points
        .iter()
        .map(|v| {
            v.iter()
                .map(|&c| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    let u = (state >> 11) as f64 / (1u64 << 53) as f64;
                    c + amount * (2.0 * u - 1.0)
                })
                .collect()
        })
        .collect()
}

/// Hull construction with a jitter-retry ladder. The exact points are tried
/// first; only after a numerical failure are tiny perturbations applied, so
/// clean inputs keep exact hulls. `DegenerateRegion` is never retried — it is
/// a property of the point set, not a numerical accident.
fn robust_hull(
    points: &[Vec<f64>],
    dim: usize,
) -> Result<(super::hull::Hull, Vec<Vec<f64>>), GeometryError> {
    // Center and uniformly scale the points to O(1) spread first: the hull
    // combinatorics are invariant under this map, and it keeps quickhull's
    // absolute tolerances meaningful for very small (sliver) point sets.
    let centroid: Vec<f64> = (0..dim)
        .map(|c| points.iter().map(|p| p[c]).sum::<f64>() / points.len().max(1) as f64)
        .collect();
    let scale = points
        .iter()
        .flat_map(|p| p.iter().zip(&centroid).map(|(&v, &c)| (v - c).abs()))
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let normalized: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&centroid).map(|(&v, &c)| (v - c) / scale).collect())
        .collect();
    let mut last_err = None;
    for amount in [0.0, 1e-10, 1e-8] {
        let pts = if amount == 0.0 {
            normalized.clone()
        } else {
            jittered(&normalized, amount)
        };
        match convex_hull(&pts, dim) {
            Ok(h) => {
                let back: Vec<Vec<f64>> = pts
                    .iter()
                    .map(|p| {
                        p.iter()
                            .zip(&centroid)
                            .map(|(&v, &c)| v * scale + c)
                            .collect()
                    })
                    .collect();
                return Ok((h, back));
            }
            Err(GeometryError::DegenerateRegion) => return Err(GeometryError::DegenerateRegion),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap())
}

impl HPolytope {
    pub fn new(constraints: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self, GeometryError> {
        if constraints.len() != offsets.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} constraint rows but {} offsets",
                constraints.len(),
                offsets.len()
            )));
        }
        let dim = constraints.first().map(|r| r.len()).unwrap_or(0);
        if constraints.iter().any(|r| r.len() != dim) {
            return Err(GeometryError::DimensionMismatch(
                "ragged constraint matrix".into(),
            ));
        }
        if constraints.iter().flatten().any(|v| !v.is_finite())
            || offsets.iter().any(|v| !v.is_finite())
        {
            return Err(GeometryError::NumericalFailure(
                "non-finite constraint coefficient".into(),
            ));
        }
        Ok(HPolytope {
            constraints,
            offsets,
        })
    }

    /// Axis-aligned box `lower ≤ x ≤ upper`.
    pub fn box_poly(lower: &[f64], upper: &[f64]) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch(
                "box bounds of different lengths".into(),
            ));
        }
        let n = lower.len();
        let mut c = Vec::with_capacity(2 * n);
        let mut d = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            c.push(row);
            d.push(upper[i]);
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            c.push(row);
            d.push(-lower[i]);
        }
        HPolytope::new(c, d)
    }

    pub fn unit_box(n: usize) -> Self {
        Self::box_poly(&vec![0.0; n], &vec![1.0; n]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.constraints.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraint_row(&self, i: usize) -> &[f64] {
        &self.constraints[i]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn rows(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.constraints, &self.offsets)
    }

    /// Appends one constraint row `a·x ≤ b`.
    pub fn add_constraint(&mut self, a: Vec<f64>, b: f64) -> Result<(), GeometryError> {
        if a.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch(
                "constraint row of wrong dimension".into(),
            ));
        }
        self.constraints.push(a);
        self.offsets.push(b);
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && self
                .constraints
                .iter()
                .zip(&self.offsets)
                .all(|(row, &b)| dot(row, x) <= b + tol)
    }

    /// Constraint concatenation: the intersection needs no simplification.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope, GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch(format!(
                "intersect of dim {} with dim {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut c = self.constraints.clone();
        c.extend(other.constraints.iter().cloned());
        let mut d = self.offsets.clone();
        d.extend(other.offsets.iter().cloned());
        HPolytope::new(c, d)
    }

    /// Zero-objective LP feasibility test at tolerance `EPS_FEAS`.
    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        let r = solve_lp(&vec![0.0; self.dim()], self, Sense::Min)?;
        Ok(r.status == LpStatus::Infeasible)
    }

    /// Center and radius of the largest inscribed ball, via the standard LP
    /// over (x, r): maximize r subject to `a_i·x + ‖a_i‖·r ≤ b_i`.
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64), GeometryError> {
        let n = self.dim();
        let mut c = Vec::with_capacity(self.num_constraints());
        let mut d = Vec::with_capacity(self.num_constraints());
        for i in 0..self.num_constraints() {
            let mut row = self.constraints[i].clone();
            row.push(norm(&self.constraints[i]));
            c.push(row);
            d.push(self.offsets[i]);
        }
        let aug = HPolytope::new(c, d)?;
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        let r = solve_lp(&obj, &aug, Sense::Max)?;
        match r.status {
            LpStatus::Infeasible => Err(GeometryError::EmptyPolytope),
            LpStatus::Unbounded => Err(GeometryError::Unbounded),
            LpStatus::Feasible => {
                let radius = r.optimum;
                if radius < -EPS_FEAS {
                    return Err(GeometryError::EmptyPolytope);
                }
                let center = r.witness[..n].to_vec();
                Ok((center, radius.max(0.0)))
            }
        }
    }

    /// All vertices, via the polar dual: translate the Chebyshev center to the
    /// origin, dualize each constraint row to a point, take the convex hull,
    /// and map each hull facet back to a primal vertex.
    pub fn vertices(&self) -> Result<VPolytope, GeometryError> {
        let n = self.dim();
        let (center, radius) = self.chebyshev_center()?;
        if radius < EPS_DIM {
            return Err(GeometryError::DegenerateRegion);
        }
        if n == 1 {
            let lo = solve_lp(&[1.0], self, Sense::Min)?;
            let hi = solve_lp(&[1.0], self, Sense::Max)?;
            if lo.status != LpStatus::Feasible || hi.status != LpStatus::Feasible {
                return Err(GeometryError::Unbounded);
            }
            return Ok(VPolytope {
                vertices: vec![vec![lo.optimum], vec![hi.optimum]],
            });
        }
        let mut dual_points = Vec::new();
        for i in 0..self.num_constraints() {
            let a = &self.constraints[i];
            let slack = self.offsets[i] - dot(a, &center);
            if norm(a) < 1e-12 {
                continue; // tautological row
            }
            if slack <= 0.0 {
                // Center should be strictly interior; this row is numerically
                // tight, nudge it by the feasibility tolerance.
                return Err(GeometryError::NumericalFailure(
                    "Chebyshev center not strictly interior".into(),
                ));
            }
            dual_points.push(a.iter().map(|&v| v / slack).collect::<Vec<f64>>());
        }
        let (hull, dual_points) = robust_hull(&dual_points, n)?;
        let mut verts: Vec<Vec<f64>> = Vec::new();
        for f in &hull.facets {
            let rows: Vec<Vec<f64>> = f.vertices.iter().map(|&i| dual_points[i].clone()).collect();
            let Some(u) = solve(rows, vec![1.0; n]) else {
                continue; // degenerate facet, its plane is shared with a neighbor
            };
            let v: Vec<f64> = (0..n).map(|c| center[c] + u[c]).collect();
            if !self.contains(&v, 10.0 * EPS_FEAS) {
                continue;
            }
            if !verts
                .iter()
                .any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() <= EPS_DEDUP))
            {
                verts.push(v);
            }
        }
        Ok(VPolytope { vertices: verts })
    }

    /// Lebesgue volume by vertex enumeration followed by a simplicial fan
    /// from the vertex centroid over the hull facets. Degenerate (thin)
    /// polytopes have volume zero.
    pub fn volume(&self) -> Result<f64, GeometryError> {
        let n = self.dim();
        match self.vertices() {
            Err(GeometryError::DegenerateRegion) => return Ok(0.0),
            Err(GeometryError::EmptyPolytope) => return Ok(0.0),
            Err(e) => return Err(e),
            Ok(vp) => {
                if n == 1 {
                    return Ok((vp.vertices[1][0] - vp.vertices[0][0]).abs());
                }
                if vp.vertices.len() < n + 1 {
                    return Ok(0.0);
                }
                // The jitter retry inside robust_hull perturbs the volume by
                // O(jitter × surface area), far below downstream tolerances.
                let (hull, points) = match robust_hull(&vp.vertices, n) {
                    Err(GeometryError::DegenerateRegion) => return Ok(0.0),
                    Err(e) => return Err(e),
                    Ok(hp) => hp,
                };
                let centroid: Vec<f64> = (0..n)
                    .map(|c| points.iter().map(|v| v[c]).sum::<f64>() / points.len() as f64)
                    .collect();
                let mut vol = 0.0;
                let factorial: f64 = (1..=n).map(|k| k as f64).product();
                for f in &hull.facets {
                    let mat: Vec<Vec<f64>> = f
                        .vertices
                        .iter()
                        .map(|&vi| {
                            (0..n)
                                .map(|c| points[vi][c] - centroid[c])
                                .collect::<Vec<f64>>()
                        })
                        .collect();
                    vol += det(mat).abs() / factorial;
                }
                Ok(vol)
            }
        }
    }

    /// Per-axis bounds via 2n LPs; the returned box contains the polytope.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
        let n = self.dim();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let mut obj = vec![0.0; n];
            obj[i] = 1.0;
            let lo = solve_lp(&obj, self, Sense::Min)?;
            let hi = solve_lp(&obj, self, Sense::Max)?;
            match (lo.status, hi.status) {
                (LpStatus::Feasible, LpStatus::Feasible) => {
                    lower[i] = lo.optimum;
                    upper[i] = hi.optimum;
                }
                (LpStatus::Infeasible, _) | (_, LpStatus::Infeasible) => {
                    return Err(GeometryError::EmptyPolytope)
                }
                _ => return Err(GeometryError::Unbounded),
            }
        }
        Ok((lower, upper))
    }

    /// Stable fingerprint of the constraint system, used for canonical region
    /// ordering. Coefficients are rounded to 1e-9 before hashing.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (row, &b) in self.constraints.iter().zip(&self.offsets) {
            for &v in row {
                ((v / 1e-9).round() as i64).hash(&mut h);
            }
            ((b / 1e-9).round() as i64).hash(&mut h);
        }
        h.finish()
    }
}
