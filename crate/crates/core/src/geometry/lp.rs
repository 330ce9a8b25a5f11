//! Dense two-phase simplex for small LPs of the form
//! `opt c·x  s.t.  A·x ≤ b` with free variables.
//!
//! Free variables are split as `x = u − v`; phase 1 minimizes artificial
//! variables to find a basic feasible point. Pricing is Dantzig by default
//! with a switch to Bland's rule after a fixed iteration budget to break
//! cycling. Problems here are tiny (dim ≤ ~12, a few hundred rows), so
//! robustness is preferred over sparse machinery.

use super::polytope::HPolytope;
use super::{GeometryError, EPS_FEAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Optimal objective value in the caller's sense; meaningful only when feasible.
    pub optimum: f64,
    /// Optimal point; meaningful only when feasible.
    pub witness: Vec<f64>,
}

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-9;
/// Iterations of Dantzig pricing before falling back to Bland's rule.
const BLAND_SWITCH: usize = 2_000;
const MAX_ITERS: usize = 50_000;

/// Optimizes `objective·x` over the polytope. `Unbounded` status is possible
/// in principle but callers construct box-bounded polytopes; they treat it as
/// an internal error.
pub fn solve_lp(
    objective: &[f64],
    poly: &HPolytope,
    sense: Sense,
) -> Result<LpResult, GeometryError> {
    if objective.len() != poly.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "objective has {} entries, polytope dimension is {}",
            objective.len(),
            poly.dim()
        )));
    }
    let mut tab = Tableau::new(poly)?;
    if !tab.phase1()? {
        return Ok(LpResult {
            status: LpStatus::Infeasible,
            optimum: f64::NAN,
            witness: Vec::new(),
        });
    }
    // Internally minimize; flip for Max.
    let flip = if sense == Sense::Max { -1.0 } else { 1.0 };
    let cost: Vec<f64> = objective.iter().map(|&c| flip * c).collect();
    match tab.phase2(&cost)? {
        None => Ok(LpResult {
            status: LpStatus::Unbounded,
            optimum: f64::NAN,
            witness: Vec::new(),
        }),
        Some(x) => {
            let optimum: f64 = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpResult {
                status: LpStatus::Feasible,
                optimum,
                witness: x,
            })
        }
    }
}

struct Tableau {
    /// Rows of the constraint system, each of length `ncols + 1` (rhs last).
    rows: Vec<Vec<f64>>,
    /// Basic column index per row.
    basis: Vec<usize>,
    n: usize,
    m: usize,
    /// Columns: u(0..n), v(n..2n), slack(2n..2n+m), artificial(2n+m..).
    ncols: usize,
    n_artificial: usize,
}

impl Tableau {
    fn new(poly: &HPolytope) -> Result<Self, GeometryError> {
        let n = poly.dim();
        let m = poly.num_constraints();
        let slack0 = 2 * n;
        // Rows with negative rhs are sign-flipped, which flips their slack
        // coefficient and therefore needs an artificial basic variable.
        let n_artificial = (0..m).filter(|&i| poly.offset(i) < 0.0).count();
        let ncols = slack0 + m + n_artificial;
        let mut rows = vec![vec![0.0; ncols + 1]; m];
        let mut basis = vec![0usize; m];
        let mut next_artificial = slack0 + m;
        for i in 0..m {
            let a = poly.constraint_row(i);
            let b = poly.offset(i);
            let s = if b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                rows[i][j] = s * a[j];
                rows[i][n + j] = -s * a[j];
            }
            rows[i][slack0 + i] = s;
            rows[i][ncols] = s * b;
            if b < 0.0 {
                rows[i][next_artificial] = 1.0;
                basis[i] = next_artificial;
                next_artificial += 1;
            } else {
                basis[i] = slack0 + i;
            }
        }
        Ok(Tableau {
            rows,
            basis,
            n,
            m,
            ncols,
            n_artificial,
        })
    }

    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    /// Runs the simplex loop to optimality for the given cost vector over all
    /// columns, excluding columns in `banned` from entering. Returns false on
    /// unboundedness.
    fn optimize(&mut self, cost: &[f64], ban_artificials: bool) -> Result<bool, GeometryError> {
        // Reduced-cost row: z[j] = cost[j] − cost_B · B^{-1} A_j.
        let mut z = vec![0.0; self.ncols];
        for j in 0..self.ncols {
            let mut acc = cost[j];
            for r in 0..self.m {
                let cb = cost[self.basis[r]];
                if cb != 0.0 {
                    acc -= cb * self.rows[r][j];
                }
            }
            z[j] = acc;
        }
        let art0 = self.ncols - self.n_artificial;
        for iter in 0..MAX_ITERS {
            let bland = iter >= BLAND_SWITCH;
            let mut entering = None;
            if bland {
                for j in 0..self.ncols {
                    if ban_artificials && j >= art0 {
                        continue;
                    }
                    if z[j] < -COST_EPS {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -COST_EPS;
                for j in 0..self.ncols {
                    if ban_artificials && j >= art0 {
                        continue;
                    }
                    if z[j] < best {
                        best = z[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(je) = entering else {
                return Ok(true); // optimal
            };
            // Ratio test; ties broken by smallest basis index (anti-cycling).
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.rows[r][je];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio < lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((lr, _)) = leave else {
                return Ok(false); // unbounded
            };
            self.pivot(lr, je, &mut z, cost);
        }
        Err(GeometryError::NumericalFailure(
            "simplex iteration limit exceeded".into(),
        ))
    }

    fn pivot(&mut self, r: usize, j: usize, z: &mut [f64], _cost: &[f64]) {
        let piv = self.rows[r][j];
        let inv = 1.0 / piv;
        for c in 0..=self.ncols {
            self.rows[r][c] *= inv;
        }
        self.rows[r][j] = 1.0; // exact
        for rr in 0..self.m {
            if rr != r {
                let factor = self.rows[rr][j];
                if factor != 0.0 {
                    for c in 0..=self.ncols {
                        self.rows[rr][c] -= factor * self.rows[r][c];
                    }
                    self.rows[rr][j] = 0.0;
                }
            }
        }
        let zfactor = z[j];
        if zfactor != 0.0 {
            for c in 0..self.ncols {
                z[c] -= zfactor * self.rows[r][c];
            }
            z[j] = 0.0;
        }
        self.basis[r] = j;
    }

    /// Phase 1: returns true when a feasible basis was found.
    fn phase1(&mut self) -> Result<bool, GeometryError> {
        if self.n_artificial == 0 {
            return Ok(true);
        }
        let art0 = self.ncols - self.n_artificial;
        let mut cost = vec![0.0; self.ncols];
        for c in cost.iter_mut().skip(art0) {
            *c = 1.0;
        }
        if !self.optimize(&cost, false)? {
            return Err(GeometryError::NumericalFailure(
                "phase-1 objective unbounded".into(),
            ));
        }
        let obj: f64 = (0..self.m)
            .filter(|&r| self.basis[r] >= art0)
            .map(|r| self.rhs(r))
            .sum();
        if obj > EPS_FEAS {
            return Ok(false);
        }
        // Drive any zero-level artificials out of the basis when possible.
        for r in 0..self.m {
            if self.basis[r] >= art0 {
                let mut z = vec![0.0; self.ncols];
                if let Some(j) = (0..art0).find(|&j| self.rows[r][j].abs() > 1e-7) {
                    self.pivot(r, j, &mut z, &cost);
                }
                // If no pivot exists the row is redundant; the artificial
                // stays basic at zero and is banned from re-entering.
            }
        }
        Ok(true)
    }

    /// Phase 2: optimizes the caller's (minimization) cost over x = u − v.
    /// Returns the optimal point, or None on unboundedness.
    fn phase2(&mut self, cost_x: &[f64]) -> Result<Option<Vec<f64>>, GeometryError> {
        let mut cost = vec![0.0; self.ncols];
        for j in 0..self.n {
            cost[j] = cost_x[j];
            cost[self.n + j] = -cost_x[j];
        }
        if !self.optimize(&cost, true)? {
            return Ok(None);
        }
        let mut x = vec![0.0; self.n];
        for r in 0..self.m {
            let b = self.basis[r];
            if b < self.n {
                x[b] += self.rhs(r);
            } else if b < 2 * self.n {
                x[b - self.n] -= self.rhs(r);
            }
        }
        Ok(Some(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(n: usize) -> HPolytope {
        HPolytope::box_poly(&vec![0.0; n], &vec![1.0; n]).unwrap()
    }

    #[test]
    fn max_x_over_unit_square() {
        let r = solve_lp(&[1.0, 0.0], &unit_box(2), Sense::Max).unwrap();
        assert_eq!(r.status, LpStatus::Feasible);
        assert!((r.optimum - 1.0).abs() < 1e-9);
        assert!((r.witness[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_constraints() {
        // x >= 2 inside the unit box.
        let p = unit_box(2)
            .intersect(&HPolytope::new(vec![vec![-1.0, 0.0]], vec![-2.0]).unwrap())
            .unwrap();
        let r = solve_lp(&[1.0, 0.0], &p, Sense::Min).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn min_with_negative_offsets() {
        // x + y >= 0.5 within the unit box: min x+y = 0.5.
        let p = unit_box(2)
            .intersect(&HPolytope::new(vec![vec![-1.0, -1.0]], vec![-0.5]).unwrap())
            .unwrap();
        let r = solve_lp(&[1.0, 1.0], &p, Sense::Min).unwrap();
        assert_eq!(r.status, LpStatus::Feasible);
        assert!((r.optimum - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unbounded_is_reported() {
        // Single constraint x ≤ 1 leaves min x unbounded.
        let p = HPolytope::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        let r = solve_lp(&[1.0, 0.0], &p, Sense::Min).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
    }

    #[test]
    fn witness_is_feasible() {
        let p = unit_box(3)
            .intersect(
                &HPolytope::new(vec![vec![1.0, 1.0, 1.0], vec![-1.0, 2.0, 0.0]], vec![1.5, 0.3])
                    .unwrap(),
            )
            .unwrap();
        let r = solve_lp(&[0.3, -0.2, 0.9], &p, Sense::Max).unwrap();
        assert_eq!(r.status, LpStatus::Feasible);
        assert!(p.contains(&r.witness, EPS_FEAS));
    }
}
