//! Histogram density estimation on an evenly-spaced grid over the continuous
//! unit box, exact integration of that density over acceptance regions, and a
//! Monte Carlo estimator used as an independent validation path.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::model_io::{
    CategoricalAssignment, Dataset, FeatureSchema, FeedForwardNetwork, ModelIoError, Split,
};
use crate::reach::AcceptanceRegion;

/// Cell-count ceiling: the k^d grid blowup is the known bottleneck, so
/// infeasible regimes are rejected up front instead of attempted.
pub const DEFAULT_MAX_CELLS: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("integration grid is infeasible: {bins} bins over {dims} continuous dimensions is {cells} cells (ceiling {ceiling})")]
    TooManyCells {
        bins: usize,
        dims: usize,
        cells: u128,
        ceiling: u128,
    },
    #[error("no rows with protected class `{0}`")]
    EmptyClass(String),
    #[error("grid or assignment mismatch between density model and region")]
    GridMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
}

/// Uniform grid of `bins`^`dims` cells tiling the continuous unit box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub bins: usize,
    pub dims: usize,
}

impl Grid {
    pub fn new(bins: usize, dims: usize, max_cells: u128) -> Result<Self, DensityError> {
        assert!(bins >= 1);
        let cells = (bins as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
        if cells > max_cells {
            return Err(DensityError::TooManyCells {
                bins,
                dims,
                cells,
                ceiling: max_cells,
            });
        }
        Ok(Grid { bins, dims })
    }

    pub fn cell_count(&self) -> u128 {
        (self.bins as u128).pow(self.dims as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (1.0 / self.bins as f64).powi(self.dims as i32)
    }

    /// Cell multi-index of a point; boundary values at exactly 1.0 fall in
    /// the last bin.
    pub fn cell_of(&self, coords: &[f64]) -> Vec<usize> {
        coords
            .iter()
            .map(|&v| {
                let i = (v * self.bins as f64).floor() as isize;
                i.clamp(0, self.bins as isize - 1) as usize
            })
            .collect()
    }

    pub fn cell_bounds(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let w = 1.0 / self.bins as f64;
        let lo: Vec<f64> = idx.iter().map(|&i| i as f64 * w).collect();
        let hi: Vec<f64> = idx.iter().map(|&i| (i + 1) as f64 * w).collect();
        (lo, hi)
    }
}

/// Histogram density for one protected class: categorical assignment masses
/// and a sparse per-cell density (probability per unit volume) per assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDensity {
    /// Empirical mass of each categorical assignment; parallel to the model's
    /// assignment list.
    pub mass: Vec<f64>,
    /// Sparse cell densities per assignment, keyed by cell multi-index.
    /// Serialized as sorted `[multi-index, density]` pairs (JSON objects
    /// cannot key on arrays).
    #[serde(with = "cell_maps")]
    pub cells: Vec<BTreeMap<Vec<usize>, f64>>,
}

mod cell_maps {
    use super::BTreeMap;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Cells = Vec<BTreeMap<Vec<usize>, f64>>;

    pub fn serialize<S: Serializer>(cells: &Cells, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<Vec<(&Vec<usize>, f64)>> = cells
            .iter()
            .map(|m| m.iter().map(|(k, &v)| (k, v)).collect())
            .collect();
        flat.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cells, D::Error> {
        let flat: Vec<Vec<(Vec<usize>, f64)>> = Vec::deserialize(d)?;
        Ok(flat.into_iter().map(|m| m.into_iter().collect()).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityModel {
    pub grid: Grid,
    pub assignments: Vec<CategoricalAssignment>,
    pub classes: BTreeMap<String, ClassDensity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    ExactGrid,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Fits the empirical histogram for one protected class from the train-split
/// rows: assignment mass = frequency among class rows, cell density =
/// (count in cell / assignment count) / cell volume.
pub fn fit_histogram(
    dataset: &Dataset,
    grid: &Grid,
    assignments: &[CategoricalAssignment],
    class_value: &str,
) -> Result<ClassDensity, DensityError> {
    let schema = &dataset.schema;
    let assignment_index: BTreeMap<&CategoricalAssignment, usize> = assignments
        .iter()
        .enumerate()
        .map(|(i, a)| (a, i))
        .collect();
    let mut counts: Vec<BTreeMap<Vec<usize>, u64>> = vec![BTreeMap::new(); assignments.len()];
    let mut per_assignment: Vec<u64> = vec![0; assignments.len()];
    let mut total = 0u64;
    for row in dataset.split_rows(Split::Train) {
        if schema.protected_value_of(&row.x)? != class_value {
            continue;
        }
        let a = schema.assignment_of(&row.x);
        let Some(&ai) = assignment_index.get(&a) else {
            continue; // assignment outside the configured grid
        };
        let coords = schema.continuous_coords(&row.x);
        let cell = grid.cell_of(&coords);
        *counts[ai].entry(cell).or_insert(0) += 1;
        per_assignment[ai] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(DensityError::EmptyClass(class_value.to_string()));
    }
    let cell_vol = grid.cell_volume();
    let mass: Vec<f64> = per_assignment
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let cells: Vec<BTreeMap<Vec<usize>, f64>> = counts
        .into_iter()
        .zip(&per_assignment)
        .map(|(m, &n)| {
            m.into_iter()
                .map(|(k, c)| (k, if n > 0 { c as f64 / n as f64 / cell_vol } else { 0.0 }))
                .collect()
        })
        .collect();
    Ok(ClassDensity { mass, cells })
}

/// Fits both protected classes.
pub fn fit_density_model(
    dataset: &Dataset,
    grid: Grid,
    assignments: Vec<CategoricalAssignment>,
) -> Result<DensityModel, DensityError> {
    let mut classes = BTreeMap::new();
    for class in dataset.schema.protected_values.clone() {
        let d = fit_histogram(dataset, &grid, &assignments, &class)?;
        classes.insert(class, d);
    }
    Ok(DensityModel {
        grid,
        assignments,
        classes,
    })
}

impl DensityModel {
    pub fn class(&self, class_value: &str) -> Result<&ClassDensity, DensityError> {
        self.classes
            .get(class_value)
            .ok_or_else(|| DensityError::EmptyClass(class_value.to_string()))
    }

    /// Total probability mass of the model for a class; 1 ± 1e-9 by
    /// construction.
    pub fn total_mass(&self, class_value: &str) -> Result<f64, DensityError> {
        let c = self.class(class_value)?;
        let cell_vol = self.grid.cell_volume();
        let mut total = 0.0;
        for (m, cells) in c.mass.iter().zip(&c.cells) {
            let inner: f64 = cells.values().map(|d| d * cell_vol).sum();
            total += m * inner;
        }
        Ok(total)
    }
}

/// Integrates `P(X | class)` over the region: per assignment, the sum over
/// grid cells of `vol(polytope ∩ cell) × cell density`, weighted by the
/// assignment mass. Exact for the piecewise-constant histogram density up to
/// geometry tolerances.
pub fn integrate(
    model: &DensityModel,
    class_value: &str,
    region: &AcceptanceRegion,
) -> Result<ProbabilityEstimate, DensityError> {
    if region.per_assignment.len() != model.assignments.len()
        || region
            .per_assignment
            .iter()
            .zip(&model.assignments)
            .any(|((a, _), b)| a != b)
    {
        return Err(DensityError::GridMismatch);
    }
    let density = model.class(class_value)?;
    let grid = &model.grid;
    let mut total = 0.0;
    for (ai, (_, polys)) in region.per_assignment.iter().enumerate() {
        let mass = density.mass[ai];
        if mass == 0.0 || polys.is_empty() {
            continue;
        }
        let cells = &density.cells[ai];
        let mut inner = 0.0;
        for poly in polys {
            inner += integrate_polytope(grid, cells, poly)?;
        }
        total += mass * inner;
    }
    Ok(ProbabilityEstimate {
        value: total,
        method: EstimateMethod::ExactGrid,
        stderr: None,
        samples: None,
        seed: None,
    })
}

/// Σ over cells overlapping the polytope's bounding box of
/// `vol(polytope ∩ cell) × density(cell)`.
fn integrate_polytope(
    grid: &Grid,
    cells: &BTreeMap<Vec<usize>, f64>,
    poly: &HPolytope,
) -> Result<f64, DensityError> {
    if cells.is_empty() {
        return Ok(0.0);
    }
    if poly.is_empty()? {
        return Ok(0.0);
    }
    let (lo, hi) = poly.bounding_box()?;
    let k = grid.bins as f64;
    let ranges: Vec<(usize, usize)> = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| {
            let a = ((l * k).floor() as isize).clamp(0, grid.bins as isize - 1) as usize;
            let b = ((h * k).ceil() as isize - 1).clamp(0, grid.bins as isize - 1) as usize;
            (a, b)
        })
        .collect();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut acc = 0.0;
    loop {
        if let Some(&d) = cells.get(&idx) {
            if d > 0.0 {
                let (clo, chi) = grid.cell_bounds(&idx);
                acc += d * cell_intersection_volume(poly, &clo, &chi)?;
            }
        }
        // Lexicographic advance over the cell ranges, last axis fastest.
        let mut axis = idx.len();
        loop {
            if axis == 0 {
                return Ok(acc);
            }
            axis -= 1;
            if idx[axis] < ranges[axis].1 {
                idx[axis] += 1;
                for r in idx.iter_mut().skip(axis + 1).zip(ranges.iter().skip(axis + 1)) {
                    *r.0 = r.1 .0;
                }
                break;
            }
        }
    }
}

fn cell_intersection_volume(
    poly: &HPolytope,
    lo: &[f64],
    hi: &[f64],
) -> Result<f64, DensityError> {
    let dims = lo.len();
    // Fast path: when every cell corner is inside the polytope, the whole
    // cell is (convexity).
    let mut all_inside = true;
    'corner: for mask in 0..(1u64 << dims) {
        let corner: Vec<f64> = (0..dims)
            .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
            .collect();
        if !poly.contains(&corner, 1e-12) {
            all_inside = false;
            break 'corner;
        }
    }
    if all_inside {
        return Ok(lo.iter().zip(hi).map(|(l, h)| h - l).product());
    }
    let cell = HPolytope::box_poly(lo, hi)?;
    Ok(poly.intersect(&cell)?.volume()?)
}

/// Draws points from one class's histogram density: assignment ~ mass,
/// cell ~ cell masses, then uniform inside the cell.
pub struct ClassSampler<'a> {
    model: &'a DensityModel,
    /// (assignment index, cell, cumulative probability), strictly increasing.
    entries: Vec<(usize, &'a Vec<usize>, f64)>,
    norm: f64,
}

impl<'a> ClassSampler<'a> {
    pub fn new(model: &'a DensityModel, class_value: &str) -> Result<Self, DensityError> {
        let density = model.class(class_value)?;
        let cell_vol = model.grid.cell_volume();
        let mut entries = Vec::new();
        let mut cum = 0.0;
        for (ai, (m, cells)) in density.mass.iter().zip(&density.cells).enumerate() {
            for (cell, d) in cells {
                let p = m * d * cell_vol;
                if p > 0.0 {
                    cum += p;
                    entries.push((ai, cell, cum));
                }
            }
        }
        if entries.is_empty() {
            return Err(DensityError::EmptyClass(class_value.to_string()));
        }
        Ok(ClassSampler {
            model,
            entries,
            norm: cum,
        })
    }

    /// One draw: the categorical assignment and the continuous coordinates.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (&'a CategoricalAssignment, Vec<f64>) {
        let u: f64 = rng.gen::<f64>() * self.norm;
        let pos = self.entries.partition_point(|e| e.2 < u);
        let (ai, cell, _) = self.entries[pos.min(self.entries.len() - 1)];
        let width = 1.0 / self.model.grid.bins as f64;
        let coords = cell
            .iter()
            .map(|&ci| (ci as f64 + rng.gen::<f64>()) * width)
            .collect();
        (&self.model.assignments[ai], coords)
    }
}

/// Monte Carlo acceptance probability: sample from the class density, embed,
/// then evaluate `decide`.
pub fn mc_probability(
    model: &DensityModel,
    class_value: &str,
    net: &FeedForwardNetwork,
    schema: &FeatureSchema,
    label: u8,
    n: u64,
    seed: u64,
) -> Result<ProbabilityEstimate, DensityError> {
    assert!(n >= 1);
    let sampler = ClassSampler::new(model, class_value)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..n {
        let (assignment, coords) = sampler.sample(&mut rng);
        let x = schema.embed(&coords, class_value, assignment)?;
        if net.decide(&x)? == label {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    Ok(ProbabilityEstimate {
        value: p,
        method: EstimateMethod::MonteCarlo,
        stderr: Some((p * (1.0 - p) / n as f64).sqrt()),
        samples: Some(n),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{DataRow, FeatureKind, FeatureSpec, Layer};
    use crate::reach::{acceptance_region, ReachConfig};

    fn schema_1d() -> FeatureSchema {
        FeatureSchema {
            features: vec![
                FeatureSpec {
                    name: "x".into(),
                    kind: FeatureKind::Continuous { min: 0.0, max: 1.0 },
                },
                FeatureSpec {
                    name: "g".into(),
                    kind: FeatureKind::Categorical {
                        values: vec!["a".into(), "b".into()],
                    },
                },
            ],
            protected_feature: "g".into(),
            protected_values: ["a".into(), "b".into()],
        }
    }

    fn dataset_with(xs: &[(f64, &str)]) -> Dataset {
        let schema = schema_1d();
        let rows = xs
            .iter()
            .map(|&(x, g)| DataRow {
                x: vec![x, (g == "a") as u8 as f64, (g == "b") as u8 as f64],
                label: 0,
                split: Split::Train,
            })
            .collect();
        Dataset {
            schema,
            rows,
            normalization: vec![],
            seed: 0,
            dropped_rows: 0,
            out_of_range_cells: 0,
        }
    }

    #[test]
    fn grid_cell_count_ceiling() {
        let err = Grid::new(10, 11, DEFAULT_MAX_CELLS).unwrap_err();
        match err {
            DensityError::TooManyCells { cells, .. } => assert_eq!(cells, 100_000_000_000),
            other => panic!("unexpected {other}"),
        }
        assert!(Grid::new(10, 6, DEFAULT_MAX_CELLS).is_ok());
    }

    #[test]
    fn point_mass_density() {
        // All class rows at x = 0.05, k = 10 → density 10 in cell 0.
        let d = dataset_with(&[(0.05, "a"), (0.05, "a"), (0.05, "a")]);
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        let assignments = vec![CategoricalAssignment(Vec::new())];
        let h = fit_histogram(&d, &grid, &assignments, "a").unwrap();
        assert_eq!(h.mass, vec![1.0]);
        assert_eq!(h.cells[0].len(), 1);
        assert!((h.cells[0][&vec![0usize]] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_value_goes_to_last_bin() {
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        assert_eq!(grid.cell_of(&[1.0]), vec![9]);
        assert_eq!(grid.cell_of(&[0.999999]), vec![9]);
        assert_eq!(grid.cell_of(&[0.0]), vec![0]);
    }

    #[test]
    fn identical_rows_identical_slices() {
        let d = dataset_with(&[(0.3, "a"), (0.7, "a"), (0.3, "b"), (0.7, "b")]);
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        let assignments = vec![CategoricalAssignment(Vec::new())];
        let ha = fit_histogram(&d, &grid, &assignments, "a").unwrap();
        let hb = fit_histogram(&d, &grid, &assignments, "b").unwrap();
        assert_eq!(ha.cells, hb.cells);
        assert_eq!(ha.mass, hb.mass);
    }

    #[test]
    fn empty_class_is_error() {
        let d = dataset_with(&[(0.3, "a")]);
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        let assignments = vec![CategoricalAssignment(Vec::new())];
        assert!(matches!(
            fit_histogram(&d, &grid, &assignments, "b"),
            Err(DensityError::EmptyClass(_))
        ));
    }

    fn uniform_model_1d() -> DensityModel {
        // 16 evenly spread rows → not exactly uniform; build uniform directly.
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        let assignments = vec![CategoricalAssignment(Vec::new())];
        let cells: BTreeMap<Vec<usize>, f64> = (0..10).map(|i| (vec![i], 1.0)).collect();
        let slice = ClassDensity {
            mass: vec![1.0],
            cells: vec![cells],
        };
        let mut classes = BTreeMap::new();
        classes.insert("a".to_string(), slice.clone());
        classes.insert("b".to_string(), slice);
        DensityModel {
            grid,
            assignments,
            classes,
        }
    }

    fn threshold_net(t: f64) -> FeedForwardNetwork {
        FeedForwardNetwork {
            layers: vec![Layer {
                weights: vec![vec![1.0, 0.0, 0.0]],
                bias: vec![-t],
                activation: Activation::Linear,
            }],
        }
    }
    use crate::model_io::Activation;

    #[test]
    fn uniform_density_integrates_lengths() {
        let schema = schema_1d();
        let model = uniform_model_1d();
        let cfg = ReachConfig::default();
        let whole = acceptance_region(&threshold_net(-10.0), &schema, "a", 1, &cfg).unwrap();
        let p = integrate(&model, "a", &whole).unwrap();
        assert!((p.value - 1.0).abs() < 1e-9, "got {}", p.value);
        let quarter = acceptance_region(&threshold_net(0.25), &schema, "a", 1, &cfg).unwrap();
        let p = integrate(&model, "a", &quarter).unwrap();
        assert!((p.value - 0.75).abs() < 1e-9, "got {}", p.value);
    }

    #[test]
    fn fitted_model_mass_is_one() {
        let d = dataset_with(&[
            (0.05, "a"),
            (0.15, "a"),
            (0.33, "a"),
            (0.91, "a"),
            (0.52, "b"),
            (0.52, "b"),
        ]);
        let grid = Grid::new(10, 1, DEFAULT_MAX_CELLS).unwrap();
        let model =
            fit_density_model(&d, grid, vec![CategoricalAssignment(Vec::new())]).unwrap();
        for c in ["a", "b"] {
            assert!((model.total_mass(c).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mc_constant_networks() {
        let schema = schema_1d();
        let model = uniform_model_1d();
        let accept = FeedForwardNetwork {
            layers: vec![Layer {
                weights: vec![vec![0.0, 0.0, 0.0]],
                bias: vec![1.0],
                activation: Activation::Linear,
            }],
        };
        let p = mc_probability(&model, "a", &accept, &schema, 1, 1000, 7).unwrap();
        assert_eq!(p.value, 1.0);
        assert_eq!(p.stderr, Some(0.0));
        let reject = FeedForwardNetwork {
            layers: vec![Layer {
                weights: vec![vec![0.0, 0.0, 0.0]],
                bias: vec![-1.0],
                activation: Activation::Linear,
            }],
        };
        let p = mc_probability(&model, "a", &reject, &schema, 1, 1000, 7).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn mc_matches_exact_integration() {
        let schema = schema_1d();
        let model = uniform_model_1d();
        let net = threshold_net(0.4);
        let region =
            acceptance_region(&net, &schema, "a", 1, &ReachConfig::default()).unwrap();
        let exact = integrate(&model, "a", &region).unwrap();
        let mc = mc_probability(&model, "a", &net, &schema, 1, 200_000, 3).unwrap();
        let tol = 3.0 * mc.stderr.unwrap() + 1e-3;
        assert!(
            (exact.value - mc.value).abs() <= tol,
            "exact {} vs mc {}",
            exact.value,
            mc.value
        );
    }
}
