//! Independent-oracle cross-checks: every exact geometric or probabilistic
//! quantity is re-derived by a second route (brute force, Monte Carlo, or
//! closed form) that shares no code with the implementation under test.

mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polyfair::density::{fit_density_model, integrate, mc_probability, Grid, DEFAULT_MAX_CELLS};
use polyfair::geometry::{solve_lp, HPolytope, LpStatus, Sense};
use polyfair::metrics::{mc_wsd, wsd, RegionAnalysis};
use polyfair::model_io::{DataRow, Dataset, Split};
use polyfair::reach::{
    activation_pattern, enumerate_categorical, enumerate_regions, InputEmbedding, ReachConfig,
};
use support::{compas_schema, random_box_clipped_polytope, random_net};

/// Independent dense Gaussian elimination used only by the oracles.
fn oracle_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Brute-force vertex enumeration: every n-subset of constraints, solved and
/// filtered for feasibility.
fn oracle_vertices(poly: &HPolytope) -> Vec<Vec<f64>> {
    let n = poly.dim();
    let m = poly.num_constraints();
    let mut subsets: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        subsets = subsets
            .into_iter()
            .flat_map(|s| {
                let start = s.last().map_or(0, |&l| l + 1);
                (start..m).map(move |i| {
                    let mut t = s.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    let mut verts: Vec<Vec<f64>> = Vec::new();
    for subset in subsets {
        let a: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| poly.constraint_row(i).to_vec())
            .collect();
        let b: Vec<f64> = subset.iter().map(|&i| poly.offset(i)).collect();
        let Some(x) = oracle_solve(a, b) else { continue };
        if !poly.contains(&x, 1e-7) {
            continue;
        }
        if !verts.iter().any(|v| {
            v.iter()
                .zip(&x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                < 1e-6
        }) {
            verts.push(x);
        }
    }
    verts
}

fn match_point_sets(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|p| {
            b.iter().any(|q| {
                p.iter()
                    .zip(q)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    < tol
            })
        })
}

#[test]
fn vertex_enumeration_matches_basis_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for dim in [2usize, 3] {
        for trial in 0..25 {
            let poly = random_box_clipped_polytope(dim, 3, &mut rng);
            let exact = match poly.vertices() {
                Ok(v) => v.vertices,
                Err(_) => continue, // degenerate draws are out of scope here
            };
            let oracle = oracle_vertices(&poly);
            assert!(
                match_point_sets(&exact, &oracle, 1e-6),
                "dim {dim} trial {trial}: {} exact vs {} oracle vertices",
                exact.len(),
                oracle.len()
            );
        }
    }
}

#[test]
fn lp_optimum_matches_vertex_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..25 {
        let poly = random_box_clipped_polytope(3, 3, &mut rng);
        let Ok(v) = poly.vertices() else { continue };
        for _ in 0..4 {
            let obj: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lp = solve_lp(&obj, &poly, Sense::Max).unwrap();
            assert_eq!(lp.status, LpStatus::Feasible);
            let best = v
                .vertices
                .iter()
                .map(|p| p.iter().zip(&obj).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (lp.optimum - best).abs() < 1e-6,
                "lp {} vs vertex max {best}",
                lp.optimum
            );
        }
    }
}

#[test]
fn volume_matches_rejection_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..20 {
        let poly = random_box_clipped_polytope(3, 4, &mut rng);
        let exact = poly.volume().unwrap();
        let n = 400_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            if poly.contains(&p, 0.0) {
                hits += 1;
            }
        }
        let mc = hits as f64 / n as f64;
        let se = (mc * (1.0 - mc) / n as f64).sqrt();
        assert!(
            (exact - mc).abs() <= 3.0 * se + 1e-4,
            "trial {trial}: exact {exact} vs mc {mc} ± {se}"
        );
    }
}

fn identity_embedding(dim: usize) -> InputEmbedding {
    InputEmbedding {
        input_dim: dim,
        continuous_positions: (0..dim).collect(),
        base: vec![0.0; dim],
    }
}

#[test]
fn region_labels_agree_with_pointwise_decide() {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    for trial in 0..6 {
        let dim = 2 + trial % 2;
        let net = random_net(dim, 2, 6, 100 + trial as u64);
        let embedding = identity_embedding(dim);
        let unit = HPolytope::unit_box(dim);
        let regions =
            enumerate_regions(&net, &unit, &embedding, &ReachConfig::default()).unwrap();
        let total: f64 = regions.iter().map(|r| r.polytope.volume().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-4, "trial {trial}: total {total}");
        // Pattern lookup narrows each sample to at most the two subregions
        // (accept/reject halves of one ReLU cell); containment picks the one.
        let mut by_pattern: std::collections::HashMap<&[bool], Vec<usize>> =
            std::collections::HashMap::new();
        for (i, r) in regions.iter().enumerate() {
            by_pattern.entry(r.pattern.as_slice()).or_default().push(i);
        }
        let mut checked = 0;
        for _ in 0..20_000 {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
            let (pattern, logit, margin) = activation_pattern(&net, &x).unwrap();
            if margin < 1e-7 || logit.abs() < 1e-7 {
                continue; // boundary band
            }
            if let Some(cands) = by_pattern.get(pattern.as_slice()) {
                let hit = cands
                    .iter()
                    .find(|&&i| regions[i].polytope.contains(&x, 1e-9))
                    .expect("point's pattern cell must contain it");
                assert_eq!(regions[*hit].label, net.decide(&x).unwrap(), "trial {trial}");
                checked += 1;
            }
        }
        assert!(checked > 15_000, "too few pattern hits: {checked}");
    }
}

fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    // Non-uniform continuous marginals so the histogram is informative.
    let schema = compas_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let a: f64 = rng.gen::<f64>().sqrt();
            let b: f64 = rng.gen::<f64>().powi(2);
            let g = rng.gen::<bool>();
            let c = rng.gen::<bool>();
            DataRow {
                x: vec![
                    a,
                    b,
                    g as u8 as f64,
                    (!g) as u8 as f64,
                    c as u8 as f64,
                    (!c) as u8 as f64,
                ],
                label: (a + b > 1.0) as u8,
                split: Split::Train,
            }
        })
        .collect();
    Dataset {
        schema,
        rows,
        normalization: vec![],
        seed,
        dropped_rows: 0,
        out_of_range_cells: 0,
    }
}

#[test]
fn exact_integration_matches_mc_probability() {
    let dataset = synthetic_dataset(30_000, 5);
    let schema = dataset.schema.clone();
    let grid = Grid::new(10, 2, DEFAULT_MAX_CELLS).unwrap();
    let assignments = enumerate_categorical(&schema, &ReachConfig::default()).unwrap();
    let density = fit_density_model(&dataset, grid, assignments).unwrap();
    for trial in 0..5 {
        let net = random_net(6, 2, 6, 200 + trial);
        let analysis = RegionAnalysis::compute(&net, &schema, &ReachConfig::default()).unwrap();
        for (k, class) in schema.protected_values.iter().enumerate() {
            let exact = integrate(&density, class, &analysis.regions[k]).unwrap();
            let mc =
                mc_probability(&density, class, &net, &schema, 1, 300_000, 77 + trial).unwrap();
            let tol = 3.0 * mc.stderr.unwrap() + 1e-3;
            assert!(
                (exact.value - mc.value).abs() <= tol,
                "trial {trial} class {class}: exact {} vs mc {}",
                exact.value,
                mc.value
            );
        }
    }
}

#[test]
fn geometric_wsd_matches_flip_test() {
    let dataset = synthetic_dataset(30_000, 9);
    let schema = dataset.schema.clone();
    let grid = Grid::new(10, 2, DEFAULT_MAX_CELLS).unwrap();
    let assignments = enumerate_categorical(&schema, &ReachConfig::default()).unwrap();
    let density = fit_density_model(&dataset, grid, assignments).unwrap();
    for trial in 0..5 {
        let net = random_net(6, 2, 6, 300 + trial);
        let analysis = RegionAnalysis::compute(&net, &schema, &ReachConfig::default()).unwrap();
        let exact = wsd(&analysis, &density).unwrap();
        let mc = mc_wsd(&density, &net, &schema, 300_000, 13 + trial).unwrap();
        let tol = 3.0 * mc.stderr.unwrap() + 1e-3;
        assert!(
            (exact - mc.value).abs() <= tol,
            "trial {trial}: exact {exact} vs mc {} ± {}",
            mc.value,
            mc.stderr.unwrap()
        );
    }
}

#[test]
fn intersection_is_commutative_in_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..20 {
        let a = random_box_clipped_polytope(3, 2, &mut rng);
        let b = random_box_clipped_polytope(3, 2, &mut rng);
        let ab = a.intersect(&b).unwrap();
        let ba = b.intersect(&a).unwrap();
        let (va, vb) = (ab.volume().unwrap(), ba.volume().unwrap());
        assert!((va - vb).abs() < 1e-9, "{va} vs {vb}");
        // Containment agrees with membership in both operands.
        for _ in 0..200 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            assert_eq!(
                ab.contains(&p, 0.0),
                a.contains(&p, 0.0) && b.contains(&p, 0.0)
            );
        }
    }
}
