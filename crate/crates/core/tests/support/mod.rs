//! Shared fixtures for the integration tests: random networks and polytopes,
//! and the synthetic tabular datasets used by the end-to-end checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polyfair::geometry::HPolytope;
use polyfair::model_io::{
    Activation, DataRow, Dataset, FeatureKind, FeatureSchema, FeatureSpec, FeedForwardNetwork,
    Layer, Split,
};

pub fn random_net(
    input_dim: usize,
    hidden_layers: usize,
    width: usize,
    seed: u64,
) -> FeedForwardNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat(width).take(hidden_layers));
    dims.push(1);
    let n = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let limit = (6.0 / w[0] as f64).sqrt();
            Layer {
                weights: (0..w[1])
                    .map(|_| (0..w[0]).map(|_| rng.gen_range(-limit..limit)).collect())
                    .collect(),
                bias: (0..w[1]).map(|_| rng.gen_range(-0.3..0.3)).collect(),
                activation: if i + 1 == n {
                    Activation::Linear
                } else {
                    Activation::Relu
                },
            }
        })
        .collect();
    FeedForwardNetwork { layers }
}

/// Unit box clipped by `extra` random half-spaces through interior points, so
/// the result is non-empty with probability ~1.
pub fn random_box_clipped_polytope(dim: usize, extra: usize, rng: &mut ChaCha8Rng) -> HPolytope {
    let mut poly = HPolytope::unit_box(dim);
    for _ in 0..extra {
        let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let point: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.2..0.8)).collect();
        let offset: f64 = normal.iter().zip(&point).map(|(a, b)| a * b).sum();
        poly.add_constraint(normal, offset).unwrap();
    }
    poly
}

fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (n as f64 * 0.7).floor() as usize;
    let n_val = (n as f64 * 0.15).floor() as usize;
    let mut splits = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        splits[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// COMPAS-like schema: 2 continuous features, a binary protected race
/// attribute, and one extra binary categorical.
pub fn compas_schema() -> FeatureSchema {
    FeatureSchema {
        features: vec![
            FeatureSpec {
                name: "age".into(),
                kind: FeatureKind::Continuous { min: 18.0, max: 70.0 },
            },
            FeatureSpec {
                name: "priors".into(),
                kind: FeatureKind::Continuous { min: 0.0, max: 38.0 },
            },
            FeatureSpec {
                name: "race".into(),
                kind: FeatureKind::Categorical {
                    values: vec!["African-American".into(), "Caucasian".into()],
                },
            },
            FeatureSpec {
                name: "charge_degree".into(),
                kind: FeatureKind::Categorical {
                    values: vec!["F".into(), "M".into()],
                },
            },
        ],
        protected_feature: "race".into(),
        protected_values: ["African-American".into(), "Caucasian".into()],
    }
}

/// Synthetic recidivism-style dataset with a deliberate race-dependent label
/// bias, pre-normalized to the unit interval. Rows: (age, priors, race
/// one-hot, charge one-hot).
pub fn compas_surrogate(n: usize, seed: u64) -> Dataset {
    let schema = compas_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = assign_splits(n, seed ^ 0x5eed);
    let rows = (0..n)
        .map(|i| {
            let age: f64 = rng.gen::<f64>();
            let first_race = rng.gen::<bool>();
            // The race signal is mostly proxy-encoded: the first group has a
            // heavier priors distribution, while the direct label bias is
            // small, so an attribute-blind model stays nearly as accurate.
            let priors: f64 = rng.gen::<f64>().powf(if first_race { 1.5 } else { 3.0 });
            let charge = rng.gen::<bool>();
            let mut score = 1.4 * priors + 0.5 * (1.0 - age) + 0.2 * charge as u8 as f64;
            if first_race {
                score += 0.15;
            }
            let noise: f64 = rng.gen_range(-0.15..0.15);
            let label = (score + noise > 0.8) as u8;
            let x = vec![
                age,
                priors,
                first_race as u8 as f64,
                (!first_race) as u8 as f64,
                charge as u8 as f64,
                (!charge) as u8 as f64,
            ];
            DataRow {
                x,
                label,
                split: splits[i],
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

/// Census-income-style surrogate: 2 continuous features, binary protected
/// sex, one extra binary categorical, income-style label with a sex bias.
pub fn adults_surrogate(n: usize, seed: u64) -> Dataset {
    let schema = FeatureSchema {
        features: vec![
            FeatureSpec {
                name: "age".into(),
                kind: FeatureKind::Continuous { min: 17.0, max: 90.0 },
            },
            FeatureSpec {
                name: "hours".into(),
                kind: FeatureKind::Continuous { min: 1.0, max: 99.0 },
            },
            FeatureSpec {
                name: "sex".into(),
                kind: FeatureKind::Categorical {
                    values: vec!["Female".into(), "Male".into()],
                },
            },
            FeatureSpec {
                name: "degree".into(),
                kind: FeatureKind::Categorical {
                    values: vec!["hs".into(), "college".into()],
                },
            },
        ],
        protected_feature: "sex".into(),
        protected_values: ["Female".into(), "Male".into()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = assign_splits(n, seed ^ 0xada1);
    let rows = (0..n)
        .map(|i| {
            let age: f64 = rng.gen::<f64>();
            let female = rng.gen::<bool>();
            // Hours worked is the proxy channel; the direct sex bias on the
            // label is kept small.
            let hours: f64 = rng.gen::<f64>().powf(if female { 1.4 } else { 0.8 });
            let college = rng.gen::<bool>();
            let mut score = 0.8 * hours + 0.5 * age + 0.4 * college as u8 as f64;
            if !female {
                score += 0.07;
            }
            let noise: f64 = rng.gen_range(-0.2..0.2);
            let label = (score + noise > 1.1) as u8;
            let x = vec![
                age,
                hours,
                female as u8 as f64,
                (!female) as u8 as f64,
                (!college) as u8 as f64,
                college as u8 as f64,
            ];
            DataRow {
                x,
                label,
                split: splits[i],
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
