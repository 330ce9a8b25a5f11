//! From-scratch MLP trainer (mini-batch SGD, manual backprop) and the four
//! training strategies: baseline, permuted protected feature, and the
//! iterative removal / augmentation loop driven by the protected-flip test.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{auc, MetricsError};
use crate::model_io::{
    Activation, Dataset, FeatureSchema, FeedForwardNetwork, Layer, ModelIoError, Split,
};

pub const HIDDEN_WIDTH: usize = 8;
pub const MAX_ROUNDS: usize = 20;
pub const SIZE_FACTOR: usize = 3;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train split is empty")]
    EmptyTrain,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("protected one-hot group invalid in input row")]
    InvalidProtectedGroup,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Small,
    Medium,
}

impl Arch {
    pub fn hidden_layers(self) -> usize {
        match self {
            Arch::Small => 3,
            Arch::Medium => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Baseline,
    Permute,
    Remove,
    Augment,
}

/// Label given to the flipped twin appended by the augment strategy: the
/// model's decision on the original row, or the row's ground-truth label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentLabel {
    #[default]
    Model,
    GroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    pub arch: Arch,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub augment_label: AugmentLabel,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            arch: Arch::Small,
            learning_rate: 0.01,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            strategy: Strategy::Baseline,
            augment_label: AugmentLabel::Model,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundStat {
    pub train_size: usize,
    pub flips: usize,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rounds: Vec<RoundStat>,
}

/// One training example: encoded features and binary label.
pub type Example = (Vec<f64>, u8);

fn he_uniform_network(input_dim: usize, arch: Arch, rng: &mut ChaCha8Rng) -> FeedForwardNetwork {
    let mut dims = vec![input_dim];
    dims.extend(std::iter::repeat(HIDDEN_WIDTH).take(arch.hidden_layers()));
    dims.push(1);
    let n_layers = dims.len() - 1;
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / fan_in as f64).sqrt();
        let weights = (0..fan_out)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-limit..limit)).collect())
            .collect();
        layers.push(Layer {
            weights,
            bias: vec![0.0; fan_out],
            activation: if i + 1 == n_layers {
                Activation::Linear
            } else {
                Activation::Relu
            },
        });
    }
    FeedForwardNetwork { layers }
}

struct Gradients {
    weights: Vec<Vec<Vec<f64>>>,
    bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &FeedForwardNetwork) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| vec![vec![0.0; l.in_dim()]; l.out_dim()])
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss (binary cross-entropy over the sigmoid of the logit) and its gradient
/// for one example, accumulated into `grads`.
fn backprop(net: &FeedForwardNetwork, x: &[f64], y: u8, grads: &mut Gradients) -> f64 {
    // Forward, caching each layer's pre-activations and inputs.
    let mut inputs: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let a = inputs.last().unwrap();
        let z: Vec<f64> = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        let out = match layer.activation {
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Linear => z.clone(),
        };
        pre.push(z);
        inputs.push(out);
    }
    let logit = inputs.last().unwrap()[0];
    let p = sigmoid(logit);
    let yf = y as f64;
    // Numerically-stable BCE on the logit.
    let loss = logit.max(0.0) - logit * yf + (1.0 + (-logit.abs()).exp()).ln();

    // Backward: delta = ∂loss/∂z for the current layer.
    let mut delta = vec![p - yf];
    for li in (0..net.layers.len()).rev() {
        let layer = &net.layers[li];
        let a_in = &inputs[li];
        for (o, &d) in delta.iter().enumerate() {
            grads.bias[li][o] += d;
            let grow = &mut grads.weights[li][o];
            for (g, &v) in grow.iter_mut().zip(a_in) {
                *g += d * v;
            }
        }
        if li > 0 {
            let prev = &net.layers[li - 1];
            let mut next = vec![0.0; layer.in_dim()];
            for (o, &d) in delta.iter().enumerate() {
                for (n, &w) in next.iter_mut().zip(&layer.weights[o]) {
                    *n += d * w;
                }
            }
            if prev.activation == Activation::Relu {
                for (n, &z) in next.iter_mut().zip(&pre[li - 1]) {
                    if z <= 0.0 {
                        *n = 0.0;
                    }
                }
            }
            delta = next;
        }
    }
    loss
}

/// Loss and parameter gradient for one example, as `(weights, bias)` pairs
/// per layer. Exposed for gradient checking against finite differences.
pub fn loss_gradient(
    net: &FeedForwardNetwork,
    x: &[f64],
    y: u8,
) -> (f64, Vec<(Vec<Vec<f64>>, Vec<f64>)>) {
    let mut grads = Gradients::zeros(net);
    let loss = backprop(net, x, y, &mut grads);
    (
        loss,
        grads.weights.into_iter().zip(grads.bias).collect(),
    )
}

fn val_auc(net: &FeedForwardNetwork, val: &[Example]) -> Option<f64> {
    if val.is_empty() {
        return None;
    }
    let scores: Vec<f64> = val
        .iter()
        .map(|(x, _)| net.forward(x).unwrap_or(f64::NAN))
        .collect();
    let labels: Vec<u8> = val.iter().map(|&(_, y)| y).collect();
    auc(&scores, &labels).ok()
}

/// Mini-batch SGD on the given examples; deterministic for a fixed seed.
/// Returns the parameters of the epoch with the best validation AUC (falling
/// back to the final epoch when no validation AUC is computable) plus that
/// AUC.
pub fn train(
    examples: &[Example],
    val: &[Example],
    input_dim: usize,
    hyper: &Hyperparams,
) -> Result<(FeedForwardNetwork, Option<f64>), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = he_uniform_network(input_dim, hyper.arch, &mut rng);
    let mut best: Option<(f64, FeedForwardNetwork)> = None;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let mut grads = Gradients::zeros(&net);
            let mut loss = 0.0;
            for &i in batch {
                let (x, y) = &examples[i];
                loss += backprop(&net, x, *y, &mut grads);
            }
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            let scale = hyper.learning_rate / batch.len() as f64;
            for (li, layer) in net.layers.iter_mut().enumerate() {
                for (row, grow) in layer.weights.iter_mut().zip(&grads.weights[li]) {
                    for (w, &g) in row.iter_mut().zip(grow) {
                        *w -= scale * g;
                    }
                }
                for (b, &g) in layer.bias.iter_mut().zip(&grads.bias[li]) {
                    *b -= scale * g;
                }
            }
        }
        if let Some(a) = val_auc(&net, val) {
            if best.as_ref().map_or(true, |(ba, _)| a > *ba) {
                best = Some((a, net.clone()));
            }
        }
    }
    Ok(match best {
        Some((a, n)) => (n, Some(a)),
        None => {
            let a = val_auc(&net, val);
            (net, a)
        }
    })
}

/// Swaps the two protected one-hot coordinates, leaving everything else
/// untouched.
pub fn flip_protected(x: &[f64], schema: &FeatureSchema) -> Result<Vec<f64>, TrainError> {
    let [s0, s1] = schema.protected_slots()?;
    let (a, b) = (x[s0], x[s1]);
    let valid = (a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0) && a + b == 1.0;
    if !valid {
        return Err(TrainError::InvalidProtectedGroup);
    }
    let mut out = x.to_vec();
    out[s0] = b;
    out[s1] = a;
    Ok(out)
}

/// Rows whose decision changes when the protected attribute is flipped.
pub fn flip_indices(
    examples: &[Example],
    net: &FeedForwardNetwork,
    schema: &FeatureSchema,
) -> Result<Vec<usize>, TrainError> {
    let mut out = Vec::new();
    for (i, (x, _)) in examples.iter().enumerate() {
        let d = net.decide(x)?;
        let d_flip = net.decide(&flip_protected(x, schema)?)?;
        if d != d_flip {
            out.push(i);
        }
    }
    Ok(out)
}

/// One data-processing pass of the removal/augmentation loop: rows failing
/// the flip test are dropped (`Remove`) or joined by their flipped twin
/// (`Augment`). Returns the new data and the flip count.
pub fn proc(
    examples: &[Example],
    net: &FeedForwardNetwork,
    strategy: Strategy,
    schema: &FeatureSchema,
    augment_label: AugmentLabel,
) -> Result<(Vec<Example>, usize), TrainError> {
    assert!(matches!(strategy, Strategy::Remove | Strategy::Augment));
    let flips = flip_indices(examples, net, schema)?;
    let mut out = match strategy {
        Strategy::Remove => {
            let drop: std::collections::HashSet<usize> = flips.iter().copied().collect();
            examples
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, e)| e.clone())
                .collect::<Vec<_>>()
        }
        _ => examples.to_vec(),
    };
    if strategy == Strategy::Augment {
        for &j in &flips {
            let (x, y) = &examples[j];
            let label = match augment_label {
                AugmentLabel::Model => net.decide(x)?,
                AugmentLabel::GroundTruth => *y,
            };
            out.push((flip_protected(x, schema)?, label));
        }
    }
    Ok((out, flips.len()))
}

/// The iterative loop: train, flip-test, re-process, bounded by 20 re-process
/// rounds and the 1 ≤ n ≤ 3·n⁰ size window; exits early at a fixpoint (no
/// flips). Returns the last trained model and the per-round trace.
pub fn fair_loop(
    dataset: &Dataset,
    hyper: &Hyperparams,
) -> Result<(FeedForwardNetwork, TrainTrace), TrainError> {
    assert!(matches!(hyper.strategy, Strategy::Remove | Strategy::Augment));
    let schema = &dataset.schema;
    let input_dim = schema.input_dim();
    let val = split_examples(dataset, Split::Val);
    let mut data = split_examples(dataset, Split::Train);
    let n0 = data.len();
    let mut rounds = Vec::new();
    let mut i = 0usize;
    loop {
        let round_hyper = Hyperparams {
            seed: hyper.seed.wrapping_add(i as u64),
            ..hyper.clone()
        };
        let (net, vauc) = train(&data, &val, input_dim, &round_hyper)?;
        let (next, flips) = proc(&data, &net, hyper.strategy, schema, hyper.augment_label)?;
        rounds.push(RoundStat {
            train_size: data.len(),
            flips,
            val_auc: vauc,
        });
        if flips == 0 {
            return Ok((net, TrainTrace { rounds }));
        }
        i += 1;
        if i > MAX_ROUNDS || next.is_empty() || next.len() > SIZE_FACTOR * n0 {
            return Ok((net, TrainTrace { rounds }));
        }
        data = next;
    }
}

/// Uniformly permutes the protected one-hot groups among the train rows,
/// leaving labels, other features, and the val/test splits untouched.
pub fn permute_protected(dataset: &Dataset, seed: u64) -> Result<Dataset, TrainError> {
    let [s0, s1] = dataset.schema.protected_slots()?;
    let mut out = dataset.clone();
    let idx: Vec<usize> = out
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let mut groups: Vec<(f64, f64)> = idx.iter().map(|&i| (out.rows[i].x[s0], out.rows[i].x[s1])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    for (&i, (a, b)) in idx.iter().zip(groups) {
        out.rows[i].x[s0] = a;
        out.rows[i].x[s1] = b;
    }
    Ok(out)
}

fn split_examples(dataset: &Dataset, split: Split) -> Vec<Example> {
    dataset
        .split_rows(split)
        .map(|r| (r.x.clone(), r.label))
        .collect()
}

/// Runs the configured strategy end to end and returns the model, the trace,
/// and a `training` provenance block for the model document.
pub fn run_strategy(
    dataset: &Dataset,
    hyper: &Hyperparams,
) -> Result<(FeedForwardNetwork, TrainTrace), TrainError> {
    match hyper.strategy {
        Strategy::Baseline => {
            let val = split_examples(dataset, Split::Val);
            let data = split_examples(dataset, Split::Train);
            let (net, vauc) = train(&data, &val, dataset.schema.input_dim(), hyper)?;
            let flips = flip_indices(&data, &net, &dataset.schema)?.len();
            Ok((
                net,
                TrainTrace {
                    rounds: vec![RoundStat {
                        train_size: data.len(),
                        flips,
                        val_auc: vauc,
                    }],
                },
            ))
        }
        Strategy::Permute => {
            let permuted = permute_protected(dataset, hyper.seed)?;
            let val = split_examples(&permuted, Split::Val);
            let data = split_examples(&permuted, Split::Train);
            let (net, vauc) = train(&data, &val, dataset.schema.input_dim(), hyper)?;
            let flips = flip_indices(&data, &net, &dataset.schema)?.len();
            Ok((
                net,
                TrainTrace {
                    rounds: vec![RoundStat {
                        train_size: data.len(),
                        flips,
                        val_auc: vauc,
                    }],
                },
            ))
        }
        Strategy::Remove | Strategy::Augment => fair_loop(dataset, hyper),
    }
}

/// The `training` block embedded in emitted model documents.
pub fn training_block(hyper: &Hyperparams, trace: &TrainTrace) -> serde_json::Value {
    serde_json::json!({
        "hyperparams": hyper,
        "trace": trace,
    })
}
