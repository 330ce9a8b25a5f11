//! Feed-forward network with ReLU hidden layers and a single linear output
//! logit, plus the JSON model document.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureSchema, ModelIoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major: `weights[i][j]` is the weight from input j to neuron i.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map(|r| r.len()).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNetwork {
    pub layers: Vec<Layer>,
}

impl FeedForwardNetwork {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim()).unwrap_or(0)
    }

    /// Checks layer chaining, the relu-then-linear activation pattern, the
    /// single-logit output and weight finiteness.
    pub fn validate(&self) -> Result<(), ModelIoError> {
        if self.layers.is_empty() {
            return Err(ModelIoError::Structural("network has no layers".into()));
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.is_empty() {
                return Err(ModelIoError::Structural(format!("layer {i} is empty")));
            }
            if layer.weights.iter().any(|r| r.len() != layer.in_dim()) {
                return Err(ModelIoError::Structural(format!(
                    "layer {i} has a ragged weight matrix"
                )));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(ModelIoError::Structural(format!(
                    "layer {i}: {} bias entries for {} neurons",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if i > 0 && layer.in_dim() != self.layers[i - 1].out_dim() {
                return Err(ModelIoError::Structural(format!(
                    "layer {i}: input dimension {} does not match previous output {}",
                    layer.in_dim(),
                    self.layers[i - 1].out_dim()
                )));
            }
            let expected = if i == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            if layer.activation != expected {
                return Err(ModelIoError::Structural(format!(
                    "layer {i}: expected {expected:?} activation"
                )));
            }
            if layer
                .weights
                .iter()
                .flatten()
                .chain(layer.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(ModelIoError::Structural(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        if self.layers[last].out_dim() != 1 {
            return Err(ModelIoError::Structural(format!(
                "output layer must have a single logit, found {}",
                self.layers[last].out_dim()
            )));
        }
        Ok(())
    }

    /// Sequential affine + relu composition, returning the final logit.
    pub fn forward(&self, x: &[f64]) -> Result<f64, ModelIoError> {
        if x.len() != self.input_dim() {
            return Err(ModelIoError::DimensionMismatch(format!(
                "input of length {} for network with input_dim {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut next = layer.bias.clone();
            for (i, row) in layer.weights.iter().enumerate() {
                next[i] += row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
            }
            if layer.activation == Activation::Relu {
                for v in next.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            cur = next;
        }
        Ok(cur[0])
    }

    /// Accept label: 1 iff the logit is ≥ 0 (sigmoid ≥ 0.5, ties to accept).
    pub fn decide(&self, x: &[f64]) -> Result<u8, ModelIoError> {
        Ok(if self.forward(x)? >= 0.0 { 1 } else { 0 })
    }
}

/// The on-disk model format: JSON with top-level `schema` and `layers`, plus
/// an optional `training` block written by the trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema: FeatureSchema,
    pub layers: Vec<Layer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<serde_json::Value>,
}

impl ModelDocument {
    pub fn network(&self) -> FeedForwardNetwork {
        FeedForwardNetwork {
            layers: self.layers.clone(),
        }
    }
}

pub fn load_model(json: &str) -> Result<(FeedForwardNetwork, FeatureSchema), ModelIoError> {
    let doc: ModelDocument = serde_json::from_str(json)?;
    doc.schema.validate()?;
    let net = doc.network();
    net.validate()?;
    if net.input_dim() != doc.schema.input_dim() {
        return Err(ModelIoError::Structural(format!(
            "network input_dim {} does not match schema input_dim {}",
            net.input_dim(),
            doc.schema.input_dim()
        )));
    }
    Ok((net, doc.schema))
}

pub fn save_model(doc: &ModelDocument) -> Result<String, ModelIoError> {
    Ok(serde_json::to_string_pretty(doc)?)
}

/// Hex SHA-256 of the compact canonical serialization; embedded in reports
/// for provenance.
pub fn model_hash(doc: &ModelDocument) -> String {
    let bytes = serde_json::to_vec(doc).expect("model document serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{FeatureKind, FeatureSpec};

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

    #[test]
    fn linear_layer_forward() {
        let net = FeedForwardNetwork {
            layers: vec![Layer {
                weights: vec![vec![1.0]],
                bias: vec![-0.5],
                activation: Activation::Linear,
            }],
        };
        net.validate().unwrap();
        assert!((net.forward(&[0.75]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let net = FeedForwardNetwork {
            layers: vec![
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![1.0]],
                    bias: vec![0.0],
                    activation: Activation::Linear,
                },
            ],
        };
        assert_eq!(net.forward(&[-0.3]).unwrap(), 0.0);
    }

    #[test]
    fn decide_tie_is_accept() {
        let net = FeedForwardNetwork {
            layers: vec![Layer {
                weights: vec![vec![1.0]],
                bias: vec![0.0],
                activation: Activation::Linear,
            }],
        };
        assert_eq!(net.decide(&[0.0]).unwrap(), 1);
        assert_eq!(net.decide(&[-1e-9]).unwrap(), 0);
    }

    #[test]
    fn chained_dimension_mismatch_names_layer() {
        let net = FeedForwardNetwork {
            layers: vec![
                Layer {
                    weights: vec![vec![0.1; 3]; 8],
                    bias: vec![0.0; 8],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![0.1; 7]],
                    bias: vec![0.0],
                    activation: Activation::Linear,
                },
            ],
        };
        let err = net.validate().unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
    }

    #[test]
    fn document_round_trip_is_byte_identical() {
        let doc = ModelDocument {
            schema: schema_1d(),
            layers: vec![Layer {
                weights: vec![vec![0.123456789012345678, -1.0, 1.0 / 3.0]],
                bias: vec![2.0_f64.sqrt()],
                activation: Activation::Linear,
            }],
            training: None,
        };
        let s1 = save_model(&doc).unwrap();
        let doc2: ModelDocument = serde_json::from_str(&s1).unwrap();
        let s2 = save_model(&doc2).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(doc.layers, doc2.layers);
    }
}
