//! Feature schema: ordered features, one-hot encoding layout and the binary
//! protected attribute.

use serde::{Deserialize, Serialize};

use super::ModelIoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous { min: f64, max: f64 },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            FeatureKind::Continuous { .. } => 1,
            FeatureKind::Categorical { values } => values.len(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }
}

/// Assignment of one value to each non-protected categorical feature, in
/// schema order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoricalAssignment(pub Vec<(String, String)>);

impl CategoricalAssignment {
    pub fn value_of(&self, feature: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(f, _)| f == feature)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub protected_feature: String,
    /// Exactly two labels; the protected class is binary.
    pub protected_values: [String; 2],
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<(), ModelIoError> {
        let mut names = std::collections::HashSet::new();
        for f in &self.features {
            if !names.insert(&f.name) {
                return Err(ModelIoError::SchemaViolation(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
            match &f.kind {
                FeatureKind::Continuous { min, max } => {
                    if !(min < max) {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "continuous feature `{}` needs min < max",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { values } => {
                    if values.len() < 2 {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "categorical feature `{}` needs cardinality >= 2",
                            f.name
                        )));
                    }
                    let mut vs = std::collections::HashSet::new();
                    if !values.iter().all(|v| vs.insert(v)) {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "categorical feature `{}` has duplicate values",
                            f.name
                        )));
                    }
                }
            }
        }
        let prot = self.protected_spec()?;
        match &prot.kind {
            FeatureKind::Categorical { values } => {
                if values.len() != 2 {
                    return Err(ModelIoError::SchemaViolation(
                        "protected feature must be binary".into(),
                    ));
                }
                for v in &self.protected_values {
                    if !values.contains(v) {
                        return Err(ModelIoError::SchemaViolation(format!(
                            "protected value `{v}` not among the protected feature's values"
                        )));
                    }
                }
                if self.protected_values[0] == self.protected_values[1] {
                    return Err(ModelIoError::SchemaViolation(
                        "protected values must be distinct".into(),
                    ));
                }
            }
            _ => {
                return Err(ModelIoError::SchemaViolation(
                    "protected feature must be categorical".into(),
                ))
            }
        }
        Ok(())
    }

    fn protected_spec(&self) -> Result<&FeatureSpec, ModelIoError> {
        self.features
            .iter()
            .find(|f| f.name == self.protected_feature)
            .ok_or_else(|| {
                ModelIoError::SchemaViolation(format!(
                    "protected feature `{}` not in schema",
                    self.protected_feature
                ))
            })
    }

    /// Encoded input dimension: one slot per continuous feature plus the
    /// cardinality of each categorical feature.
    pub fn input_dim(&self) -> usize {
        self.features.iter().map(|f| f.encoded_width()).sum()
    }

    pub fn continuous_dim(&self) -> usize {
        self.features.iter().filter(|f| !f.is_categorical()).count()
    }

    /// Encoded offset of feature index `i`.
    pub fn feature_offset(&self, i: usize) -> usize {
        self.features[..i].iter().map(|f| f.encoded_width()).sum()
    }

    /// Encoded positions of the continuous features, in schema order.
    pub fn continuous_positions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut off = 0;
        for f in &self.features {
            if !f.is_categorical() {
                out.push(off);
            }
            off += f.encoded_width();
        }
        out
    }

    /// Encoded slot for (protected value index 0, index 1).
    pub fn protected_slots(&self) -> Result<[usize; 2], ModelIoError> {
        let idx = self
            .features
            .iter()
            .position(|f| f.name == self.protected_feature)
            .ok_or_else(|| ModelIoError::SchemaViolation("protected feature missing".into()))?;
        let off = self.feature_offset(idx);
        let FeatureKind::Categorical { values } = &self.features[idx].kind else {
            return Err(ModelIoError::SchemaViolation(
                "protected feature must be categorical".into(),
            ));
        };
        let mut slots = [0usize; 2];
        for (k, pv) in self.protected_values.iter().enumerate() {
            let j = values.iter().position(|v| v == pv).ok_or_else(|| {
                ModelIoError::SchemaViolation(format!("protected value `{pv}` unknown"))
            })?;
            slots[k] = off + j;
        }
        Ok(slots)
    }

    /// Pins the protected one-hot pair to `class_value`, returning the two
    /// (slot, value) pairs and the dimension of the remaining shared space.
    pub fn fix_protected(&self, class_value: &str) -> Result<([(usize, f64); 2], usize), ModelIoError> {
        let k = self
            .protected_values
            .iter()
            .position(|v| v == class_value)
            .ok_or_else(|| {
                ModelIoError::SchemaViolation(format!("unknown protected class `{class_value}`"))
            })?;
        let slots = self.protected_slots()?;
        let fixed = [
            (slots[k], 1.0),
            (slots[1 - k], 0.0),
        ];
        Ok((fixed, self.input_dim() - 2))
    }

    pub fn non_protected_categoricals(&self) -> Vec<&FeatureSpec> {
        self.features
            .iter()
            .filter(|f| f.is_categorical() && f.name != self.protected_feature)
            .collect()
    }

    /// Full encoded input from continuous coordinates (schema order), a
    /// protected class value, and a non-protected categorical assignment.
    pub fn embed(
        &self,
        continuous: &[f64],
        class_value: &str,
        assignment: &CategoricalAssignment,
    ) -> Result<Vec<f64>, ModelIoError> {
        if continuous.len() != self.continuous_dim() {
            return Err(ModelIoError::DimensionMismatch(format!(
                "{} continuous coordinates for a schema with {}",
                continuous.len(),
                self.continuous_dim()
            )));
        }
        let mut x = vec![0.0; self.input_dim()];
        let mut ci = 0;
        let mut off = 0;
        for f in &self.features {
            match &f.kind {
                FeatureKind::Continuous { .. } => {
                    x[off] = continuous[ci];
                    ci += 1;
                }
                FeatureKind::Categorical { values } => {
                    let value = if f.name == self.protected_feature {
                        class_value
                    } else {
                        assignment.value_of(&f.name).ok_or_else(|| {
                            ModelIoError::SchemaViolation(format!(
                                "assignment missing categorical feature `{}`",
                                f.name
                            ))
                        })?
                    };
                    let j = values.iter().position(|v| v == value).ok_or_else(|| {
                        ModelIoError::SchemaViolation(format!(
                            "unknown value `{value}` for feature `{}`",
                            f.name
                        ))
                    })?;
                    x[off + j] = 1.0;
                }
            }
            off += f.encoded_width();
        }
        Ok(x)
    }

    /// Continuous coordinates of an encoded row, in schema order.
    pub fn continuous_coords(&self, x: &[f64]) -> Vec<f64> {
        self.continuous_positions().iter().map(|&p| x[p]).collect()
    }

    /// The non-protected categorical assignment encoded in a row (argmax per
    /// one-hot group).
    pub fn assignment_of(&self, x: &[f64]) -> CategoricalAssignment {
        let mut out = Vec::new();
        let mut off = 0;
        for f in &self.features {
            if let FeatureKind::Categorical { values } = &f.kind {
                if f.name != self.protected_feature {
                    let j = (0..values.len())
                        .max_by(|&a, &b| x[off + a].total_cmp(&x[off + b]))
                        .unwrap();
                    out.push((f.name.clone(), values[j].clone()));
                }
            }
            off += f.encoded_width();
        }
        CategoricalAssignment(out)
    }

    /// The protected class value encoded in a row.
    pub fn protected_value_of(&self, x: &[f64]) -> Result<&str, ModelIoError> {
        let slots = self.protected_slots()?;
        if x[slots[0]] > x[slots[1]] {
            Ok(&self.protected_values[0])
        } else {
            Ok(&self.protected_values[1])
        }
    }
}
