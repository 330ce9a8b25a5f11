//! CSV ingestion: missing-value filtering, seeded 70/15/15 split, min-max
//! normalization on train statistics, one-hot encoding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schema::{FeatureKind, FeatureSchema};
use super::ModelIoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataRow {
    pub x: Vec<f64>,
    pub label: u8,
    pub split: Split,
}

/// Per continuous feature: the train-split min/max used for normalization,
/// keyed by feature name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizationStat {
    pub feature: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<DataRow>,
    pub normalization: Vec<NormalizationStat>,
    pub seed: u64,
    /// Rows dropped because of missing values.
    pub dropped_rows: usize,
    /// Val/test cells that fell outside [0,1] after train-based
    /// normalization. They are recorded, not clamped.
    pub out_of_range_cells: usize,
}

impl Dataset {
    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &DataRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn to_json(&self) -> Result<String, ModelIoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ModelIoError> {
        let d: Dataset = serde_json::from_str(json)?;
        d.schema.validate()?;
        Ok(d)
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "?" || t.eq_ignore_ascii_case("na")
}

/// Ingests a CSV with a header row. Continuous features are min-max
/// normalized with train-split statistics, categoricals one-hot encoded, and
/// rows partitioned 70/15/15 (floored train and val, remainder test) by a
/// seeded shuffle.
pub fn ingest_csv(
    path: &std::path::Path,
    schema: &FeatureSchema,
    label_column: &str,
    split_seed: u64,
) -> Result<Dataset, ModelIoError> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ModelIoError::ParseError { row: 0, msg: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let col_of = |name: &str| -> Result<usize, ModelIoError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelIoError::SchemaViolation(format!("CSV missing column `{name}`")))
    };
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<_, _>>()?;
    let label_col = col_of(label_column)?;

    // Raw pass: keep unnormalized feature values per row, drop missing.
    struct RawRow {
        values: Vec<RawValue>,
        label: u8,
    }
    enum RawValue {
        Continuous(f64),
        Categorical(usize), // index into the feature's value list
    }
    let mut raw = Vec::new();
    let mut dropped = 0usize;
    for (ri, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ModelIoError::ParseError { row: ri + 1, msg: e.to_string() })?;
        let cells: Vec<&str> = rec.iter().collect();
        if feature_cols
            .iter()
            .chain(std::iter::once(&label_col))
            .any(|&c| c >= cells.len() || is_missing(cells[c]))
        {
            dropped += 1;
            continue;
        }
        let mut values = Vec::with_capacity(schema.features.len());
        let mut bad = None;
        for (fi, f) in schema.features.iter().enumerate() {
            let cell = cells[feature_cols[fi]].trim();
            match &f.kind {
                FeatureKind::Continuous { .. } => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(RawValue::Continuous(v)),
                    _ => {
                        bad = Some(ModelIoError::ParseError {
                            row: ri + 1,
                            msg: format!("non-numeric value `{cell}` for continuous feature `{}`", f.name),
                        });
                        break;
                    }
                },
                FeatureKind::Categorical { values: vs } => {
                    match vs.iter().position(|v| v == cell) {
                        Some(j) => values.push(RawValue::Categorical(j)),
                        None => {
                            bad = Some(ModelIoError::SchemaViolation(format!(
                                "row {}: unknown value `{cell}` for categorical feature `{}`",
                                ri + 1,
                                f.name
                            )));
                            break;
                        }
                    }
                }
            }
        }
        if let Some(e) = bad {
            return Err(e);
        }
        let label_cell = cells[label_col].trim();
        let label = match label_cell {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(ModelIoError::ParseError {
                    row: ri + 1,
                    msg: format!("label must be 0 or 1, found `{other}`"),
                })
            }
        };
        raw.push(RawRow { values, label });
    }

    // Seeded Fisher–Yates, then floor(0.7n) train / floor(0.15n) val / rest test.
    let n = raw.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    order.shuffle(&mut rng);
    let n_train = (0.7 * n as f64).floor() as usize;
    let n_val = (0.15 * n as f64).floor() as usize;
    let split_of = |pos: usize| {
        if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    };
    let mut splits = vec![Split::Test; n];
    for (pos, &ri) in order.iter().enumerate() {
        splits[ri] = split_of(pos);
    }

    // Train-split min/max per continuous feature.
    let cont_features: Vec<usize> = schema
        .features
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.is_categorical())
        .map(|(i, _)| i)
        .collect();
    let mut stats = Vec::new();
    for (&fi, slot) in cont_features.iter().zip(0..) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (ri, row) in raw.iter().enumerate() {
            if splits[ri] != Split::Train {
                continue;
            }
            let RawValue::Continuous(v) = row.values[fi] else { unreachable!() };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(ModelIoError::SchemaViolation(
                "empty train split; cannot compute normalization statistics".into(),
            ));
        }
        let _ = slot;
        stats.push(NormalizationStat {
            feature: schema.features[fi].name.clone(),
            min: lo,
            max: hi,
        });
    }

    let mut rows = Vec::with_capacity(n);
    let mut out_of_range = 0usize;
    for (ri, row) in raw.iter().enumerate() {
        let mut x = vec![0.0; schema.input_dim()];
        let mut off = 0;
        let mut ci = 0;
        for (fi, f) in schema.features.iter().enumerate() {
            match (&f.kind, &row.values[fi]) {
                (FeatureKind::Continuous { .. }, RawValue::Continuous(v)) => {
                    let s = &stats[ci];
                    let norm = if s.max > s.min {
                        (v - s.min) / (s.max - s.min)
                    } else {
                        0.0 // constant train column
                    };
                    if !(0.0..=1.0).contains(&norm) {
                        out_of_range += 1;
                    }
                    x[off] = norm;
                    ci += 1;
                }
                (FeatureKind::Categorical { .. }, RawValue::Categorical(j)) => {
                    x[off + j] = 1.0;
                }
                _ => unreachable!(),
            }
            off += f.encoded_width();
        }
        rows.push(DataRow {
            x,
            label: row.label,
            split: splits[ri],
        });
    }

    Ok(Dataset {
        schema: schema.clone(),
        rows,
        normalization: stats,
        seed: split_seed,
        dropped_rows: dropped,
        out_of_range_cells: out_of_range,
    })
}
