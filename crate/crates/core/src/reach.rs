//! Exact set-based execution of the network: depth-first case splitting on
//! every ReLU neuron partitions the continuous input box into polytopes with
//! homogeneous labels; acceptance regions collect the accept-labeled pieces
//! per protected class value and categorical assignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, HPolytope};
use crate::model_io::{
    Activation, CategoricalAssignment, FeatureSchema, FeedForwardNetwork, ModelIoError,
};

#[derive(Debug, Clone)]
pub struct ReachConfig {
    /// Explored-branch ceiling for one enumeration.
    pub branch_ceiling: usize,
    /// Ceiling on the product of non-protected categorical cardinalities.
    pub assignment_ceiling: usize,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            branch_ceiling: 1_000_000,
            assignment_ceiling: 4096,
        }
    }
}

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("branch ceiling of {ceiling} exceeded ({explored} branches explored, {emitted} regions emitted)")]
    BranchCeiling {
        ceiling: usize,
        explored: usize,
        emitted: usize,
    },
    #[error("categorical assignment grid is infeasible: product of cardinalities is {product}, ceiling is {ceiling}")]
    AssignmentCeiling { product: u128, ceiling: usize },
    #[error("assignment grids do not match")]
    AssignmentGridMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
}

/// One affine piece of the network over the continuous input space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledRegion {
    pub polytope: HPolytope,
    /// Affine map from region coordinates to the final logit.
    pub out_map: Vec<f64>,
    pub out_offset: f64,
    pub label: u8,
    /// Branch decision per ReLU neuron, in layer-then-neuron order.
    pub pattern: Vec<bool>,
}

/// Union of polytopes where inputs of one protected class receive label
/// `label`, per non-protected categorical assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceRegion {
    pub class_value: String,
    pub label: u8,
    pub per_assignment: Vec<(CategoricalAssignment, Vec<HPolytope>)>,
}

/// Affine placement of the continuous analysis coordinates into the full
/// encoded input vector; categorical slots are fixed constants.
#[derive(Debug, Clone)]
pub struct InputEmbedding {
    pub input_dim: usize,
    /// Encoded position of each continuous coordinate, in analysis order.
    pub continuous_positions: Vec<usize>,
    /// Fixed values for every slot; continuous positions are overwritten.
    pub base: Vec<f64>,
}

impl InputEmbedding {
    pub fn from_schema(
        schema: &FeatureSchema,
        class_value: &str,
        assignment: &CategoricalAssignment,
    ) -> Result<Self, ModelIoError> {
        let zeros = vec![0.0; schema.continuous_dim()];
        let base = schema.embed(&zeros, class_value, assignment)?;
        Ok(InputEmbedding {
            input_dim: schema.input_dim(),
            continuous_positions: schema.continuous_positions(),
            base,
        })
    }

    pub fn embed(&self, alpha: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (k, &p) in self.continuous_positions.iter().enumerate() {
            x[p] = alpha[k];
        }
        x
    }
}

struct Enumerator<'a> {
    net: &'a FeedForwardNetwork,
    ceiling: usize,
    explored: usize,
    regions: Vec<LabeledRegion>,
}

type AffineMap = (Vec<Vec<f64>>, Vec<f64>);

impl<'a> Enumerator<'a> {
    /// Interval bound of `row·α + off` over the unit box.
    fn box_bounds(row: &[f64], off: f64) -> (f64, f64) {
        let mut lo = off;
        let mut hi = off;
        for &w in row {
            if w < 0.0 {
                lo += w;
            } else {
                hi += w;
            }
        }
        (lo, hi)
    }

    fn affine_compose(layer_w: &[Vec<f64>], layer_b: &[f64], map: &AffineMap) -> AffineMap {
        let (m, c) = map;
        let n = m.first().map(|r| r.len()).unwrap_or(0);
        let mut rows = Vec::with_capacity(layer_w.len());
        let mut offs = Vec::with_capacity(layer_w.len());
        for (wrow, &b) in layer_w.iter().zip(layer_b) {
            let mut row = vec![0.0; n];
            let mut off = b;
            for (j, &w) in wrow.iter().enumerate() {
                if w != 0.0 {
                    for k in 0..n {
                        row[k] += w * m[j][k];
                    }
                    off += w * c[j];
                }
            }
            rows.push(row);
            offs.push(off);
        }
        (rows, offs)
    }

    fn enter_layer(
        &mut self,
        li: usize,
        act: AffineMap,
        domain: HPolytope,
        pattern: Vec<bool>,
    ) -> Result<(), ReachError> {
        let layer = &self.net.layers[li];
        let pre = Self::affine_compose(&layer.weights, &layer.bias, &act);
        match layer.activation {
            Activation::Relu => self.split_neuron(li, 0, pre, domain, pattern),
            Activation::Linear => self.final_split(pre, domain, pattern),
        }
    }

    fn split_neuron(
        &mut self,
        li: usize,
        ni: usize,
        pre: AffineMap,
        domain: HPolytope,
        pattern: Vec<bool>,
    ) -> Result<(), ReachError> {
        let layer = &self.net.layers[li];
        if ni == layer.out_dim() {
            if li + 1 < self.net.layers.len() {
                return self.enter_layer(li + 1, pre, domain, pattern);
            }
            unreachable!("final layer is linear and handled by final_split");
        }
        let row = pre.0[ni].clone();
        let off = pre.1[ni];
        let (lo, hi) = Self::box_bounds(&row, off);
        if lo >= 0.0 {
            // Sign-stable active neuron (ties to active): map unchanged.
            let mut pat = pattern;
            pat.push(true);
            return self.split_neuron(li, ni + 1, pre, domain, pat);
        }
        if hi <= 0.0 {
            let mut pre = pre;
            pre.0[ni].iter_mut().for_each(|v| *v = 0.0);
            pre.1[ni] = 0.0;
            let mut pat = pattern;
            pat.push(false);
            return self.split_neuron(li, ni + 1, pre, domain, pat);
        }
        // Active branch first: g(α) ≥ 0, closed half-space.
        self.explored += 1;
        self.check_ceiling()?;
        {
            let mut d = domain.clone();
            d.add_constraint(row.iter().map(|v| -v).collect(), off)
                ?;
            if !d.is_empty()? {
                let mut pat = pattern.clone();
                pat.push(true);
                self.split_neuron(li, ni + 1, pre.clone(), d, pat)?;
            }
        }
        self.explored += 1;
        self.check_ceiling()?;
        {
            let mut d = domain;
            d.add_constraint(row.clone(), -off)
                ?;
            if !d.is_empty()? {
                let mut pre = pre;
                pre.0[ni].iter_mut().for_each(|v| *v = 0.0);
                pre.1[ni] = 0.0;
                let mut pat = pattern;
                pat.push(false);
                self.split_neuron(li, ni + 1, pre, d, pat)?;
            }
        }
        Ok(())
    }

    fn final_split(
        &mut self,
        logit: AffineMap,
        domain: HPolytope,
        pattern: Vec<bool>,
    ) -> Result<(), ReachError> {
        let row = logit.0[0].clone();
        let off = logit.1[0];
        let (lo, hi) = Self::box_bounds(&row, off);
        if lo >= 0.0 {
            // Entire region accepts (including the all-tie case logit ≡ 0).
            self.emit(domain, row, off, 1, pattern);
            return Ok(());
        }
        if hi < 0.0 {
            self.emit(domain, row, off, 0, pattern);
            return Ok(());
        }
        self.explored += 1;
        self.check_ceiling()?;
        {
            let mut d = domain.clone();
            d.add_constraint(row.iter().map(|v| -v).collect(), off)
                ?;
            if !d.is_empty()? {
                self.emit(d, row.clone(), off, 1, pattern.clone());
            }
        }
        self.explored += 1;
        self.check_ceiling()?;
        {
            let mut d = domain;
            d.add_constraint(row.clone(), -off)
                ?;
            if !d.is_empty()? {
                self.emit(d, row, off, 0, pattern);
            }
        }
        Ok(())
    }

    fn emit(&mut self, polytope: HPolytope, out_map: Vec<f64>, out_offset: f64, label: u8, pattern: Vec<bool>) {
        self.regions.push(LabeledRegion {
            polytope,
            out_map,
            out_offset,
            label,
            pattern,
        });
    }

    fn check_ceiling(&self) -> Result<(), ReachError> {
        if self.explored > self.ceiling {
            return Err(ReachError::BranchCeiling {
                ceiling: self.ceiling,
                explored: self.explored,
                emitted: self.regions.len(),
            });
        }
        Ok(())
    }
}

/// Partitions `input_poly` (within the unit box of the continuous space)
/// into label-homogeneous polytopes by depth-first ReLU case splitting.
/// The result is canonically sorted by (label, constraint fingerprint).
pub fn enumerate_regions(
    net: &FeedForwardNetwork,
    input_poly: &HPolytope,
    embedding: &InputEmbedding,
    config: &ReachConfig,
) -> Result<Vec<LabeledRegion>, ReachError> {
    net.validate()?;
    let n_c = input_poly.dim();
    // Initial affine map from analysis coordinates to the encoded input.
    let mut rows = vec![vec![0.0; n_c]; embedding.input_dim];
    for (k, &p) in embedding.continuous_positions.iter().enumerate() {
        rows[p][k] = 1.0;
    }
    let offs = embedding.base.clone();
    let mut e = Enumerator {
        net,
        ceiling: config.branch_ceiling,
        explored: 0,
        regions: Vec::new(),
    };
    e.enter_layer(0, (rows, offs), input_poly.clone(), Vec::new())?;
    let mut regions = e.regions;
    regions.sort_by_key(|r| (r.label, r.polytope.fingerprint()));
    Ok(regions)
}

/// Lexicographic enumeration of all assignments to the non-protected
/// categorical features (the last feature varies fastest).
pub fn enumerate_categorical(
    schema: &FeatureSchema,
    config: &ReachConfig,
) -> Result<Vec<CategoricalAssignment>, ReachError> {
    let feats = schema.non_protected_categoricals();
    let product: u128 = feats
        .iter()
        .map(|f| f.encoded_width() as u128)
        .product();
    if product > config.assignment_ceiling as u128 {
        return Err(ReachError::AssignmentCeiling {
            product,
            ceiling: config.assignment_ceiling,
        });
    }
    let mut out = vec![CategoricalAssignment(Vec::new())];
    for f in &feats {
        let crate::model_io::FeatureKind::Categorical { values } = &f.kind else {
            unreachable!()
        };
        let mut next = Vec::with_capacity(out.len() * values.len());
        for partial in &out {
            for v in values {
                let mut a = partial.clone();
                a.0.push((f.name.clone(), v.clone()));
                next.push(a);
            }
        }
        out = next;
    }
    Ok(out)
}

/// The acceptance region ρ(class): per categorical assignment, the polytopes
/// where the model outputs `label` with the protected slots pinned to
/// `class_value`.
pub fn acceptance_region(
    net: &FeedForwardNetwork,
    schema: &FeatureSchema,
    class_value: &str,
    label: u8,
    config: &ReachConfig,
) -> Result<AcceptanceRegion, ReachError> {
    use rayon::prelude::*;
    let assignments = enumerate_categorical(schema, config)?;
    let unit = HPolytope::unit_box(schema.continuous_dim());
    // Assignments are independent; the ordered collect keeps the output
    // deterministic regardless of worker count.
    let per_assignment: Vec<(CategoricalAssignment, Vec<HPolytope>)> = assignments
        .into_par_iter()
        .map(|assignment| {
            let embedding = InputEmbedding::from_schema(schema, class_value, &assignment)?;
            let regions = enumerate_regions(net, &unit, &embedding, config)?;
            let polys: Vec<HPolytope> = regions
                .into_iter()
                .filter(|r| r.label == label)
                .map(|r| r.polytope)
                .collect();
            Ok((assignment, polys))
        })
        .collect::<Result<_, ReachError>>()?;
    Ok(AcceptanceRegion {
        class_value: class_value.to_string(),
        label,
        per_assignment,
    })
}

/// ρ(C1) ∩ ρ(C2): per assignment, non-empty pairwise intersections of the
/// two polytope lists.
pub fn region_intersection(
    r1: &AcceptanceRegion,
    r2: &AcceptanceRegion,
) -> Result<AcceptanceRegion, ReachError> {
    if r1.per_assignment.len() != r2.per_assignment.len()
        || r1
            .per_assignment
            .iter()
            .zip(&r2.per_assignment)
            .any(|((a1, _), (a2, _))| a1 != a2)
    {
        return Err(ReachError::AssignmentGridMismatch);
    }
    let mut per_assignment = Vec::with_capacity(r1.per_assignment.len());
    for ((a, polys1), (_, polys2)) in r1.per_assignment.iter().zip(&r2.per_assignment) {
        let mut out = Vec::new();
        for p1 in polys1 {
            for p2 in polys2 {
                let inter = p1.intersect(p2)?;
                if !inter.is_empty()? {
                    out.push(inter);
                }
            }
        }
        per_assignment.push((a.clone(), out));
    }
    Ok(AcceptanceRegion {
        class_value: format!("{}∩{}", r1.class_value, r2.class_value),
        label: r1.label,
        per_assignment,
    })
}

/// Forward pass recording each ReLU branch (pre-activation ≥ 0), matching the
/// enumeration's pattern order. Returns (pattern, logit, min |pre-activation|).
pub fn activation_pattern(
    net: &FeedForwardNetwork,
    x: &[f64],
) -> Result<(Vec<bool>, f64, f64), ModelIoError> {
    if x.len() != net.input_dim() {
        return Err(ModelIoError::DimensionMismatch(
            "activation_pattern input".into(),
        ));
    }
    let mut cur = x.to_vec();
    let mut pattern = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut logit = 0.0;
    for layer in &net.layers {
        let mut next = layer.bias.clone();
        for (i, row) in layer.weights.iter().enumerate() {
            next[i] += row.iter().zip(&cur).map(|(w, v)| w * v).sum::<f64>();
        }
        match layer.activation {
            Activation::Relu => {
                for v in next.iter_mut() {
                    pattern.push(*v >= 0.0);
                    min_margin = min_margin.min(v.abs());
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Linear => {
                logit = next[0];
            }
        }
        cur = next;
    }
    Ok((pattern, logit, min_margin))
}
