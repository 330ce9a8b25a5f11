//! Fairness metrics over acceptance regions — weighted symmetric difference,
//! volumetric symmetric difference, net preference — plus rank-statistic AUC
//! and the report assembling all of them for one model.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::density::{
    fit_density_model, integrate, DensityError, DensityModel, Grid, DEFAULT_MAX_CELLS,
};
use crate::geometry::{GeometryError, EPS_DEDUP, EPS_DIM, EPS_FEAS};
use crate::model_io::{Dataset, FeatureSchema, FeedForwardNetwork, ModelIoError, Split};
use crate::reach::{
    acceptance_region, enumerate_categorical, region_intersection, AcceptanceRegion, ReachConfig,
    ReachError,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AUC needs both labels present")]
    SingleClassAuc,
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
}

/// Which Preference definition to use: `Formula` integrates each class over
/// its own acceptance region; `Text` integrates both densities over the first
/// class's region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceForm {
    #[default]
    Formula,
    Text,
}

/// Acceptance regions of both protected classes plus their intersection,
/// computed once and shared by all the metrics.
pub struct RegionAnalysis {
    pub regions: [AcceptanceRegion; 2],
    pub intersection: AcceptanceRegion,
}

impl RegionAnalysis {
    pub fn compute(
        net: &FeedForwardNetwork,
        schema: &FeatureSchema,
        config: &ReachConfig,
    ) -> Result<Self, MetricsError> {
        let [c1, c2] = &schema.protected_values;
        let r1 = acceptance_region(net, schema, c1, 1, config)?;
        let r2 = acceptance_region(net, schema, c2, 1, config)?;
        let intersection = region_intersection(&r1, &r2)?;
        Ok(RegionAnalysis {
            regions: [r1, r2],
            intersection,
        })
    }
}

fn region_volume(region: &AcceptanceRegion) -> Result<Vec<f64>, MetricsError> {
    region
        .per_assignment
        .iter()
        .map(|(_, polys)| {
            let mut v = 0.0;
            for p in polys {
                v += p.volume()?;
            }
            Ok(v)
        })
        .collect()
}

/// Advantage(C_first, C_other) = ∫_{ρ(C_first)} P(X|C_first)
/// − ∫_{ρ(C_first)∩ρ(C_other)} P(X|C_other). Positive when the first class's
/// exclusive share of its acceptance region outweighs what the other class
/// gains on the overlap.
pub fn advantage(
    analysis: &RegionAnalysis,
    density: &DensityModel,
    first: usize,
) -> Result<f64, MetricsError> {
    assert!(first < 2);
    let c1 = &analysis.regions[first].class_value;
    let c2 = &analysis.regions[1 - first].class_value;
    let own = integrate(density, c1, &analysis.regions[first])?.value;
    let overlap = integrate(density, c2, &analysis.intersection)?.value;
    Ok(own - overlap)
}

/// WSD = Advantage(C1, C2) + Advantage(C2, C1).
pub fn wsd(analysis: &RegionAnalysis, density: &DensityModel) -> Result<f64, MetricsError> {
    Ok(advantage(analysis, density, 0)? + advantage(analysis, density, 1)?)
}

/// Density-free symmetric difference of the two acceptance regions:
/// per assignment, [vol(ρ1) − vol(ρ1∩ρ2)] + [vol(ρ2) − vol(ρ1∩ρ2)],
/// averaged over assignments with uniform weight.
pub fn vsd(analysis: &RegionAnalysis) -> Result<f64, MetricsError> {
    let v1 = region_volume(&analysis.regions[0])?;
    let v2 = region_volume(&analysis.regions[1])?;
    let vi = region_volume(&analysis.intersection)?;
    let n = v1.len();
    let total: f64 = (0..n)
        .map(|a| (v1[a] - vi[a]).max(0.0) + (v2[a] - vi[a]).max(0.0))
        .sum();
    Ok(total / n as f64)
}

/// Preference(C_first, C_other); see [`PreferenceForm`] for the two variants.
pub fn preference(
    analysis: &RegionAnalysis,
    density: &DensityModel,
    first: usize,
    form: PreferenceForm,
) -> Result<f64, MetricsError> {
    assert!(first < 2);
    let c1 = &analysis.regions[first].class_value;
    let c2 = &analysis.regions[1 - first].class_value;
    let own = integrate(density, c1, &analysis.regions[first])?.value;
    let other = match form {
        PreferenceForm::Formula => integrate(density, c2, &analysis.regions[1 - first])?.value,
        PreferenceForm::Text => integrate(density, c2, &analysis.regions[first])?.value,
    };
    Ok(own - other)
}

/// NP = max{|Preference(C1, C2)|, |Preference(C2, C1)|}.
pub fn net_preference(
    analysis: &RegionAnalysis,
    density: &DensityModel,
    form: PreferenceForm,
) -> Result<f64, MetricsError> {
    let p12 = preference(analysis, density, 0, form)?;
    let p21 = preference(analysis, density, 1, form)?;
    Ok(p12.abs().max(p21.abs()))
}

/// Mann–Whitney AUC with tied scores counted 0.5.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks over tie groups (1-based).
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            rank[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Monte Carlo estimate of WSD via the flip test. WSD decomposes into
/// P_{x~P(·|C1)}[accepted as C1, rejected as C2] + the mirrored term, so each
/// directional advantage is estimated by sampling a class's density and
/// flipping the protected attribute.
pub fn mc_wsd(
    density: &DensityModel,
    net: &FeedForwardNetwork,
    schema: &FeatureSchema,
    samples: u64,
    seed: u64,
) -> Result<crate::density::ProbabilityEstimate, MetricsError> {
    use crate::density::{ClassSampler, EstimateMethod, ProbabilityEstimate};
    use rand::SeedableRng;
    let mut value = 0.0;
    let mut var = 0.0;
    for (k, class) in schema.protected_values.iter().enumerate() {
        let other = &schema.protected_values[1 - k];
        let sampler = ClassSampler::new(density, class)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut hits = 0u64;
        for _ in 0..samples {
            let (assignment, coords) = sampler.sample(&mut rng);
            let own = schema.embed(&coords, class, assignment)?;
            let flipped = schema.embed(&coords, other, assignment)?;
            if net.decide(&own)? == 1 && net.decide(&flipped)? == 0 {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        value += p;
        var += p * (1.0 - p) / samples as f64;
    }
    Ok(ProbabilityEstimate {
        value,
        method: EstimateMethod::MonteCarlo,
        stderr: Some(var.sqrt()),
        samples: Some(samples),
        seed: Some(seed),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportTolerances {
    pub eps_feas: f64,
    pub eps_dim: f64,
    pub eps_dedup: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportTimings {
    pub regions_ms: u64,
    pub density_ms: u64,
    pub metrics_ms: u64,
    pub total_ms: u64,
}

/// All fairness metrics for one model, with enough provenance to reproduce
/// them: hashes of the model and density artifacts, the grid, the tolerance
/// constants and wall-clock timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    pub schema_version: u32,
    pub classes: [String; 2],
    pub wsd: f64,
    pub vsd: f64,
    pub np: f64,
    pub advantage_12: f64,
    pub advantage_21: f64,
    pub preference_12: f64,
    pub preference_21: f64,
    pub auc: f64,
    pub preference_form: PreferenceForm,
    pub model_hash: String,
    pub density_hash: String,
    pub grid: Grid,
    pub assignments: usize,
    pub dataset_seed: u64,
    pub tolerances: ReportTolerances,
    pub timings: ReportTimings,
    /// Training strategy of the verified model when known (copied from the
    /// model document's training block); used by the summary table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    /// Seed of the trial that produced the model, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ReportConfig {
    pub grid_bins: usize,
    pub max_cells: u128,
    pub preference_form: PreferenceForm,
    pub reach: ReachConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            grid_bins: 10,
            max_cells: DEFAULT_MAX_CELLS,
            preference_form: PreferenceForm::Formula,
            reach: ReachConfig::default(),
        }
    }
}

pub fn density_hash(model: &DensityModel) -> String {
    let json = serde_json::to_string(model).expect("density model serializes");
    let mut h = Sha256::new();
    h.update(json.as_bytes());
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Full pipeline for one model: acceptance regions and their intersection,
/// train-split histogram densities, all fairness metrics, and AUC of the raw
/// logit on the test split.
pub fn build_report(
    net: &FeedForwardNetwork,
    schema: &FeatureSchema,
    dataset: &Dataset,
    config: &ReportConfig,
) -> Result<FairnessReport, MetricsError> {
    let start = Instant::now();
    let grid = Grid::new(config.grid_bins, schema.continuous_dim(), config.max_cells)?;
    let assignments = enumerate_categorical(schema, &config.reach)?;

    let t0 = Instant::now();
    let analysis = RegionAnalysis::compute(net, schema, &config.reach)?;
    let regions_ms = t0.elapsed().as_millis() as u64;

    let t0 = Instant::now();
    let density = fit_density_model(dataset, grid.clone(), assignments.clone())?;
    let density_ms = t0.elapsed().as_millis() as u64;

    let t0 = Instant::now();
    let advantage_12 = advantage(&analysis, &density, 0)?;
    let advantage_21 = advantage(&analysis, &density, 1)?;
    let preference_12 = preference(&analysis, &density, 0, config.preference_form)?;
    let preference_21 = preference(&analysis, &density, 1, config.preference_form)?;
    let vsd_value = vsd(&analysis)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for row in dataset.split_rows(Split::Test) {
        scores.push(net.forward(&row.x)?);
        labels.push(row.label);
    }
    let auc_value = auc(&scores, &labels)?;
    let metrics_ms = t0.elapsed().as_millis() as u64;

    let model_doc = crate::model_io::ModelDocument {
        schema: schema.clone(),
        layers: net.layers.clone(),
        training: None,
    };
    Ok(FairnessReport {
        schema_version: 1,
        classes: schema.protected_values.clone(),
        wsd: advantage_12 + advantage_21,
        vsd: vsd_value,
        np: preference_12.abs().max(preference_21.abs()),
        advantage_12,
        advantage_21,
        preference_12,
        preference_21,
        auc: auc_value,
        preference_form: config.preference_form,
        model_hash: crate::model_io::model_hash(&model_doc),
        density_hash: density_hash(&density),
        grid,
        assignments: assignments.len(),
        dataset_seed: dataset.seed,
        tolerances: ReportTolerances {
            eps_feas: EPS_FEAS,
            eps_dim: EPS_DIM,
            eps_dedup: EPS_DEDUP,
        },
        timings: ReportTimings {
            regions_ms,
            density_ms,
            metrics_ms,
            total_ms: start.elapsed().as_millis() as u64,
        },
        strategy: None,
        trial_seed: None,
    })
}

/// Uniform unit-box histogram density for both classes on a fresh grid; used
/// by hand-constructed examples and tests.
pub fn uniform_density(
    schema: &FeatureSchema,
    bins: usize,
    assignments: &[crate::model_io::CategoricalAssignment],
) -> Result<DensityModel, MetricsError> {
    let dims = schema.continuous_dim();
    let grid = Grid::new(bins, dims, DEFAULT_MAX_CELLS)?;
    let n_assign = assignments.len();
    let mut cells = BTreeMap::new();
    fill_cells(&mut cells, &mut Vec::new(), bins, dims);
    let slice = crate::density::ClassDensity {
        mass: vec![1.0 / n_assign as f64; n_assign],
        cells: vec![cells; n_assign],
    };
    let mut classes = BTreeMap::new();
    for c in &schema.protected_values {
        classes.insert(c.clone(), slice.clone());
    }
    Ok(DensityModel {
        grid,
        assignments: assignments.to_vec(),
        classes,
    })
}

fn fill_cells(out: &mut BTreeMap<Vec<usize>, f64>, prefix: &mut Vec<usize>, bins: usize, dims: usize) {
    if prefix.len() == dims {
        out.insert(prefix.clone(), 1.0);
        return;
    }
    for i in 0..bins {
        prefix.push(i);
        fill_cells(out, prefix, bins, dims);
        prefix.pop();
    }
}
