//! Command-line front end: dataset ingestion, the four training strategies,
//! region dumps, exact fairness verification, the Monte Carlo oracle, and the
//! strategy × metric summary table.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible problem size
//! (grid/branch/assignment ceilings), 4 numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use polyfair::density::{fit_density_model, mc_probability, DensityError, Grid, DEFAULT_MAX_CELLS};
use polyfair::fairtrain::{
    run_strategy, training_block, Arch, AugmentLabel, Hyperparams, Strategy, TrainError,
};
use polyfair::geometry::GeometryError;
use polyfair::metrics::{
    build_report, mc_wsd, FairnessReport, MetricsError, PreferenceForm, ReportConfig,
};
use polyfair::model_io::{
    ingest_csv, load_model, save_model, Dataset, FeatureSchema, ModelDocument, ModelIoError,
};
use polyfair::geometry::HPolytope;
use polyfair::reach::{
    enumerate_categorical, enumerate_regions, InputEmbedding, ReachConfig, ReachError,
};

const TOOL_NAME: &str = "polyfair";
const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = TOOL_NAME, version, about = "Provable fairness analysis for feed-forward ReLU classifiers")]
struct Cli {
    /// Worker threads for parallel region enumeration (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV into a normalized, split dataset document.
    Ingest(IngestArgs),
    /// Train a classifier with one of the four strategies.
    Train(TrainArgs),
    /// Dump the enumerated input-space regions of a model.
    Regions(RegionsArgs),
    /// Compute the exact fairness report for a model.
    Verify(VerifyArgs),
    /// Monte Carlo cross-check of acceptance probabilities and WSD.
    Oracle(OracleArgs),
    /// Aggregate fairness reports into a strategy × metric table.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CSV column holding the binary label.
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Seed for the 70/15/15 shuffle split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Baseline)]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value_t = ArchArg::Small)]
    arch: ArchArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label for flipped twins under the augment strategy.
    #[arg(long, value_enum, default_value_t = AugmentLabelArg::Model)]
    augment_label: AugmentLabelArg,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
}

#[derive(Args, Serialize)]
struct RegionsArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory; one dump file per (class value, assignment).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    branch_ceiling: usize,
    #[arg(long, default_value_t = 4096)]
    assignment_ceiling: usize,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    grid_bins: usize,
    #[arg(long, value_enum, default_value_t = PreferenceFormArg::Formula)]
    preference_form: PreferenceFormArg,
    #[arg(long, default_value_t = 1_000_000)]
    branch_ceiling: usize,
    #[arg(long, default_value_t = 4096)]
    assignment_ceiling: usize,
}

#[derive(Args, Serialize)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: u64,
    #[arg(long, default_value_t = 10)]
    grid_bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4096)]
    assignment_ceiling: usize,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Output prefix; writes `<out>.txt` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Fairness report files produced by `verify`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StrategyArg {
    Baseline,
    Permute,
    Remove,
    Augment,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Baseline => Strategy::Baseline,
            StrategyArg::Permute => Strategy::Permute,
            StrategyArg::Remove => Strategy::Remove,
            StrategyArg::Augment => Strategy::Augment,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ArchArg {
    Small,
    Medium,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Arch {
        match a {
            ArchArg::Small => Arch::Small,
            ArchArg::Medium => Arch::Medium,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AugmentLabelArg {
    Model,
    GroundTruth,
}

impl From<AugmentLabelArg> for AugmentLabel {
    fn from(a: AugmentLabelArg) -> AugmentLabel {
        match a {
            AugmentLabelArg::Model => AugmentLabel::Model,
            AugmentLabelArg::GroundTruth => AugmentLabel::GroundTruth,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PreferenceFormArg {
    Formula,
    Text,
}

impl From<PreferenceFormArg> for PreferenceForm {
    fn from(p: PreferenceFormArg) -> PreferenceForm {
        match p {
            PreferenceFormArg::Formula => PreferenceForm::Formula,
            PreferenceFormArg::Text => PreferenceForm::Text,
        }
    }
}

/// CLI-level error carrying its exit code.
enum CliError {
    Config(String),
    Infeasible(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json error: {e}"))
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::NumericalFailure(_) | GeometryError::Unbounded => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ReachError> for CliError {
    fn from(e: ReachError) -> Self {
        match e {
            ReachError::BranchCeiling { .. } | ReachError::AssignmentCeiling { .. } => {
                CliError::Infeasible(e.to_string())
            }
            ReachError::Geometry(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::TooManyCells { .. } => CliError::Infeasible(e.to_string()),
            DensityError::Geometry(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Reach(r) => r.into(),
            MetricsError::Density(d) => d.into(),
            MetricsError::Geometry(g) => g.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Numerical(e.to_string()),
            TrainError::Metrics(m) => m.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Provenance block embedded in every emitted document: tool version, the
/// fully resolved invocation config, and SHA-256 hashes of each input file.
fn provenance<C: Serialize>(config: &C, inputs: &[&Path]) -> Result<Value, CliError> {
    let mut hashes = BTreeMap::new();
    for p in inputs {
        hashes.insert(p.display().to_string(), sha256_file(p)?);
    }
    Ok(json!({
        "tool": { "name": TOOL_NAME, "version": TOOL_VERSION },
        "config": serde_json::to_value(config)?,
        "input_hashes": hashes,
    }))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Accepts either a raw dataset document or an `ingest` envelope.
fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let v = read_json(path)?;
    let inner = v.get("dataset").cloned().unwrap_or(v);
    let dataset: Dataset = serde_json::from_value(inner)?;
    dataset.schema.validate()?;
    Ok(dataset)
}

fn read_model(path: &Path) -> Result<(ModelDocument, FeatureSchema), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let (_, schema) = load_model(&text)?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    Ok((doc, schema))
}

fn write_pretty(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let schema_json = std::fs::read_to_string(&args.schema)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.schema.display())))?;
    let schema: FeatureSchema = serde_json::from_str(&schema_json)?;
    schema.validate()?;
    let dataset = ingest_csv(&args.csv, &schema, &args.label_column, args.seed)?;
    let mut doc = provenance(args, &[&args.schema, &args.csv])?;
    doc["dataset"] = serde_json::to_value(&dataset)?;
    write_pretty(&args.out, &doc)?;
    println!(
        "ingested {} rows ({} dropped, {} out-of-range cells) -> {}",
        dataset.rows.len(),
        dataset.dropped_rows,
        dataset.out_of_range_cells,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let dataset = read_dataset(&args.dataset)?;
    let hyper = Hyperparams {
        arch: args.arch.into(),
        seed: args.seed,
        strategy: args.strategy.into(),
        augment_label: args.augment_label.into(),
        epochs: args.epochs,
        ..Hyperparams::default()
    };
    let (net, trace) = run_strategy(&dataset, &hyper)?;
    let mut training = training_block(&hyper, &trace);
    let prov = provenance(args, &[&args.dataset])?;
    for (k, v) in prov.as_object().unwrap() {
        training[k] = v.clone();
    }
    let doc = ModelDocument {
        schema: dataset.schema.clone(),
        layers: net.layers,
        training: Some(training),
    };
    let json = save_model(&doc)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&args.out, &json)?;
    let last = trace.rounds.last().unwrap();
    println!(
        "trained ({} rounds, final train size {}, final flips {}, val AUC {}) -> {}",
        trace.rounds.len(),
        last.train_size,
        last.flips,
        last.val_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
        args.out.display()
    );
    Ok(())
}

fn cmd_regions(args: &RegionsArgs) -> Result<(), CliError> {
    let (doc, schema) = read_model(&args.model)?;
    let net = doc.network();
    net.validate()?;
    let config = ReachConfig {
        branch_ceiling: args.branch_ceiling,
        assignment_ceiling: args.assignment_ceiling,
    };
    let assignments = enumerate_categorical(&schema, &config)?;
    let unit = HPolytope::unit_box(schema.continuous_dim());
    std::fs::create_dir_all(&args.out)?;
    let mut files = 0;
    for class in &schema.protected_values {
        for (ai, assignment) in assignments.iter().enumerate() {
            let embedding = InputEmbedding::from_schema(&schema, class, assignment)?;
            let regions = enumerate_regions(&net, &unit, &embedding, &config)?;
            let assignment_map: BTreeMap<&str, &str> = assignment
                .0
                .iter()
                .map(|(f, v)| (f.as_str(), v.as_str()))
                .collect();
            // HPolytope serializes as {"C": ..., "d": ...}; extend each with
            // the label and assignment to get the dump element format.
            let dump: Vec<Value> = regions
                .iter()
                .map(|r| -> Result<Value, CliError> {
                    let mut v = serde_json::to_value(&r.polytope)?;
                    v["label"] = json!(r.label);
                    v["categorical_assignment"] = json!(assignment_map);
                    Ok(v)
                })
                .collect::<Result<_, _>>()?;
            let mut out = provenance(args, &[&args.model])?;
            out["class_value"] = json!(class);
            out["assignment"] = json!(assignment_map);
            out["regions"] = json!(dump);
            let path = args.out.join(format!("regions_{class}_{ai}.json"));
            write_pretty(&path, &out)?;
            files += 1;
        }
    }
    println!("wrote {files} region dump files to {}", args.out.display());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let (doc, schema) = read_model(&args.model)?;
    let net = doc.network();
    net.validate()?;
    let dataset = read_dataset(&args.dataset)?;
    if dataset.schema != schema {
        return Err(CliError::Config(
            "model schema and dataset schema differ".into(),
        ));
    }
    let config = ReportConfig {
        grid_bins: args.grid_bins,
        max_cells: DEFAULT_MAX_CELLS,
        preference_form: args.preference_form.into(),
        reach: ReachConfig {
            branch_ceiling: args.branch_ceiling,
            assignment_ceiling: args.assignment_ceiling,
        },
    };
    let mut report = build_report(&net, &schema, &dataset, &config)?;
    if let Some(training) = &doc.training {
        report.strategy = training
            .pointer("/hyperparams/strategy")
            .and_then(|v| v.as_str())
            .map(str::to_string);
        report.trial_seed = training.pointer("/hyperparams/seed").and_then(Value::as_u64);
    }
    let mut out = provenance(args, &[&args.model, &args.dataset])?;
    out["report"] = serde_json::to_value(&report)?;
    write_pretty(&args.out, &out)?;
    println!(
        "verify: wsd={:.6} vsd={:.6} np={:.6} auc={:.4} -> {}",
        report.wsd,
        report.vsd,
        report.np,
        report.auc,
        args.out.display()
    );
    Ok(())
}

fn cmd_oracle(args: &OracleArgs) -> Result<(), CliError> {
    let (doc, schema) = read_model(&args.model)?;
    let net = doc.network();
    net.validate()?;
    let dataset = read_dataset(&args.dataset)?;
    if dataset.schema != schema {
        return Err(CliError::Config(
            "model schema and dataset schema differ".into(),
        ));
    }
    let grid = Grid::new(args.grid_bins, schema.continuous_dim(), DEFAULT_MAX_CELLS)?;
    let reach = ReachConfig {
        assignment_ceiling: args.assignment_ceiling,
        ..ReachConfig::default()
    };
    let assignments = enumerate_categorical(&schema, &reach)?;
    let density = fit_density_model(&dataset, grid, assignments)?;
    let mut acceptance = BTreeMap::new();
    for (k, class) in schema.protected_values.iter().enumerate() {
        let est = mc_probability(
            &density,
            class,
            &net,
            &schema,
            1,
            args.mc_samples,
            args.seed.wrapping_add(k as u64),
        )?;
        acceptance.insert(class.clone(), est);
    }
    let wsd_est = mc_wsd(&density, &net, &schema, args.mc_samples, args.seed)?;
    let mut out = provenance(args, &[&args.model, &args.dataset])?;
    out["acceptance"] = serde_json::to_value(&acceptance)?;
    out["wsd_flip"] = serde_json::to_value(&wsd_est)?;
    write_pretty(&args.out, &out)?;
    println!(
        "oracle: wsd≈{:.6}±{:.6} ({} samples) -> {}",
        wsd_est.value,
        wsd_est.stderr.unwrap_or(0.0),
        args.mc_samples,
        args.out.display()
    );
    Ok(())
}

fn read_report(path: &Path) -> Result<FairnessReport, CliError> {
    let v = read_json(path)?;
    let inner = v.get("report").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let mut by_strategy: BTreeMap<String, Vec<FairnessReport>> = BTreeMap::new();
    for path in &args.reports {
        let r = read_report(path)?;
        let key = r.strategy.clone().unwrap_or_else(|| "unknown".into());
        by_strategy.entry(key).or_default().push(r);
    }
    let metric = |r: &FairnessReport, m: usize| match m {
        0 => r.auc,
        1 => r.wsd,
        2 => r.vsd,
        _ => r.np,
    };
    let avg: BTreeMap<&String, [f64; 4]> = by_strategy
        .iter()
        .map(|(s, rs)| {
            let mut a = [0.0; 4];
            for r in rs {
                for (m, slot) in a.iter_mut().enumerate() {
                    *slot += metric(r, m);
                }
            }
            for slot in &mut a {
                *slot /= rs.len() as f64;
            }
            (s, a)
        })
        .collect();
    // Best strategy per metric: highest AUC, lowest WSD/VSD/NP.
    let best: Vec<Option<&String>> = (0..4)
        .map(|m| {
            avg.iter()
                .min_by(|a, b| {
                    let (x, y) = (a.1[m], b.1[m]);
                    if m == 0 { y.total_cmp(&x) } else { x.total_cmp(&y) }
                })
                .map(|(s, _)| *s)
        })
        .collect();

    let mut text = String::new();
    let mut csv = String::from("strategy,trial,auc,wsd,vsd,np\n");
    text.push_str(&format!(
        "{:<12} {:>8} {:>10} {:>10} {:>10} {:>10}\n",
        "strategy", "trial", "AUC", "WSD", "VSD", "NP"
    ));
    for (s, rs) in &by_strategy {
        for r in rs {
            let trial = r.trial_seed.map_or("-".into(), |t| t.to_string());
            text.push_str(&format!(
                "{s:<12} {trial:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                r.auc, r.wsd, r.vsd, r.np
            ));
            csv.push_str(&format!(
                "{s},{trial},{},{},{},{}\n",
                r.auc, r.wsd, r.vsd, r.np
            ));
        }
        let a = avg[s];
        let cell = |m: usize| {
            // The per-metric best average is starred, mirroring the usual
            // bold-best table convention in plain text.
            if best[m] == Some(s) {
                format!("*{:.4}*", a[m])
            } else {
                format!("{:.4}", a[m])
            }
        };
        text.push_str(&format!(
            "{:<12} {:>8} {:>10} {:>10} {:>10} {:>10}\n",
            format!("{s} (avg)"),
            "-",
            cell(0),
            cell(1),
            cell(2),
            cell(3)
        ));
        csv.push_str(&format!(
            "{s},avg,{},{},{},{}\n",
            a[0], a[1], a[2], a[3]
        ));
    }
    print!("{text}");
    let txt_path = args.out.with_extension("txt");
    let csv_path = args.out.with_extension("csv");
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&txt_path, &text)?;
    std::fs::write(&csv_path, &csv)?;
    println!("wrote {} and {}", txt_path.display(), csv_path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        // Output is deterministic regardless of pool size; ignore the error
        // if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Regions(a) => cmd_regions(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
