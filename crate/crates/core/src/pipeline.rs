//! File-level pipeline stages. Each stage reads its declared inputs, writes
//! fixed-name artifacts into an output directory and returns a JSON summary.
//! `run_pipeline` is exactly the composition of the individual stages.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::{
    evaluate, train_logreg, train_mnb, tune_lambda, Dataset, LogRegConfig, LogRegModel, Metrics, MultinomialNb,
    TuneReport, LAMBDA_GRID,
};
use crate::error::{Error, Result};
use crate::features::{self, split_periods, FeatureContext};
use crate::graph::build_graph;
use crate::homes::infer_homes;
use crate::ingest::{parse_cdr_stream, IngestReport};
use crate::model::{format_timestamp, AntennaRegistry, CallRecord, EndemicZone, StudyWindow};
use crate::provenance::sha256_hex;
use crate::riskmap::{aggregate, filter_map, AggregateOptions, RiskMap, RiskParams};
use crate::synth::{generate, SynthConfig};

pub const MODEL_SCHEMA_VERSION: &str = "migration-model/v1";
pub const METRICS_SCHEMA_VERSION: &str = "migration-metrics/v1";

pub const CDR_FILE: &str = "cdr.csv";
pub const REGISTRY_FILE: &str = "antennas.csv";
pub const ZONE_FILE: &str = "zone.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const HOMES_FILE: &str = "homes.csv";
pub const GEOJSON_FILE: &str = "riskmap.geojson";
pub const STATS_FILE: &str = "antenna_stats.csv";
pub const STATS_META_FILE: &str = "antenna_stats.meta.json";
pub const DATASET_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "dataset.manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.json";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(sha256_hex(contents.as_bytes()))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub records: PathBuf,
    pub registry: PathBuf,
    pub zone: Option<PathBuf>,
}

/// Parsed inputs plus their SHA-256 digests.
pub struct Inputs {
    pub records: Vec<CallRecord>,
    pub ingest: IngestReport,
    pub registry: AntennaRegistry,
    pub zone: Option<EndemicZone>,
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn zone(&self) -> Result<&EndemicZone> {
        self.zone
            .as_ref()
            .ok_or_else(|| Error::Config("this stage needs an endemic zone file (--zone)".into()))
    }
}

pub fn load_inputs(paths: &InputPaths) -> Result<Inputs> {
    let mut digests = BTreeMap::new();
    let registry_bytes = read_bytes(&paths.registry)?;
    digests.insert("registry".to_string(), sha256_hex(&registry_bytes));
    let registry = AntennaRegistry::from_csv_reader(registry_bytes.as_slice())?;
    let zone = match &paths.zone {
        Some(p) => {
            let bytes = read_bytes(p)?;
            digests.insert("zone".to_string(), sha256_hex(&bytes));
            Some(EndemicZone::from_path(p, &registry)?)
        }
        None => None,
    };
    let record_bytes = read_bytes(&paths.records)?;
    digests.insert("records".to_string(), sha256_hex(&record_bytes));
    let (records, ingest) = parse_cdr_stream(BufReader::new(record_bytes.as_slice()), &registry)?;
    Ok(Inputs {
        records,
        ingest,
        registry,
        zone,
        digests,
    })
}

pub fn run_synth(config: &SynthConfig, window: &StudyWindow, out_dir: &Path) -> Result<Value> {
    let corpus = generate(config, window)?;
    let mut digests = BTreeMap::new();
    digests.insert(CDR_FILE, write_file(out_dir, CDR_FILE, &corpus.cdr_csv())?);
    digests.insert(
        REGISTRY_FILE,
        write_file(out_dir, REGISTRY_FILE, &corpus.registry_csv())?,
    );
    digests.insert(ZONE_FILE, write_file(out_dir, ZONE_FILE, &corpus.zone_csv())?);
    digests.insert(TRUTH_FILE, write_file(out_dir, TRUTH_FILE, &corpus.truth_json())?);
    Ok(json!({
        "stage": "synth",
        "config": config,
        "window": window,
        "records": corpus.records.len(),
        "users": corpus.truth.users.len(),
        "migrants": corpus.truth.migrants(),
        "artifacts": digests,
    }))
}

pub fn run_ingest(paths: &InputPaths, out_dir: &Path) -> Result<Value> {
    let inputs = load_inputs(paths)?;
    let doc = json!({ "report": inputs.ingest, "inputs": inputs.digests });
    let digest = write_file(out_dir, INGEST_REPORT_FILE, &pretty(&doc))?;
    Ok(json!({
        "stage": "ingest",
        "accepted": inputs.ingest.accepted,
        "rejected": inputs.ingest.rejected(),
        "artifacts": { INGEST_REPORT_FILE: digest },
    }))
}

pub fn run_graph(paths: &InputPaths, out_dir: &Path) -> Result<Value> {
    let inputs = load_inputs(paths)?;
    let g = build_graph(&inputs.records);
    let digest = write_file(out_dir, EDGES_FILE, &g.edge_list_csv())?;
    Ok(json!({
        "stage": "graph",
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "inputs": inputs.digests,
        "artifacts": { EDGES_FILE: digest },
    }))
}

pub fn run_homes(paths: &InputPaths, window: Option<Range<DateTime<Utc>>>, out_dir: &Path) -> Result<Value> {
    let inputs = load_inputs(paths)?;
    let range = window
        .as_ref()
        .map(|w| (format_timestamp(w.start), format_timestamp(w.end)));
    let homes = infer_homes(&inputs.records, window);
    let digest = write_file(out_dir, HOMES_FILE, &homes.to_csv_string())?;
    Ok(json!({
        "stage": "homes",
        "homes": homes.len(),
        "window": range,
        "inputs": inputs.digests,
        "artifacts": { HOMES_FILE: digest },
    }))
}

/// Full and filtered maps for the given inputs.
pub fn build_risk_maps(inputs: &Inputs, params: &RiskParams) -> Result<(RiskMap, RiskMap)> {
    let zone = inputs.zone()?;
    let homes = infer_homes(&inputs.records, None);
    let g = build_graph(&inputs.records);
    let options = AggregateOptions {
        count_zone_residents_as_vulnerable: params.count_zone_residents_as_vulnerable,
    };
    let stats = aggregate(&inputs.registry, &homes, &g, &inputs.records, zone, options);
    let mut metadata: BTreeMap<String, String> = inputs
        .digests
        .iter()
        .map(|(k, v)| (format!("sha256:{k}"), v.clone()))
        .collect();
    if let Some(span) = &inputs.ingest.time_span {
        metadata.insert("data_start".into(), format_timestamp(span.min));
        metadata.insert("data_end".into(), format_timestamp(span.max));
    }
    let full = RiskMap {
        stats: stats.clone(),
        params: params.clone(),
        zone: zone.name.clone(),
        filtered: false,
        metadata: metadata.clone(),
    };
    let filtered = RiskMap {
        stats: filter_map(&stats, params.beta, params.min_pop),
        filtered: true,
        ..full.clone()
    };
    Ok((full, filtered))
}

pub fn run_riskmap(paths: &InputPaths, params: &RiskParams, out_dir: &Path) -> Result<Value> {
    let inputs = load_inputs(paths)?;
    let (full, filtered) = build_risk_maps(&inputs, params)?;
    let geo = write_file(out_dir, GEOJSON_FILE, &filtered.to_geojson())?;
    let csv = write_file(out_dir, STATS_FILE, &full.to_csv())?;
    let meta = json!({
        "artifact": STATS_FILE,
        "sha256": csv,
        "parameters": params,
        "zone": full.zone,
        "metadata": full.metadata,
    });
    let meta_digest = write_file(out_dir, STATS_META_FILE, &pretty(&meta))?;
    Ok(json!({
        "stage": "riskmap",
        "parameters": params,
        "antennas": full.stats.len(),
        "antennas_plotted": filtered.stats.len(),
        "inputs": inputs.digests,
        "artifacts": { GEOJSON_FILE: geo, STATS_FILE: csv, STATS_META_FILE: meta_digest },
    }))
}

pub fn run_features(paths: &InputPaths, window: &StudyWindow, out_dir: &Path) -> Result<Value> {
    let inputs = load_inputs(paths)?;
    let zone = inputs.zone()?;
    let split = split_periods(&inputs.records, window);
    let graph_t1 = build_graph(&split.t1);
    let homes_t1 = infer_homes(&split.t1, None);
    let ctx = FeatureContext::new(&split.t1, &graph_t1, &homes_t1, zone, &inputs.registry);
    let labels = features::build_labels(&split.t0, zone);
    let table = features::join(ctx.all_features(), &labels);

    let manifest = features::DatasetManifest {
        schema_version: features::SCHEMA_VERSION.to_string(),
        columns: features::feature_names(),
        count_columns: features::count_columns()
            .into_iter()
            .map(|j| features::feature_names()[j].clone())
            .collect(),
        window: *window,
        zone: zone.name.clone(),
        zone_sha256: zone.digest(),
        join: table.report.clone(),
        records_dropped_outside_windows: split.dropped,
        inputs: inputs.digests.clone(),
    };
    let data_digest = write_file(out_dir, DATASET_FILE, &table.to_csv())?;
    let manifest_digest = write_file(out_dir, MANIFEST_FILE, &pretty(&manifest))?;
    Ok(json!({
        "stage": "features",
        "window": window,
        "t0_records": split.t0.len(),
        "t1_records": split.t1.len(),
        "dropped": split.dropped,
        "join": table.report,
        "inputs": inputs.digests,
        "artifacts": { DATASET_FILE: data_digest, MANIFEST_FILE: manifest_digest },
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub lambda: f64,
    pub seed: u64,
    pub train_fraction: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    pub tune: bool,
    pub validation_fraction: f64,
    pub nb_alpha: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lambda: 0.01,
            seed: 42,
            train_fraction: 0.7,
            tolerance: 1e-6,
            max_iters: 10_000,
            tune: false,
            validation_fraction: 0.05,
            nb_alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub column_mask: Vec<String>,
    pub model: MultinomialNb<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    pub dataset_sha256: String,
    pub options: TrainOptions,
    pub train_rows: usize,
    pub tuning: Option<TuneReport<f64>>,
    pub logreg: LogRegModel<f64>,
    pub baseline: BaselineModel,
}

fn load_split_dataset(dataset_path: &Path, options: &TrainOptions) -> Result<(Dataset<f64>, String)> {
    let bytes = read_bytes(dataset_path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Dataset("dataset is not UTF-8".into()))?;
    let digest = sha256_hex(text.as_bytes());
    let ds = Dataset::<f64>::from_csv(&text)?.split(options.train_fraction, options.seed)?;
    Ok((ds, digest))
}

fn column_indices(ds: &Dataset<f64>, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            ds.columns
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::Dataset(format!("dataset lacks count column {n}")))
        })
        .collect()
}

pub fn train_models(
    ds: &Dataset<f64>,
    options: &TrainOptions,
) -> Result<(LogRegModel<f64>, BaselineModel, Option<TuneReport<f64>>)> {
    let train = ds.train();
    let base = LogRegConfig {
        lambda: options.lambda,
        tolerance: options.tolerance,
        max_iters: options.max_iters,
    };
    let tuning = if options.tune {
        Some(tune_lambda(
            &train,
            &LAMBDA_GRID,
            options.validation_fraction,
            options.seed,
            &base,
        )?)
    } else {
        None
    };
    let config = LogRegConfig {
        lambda: tuning.as_ref().map_or(options.lambda, |t| t.chosen_lambda),
        ..base
    };
    let logreg = train_logreg(&train.columns, &train.rows, &train.labels, &config)?;

    let mask: Vec<String> = features::count_columns()
        .into_iter()
        .map(|j| features::feature_names()[j].clone())
        .collect();
    let counts = train.select_columns(&column_indices(&train, &mask)?);
    let nb = train_mnb(&counts.columns, &counts.rows, &counts.labels, options.nb_alpha)?;
    Ok((
        logreg,
        BaselineModel {
            column_mask: mask,
            model: nb,
        },
        tuning,
    ))
}

pub fn run_train(dataset_path: &Path, options: &TrainOptions, out_dir: &Path) -> Result<Value> {
    let (ds, dataset_sha256) = load_split_dataset(dataset_path, options)?;
    let (logreg, baseline, tuning) = train_models(&ds, options)?;
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION.to_string(),
        dataset_sha256,
        options: options.clone(),
        train_rows: ds.train().len(),
        tuning,
        logreg,
        baseline,
    };
    let digest = write_file(out_dir, MODEL_FILE, &pretty(&file))?;
    Ok(json!({
        "stage": "train",
        "lambda": file.logreg.lambda,
        "train_rows": file.train_rows,
        "convergence": file.logreg.report,
        "artifacts": { MODEL_FILE: digest },
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema_version: String,
    pub model: String,
    #[serde(flatten)]
    pub metrics: Metrics<f64>,
    pub test_rows: usize,
    pub baseline: BaselineMetrics,
    pub dataset_sha256: String,
    pub model_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineMetrics {
    pub model: String,
    #[serde(flatten)]
    pub metrics: Metrics<f64>,
}

pub fn evaluate_models(ds: &Dataset<f64>, model: &ModelFile) -> Result<(Metrics<f64>, Metrics<f64>)> {
    let test = ds.test();
    let logreg = evaluate(&model.logreg, &test.rows, &test.labels)?;
    let counts = test.select_columns(&column_indices(&test, &model.baseline.column_mask)?);
    let nb = evaluate(&model.baseline.model, &counts.rows, &counts.labels)?;
    Ok((logreg, nb))
}

pub fn run_evaluate(dataset_path: &Path, model_path: &Path, out_dir: &Path) -> Result<Value> {
    let model_bytes = read_bytes(model_path)?;
    let model: ModelFile = serde_json::from_slice(&model_bytes)?;
    if model.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::Model(format!(
            "unsupported model schema {}",
            model.schema_version
        )));
    }
    let (ds, dataset_sha256) = load_split_dataset(dataset_path, &model.options)?;
    if dataset_sha256 != model.dataset_sha256 {
        log::warn!("evaluating on a dataset different from the training dataset");
    }
    let (logreg, nb) = evaluate_models(&ds, &model)?;
    let file = MetricsFile {
        schema_version: METRICS_SCHEMA_VERSION.to_string(),
        model: "logistic_regression".into(),
        metrics: logreg,
        test_rows: ds.test().len(),
        baseline: BaselineMetrics {
            model: "multinomial_naive_bayes".into(),
            metrics: nb,
        },
        dataset_sha256,
        model_sha256: sha256_hex(&model_bytes),
    };
    let digest = write_file(out_dir, METRICS_FILE, &pretty(&file))?;
    Ok(json!({
        "stage": "evaluate",
        "f1": file.metrics.f1,
        "accuracy": file.metrics.accuracy,
        "auc": file.metrics.auc,
        "precision": file.metrics.precision,
        "recall": file.metrics.recall,
        "baseline_auc": file.baseline.metrics.auc,
        "baseline_f1": file.baseline.metrics.f1,
        "artifacts": { METRICS_FILE: digest },
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub window: StudyWindow,
    pub risk: RiskParams,
    pub train: TrainOptions,
    pub out_dir: PathBuf,
}

/// Ingest → risk map → features → train → evaluate, then `report.json`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Value> {
    let out = &config.out_dir;
    let ingest = run_ingest(&config.inputs, out)?;
    let riskmap = run_riskmap(&config.inputs, &config.risk, out)?;
    let features = run_features(&config.inputs, &config.window, out)?;
    let dataset = out.join(DATASET_FILE);
    let train = run_train(&dataset, &config.train, out)?;
    let evaluate = run_evaluate(&dataset, &out.join(MODEL_FILE), out)?;
    let report = json!({
        "parameters": config,
        "stages": {
            "ingest": ingest,
            "riskmap": riskmap,
            "features": features,
            "train": train,
            "evaluate": evaluate,
        },
    });
    let digest = write_file(out, REPORT_FILE, &pretty(&report))?;
    Ok(json!({
        "stage": "pipeline",
        "auc": report["stages"]["evaluate"]["auc"],
        "f1": report["stages"]["evaluate"]["f1"],
        "artifacts": { REPORT_FILE: digest },
    }))
}
