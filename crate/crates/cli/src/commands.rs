use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use gaitrisk_core::classic::{InputRegime, ModelEnvelope};
use gaitrisk_core::dataset::{class_filter, load_dataset, save_dataset, Dataset, Task};
use gaitrisk_core::eval::{
    fit_fold_model, run_experiment, split_by_subject_stratified, ExperimentData, ExperimentReport, FittedFoldModel, Fold,
    FoldInputs, ModelChoice, StanceScaler,
};
use gaitrisk_core::explain::{
    gradcam, mean_baseline, pdp, quantile_grid, saliency, shapley_ranking, shapley_time_map, ExplanationMap, SmoothGradConfig,
};
use gaitrisk_core::features::{feature_matrix, ScalerParams};
use gaitrisk_core::gait::{detect_events_with, segment_stances, spatiotemporal, SpatioTemporalSummary, CHANNELS, STANCE_SAMPLES};
use gaitrisk_core::numfmt::fmt9;
use gaitrisk_core::pipeline::{process_records, ProcessedRecord};
use gaitrisk_core::seed::{derive_seed, sha256_hex};
use gaitrisk_core::synth::synth as generate;
use gaitrisk_deepnet::{DeepModel, NetworkEnvelope};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::rundir::RunDir;

fn dataset(cfg: &RunConfig, run: &mut RunDir) -> Result<Dataset> {
    match &cfg.manifest {
        Some(m) => {
            run.add_dataset_inputs(m)?;
            Ok(load_dataset(m)?)
        }
        None => {
            let spec = cfg.synth_spec();
            spec.validate()?;
            log::info!("no manifest given; generating a synthetic cohort with seed {}", spec.seed);
            Ok(generate(&spec)?.0)
        }
    }
}

fn processed(cfg: &RunConfig, run: &mut RunDir) -> Result<Vec<ProcessedRecord>> {
    let ds = dataset(cfg, run)?;
    Ok(process_records(&ds.records, &cfg.preprocess)?)
}

pub fn synth(cfg: &RunConfig, no_effects: bool) -> Result<()> {
    let mut run = RunDir::create("synth", cfg)?;
    let mut spec = cfg.synth_spec();
    if no_effects {
        spec = spec.without_effects();
    }
    spec.validate()?;
    let (ds, sidecar) = generate(&spec)?;
    let manifest = save_dataset(&ds, &run.root().join("data"))?;
    let mut files = vec!["data/manifest.json".to_string(), "data/subjects.csv".to_string()];
    let text = std::fs::read_to_string(&manifest)?;
    let m: gaitrisk_core::dataset::Manifest = serde_json::from_str(&text).map_err(|e| CliError::data(e.to_string()))?;
    for r in &m.records {
        files.push(format!("data/{}", r.angles_csv));
        files.extend(r.events_csv.as_ref().map(|p| format!("data/{p}")));
    }
    for f in &files {
        run.adopt(f)?;
    }
    run.write_json("data/sidecar.json", &sidecar)?;
    run.finish()
}

#[derive(Serialize)]
struct IngestRecord<'a> {
    record_id: &'a str,
    subject_id: &'a str,
    label: String,
    frames: usize,
    sample_rate: f64,
    structures: Vec<&'static str>,
    events: Option<usize>,
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    records: usize,
    subjects: usize,
    healthy: usize,
    pfps: usize,
    itbs: usize,
    tasks: Vec<(Task, bool)>,
    entries: Vec<IngestRecord<'a>>,
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("ingest", cfg)?;
    let ds = dataset(cfg, &mut run)?;
    let counts = ds.class_counts();
    let summary = IngestSummary {
        records: ds.len(),
        subjects: ds.subjects().len(),
        healthy: counts.healthy,
        pfps: counts.pfps,
        itbs: counts.itbs,
        tasks: Task::ALL.iter().map(|&t| (t, class_filter(&ds, t).is_ok())).collect(),
        entries: ds
            .records
            .iter()
            .map(|r| IngestRecord {
                record_id: &r.record_id,
                subject_id: &r.subject.subject_id,
                label: r.label.to_string(),
                frames: r.len(),
                sample_rate: r.sample_rate(),
                structures: r.series.iter().map(|s| s.structure.name()).collect(),
                events: r.events.as_ref().map(Vec::len),
            })
            .collect(),
    };
    run.write_json("ingest.json", &summary)?;
    run.finish()
}

#[derive(Serialize)]
struct StanceSpan {
    foot: String,
    start_frame: usize,
    end_frame: usize,
    duration_s: f64,
}

#[derive(Serialize)]
struct SegmentRecord {
    record_id: String,
    subject_id: String,
    label: String,
    events: Vec<gaitrisk_core::dataset::GaitEvent>,
    stances: Vec<StanceSpan>,
    spatiotemporal: SpatioTemporalSummary,
}

pub fn segment(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("segment", cfg)?;
    let ds = dataset(cfg, &mut run)?;
    let mut out = Vec::with_capacity(ds.len());
    for r in &ds.records {
        let ctx = |e: gaitrisk_core::gait::GaitError| CliError::data(format!("record {}: {e}", r.record_id));
        let events = detect_events_with(r, &cfg.preprocess.events).map_err(ctx)?;
        let phases = segment_stances(r, &events).map_err(ctx)?;
        let summary = spatiotemporal(&events, r.sample_rate(), r.treadmill_speed).map_err(ctx)?;
        out.push(SegmentRecord {
            record_id: r.record_id.clone(),
            subject_id: r.subject.subject_id.clone(),
            label: r.label.to_string(),
            stances: phases
                .iter()
                .map(|p| StanceSpan { foot: p.foot.to_string(), start_frame: p.start_frame, end_frame: p.end_frame, duration_s: p.duration })
                .collect(),
            events,
            spatiotemporal: summary,
        });
    }
    run.write_json("segments.json", &out)?;
    run.finish()
}

pub fn features(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("features", cfg)?;
    let recs = processed(cfg, &mut run)?;
    let vectors: Vec<_> = recs.iter().map(|r| r.features.clone()).collect();
    let (schema, rows) = feature_matrix(&vectors)?;
    let mut csv = String::from("record_id,subject_id,label");
    for n in schema.names() {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for (r, row) in recs.iter().zip(&rows) {
        csv.push_str(&format!("{},{},{}", r.record_id, r.subject_id, r.label));
        for v in row {
            csv.push(',');
            csv.push_str(&fmt9(*v));
        }
        csv.push('\n');
    }
    run.write("features.csv", csv)?;
    run.write_json("feature_schema.json", &schema)?;
    run.finish()
}

/// The (task, regime, model) cells the config asks for that are valid.
fn cells(cfg: &RunConfig) -> Result<Vec<(Task, InputRegime, ModelChoice)>> {
    let mut out = Vec::new();
    for &t in &cfg.tasks {
        for &r in &cfg.regimes {
            for &m in &cfg.models {
                if m.accepts(r) {
                    out.push((t, r, m));
                } else {
                    log::warn!("skipping {} on {}: regime not supported", m.name(), r.name());
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no model accepts any requested regime"));
    }
    Ok(out)
}

fn task_data(recs: &[ProcessedRecord], task: Task) -> Result<ExperimentData> {
    Ok(ExperimentData::from_processed(recs, task)?)
}

fn stem(task: Task, regime: InputRegime, model: ModelChoice) -> String {
    format!("{}_{}_{}", task.name(), regime.name(), model.name())
}

/// `models/<stem>.json`; deep weights go to the `.bin` named in `weights`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedModel {
    pub task: Task,
    pub regime: InputRegime,
    pub model: ModelChoice,
    pub seed: u64,
    pub point_scaler: ScalerParams,
    pub stance_scaler: StanceScaler,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classic: Option<ModelEnvelope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkEnvelope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_sha256: Option<String>,
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("train", cfg)?;
    let recs = processed(cfg, &mut run)?;
    let ecfg = cfg.experiment();
    let mut data_cache: Vec<(Task, ExperimentData)> = Vec::new();
    for (task, regime, model) in cells(cfg)? {
        if !data_cache.iter().any(|(t, _)| *t == task) {
            data_cache.push((task, task_data(&recs, task)?));
        }
        let data = &data_cache.iter().find(|(t, _)| *t == task).expect("cached").1;
        let subjects: Vec<String> = data.subjects().into_iter().map(String::from).collect();
        // Every subject trains; the test side is a placeholder that fold_inputs requires.
        let fold = Fold { train_subjects: subjects.clone(), test_subjects: subjects };
        let inputs = data.fold_inputs(&fold, regime)?;
        let name = stem(task, regime, model);
        let seed = derive_seed(cfg.seed, &format!("train/{task}/{}/{}", regime.name(), model.name()), 0);
        run.note_seed(format!("train/{name}"), seed);
        let fitted = fit_fold_model(model, data, &inputs, &ecfg, seed)?;
        let mut saved = SavedModel {
            task,
            regime,
            model,
            seed,
            point_scaler: inputs.point_scaler.clone(),
            stance_scaler: inputs.stance_scaler.clone(),
            classic: None,
            network: None,
            weights: None,
            weights_sha256: None,
        };
        match fitted {
            FittedFoldModel::Classic { model: m, .. } => saved.classic = Some(m.to_envelope()),
            FittedFoldModel::Deep(net) => {
                let (env, blob) = net.to_envelope();
                let bin = format!("{name}.bin");
                saved.weights_sha256 = Some(sha256_hex(&blob));
                run.write(&format!("models/{bin}"), &blob)?;
                saved.network = Some(env);
                saved.weights = Some(bin);
            }
        }
        run.write_json(&format!("models/{name}.json"), &saved)?;
    }
    run.finish()
}

/// Reloads a network saved by `train`.
pub fn load_network(json_path: &Path) -> Result<(SavedModel, DeepModel)> {
    let text = std::fs::read_to_string(json_path)?;
    let saved: SavedModel = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", json_path.display())))?;
    let (env, bin) = match (&saved.network, &saved.weights) {
        (Some(e), Some(b)) => (e, b),
        _ => return Err(CliError::data(format!("{} holds no network", json_path.display()))),
    };
    let blob = std::fs::read(json_path.with_file_name(bin))?;
    let net = DeepModel::from_envelope(env, &blob)?;
    Ok((saved, net))
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("evaluate", cfg)?;
    let recs = processed(cfg, &mut run)?;
    let ecfg = cfg.experiment();
    let cells = cells(cfg)?;
    let mut reports = Vec::new();
    for &task in &cfg.tasks {
        let data = task_data(&recs, task)?;
        for &regime in &cfg.regimes {
            let models: Vec<ModelChoice> = cells.iter().filter(|c| c.0 == task && c.1 == regime).map(|c| c.2).collect();
            if !models.is_empty() {
                reports.extend(run_experiment(&data, regime, &models, &ecfg)?);
            }
        }
    }
    let report = ExperimentReport { seed: cfg.seed, folds: cfg.folds, grid: cfg.grid, reports };
    run.write("report.json", report.to_json())?;
    run.write("report.csv", report.to_csv())?;
    run.finish()
}

#[derive(Serialize)]
struct MapEntry {
    task: Task,
    regime: InputRegime,
    model: ModelChoice,
    fold: usize,
    method: &'static str,
    cases: usize,
    csv: String,
    svg: String,
}

fn positive_rows(inputs: &FoldInputs) -> Vec<Vec<f64>> {
    inputs.test_table.rows.iter().zip(&inputs.y_test).filter(|(_, y)| **y == 1).map(|(r, _)| r.clone()).collect()
}

fn save_map(run: &mut RunDir, index: &mut Vec<MapEntry>, key: (Task, InputRegime, ModelChoice, usize), suffix: &str, map: &ExplanationMap) -> Result<()> {
    let (task, regime, model, fold) = key;
    let base = format!("maps/{}_{suffix}", stem(task, regime, model));
    let (csv, svg) = (format!("{base}.csv"), format!("{base}.svg"));
    run.write(&csv, map.to_csv())?;
    run.write(&svg, map.to_svg())?;
    index.push(MapEntry { task, regime, model, fold, method: map.method.name(), cases: map.cases, csv, svg });
    Ok(())
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn explain(cfg: &RunConfig) -> Result<()> {
    let mut run = RunDir::create("explain", cfg)?;
    let recs = processed(cfg, &mut run)?;
    let ecfg = cfg.experiment();
    let ex = &cfg.explain;
    let mut index = Vec::new();
    let mut data_cache: Vec<(Task, ExperimentData)> = Vec::new();
    for (task, regime, model) in cells(cfg)? {
        if !data_cache.iter().any(|(t, _)| *t == task) {
            data_cache.push((task, task_data(&recs, task)?));
        }
        let data = &data_cache.iter().find(|(t, _)| *t == task).expect("cached").1;
        // Same plan and per-fold model seed as `evaluate`, so the explained model is the evaluated one.
        let plan = split_by_subject_stratified(&data.subject_labels(), cfg.folds, derive_seed(cfg.seed, &format!("folds/{task}"), 0))?;
        let f = ex.fold;
        let inputs = data.fold_inputs(&plan.folds[f], regime)?;
        let seed = derive_seed(cfg.seed, &format!("model/{task}/{}/{}", regime.name(), model.name()), f as u64);
        let fitted = fit_fold_model(model, data, &inputs, &ecfg, seed)?;
        let key = (task, regime, model, f);
        let explain_seed = derive_seed(cfg.seed, &format!("explain/{}", stem(task, regime, model)), f as u64);
        run.note_seed(format!("explain/{}", stem(task, regime, model)), explain_seed);
        match &fitted {
            FittedFoldModel::Deep(net) => {
                let sg = SmoothGradConfig { seed: explain_seed, ..ex.smoothgrad };
                let s = saliency(net, &inputs.test_set, &data.row_labels, &sg)?;
                save_map(&mut run, &mut index, key, "saliency", &s)?;
                let layer = match net {
                    DeepModel::Cnn(_) => ex.layer.as_str(),
                    DeepModel::Lstm(_) => "convlstm",
                };
                let g = gradcam(net, &inputs.test_set, layer)?;
                save_map(&mut run, &mut index, key, "gradcam", &g)?;
            }
            FittedFoldModel::Classic { model: m, .. } => {
                let cases = positive_rows(&inputs);
                if cases.is_empty() {
                    return Err(gaitrisk_core::explain::ExplainError::NoPositiveCases.into());
                }
                let baseline = mean_baseline(&inputs.train_table.rows);
                let predict = |rows: &[Vec<f64>]| m.predict_rows(rows);
                if regime == InputRegime::Points {
                    let names: Vec<String> = data.point_schema.names().into_iter().map(String::from).collect();
                    let ranking = shapley_ranking(&predict, &cases, &baseline, &names, ex.permutations, explain_seed)?;
                    save_map(&mut run, &mut index, key, "shapley", &ranking)?;
                    for feature in ranking.row_labels.iter().take(ex.pdp_features) {
                        let j = data.point_schema.index_of(feature).expect("ranked feature is in the schema");
                        let column: Vec<f64> = inputs.train_table.rows.iter().map(|r| r[j]).collect();
                        let grid = quantile_grid(&column, ex.pdp_grid)?;
                        let curve = pdp(&predict, &inputs.train_table.rows, &names, feature, &grid)?;
                        save_map(&mut run, &mut index, key, &format!("pdp_{}", file_safe(feature)), &curve.to_map())?;
                    }
                } else {
                    let dims = (STANCE_SAMPLES, data.structures, CHANNELS);
                    let map = shapley_time_map(&predict, &cases, &baseline, dims, ex.time_bin, ex.permutations, explain_seed, &data.row_labels)?;
                    save_map(&mut run, &mut index, key, "shapley", &map)?;
                }
            }
        }
    }
    run.write_json("maps/index.json", &index)?;
    run.finish()
}

pub fn report(cfg: &RunConfig, from: &[PathBuf]) -> Result<()> {
    let mut run = RunDir::create("report", cfg)?;
    let mut merged: Option<ExperimentReport> = None;
    for p in from {
        let file = if p.is_dir() { p.join("report.json") } else { p.clone() };
        run.add_input(&file)?;
        let text = std::fs::read_to_string(&file)?;
        let r: ExperimentReport = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
        match &mut merged {
            None => merged = Some(r),
            Some(m) => {
                let have: BTreeSet<(Task, InputRegime, ModelChoice)> = m.reports.iter().map(|x| (x.task, x.regime, x.model)).collect();
                for x in r.reports {
                    if have.contains(&(x.task, x.regime, x.model)) {
                        return Err(CliError::data(format!("{} repeats cell {} {} {}", file.display(), x.task, x.regime.name(), x.model.name())));
                    }
                    m.reports.push(x);
                }
            }
        }
    }
    let report = merged.ok_or_else(|| CliError::usage("no reports to merge"))?;
    run.write("report.json", report.to_json())?;
    run.write("report.csv", report.to_csv())?;
    run.finish()
}
