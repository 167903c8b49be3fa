use std::collections::BTreeSet;
use std::fmt::Write as _;

use gaitrisk_deepnet::{predict_proba, train, CnnConfig, CnnNet, DeepModel, LstmConfig, LstmNet, TrainConfig};
use serde::{Deserialize, Serialize};

use super::{metrics, split_by_subject_stratified, ConfusionCounts, EvalError, ExperimentData, FoldInputs, Metrics, Result};
use crate::classic::{fit, grid, shipped_defaults, ClassifierKind, ClassifierSpec, FeatureTable, Hyper, InputRegime, TrainedModel};
use crate::dataset::Task;
use crate::gait::CHANNELS;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelChoice {
    Classic(ClassifierKind),
    Cnn,
    Lstm,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Classic(k) => k.name(),
            Self::Cnn => "CNN",
            Self::Lstm => "LSTM",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Some(Self::Cnn),
            "lstm" | "convlstm" => Some(Self::Lstm),
            other => ClassifierKind::parse(other).map(Self::Classic),
        }
    }

    /// The CNN takes time series with or without point values; the LSTM takes time series only.
    pub fn accepts(self, regime: InputRegime) -> bool {
        match self {
            Self::Classic(_) => true,
            Self::Cnn => regime != InputRegime::Points,
            Self::Lstm => regime == InputRegime::TimeSeries,
        }
    }
}

impl From<ModelChoice> for String {
    fn from(m: ModelChoice) -> Self {
        m.name().to_owned()
    }
}

impl TryFrom<String> for ModelChoice {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Self::parse(&s).ok_or_else(|| format!("unknown model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub seed: u64,
    /// Nested grid search; otherwise the shipped defaults are fitted directly.
    pub grid: bool,
    pub deep: TrainConfig,
    pub cnn_filters: usize,
    pub predict_batch: usize,
    /// Threads for independent (model, fold) fits; results do not depend on it.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { folds: 5, seed: 0, grid: false, deep: TrainConfig::default(), cnn_filters: 64, predict_batch: 64, workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: ClassifierSpec,
    /// Inner-validation accuracy per cell, grid order; failed cells score 0.
    pub scores: Vec<f64>,
    pub model: TrainedModel,
}

fn accuracy(pred: &[f64], y: &[u8]) -> f64 {
    let hits = pred.iter().zip(y).filter(|(p, t)| u8::from(**p >= 0.5) == **t).count();
    hits as f64 / y.len() as f64
}

fn subset(table: &FeatureTable, idx: &[usize]) -> FeatureTable {
    FeatureTable { schema_hash: table.schema_hash.clone(), rows: idx.iter().map(|&i| table.rows[i].clone()).collect() }
}

/// Scores every cell on a stratified subject-wise 80/20 split of the training
/// fold, keeps the first best cell and refits it on the whole fold.
pub fn grid_search(
    cells: &[Hyper],
    table: &FeatureTable,
    y: &[u8],
    subjects: &[String],
    regime: InputRegime,
    seed: u64,
) -> Result<GridOutcome> {
    if cells.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let mut scores = vec![0.0; cells.len()];
    if cells.len() > 1 {
        let pairs: Vec<(String, u8)> = subjects.iter().cloned().zip(y.iter().copied()).collect();
        let n_subjects = subjects.iter().collect::<BTreeSet<_>>().len();
        let plan = split_by_subject_stratified(&pairs, n_subjects.clamp(2, 5), derive_seed(seed, "grid/inner", 0))?;
        let held: BTreeSet<&str> = plan.folds[0].test_subjects.iter().map(String::as_str).collect();
        let (val, tr): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| held.contains(subjects[i].as_str()));
        let (xt, xv) = (subset(table, &tr), subset(table, &val));
        let yt: Vec<u8> = tr.iter().map(|&i| y[i]).collect();
        let yv: Vec<u8> = val.iter().map(|&i| y[i]).collect();
        for (cell, score) in cells.iter().zip(scores.iter_mut()) {
            let spec = ClassifierSpec::new(*cell, seed);
            match fit(&spec, &xt, &yt, regime).and_then(|m| m.predict_proba(&xv)) {
                Ok(p) => *score = accuracy(&p, &yv),
                Err(e) => log::warn!("grid cell {cell:?} failed: {e}"),
            }
        }
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let spec = ClassifierSpec::new(cells[best], seed);
    let model = fit(&spec, table, y, regime)?;
    Ok(GridOutcome { best: spec, scores, model })
}

/// A model fitted on one outer training fold.
#[derive(Debug, Clone)]
pub enum FittedFoldModel {
    Classic { model: TrainedModel, selected: Hyper },
    Deep(DeepModel),
}

impl FittedFoldModel {
    pub fn predict_test(&self, inputs: &FoldInputs, batch: usize) -> Result<Vec<f64>> {
        match self {
            Self::Classic { model, .. } => Ok(model.predict_proba(&inputs.test_table)?),
            Self::Deep(net) => Ok(predict_proba(net, &inputs.test_set, batch)?),
        }
    }
}

pub fn fit_fold_model(choice: ModelChoice, data: &ExperimentData, inputs: &FoldInputs, cfg: &ExperimentConfig, seed: u64) -> Result<FittedFoldModel> {
    let regime = inputs.regime;
    if !choice.accepts(regime) {
        return Err(EvalError::InvalidCell { model: choice.name().into(), regime });
    }
    match choice {
        ModelChoice::Classic(kind) => {
            let cells = if cfg.grid { grid(kind) } else { vec![shipped_defaults(kind, seed).hyper] };
            let out = grid_search(&cells, &inputs.train_table, &inputs.y_train, &inputs.train_subjects, regime, seed)?;
            Ok(FittedFoldModel::Classic { selected: out.best.hyper, model: out.model })
        }
        ModelChoice::Cnn | ModelChoice::Lstm => {
            let mut net = if choice == ModelChoice::Cnn {
                let points = inputs.train_set.points.as_ref().map(|p| p[0].len());
                let mut c = CnnConfig::new(data.structures, CHANNELS, points);
                c.filters = cfg.cnn_filters;
                c.seed = derive_seed(seed, "net/init", 0);
                DeepModel::Cnn(CnnNet::new(c)?)
            } else {
                let mut c = LstmConfig::new(data.structures, CHANNELS);
                c.seed = derive_seed(seed, "net/init", 0);
                DeepModel::Lstm(LstmNet::new(c)?)
            };
            let tc = TrainConfig { seed: derive_seed(seed, "net/train", 0), ..cfg.deep.clone() };
            train(&mut net, &inputs.train_set, &tc)?;
            Ok(FittedFoldModel::Deep(net))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<Hyper>,
}

/// Fold aggregate; undefined folds are excluded and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Population standard deviation over the defined folds.
    pub std: Option<f64>,
    pub defined_folds: usize,
    pub undefined_folds: Vec<usize>,
}

impl MetricSummary {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let undefined_folds = values.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i).collect();
        if defined.is_empty() {
            return Self { mean: None, std: None, defined_folds: 0, undefined_folds };
        }
        let n = defined.len() as f64;
        let mean = defined.iter().sum::<f64>() / n;
        let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean: Some(mean), std: Some(var.sqrt()), defined_folds: defined.len(), undefined_folds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub regime: InputRegime,
    pub model: ModelChoice,
    pub folds: Vec<FoldResult>,
    pub acc: MetricSummary,
    pub pre: MetricSummary,
    pub rec: MetricSummary,
    pub f1: MetricSummary,
}

/// Outer subject-wise cross-validation of every model on one task and regime.
pub fn run_experiment(data: &ExperimentData, regime: InputRegime, models: &[ModelChoice], cfg: &ExperimentConfig) -> Result<Vec<MetricReport>> {
    for m in models {
        if !m.accepts(regime) {
            return Err(EvalError::InvalidCell { model: m.name().into(), regime });
        }
    }
    let task = data.task;
    let plan = split_by_subject_stratified(&data.subject_labels(), cfg.folds, derive_seed(cfg.seed, &format!("folds/{task}"), 0))?;
    plan.check(data.subjects())?;
    let inputs = plan.folds.iter().map(|f| data.fold_inputs(f, regime)).collect::<Result<Vec<_>>>()?;
    for (i, inp) in inputs.iter().enumerate() {
        let train: BTreeSet<&str> = inp.train_subjects.iter().map(String::as_str).collect();
        assert!(inp.test_idx.iter().all(|&r| !train.contains(data.subject_ids[r].as_str())), "subject leakage in fold {i}");
        if !inp.y_train.contains(&0) || !inp.y_train.contains(&1) {
            return Err(EvalError::SingleClassFold { fold: i });
        }
    }

    let jobs: Vec<(ModelChoice, usize)> = models.iter().flat_map(|&m| (0..inputs.len()).map(move |i| (m, i))).collect();
    let run_job = |&(model, i): &(ModelChoice, usize)| -> Result<FoldResult> {
        let inp = &inputs[i];
        let seed = derive_seed(cfg.seed, &format!("model/{task}/{}/{}", regime.name(), model.name()), i as u64);
        let fitted = fit_fold_model(model, data, inp, cfg, seed)?;
        let probs = fitted.predict_test(inp, cfg.predict_batch)?;
        let pred: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let counts = ConfusionCounts::from_pairs(&pred, &inp.y_test);
        let selected = match &fitted {
            FittedFoldModel::Classic { selected, .. } => Some(*selected),
            FittedFoldModel::Deep(_) => None,
        };
        log::info!("{task} {} {} fold {i}: {counts:?}", regime.name(), model.name());
        Ok(FoldResult { fold: i, test_subjects: plan.folds[i].test_subjects.clone(), counts, metrics: metrics(&counts)?, selected })
    };
    let workers = cfg.workers.clamp(1, jobs.len().max(1));
    let mut results: Vec<Option<Result<FoldResult>>> = (0..jobs.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, job) in results.iter_mut().zip(&jobs) {
            *slot = Some(run_job(job));
        }
    } else {
        let done: Vec<Vec<(usize, Result<FoldResult>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let (jobs, run_job) = (&jobs, &run_job);
                    s.spawn(move || (w..jobs.len()).step_by(workers).map(|j| (j, run_job(&jobs[j]))).collect())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        });
        for (j, r) in done.into_iter().flatten() {
            results[j] = Some(r);
        }
    }
    let mut results = results.into_iter().map(|r| r.expect("every job ran"));

    let mut reports = Vec::new();
    for &model in models {
        let folds = results.by_ref().take(inputs.len()).collect::<Result<Vec<_>>>()?;
        let summary = |f: fn(&Metrics) -> Option<f64>| MetricSummary::from_values(&folds.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        reports.push(MetricReport {
            task,
            regime,
            acc: summary(|m| m.acc),
            pre: summary(|m| m.pre),
            rec: summary(|m| m.rec),
            f1: summary(|m| m.f1),
            model,
            folds,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub folds: usize,
    pub grid: bool,
    pub reports: Vec<MetricReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// Accuracy table: one row per model, one `task/regime` column per evaluated cell.
    pub fn to_csv(&self) -> String {
        let mut columns: Vec<(Task, InputRegime)> = Vec::new();
        let mut rows: Vec<ModelChoice> = Vec::new();
        for r in &self.reports {
            if !columns.contains(&(r.task, r.regime)) {
                columns.push((r.task, r.regime));
            }
            if !rows.contains(&r.model) {
                rows.push(r.model);
            }
        }
        let mut out = String::from("model");
        for (t, g) in &columns {
            let _ = write!(out, ",{t}/{}", g.name());
        }
        out.push('\n');
        for m in rows {
            out.push_str(m.name());
            for (t, g) in &columns {
                let cell = self.reports.iter().find(|r| r.model == m && r.task == *t && r.regime == *g);
                match cell.map(|r| (r.acc.mean, r.acc.std)) {
                    Some((Some(mean), Some(std))) => {
                        let _ = write!(out, ",{mean:.2} ± {std:.2}");
                    }
                    _ => out.push_str(",-"),
                }
            }
            out.push('\n');
        }
        out
    }
}
