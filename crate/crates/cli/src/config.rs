use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaitrisk_core::classic::{ClassifierKind, InputRegime};
use gaitrisk_core::dataset::Task;
use gaitrisk_core::eval::{ExperimentConfig, ModelChoice};
use gaitrisk_core::explain::SmoothGradConfig;
use gaitrisk_core::pipeline::PreprocessConfig;
use gaitrisk_core::seed::derive_seed;
use gaitrisk_core::synth::SynthSpec;
use gaitrisk_deepnet::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// Outer test fold whose positive cases are explained.
    pub fold: usize,
    pub permutations: usize,
    /// Superpixel width in time steps for time-series Shapley maps.
    pub time_bin: usize,
    /// Partial dependence curves for this many top-ranked point features.
    pub pdp_features: usize,
    pub pdp_grid: usize,
    pub smoothgrad: SmoothGradConfig,
    /// Grad-CAM layer of the CNN.
    pub layer: String,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            fold: 0,
            permutations: 100,
            time_bin: 10,
            pdp_features: 3,
            pdp_grid: 10,
            smoothgrad: SmoothGradConfig::default(),
            layer: gaitrisk_core::explain::GRADCAM_DEFAULT_LAYER.into(),
        }
    }
}

/// Everything a command needs; serialised as the run's `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// Dataset manifest; a synthetic cohort from `synth` is used when absent.
    pub manifest: Option<PathBuf>,
    pub seed: u64,
    pub tasks: Vec<Task>,
    pub regimes: Vec<InputRegime>,
    pub models: Vec<ModelChoice>,
    pub grid: bool,
    pub folds: usize,
    pub workers: usize,
    pub cnn_filters: usize,
    pub predict_batch: usize,
    pub deep: TrainConfig,
    pub preprocess: PreprocessConfig,
    /// Its `seed` field is replaced by one derived from the root seed.
    pub synth: SynthSpec,
    pub explain: ExplainSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            out: PathBuf::from("run"),
            manifest: None,
            seed: 0,
            tasks: vec![Task::PfpsVsH],
            regimes: vec![InputRegime::TsPlusPoints],
            models: vec![ModelChoice::Classic(ClassifierKind::SvmL)],
            grid: false,
            folds: e.folds,
            workers: 1,
            cnn_filters: e.cnn_filters,
            predict_batch: e.predict_batch,
            deep: e.deep,
            preprocess: PreprocessConfig::default(),
            synth: SynthSpec { healthy_subjects: 20, pfps_subjects: 20, itbs_subjects: 20, ..SynthSpec::default() },
            explain: ExplainSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            folds: self.folds,
            seed: self.seed,
            grid: self.grid,
            deep: self.deep.clone(),
            cnn_filters: self.cnn_filters,
            predict_batch: self.predict_batch,
            workers: self.workers,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec { seed: self.synth_seed(), ..self.synth.clone() }
    }

    pub fn synth_seed(&self) -> u64 {
        derive_seed(self.seed, "synth", 0)
    }

    pub fn check(&self) -> Result<()> {
        if self.tasks.is_empty() || self.regimes.is_empty() || self.models.is_empty() {
            return Err(CliError::usage("tasks, regimes and models must be non-empty"));
        }
        if self.folds < 2 {
            return Err(CliError::usage(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.explain.fold >= self.folds {
            return Err(CliError::usage(format!("explain fold {} outside 0..{}", self.explain.fold, self.folds)));
        }
        if self.workers == 0 {
            return Err(CliError::usage("workers must be at least 1"));
        }
        Ok(())
    }
}

/// Overwrites `base` with `patch`, descending into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Flag values set on the command line, as a partial config object.
pub type Overrides = Map<String, Value>;

pub fn set(o: &mut Overrides, path: &str, v: impl Serialize) {
    let value = serde_json::to_value(v).expect("flag value serialises");
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().expect("non-empty key path");
    let mut node = o;
    for k in keys {
        node = node.entry(k).or_insert_with(|| Value::Object(Map::new())).as_object_mut().expect("object");
    }
    node.insert(last.into(), value);
}

/// Defaults, then command-line flags, then the config file.
pub fn resolve(flags: Overrides, file: Option<&Path>) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialise");
    merge(&mut value, Value::Object(flags));
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let patch: Value = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        if !patch.is_object() {
            return Err(CliError::usage(format!("config {} must be a JSON object", path.display())));
        }
        merge(&mut value, patch);
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::usage(format!("invalid configuration: {e}")))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn parse_task(s: &str) -> Result<Task> {
    let norm = s.trim().to_ascii_uppercase().replace('+', "_").replace('-', "_");
    let short = norm.strip_suffix("_VS_H").unwrap_or(&norm);
    match short {
        "PFPS" => Ok(Task::PfpsVsH),
        "ITBS" => Ok(Task::ItbsVsH),
        "PFPS_ITBS" | "BOTH" | "INJURED" => Ok(Task::PfpsItbsVsH),
        _ => Err(CliError::usage(format!("unknown task {s:?}; expected PFPS, ITBS or PFPS_ITBS"))),
    }
}

pub fn parse_regime(s: &str) -> Result<InputRegime> {
    let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
    match norm.as_str() {
        "ts" => Some(InputRegime::TimeSeries),
        "ts_points" => Some(InputRegime::TsPlusPoints),
        other => InputRegime::parse(other),
    }
    .ok_or_else(|| CliError::usage(format!("unknown regime {s:?}; expected time_series, ts_plus_points or points")))
}

pub fn parse_model(s: &str) -> Result<ModelChoice> {
    ModelChoice::parse(s.trim()).ok_or_else(|| CliError::usage(format!("unknown model {s:?}")))
}

/// Seeds fanned out from the root, keyed by stream name.
pub fn seed_table(cfg: &RunConfig) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::new();
    seeds.insert("root".into(), cfg.seed);
    if cfg.manifest.is_none() {
        seeds.insert("synth".into(), cfg.synth_seed());
    }
    for t in &cfg.tasks {
        let name = format!("folds/{t}");
        seeds.insert(name.clone(), derive_seed(cfg.seed, &name, 0));
    }
    seeds
}
