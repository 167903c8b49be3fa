//! Classical binary classifiers behind one fit / predict-probability contract.

pub mod forest;
pub mod gp;
pub mod grid;
pub mod knn;
pub mod mlp;
pub mod svm;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{AdaBoost, RandomForest};
pub use gp::GpClassifier;
pub use grid::{grid, shipped_defaults};
pub use knn::Knn;
pub use mlp::Mlp;
pub use svm::{LinearSvm, PolySvm};
pub use tree::{Criterion, DecisionTree, MaxFeatures, Node, Splitter, TreeParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("feature schema mismatch: model {expected}, input {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error(transparent)]
    Net(#[from] gaitrisk_deepnet::NetError),
    #[error("model envelope: {0}")]
    Envelope(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "SVM_L")]
    SvmL,
    #[serde(rename = "SVM_P")]
    SvmP,
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "ADB")]
    Adb,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "MLP")]
    Mlp,
}

impl ClassifierKind {
    pub const ALL: [Self; 8] = [Self::Knn, Self::SvmL, Self::SvmP, Self::Gp, Self::Dt, Self::Adb, Self::Rf, Self::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Knn => "KNN",
            Self::SvmL => "SVM_L",
            Self::SvmP => "SVM_P",
            Self::Gp => "GP",
            Self::Dt => "DT",
            Self::Adb => "ADB",
            Self::Rf => "RF",
            Self::Mlp => "MLP",
        }
    }

    /// Case-insensitive; accepts `svm_l`, `svm-l` and `svml` spellings.
    pub fn parse(s: &str) -> Option<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        Self::ALL.into_iter().find(|k| k.name().replace('_', "") == norm)
    }

    pub fn stochastic(self) -> bool {
        matches!(self, Self::Dt | Self::Rf | Self::Adb | Self::Mlp)
    }
}

/// Hyperparameters, one variant per kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyper {
    #[serde(rename = "KNN")]
    Knn { k: usize },
    #[serde(rename = "SVM_L")]
    SvmL { c: f64 },
    #[serde(rename = "SVM_P")]
    SvmP { c: f64, degree: u32 },
    #[serde(rename = "GP")]
    Gp,
    #[serde(rename = "DT")]
    Dt { tree: TreeParams },
    #[serde(rename = "ADB")]
    Adb { rounds: usize, tree: TreeParams },
    #[serde(rename = "RF")]
    Rf { n_estimators: usize, tree: TreeParams, bootstrap: bool },
    #[serde(rename = "MLP")]
    Mlp { neurons: usize, max_iter: usize },
}

impl Hyper {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Knn { .. } => ClassifierKind::Knn,
            Self::SvmL { .. } => ClassifierKind::SvmL,
            Self::SvmP { .. } => ClassifierKind::SvmP,
            Self::Gp => ClassifierKind::Gp,
            Self::Dt { .. } => ClassifierKind::Dt,
            Self::Adb { .. } => ClassifierKind::Adb,
            Self::Rf { .. } => ClassifierKind::Rf,
            Self::Mlp { .. } => ClassifierKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidHyper(m));
        let tree_ok = |t: &TreeParams| t.min_samples_split >= 2 && t.min_samples_leaf >= 1 && t.max_depth != Some(0);
        match self {
            Self::Knn { k } if *k == 0 => bad("k must be at least 1".into()),
            Self::SvmL { c } | Self::SvmP { c, .. } if !(c.is_finite() && *c > 0.0) => bad(format!("C={c}")),
            Self::SvmP { degree, .. } if *degree == 0 => bad("degree must be at least 1".into()),
            Self::Dt { tree } | Self::Adb { tree, .. } | Self::Rf { tree, .. } if !tree_ok(tree) => bad(format!("{tree:?}")),
            Self::Adb { rounds: 0, .. } | Self::Rf { n_estimators: 0, .. } => bad("ensemble size 0".into()),
            Self::Mlp { neurons, max_iter } if *neurons == 0 || *max_iter == 0 => bad(format!("neurons={neurons}, max_iter={max_iter}")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub hyper: Hyper,
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(hyper: Hyper, seed: u64) -> Self {
        Self { hyper, seed }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.hyper.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputRegime {
    TimeSeries,
    TsPlusPoints,
    Points,
}

impl InputRegime {
    pub const ALL: [Self; 3] = [Self::TimeSeries, Self::TsPlusPoints, Self::Points];

    pub fn name(self) -> &'static str {
        match self {
            Self::TimeSeries => "time_series",
            Self::TsPlusPoints => "ts_plus_points",
            Self::Points => "points",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

/// Design matrix rows tagged with the hash of the column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema_hash: String,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum FittedParams {
    #[serde(rename = "KNN")]
    Knn(Knn),
    #[serde(rename = "SVM_L")]
    SvmL(LinearSvm),
    #[serde(rename = "SVM_P")]
    SvmP(PolySvm),
    #[serde(rename = "GP")]
    Gp(GpClassifier),
    #[serde(rename = "DT")]
    Dt(DecisionTree),
    #[serde(rename = "ADB")]
    Adb(AdaBoost),
    #[serde(rename = "RF")]
    Rf(RandomForest),
    #[serde(rename = "MLP")]
    Mlp(Mlp),
}

impl FittedParams {
    pub fn proba(&self, q: &[f64]) -> f64 {
        match self {
            Self::Knn(m) => m.proba(q),
            Self::SvmL(m) => m.proba(q),
            Self::SvmP(m) => m.proba(q),
            Self::Gp(m) => m.proba(q),
            Self::Dt(m) => m.proba(q),
            Self::Adb(m) => m.proba(q),
            Self::Rf(m) => m.proba(q),
            Self::Mlp(m) => m.proba(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub params: FittedParams,
    pub schema_hash: String,
    pub regime: InputRegime,
    pub n_features: usize,
}

pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEnvelope {
    pub format_version: u32,
    pub kind: ClassifierKind,
    pub hyperparameters: Hyper,
    pub seed: u64,
    pub schema_hash: String,
    pub regime: InputRegime,
    pub n_features: usize,
    pub parameters: FittedParams,
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let d = rows.first().map(Vec::len).ok_or_else(|| ModelError::Dimension("empty design matrix".into()))?;
    if d == 0 {
        return Err(ModelError::Dimension("zero-width design matrix".into()));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(ModelError::Dimension(format!("row width {} != {d}", r.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ModelError::Dimension("non-finite feature value".into()));
    }
    Ok(d)
}

pub fn fit(spec: &ClassifierSpec, x: &FeatureTable, y: &[u8], regime: InputRegime) -> Result<TrainedModel> {
    spec.hyper.validate()?;
    let d = check_rows(&x.rows)?;
    if y.len() != x.rows.len() {
        return Err(ModelError::Dimension(format!("{} labels for {} rows", y.len(), x.rows.len())));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClassTraining);
    }
    let rows = &x.rows;
    let params = match spec.hyper {
        Hyper::Knn { k } => FittedParams::Knn(Knn::fit(k, rows, y)),
        Hyper::SvmL { c } => FittedParams::SvmL(LinearSvm::fit(c, rows, y, svm::PEGASOS_EPOCHS)?),
        Hyper::SvmP { c, degree } => FittedParams::SvmP(PolySvm::fit(c, degree, rows, y)?),
        Hyper::Gp => FittedParams::Gp(GpClassifier::fit(rows, y)?),
        Hyper::Dt { tree } => FittedParams::Dt(DecisionTree::fit(tree, rows, y, spec.seed)),
        Hyper::Adb { rounds, tree } => FittedParams::Adb(AdaBoost::fit(rounds, tree, rows, y, spec.seed)?),
        Hyper::Rf { n_estimators, tree, bootstrap } => {
            FittedParams::Rf(RandomForest::fit(n_estimators, tree, bootstrap, rows, y, spec.seed)?)
        }
        Hyper::Mlp { neurons, max_iter } => FittedParams::Mlp(Mlp::fit(neurons, max_iter, rows, y, spec.seed)?),
    };
    Ok(TrainedModel { spec: *spec, params, schema_hash: x.schema_hash.clone(), regime, n_features: d })
}

impl TrainedModel {
    pub fn predict_proba(&self, x: &FeatureTable) -> Result<Vec<f64>> {
        if x.schema_hash != self.schema_hash {
            return Err(ModelError::SchemaMismatch { expected: self.schema_hash.clone(), found: x.schema_hash.clone() });
        }
        if let Some(r) = x.rows.iter().find(|r| r.len() != self.n_features) {
            return Err(ModelError::Dimension(format!("row width {} != {}", r.len(), self.n_features)));
        }
        Ok(self.predict_rows(&x.rows))
    }

    /// Scores rows without the schema check; used by attribution code that
    /// perturbs an already validated table.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter()
            .map(|r| {
                let p = self.params.proba(r);
                if p.is_finite() { p.clamp(0.0, 1.0) } else { 0.5f64.next_down() }
            })
            .collect()
    }

    pub fn predict(&self, x: &FeatureTable) -> Result<Vec<u8>> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
    }

    pub fn to_envelope(&self) -> ModelEnvelope {
        ModelEnvelope {
            format_version: ENVELOPE_VERSION,
            kind: self.spec.kind(),
            hyperparameters: self.spec.hyper,
            seed: self.spec.seed,
            schema_hash: self.schema_hash.clone(),
            regime: self.regime,
            n_features: self.n_features,
            parameters: self.params.clone(),
        }
    }

    pub fn from_envelope(env: ModelEnvelope) -> Result<Self> {
        if env.format_version != ENVELOPE_VERSION {
            return Err(ModelError::Envelope(format!("unsupported version {}", env.format_version)));
        }
        if env.hyperparameters.kind() != env.kind {
            return Err(ModelError::Envelope("kind does not match hyperparameters".into()));
        }
        Ok(Self {
            spec: ClassifierSpec { hyper: env.hyperparameters, seed: env.seed },
            params: env.parameters,
            schema_hash: env.schema_hash,
            regime: env.regime,
            n_features: env.n_features,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_envelope()).expect("model envelope serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let env: ModelEnvelope = serde_json::from_str(s).map_err(|e| ModelError::Envelope(e.to_string()))?;
        Self::from_envelope(env)
    }
}
