use std::collections::BTreeSet;

use gaitrisk_deepnet::{Tensor, TrainSet};
use serde::{Deserialize, Serialize};

use super::{EvalError, Fold, Result};
use crate::classic::{FeatureTable, InputRegime};
use crate::dataset::Task;
use crate::features::{feature_matrix, FeatureSchema, ScalerParams};
use crate::gait::{StanceTensor, CHANNELS, STANCE_SAMPLES};
use crate::pipeline::ProcessedRecord;
use crate::seed::sha256_hex;

/// Per-record inputs for one binary task.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub task: Task,
    pub record_ids: Vec<String>,
    pub subject_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub point_schema: FeatureSchema,
    pub points: Vec<Vec<f64>>,
    pub stances: Vec<StanceTensor>,
    pub structures: usize,
    pub row_labels: Vec<String>,
}

/// Mean and std of each structure-channel slot, pooled over records and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceScaler {
    pub slots: ScalerParams,
}

impl StanceScaler {
    pub fn fit(stances: &[&StanceTensor]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = stances.iter().flat_map(|s| s.data.chunks(s.structures() * CHANNELS).map(<[f64]>::to_vec)).collect();
        Ok(Self { slots: ScalerParams::fit(&rows)? })
    }

    pub fn apply(&self, s: &StanceTensor) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(s.data.len());
        for chunk in s.data.chunks(s.structures() * CHANNELS) {
            out.extend(self.slots.apply_row(chunk)?);
        }
        Ok(out)
    }
}

/// Standardised inputs of one outer fold in both classic and network layouts.
#[derive(Debug, Clone)]
pub struct FoldInputs {
    pub regime: InputRegime,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub train_table: FeatureTable,
    pub test_table: FeatureTable,
    pub train_set: TrainSet,
    pub test_set: TrainSet,
    pub y_train: Vec<u8>,
    pub y_test: Vec<u8>,
    pub train_subjects: Vec<String>,
    pub point_scaler: ScalerParams,
    pub stance_scaler: StanceScaler,
}

impl ExperimentData {
    /// Keeps the records that belong to `task`.
    pub fn from_processed(records: &[ProcessedRecord], task: Task) -> Result<Self> {
        let kept: Vec<(&ProcessedRecord, u8)> =
            records.iter().filter_map(|r| task.binary_label(r.label).map(|y| (r, y))).collect();
        if kept.is_empty() {
            return Err(EvalError::Data(format!("no records for task {task}")));
        }
        let labels: Vec<u8> = kept.iter().map(|(_, y)| *y).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            return Err(EvalError::Data(format!("task {task} needs both classes")));
        }
        let vectors: Vec<_> = kept.iter().map(|(r, _)| r.features.clone()).collect();
        let (point_schema, points) = feature_matrix(&vectors)?;
        let first = &kept[0].0.tensor;
        let row_labels = first.row_labels();
        for (r, _) in &kept {
            if r.tensor.structure_labels != first.structure_labels || r.tensor.data.len() != first.data.len() {
                return Err(EvalError::Data(format!("record {} has a different stance layout", r.record_id)));
            }
        }
        Ok(Self {
            task,
            record_ids: kept.iter().map(|(r, _)| r.record_id.clone()).collect(),
            subject_ids: kept.iter().map(|(r, _)| r.subject_id.clone()).collect(),
            labels,
            point_schema,
            points,
            stances: kept.iter().map(|(r, _)| r.tensor.clone()).collect(),
            structures: first.structures(),
            row_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subject_labels(&self) -> Vec<(String, u8)> {
        self.subject_ids.iter().cloned().zip(self.labels.iter().copied()).collect()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.subject_ids.iter().map(String::as_str).collect()
    }

    /// Schema tag of the classic design matrix for `regime`.
    pub fn table_hash(&self, regime: InputRegime) -> String {
        let mut text = format!("{}\n", regime.name());
        if regime != InputRegime::Points {
            text.push_str(&self.row_labels.join(","));
            text.push_str(&format!("\n{STANCE_SAMPLES}\n"));
        }
        if regime != InputRegime::TimeSeries {
            text.push_str(&self.point_schema.hash());
        }
        sha256_hex(text.as_bytes())[..16].to_owned()
    }

    fn tensor(&self, data: Vec<f64>) -> Result<Tensor> {
        Ok(Tensor::new(vec![STANCE_SAMPLES, self.structures, CHANNELS], data)?)
    }

    /// Fits both scalers on the fold's training records and applies them.
    pub fn fold_inputs(&self, fold: &Fold, regime: InputRegime) -> Result<FoldInputs> {
        let test: BTreeSet<&str> = fold.test_subjects.iter().map(String::as_str).collect();
        let train: BTreeSet<&str> = fold.train_subjects.iter().map(String::as_str).collect();
        let train_idx: Vec<usize> = (0..self.len()).filter(|&i| train.contains(self.subject_ids[i].as_str())).collect();
        let test_idx: Vec<usize> = (0..self.len()).filter(|&i| test.contains(self.subject_ids[i].as_str())).collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(EvalError::Data("fold has an empty train or test side".into()));
        }
        let train_points: Vec<Vec<f64>> = train_idx.iter().map(|&i| self.points[i].clone()).collect();
        let point_scaler = ScalerParams::fit(&train_points)?;
        let train_stances: Vec<&StanceTensor> = train_idx.iter().map(|&i| &self.stances[i]).collect();
        let stance_scaler = StanceScaler::fit(&train_stances)?;

        let hash = self.table_hash(regime);
        let build = |idx: &[usize]| -> Result<(FeatureTable, TrainSet)> {
            let mut rows = Vec::with_capacity(idx.len());
            let mut stances = Vec::with_capacity(idx.len());
            let mut pts = Vec::with_capacity(idx.len());
            for &i in idx {
                let s = stance_scaler.apply(&self.stances[i])?;
                let p = point_scaler.apply_row(&self.points[i])?;
                let row = match regime {
                    InputRegime::Points => p.clone(),
                    InputRegime::TimeSeries => s.clone(),
                    InputRegime::TsPlusPoints => s.iter().chain(&p).copied().collect(),
                };
                rows.push(row);
                stances.push(self.tensor(s)?);
                pts.push(p);
            }
            let labels = idx.iter().map(|&i| self.labels[i]).collect();
            let points = (regime == InputRegime::TsPlusPoints).then_some(pts);
            Ok((FeatureTable { schema_hash: hash.clone(), rows }, TrainSet { stances, points, labels }))
        };
        let (train_table, train_set) = build(&train_idx)?;
        let (test_table, test_set) = build(&test_idx)?;
        Ok(FoldInputs {
            regime,
            y_train: train_set.labels.clone(),
            y_test: test_set.labels.clone(),
            train_subjects: train_idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            train_idx,
            test_idx,
            train_table,
            test_table,
            train_set,
            test_set,
            point_scaler,
            stance_scaler,
        })
    }
}
