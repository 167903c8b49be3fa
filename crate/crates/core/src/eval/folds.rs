use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    fn from_groups(groups: Vec<Vec<String>>, all: &BTreeSet<String>) -> Self {
        let folds = groups
            .into_iter()
            .map(|mut test| {
                test.sort();
                let held: BTreeSet<&String> = test.iter().collect();
                let train = all.iter().filter(|s| !held.contains(s)).cloned().collect();
                Fold { train_subjects: train, test_subjects: test }
            })
            .collect::<Vec<_>>();
        Self { k: folds.len(), folds }
    }

    /// Disjoint train/test per fold, pairwise disjoint test sets, and full coverage of `subjects`.
    pub fn check<'a>(&self, subjects: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, f) in self.folds.iter().enumerate() {
            let train: BTreeSet<&str> = f.train_subjects.iter().map(String::as_str).collect();
            let shared: Vec<String> = f.test_subjects.iter().filter(|s| train.contains(s.as_str())).cloned().collect();
            if !shared.is_empty() {
                return Err(EvalError::Leakage { fold: i, subjects: shared });
            }
            for s in &f.test_subjects {
                if seen.insert(s.as_str(), i).is_some() {
                    return Err(EvalError::Leakage { fold: i, subjects: vec![s.clone()] });
                }
            }
        }
        let missing: Vec<String> = subjects.into_iter().filter(|s| !seen.contains_key(s)).map(str::to_owned).collect();
        if missing.is_empty() { Ok(()) } else { Err(EvalError::Coverage(missing)) }
    }

    /// Index of the fold whose test set holds `subject`.
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.test_subjects.iter().any(|s| s == subject))
    }
}

fn distinct<'a>(subjects: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    subjects.into_iter().map(str::to_owned).collect()
}

/// Shuffles the distinct subjects with `seed` and deals them round-robin into `k` test groups.
pub fn split_by_subject<'a>(subjects: impl IntoIterator<Item = &'a str>, k: usize, seed: u64) -> Result<FoldPlan> {
    let all = distinct(subjects);
    if k < 2 || all.len() < k {
        return Err(EvalError::TooFewSubjects { need: k.max(2), have: all.len() });
    }
    let mut order: Vec<String> = all.iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = vec![Vec::new(); k];
    for (i, s) in order.into_iter().enumerate() {
        groups[i % k].push(s);
    }
    Ok(FoldPlan::from_groups(groups, &all))
}

/// Round-robin deal of a per-class shuffle (negatives first, then positives,
/// one running counter), so every fold receives both classes whenever each
/// class has at least `k` subjects. A subject's class is the label of its
/// first record.
pub fn split_by_subject_stratified(subject_labels: &[(String, u8)], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut label_of: BTreeMap<&str, u8> = BTreeMap::new();
    for (s, y) in subject_labels {
        label_of.entry(s.as_str()).or_insert(*y);
    }
    let all = distinct(label_of.keys().copied());
    if k < 2 || all.len() < k {
        return Err(EvalError::TooFewSubjects { need: k.max(2), have: all.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = vec![Vec::new(); k];
    let mut slot = 0;
    for class in [0u8, 1] {
        let mut members: Vec<String> = label_of.iter().filter(|(_, &y)| y == class).map(|(s, _)| (*s).to_owned()).collect();
        members.shuffle(&mut rng);
        for s in members {
            groups[slot % k].push(s);
            slot += 1;
        }
    }
    Ok(FoldPlan::from_groups(groups, &all))
}
