use super::tree::{Criterion, MaxFeatures, Splitter, TreeParams};
use super::{ClassifierKind, ClassifierSpec, Hyper};

pub const KNN_K: [usize; 11] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];
pub const SVM_L_C: [f64; 9] = [0.0001, 0.001, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06];
pub const SVM_P_C: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1];
pub const SVM_P_DEGREE: [u32; 4] = [2, 3, 4, 5];
pub const DT_DEPTH: [Option<usize>; 5] = [None, Some(5), Some(10), Some(20), Some(30)];
pub const DT_MIN_SPLIT: [usize; 3] = [2, 5, 10];
pub const DT_MIN_LEAF: [usize; 3] = [1, 2, 4];
pub const DT_SPLITTER: [Splitter; 2] = [Splitter::Best, Splitter::Random];
pub const DT_MAX_FEATURES: [MaxFeatures; 2] = [MaxFeatures::Sqrt, MaxFeatures::Log2];
pub const DT_CRITERION: [Criterion; 2] = [Criterion::Gini, Criterion::Entropy];
pub const RF_N: [usize; 3] = [100, 200, 300];
pub const RF_DEPTH: [usize; 3] = [10, 15, 20];
pub const RF_MIN_SPLIT: [usize; 3] = [2, 5, 10];
pub const RF_MIN_LEAF: [usize; 3] = [1, 2, 4];
pub const RF_CRITERION: [Criterion; 3] = [Criterion::Gini, Criterion::Entropy, Criterion::LogLoss];
pub const MLP_NEURONS: [usize; 5] = [1, 10, 25, 50, 100];
pub const MLP_MAX_ITER: [usize; 3] = [100, 500, 1000];
pub const ADB_DEPTH: [usize; 3] = [1, 2, 3];
pub const ADB_ROUNDS: usize = 100;

fn tree_cells(depths: &[Option<usize>]) -> Vec<TreeParams> {
    let mut out = Vec::new();
    for &max_depth in depths {
        for &min_samples_split in &DT_MIN_SPLIT {
            for &min_samples_leaf in &DT_MIN_LEAF {
                for &splitter in &DT_SPLITTER {
                    for &max_features in &DT_MAX_FEATURES {
                        for &criterion in &DT_CRITERION {
                            out.push(TreeParams { max_depth, min_samples_split, min_samples_leaf, splitter, max_features, criterion });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Every grid cell for `kind`, in a fixed nested-loop order.
pub fn grid(kind: ClassifierKind) -> Vec<Hyper> {
    match kind {
        ClassifierKind::Knn => KNN_K.iter().map(|&k| Hyper::Knn { k }).collect(),
        ClassifierKind::SvmL => SVM_L_C.iter().map(|&c| Hyper::SvmL { c }).collect(),
        ClassifierKind::SvmP => SVM_P_C
            .iter()
            .flat_map(|&c| SVM_P_DEGREE.iter().map(move |&degree| Hyper::SvmP { c, degree }))
            .collect(),
        ClassifierKind::Gp => vec![Hyper::Gp],
        ClassifierKind::Dt => tree_cells(&DT_DEPTH).into_iter().map(|tree| Hyper::Dt { tree }).collect(),
        ClassifierKind::Adb => {
            let depths: Vec<Option<usize>> = ADB_DEPTH.iter().map(|&d| Some(d)).collect();
            tree_cells(&depths).into_iter().map(|tree| Hyper::Adb { rounds: ADB_ROUNDS, tree }).collect()
        }
        ClassifierKind::Rf => {
            let mut out = Vec::new();
            for &n_estimators in &RF_N {
                for &depth in &RF_DEPTH {
                    for &min_samples_split in &RF_MIN_SPLIT {
                        for &min_samples_leaf in &RF_MIN_LEAF {
                            for &criterion in &RF_CRITERION {
                                let tree = TreeParams {
                                    max_depth: Some(depth),
                                    min_samples_split,
                                    min_samples_leaf,
                                    splitter: Splitter::Best,
                                    max_features: MaxFeatures::Log2,
                                    criterion,
                                };
                                out.push(Hyper::Rf { n_estimators, tree, bootstrap: true });
                            }
                        }
                    }
                }
            }
            out
        }
        ClassifierKind::Mlp => MLP_NEURONS
            .iter()
            .flat_map(|&neurons| MLP_MAX_ITER.iter().map(move |&max_iter| Hyper::Mlp { neurons, max_iter }))
            .collect(),
    }
}

/// Reported optima; GP has no hyperparameters and ADB uses 100 stumps.
pub fn shipped_defaults(kind: ClassifierKind, seed: u64) -> ClassifierSpec {
    let hyper = match kind {
        ClassifierKind::Knn => Hyper::Knn { k: 7 },
        ClassifierKind::SvmL => Hyper::SvmL { c: 0.001 },
        ClassifierKind::SvmP => Hyper::SvmP { c: 1.1, degree: 3 },
        ClassifierKind::Gp => Hyper::Gp,
        ClassifierKind::Dt => Hyper::Dt {
            tree: TreeParams {
                max_depth: Some(10),
                min_samples_split: 2,
                min_samples_leaf: 2,
                splitter: Splitter::Random,
                max_features: MaxFeatures::Sqrt,
                criterion: Criterion::Gini,
            },
        },
        ClassifierKind::Adb => Hyper::Adb {
            rounds: ADB_ROUNDS,
            tree: TreeParams {
                max_depth: Some(1),
                min_samples_split: 2,
                min_samples_leaf: 1,
                splitter: Splitter::Best,
                max_features: MaxFeatures::Sqrt,
                criterion: Criterion::Gini,
            },
        },
        ClassifierKind::Rf => Hyper::Rf {
            n_estimators: 200,
            tree: TreeParams {
                max_depth: Some(10),
                min_samples_split: 2,
                min_samples_leaf: 1,
                splitter: Splitter::Best,
                max_features: MaxFeatures::Log2,
                criterion: Criterion::Gini,
            },
            bootstrap: true,
        },
        ClassifierKind::Mlp => Hyper::Mlp { neurons: 100, max_iter: 1000 },
    };
    ClassifierSpec { hyper, seed }
}
