use gaitrisk_deepnet::gradcheck::jitter_params;
use gaitrisk_deepnet::weights;
use gaitrisk_deepnet::{
    predict_proba, train, ArchitectureConfig, BatchSampler, CnnConfig, CnnNet, DeepModel, ForwardCtx, Graph,
    LstmConfig, NetError, NetInput, Network, Tensor, TrainConfig, TrainSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cnn(points: Option<usize>, seed: u64) -> CnnNet {
    let mut cfg = CnnConfig::new(2, 2, points);
    cfg.time_steps = 8;
    cfg.filters = 4;
    cfg.se_reduction = 2;
    cfg.branch_widths = (3, 4);
    cfg.head_width = 4;
    cfg.seed = seed;
    CnnNet::new(cfg).unwrap()
}

/// Positives carry a +1 offset on the first channel of every time step.
fn separable_set(n: usize, points: bool, seed: u64) -> TrainSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let stances = labels
        .iter()
        .map(|&y| {
            let data = (0..8 * 2 * 2)
                .map(|i| rng.random_range(-0.5..0.5) + if y == 1 && i % 4 == 0 { 1.0 } else { 0.0 })
                .collect();
            Tensor::new(vec![8, 2, 2], data).unwrap()
        })
        .collect();
    let points = points.then(|| labels.iter().map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect());
    TrainSet { stances, points, labels }
}

fn trainable_bits(net: &dyn Network) -> Vec<u64> {
    let store = net.store();
    store
        .trainable_ids()
        .flat_map(|id| store.get(id).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let data = separable_set(20, true, 1);
    let mut net = small_cnn(Some(3), 2);
    let before = trainable_bits(&net);
    let cfg = TrainConfig { lr: 0.0, epochs: 7, batch_size: 4, patience: None, ..TrainConfig::default() };
    let history = train(&mut net, &data, &cfg).unwrap();
    assert!(history.updates > 0);
    assert_eq!(trainable_bits(&net), before);
}

#[test]
fn separable_task_is_learned_within_200_epochs() {
    let data = separable_set(64, false, 3);
    let mut net = small_cnn(None, 4);
    let cfg = TrainConfig { epochs: 200, batch_size: 8, patience: None, ..TrainConfig::default() };
    let history = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(history.epochs.len(), 200);
    let p = predict_proba(&net, &data, 32).unwrap();
    let correct = p.iter().zip(&data.labels).filter(|(p, &y)| (**p >= 0.5) == (y == 1)).count();
    let acc = correct as f64 / data.len() as f64;
    assert!(acc >= 0.99, "train accuracy {acc}");
}

#[test]
fn balanced_sampler_halves_every_batch() {
    let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 10 == 0)).collect();
    for batch_size in [8, 13, 32] {
        let mut sampler = BatchSampler::new(&labels, batch_size, true, 5);
        for _ in 0..20 {
            let batches = sampler.epoch();
            assert_eq!(batches.len(), labels.len().div_ceil(batch_size));
            for b in batches {
                let pos = b.iter().filter(|&&i| labels[i] == 1).count() as f64;
                assert!((pos - b.len() as f64 / 2.0).abs() <= 1.0, "{pos} of {}", b.len());
            }
        }
    }
}

#[test]
fn unbalanced_sampler_covers_each_sample_once_per_epoch() {
    let labels: Vec<u8> = (0..37).map(|i| u8::from(i % 3 == 0)).collect();
    let mut sampler = BatchSampler::new(&labels, 8, false, 6);
    let mut seen: Vec<usize> = sampler.epoch().into_iter().flatten().collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..37).collect::<Vec<_>>());
}

#[test]
fn training_is_bit_reproducible() {
    let data = separable_set(24, true, 7);
    let cfg = TrainConfig { lr: 1e-3, epochs: 5, batch_size: 6, seed: 9, ..TrainConfig::default() };
    let run = || {
        let mut net = small_cnn(Some(3), 8);
        let h = train(&mut net, &data, &cfg).unwrap();
        (weights::encode(net.store()), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn history_reports_per_epoch_metrics() {
    let data = separable_set(16, false, 10);
    let mut net = small_cnn(None, 11);
    let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let h = train(&mut net, &data, &cfg).unwrap();
    assert_eq!(h.epochs.len(), 3);
    // 16 samples in batches of 4, two micro-batches per update.
    assert_eq!(h.updates, 6);
    for e in &h.epochs {
        assert!(e.loss.is_finite());
        for m in [e.accuracy, e.precision, e.recall] {
            assert!((0.0..=1.0).contains(&m));
        }
    }
}

#[test]
fn non_finite_loss_aborts_with_state() {
    let mut data = separable_set(8, false, 12);
    data.stances[0].data_mut()[0] = f64::NAN;
    let mut net = small_cnn(None, 13);
    let cfg = TrainConfig { epochs: 2, batch_size: 8, ..TrainConfig::default() };
    match train(&mut net, &data, &cfg) {
        Err(NetError::Divergence { epoch, state_dump, .. }) => {
            assert_eq!(epoch, 0);
            assert_eq!(state_dump.len(), net.store().len());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn single_class_training_is_rejected() {
    let mut data = separable_set(8, false, 14);
    data.labels.iter_mut().for_each(|y| *y = 0);
    let mut net = small_cnn(None, 15);
    assert!(matches!(train(&mut net, &data, &TrainConfig::default()), Err(NetError::SingleClass)));
}

#[test]
fn invalid_train_config_is_rejected() {
    let bad = [
        TrainConfig { lr: -1.0, ..TrainConfig::default() },
        TrainConfig { rho: 1.0, ..TrainConfig::default() },
        TrainConfig { grad_accumulation: 0, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err());
    }
}

fn model_probs(model: &DeepModel, input: &NetInput) -> Vec<f64> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, input.clone(), &mut ForwardCtx::eval()).unwrap();
    g.value(out.prob).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn envelope_round_trip_preserves_weights(seed in any::<u64>(), lstm in any::<bool>()) {
        let config = if lstm {
            ArchitectureConfig::Lstm(LstmConfig { time_steps: 4, conv_filters: 2, lstm_units: 3, dense_width: 2, seed, ..LstmConfig::new(2, 2) })
        } else {
            ArchitectureConfig::Cnn(small_cnn(Some(3), seed).config)
        };
        let mut model = DeepModel::build(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        jitter_params(model.store_mut(), &mut rng, 0.5);
        let (env, blob) = model.to_envelope();
        let json = serde_json::to_string(&env).unwrap();
        let back = DeepModel::from_envelope(&serde_json::from_str(&json).unwrap(), &blob).unwrap();
        prop_assert_eq!(weights::encode(back.store()), blob);

        let t = if lstm { 4 } else { 8 };
        let input = NetInput {
            stance: Tensor::new(vec![2, t, 2, 2], (0..t * 8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap(),
            points: (!lstm).then(|| Tensor::full(&[2, 3], 0.25)),
        };
        prop_assert_eq!(model_probs(&model, &input), model_probs(&back, &input));
    }

    #[test]
    fn truncated_blob_is_rejected(cut in 1usize..64) {
        let model = DeepModel::Cnn(small_cnn(None, 1));
        let (env, blob) = model.to_envelope();
        let short = &blob[..blob.len() - cut];
        prop_assert!(DeepModel::from_envelope(&env, short).is_err());
        let mut long = blob.clone();
        long.extend(std::iter::repeat_n(0u8, cut));
        prop_assert!(DeepModel::from_envelope(&env, &long).is_err());
    }
}
