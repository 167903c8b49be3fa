use gaitrisk_deepnet::gradcheck::{check_graph, jitter_params, layer_suite, LAYER_KINDS};
use gaitrisk_deepnet::layers::{Dense, ForwardCtx};
use gaitrisk_deepnet::nets::{CnnConfig, CnnNet, LstmConfig, LstmNet, NetInput, Network};
use gaitrisk_deepnet::train::{batch_loss, batch_loss_vars};
use gaitrisk_deepnet::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn every_layer_matches_finite_differences() {
    for (i, kind) in LAYER_KINDS.iter().enumerate() {
        let r = layer_suite(kind, 50, 100 + i as u64).unwrap();
        assert!(r.max_rel_error < TOL, "{kind}: {r:?}");
    }
}

fn tiny_cnn(points: Option<usize>) -> CnnNet {
    let mut cfg = CnnConfig::new(2, 2, points);
    cfg.time_steps = 8;
    cfg.filters = 4;
    cfg.se_reduction = 2;
    cfg.branch_widths = (3, 4);
    cfg.head_width = 3;
    cfg.seed = 11;
    CnnNet::new(cfg).unwrap()
}

#[test]
fn tiny_cnn_every_parameter_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = tiny_cnn(Some(3));
    jitter_params(net.store_mut(), &mut rng, 0.3);
    let stance = random_tensor(&mut rng, &[3, 8, 2, 2]);
    let points = random_tensor(&mut rng, &[3, 3]);
    let labels = [1.0, 0.0, 1.0];
    let r = check_graph(net.store(), &stance, 0, H, |g, s, x| {
        // The whole network, including noise, dropout and batch statistics, with
        // the stance tensor routed through the input leaf under test.
        let mut probe = net.clone();
        *probe.store_mut() = s.clone();
        let pts = g.input(points.clone());
        let mut ctx = ForwardCtx::train(42);
        let (loss, _) = batch_loss_vars(&probe, g, x, Some(pts), &labels, &mut ctx)?;
        Ok(loss)
    })
    .unwrap();
    assert!(r.checked > 100);
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn tiny_lstm_net_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cfg = LstmConfig::new(2, 2);
    cfg.time_steps = 6;
    cfg.conv_filters = 2;
    cfg.lstm_units = 3;
    cfg.dense_width = 4;
    cfg.seed = 3;
    let mut net = LstmNet::new(cfg).unwrap();
    jitter_params(net.store_mut(), &mut rng, 0.3);
    let stance = random_tensor(&mut rng, &[2, 6, 2, 2]);
    let r = check_graph(net.store(), &stance, 1, H, |g, s, _x| {
        let mut probe = net.clone();
        *probe.store_mut() = s.clone();
        let input = NetInput { stance: stance.clone(), points: None };
        let (loss, _) = batch_loss(&probe, g, input, &[0.0, 1.0], &mut ForwardCtx::train(5))?;
        Ok(loss)
    })
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn dense_bce_gradient_is_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "d", 4, 1, 0.0, &mut rng);
    let x = random_tensor(&mut rng, &[1, 4]);
    let y = 1.0;
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let z = layer.forward(&mut g, &store, xv).unwrap();
    let loss = g.bce_with_logits(z, &[y]).unwrap();
    let grads = g.backward(loss).unwrap();
    let p = 1.0 / (1.0 + (-g.value(z).data()[0]).exp());
    let wv = g.param(&store, layer.w);
    let gw = grads.get(wv).unwrap();
    for (gi, xi) in gw.data().iter().zip(x.data()) {
        assert!((gi - (p - y) * xi).abs() < 1e-12);
    }
}

#[test]
fn l2_penalty_gradient_is_two_lambda_w() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let lambda = 0.37;
    let layer = Dense::new(&mut store, "d", 3, 2, lambda, &mut rng);
    let mut g = Graph::new();
    let w = g.param(&store, layer.w);
    let sq = g.sum_squares(w);
    let pen = g.scale(sq, lambda);
    let grads = g.backward(pen).unwrap();
    for (gi, wi) in grads.get(w).unwrap().data().iter().zip(store.get(layer.w).data()) {
        assert_eq!(*gi, 2.0 * wi * lambda);
    }
}
