use gaitrisk_core::explain::{
    gradcam, pdp, quantile_grid, saliency, shapley, shapley_ranking, shapley_time_map, superpixels, ExplainError,
    ShapleyConfig, ShapleyMode, SmoothGradConfig,
};
use gaitrisk_deepnet::{CnnConfig, CnnNet, ForwardCtx, Graph, NetOutput, Network, ParamId, ParamStore, Tensor, TrainSet, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Model = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

fn model(f: impl Fn(&[f64]) -> f64 + 'static) -> Model {
    Box::new(move |rows: &[Vec<f64>]| rows.iter().map(|r| f(r)).collect())
}

fn exact(baseline: Vec<f64>) -> ShapleyConfig {
    ShapleyConfig { mode: ShapleyMode::Exact, baseline, groups: None }
}

#[test]
fn additive_model_recovers_coefficients() {
    let f = model(|x| 2.0 * x[0] + 3.0 * x[1]);
    let r = shapley(&*f, &[1.0, 1.0], &exact(vec![0.0, 0.0])).unwrap();
    // Both orders: (a then b) gives (2, 3); (b then a) gives (2, 3).
    assert_eq!(r.phi, vec![2.0, 3.0]);
    assert_eq!(r.efficiency_residual, 0.0);
}

fn brute_force_permutations(f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>, x: &[f64], base: &[f64]) -> Vec<f64> {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    let n = x.len();
    let all = perms(n);
    let mut phi = vec![0.0; n];
    for order in &all {
        let mut row = base.to_vec();
        let mut prev = f(&[row.clone()])[0];
        for &j in order {
            row[j] = x[j];
            let cur = f(&[row.clone()])[0];
            phi[j] += (cur - prev) / all.len() as f64;
            prev = cur;
        }
    }
    phi
}

#[test]
fn exact_mode_matches_permutation_enumeration() {
    let f = model(|x| (x[0] * x[1]).tanh() + x[2].powi(2) * x[3] - 0.5 * x[4] + (x[0] - x[4]).sin());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = shapley(&*f, &x, &exact(b.clone())).unwrap();
        for (a, o) in r.phi.iter().zip(brute_force_permutations(&*f, &x, &b)) {
            assert!((a - o).abs() < 1e-12);
        }
        assert!(r.efficiency_residual < 1e-9);
    }
}

#[test]
fn exact_axioms_hold() {
    // Symmetric in (0, 1); ignores 2.
    let f = model(|x| x[0] * x[1] + x[0] + x[1] + (x[0] + x[1]).exp() * x[3]);
    let r = shapley(&*f, &[0.7, 0.7, 5.0, -1.2], &exact(vec![0.1, 0.1, 0.0, 0.3])).unwrap();
    assert!((r.phi[0] - r.phi[1]).abs() < 1e-9);
    assert!(r.phi[2].abs() < 1e-9);
    assert!(r.efficiency_residual < 1e-9);
}

#[test]
fn exact_mode_rejects_large_games_and_mc_needs_100_permutations() {
    let f = model(|x| x.iter().sum());
    let err = shapley(&*f, &[0.0; 13], &exact(vec![0.0; 13])).unwrap_err();
    assert!(matches!(err, ExplainError::TooManyFeaturesForExact(13)));
    let cfg = ShapleyConfig { mode: ShapleyMode::MonteCarlo { permutations: 99, seed: 0 }, baseline: vec![0.0; 3], groups: None };
    assert!(matches!(shapley(&*f, &[1.0; 3], &cfg), Err(ExplainError::TooFewPermutations(99))));
}

fn mc(f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>, x: &[f64], p: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let cfg = ShapleyConfig { mode: ShapleyMode::MonteCarlo { permutations: p, seed }, baseline: vec![0.0; x.len()], groups: None };
    let r = shapley(f, x, &cfg).unwrap();
    assert!(r.efficiency_residual < 1e-9);
    (r.phi, r.std_error.unwrap())
}

#[test]
fn monte_carlo_converges_at_the_root_n_rate() {
    let f = model(|x| x[0] * x[1] * x[2] + (x[3] * x[4]).sin() + x[5] * x[0]);
    let x = [1.0, -2.0, 1.5, 0.5, 2.0, -1.0];
    let truth = shapley(&*f, &x, &exact(vec![0.0; 6])).unwrap().phi;
    let (mut se1, mut se2) = (0.0, 0.0);
    for seed in 0..20 {
        let (phi, se) = mc(&*f, &x, 400, seed);
        se1 += se.iter().sum::<f64>();
        se2 += mc(&*f, &x, 800, seed + 100).1.iter().sum::<f64>();
        for ((p, t), s) in phi.iter().zip(&truth).zip(&se) {
            assert!((p - t).abs() < 5.0 * s + 1e-12);
        }
    }
    let ratio = se2 / se1;
    assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.3 * std::f64::consts::FRAC_1_SQRT_2, "{ratio}");
}

#[test]
fn superpixels_partition_the_tensor() {
    let groups = superpixels(101, 10, 9, 10, 3);
    assert_eq!(groups.len(), 10 * 11 + 3);
    let mut seen = vec![0; 101 * 90 + 3];
    for j in groups.iter().flatten() {
        seen[*j] += 1;
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn time_map_spreads_superpixel_values() {
    // Only structure 1 at t < 10 matters.
    let (t, a, c) = (20, 2, 1);
    let f = model(move |x| (0..10).map(|s| x[s * a + 1]).sum::<f64>());
    let case: Vec<f64> = vec![1.0; t * a * c];
    let labels = vec!["s0:x".to_owned(), "s1:x".to_owned()];
    let m = shapley_time_map(&*f, &[case], &vec![0.0; t * a * c], (t, a, c), 10, 100, 3, &labels).unwrap();
    assert_eq!(m.shape(), (2, 20));
    assert!((m.values[1][..10].iter().sum::<f64>() - 10.0).abs() < 1e-9);
    assert!(m.values[0].iter().chain(&m.values[1][10..]).all(|v| v.abs() < 1e-12));
}

#[test]
fn ranking_orders_by_magnitude() {
    let f = model(|x| x[0] - 4.0 * x[1] + 0.5 * x[2]);
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let m = shapley_ranking(&*f, &[vec![1.0, 1.0, 1.0]], &[0.0; 3], &names, 100, 0).unwrap();
    assert_eq!(m.row_labels, vec!["b", "a", "c"]);
    assert_eq!(m.values[0], vec![-4.0]);
}

#[test]
fn pdp_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let grid = quantile_grid(&rows.iter().map(|r| r[2]).collect::<Vec<_>>(), 11).unwrap();
    assert!(grid.windows(2).all(|w| w[0] <= w[1]));

    let ignores_c = model(|x| 1.0 / (1.0 + (-(x[0] + x[1])).exp()));
    let flat = pdp(&*ignores_c, &rows, &names, "c", &grid).unwrap();
    let (lo, hi) = flat.mean_prediction.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    assert!(hi - lo < 1e-12);

    let logistic = model(|x| 1.0 / (1.0 + (-(2.0 * x[2] - x[0])).exp()));
    let mono = pdp(&*logistic, &rows, &names, "c", &grid).unwrap();
    assert!(mono.mean_prediction.windows(2).all(|w| w[1] >= w[0]));

    let linear = model(|x| 0.5 + 0.1 * x[0] + 0.2 * x[1]);
    let curve = pdp(&*linear, &rows, &names, "b", &[-1.0, 0.0, 1.0]).unwrap();
    for w in curve.mean_prediction.windows(2) {
        assert!((w[1] - w[0] - 0.2).abs() < 1e-9);
    }
    assert!(matches!(pdp(&*linear, &rows, &names, "zzz", &grid), Err(ExplainError::UnknownFeature(_))));
    assert!(matches!(pdp(&*linear, &rows, &names, "a", &[0.0]), Err(ExplainError::GridTooSmall(1))));
}

/// `sigmoid(w . flatten(x) + b)` over `[B, T, A, C]` inputs.
struct LinearNet {
    store: ParamStore,
    w: ParamId,
    b: ParamId,
    dims: (usize, usize, usize),
}

impl LinearNet {
    fn new(dims: (usize, usize, usize), weights: Vec<f64>) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![n, 1], weights).unwrap());
        let b = store.add("b", Tensor::new(vec![1], vec![0.1]).unwrap());
        Self { store, w, b, dims }
    }
}

impl Network for LinearNet {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_dims(&self) -> (usize, usize, usize) {
        self.dims
    }
    fn point_dims(&self) -> Option<usize> {
        None
    }
    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, _ctx: &mut ForwardCtx) -> gaitrisk_deepnet::Result<NetOutput> {
        let b = g.shape(stance)[0];
        let flat = g.reshape(stance, &[b, self.dims.0 * self.dims.1 * self.dims.2])?;
        let w = g.param(&self.store, self.w);
        let bias = g.param(&self.store, self.b);
        let z = g.matmul(flat, w)?;
        let logit = g.add_bias(z, bias)?;
        let prob = g.sigmoid(logit);
        Ok(NetOutput { stance, points, logit, prob, taps: vec![] })
    }
}

fn cases(dims: (usize, usize, usize), n: usize, seed: u64) -> TrainSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.0 * dims.1 * dims.2;
    let stances = (0..n)
        .map(|_| Tensor::new(vec![dims.0, dims.1, dims.2], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let labels = (0..n).map(|i| u8::from(i % 3 != 0)).collect();
    TrainSet { stances, points: None, labels }
}

fn labels(a: usize, c: usize) -> Vec<String> {
    (0..a * c).map(|i| format!("r{i}")).collect()
}

#[test]
fn linear_saliency_tracks_weight_magnitudes() {
    let dims = (12, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut weights: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Slot 4 has no fan-out.
    for t in 0..12 {
        weights[t * 6 + 4] = 0.0;
    }
    let net = LinearNet::new(dims, weights.clone());
    let data = cases(dims, 6, 5);
    let m = saliency(&net, &data, &labels(2, 3), &SmoothGradConfig { seed: 1, ..SmoothGradConfig::default() }).unwrap();
    assert_eq!(m.shape(), (6, 12));
    let (mut dot, mut nm, mut nw) = (0.0, 0.0, 0.0);
    for slot in 0..6 {
        for t in 0..12 {
            let (s, w) = (m.values[slot][t], weights[t * 6 + slot].abs());
            assert!(s >= 0.0);
            dot += s * w;
            nm += s * s;
            nw += w * w;
        }
    }
    assert!(dot / (nm.sqrt() * nw.sqrt()) > 0.999);
    assert!(m.values[4].iter().all(|&v| v == 0.0));
}

#[test]
fn noiseless_single_sample_is_the_plain_gradient() {
    let dims = (5, 1, 2);
    let weights: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) / 3.0).collect();
    let net = LinearNet::new(dims, weights.clone());
    let data = cases(dims, 3, 6);
    let cfg = SmoothGradConfig { samples: 1, sigma_fraction: 0.0, seed: 0 };
    let m = saliency(&net, &data, &labels(1, 2), &cfg).unwrap();
    let positives: Vec<usize> = (0..3).filter(|&i| data.labels[i] == 1).collect();
    for slot in 0..2 {
        for t in 0..5 {
            let mut expected = 0.0;
            for &i in &positives {
                let z: f64 = data.stances[i].data().iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() + 0.1;
                let s = 1.0 / (1.0 + (-z).exp());
                expected += (s * (1.0 - s) * weights[t * 2 + slot]).abs() / positives.len() as f64;
            }
            assert!((m.values[slot][t] - expected).abs() < 1e-9);
        }
    }
}

#[test]
fn saliency_needs_positive_cases() {
    let dims = (4, 1, 1);
    let net = LinearNet::new(dims, vec![1.0; 4]);
    let mut data = cases(dims, 2, 0);
    data.labels = vec![0, 0];
    assert!(matches!(saliency(&net, &data, &labels(1, 1), &SmoothGradConfig::default()), Err(ExplainError::NoPositiveCases)));
}

/// `[B, 8, 1, 1] -> conv(k=1) tap -> dense -> sigmoid`.
struct TinyConv {
    store: ParamStore,
    w: ParamId,
    b: ParamId,
    v: ParamId,
}

impl TinyConv {
    fn new(w: f64, b: f64, v: Vec<f64>) -> Self {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![1, 1, 1], vec![w]).unwrap());
        let b = store.add("b", Tensor::new(vec![1], vec![b]).unwrap());
        let v = store.add("v", Tensor::new(vec![8, 1], v).unwrap());
        Self { store, w, b, v }
    }
}

impl Network for TinyConv {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn input_dims(&self) -> (usize, usize, usize) {
        (8, 1, 1)
    }
    fn point_dims(&self) -> Option<usize> {
        None
    }
    fn forward_vars(&self, g: &mut Graph, stance: Var, points: Option<Var>, _ctx: &mut ForwardCtx) -> gaitrisk_deepnet::Result<NetOutput> {
        let bsz = g.shape(stance)[0];
        let x = g.reshape(stance, &[bsz, 8, 1])?;
        let (w, b, v) = (g.param(&self.store, self.w), g.param(&self.store, self.b), g.param(&self.store, self.v));
        let act = g.conv1d(x, w, Some(b))?;
        let flat = g.reshape(act, &[bsz, 8])?;
        let logit = g.matmul(flat, v)?;
        let prob = g.sigmoid(logit);
        Ok(NetOutput { stance, points, logit, prob, taps: vec![("conv", act)] })
    }
}

#[test]
fn gradcam_matches_hand_computation() {
    let x = [0.5, 1.0, -0.5, 2.0, 0.0, 1.5, -1.0, 0.25];
    let v = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6, -0.1];
    let (w, b) = (1.5, 0.2);
    let net = TinyConv::new(w, b, v.clone());
    let data = TrainSet { stances: vec![Tensor::new(vec![8, 1, 1], x.to_vec()).unwrap()], points: None, labels: vec![1] };
    let m = gradcam(&net, &data, "conv").unwrap();

    let act: Vec<f64> = x.iter().map(|xi| w * xi + b).collect();
    let z: f64 = act.iter().zip(&v).map(|(a, vi)| a * vi).sum();
    let s = 1.0 / (1.0 + (-z).exp());
    let weight = v.iter().map(|vi| s * (1.0 - s) * vi).sum::<f64>() / 8.0;
    let cam: Vec<f64> = act.iter().map(|a| (weight * a).max(0.0)).collect();
    assert_eq!(m.shape(), (1, 101));
    for (i, got) in m.values[0].iter().enumerate() {
        let pos = 7.0 * i as f64 / 100.0;
        let lo = (pos.floor() as usize).min(6);
        let expected = cam[lo] + (cam[lo + 1] - cam[lo]) * (pos - lo as f64);
        assert!((got - expected).abs() < 1e-9, "{i}: {got} vs {expected}");
    }
}

#[test]
fn gradcam_constant_and_detached_cases() {
    let ones = TrainSet { stances: vec![Tensor::new(vec![8, 1, 1], vec![1.0; 8]).unwrap()], points: None, labels: vec![1] };
    let uniform = gradcam(&TinyConv::new(1.0, 0.0, vec![0.5; 8]), &ones, "conv").unwrap();
    let first = uniform.values[0][0];
    assert!(first > 0.0 && uniform.values[0].iter().all(|v| (v - first).abs() < 1e-15));
    let detached = gradcam(&TinyConv::new(1.0, 0.0, vec![0.0; 8]), &ones, "conv").unwrap();
    assert!(detached.values[0].iter().all(|&v| v == 0.0));
    assert!(matches!(gradcam(&TinyConv::new(1.0, 0.0, vec![0.0; 8]), &ones, "nope"), Err(ExplainError::LayerNotFound(_))));
}

#[test]
fn cnn_gradcam_and_saliency_are_non_negative_and_reproducible() {
    let mut cfg = CnnConfig::new(3, 2, None);
    cfg.filters = 8;
    cfg.seed = 3;
    let net = CnnNet::new(cfg).unwrap();
    let data = cases((101, 3, 2), 3, 9);
    let cam = gradcam(&net, &data, "block2").unwrap();
    assert_eq!(cam.shape(), (1, 101));
    assert!(cam.values[0].iter().all(|&v| v >= 0.0));
    assert_eq!(cam, gradcam(&net, &data, "block2").unwrap());
    assert!(gradcam(&net, &data, "block1").is_ok());

    let sc = SmoothGradConfig { samples: 4, seed: 2, ..SmoothGradConfig::default() };
    let sal = saliency(&net, &data, &labels(3, 2), &sc).unwrap();
    assert_eq!(sal.shape(), (6, 101));
    assert!(sal.values.iter().flatten().all(|&v| v >= 0.0));
    assert_eq!(sal.to_csv(), saliency(&net, &data, &labels(3, 2), &sc).unwrap().to_csv());

    let csv = cam.to_csv();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("row_label,t0,t1,") && header.ends_with(",t100"));
    let svg = sal.to_svg();
    assert!(svg.starts_with("<svg") && svg.matches("<rect").count() == 6 * 101);
}
