//! Central finite differences, used as the independent check of the tape.

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a| + |n|, floor)`; the floor keeps near-zero gradients from
/// turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter index of the worst entry, `None` when it is an input entry.
    pub worst_param: Option<usize>,
    pub worst_values: (f64, f64),
}

fn worst_entry(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, (f64, f64)) {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (relative_error(a, n, floor), (a, n)))
        .fold((0.0, (0.0, 0.0)), |acc, e| if e.0 > acc.0 { e } else { acc })
}

/// Compares tape gradients of `sum(c * build(..))`, for a fixed random
/// projection `c`, against central differences over every trainable parameter
/// entry and every input entry. `build` must be a deterministic function of its
/// arguments (seed any masks inside it).
pub fn check_graph<F>(store: &ParamStore, input: &Tensor, seed: u64, h: f64, build: F) -> crate::Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, Var) -> crate::Result<Var>,
{
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let out = build(&mut g, store, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = Tensor::new(
        g.shape(out).to_vec(),
        (0..g.value(out).len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let grads = g.backward_with(out, coeffs.clone())?;
    let analytic_input = grads.get_or_zero(&g, x);
    let analytic_params = grads.param_grads(&g);

    let objective = |store: &ParamStore, input: &Tensor| -> f64 {
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let out = build(&mut g, store, x).expect("forward succeeded once");
        g.value(out).data().iter().zip(coeffs.data()).map(|(a, b)| a * b).sum()
    };

    let floor = 1e-6;
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst_param: None, worst_values: (0.0, 0.0) };
    let numeric_input = numeric_gradient(
        |v| objective(store, &Tensor::new(input.shape().to_vec(), v.to_vec()).expect("same shape")),
        input.data(),
        h,
    );
    let (e, vals) = worst_entry(analytic_input.data(), &numeric_input, floor);
    if e > report.max_rel_error {
        report.max_rel_error = e;
        report.worst_values = vals;
    }
    report.checked += numeric_input.len();

    let mut scratch = store.clone();
    for (id, analytic) in analytic_params {
        if !store.entry(id).trainable {
            continue;
        }
        let base = store.get(id).data().to_vec();
        let numeric = numeric_gradient(
            |v| {
                scratch.get_mut(id).data_mut().copy_from_slice(v);
                objective(&scratch, input)
            },
            &base,
            h,
        );
        scratch.get_mut(id).data_mut().copy_from_slice(&base);
        let (e, vals) = worst_entry(analytic.data(), &numeric, floor);
        if e > report.max_rel_error {
            report.max_rel_error = e;
            report.worst_values = vals;
            report.worst_param = Some(id.index());
        }
        report.checked += numeric.len();
    }
    Ok(report)
}

/// Layer families covered by [`layer_suite`].
pub const LAYER_KINDS: [&str; 7] = ["dense", "conv1d", "inception_residual", "squeeze_excitation", "batchnorm", "bilstm", "biconvlstm1d"];

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Moves every trainable entry off its initial value. Zero biases feeding a
/// ReLU on exact zeros would otherwise sit on a kink.
pub fn jitter_params(store: &mut ParamStore, rng: &mut ChaCha8Rng, amount: f64) {
    let ids: Vec<_> = store.trainable_ids().collect();
    for id in ids {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.random_range(-amount..amount));
    }
}

/// Runs [`check_graph`] on `shapes` random shapes of one layer family and
/// returns the worst report.
pub fn layer_suite(kind: &str, shapes: usize, seed: u64) -> crate::Result<GradCheckReport> {
    use crate::layers::{BatchNorm, BiConvLstm1d, BiLstm, Conv1d, Dense, ForwardCtx, InceptionResidual, SqueezeExcitation};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: Option<GradCheckReport> = None;
    for trial in 0..shapes as u64 {
        let mut store = ParamStore::new();
        let b = rng.random_range(1..4);
        let report = match kind {
            "dense" => {
                let (i, o) = (rng.random_range(1..7), rng.random_range(1..6));
                let layer = Dense::new(&mut store, "d", i, o, 0.0, &mut rng);
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, i]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x))?
            }
            "conv1d" => {
                let (l, c, f) = (rng.random_range(1..9), rng.random_range(1..4), rng.random_range(1..4));
                let layer = Conv1d::new(&mut store, "c", c, f, [1, 3, 5][rng.random_range(0..3)], &mut rng);
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, l, c]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x))?
            }
            "inception_residual" => {
                let (l, c) = (rng.random_range(2..9), rng.random_range(1..4));
                let layer = InceptionResidual::new(&mut store, "inc", c, rng.random_range(4..9), &mut rng)?;
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, l, c]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x))?
            }
            "squeeze_excitation" => {
                let (l, c) = (rng.random_range(1..7), rng.random_range(2..7));
                let layer = SqueezeExcitation::new(&mut store, "se", c, rng.random_range(1..3), &mut rng);
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, l, c]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x, &mut ForwardCtx::eval()))?
            }
            "batchnorm" => {
                let b = b + 1;
                let c = rng.random_range(1..6);
                let shape = if rng.random_bool(0.5) { vec![b, c] } else { vec![b, rng.random_range(1..5), c] };
                let layer = BatchNorm::new(&mut store, "bn", c);
                jitter_params(&mut store, &mut rng, 0.3);
                let var = store.get_mut(layer.running_var);
                var.data_mut().iter_mut().for_each(|v| *v = 0.5 + (trial % 3) as f64 * 0.25);
                let train = trial % 2 == 0;
                let x = random_tensor(&mut rng, &shape);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x, &mut ForwardCtx::new(train, 0)))?
            }
            "bilstm" => {
                let (t, f, u) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
                let layer = BiLstm::new(&mut store, "l", f, u, 0.2, 0.2, &mut rng);
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, t, f]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x, &mut ForwardCtx::train(trial)))?
            }
            "biconvlstm1d" => {
                let (t, a, c, f) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..3), rng.random_range(1..3));
                let layer = BiConvLstm1d::new(&mut store, "cl", c, f, 3, 0.4, &mut rng);
                jitter_params(&mut store, &mut rng, 0.3);
                let x = random_tensor(&mut rng, &[b, t, a, c]);
                check_graph(&store, &x, trial, h, |g, s, x| layer.forward(g, s, x, &mut ForwardCtx::train(trial)))?
            }
            other => return Err(crate::NetError::InvalidConfig(format!("unknown layer kind {other}"))),
        };
        if worst.as_ref().is_none_or(|w| report.max_rel_error > w.max_rel_error) {
            worst = Some(report);
        }
    }
    worst.ok_or_else(|| crate::NetError::InvalidConfig("no shapes requested".into()))
}
