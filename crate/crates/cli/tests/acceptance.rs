//! Acceptance suite: one PASS/FAIL line per criterion, checked at its stated
//! tolerance and runtime budget. Exits non-zero on any undocumented failure.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gaitrisk_core::classic::grid::{grid, shipped_defaults};
use gaitrisk_core::classic::{ClassifierKind, Criterion, DecisionTree, Hyper, InputRegime, Knn, MaxFeatures, Splitter, TreeParams};
use gaitrisk_core::dataset::Task;
use gaitrisk_core::eval::{
    metrics, run_experiment, split_by_subject, split_by_subject_stratified, ConfusionCounts, ExperimentConfig, ExperimentData, FoldPlan,
    ModelChoice,
};
use gaitrisk_core::explain::{gradcam, pdp, saliency, shapley, ShapleyConfig, ShapleyMode, SmoothGradConfig};
use gaitrisk_core::features::band_power;
use gaitrisk_core::gait::{detect_events, natural_cubic_resample};
use gaitrisk_core::pipeline::{process_records, PreprocessConfig};
use gaitrisk_core::synth::{synth, SynthSpec};
use gaitrisk_deepnet::gradcheck::{layer_suite, LAYER_KINDS};
use gaitrisk_deepnet::{CnnConfig, CnnNet, ForwardCtx, Graph, NetOutput, Network, ParamId, ParamStore, Tensor, TrainSet, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    /// The literal criterion cannot hold; the detail names the property that does.
    DocumentedGap(String),
}

type Check = fn() -> Outcome;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok { Outcome::Pass(detail) } else { Outcome::Fail(detail) }
}

fn metric_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut undefined_mismatch = 0;
    for _ in 0..10_000 {
        let c = ConfusionCounts { tp: rng.random_range(0..60), tn: rng.random_range(0..60), fp: rng.random_range(0..60), fn_: rng.random_range(0..60) };
        if c.total() == 0 {
            continue;
        }
        // Expand into labelled pairs and recount from scratch.
        let mut pairs = Vec::new();
        for (n, p, t) in [(c.tp, 1u8, 1u8), (c.tn, 0, 0), (c.fp, 1, 0), (c.fn_, 0, 1)] {
            pairs.extend((0..n).map(|_| (p, t)));
        }
        let n = pairs.len() as f64;
        let hits = pairs.iter().filter(|(p, t)| p == t).count() as f64;
        let tp = pairs.iter().filter(|&&(p, t)| p == 1 && t == 1).count() as f64;
        let predicted = pairs.iter().filter(|&&(p, _)| p == 1).count() as f64;
        let actual = pairs.iter().filter(|&&(_, t)| t == 1).count() as f64;
        let acc = hits / n * 100.0;
        let pre = (predicted > 0.0).then(|| tp / predicted * 100.0);
        let rec = (actual > 0.0).then(|| tp / actual * 100.0);
        let f1 = (predicted + actual > 0.0).then(|| 2.0 * tp / (predicted + actual) * 100.0);
        let m = metrics(&c).unwrap();
        worst = worst.max((m.acc.unwrap() - acc).abs());
        for (got, want) in [(m.pre, pre), (m.rec, rec), (m.f1, f1)] {
            match (got, want) {
                (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                (None, None) => {}
                _ => undefined_mismatch += 1,
            }
        }
    }
    ensure(worst == 0.0 && undefined_mismatch == 0, format!("10000 counts, max |dev| {worst:e}, undefined mismatches {undefined_mismatch}"))
}

fn plan_is_clean(plan: &FoldPlan, records: &[(String, u8)]) -> bool {
    let mut tested = vec![0usize; records.len()];
    for fold in &plan.folds {
        let train: BTreeSet<&str> = fold.train_subjects.iter().map(String::as_str).collect();
        let test: BTreeSet<&str> = fold.test_subjects.iter().map(String::as_str).collect();
        if train.intersection(&test).next().is_some() {
            return false;
        }
        for (i, (s, _)) in records.iter().enumerate() {
            if test.contains(s.as_str()) {
                tested[i] += 1;
            } else if !train.contains(s.as_str()) {
                return false;
            }
        }
    }
    tested.iter().all(|&t| t == 1)
}

fn no_leakage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for trial in 0..1000u64 {
        let subjects = rng.random_range(3..=50);
        let mut records = Vec::new();
        for s in 0..subjects {
            let y = u8::from(rng.random_bool(0.5));
            for _ in 0..rng.random_range(1..=6) {
                records.push((format!("S{s:02}"), y));
            }
        }
        let k = rng.random_range(2..=subjects.min(10));
        let plain = split_by_subject(records.iter().map(|(s, _)| s.as_str()), k, trial).unwrap();
        let strat = split_by_subject_stratified(&records, k, trial).unwrap();
        for plan in [plain, strat] {
            let subjects: BTreeSet<&str> = records.iter().map(|(s, _)| s.as_str()).collect();
            if plan.check(subjects).is_err() || !plan_is_clean(&plan, &records) {
                bad += 1;
            }
        }
    }
    ensure(bad == 0, format!("1000 datasets x 2 splitters, {bad} leaking or uncovered plans"))
}

fn resampling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut endpoint, mut linear) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(20..=250);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-60.0..60.0)).collect();
        let out = natural_cubic_resample(&y, 101);
        endpoint = endpoint.max((out[0] - y[0]).abs()).max((out[100] - y[n - 1]).abs());
        let (a, b) = (rng.random_range(-50.0..50.0), rng.random_range(-5.0..5.0));
        let line: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
        for (j, v) in natural_cubic_resample(&line, 101).iter().enumerate() {
            let x = j as f64 * (n - 1) as f64 / 100.0;
            linear = linear.max((v - (a + b * x)).abs());
        }
    }
    let mut sine = 0.0f64;
    for n in (40..=200).step_by(10) {
        let y: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / (n - 1) as f64).sin()).collect();
        for (j, v) in natural_cubic_resample(&y, 101).iter().enumerate() {
            sine = sine.max((v - (2.0 * PI * j as f64 / 100.0).sin()).abs());
        }
    }
    ensure(
        endpoint <= 1e-9 && linear <= 1e-9 && sine < 1e-3,
        format!("1000 stances: endpoint err {endpoint:.1e}, linear err {linear:.1e}; sine err {sine:.1e} (n = 40..200)"),
    )
}

fn band_power_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        // Nyquist at or below the high band ceiling, so the bands tile the spectrum.
        let rate = rng.random_range(20.0..=180.0);
        let n = rng.random_range((10.0 * rate) as usize..=(20.0 * rate) as usize);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let ms = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let bp = band_power(&x, rate).unwrap();
        worst = worst.max(((bp.lf + bp.mf + bp.hf) - ms).abs() / ms);
    }
    let s: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 2.0 * i as f64 / 200.0).sin()).collect();
    let mf = band_power(&s, 200.0).unwrap().mf;
    ensure(worst < 1e-9 && (mf - 0.5).abs() < 1e-3, format!("Parseval rel err {worst:.1e} over 1000 signals; 2 Hz MF power {mf:.6}"))
}

fn gradient_master() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, kind) in LAYER_KINDS.iter().enumerate() {
        let r = layer_suite(kind, 50, 1000 + i as u64).unwrap();
        ok &= r.max_rel_error < 1e-4;
        parts.push(format!("{kind} {:.1e}", r.max_rel_error));
    }
    ensure(ok, format!("50 shapes each, max rel err: {}", parts.join(", ")))
}

fn brute_knn(x: &[Vec<f64>], y: &[u8], k: usize, q: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().map(|r| r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).collect();
    let mut used = vec![false; x.len()];
    let (mut pos, mut neg, mut dp, mut dn) = (0, 0, 0.0, 0.0);
    for _ in 0..k.min(x.len()) {
        let best = (0..x.len()).filter(|&i| !used[i]).fold(usize::MAX, |b, i| if b == usize::MAX || d[i] < d[b] { i } else { b });
        used[best] = true;
        if y[best] == 1 {
            pos += 1;
            dp += d[best];
        } else {
            neg += 1;
            dn += d[best];
        }
    }
    if pos != neg {
        pos as f64 / (pos + neg) as f64
    } else if dp < dn {
        0.5
    } else {
        0.5f64.next_down()
    }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let x = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

type Model = Box<dyn Fn(&[Vec<f64>]) -> Vec<f64>>;

fn toy(f: impl Fn(&[f64]) -> f64 + 'static) -> Model {
    Box::new(move |rows: &[Vec<f64>]| rows.iter().map(|r| f(r)).collect())
}

fn mc_std_error(f: &dyn Fn(&[Vec<f64>]) -> Vec<f64>, x: &[f64], permutations: usize, seed: u64) -> f64 {
    let cfg = ShapleyConfig { mode: ShapleyMode::MonteCarlo { permutations, seed }, baseline: vec![0.0; x.len()], groups: None };
    let se = shapley(f, x, &cfg).unwrap().std_error.unwrap();
    se.iter().sum::<f64>() / se.len() as f64
}

fn classifier_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut knn_bad = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=200);
        let d = rng.random_range(1..=6);
        let k = rng.random_range(1..=12);
        let (x, y) = random_set(&mut rng, n, d);
        let model = Knn::fit(k, &x, &y);
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        knn_bad += usize::from(model.proba(&q) != brute_knn(&x, &y, k, &q));
    }

    let mut dt_bad = 0;
    for trial in 0..30 {
        let (x, y) = random_set(&mut rng, 40 + 5 * trial, 1 + trial % 6);
        for splitter in [Splitter::Best, Splitter::Random] {
            let t = DecisionTree::fit(TreeParams { splitter, ..TreeParams::default() }, &x, &y, trial as u64);
            dt_bad += usize::from(!x.iter().zip(&y).all(|(r, &l)| t.predict(r) == l));
        }
    }

    // Symmetric in (0, 1), dummy in 2.
    let f = toy(|x| (x[0] * x[1]).tanh() + x[0] + x[1] + x[3] * x[4] - (x[0] + x[1]) * x[5].sin());
    let mut axiom = 0.0f64;
    for _ in 0..50 {
        let v = rng.random_range(-2.0..2.0);
        let x = [v, v, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let b = rng.random_range(-1.0..1.0);
        let base = vec![b, b, 0.0, 0.0, 0.0, 0.0];
        let r = shapley(&*f, &x, &ShapleyConfig { mode: ShapleyMode::Exact, baseline: base, groups: None }).unwrap();
        axiom = axiom.max(r.efficiency_residual).max((r.phi[0] - r.phi[1]).abs()).max(r.phi[2].abs());
    }

    let g = toy(|x| x[0] * x[1] * x[2] + (x[3] * x[4]).sin() + x[5] * x[0] - x[6].powi(2));
    let x = [1.0, -2.0, 1.5, 0.5, 2.0, -1.0, 0.7];
    let (mut se100, mut se200) = (0.0, 0.0);
    for seed in 0..20 {
        se100 += mc_std_error(&*g, &x, 100, seed);
        se200 += mc_std_error(&*g, &x, 200, 1000 + seed);
    }
    let ratio = se200 / se100;
    let halves = (ratio - 0.5).abs() <= 0.3 * 0.5;
    let root_n = (ratio - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.3 * std::f64::consts::FRAC_1_SQRT_2;

    let detail = format!(
        "knn {}/500 mismatches; unlimited DT {dt_bad}/60 imperfect fits; exact axioms max err {axiom:.1e}; \
         MC std-error ratio P=200/P=100 over 20 reseeds {ratio:.3} (literal target 0.5 +/- 30%)",
        knn_bad
    );
    let rest = knn_bad == 0 && dt_bad == 0 && axiom <= 1e-9;
    match (rest, halves, root_n) {
        (true, true, _) => Outcome::Pass(detail),
        (true, false, true) => Outcome::DocumentedGap(format!("{detail}; ratio matches the 1/sqrt(2) rate of a sample mean")),
        _ => Outcome::Fail(detail),
    }
}

fn golden_grids() -> Outcome {
    let k: Vec<Hyper> = (2..=12).map(|k| Hyper::Knn { k }).collect();
    let c: Vec<Hyper> = [0.0001, 0.001, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06].iter().map(|&c| Hyper::SvmL { c }).collect();
    let mut dt = BTreeSet::new();
    for depth in [None, Some(5), Some(10), Some(20), Some(30)] {
        for split in [2, 5, 10] {
            for leaf in [1, 2, 4] {
                for splitter in [Splitter::Best, Splitter::Random] {
                    for mf in [MaxFeatures::Sqrt, MaxFeatures::Log2] {
                        for crit in [Criterion::Gini, Criterion::Entropy] {
                            let tree = TreeParams { max_depth: depth, min_samples_split: split, min_samples_leaf: leaf, splitter, max_features: mf, criterion: crit };
                            dt.insert(format!("{:?}", Hyper::Dt { tree }));
                        }
                    }
                }
            }
        }
    }
    let mut rf = BTreeSet::new();
    for n in [100, 200, 300] {
        for depth in [10, 15, 20] {
            for split in [2, 5, 10] {
                for leaf in [1, 2, 4] {
                    for crit in [Criterion::Gini, Criterion::Entropy, Criterion::LogLoss] {
                        let tree = TreeParams {
                            max_depth: Some(depth),
                            min_samples_split: split,
                            min_samples_leaf: leaf,
                            splitter: Splitter::Best,
                            max_features: MaxFeatures::Log2,
                            criterion: crit,
                        };
                        rf.insert(format!("{:?}", Hyper::Rf { n_estimators: n, tree, bootstrap: true }));
                    }
                }
            }
        }
    }
    let mlp: BTreeSet<String> =
        [1, 10, 25, 50, 100].iter().flat_map(|&n| [100, 500, 1000].map(|i| format!("{:?}", Hyper::Mlp { neurons: n, max_iter: i }))).collect();
    let as_set = |kind| grid(kind).iter().map(|h| format!("{h:?}")).collect::<BTreeSet<_>>();

    let grids_ok = grid(ClassifierKind::Knn) == k
        && grid(ClassifierKind::SvmL) == c
        && as_set(ClassifierKind::Dt) == dt
        && grid(ClassifierKind::Dt).len() == 360
        && as_set(ClassifierKind::Rf) == rf
        && as_set(ClassifierKind::Mlp) == mlp;
    let d = |kind| shipped_defaults(kind, 0).hyper;
    let rf_ok = matches!(d(ClassifierKind::Rf), Hyper::Rf { n_estimators: 200, tree, .. } if tree.max_depth == Some(10));
    let defaults_ok = d(ClassifierKind::Knn) == Hyper::Knn { k: 7 }
        && d(ClassifierKind::SvmL) == Hyper::SvmL { c: 0.001 }
        && d(ClassifierKind::SvmP) == Hyper::SvmP { c: 1.1, degree: 3 }
        && rf_ok
        && d(ClassifierKind::Mlp) == Hyper::Mlp { neurons: 100, max_iter: 1000 };
    ensure(
        grids_ok && defaults_ok,
        format!("grids KNN 11, SVM_L 9, DT {}, RF {}, MLP {}: {grids_ok}; shipped defaults: {defaults_ok}", dt.len(), rf.len(), mlp.len()),
    )
}

fn study_spec(effects: bool) -> SynthSpec {
    let mut spec = SynthSpec { healthy_subjects: 60, pfps_subjects: 60, seed: 3, ..SynthSpec::default() };
    // Stance-time elongation and 2 Hz (MF band) power are the only class deltas.
    spec.pfps.stride_rate_shift = 0.0;
    spec.pfps.knee_peak_offset = 0.0;
    spec.pfps.hf_amplitude = 0.0;
    if effects { spec } else { spec.without_effects() }
}

fn end_to_end() -> Outcome {
    let mut cfg = ExperimentConfig { seed: 3, ..ExperimentConfig::default() };
    cfg.deep.epochs = 10;
    let svm = ModelChoice::Classic(ClassifierKind::SvmL);
    let mut parts = Vec::new();
    let mut ok = true;
    let (mut hit, mut total) = (0usize, 0usize);
    for effects in [true, false] {
        let spec = study_spec(effects);
        let (ds, sidecar) = synth(&spec).unwrap();
        let tol = (0.010 * spec.sample_rate).round() as i64;
        for (rec, truth) in ds.records.iter().zip(&sidecar.records) {
            let found = detect_events(rec).unwrap_or_default();
            for t in &truth.events {
                total += 1;
                hit += usize::from(found.iter().any(|f| f.kind == t.kind && f.foot == t.foot && (f.frame_index as i64 - t.frame_index as i64).abs() <= tol));
            }
        }
        let processed = process_records(&ds.records, &PreprocessConfig::default()).unwrap();
        let data = ExperimentData::from_processed(&processed, Task::PfpsVsH).unwrap();
        let s = run_experiment(&data, InputRegime::Points, &[svm], &cfg).unwrap()[0].acc.mean.unwrap();
        let c = run_experiment(&data, InputRegime::TimeSeries, &[ModelChoice::Cnn], &cfg).unwrap()[0].acc.mean.unwrap();
        let cell_ok = if effects { s >= 90.0 && c >= 90.0 } else { (s - 50.0).abs() <= 7.0 && (c - 50.0).abs() <= 7.0 };
        ok &= cell_ok;
        parts.push(format!("{}: SVM_L(points) {s:.1}%, CNN(time_series) {c:.1}%", if effects { "deltas" } else { "zero deltas" }));
    }
    let frac = hit as f64 / total as f64;
    ok &= frac >= 0.99;
    ensure(ok, format!("{}; events within 10 ms {hit}/{total} ({:.2}%)", parts.join("; "), 100.0 * frac))
}

fn gaitrisk(args: &[&str]) -> bool {
    let out = Command::new(env!("CARGO_BIN_EXE_gaitrisk")).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.success()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())).collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let root = tmp.path().join(name);
        let p = |s: &str| root.join(s).to_str().unwrap().to_owned();
        let manifest = p("cohort/data/manifest.json");
        let common = ["--seed", "11", "--folds", "3", "--epochs", "3"];
        let mut ok = gaitrisk(&[&["synth", "--healthy", "8", "--pfps", "8", "--itbs", "0", "--out", &p("cohort")], &common[..]].concat());
        for cmd in ["segment", "features"] {
            ok &= gaitrisk(&[&[cmd, "--manifest", &manifest, "--out", &p(cmd)], &common[..]].concat());
        }
        let models = ["--models", "svm_l,knn,cnn", "--regime", "time_series,points"];
        ok &= gaitrisk(&[&["evaluate", "--manifest", &manifest, "--out", &p("evaluate")], &models[..], &common[..]].concat());
        ok &= gaitrisk(&[&["explain", "--manifest", &manifest, "--out", &p("explain")], &models[..], &common[..]].concat());
        if !ok {
            return Outcome::Fail("a pipeline command failed".into());
        }
        runs.push(root);
    }
    let read = |root: &Path| {
        (
            fs::read(root.join("evaluate/report.json")).unwrap(),
            fs::read(root.join("segment/segments.json")).unwrap(),
            fs::read(root.join("features/features.csv")).unwrap(),
            dir_bytes(&root.join("explain/maps")),
        )
    };
    let (a, b) = (read(&runs[0]), read(&runs[1]));
    ensure(
        a == b && a.3.len() > 1,
        format!("synth > segment > features > evaluate > explain twice: report.json, segments, features and {} map files identical: {}", a.3.len(), a == b),
    )
}

/// `sigmoid(w . flatten(x) + b)`.
struct LinearNet {
    store: ParamStore,
    w: ParamId,
    b: ParamId,
    dims: (usize, usize, usize),
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
        let (w, bias) = (g.param(&self.store, self.w), g.param(&self.store, self.b));
        let z = g.matmul(flat, w)?;
        let logit = g.add_bias(z, bias)?;
        let prob = g.sigmoid(logit);
        Ok(NetOutput { stance, points, logit, prob, taps: vec![] })
    }
}

fn cases(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), n: usize) -> TrainSet {
    let len = dims.0 * dims.1 * dims.2;
    let stances = (0..n).map(|_| Tensor::new(vec![dims.0, dims.1, dims.2], (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()).collect();
    TrainSet { stances, points: None, labels: vec![1; n] }
}

fn explain_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims = (101, 2, 3);
    let n = 101 * 6;
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new(vec![n, 1], weights.clone()).unwrap());
    let b = store.add("b", Tensor::new(vec![1], vec![0.0]).unwrap());
    let net = LinearNet { store, w, b, dims };
    let labels: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
    let data = cases(&mut rng, dims, 4);
    let m = saliency(&net, &data, &labels, &SmoothGradConfig { seed: 2, ..SmoothGradConfig::default() }).unwrap();
    let (mut dot, mut nm, mut nw) = (0.0, 0.0, 0.0);
    for slot in 0..6 {
        for t in 0..101 {
            let (s, wv) = (m.values[slot][t], weights[t * 6 + slot].abs());
            dot += s * wv;
            nm += s * s;
            nw += wv * wv;
        }
    }
    let cosine = dot / (nm.sqrt() * nw.sqrt());

    let mut cfg = CnnConfig::new(10, 9, None);
    cfg.filters = 8;
    cfg.seed = 4;
    let cnn = CnnNet::new(cfg).unwrap();
    let mut cam_ok = true;
    for _ in 0..5 {
        let data = cases(&mut rng, (101, 10, 9), 3);
        let cam = gradcam(&cnn, &data, "block2").unwrap();
        cam_ok &= cam.shape() == (1, 101) && cam.column_labels[100] == "t100" && cam.values[0].iter().all(|&v| v >= 0.0 && v.is_finite());
    }

    let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let f = toy(|x| 1.0 / (1.0 + (-(x[0] - 2.0 * x[1] + x[3] * x[0])).exp()));
    let grid: Vec<f64> = (0..20).map(|i| -2.0 + 0.2 * i as f64).collect();
    let curve = pdp(&*f, &rows, &names, "c", &grid).unwrap();
    let (lo, hi) = curve.mean_prediction.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let range = hi - lo;
    ensure(
        cosine > 0.999 && cam_ok && range < 1e-12,
        format!("linear saliency cosine {cosine:.6}; Grad-CAM non-negative (1, 101) over 5 batches: {cam_ok}; PDP range for ignored feature {range:.1e}"),
    )
}

fn main() {
    let checks: [(&str, Duration, Check); 10] = [
        ("metric formulas", Duration::from_secs(5), metric_formulas),
        ("no leakage", Duration::from_secs(10), no_leakage),
        ("resampling", Duration::from_secs(10), resampling),
        ("band power", Duration::from_secs(10), band_power_check),
        ("gradient master check", Duration::from_secs(300), gradient_master),
        ("classifier oracles", Duration::from_secs(120), classifier_oracles),
        ("hyperparameter golden", Duration::from_secs(1), golden_grids),
        ("end-to-end synthetic study", Duration::from_secs(1200), end_to_end),
        ("determinism", Duration::from_secs(600), determinism),
        ("explainability sanity", Duration::from_secs(60), explain_sanity),
    ];
    let mut failed = Vec::new();
    let mut gaps = Vec::new();
    for (name, budget, check) in checks {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Outcome::Fail("panicked".into()));
        let took = start.elapsed();
        let timing = format!("{:.2} s / budget {} s", took.as_secs_f64(), budget.as_secs());
        let line = match outcome {
            Outcome::Pass(d) if took <= budget => format!("PASS  {name}: {d} ({timing})"),
            Outcome::Pass(d) => {
                failed.push(name);
                format!("FAIL  {name}: over budget; {d} ({timing})")
            }
            Outcome::Fail(d) => {
                failed.push(name);
                format!("FAIL  {name}: {d} ({timing})")
            }
            Outcome::DocumentedGap(d) => {
                gaps.push(name);
                format!("FAIL  {name}: [documented gap] {d} ({timing})")
            }
        };
        println!("{line}");
    }
    println!("acceptance: {} passed, {} failed, {} documented gaps", 10 - failed.len() - gaps.len(), failed.len(), gaps.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
