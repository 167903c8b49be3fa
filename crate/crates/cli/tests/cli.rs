use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gaitrisk_cli::config::{parse_model, parse_regime, parse_task};
use gaitrisk_cli::load_network;
use gaitrisk_core::classic::InputRegime;
use gaitrisk_core::dataset::Task;
use gaitrisk_core::eval::ExperimentReport;
use gaitrisk_core::seed::sha256_hex;
use gaitrisk_deepnet::{predict_proba, Tensor, TrainSet};
use serde_json::Value;

fn gaitrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaitrisk")).args(args).output().expect("binary runs")
}

fn small_cohort(dir: &Path) -> String {
    let cfg = dir.join("small.json");
    fs::write(&cfg, r#"{"synth": {"healthy_subjects": 6, "pfps_subjects": 6, "itbs_subjects": 0}, "folds": 3}"#).unwrap();
    cfg.to_str().unwrap().to_owned()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("error JSON")
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = gaitrisk(&["evaluate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage: gaitrisk evaluate"));
    assert_eq!(stderr_json(&out)["error"], "UsageError");
    assert_eq!(gaitrisk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gaitrisk(&["evaluate", "--task", "nope"]).status.code(), Some(2));
    assert_eq!(gaitrisk(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for body in [r#"{"seeed": 1}"#, r#"{"deep": {"epochz": 3}}"#, r#"{"synth": {"healthy": 3}}"#, "[1, 2]"] {
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, body).unwrap();
        let out = gaitrisk(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert_eq!(stderr_json(&out)["code"], 2);
    }
}

#[test]
fn missing_data_and_divergence_map_to_their_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = gaitrisk(&["ingest", "--manifest", "/definitely/missing.json", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "DataError");

    let cfg = dir.path().join("div.json");
    fs::write(&cfg, r#"{"deep": {"lr": 1e300, "epochs": 2}, "synth": {"healthy_subjects": 6, "pfps_subjects": 6, "itbs_subjects": 0}, "folds": 3}"#).unwrap();
    let out = gaitrisk(&["evaluate", "--config", cfg.to_str().unwrap(), "--models", "cnn", "--regime", "ts", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "NumericalError");
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    let out_dir = dir.path().join("run");
    fs::write(&cfg, r#"{"seed": 5, "synth": {"healthy_subjects": 6, "pfps_subjects": 6, "itbs_subjects": 0}, "folds": 3}"#).unwrap();
    let out = gaitrisk(&["evaluate", "--seed", "1", "--folds", "4", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved: Value = serde_json::from_slice(&fs::read(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 5);
    assert_eq!(resolved["folds"], 3);
    assert_eq!(resolved["synth"]["noise_sigma"], 0.1);
}

#[test]
fn evaluate_writes_reports_and_a_hashed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path());
    let out_dir = dir.path().join("run");
    let out = gaitrisk(&[
        "evaluate", "--config", &cfg, "--task", "PFPS", "--regime", "ts_plus_points", "--models", "svm_l,cnn", "--seed", "7", "--epochs", "2",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: ExperimentReport = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    assert_eq!(report.reports.len(), 2);
    assert!(report.reports.iter().all(|r| r.task == Task::PfpsVsH && r.regime == InputRegime::TsPlusPoints && r.folds.len() == 3));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert!(csv.starts_with("model,PFPS_vs_H/ts_plus_points\nSVM_L,"));

    let manifest: Value = serde_json::from_slice(&fs::read(out_dir.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["seeds"]["root"], 7);
    assert!(manifest["seeds"]["synth"].is_u64() && manifest["seeds"]["folds/PFPS_vs_H"].is_u64());
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 3);
    for o in outputs {
        let bytes = fs::read(out_dir.join(o["path"].as_str().unwrap())).unwrap();
        assert_eq!(o["sha256"], sha256_hex(&bytes));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path());
    let run = |cmd: &str, name: &str, models: &str| {
        let out_dir = dir.path().join(name);
        let out = gaitrisk(&[cmd, "--config", &cfg, "--models", models, "--regime", "time_series", "--epochs", "2", "--seed", "3", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("evaluate", "a", "knn,cnn"), run("evaluate", "b", "knn,cnn"));
    for f in ["report.json", "report.csv", "config.json"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        if f == "config.json" {
            assert_ne!(x, y, "out differs");
        } else {
            assert_eq!(x, y, "{f}");
        }
    }
    let (a, b) = (run("explain", "ea", "svm_l,cnn"), run("explain", "eb", "svm_l,cnn"));
    let mut names: Vec<_> = fs::read_dir(a.join("maps")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 7);
    for n in names {
        assert_eq!(fs::read(a.join("maps").join(&n)).unwrap(), fs::read(b.join("maps").join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn worker_pool_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path());
    let run = |workers: &str| {
        let out_dir = dir.path().join(format!("w{workers}"));
        let out = gaitrisk(&["evaluate", "--config", &cfg, "--models", "knn,rf,svm_l", "--regime", "points", "--workers", workers, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        fs::read(out_dir.join("report.json")).unwrap()
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn synth_then_pipeline_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cohort");
    let out = gaitrisk(&["synth", "--healthy", "4", "--pfps", "4", "--itbs", "0", "--seed", "2", "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = data.join("data/manifest.json");
    let sidecar: Value = serde_json::from_slice(&fs::read(data.join("data/sidecar.json")).unwrap()).unwrap();
    assert_eq!(sidecar["records"].as_array().unwrap().len(), 8);

    let m = manifest.to_str().unwrap();
    for cmd in ["ingest", "segment", "features"] {
        let out_dir = dir.path().join(cmd);
        let out = gaitrisk(&[cmd, "--manifest", m, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let rm: Value = serde_json::from_slice(&fs::read(out_dir.join("run_manifest.json")).unwrap()).unwrap();
        // manifest.json, subjects.csv and one angle file per record; truth stays in the sidecar.
        assert_eq!(rm["inputs"].as_array().unwrap().len(), 2 + 8, "{cmd}");
        assert!(rm["seeds"].get("synth").is_none());
    }
    let ingest: Value = serde_json::from_slice(&fs::read(dir.path().join("ingest/ingest.json")).unwrap()).unwrap();
    assert_eq!((ingest["records"].as_u64(), ingest["healthy"].as_u64(), ingest["pfps"].as_u64()), (Some(8), Some(4), Some(4)));
    let segments: Value = serde_json::from_slice(&fs::read(dir.path().join("segment/segments.json")).unwrap()).unwrap();
    for (seg, truth) in segments.as_array().unwrap().iter().zip(sidecar["records"].as_array().unwrap()) {
        assert_eq!(seg["events"].as_array().unwrap().len(), truth["events"].as_array().unwrap().len());
    }
    let features = fs::read_to_string(dir.path().join("features/features.csv")).unwrap();
    assert_eq!(features.lines().count(), 9);
    assert!(features.starts_with("record_id,subject_id,label,stride_rate,"));
}

#[test]
fn trained_network_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path());
    let out_dir = dir.path().join("train");
    let out = gaitrisk(&["train", "--config", &cfg, "--models", "cnn,knn", "--regime", "time_series", "--epochs", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = out_dir.join("models/PFPS_vs_H_time_series_CNN.json");
    let (saved, net) = load_network(&json).unwrap();
    assert_eq!(saved.regime, InputRegime::TimeSeries);
    let blob = fs::read(out_dir.join("models/PFPS_vs_H_time_series_CNN.bin")).unwrap();
    assert_eq!(saved.weights_sha256.as_deref(), Some(sha256_hex(&blob).as_str()));
    let x = Tensor::new(vec![101, 10, 9], (0..9090).map(|i| ((i % 37) as f64 - 18.0) / 9.0).collect()).unwrap();
    let data = TrainSet { stances: vec![x], points: None, labels: vec![1] };
    let p = predict_proba(&net, &data, 1).unwrap();
    let (_, again) = load_network(&json).unwrap();
    assert_eq!(p, predict_proba(&again, &data, 1).unwrap());
    assert!(p[0] > 0.0 && p[0] < 1.0);
    assert!(out_dir.join("models/PFPS_vs_H_time_series_KNN.json").exists());
}

#[test]
fn report_merges_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cohort(dir.path());
    let run = |name: &str, regime: &str| {
        let out_dir = dir.path().join(name);
        let out = gaitrisk(&["evaluate", "--config", &cfg, "--models", "knn", "--regime", regime, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        out_dir.to_str().unwrap().to_owned()
    };
    let (a, b) = (run("a", "points"), run("b", "time_series"));
    let merged = dir.path().join("m");
    let out = gaitrisk(&["report", "--from", &a, &b, "--out", merged.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(merged.join("report.csv")).unwrap();
    assert!(csv.starts_with("model,PFPS_vs_H/points,PFPS_vs_H/time_series\nKNN,"));
    let dup = gaitrisk(&["report", "--from", &a, &a, "--out", merged.to_str().unwrap()]);
    assert_eq!(dup.status.code(), Some(3));
}

#[test]
fn aliases() {
    for (s, t) in [("PFPS", Task::PfpsVsH), ("pfps_vs_h", Task::PfpsVsH), ("itbs", Task::ItbsVsH), ("PFPS+ITBS", Task::PfpsItbsVsH), ("pfps_itbs", Task::PfpsItbsVsH)] {
        assert_eq!(parse_task(s).unwrap(), t, "{s}");
    }
    assert_eq!(parse_regime("ts-plus-points").unwrap(), InputRegime::TsPlusPoints);
    assert_eq!(parse_regime("TS").unwrap(), InputRegime::TimeSeries);
    assert!(parse_regime("images").is_err());
    assert_eq!(parse_model("svm_l").unwrap().name(), "SVM_L");
    assert_eq!(parse_model("CNN").unwrap().name(), "CNN");
    assert!(parse_model("transformer").is_err());
}
