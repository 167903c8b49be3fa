use std::f64::consts::PI;

use gaitrisk_core::features::{
    band_power, excursion, extract_features, feature_matrix, peak, peak_velocity, pct_time, periodogram, standardize,
    FeatureConfig, FeatureError, FeatureFamily, ScalerParams, HF_CEILING_HZ,
};
use gaitrisk_core::gait::{detect_events, segment_stances, spatiotemporal};
use gaitrisk_core::pipeline::{process_record, PreprocessConfig};
use gaitrisk_core::synth::{synth, SynthSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sine_peak_velocity_matches_derivative() {
    let dt = 0.01;
    let s: Vec<f64> = (0..=100).map(|i| 10.0 * (2.0 * PI * i as f64 * dt).sin()).collect();
    let v = peak_velocity(&s, dt).unwrap();
    assert!((v - 20.0 * PI).abs() / (20.0 * PI) < 0.01, "{v}");
}

#[test]
fn primitive_examples() {
    assert_eq!(peak(&[0.0, 5.0, 3.0]).unwrap(), 5.0);
    assert_eq!(excursion(&[0.0, 5.0, 3.0]).unwrap(), 5.0);
    assert_eq!(excursion(&[1.5; 10]).unwrap(), 0.0);
    assert_eq!(peak_velocity(&[1.5; 10], 0.005).unwrap(), 0.0);
    assert!(matches!(peak_velocity(&[1.0, 2.0, 3.0], 0.0), Err(FeatureError::BadTimeStep(_))));
}

#[test]
fn band_power_of_flat_series_is_zero() {
    let bp = band_power(&[0.0; 2000], 200.0).unwrap();
    assert_eq!((bp.lf, bp.mf, bp.hf), (0.0, 0.0, 0.0));
    let bp = band_power(&[4.0; 2000], 200.0).unwrap();
    assert!(bp.lf.abs() < 1e-20 && bp.mf.abs() < 1e-20 && bp.hf.abs() < 1e-20);
}

#[test]
fn two_hz_sinusoid_lands_in_mf() {
    let s: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 2.0 * i as f64 / 200.0).sin()).collect();
    let bp = band_power(&s, 200.0).unwrap();
    assert!((bp.mf - 0.5).abs() < 1e-3, "{bp:?}");
    assert!(bp.lf < 1e-3 && bp.hf < 1e-3);
}

#[test]
fn band_power_rejects_low_rates_and_short_series() {
    assert!(matches!(band_power(&[0.0; 100], 5.0), Err(FeatureError::RateTooLow(_))));
    assert!(matches!(band_power(&[0.0; 100], 100.0), Err(FeatureError::TooShort { .. })));
}

/// O(n^2) DFT, independent of the FFT path.
fn naive_one_sided(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                re += (v - mean) * a.cos();
                im += (v - mean) * a.sin();
            }
            let fold = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            fold * (re * re + im * im) / (n * n) as f64
        })
        .collect()
}

#[test]
fn periodogram_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [64, 65, 101] {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = periodogram(&x, 50.0);
        let slow = naive_one_sided(&x);
        for ((_, a), b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn white_noise_bands_sum_to_mean_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // Nyquist below the hf ceiling, so the three bands cover the whole spectrum.
    let rate = 180.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..900).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let ms = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        let bp = band_power(&x, rate).unwrap();
        assert!(((bp.lf + bp.mf + bp.hf) - ms).abs() / ms < 1e-9);
        assert!((bp.total - ms).abs() / ms < 1e-9);
    }
}

fn generator_record(seed: u64) -> (gaitrisk_core::dataset::RunnerRecord, f64) {
    let spec = SynthSpec { healthy_subjects: 1, pfps_subjects: 0, seed, ..SynthSpec::default() };
    let (ds, side) = synth(&spec).unwrap();
    (ds.records[0].clone(), side.records[0].knee_flexion_peak)
}

#[test]
fn knee_flexion_peak_recovers_injected_value() {
    for seed in 0..5 {
        let (rec, truth) = generator_record(seed);
        let processed = process_record(&rec, &PreprocessConfig::default()).unwrap();
        let v = processed.features.get("knee_flexion_peak").unwrap();
        assert_eq!(truth, 45.0);
        assert!((v - truth).abs() < 0.5, "{v}");
    }
}

#[test]
fn demographics_pass_through() {
    let (mut rec, _) = generator_record(1);
    rec.subject.age = 30.0;
    let fv = process_record(&rec, &PreprocessConfig::default()).unwrap().features;
    assert_eq!(fv.get("age"), Some(30.0));
    assert_eq!(fv.get("height"), Some(rec.subject.height));
    let sex_sum = fv.get("sex_F").unwrap() + fv.get("sex_M").unwrap() + fv.get("sex_other").unwrap();
    assert_eq!(sex_sum, 1.0);
}

#[test]
fn duplicated_phase_leaves_excursions_unchanged() {
    let (rec, _) = generator_record(2);
    let events = detect_events(&rec).unwrap();
    let phases = segment_stances(&rec, &events).unwrap();
    let summary = spatiotemporal(&events, rec.sample_rate(), rec.treadmill_speed).unwrap();
    let one = vec![phases[0].clone()];
    let two = vec![phases[0].clone(), phases[0].clone()];
    let cfg = FeatureConfig::default();
    let a = extract_features(&rec, &one, &summary, &cfg).unwrap();
    let b = extract_features(&rec, &two, &summary, &cfg).unwrap();
    for (spec, (x, y)) in a.schema.features.iter().zip(a.values.iter().zip(&b.values)) {
        if spec.family == FeatureFamily::Excursion {
            assert_eq!(x, y, "{}", spec.name);
        }
    }
}

#[test]
fn schema_is_stable_and_complete() {
    let (rec, _) = generator_record(3);
    let a = process_record(&rec, &PreprocessConfig::default()).unwrap().features;
    let b = process_record(&rec, &PreprocessConfig::default()).unwrap().features;
    assert_eq!(a, b);
    assert_eq!(a.schema.hash(), b.schema.hash());
    let names = a.schema.names();
    let unique: std::collections::BTreeSet<_> = names.iter().collect();
    assert_eq!(unique.len(), names.len());
    assert_eq!(a.schema.features.iter().filter(|f| f.family == FeatureFamily::BandPower).count(), 81);
    assert!(names.contains(&"stride_length"));
    assert!(!names.contains(&"step_width"));
    assert!(!names.contains(&"vertical_oscillation"));
    assert!(a.values.iter().all(|v| v.is_finite()));

    let mut rec2 = rec.clone();
    rec2.treadmill_speed = None;
    let c = process_record(&rec2, &PreprocessConfig::default()).unwrap().features;
    assert!(!c.schema.names().contains(&"stride_length"));
    assert!(matches!(feature_matrix(&[a, c]), Err(FeatureError::SchemaMismatch(_))));
}

#[test]
fn missing_structure_shrinks_the_schema() {
    let (mut rec, _) = generator_record(4);
    let full = process_record(&rec, &PreprocessConfig::default()).unwrap().features;
    let events = detect_events(&rec).unwrap();
    let summary = spatiotemporal(&events, rec.sample_rate(), rec.treadmill_speed).unwrap();
    let phases = segment_stances(&rec, &events).unwrap();
    rec.series.retain(|s| s.structure != gaitrisk_core::dataset::Structure::Pelvis);
    let fv = extract_features(&rec, &phases, &summary, &FeatureConfig::default()).unwrap();
    assert!(fv.get("pelvis_drop_peak").is_none());
    assert!(fv.get("pelvis_x_lf_power").is_none());
    assert!(fv.values.iter().all(|v| v.is_finite()));
    assert!(fv.schema.len() < full.schema.len());
}

#[test]
fn standardize_examples() {
    let (out, p) = standardize(&[vec![1.0, 7.0], vec![3.0, 7.0]], &[vec![4.0, 9.0]]).unwrap();
    assert_eq!(p.mean, vec![2.0, 7.0]);
    assert_eq!(p.std[0], 1.0);
    assert_eq!(out[0][0], 2.0);
    // Constant column passes through and is flagged.
    assert_eq!(out[0][1], 9.0);
    assert_eq!(p.passthrough, vec![false, true]);
    assert!(matches!(p.apply(&[vec![1.0]]), Err(FeatureError::SchemaMismatch(_))));
    assert!(matches!(ScalerParams::fit(&[]), Err(FeatureError::EmptyMatrix)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_train_has_unit_moments(rows in prop::collection::vec(prop::collection::vec(-100.0..100.0f64, 4), 3..40)) {
        let (out, p) = standardize(&rows, &rows).unwrap();
        let n = out.len() as f64;
        for j in 0..4 {
            if p.passthrough[j] { continue; }
            let m = out.iter().map(|r| r[j]).sum::<f64>() / n;
            let s = (out.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn excursion_and_pct_time_stay_in_range(x in prop::collection::vec(-1e3..1e3f64, 3..200)) {
        prop_assert!(excursion(&x).unwrap() >= 0.0);
        let p = pct_time(&x, |v| v > 0.0).unwrap();
        prop_assert!((0.0..=100.0).contains(&p));
    }

    #[test]
    fn band_powers_are_parseval_consistent(x in prop::collection::vec(-10.0..10.0f64, 400..700), rate in 7.0..200.0f64) {
        prop_assume!(x.len() as f64 >= 2.0 * rate);
        let bp = band_power(&x, rate).unwrap();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let ms = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        prop_assert!(bp.lf >= 0.0 && bp.mf >= 0.0 && bp.hf >= 0.0);
        prop_assert!((bp.total - ms).abs() <= 1e-9 * ms.max(1e-300));
        prop_assert!(bp.lf + bp.mf + bp.hf <= ms * (1.0 + 1e-6));
        if rate <= 2.0 * HF_CEILING_HZ {
            prop_assert!((bp.lf + bp.mf + bp.hf - ms).abs() <= 1e-9 * ms.max(1e-300));
        }
    }
}
