use grainkit::analyzer::{
    build_network, compute_loss, decode_labels, encode_labels, encode_weights, forward, forward_tensor, load_weights,
    predict_params, read_weights, repair_boundaries, save_weights, train, AnalyzerError, Labels, NetworkConfig,
    PredictionResult, Preset, TrainConfig, TrainSample, Trainer, Variant,
};
use grainkit::dataset_gen::{sample_params, synthetic_clean_frame, CleanStyle, SamplerConstraints};
use grainkit::fgc_sei::{Component, ComponentModel, IntensityInterval};
use grainkit::media_io::{Frame, Plane};
use grainkit::synthesis::synthesize_frame;
use grainkit::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn luma() -> NetworkConfig {
    NetworkConfig::desk(Variant::Luma)
}

/// Grainy 64x64 luma patches with their labels.
fn samples(n: usize, seed: u64) -> Vec<TrainSample> {
    let mut r = rng(seed);
    let c = SamplerConstraints::default();
    (0..n)
        .map(|i| {
            let params = sample_params(&mut r, &c);
            let clean = synthetic_clean_frame(64, 64, CleanStyle::Smooth, false, seed * 1000 + i as u64);
            let grainy = synthesize_frame(&clean, &params, i as u64).unwrap();
            TrainSample {
                patch: grainy.y,
                labels: encode_labels(params.component(Component::Y).unwrap(), params.log2_scale_factor, &luma())
                    .unwrap(),
            }
        })
        .collect()
}

#[test]
fn presets_have_the_listed_classes_and_head_sizes() {
    let y = NetworkConfig::paper(Variant::Luma);
    assert_eq!(y.head_outputs(), [3, 416, 192, 32]);
    assert_eq!(y.backbone_channels, 64);
    assert_eq!(y.log2_values, vec![3, 4, 5]);
    assert_eq!(y.scale_values.len(), 26);
    assert_eq!(*y.scale_values.last().unwrap(), 250);
    assert_eq!(y.cutoff_values, (3..=14).collect::<Vec<u8>>());
    assert_eq!(
        (y.hidden.log2, y.hidden.scaling, y.hidden.cutoff, y.hidden.intervals),
        (64, 1024, 512, 512)
    );
    let c = NetworkConfig::paper(Variant::Chroma);
    assert_eq!(c.cutoff_values, vec![4, 5, 6, 7, 8]);
    assert_eq!(c.head_outputs(), [3, 6 * 26, 6 * 5, 12]);
    assert_eq!(luma().backbone_channels, 32);
}

#[test]
fn same_seed_builds_identical_networks() {
    let a = build_network(&luma(), &mut rng(4));
    let b = build_network(&luma(), &mut rng(4));
    assert_eq!(a, b);
    assert_eq!(a.parameter_count(), b.parameter_count());
    assert_ne!(a, build_network(&luma(), &mut rng(5)));
    assert_eq!(a.get("head.scaling.fc2.w").unwrap().shape(), &[416, 1024]);
}

#[test]
fn forward_is_size_agnostic_deterministic_and_bounded() {
    let w = build_network(&luma(), &mut rng(1));
    let small = synthetic_clean_frame(64, 64, CleanStyle::Smooth, false, 1).y;
    let large = synthetic_clean_frame(256, 256, CleanStyle::Smooth, false, 2).y;
    for p in [&small, &large] {
        let out = forward(&w, &[p]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].boundaries.len(), 32);
        assert_eq!(out[0].scaling_logits.len(), 416);
        assert_eq!(out[0].cutoff_logits.len(), 192);
        assert_eq!(out[0].log2_logits.len(), 3);
        assert!(out[0].boundaries.iter().all(|b| (0.0..=1.0).contains(b)));
    }
    let zeros = forward(&w, &[&Plane::filled(64, 64, 0)]).unwrap();
    let z = &zeros[0];
    assert!(z
        .boundaries
        .iter()
        .chain(&z.scaling_logits)
        .chain(&z.cutoff_logits)
        .chain(&z.log2_logits)
        .all(|v| v.is_finite()));
    assert_eq!(forward(&w, &[&small]).unwrap(), forward(&w, &[&small]).unwrap());
}

#[test]
fn batched_forward_matches_single_samples() {
    let w = build_network(&luma(), &mut rng(2));
    let planes: Vec<Plane> = (0..3)
        .map(|i| synthetic_clean_frame(64, 64, CleanStyle::Smooth, false, 10 + i).y)
        .collect();
    let batched = forward(&w, &planes.iter().collect::<Vec<_>>()).unwrap();
    for (p, b) in planes.iter().zip(&batched) {
        let single = &forward(&w, &[p]).unwrap()[0];
        let pairs = single
            .boundaries
            .iter()
            .zip(&b.boundaries)
            .chain(single.scaling_logits.iter().zip(&b.scaling_logits))
            .chain(single.cutoff_logits.iter().zip(&b.cutoff_logits))
            .chain(single.log2_logits.iter().zip(&b.log2_logits));
        for (x, y) in pairs {
            assert!((x - y).abs() <= 1e-5 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }
}

#[test]
fn wrong_channel_count_and_mixed_sizes_are_rejected() {
    let w = build_network(&luma(), &mut rng(3));
    let two = Tensor::zeros(&[1, 2, 16, 16]);
    assert!(matches!(forward_tensor(&w, &two), Err(AnalyzerError::WrongChannels(2))));
    let a = Plane::filled(16, 16, 0);
    let b = Plane::filled(32, 32, 0);
    assert!(matches!(forward(&w, &[&a, &b]), Err(AnalyzerError::PatchSize(_))));
}

/// Logits that put all mass on the target and boundaries equal to the truth.
fn perfect(labels: &Labels, config: &NetworkConfig) -> PredictionResult {
    let one_hot = |targets: &[usize], classes: usize| -> Vec<f32> {
        targets
            .iter()
            .flat_map(|&t| (0..classes).map(move |c| if c == t { 1e4 } else { 0.0 }))
            .collect()
    };
    PredictionResult {
        boundaries: labels.boundaries.clone(),
        scaling_logits: one_hot(&labels.scaling, config.scale_values.len()),
        cutoff_logits: one_hot(&labels.cutoff, config.cutoff_values.len()),
        log2_logits: one_hot(&[labels.log2], 3),
    }
}

#[test]
fn loss_of_perfect_prediction_is_zero() {
    let s = samples(3, 7);
    let labels: Vec<Labels> = s.iter().map(|s| s.labels.clone()).collect();
    let preds: Vec<PredictionResult> = labels.iter().map(|l| perfect(l, &luma())).collect();
    let l = compute_loss(&preds, &labels, &luma(), &TrainConfig::new(Preset::Desk, 0)).unwrap();
    assert_eq!(l.total, 0.0, "{l:?}");
}

#[test]
fn boundary_perturbation_moves_only_the_interval_term() {
    let s = samples(2, 8);
    let labels: Vec<Labels> = s.iter().map(|s| s.labels.clone()).collect();
    let cfg = TrainConfig::new(Preset::Desk, 0);
    let w = build_network(&luma(), &mut rng(8));
    let mut preds = forward(&w, &[&s[0].patch, &s[1].patch]).unwrap();
    let base = compute_loss(&preds, &labels, &luma(), &cfg).unwrap();
    preds[0].boundaries[3] = (preds[0].boundaries[3] + 0.3).min(1.0);
    preds[1].boundaries[10] *= 0.5;
    let moved = compute_loss(&preds, &labels, &luma(), &cfg).unwrap();
    assert_ne!(moved.intervals, base.intervals);
    assert_eq!((moved.cutoff, moved.log2, moved.scaling), (base.cutoff, base.log2, base.scaling));
    let delta = (moved.total - base.total) - (moved.intervals - base.intervals);
    assert!(delta.abs() < 1e-3, "{delta}");
}

#[test]
fn each_weight_scales_its_own_term() {
    let s = samples(2, 9);
    let labels: Vec<Labels> = s.iter().map(|s| s.labels.clone()).collect();
    let w = build_network(&luma(), &mut rng(9));
    let preds = forward(&w, &[&s[0].patch, &s[1].patch]).unwrap();
    let cfg = TrainConfig::new(Preset::Desk, 0);
    assert_eq!(cfg.lambdas, [100.0, 1.0, 0.1, 100.0]);
    let base = compute_loss(&preds, &labels, &luma(), &cfg).unwrap();
    let weighted = 100.0 * base.cutoff + base.intervals + 0.1 * base.log2 + 100.0 * base.scaling;
    assert!((base.total - weighted).abs() < 1e-4 * base.total);
    let terms = [base.cutoff, base.intervals, base.log2, base.scaling];
    for (k, term) in terms.iter().enumerate() {
        let mut c = cfg.clone();
        c.lambdas[k] += 2.0;
        let l = compute_loss(&preds, &labels, &luma(), &c).unwrap();
        let delta = l.total - base.total;
        assert!((delta - 2.0 * term).abs() < 1e-4 * base.total, "term {k}: {delta} vs {}", 2.0 * term);
    }
}

#[test]
fn labels_outside_the_classes_are_rejected() {
    let m = ComponentModel::new(
        (0..16)
            .map(|i| IntensityInterval::new(i * 16, i * 16 + 15, if i == 3 { 15 } else { 20 }, 6, 6))
            .collect(),
    );
    let err = encode_labels(&m, 4, &luma()).unwrap_err();
    assert!(matches!(err, AnalyzerError::LabelOutOfRange { ref field, value: 15, .. } if field == "scaling_factor"));
    let m2 = ComponentModel::new(vec![IntensityInterval::new(0, 255, 20, 6, 6)]);
    assert!(matches!(encode_labels(&m2, 4, &luma()), Err(AnalyzerError::IntervalCount { expected: 16, actual: 1 })));
    let ok = ComponentModel::new((0..16).map(|i| IntensityInterval::new(i * 16, i * 16 + 15, 20, 6, 6)).collect());
    assert!(matches!(encode_labels(&ok, 2, &luma()), Err(AnalyzerError::LabelOutOfRange { value: 2, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn label_encoding_round_trips_sampler_output(seed in any::<u64>()) {
        let p = sample_params(&mut rng(seed), &SamplerConstraints::default());
        for (c, cfg) in [
            (Component::Y, luma()),
            (Component::Cb, NetworkConfig::desk(Variant::Chroma)),
            (Component::Cr, NetworkConfig::desk(Variant::Chroma)),
        ] {
            let m = p.component(c).unwrap();
            let labels = encode_labels(m, p.log2_scale_factor, &cfg).unwrap();
            prop_assert_eq!(decode_labels(&labels, &cfg), (m.clone(), p.log2_scale_factor));
        }
    }

    #[test]
    fn repair_keeps_valid_partitions(cuts in proptest::sample::subsequence((1u16..=255).collect::<Vec<_>>(), 0..40)) {
        let mut bounds = Vec::new();
        let mut lower = 0u16;
        for &c in &cuts {
            bounds.push((lower as u8, (c - 1) as u8));
            lower = c;
        }
        bounds.push((lower as u8, 255));
        let flat: Vec<f32> = bounds.iter().flat_map(|&(l, u)| [l as f32 / 255.0, u as f32 / 255.0]).collect();
        prop_assert_eq!(repair_boundaries(&flat), bounds);
    }

    #[test]
    fn repair_always_yields_a_partition(raw in proptest::collection::vec(-0.5f32..1.5, 2..64)) {
        let r = repair_boundaries(&raw);
        prop_assert_eq!(r.len(), (raw.len() / 2).max(1));
        prop_assert_eq!(r[0].0, 0);
        prop_assert_eq!(r.last().unwrap().1, 255);
        for w in r.windows(2) {
            prop_assert_eq!(w[1].0 as u16, w[0].1 as u16 + 1);
        }
        prop_assert!(r.iter().all(|&(l, u)| l <= u));
        let flat: Vec<f32> = r.iter().flat_map(|&(l, u)| [l as f32 / 255.0, u as f32 / 255.0]).collect();
        prop_assert_eq!(repair_boundaries(&flat), r);
    }
}

#[test]
fn every_parameter_receives_gradient() {
    let s = samples(12, 11);
    let cfg = TrainConfig {
        batch_size: 4,
        ..TrainConfig::new(Preset::Desk, 11)
    };
    let mut t = Trainer::new(&s, &luma(), &cfg).unwrap();
    let mut seen = vec![false; t.weights.tensors.len()];
    for _ in 0..10 {
        assert!(t.step().unwrap().total > 0.0);
        for (i, (_, g)) in t.gradients().enumerate() {
            seen[i] |= g.is_some_and(|g| g.iter().any(|&v| v != 0.0));
        }
    }
    let dead: Vec<&str> = t
        .weights
        .tensors
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|((n, _), _)| n.as_str())
        .collect();
    assert!(dead.is_empty(), "no gradient reached {dead:?}");
}

#[test]
fn training_is_seeded_and_records_every_iteration() {
    let s = samples(6, 12);
    let cfg = TrainConfig {
        batch_size: 2,
        iterations: 5,
        ..TrainConfig::new(Preset::Desk, 12)
    };
    let (w1, h1) = train(&s, &luma(), &cfg, |_, _| {}).unwrap();
    let (w2, h2) = train(&s, &luma(), &cfg, |_, _| {}).unwrap();
    assert_eq!(h1.len(), 5);
    assert_eq!(h1, h2);
    assert_eq!(encode_weights(&w1), encode_weights(&w2));
    assert!(matches!(train(&[], &luma(), &cfg, |_, _| {}), Err(AnalyzerError::EmptyDataset)));
}

#[test]
fn single_sample_is_memorized() {
    let s = samples(1, 13);
    let cfg = TrainConfig {
        batch_size: 1,
        iterations: 200,
        ..TrainConfig::new(Preset::Desk, 13)
    };
    let (_, h) = train(&s, &luma(), &cfg, |_, _| {}).unwrap();
    let first = h[0].total;
    let last = h[190..].iter().map(|l| l.total).sum::<f64>() / 10.0;
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn weights_round_trip_and_reject_damage() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("w.fgaw");
    let w = build_network(&luma(), &mut rng(14));
    save_weights(&w, &path).unwrap();
    let back = load_weights(&path, &luma()).unwrap();
    assert_eq!(back, w);
    let p = synthetic_clean_frame(64, 64, CleanStyle::Smooth, false, 3).y;
    assert_eq!(forward(&back, &[&p]).unwrap(), forward(&w, &[&p]).unwrap());

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"FGAW");
    let cut = tmp.path().join("cut.fgaw");
    std::fs::write(&cut, &bytes[..bytes.len() - 7]).unwrap();
    let err = read_weights(&cut).unwrap_err();
    assert!(matches!(err, AnalyzerError::BadWeights { ref detail, .. } if detail.contains("truncated")), "{err}");

    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&cut, &bad).unwrap();
    assert!(matches!(read_weights(&cut), Err(AnalyzerError::BadWeights { .. })));

    let err = load_weights(&path, &NetworkConfig::desk(Variant::Chroma)).unwrap_err();
    assert!(matches!(err, AnalyzerError::ConfigMismatch { .. }), "{err}");
    assert!(err.to_string().contains("chroma"));
}

#[test]
fn predictions_validate_and_are_deterministic() {
    let w = build_network(&luma(), &mut rng(15));
    let wc = build_network(&NetworkConfig::desk(Variant::Chroma), &mut rng(16));
    let frames: Vec<Frame> = (0..3)
        .map(|i| synthetic_clean_frame(128, 96, CleanStyle::Smooth, true, i))
        .collect();
    let p = predict_params(&w, Some(&wc), &frames, None, 64).unwrap();
    assert!(p.validate().is_ok(), "{}", p.validate());
    assert_eq!(p.component(Component::Y).unwrap().intervals.len(), 16);
    assert_eq!(p.component(Component::Cb).unwrap().intervals.len(), 6);
    assert_eq!(p, predict_params(&w, Some(&wc), &frames, None, 64).unwrap());
    let fixed = predict_params(&w, None, &frames, Some(6), 64).unwrap();
    assert_eq!(fixed.log2_scale_factor, 6);
    assert!(fixed.component(Component::Cr).is_none());
    assert!(matches!(predict_params(&w, None, &[], None, 64), Err(AnalyzerError::NoFrames)));
}
