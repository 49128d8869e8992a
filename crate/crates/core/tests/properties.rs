use std::collections::BTreeSet;

use harlens::dataset::{
    build_atomic_target, sensor_groups, slide_windows, window_count, ChannelMeta, Recording, RecordingLabels, Segment,
    SensorWindow, TargetMode,
};
use harlens::diffcore::loss::{mean_kl, softmax};
use harlens::diffcore::{DenseArray, ParamStore};
use harlens::encoder::{build_encoder, encoder_forward, names, EncoderConfig};
use harlens::explain::{sensor_attribution, AttributionTarget};
use harlens::metrics::{atomic_accuracy, MetricsReport, RawPrediction};
use proptest::prelude::*;

fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn window(values: Vec<f64>, c: usize, t: usize) -> SensorWindow {
    let channels = (0..c).map(|i| ChannelMeta::new(format!("ch{i}"), format!("s{}", i / 2), format!("loc{}", i / 2))).collect();
    SensorWindow::new(DenseArray::new(vec![c, t], values).unwrap(), channels, 10.0).unwrap()
}

proptest! {
    #[test]
    fn window_count_matches_enumeration(total in 0usize..200, w in 1usize..50, s in 1usize..20) {
        let brute = (0..=total).filter(|&start| start % s == 0 && start + w <= total).count();
        prop_assert_eq!(window_count(total, w, s), brute);
    }

    #[test]
    fn windows_cover_expected_starts(total in 10usize..120, w in 1usize..10, s in 1usize..10) {
        let rec = Recording {
            source_id: "r".into(),
            channels: ChannelMeta::anonymous(2),
            sample_rate: 1.0,
            timestamps: (0..total).map(|t| t as f64).collect(),
            samples: DenseArray::new(vec![2, total], (0..2 * total).map(|v| v as f64).collect()).unwrap(),
            labels: RecordingLabels::Weak { atomic: BTreeSet::from([0]), complex: 0 },
        };
        let wins = slide_windows(&rec, w as f64, s as f64).unwrap();
        prop_assert_eq!(wins.len(), window_count(total, w, s));
        for (k, seg) in wins.iter().enumerate() {
            prop_assert_eq!(seg.window.values.at2(0, 0), (k * s) as f64);
            prop_assert_eq!(seg.window.values.at2(1, w - 1), (total + k * s + w - 1) as f64);
        }
    }

    #[test]
    fn atomic_targets_are_distributions(labels in prop::collection::vec(prop::option::of(0usize..6), 1..40),
                                        weak in prop::collection::btree_set(0usize..6, 1..4)) {
        let seg = Segment {
            window: SensorWindow::new(DenseArray::zeros(&[1, labels.len()]), ChannelMeta::anonymous(1), 1.0).unwrap(),
            complex_label: 0,
            weak_atomic: weak.clone(),
            dense_atomic: Some(labels.clone()),
            source_id: "s".into(),
        };
        for mode in [TargetMode::Weak, TargetMode::Auto] {
            let t = build_atomic_target(&seg, mode, 6).unwrap();
            prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(t.probs.iter().all(|&p| p >= 0.0));
        }
        let w = build_atomic_target(&seg, TargetMode::Weak, 6).unwrap();
        let support: BTreeSet<usize> = (0..6).filter(|&i| w.probs[i] > 0.0).collect();
        prop_assert_eq!(support, weak);
    }

    #[test]
    fn softmax_is_shift_invariant(z in prop::collection::vec(-20.0f64..20.0, 1..8), c in -50.0f64..50.0) {
        let a = softmax(&z);
        let b = softmax(&z.iter().map(|v| v + c).collect::<Vec<_>>());
        prop_assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_non_negative(p in simplex(5), q in simplex(5)) {
        prop_assert!(mean_kl(&p, &q).unwrap() >= -1e-15);
        prop_assert!(mean_kl(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn atomic_accuracy_in_unit_interval(preds in prop::collection::vec(simplex(6), 1..20),
                                        truth in prop::collection::btree_set(0usize..6, 1..4)) {
        let truths = vec![truth; preds.len()];
        let acc = atomic_accuracy(&preds, &truths, 0.4).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn metrics_ignore_prediction_order(rows in prop::collection::vec((simplex(4), 0usize..3, 0usize..3, 0usize..4), 1..30),
                                       rot in 0usize..30) {
        let preds: Vec<RawPrediction> = rows
            .iter()
            .enumerate()
            .map(|(i, (probs, pred, truth, atomic))| RawPrediction {
                id: format!("w{i}"),
                atomic_probs: probs.clone(),
                complex_probs: vec![1.0 / 3.0; 3],
                complex_pred: *pred,
                complex_true: *truth,
                atomic_truth: BTreeSet::from([*atomic]),
            })
            .collect();
        let mut shuffled = preds.clone();
        shuffled.rotate_left(rot % preds.len());
        shuffled.reverse();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mode = Default::default();
        let x = MetricsReport::from_predictions(&preds, &names, 0.4, mode).unwrap();
        let y = MetricsReport::from_predictions(&shuffled, &names, 0.4, mode).unwrap();
        prop_assert_eq!(x.counts, y.counts);
        prop_assert!((x.char_f1 - y.char_f1).abs() < 1e-12);
        prop_assert!((x.atomic_accuracy - y.atomic_accuracy).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&x.char_f1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn encoder_outputs_are_distributions(seed in 0u64..1000, values in prop::collection::vec(-3.0f64..3.0, 4 * 24)) {
        let cfg = EncoderConfig::desk(4, 24, 5, 3, seed);
        let params = build_encoder(&cfg).unwrap();
        let out = encoder_forward(&cfg, &params, &window(values, 4, 24)).unwrap();
        for probs in [&out.atomic_probs, &out.complex_probs] {
            prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(out.activation_cache.shape(), &[cfg.conv_steps(), cfg.fusion_width][..]);
    }
}

/// Rows `group * per .. (group + 1) * per` of `a`, reordered by `perm`.
fn permute_groups(a: &DenseArray, perm: &[usize], per: usize) -> DenseArray {
    let row = a.len() / a.shape()[0];
    let mut data = Vec::with_capacity(a.len());
    for &g in perm {
        data.extend_from_slice(&a.data()[g * per * row..(g + 1) * per * row]);
    }
    DenseArray::new(a.shape().to_vec(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn channel_permutation_is_wired_through(seed in 0u64..500, values in prop::collection::vec(-2.0f64..2.0, 4 * 20),
                                            perm in Just((0..4).collect::<Vec<usize>>()).prop_shuffle()) {
        let cfg = EncoderConfig::desk(4, 20, 3, 2, seed);
        let params = build_encoder(&cfg).unwrap();
        let x = DenseArray::new(vec![4, 20], values).unwrap();
        let mut moved = params.clone();
        let f = cfg.features_per_channel;
        for name in [names::CONV_W, names::CONV_B, names::FUSION_W] {
            moved.set(name, permute_groups(params.get(name).unwrap(), &perm, f)).unwrap();
        }
        let xp = permute_groups(&x, &perm, 1);
        let anon = |v: DenseArray| SensorWindow::new(v, ChannelMeta::anonymous(4), 10.0).unwrap();
        let a = encoder_forward(&cfg, &params, &anon(x)).unwrap();
        let b = encoder_forward(&cfg, &moved, &anon(xp)).unwrap();
        for (p, q) in a.atomic_probs.iter().chain(&a.complex_probs).zip(b.atomic_probs.iter().chain(&b.complex_probs)) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn attribution_ignores_complex_logit_scale(seed in 0u64..500, k in 0.1f64..10.0,
                                               values in prop::collection::vec(-2.0f64..2.0, 4 * 24)) {
        let cfg = EncoderConfig::desk(4, 24, 3, 2, seed);
        let params = build_encoder(&cfg).unwrap();
        let mut scaled: ParamStore = params.clone();
        for name in [names::COMPLEX_W, names::COMPLEX_B] {
            let a = params.get(name).unwrap();
            let data = a.data().iter().map(|v| v * k).collect();
            scaled.set(name, DenseArray::new(a.shape().to_vec(), data).unwrap()).unwrap();
        }
        let w = window(values, 4, 24);
        let r1 = sensor_attribution(&cfg, &params, &w, AttributionTarget::Complex(1)).unwrap();
        let r2 = sensor_attribution(&cfg, &scaled, &w, AttributionTarget::Complex(1)).unwrap();
        prop_assert_eq!(r1.degenerate, r2.degenerate);
        for (s1, s2) in r1.sensors.iter().zip(&r2.sensors) {
            prop_assert!((s1.score - s2.score).abs() < 1e-9);
        }
        prop_assert_eq!(r1.sensors.len(), sensor_groups(&w.channels).len());
    }
}
