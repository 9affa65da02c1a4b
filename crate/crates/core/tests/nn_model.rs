use speckle_core::dataset::ScalingBounds;
use speckle_core::nn::gradcheck::check_model;
use speckle_core::nn::*;

fn values(n: usize, salt: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let z = speckle_core::seed::mix(salt, i as u64);
            (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

fn small(targets: &[Target], classes: usize) -> Descriptor {
    Descriptor {
        channels: [3, 4],
        feature: 12,
        hidden: [8, 6],
        ..Descriptor::decoder(targets, classes)
    }
    .with_input_side(8)
}

fn unit_bounds() -> ScalingBounds {
    ScalingBounds::new([-1.0; 3], [1.0; 3]).unwrap()
}

#[test]
fn decoder_parameter_count_matches_layer_arithmetic() {
    let conv1 = 32 * 5 * 5 + 32;
    let bn1 = 2 * 32;
    let conv2 = 64 * 32 * 5 * 5 + 64;
    let bn2 = 2 * 64;
    let fc = 16 * 16 * 64 * 500 + 500;
    let branch = (500 * 200 + 200) + (200 * 100 + 100) + (100 + 1);
    let want = conv1 + bn1 + conv2 + bn2 + fc + 3 * branch;
    assert_eq!(want, 8_605_991);
    let d = Descriptor::decoder(&Target::ALL, 0);
    assert_eq!(d.param_count(), want);
    let with_classes = Descriptor::decoder(&Target::ALL, 3);
    assert_eq!(with_classes.param_count(), want + branch - (100 + 1) + (100 * 3 + 3));
}

#[test]
fn linear_baseline_parameter_count() {
    let d = Descriptor::linear(&Target::ALL);
    assert_eq!(d.param_count(), 12_291);
}

#[test]
fn linear_with_zero_weights_outputs_bias() {
    let mut m = Model::<f64>::zeros(Descriptor::linear(&Target::ALL)).unwrap();
    m.params_mut()[1].data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
    let x = m.input_tensor(&values(2 * 4096, 1)).unwrap();
    let out = m.forward_train(&x).unwrap().0;
    assert_eq!(out.regression, vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
}

#[test]
fn zero_model_on_zero_image_outputs_zero() {
    let m = Model::<f32>::zeros(Descriptor::decoder(&Target::ALL, 3)).unwrap();
    let x = m.input_tensor(&vec![0.0; 2 * 4096]).unwrap();
    let out = m.forward_train(&x).unwrap().0;
    assert!(out.regression.iter().chain(&out.logits).all(|&v| v == 0.0));
}

#[test]
fn batch_of_fifty_gives_fifty_by_three() {
    let m = Model::<f32>::build(Descriptor::decoder(&Target::ALL, 0), 1).unwrap();
    let imgs: Vec<f32> = values(50 * 4096, 2).into_iter().map(|v| v as f32).collect();
    let out = m.forward_train(&m.input_tensor(&imgs).unwrap()).unwrap().0;
    assert_eq!(out.regression.len(), 50 * 3);
    assert!(out.logits.is_empty());
}

#[test]
fn inconsistent_descriptors_are_rejected() {
    let bad = [
        Descriptor::decoder(&Target::ALL, 0).with_input_side(66),
        Descriptor::decoder(&[], 0),
        Descriptor::decoder(&[Target::Depth, Target::Depth], 0),
        Descriptor::decoder(&Target::ALL, 1),
        Descriptor {
            kernel: 4,
            ..Descriptor::decoder(&Target::ALL, 0)
        },
        Descriptor {
            classes: 2,
            ..Descriptor::linear(&Target::ALL)
        },
    ];
    for d in bad {
        assert!(matches!(Model::<f32>::build(d, 0), Err(NnError::Config(_))));
    }
}

#[test]
fn small_model_gradients_match_finite_differences() {
    let m = Model::<f64>::build(small(&Target::ALL, 3), 7).unwrap();
    let r = check_model(&m, &values(3 * 64, 8), 40, 1e-5, 9).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
    let lin = Model::<f64>::build(Descriptor::linear(&[Target::Depth]).with_input_side(6), 3).unwrap();
    let r = check_model(&lin, &values(4 * 36, 10), 40, 1e-5, 11).unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn inference_requires_running_statistics() {
    let m = Model::<f64>::build(small(&Target::ALL, 0), 1).unwrap();
    let x = m.input_tensor(&values(64, 1)).unwrap();
    assert!(matches!(m.forward_infer(&x), Err(NnError::Untrained)));
    assert!(matches!(
        predict(&m, &values(64, 1), &unit_bounds()),
        Err(NnError::Untrained)
    ));
}

fn toy_data(n: usize, desc: &Descriptor) -> TrainData<f32> {
    let px = desc.input_side * desc.input_side;
    let images: Vec<f32> = values(n * px, 100).into_iter().map(|v| v as f32).collect();
    let targets: Vec<f32> = values(n * desc.targets.len(), 101).into_iter().map(|v| v as f32).collect();
    let labels = if desc.classes > 0 {
        (0..n).map(|i| i % desc.classes).collect()
    } else {
        Vec::new()
    };
    TrainData::new(desc.input_side, images, targets, desc.targets.len(), labels).unwrap()
}

#[test]
fn overfits_twenty_samples() {
    let desc = Descriptor {
        feature: 64,
        hidden: [32, 16],
        ..small(&Target::ALL, 0)
    };
    let data = toy_data(20, &desc);
    let mut m = Model::<f32>::build(desc, 3).unwrap();
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 2000,
        ..TrainConfig::default()
    };
    let hist = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(hist.steps, 2000);
    assert!(hist.last().unwrap().mse < 1e-3, "{:?}", hist.last());

    // Predictions on training images land within 1% of the [-1, 1] range.
    let preds = predict(&m, &data.images, &unit_bounds()).unwrap();
    for (i, p) in preds.iter().enumerate() {
        for (j, t) in Target::ALL.iter().enumerate() {
            let err = (p.get(*t).unwrap() - data.targets[i * 3 + j] as f64).abs();
            assert!(err < 0.02, "sample {i} {t}: {err}");
        }
    }
}

#[test]
fn small_learning_rate_loss_is_monotone() {
    let desc = small(&[Target::Depth], 0);
    let data = toy_data(20, &desc);
    let mut m = Model::<f64>::build(desc, 4).unwrap();
    let data = TrainData::new(
        data.side,
        data.images.iter().map(|&v| v as f64).collect(),
        data.targets.iter().map(|&v| v as f64).collect(),
        1,
        Vec::new(),
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 200,
        adam: AdamConfig {
            lr: 1e-4,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let hist = train(&mut m, &data, &cfg).unwrap();
    for w in hist.epochs.windows(2) {
        assert!(w[1].total <= w[0].total, "{:?} -> {:?}", w[0], w[1]);
    }
}

#[test]
fn zero_gradient_leaves_loss_unchanged() {
    let desc = small(&Target::ALL, 0);
    let mut m = Model::<f64>::zeros(desc.clone()).unwrap();
    let data = TrainData::new(8, values(10 * 64, 5), vec![0.0; 30], 3, Vec::new()).unwrap();
    let cfg = TrainConfig {
        batch_size: 5,
        epochs: 5,
        ..TrainConfig::default()
    };
    let before = m.params().to_vec();
    let hist = train(&mut m, &data, &cfg).unwrap();
    for w in hist.epochs.windows(2) {
        assert!((w[1].total - w[0].total).abs() < 1e-12);
    }
    assert_eq!(m.params(), &before[..]);
}

#[test]
fn divergence_names_the_epoch() {
    let desc = Descriptor::linear(&[Target::Depth]).with_input_side(4);
    let data = TrainData::new(4, vec![1e30f32; 3 * 16], vec![0.0; 3], 1, Vec::new()).unwrap();
    let mut m = Model::<f32>::build(desc, 0).unwrap();
    m.params_mut()[0].data_mut().fill(1e30);
    let err = train(&mut m, &data, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, NnError::Divergence { epoch: 0, .. }), "{err}");
}

#[test]
fn classifier_learns_labels_and_probabilities_sum_to_one() {
    let desc = small(&[Target::Depth], 3);
    let data = toy_data(24, &desc);
    let mut m = Model::<f32>::build(desc, 5).unwrap();
    let cfg = TrainConfig {
        batch_size: 12,
        epochs: 300,
        ..TrainConfig::default()
    };
    train(&mut m, &data, &cfg).unwrap();
    let preds = predict(&m, &data.images, &unit_bounds()).unwrap();
    let mut correct = 0;
    for (p, &l) in preds.iter().zip(&data.labels) {
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        correct += usize::from(p.class() == Some(l));
    }
    assert!(correct >= 22, "{correct}/24");
}

#[test]
fn batch_and_single_prediction_agree() {
    let desc = small(&Target::ALL, 2);
    let data = toy_data(6, &desc);
    let mut m = Model::<f32>::build(desc, 6).unwrap();
    train(&mut m, &data, &TrainConfig { batch_size: 3, epochs: 2, ..TrainConfig::default() }).unwrap();
    let all = predict(&m, &data.images, &unit_bounds()).unwrap();
    for (i, img) in data.images.chunks(64).enumerate() {
        assert_eq!(predict(&m, img, &unit_bounds()).unwrap()[0], all[i]);
    }
}

#[test]
fn equal_logits_give_uniform_probabilities() {
    let desc = small(&[], 4);
    let mut m = Model::<f64>::zeros(desc).unwrap();
    // One fake training batch so inference statistics exist.
    let x = m.input_tensor(&values(2 * 64, 3)).unwrap();
    let (_, cache) = m.forward_train(&x).unwrap();
    m.update_running_stats(&cache);
    let p = predict(&m, &values(64, 4), &unit_bounds()).unwrap();
    assert_eq!(p[0].probabilities, vec![0.25; 4]);
}

#[test]
fn training_is_identical_across_thread_counts() {
    let desc = small(&Target::ALL, 2);
    let data = toy_data(30, &desc);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut m = Model::<f32>::build(desc.clone(), 8).unwrap();
            let cfg = TrainConfig {
                batch_size: 7,
                epochs: 3,
                shuffle_seed: 9,
                ..TrainConfig::default()
            };
            let h = train(&mut m, &data, &cfg).unwrap();
            (write_model(&m, &unit_bounds()), h)
        })
    };
    let (a, ha) = run(1);
    let (b, hb) = run(4);
    assert_eq!(ha, hb);
    assert!(a == b, "checkpoints differ between 1 and 4 threads");
}

#[test]
fn max_steps_stops_mid_epoch() {
    let desc = Descriptor::linear(&[Target::Depth]).with_input_side(4);
    let data = TrainData::new(4, vec![0.1f32; 10 * 16], vec![0.0; 10], 1, Vec::new()).unwrap();
    let mut m = Model::<f32>::build(desc, 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 3,
        epochs: 10,
        max_steps: Some(5),
        ..TrainConfig::default()
    };
    let h = train(&mut m, &data, &cfg).unwrap();
    assert_eq!(h.steps, 5);
    assert_eq!(h.epochs.len(), 2);
}
