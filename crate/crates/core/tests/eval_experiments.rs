use proptest::prelude::*;
use rand::Rng;
use speckle_core::dataset::{generate_dataset, AxisSweep, Dataset, Preprocess, Sample, ScalingBounds, SweepProtocol};
use speckle_core::eval::*;
use speckle_core::nn::{Descriptor, Target, TrainConfig};
use speckle_core::optics::{build_material, MaterialField, Shape};
use speckle_core::{seed, StimulusVector};

fn tiny() -> Preset {
    let mut p = Preset::desk();
    p.train = SweepProtocol {
        depth: AxisSweep::new(100.0, 24.0, 3),
        position: AxisSweep::new(0.0, 240.0, 3),
        temperature: AxisSweep::new(21.1, 0.4, 3),
        repeats: 1,
        shapes: vec![Shape::Circle],
    };
    p.test = SweepProtocol {
        depth: AxisSweep::new(112.0, 24.0, 2),
        position: AxisSweep::new(120.0, 240.0, 2),
        temperature: AxisSweep::new(22.0, 0.0, 1),
        repeats: 1,
        shapes: vec![Shape::Circle],
    };
    p.generate.preprocess = Preprocess { fraction: 0.3, crop: 32 };
    p.training.epochs = 1;
    p.seeds = vec![1, 2];
    p
}

fn field(p: &Preset) -> MaterialField {
    build_material(&p.material).unwrap()
}

#[test]
fn relative_error_matches_scalar_recomputation() {
    let p = tiny();
    let f = field(&p);
    let train = generate_dataset(&f, &p.train, &p.train_options(1)).unwrap();
    let test = generate_dataset(&f, &p.test, &p.test_options()).unwrap();
    let d = Descriptor::decoder(&Target::ALL, 0).with_input_side(32);
    let (model, _) = fit(&train, d, &p.training_for(1), 1, None).unwrap();
    let (report, rows) = evaluate_regression(&model, &test, None, None).unwrap();
    // Recompute from the CSV dump alone.
    let csv = predictions_csv(&rows);
    let lines: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(7).map(|c| c.parse().unwrap()).collect())
        .collect();
    for (i, t) in Target::ALL.into_iter().enumerate() {
        let mut sum = 0.0;
        for l in &lines {
            sum += (l[1 + 2 * i] - l[2 + 2 * i]).abs();
        }
        let range = model.bounds.max[i] - model.bounds.min[i];
        let want = sum / lines.len() as f64 / range * 100.0;
        let got = report.relative(t).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{t}: {got} vs {want}");
    }
}

proptest! {
    #[test]
    fn accuracy_is_confusion_trace_over_total(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let rows: Vec<PredictionRow> = pairs
            .iter()
            .map(|&(l, p)| PredictionRow {
                truth: StimulusVector::new(100.0, 0.0, 22.0),
                estimate: [None; 3],
                label: Some(l),
                predicted: Some(p),
            })
            .collect();
        let bounds = ScalingBounds::new([0.0; 3], [1.0; 3]).unwrap();
        let r = build_report(&rows, &[], &bounds, 4).unwrap();
        let m = r.confusion.as_ref().unwrap();
        let trace: usize = (0..4).map(|i| m[i][i]).sum();
        let hits = pairs.iter().filter(|(l, p)| l == p).count();
        prop_assert_eq!(trace, hits);
        prop_assert_eq!(r.accuracy().unwrap(), trace as f64 / pairs.len() as f64);
        for c in 0..4 {
            let row: usize = m[c].iter().sum();
            prop_assert_eq!(row, pairs.iter().filter(|(l, _)| *l == c).count());
        }
    }
}

#[test]
fn single_interval_set_gives_one_row() {
    let p = tiny();
    let t = experiment_intervals(&field(&p), &p, &[IntervalSet::fine(&p)]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].per_seed.len(), 2);
    assert!(t.rows[0].correlation.iter().all(|c| (-1.0..=1.0).contains(c)));
    assert_eq!(t.to_csv().lines().count(), 2);
}

#[test]
fn single_sample_size_gives_one_row() {
    let p = tiny();
    let t = experiment_sample_size(&field(&p), &p, &[27], 2).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.n_d, 27);
    assert!(t.to_csv().contains("27,true"));
    assert!(experiment_sample_size(&field(&p), &p, &[], 2).is_err());
}

#[test]
fn drift_day_zero_equals_plain_evaluation() {
    let p = tiny();
    let f = field(&p);
    let train = generate_dataset(&f, &p.train, &p.train_options(1)).unwrap();
    let d = Descriptor::decoder(&Target::ALL, 0).with_input_side(32);
    let (model, _) = fit(&train, d, &p.training_for(1), 1, None).unwrap();
    let test = generate_dataset(&f, &p.test, &p.test_options()).unwrap();
    let (plain, _) = evaluate_regression(&model, &test, None, None).unwrap();
    let t = experiment_drift(&f, &[model], &p, &[0.0, 30.0]).unwrap();
    for (i, tg) in Target::ALL.into_iter().enumerate() {
        assert_eq!(t.rows[0].errors[i], plain.relative(tg).unwrap());
    }
    assert_ne!(t.rows[1].errors, t.rows[0].errors);
}

#[test]
fn single_resize_setting_gives_one_row() {
    let p = tiny();
    let t = experiment_resize(&field(&p), &p, &[0.3], &[16]).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].used_crop, 16);
}

#[test]
fn shape_split_is_405_45() {
    let mut p = tiny();
    p.training.max_steps = Some(1);
    let setup = ShapeSetup::desk(&p.material);
    assert_eq!(setup.protocol.len(), 450);
    let r = experiment_shapes(&field(&p), &p, &setup, 1).unwrap();
    assert_eq!((r.train_count, r.test_count), (405, 45));
    let m = r.report.confusion.as_ref().unwrap();
    assert_eq!(m.iter().flatten().sum::<usize>(), 45);
    assert!(r.report.relative(Target::Depth).is_some());
}

#[test]
fn identical_interface_centers_are_at_chance() {
    let mut p = tiny();
    p.training.epochs = 4;
    let setup = InterfaceSetup {
        centers_um: vec![0.0, 0.0],
        train_per_class: 40,
        test_per_class: 40,
        ..InterfaceSetup::default()
    };
    let r = experiment_interface(&p.material, &p, &setup, 1).unwrap();
    assert_eq!(r.report.count, 80);
    assert!((0.3..=0.7).contains(&r.test_accuracy), "accuracy {}", r.test_accuracy);
}

/// Images of i.i.d. pixels; every target is an affine function of pixel 5.
fn toy(n: usize, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value, 0);
    let samples = (0..n)
        .map(|_| {
            let image: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let v = image[5] as f64;
            Sample {
                image,
                raw: StimulusVector::new(150.0 + 30.0 * v, 500.0 - 200.0 * v, 22.0 + v),
            }
        })
        .collect();
    Dataset {
        image_side: 8,
        samples,
        creation_seed: seed_value,
        metadata: String::new(),
    }
}

#[test]
fn linear_baseline_solves_linear_toy() {
    let train = toy(200, 1);
    let test = toy(40, 2);
    let mut config = TrainConfig {
        epochs: 400,
        ..TrainConfig::default()
    };
    config.adam.lr = 1e-2;
    let d = Descriptor::linear(&Target::ALL).with_input_side(8);
    assert_eq!(d.param_count(), 3 * 64 + 3);
    let (model, _) = fit(&train, d, &config, 1, None).unwrap();
    let (report, _) = evaluate_regression(&model, &test, None, None).unwrap();
    for f in &report.features {
        assert!(f.relative_pct < 0.1, "{}: {} %", f.target, f.relative_pct);
    }

    // Closed-form cross-check.
    let x: Vec<f64> = train.image_matrix().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = train.samples.iter().flat_map(|s| s.raw.features()).collect();
    let ls = least_squares(&x, 200, 64, &y, 3, 1e-9).unwrap();
    for s in &test.samples {
        let xi: Vec<f64> = s.image.iter().map(|&v| v as f64).collect();
        for (a, b) in ls.predict(&xi).iter().zip(s.raw.features()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn comparison_is_deterministic() {
    let sets = [(1, toy(100, 1)), (2, toy(100, 3))];
    let test = toy(20, 2);
    let config = |s: u64| TrainConfig {
        epochs: 3,
        shuffle_seed: s,
        ..TrainConfig::default()
    };
    let (a, models) = compare_models(&sets, &test, &config).unwrap();
    let (b, _) = compare_models(&sets, &test, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(models.len(), 2);
    assert_eq!(a.rows.len(), 2);
    assert_eq!(a.row("cnn").unwrap().per_seed.len(), 2);
    assert_eq!(a.row("linear").unwrap().params, 195);
    assert!(a.to_csv().starts_with("model,params"));
}
