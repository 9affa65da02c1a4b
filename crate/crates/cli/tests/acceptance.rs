//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. `SPECKLE_ACCEPTANCE=1,5,9` runs a subset.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use speckle_core::dataset::{generate_dataset, read_dataset, write_dataset, Dataset};
use speckle_core::eval::*;
use speckle_core::nn::gradcheck::{check_layers, check_model};
use speckle_core::nn::{read_model, write_model, Descriptor, Model, Target, TrainedModel};
use speckle_core::optics::render::{capture, far_field_intensity, phase_screen, Scene};
use speckle_core::optics::{
    build_material, calibrate_sensitivity, measure_correlation, render_speckle, CalibrationOptions,
    CalibrationTarget, MaterialConfig, MaterialField, NoiseConfig, StimulusAxis,
};
use speckle_core::seed::splitmix64;
use speckle_core::StimulusVector;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt3(e: &[f64; 3]) -> String {
    format!("{:.2}/{:.2}/{:.2} %", e[0], e[1], e[2])
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let layers = check_layers(11, 1e-6).map_err(|e| e.to_string())?;
    let model = Model::<f64>::build(Descriptor::decoder(&Target::ALL, 0), 7).map_err(|e| e.to_string())?;
    let images: Vec<f64> = (0..2 * 64 * 64)
        .map(|i| (splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
        .collect();
    let full = check_model(&model, &images, 4, 1e-5, 3).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let worst_layer = layers.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    let names: Vec<&str> = layers.iter().map(|(n, _)| *n).collect();
    check(
        worst_layer < 1e-4 && full.max_rel_error < 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "layers {names:?} max rel {worst_layer:.2e}; 3-branch model max rel {:.2e} over {} entries; {:.1}s",
            full.max_rel_error,
            full.checked,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_energy_phase(field: &MaterialField) -> Outcome {
    let x = StimulusVector::new(130.0, 300.0, 23.0);
    let scene = Scene::from_stimulus(field, &x);
    let phase = phase_screen(field, &scene);
    let intensity = far_field_intensity(field, &phase);
    let n = field.grid_size() as f64;
    let image_energy: f64 = intensity.iter().sum();
    let aperture_energy: f64 = field.aperture().iter().map(|a| a * a).sum();
    let parseval = (image_energy - n * n * aperture_energy).abs() / (n * n * aperture_energy);

    let shifted: Vec<f64> = phase.iter().map(|p| p + 1.2345).collect();
    let intensity2 = far_field_intensity(field, &shifted);
    let noise = NoiseConfig::default().with_seed(5);
    let a = capture(&intensity, field.grid_size(), field.grid_size(), &noise);
    let b = capture(&intensity2, field.grid_size(), field.grid_size(), &noise);
    let (qa, qb) = (a.quantized().unwrap_or_default(), b.quantized().unwrap_or_default());
    let differing = qa.iter().zip(qb).filter(|(p, q)| p != q).count();
    let max_step = qa.iter().zip(qb).map(|(&p, &q)| (p as i32 - q as i32).abs()).max().unwrap_or(0);

    let t = Instant::now();
    for i in 0..1000u64 {
        let x = StimulusVector::new(100.0 + (i % 6) as f64 * 12.0, (i % 7) as f64 * 100.0, 21.0 + (i % 10) as f64 * 0.2);
        render_speckle(field, &x, &NoiseConfig::default().with_seed(i)).map_err(|e| e.to_string())?;
    }
    let elapsed = t.elapsed();
    check(
        parseval < 1e-10 && max_step <= 1 && elapsed < Duration::from_secs(60),
        format!(
            "Parseval rel {parseval:.1e}; global phase: {differing} of {} pixels differ, max {max_step} level; 1000 renders {:.1}s",
            qa.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_calibration() -> Outcome {
    let start = MaterialConfig {
        deform_gain: 0.1,
        thermal_gain: 1.0,
        ..MaterialConfig::default()
    };
    let cal = calibrate_sensitivity(&start, &CalibrationTarget::defaults(), &CalibrationOptions::default())
        .map_err(|e| e.to_string())?;
    let field = build_material(&cal.config).map_err(|e| e.to_string())?;
    // Fresh probe stimuli and noise, not the ones used while tuning.
    let probe = CalibrationOptions {
        seed: 0xACCE_97,
        probes: 16,
        ..CalibrationOptions::default()
    };
    let c = |axis, d| measure_correlation(&field, axis, d, &probe).map_err(|e| e.to_string());
    let (d12, d52) = (c(StimulusAxis::Depth, 12.0)?, c(StimulusAxis::Depth, 52.0)?);
    let (p120, p520) = (c(StimulusAxis::Position, 120.0)?, c(StimulusAxis::Position, 520.0)?);
    check(
        (0.51..=0.71).contains(&d12) && (0.56..=0.76).contains(&p120) && d52 < d12 && p520 < p120,
        format!(
            "gains {:.4}/{:.4}; C(12 µm) = {d12:.3}, C(120 µm) = {p120:.3}, C(52 µm) = {d52:.3}, C(520 µm) = {p520:.3}",
            cal.config.deform_gain, cal.config.thermal_gain
        ),
    )
}

fn flip_outcomes<E: std::fmt::Debug>(bytes: &[u8], parse: impl Fn(&[u8]) -> Result<(), E>) -> (usize, usize) {
    let mut rejected = 0;
    let mut total = 0;
    for i in 0..100u64 {
        let r = splitmix64(i ^ 0x0F_22);
        let mut b = bytes.to_vec();
        if i % 2 == 0 {
            b.truncate((r % bytes.len() as u64) as usize);
        } else {
            let pos = (r % bytes.len() as u64) as usize;
            b[pos] ^= 1 << (r >> 60 & 7);
        }
        total += 1;
        // A panic would abort the run; every case must come back as Err.
        if parse(&b).is_err() {
            rejected += 1;
        }
    }
    (rejected, total)
}

fn c11_formats(field: &MaterialField, preset: &Preset) -> Outcome {
    let mut tiny = preset.test.clone();
    tiny.repeats = 1;
    let ds = generate_dataset(field, &tiny, &preset.test_options()).map_err(|e| e.to_string())?;
    let bytes = write_dataset(&ds);
    let back = read_dataset(&bytes).map_err(|e| e.to_string())?;
    let ds_ok = back == ds && write_dataset(&back) == bytes;

    let desc = Descriptor::decoder(&Target::ALL, 3).with_input_side(16);
    let model = Model::<f32>::build(desc, 3).map_err(|e| e.to_string())?;
    let mut model = model;
    // Give batchnorm layers a history so the model is usable for inference.
    let bounds = ds.bounds().map_err(|e| e.to_string())?;
    let img: Vec<f32> = (0..4 * 256).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
    let (_, cache) = model
        .forward_train(&model.input_tensor(&img).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    model.update_running_stats(&cache);
    let mbytes = write_model(&model, &bounds);
    let mback: TrainedModel<f32> = read_model(&mbytes).map_err(|e| e.to_string())?;
    let model_ok = write_model(&mback.model, &mback.bounds) == mbytes && mback.bounds == bounds;

    let (dr, dt) = flip_outcomes(&bytes, |b| read_dataset(b).map(|_| ()));
    let (mr, mt) = flip_outcomes(&mbytes, |b| read_model::<f32>(b).map(|_| ()));
    check(
        ds_ok && model_ok && dr == dt && mr == mt,
        format!(
            "dataset round trip {ds_ok}, model round trip {model_ok}; corrupted datasets rejected {dr}/{dt}, models {mr}/{mt}"
        ),
    )
}

const TINY: &str = "\
train.repeats = 1
train.depth = 100, 24, 3
train.position = 0, 240, 3
train.temperature = 21.1, 0.4, 3
test.repeats = 1
training.epochs = 3
";

fn pipeline(dir: &Path, out: &str, threads: &str) -> Result<(), String> {
    for cmd in [&["gen"][..], &["train"], &["eval"]] {
        let o = Command::new(env!("CARGO_BIN_EXE_speckle"))
            .current_dir(dir)
            .args(["--config", "tiny.cfg", "--reproducible", "--threads", threads, "--out", out])
            .args(cmd)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("tiny.cfg"), TINY).map_err(|e| e.to_string())?;
    pipeline(dir.path(), "a", "1")?;
    pipeline(dir.path(), "b", "1")?;
    pipeline(dir.path(), "c", "4")?;
    let files = ["train.spkd", "test.spkd", "model.spkm", "loss.csv", "report.csv", "report.txt", "predictions.csv"];
    let mut mismatched = Vec::new();
    for f in files {
        let a = std::fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        for run in ["b", "c"] {
            let other = std::fs::read(dir.path().join(run).join(f)).map_err(|e| e.to_string())?;
            if other != a {
                mismatched.push(format!("{run}/{f}"));
            }
        }
    }
    check(
        mismatched.is_empty(),
        format!("{} artifacts compared across two 1-thread runs and a 4-thread run; mismatches {mismatched:?}", files.len()),
    )
}

struct Desk {
    compare: CompareTable,
    models: Vec<TrainedModel<f32>>,
    elapsed: Duration,
}

fn desk_compare(field: &MaterialField, preset: &Preset) -> Result<Desk, String> {
    let t = Instant::now();
    let test = generate_dataset(field, &preset.test, &preset.test_options()).map_err(|e| e.to_string())?;
    let mut sets: Vec<(u64, Dataset)> = Vec::new();
    for &s in &preset.seeds {
        sets.push((s, generate_dataset(field, &preset.train, &preset.train_options(s)).map_err(|e| e.to_string())?));
    }
    let (compare, models) = compare_models(&sets, &test, &|s| preset.training_for(s)).map_err(|e| e.to_string())?;
    Ok(Desk {
        compare,
        models,
        elapsed: t.elapsed(),
    })
}

fn c4_end_to_end(desk: &Desk) -> Outcome {
    let cnn = desk.compare.row("cnn").ok_or("missing cnn row")?;
    let worst = cnn.per_seed.iter().flatten().copied().fold(0.0, f64::max);
    let seeds: Vec<String> = cnn.per_seed.iter().map(fmt3).collect();
    check(
        worst <= 8.0 && desk.elapsed <= Duration::from_secs(30 * 60),
        format!(
            "per-seed errors (depth/position/temperature) {}; worst {worst:.2} %; 3 seeds × 2 models in {:.0}s",
            seeds.join(", "),
            desk.elapsed.as_secs_f64()
        ),
    )
}

fn c5_baseline(desk: &Desk) -> Outcome {
    let cnn = desk.compare.row("cnn").ok_or("missing cnn row")?;
    let lin = desk.compare.row("linear").ok_or("missing linear row")?;
    check(
        cnn.mean_error() < lin.mean_error(),
        format!(
            "CNN {} (mean {:.2} %) vs linear {} (mean {:.2} %), 3-seed average",
            fmt3(&cnn.errors),
            cnn.mean_error(),
            fmt3(&lin.errors),
            lin.mean_error()
        ),
    )
}

fn c6_intervals(field: &MaterialField, preset: &Preset) -> Outcome {
    let t = experiment_intervals(field, preset, &[IntervalSet::fine(preset), IntervalSet::coarse()])
        .map_err(|e| e.to_string())?;
    let (fine, coarse) = (&t.rows[0], &t.rows[1]);
    check(
        coarse.mean_error() > fine.mean_error(),
        format!(
            "fine C = {:.2}/{:.2}/{:.2} → {} (mean {:.2} %); coarse C = {:.2}/{:.2}/{:.2} → {} (mean {:.2} %)",
            fine.correlation[0],
            fine.correlation[1],
            fine.correlation[2],
            fmt3(&fine.errors),
            fine.mean_error(),
            coarse.correlation[0],
            coarse.correlation[1],
            coarse.correlation[2],
            fmt3(&coarse.errors),
            coarse.mean_error()
        ),
    )
}

const SAMPLE_STEPS: u64 = 80;

fn c7_sample_size(field: &MaterialField, preset: &Preset) -> Outcome {
    let n_d = preset.train.states();
    let sizes = [n_d / 4, n_d, 2 * n_d];
    let t = experiment_sample_size(field, preset, &sizes, SAMPLE_STEPS).map_err(|e| e.to_string())?;
    let e: Vec<f64> = t.rows.iter().map(|r| r.mean_error()).collect();
    let further = (e[1] - e[2]) / e[1];
    check(
        e[2] < e[0] && further <= 0.10,
        format!(
            "N = {}/{}/{}: mean error {:.2}/{:.2}/{:.2} %; improvement beyond N_d {:.1} %; {SAMPLE_STEPS} steps per cell",
            sizes[0],
            sizes[1],
            sizes[2],
            e[0],
            e[1],
            e[2],
            further * 100.0
        ),
    )
}

fn c8_shapes(field: &MaterialField, preset: &Preset) -> Outcome {
    let mut p = preset.clone();
    p.training.epochs = 15;
    let setup = ShapeSetup::desk(&p.material);
    let r = experiment_shapes(field, &p, &setup, p.seeds[0]).map_err(|e| e.to_string())?;
    let acc = r.report.accuracy().unwrap_or(0.0);
    let depth = r.report.relative(Target::Depth).unwrap_or(f64::INFINITY);
    check(
        setup.protocol.len() == 450 && r.train_count == 405 && r.test_count == 45 && acc >= 0.90 && depth <= 8.0,
        format!(
            "{} samples, {}/{} split; accuracy {acc:.3}; depth error {depth:.2} %",
            setup.protocol.len(),
            r.train_count,
            r.test_count
        ),
    )
}

fn c9_interface(preset: &Preset) -> Outcome {
    let mut p = preset.clone();
    p.training.epochs = 12;
    let setup = InterfaceSetup::default();
    let r = experiment_interface(&p.material, &p, &setup, p.seeds[0]).map_err(|e| e.to_string())?;
    let n_train = setup.train_per_class * setup.centers_um.len();
    check(
        n_train == 320 && r.test_accuracy == 1.0,
        format!(
            "{n_train} training samples; train accuracy {:.3}, test accuracy {:.3} on {} samples",
            r.train_accuracy, r.test_accuracy, r.report.count
        ),
    )
}

fn c10_drift(field: &MaterialField, preset: &Preset, desk: &Desk) -> Outcome {
    let days = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
    let t = experiment_drift(field, &desk.models, preset, &days).map_err(|e| e.to_string())?;
    let e: Vec<f64> = t.rows.iter().map(|r| r.mean_error()).collect();
    let monotone = e.windows(2).all(|w| w[1] >= w[0] - 0.2);
    let rise = e[e.len() - 1] - e[0];
    let curve: Vec<String> = e.iter().map(|v| format!("{v:.2}")).collect();
    check(
        monotone && rise <= 5.0,
        format!("mean error over days {days:?}: {} %; day-30 increase {rise:.2} %", curve.join(" ")),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("SPECKLE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let preset = Preset::desk();
    let field = build_material(&preset.material).expect("default material");

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let t = Instant::now();
        let outcome = f();
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &outcome {
            Ok(d) | Err(d) => d.clone(),
        };
        println!("{tag} criterion {n} ({name}): {detail} [{:.0}s]", t.elapsed().as_secs_f64());
        results.push((n, name, outcome));
    };

    run(1, "gradient correctness", &mut c1_gradients);
    run(2, "energy and phase invariants", &mut || c2_energy_phase(&field));
    run(3, "calibration fidelity", &mut c3_calibration);
    run(11, "formats", &mut || c11_formats(&field, &preset));
    run(12, "determinism", &mut c12_determinism);

    let desk = if [4, 5, 10].iter().any(|&n| wanted(n)) {
        match desk_compare(&field, &preset) {
            Ok(d) => Some(d),
            Err(e) => {
                for n in [4, 5, 10] {
                    run(n, "desk-scale run", &mut || Err(e.clone()));
                }
                None
            }
        }
    } else {
        None
    };
    if let Some(d) = &desk {
        run(4, "end-to-end desk regression", &mut || c4_end_to_end(d));
        run(5, "baseline ordering", &mut || c5_baseline(d));
        run(10, "drift trend", &mut || c10_drift(&field, &preset, d));
    }
    run(6, "interval effect", &mut || c6_intervals(&field, &preset));
    run(7, "sample-size effect", &mut || c7_sample_size(&field, &preset));
    run(8, "shape task", &mut || c8_shapes(&field, &preset));
    run(9, "interface task", &mut || c9_interface(&preset));

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
