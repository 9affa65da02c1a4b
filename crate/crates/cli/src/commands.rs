//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use speckle_core::dataset::{
    generate_dataset, preprocess, read_dataset, render_raw, sweep_grid, write_dataset, Dataset,
    GenerateOptions, SweepProtocol,
};
use speckle_core::eval::{
    compare_models, evaluate_regression, experiment_drift, experiment_interface,
    experiment_intervals, experiment_resize, experiment_sample_size, experiment_shapes, fit,
    mean_std, predictions_csv, with_split, EvalReport, InterfaceSetup, IntervalSet, Latency,
    Preset, ShapeSetup,
};
use speckle_core::kv::{self, KvMap};
use speckle_core::nn::{predict, read_model, write_model, Architecture, Descriptor, Target, TrainedModel};
use speckle_core::optics::{
    build_material, calibrate_sensitivity, CalibrationOptions, CalibrationTarget, MaterialField,
};
use speckle_core::SpeckleImage;

use crate::error::CliError;
use crate::output::{csv_to_text, Manifest, OutputDir};

pub struct Context {
    pub preset: Preset,
    pub out: PathBuf,
    pub force: bool,
    pub reproducible: bool,
    pub threads: usize,
    pub argv: Vec<String>,
    pub started: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

impl Context {
    fn seed(&self) -> u64 {
        self.preset.seeds[0]
    }

    fn open(&self, command: &str, names: &[&str]) -> Result<OutputDir, CliError> {
        let mut all: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        all.push(manifest_name(command));
        OutputDir::prepare(&self.out, &all, self.force)
    }

    fn field(&self) -> Result<MaterialField, CliError> {
        Ok(build_material(&self.preset.material)?)
    }

    fn finish(&self, command: &str, mut out: OutputDir, inputs: Vec<(String, u32)>) -> Result<(), CliError> {
        let manifest = Manifest {
            command: command.to_string(),
            argv: self.argv.clone(),
            preset: self.preset.clone(),
            reproducible: self.reproducible,
            threads: self.threads,
            inputs,
            elapsed_s: Some(self.started.elapsed().as_secs_f64()),
        };
        let text = manifest.to_text(out.written());
        out.write(&manifest_name(command), text.as_bytes())?;
        Ok(())
    }
}

fn manifest_name(command: &str) -> String {
    format!("{command}.manifest")
}

fn read_input(path: &Path, what: &str) -> Result<(Vec<u8>, (String, u32)), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {what} {}: {e}", path.display())))?;
    let crc = crc32fast::hash(&bytes);
    Ok((bytes, (path.display().to_string(), crc)))
}

fn load_dataset_input(path: &Path) -> Result<(Dataset, (String, u32)), CliError> {
    let (bytes, input) = read_input(path, "dataset")?;
    let ds = read_dataset(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((ds, input))
}

fn load_model_input(path: &Path) -> Result<(TrainedModel<f32>, (String, u32)), CliError> {
    let (bytes, input) = read_input(path, "model")?;
    let model = read_model::<f32>(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((model, input))
}

pub fn calibrate(ctx: &Context, probes: usize) -> Result<(), CliError> {
    let mut out = ctx.open("calibrate", &["calibrated.cfg", "calibration.csv"])?;
    let options = CalibrationOptions {
        probes,
        noise: ctx.preset.generate.noise,
        ..CalibrationOptions::default()
    };
    let cal = calibrate_sensitivity(&ctx.preset.material, &CalibrationTarget::defaults(), &options)?;
    let mut csv = String::from("axis,delta,target,measured\n");
    for (t, measured) in &cal.achieved {
        let axis = format!("{:?}", t.axis).to_lowercase();
        let _ = writeln!(csv, "{axis},{:?},{:?},{:?}", t.delta, t.correlation, measured);
    }
    let mut cfg = KvMap::new();
    cfg.extend_section("material", &cal.config.to_kv());
    out.write("calibrated.cfg", cfg.to_text().as_bytes())?;
    out.write("calibration.csv", csv.as_bytes())?;
    print!("{}", csv_to_text(&csv));
    println!(
        "deform_gain = {}, thermal_gain = {} after {} steps",
        kv::float(cal.config.deform_gain),
        kv::float(cal.config.thermal_gain),
        cal.steps
    );
    ctx.finish("calibrate", out, Vec::new())
}

pub fn gen(ctx: &Context, split: Split, pgm: usize) -> Result<(), CliError> {
    let p = &ctx.preset;
    let mut parts: Vec<(&str, &SweepProtocol, GenerateOptions)> = Vec::new();
    if split != Split::Test {
        parts.push(("train", &p.train, p.train_options(ctx.seed())));
    }
    if split != Split::Train {
        parts.push(("test", &p.test, p.test_options()));
    }
    let mut names: Vec<String> = Vec::new();
    for (name, protocol, _) in &parts {
        names.push(format!("{name}.spkd"));
        for i in 0..pgm.min(protocol.len()) {
            names.push(format!("{name}_{i:04}.pgm"));
        }
    }
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = ctx.open("gen", &name_refs)?;
    let field = ctx.field()?;
    for (name, protocol, options) in &parts {
        let ds = with_split(generate_dataset(&field, protocol, options)?, name);
        let path = out.write(&format!("{name}.spkd"), &write_dataset(&ds))?;
        println!("{}: {} samples of {}×{}", path.display(), ds.len(), ds.image_side, ds.image_side);
        let grid = sweep_grid(protocol)?;
        for (i, x) in grid.iter().enumerate().take(pgm) {
            let (_, image) = render_raw(&field, x, i, options)?;
            out.write(&format!("{name}_{i:04}.pgm"), &image.to_pgm())?;
        }
    }
    ctx.finish("gen", out, Vec::new())
}

pub fn train(
    ctx: &Context,
    data: Option<PathBuf>,
    arch: Architecture,
    targets: Option<Vec<Target>>,
    classes: usize,
) -> Result<(), CliError> {
    let data = data.unwrap_or_else(|| ctx.out.join("train.spkd"));
    let (ds, input) = load_dataset_input(&data)?;
    let mut out = ctx.open("train", &["model.spkm", "loss.csv"])?;
    let targets = targets.unwrap_or_else(|| Target::ALL.to_vec());
    let descriptor = match arch {
        Architecture::Decoder => Descriptor::decoder(&targets, classes),
        Architecture::Linear => {
            if classes > 0 {
                return Err(CliError::Usage("the linear model has no classifier".into()));
            }
            Descriptor::linear(&targets)
        }
    }
    .with_input_side(ds.image_side);
    let seed = ctx.seed();
    let config = ctx.preset.training_for(seed);
    let (model, history) = fit(&ds, descriptor, &config, seed, None)?;
    out.write("model.spkm", &write_model(&model.model, &model.bounds))?;
    out.write("loss.csv", history.to_csv().as_bytes())?;
    if let Some(last) = history.last() {
        println!(
            "trained {} parameters for {} steps; final epoch loss {:.6} (mse {:.6}, ce {:.6})",
            model.model.param_count(),
            history.steps,
            last.total,
            last.mse,
            last.ce
        );
    }
    ctx.finish("train", out, vec![input])
}

pub fn eval(ctx: &Context, model: Option<PathBuf>, data: Option<PathBuf>) -> Result<(), CliError> {
    let model_path = model.unwrap_or_else(|| ctx.out.join("model.spkm"));
    let data_path = data.unwrap_or_else(|| ctx.out.join("test.spkd"));
    let (trained, model_input) = load_model_input(&model_path)?;
    let (ds, data_input) = load_dataset_input(&data_path)?;
    let mut out = ctx.open("eval", &["report.csv", "report.txt", "predictions.csv"])?;
    let (report, rows) = evaluate_regression(&trained, &ds, None, None)?;
    out.write("report.csv", report.to_csv().as_bytes())?;
    out.write("report.txt", report.to_text().as_bytes())?;
    out.write("predictions.csv", predictions_csv(&rows).as_bytes())?;
    print!("{}", report.to_text());
    ctx.finish("eval", out, vec![model_input, data_input])
}

fn load_image(path: &Path, ctx: &Context, side: usize) -> Result<(Vec<f32>, (String, u32)), CliError> {
    let (bytes, input) = read_input(path, "image")?;
    let image = SpeckleImage::from_pgm(&bytes).map_err(|e| CliError::from(e).context(path.display()))?;
    let pre = ctx.preset.generate.preprocess;
    if pre.crop != side {
        return Err(CliError::Usage(format!(
            "preprocessing crops to {} pixels but the model expects {side}",
            pre.crop
        )));
    }
    let values = preprocess(&image, &pre).map_err(|e| CliError::from(e).context(path.display()))?;
    Ok((values.into_iter().map(|v| v as f32).collect(), input))
}

pub fn infer(
    ctx: &Context,
    model: Option<PathBuf>,
    images: &[PathBuf],
    time: bool,
    runs: usize,
) -> Result<(), CliError> {
    let model_path = model.unwrap_or_else(|| ctx.out.join("model.spkm"));
    let (trained, model_input) = load_model_input(&model_path)?;
    let mut out = ctx.open("infer", &["infer.csv"])?;
    let side = trained.model.descriptor().input_side;
    let mut inputs = vec![model_input];
    let mut pixels = Vec::with_capacity(images.len() * side * side);
    for path in images {
        let (v, input) = load_image(path, ctx, side)?;
        pixels.extend(v);
        inputs.push(input);
    }
    let preds = predict(&trained.model, &pixels, &trained.bounds)?;
    let mut csv = String::from("image,depth,position,temperature,class\n");
    for (path, p) in images.iter().zip(&preds) {
        let cell = |t: Target| p.get(t).map(|v| format!("{v:?}")).unwrap_or_default();
        let class = p.class().map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            path.display(),
            cell(Target::Depth),
            cell(Target::Position),
            cell(Target::Temperature),
            class
        );
        let mut line = path.display().to_string();
        for t in Target::ALL {
            if let Some(v) = p.get(t) {
                let _ = write!(line, "  {t} = {v:.3}");
            }
        }
        if let Some(c) = p.class() {
            let _ = write!(line, "  class = {c}");
        }
        println!("{line}");
    }
    out.write("infer.csv", csv.as_bytes())?;
    if time {
        let mut ms = Vec::with_capacity(runs * images.len());
        for _ in 0..runs.max(1) {
            for path in images {
                let t = Instant::now();
                let (v, _) = load_image(path, ctx, side)?;
                predict(&trained.model, &v, &trained.bounds)?;
                ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
        }
        let (mean_ms, std_ms) = mean_std(&ms);
        let latency = Latency {
            mean_ms,
            std_ms,
            runs: ms.len(),
        };
        println!(
            "latency = {:.3} ± {:.3} ms per image over {} runs",
            latency.mean_ms, latency.std_ms, latency.runs
        );
    }
    ctx.finish("infer", out, inputs)
}

fn write_table(out: &mut OutputDir, name: &str, csv: &str, extra: &str) -> Result<(), CliError> {
    let mut text = csv_to_text(csv);
    text.push_str(extra);
    out.write(&format!("{name}.csv"), csv.as_bytes())?;
    out.write(&format!("{name}.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn exp_intervals(ctx: &Context, coarse: Option<Vec<f64>>) -> Result<(), CliError> {
    let coarse = match coarse {
        None => IntervalSet::coarse(),
        Some(v) if v.len() == 3 => IntervalSet::new("coarse", [v[0], v[1], v[2]]),
        Some(_) => return Err(CliError::Usage("--coarse takes depth,position,temperature".into())),
    };
    let mut out = ctx.open("exp-intervals", &["intervals.csv", "intervals.txt"])?;
    let table = experiment_intervals(&ctx.field()?, &ctx.preset, &[IntervalSet::fine(&ctx.preset), coarse])?;
    write_table(&mut out, "intervals", &table.to_csv(), "")?;
    ctx.finish("exp-intervals", out, Vec::new())
}

pub fn exp_samples(ctx: &Context, sizes: Option<Vec<usize>>, steps: u64) -> Result<(), CliError> {
    let n_d = ctx.preset.train.states();
    let sizes = sizes.unwrap_or_else(|| vec![n_d / 4, n_d, 2 * n_d]);
    let mut out = ctx.open("exp-samples", &["samples.csv", "samples.txt"])?;
    let table = experiment_sample_size(&ctx.field()?, &ctx.preset, &sizes, steps)?;
    let note = format!("n_d = {}, {} optimizer steps per cell\n", table.n_d, table.steps);
    write_table(&mut out, "samples", &table.to_csv(), &note)?;
    ctx.finish("exp-samples", out, Vec::new())
}

pub fn exp_drift(ctx: &Context, days: &[f64]) -> Result<(), CliError> {
    let mut out = ctx.open("exp-drift", &["drift.csv", "drift.txt"])?;
    let field = ctx.field()?;
    let p = &ctx.preset;
    let mut models = Vec::with_capacity(p.seeds.len());
    for &s in &p.seeds {
        let train_set = generate_dataset(&field, &p.train, &p.train_options(s))?;
        let d = Descriptor::decoder(&Target::ALL, 0).with_input_side(train_set.image_side);
        models.push(fit(&train_set, d, &p.training_for(s), s, None)?.0);
    }
    let table = experiment_drift(&field, &models, p, days)?;
    write_table(&mut out, "drift", &table.to_csv(), "")?;
    ctx.finish("exp-drift", out, Vec::new())
}

fn report_files(out: &mut OutputDir, name: &str, report: &EvalReport, extra: &str) -> Result<(), CliError> {
    let mut text = report.to_text();
    text.push_str(extra);
    out.write(&format!("{name}.csv"), report.to_csv().as_bytes())?;
    out.write(&format!("{name}.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn exp_shapes(ctx: &Context) -> Result<(), CliError> {
    let mut out = ctx.open("exp-shapes", &["shapes.csv", "shapes.txt"])?;
    let setup = ShapeSetup::desk(&ctx.preset.material);
    let r = experiment_shapes(&ctx.field()?, &ctx.preset, &setup, ctx.seed())?;
    let note = format!(
        "train = {}, test = {}, train accuracy = {:.4}\n",
        r.train_count, r.test_count, r.train_accuracy
    );
    report_files(&mut out, "shapes", &r.report, &note)?;
    ctx.finish("exp-shapes", out, Vec::new())
}

pub fn exp_interface(ctx: &Context, centers: Option<Vec<f64>>) -> Result<(), CliError> {
    let mut setup = InterfaceSetup::default();
    if let Some(c) = centers {
        setup.centers_um = c;
    }
    let mut out = ctx.open("exp-interface", &["interface.csv", "interface.txt"])?;
    let r = experiment_interface(&ctx.preset.material, &ctx.preset, &setup, ctx.seed())?;
    let note = format!("train accuracy = {:.4}, test accuracy = {:.4}\n", r.train_accuracy, r.test_accuracy);
    report_files(&mut out, "interface", &r.report, &note)?;
    ctx.finish("exp-interface", out, Vec::new())
}

pub fn exp_resize(ctx: &Context, fractions: &[f64], crops: &[usize]) -> Result<(), CliError> {
    let mut out = ctx.open("exp-resize", &["resize.csv", "resize.txt"])?;
    let table = experiment_resize(&ctx.field()?, &ctx.preset, fractions, crops)?;
    write_table(&mut out, "resize", &table.to_csv(), "")?;
    ctx.finish("exp-resize", out, Vec::new())
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let mut out = ctx.open("compare", &["compare.csv", "compare.txt"])?;
    let field = ctx.field()?;
    let p = &ctx.preset;
    let test = with_split(generate_dataset(&field, &p.test, &p.test_options())?, "test");
    let mut sets = Vec::with_capacity(p.seeds.len());
    for &s in &p.seeds {
        sets.push((s, generate_dataset(&field, &p.train, &p.train_options(s))?));
    }
    let (table, _) = compare_models(&sets, &test, &|s| p.training_for(s))?;
    let note = format!("input crc32 = {:08x}\n", table.input_crc);
    write_table(&mut out, "compare", &table.to_csv(), &note)?;
    ctx.finish("compare", out, Vec::new())
}
