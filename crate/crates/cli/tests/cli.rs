use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
train.repeats = 1
train.depth = 100, 24, 3
train.position = 0, 240, 3
train.temperature = 21.1, 0.4, 3
test.repeats = 1
test.depth = 112, 24, 2
test.position = 120, 240, 2
training.epochs = 2
";

fn speckle(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speckle"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_desk_preset_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = speckle(dir.path(), &["--preset", "desk-scale", "--out", "o", "gen", "--split", "test"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("o/test.spkd").is_file());
    let manifest = std::fs::read_to_string(dir.path().join("o/gen.manifest")).unwrap();
    assert!(manifest.contains("command = gen"));
    assert!(manifest.contains("config.preset = desk-scale"));
    assert!(manifest.contains("output.test.spkd = "));
}

#[test]
fn train_on_missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = speckle(dir.path(), &["--out", "o", "train", "--data", "no/such/file.spkd"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no/such/file.spkd"), "{}", stderr(&o));
}

#[test]
fn corrupt_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.spkd"), b"SPKL1\n garbage").unwrap();
    let o = speckle(dir.path(), &["--out", "o", "train", "--data", "bad.spkd"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error_with_help() {
    let dir = tempfile::tempdir().unwrap();
    let o = speckle(dir.path(), &["gen", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = speckle(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "no_such_key = 1\n").unwrap();
    let o = speckle(dir.path(), &["--config", "c.cfg", "gen"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn divergence_exits_with_four() {
    let dir = tiny_dir();
    let d = dir.path();
    assert_eq!(speckle(d, &["--config", "tiny.cfg", "--out", "o", "gen", "--split", "train"]).status.code(), Some(0));
    std::fs::write(d.join("div.cfg"), format!("{TINY}training.lr = 1e30\ntraining.epochs = 3\n")).unwrap();
    let o = speckle(d, &["--config", "div.cfg", "--out", "o", "train"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("epoch"));
}

#[test]
fn pipeline_is_reproducible_and_refuses_overwrite() {
    let dir = tiny_dir();
    let d = dir.path();
    let base = ["--config", "tiny.cfg", "--reproducible", "--out", "o"];
    for cmd in [&["gen", "--pgm", "1"][..], &["train"], &["eval"]] {
        let args: Vec<&str> = base.iter().chain(cmd).copied().collect();
        let o = speckle(d, &args);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}: {}", stderr(&o));
    }
    let first = std::fs::read(d.join("o/report.csv")).unwrap();
    let first_txt = std::fs::read(d.join("o/report.txt")).unwrap();

    let o = speckle(d, &[&base[..], &["eval"]].concat());
    assert_eq!(o.status.code(), Some(2), "overwrite must be refused");
    assert!(stderr(&o).contains("--force"));

    let o = speckle(d, &[&base[..], &["eval", "--force"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("o/report.csv")).unwrap(), first);
    assert_eq!(std::fs::read(d.join("o/report.txt")).unwrap(), first_txt);

    let manifest = std::fs::read_to_string(d.join("o/eval.manifest")).unwrap();
    assert!(manifest.contains("reproducible = true"));
    assert!(!manifest.contains("elapsed_s"));
    assert!(manifest.contains("input.0.crc32"));
}

#[test]
fn infer_on_exported_frame_matches_eval() {
    let dir = tiny_dir();
    let d = dir.path();
    let base = ["--config", "tiny.cfg", "--out", "o"];
    for cmd in [&["gen", "--pgm", "2"][..], &["train"], &["eval"]] {
        let o = speckle(d, &[&base[..], cmd].concat());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let o = speckle(d, &[&base[..], &["infer", "o/test_0000.pgm", "o/test_0001.pgm", "--time", "--runs", "2"]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("latency = "), "{stdout}");

    let infer = std::fs::read_to_string(d.join("o/infer.csv")).unwrap();
    let preds = std::fs::read_to_string(d.join("o/predictions.csv")).unwrap();
    for (i, (a, b)) in infer.lines().skip(1).zip(preds.lines().skip(1)).enumerate() {
        let a: Vec<&str> = a.split(',').collect();
        let b: Vec<&str> = b.split(',').collect();
        // infer: image,depth,position,temperature ; predictions: index,truth,pred,...
        assert_eq!(a[1], b[2], "row {i} depth");
        assert_eq!(a[2], b[4], "row {i} position");
        assert_eq!(a[3], b[6], "row {i} temperature");
    }
}

#[test]
fn manifest_reproduces_a_dataset() {
    let dir = tiny_dir();
    let d = dir.path();
    let o = speckle(d, &["--config", "tiny.cfg", "--reproducible", "--out", "a", "gen", "--split", "test"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = speckle(d, &["--config", "a/gen.manifest", "--reproducible", "--out", "b", "gen", "--split", "test"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("a/test.spkd")).unwrap(), std::fs::read(d.join("b/test.spkd")).unwrap());
}
