//! Output directory handling and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use speckle_core::eval::Preset;
use speckle_core::kv::{self, KvMap};

use crate::error::CliError;

/// Files of one run, written into a single directory.
pub struct OutputDir {
    root: PathBuf,
    force: bool,
    written: Vec<(String, u32)>,
}

impl OutputDir {
    /// Create the directory and refuse to clobber any of `names` unless forced.
    pub fn prepare(root: &Path, names: &[String], force: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", root.display())))?;
        if !force {
            for n in names {
                let p = root.join(n);
                if p.exists() {
                    return Err(CliError::Usage(format!(
                        "{} exists; pass --force to overwrite",
                        p.display()
                    )));
                }
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            force,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        if !self.force && p.exists() && !self.written.iter().any(|(n, _)| n == name) {
            return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", p.display())));
        }
        std::fs::write(&p, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?;
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), crc32fast::hash(bytes)));
        Ok(p)
    }

    pub fn written(&self) -> &[(String, u32)] {
        &self.written
    }
}

/// Everything needed to rerun a subcommand.
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub preset: Preset,
    pub reproducible: bool,
    pub threads: usize,
    pub inputs: Vec<(String, u32)>,
    pub elapsed_s: Option<f64>,
}

impl Manifest {
    pub fn to_text(&self, outputs: &[(String, u32)]) -> String {
        let mut kv = KvMap::new();
        kv.set("tool", "speckle");
        kv.set("version", env!("CARGO_PKG_VERSION"));
        kv.set("command", &self.command);
        kv.set("argv", self.argv.join(" "));
        kv.set("reproducible", self.reproducible);
        kv.set("threads", self.threads);
        for (i, (path, crc)) in self.inputs.iter().enumerate() {
            kv.set(&format!("input.{i}.path"), path);
            kv.set(&format!("input.{i}.crc32"), format!("{crc:08x}"));
        }
        for (name, crc) in outputs {
            kv.set(&format!("output.{name}"), format!("{crc:08x}"));
        }
        if let (Some(t), false) = (self.elapsed_s, self.reproducible) {
            kv.set("elapsed_s", kv::float(t));
        }
        kv.extend_section("config", &self.preset.to_kv());
        let mut out = String::new();
        let _ = writeln!(out, "# run manifest; `config.*` keys can be passed back via --config");
        out.push_str(&kv.to_text());
        out
    }
}

/// Render CSV as a space-aligned table.
pub fn csv_to_text(csv: &str) -> String {
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut width = vec![0; cols];
    for r in &rows {
        for (i, c) in r.iter().enumerate() {
            width[i] = width[i].max(c.len());
        }
    }
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:>w$}", w = width[i]))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
