use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub sha256: String,
    /// Primary artifacts must replay byte for byte; others (timings) need not.
    pub primary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub x_entry_reads: Option<u64>,
    pub xdot_entry_reads: Option<u64>,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// Arguments after the program name, with paths made absolute.
    pub command: Vec<String>,
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<OutputFile>,
    pub wall_time_secs: f64,
    pub ledger: LedgerTotals,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Tracks a command's inputs and outputs while it runs.
#[derive(Debug)]
pub struct Recorder {
    pub out_dir: PathBuf,
    pub command: Vec<String>,
    pub seed: u64,
    pub config_sha256: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<(PathBuf, bool)>,
    pub ledger: LedgerTotals,
    started: std::time::Instant,
}

impl Recorder {
    pub fn new(out_dir: &Path, command: Vec<String>, seed: u64) -> std::io::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Recorder {
            out_dir: out_dir.to_path_buf(),
            command,
            seed,
            config_sha256: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            ledger: LedgerTotals::default(),
            started: std::time::Instant::now(),
        })
    }

    /// Path for an output file, recorded for the manifest.
    pub fn output(&mut self, name: &str, primary: bool) -> PathBuf {
        self.outputs.push((PathBuf::from(name), primary));
        self.out_dir.join(name)
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(absolute(path)?);
        Ok(())
    }

    pub fn finish(self) -> std::io::Result<RunManifest> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(FileDigest { path: p.clone(), sha256: sha256_file(p)? }))
            .collect::<std::io::Result<_>>()?;
        let outputs = self
            .outputs
            .iter()
            .map(|(p, primary)| Ok(OutputFile { path: p.clone(), sha256: sha256_file(&self.out_dir.join(p))?, primary: *primary }))
            .collect::<std::io::Result<_>>()?;
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            config_sha256: self.config_sha256,
            seed: self.seed,
            inputs,
            outputs,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            ledger: self.ledger,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)? + "\n";
        std::fs::write(self.out_dir.join(MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

/// Canonical argument list: `--flag=value` split in two and the values of
/// path flags made absolute, so a replay can run from any directory.
pub fn canonical_args(args: &[String]) -> std::io::Result<Vec<String>> {
    const PATH_FLAGS: [&str; 4] = ["--in", "--out", "--config", "--manifest"];
    let mut out = Vec::with_capacity(args.len());
    let mut iter = args.iter().peekable();
    while let Some(a) = iter.next() {
        let (flag, inline) = match a.split_once('=') {
            Some((f, v)) if f.starts_with("--") => (f.to_string(), Some(v.to_string())),
            _ => (a.clone(), None),
        };
        let is_path = PATH_FLAGS.contains(&flag.as_str());
        out.push(flag);
        let value = match inline {
            Some(v) => Some(v),
            None if is_path => iter.next().cloned(),
            None => None,
        };
        if let Some(v) = value {
            out.push(if is_path { absolute(Path::new(&v))?.display().to_string() } else { v });
        }
    }
    Ok(out)
}

pub fn absolute(path: &Path) -> std::io::Result<PathBuf> {
    if path.is_absolute() {
        Ok(path.to_path_buf())
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

/// `command` with the value of `--out` replaced.
pub fn redirect(command: &[String], out: &Path) -> Vec<String> {
    let mut args = command.to_vec();
    match args.iter().position(|a| a == "--out") {
        Some(k) if k + 1 < args.len() => args[k + 1] = out.display().to_string(),
        _ => {
            args.push("--out".into());
            args.push(out.display().to_string());
        }
    }
    args
}
