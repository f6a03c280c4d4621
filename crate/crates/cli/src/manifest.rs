use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "MEMSTPN_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation, enough to repeat it.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cli_version: &'static str,
    pub library_version: &'static str,
    pub schema_version: Option<u32>,
    pub config_sha256: Option<String>,
    /// Resolved configuration, TOML.
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: Option<&ExperimentConfig>) -> Self {
        Manifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            cli_version: env!("CARGO_PKG_VERSION"),
            library_version: memstpn::VERSION,
            schema_version: config.map(|c| c.schema_version),
            config_sha256: config.map(ExperimentConfig::digest),
            config: config.map(ExperimentConfig::to_toml),
            seed: config.map(|c| c.seed),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(digest_file(path, path)?);
        Ok(())
    }

    /// Writes the manifest last, listing every file already written to `dir`.
    pub fn write(mut self, dir: &Path, outputs: &[&str]) -> CliResult<PathBuf> {
        for name in outputs {
            self.outputs.push(digest_file(&dir.join(name), Path::new(name))?);
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).map_err(memstpn::Error::from)?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn digest_file(path: &Path, label: &Path) -> CliResult<FileDigest> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: label.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// `--out`, then the config's `out`, then `$MEMSTPN_OUT/<command>-<tag>`,
/// then `runs/<command>-<tag>`.
pub fn output_dir(flag: Option<&Path>, config: Option<&Path>, command: &str, tag: &str) -> PathBuf {
    if let Some(p) = flag.or(config) {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{command}-{tag}"))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
}

pub fn create_file(dir: &Path, name: &str) -> CliResult<std::io::BufWriter<fs::File>> {
    let path = dir.join(name);
    let f = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(std::io::BufWriter::new(f))
}
