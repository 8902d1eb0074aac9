//! Artifact files: atomic writes, the fit manifest and the draws reader.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sae_core::report::CsvResult;
use sae_core::sampler::DrawsMatrix;

use crate::error::CliError;

pub const CONFIG: &str = "config.toml";
pub const MANIFEST: &str = "manifest.toml";
pub const DRAWS: &str = "draws.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const LOGLIK: &str = "loglik.bin";
pub const CHAIN_STATS: &str = "chain_stats.csv";

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Internal(format!("bad output path {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders a CSV writer into memory and writes it atomically.
pub fn write_csv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> CsvResult) -> Result<(), CliError> {
    let mut buf = vec![];
    f(&mut buf)?;
    write_atomic(path, &buf)
}

/// Summary of one fit, read back by `estimate` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub label: String,
    pub dataset_checksum: String,
    pub converged: bool,
    pub max_rhat: Option<f64>,
    pub nonconverged: Vec<String>,
    pub draws: usize,
    pub observations: usize,
    pub divergences: usize,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Internal(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST), text.as_bytes())
    }
}

/// Parses a draws CSV (`chain, iteration, <parameters>`).
pub fn read_draws(path: &Path) -> Result<DrawsMatrix<f64>, CliError> {
    let bad = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(bad("expected `chain,iteration,...` header".into()));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut chains: Vec<Vec<Vec<f64>>> = vec![];
    for rec in rdr.records() {
        let rec = rec?;
        let c: usize = rec[0].parse().map_err(|_| bad(format!("bad chain `{}`", &rec[0])))?;
        let row = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value `{v}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != names.len() {
            return Err(bad("ragged row".into()));
        }
        if c == chains.len() {
            chains.push(vec![]);
        } else if c + 1 != chains.len() {
            return Err(bad("chains out of order".into()));
        }
        chains[c].push(row);
    }
    let per = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || chains.iter().any(|c| c.len() != per) {
        return Err(bad("chains are empty or of unequal length".into()));
    }
    Ok(DrawsMatrix::from_chains(chains, names))
}
