use std::path::{Path, PathBuf};

use hypgcn_core::{io, PruneSpec, PrunedModel};

use crate::error::{CliError, CliResult};

pub mod prune;
pub mod rfc;
pub mod sim;
pub mod synth;
pub mod verify;

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub fn out_dir(dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.to_path_buf())
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_pruned(path: &Path) -> CliResult<PrunedModel> {
    io::pruned_from_bytes(&read(path)?).map_err(CliError::at(path))
}

pub fn load_spec(path: &Path) -> CliResult<PruneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    PruneSpec::from_toml(&text).map_err(CliError::at(path))
}

/// Input frames for a run: the override, or the model's own.
pub fn frames_or(model_frames: usize, frames: Option<usize>) -> CliResult<usize> {
    match frames {
        Some(0) => Err(CliError::Config("--frames must be positive".into())),
        Some(f) => Ok(f),
        None => Ok(model_frames),
    }
}

/// Per-sample seed derived from the run seed.
pub fn sample_seed(seed: u64, sample: usize) -> u64 {
    seed ^ (sample as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
