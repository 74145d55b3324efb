//! Run-directory layout and (de)serialization of its files.

use std::path::{Path, PathBuf};

use microgrid_core::{DeviceFleet, KpiReport, RunConfig, Trajectory};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_FILE: &str = "run.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

/// Summary of one simulated episode, stored next to its trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub controller: String,
    pub seed: u64,
    pub scenario_name: String,
    /// Content hash of the scenario series.
    pub scenario_content_hash: String,
    /// Hash of the exact episode (scenario, window, outage seed).
    pub scenario_hash: String,
    pub start: usize,
    pub horizon: usize,
    pub fleet: DeviceFleet,
    pub kpis: KpiReport,
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Resolved configuration of a run. The output directory is left out so the
/// file does not depend on where the run was written.
pub fn write_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let mut resolved = cfg.clone();
    resolved.output_dir = None;
    let text = resolved.to_toml_string()?;
    write_text(&dir.join(CONFIG_FILE), &text)
}

/// Trajectory and run summary from a run directory, or from a trajectory
/// file whose directory holds the summary.
pub fn read_run(path: &Path) -> Result<(Trajectory, RunInfo), CliError> {
    let dir: PathBuf = if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    let traj_path = if path.is_dir() {
        dir.join(TRAJECTORY_FILE)
    } else {
        path.to_path_buf()
    };
    if !traj_path.exists() {
        return Err(CliError::Usage(format!(
            "no trajectory at {}",
            traj_path.display()
        )));
    }
    let info: RunInfo = read_json(&dir.join(RUN_FILE))?;
    let traj = Trajectory::load_csv(&traj_path, info.scenario_hash.clone())?;
    Ok((traj, info))
}
