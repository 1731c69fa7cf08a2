//! State persistence. `state.json` is the authoritative resume format (the
//! whole experiment state including rng and log); archive snapshots, the
//! evaluation log, and the report are written alongside it as the canonical
//! external artefacts.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::orchestrator::state::{ExperimentReport, ExperimentState};

pub const STATE_FILE: &str = "state.json";
pub const REPORT_FILE: &str = "report.json";
pub const LOG_FILE: &str = "eval_log.jsonl";
pub const ARCHIVE_DIR: &str = "archives";

fn snapshot_path(dir: &Path, level: &str, process: &str) -> PathBuf {
    dir.join(ARCHIVE_DIR).join(format!("{level}_{process}.json"))
}

/// Write the full state plus canonical snapshots and the evaluation log.
/// A later `load_state` of the same directory continues bit-identically.
pub fn save_state(state: &ExperimentState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(ARCHIVE_DIR))?;
    fs::write(dir.join(STATE_FILE), serde_json::to_string(state)?)?;
    for archive in state.all_archives() {
        let path = snapshot_path(dir, archive.level().as_str(), archive.process());
        fs::write(path, serde_json::to_string_pretty(&archive.snapshot())?)?;
    }
    let mut log = state.log.join("\n");
    if !log.is_empty() {
        log.push('\n');
    }
    fs::write(dir.join(LOG_FILE), log)?;
    Ok(())
}

pub fn load_state(dir: &Path) -> Result<ExperimentState> {
    let path = dir.join(STATE_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::Load {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let state: ExperimentState = serde_json::from_str(&text).map_err(|e| Error::Load {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if !state.deps.is_consistent() {
        return Err(Error::Load {
            path: path.display().to_string(),
            reason: "dependency index inconsistent with stored state".into(),
        });
    }
    Ok(state)
}

pub fn save_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(report)?)?;
    Ok(())
}
