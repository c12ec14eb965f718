//! Dataset materialization: build once per distinct settings tuple, reuse by
//! path afterwards.

use std::path::{Path, PathBuf};

use cda_data::{build_dataset, LabeledDataset};

use crate::config::ExperimentConfig;
use crate::rundir::dataset_path;
use crate::CliError;

/// Ensures the dataset this config describes exists under `root`, building
/// it if needed. Returns its path and whether it was built by this call.
pub fn cmd_make_data(cfg: &ExperimentConfig, root: &Path) -> Result<(PathBuf, bool), CliError> {
    let bc = cfg.build_config()?;
    let path = dataset_path(root, &bc);
    if path.exists() {
        return Ok((path, false));
    }
    let ds = build_dataset(&bc)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    ds.save(&path)?;
    Ok((path, true))
}

/// Loads the dataset for this config, building it first if it is missing.
pub fn ensure_dataset(cfg: &ExperimentConfig, root: &Path) -> Result<LabeledDataset, CliError> {
    let (path, _) = cmd_make_data(cfg, root)?;
    Ok(LabeledDataset::load(&path)?)
}
