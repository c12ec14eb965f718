//! Run-directory layout and ownership.
//!
//! A training run owns its directory exclusively for its lifetime, enforced
//! with a lock file created atomically (`LOCK`); a second trainer pointed at
//! the same directory fails fast instead of corrupting state. Evaluation and
//! generation only read frozen artifacts, so they never take the lock.
//!
//! Layout inside a run directory:
//!   config.toml     resolved experiment config snapshot
//!   log.txt         append-only training records, one step per line
//!   checkpoint.bin  rolling latest checkpoint (written atomically)
//!   results-*.txt   evaluation outputs
//!   figures/        emitted plots
//!   grids/          counterfactual image grids and sidecars

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Root for all outputs: the `CDA_OUT` environment variable, or `./runs`.
pub fn output_root() -> PathBuf {
    match std::env::var_os("CDA_OUT") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}

/// Where a dataset built from these settings lives under `root`, one file per
/// distinct (name, n, resolution, p_unlabeled, seed) tuple.
pub fn dataset_path(root: &Path, bc: &cda_data::BuildConfig) -> PathBuf {
    root.join("data").join(format!(
        "{}-n{}-r{}-p{:03}-s{}.bin",
        bc.name,
        bc.n,
        bc.resolution,
        (bc.p_unlabeled * 100.0).round() as u32,
        bc.seed
    ))
}

pub struct RunDir {
    path: PathBuf,
    lock: Option<PathBuf>,
}

impl RunDir {
    /// Opens (creating if needed) a run directory without claiming ownership;
    /// read-only consumers use this.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)?;
        Ok(RunDir { path: path.to_path_buf(), lock: None })
    }

    /// Opens a run directory and claims exclusive ownership. Fails if another
    /// live run holds it (a stale `LOCK` from a killed process must be
    /// removed by hand — the error says so).
    pub fn claim(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)?;
        let lock = path.join("LOCK");
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "pid {}", std::process::id());
                Ok(RunDir { path: path.to_path_buf(), lock: Some(lock) })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::RunLocked(path.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn config_path(&self) -> PathBuf {
        self.path.join("config.toml")
    }

    pub fn log_path(&self) -> PathBuf {
        self.path.join("log.txt")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.path.join("checkpoint.bin")
    }

    pub fn results_path(&self, tag: &str) -> PathBuf {
        self.path.join(format!("results-{tag}.txt"))
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.path.join("figures")
    }

    pub fn grids_dir(&self) -> PathBuf {
        self.path.join("grids")
    }

    /// Appends one record to the training log.
    pub fn append_log(&self, line: &str) -> Result<(), CliError> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.log_path())?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    /// Number of records currently in the log.
    pub fn log_lines(&self) -> Result<usize, CliError> {
        match std::fs::read_to_string(self.log_path()) {
            Ok(s) => Ok(s.lines().count()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if let Some(lock) = &self.lock {
            let _ = std::fs::remove_file(lock);
        }
    }
}

/// Creates a file atomically: writes to a sibling temp path, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
