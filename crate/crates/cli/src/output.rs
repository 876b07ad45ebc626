use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use phyauth::eval::ExperimentConfig;
use serde::Serialize;
use tempfile::NamedTempFile;

/// Failure classes, each mapped to its own exit status.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
            CliError::Io(m) => write!(f, "I/O failure: {m}"),
        }
    }
}

impl From<phyauth::Error> for CliError {
    fn from(e: phyauth::Error) -> Self {
        use phyauth::Error as E;
        match e {
            E::Io { .. } => CliError::Io(e.to_string()),
            E::DegenerateComponent { .. } | E::NotPositiveDefinite | E::FitFailure { .. } | E::BlockUpdate { .. } => {
                CliError::Runtime(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Output files staged in memory and published together.
///
/// Every file is first written to a temporary file in its target directory;
/// only when all of them are written are they renamed into place. A failure
/// before that point leaves no output behind.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    pub fn commit(self) -> CliResult<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
            let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| io_error(&dir, e))?;
            tmp.write_all(&bytes).map_err(|e| io_error(&path, e))?;
            tmp.as_file().sync_all().map_err(|e| io_error(&path, e))?;
            staged.push((tmp, path));
        }
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
        }
        Ok(())
    }
}

/// Record of one command run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub tool_version: String,
    pub started: String,
    pub finished: String,
    pub output_paths: Vec<String>,
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, started: DateTime<Utc>, outputs: &Outputs) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: timestamp(started),
            finished: timestamp(Utc::now()),
            output_paths: outputs.paths(),
        }
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        v.push(b'\n');
        Ok(v)
    }
}
