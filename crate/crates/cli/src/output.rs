//! Output files: CSV tables, JSON documents and run sidecars.
//!
//! Every file is written to a temporary file in the output directory and
//! renamed into place, so readers never observe a half-written file.
//! Floating-point values are printed in shortest round-trip form.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use ziegler_core::FollowerLever;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SIDECAR: &str = "run.json";

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root.display(), e))?;
        let probe = tempfile::NamedTempFile::new_in(root).map_err(|e| CliError::io(format!("{} is not writable", root.display()), e))?;
        drop(probe);
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.root.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(|e| CliError::io(self.root.display(), e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(target.display(), e))?;
        tmp.persist(&target).map_err(|e| CliError::io(target.display(), e.error))?;
        log::info!("wrote {}", target.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| CliError::io(name, e);
        w.write_record(header).map_err(wrap)?;
        for row in rows {
            w.write_record(&row).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(name, e))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(name, e))?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Writes the sidecar last, listing every file written before it.
    pub fn finish(mut self, config: &RunConfig, record: RunRecord) -> Result<(), CliError> {
        let sidecar = Sidecar {
            config,
            run: RunRecord {
                outputs: self.written.clone(),
                ..record
            },
        };
        self.write_json(SIDECAR, &sidecar)
    }
}

/// What happened during a run; stored next to the configuration echo.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub version: String,
    pub follower_lever: FollowerLever,
    pub lever_arm: f64,
    /// The integration stopped before its horizon; outputs hold what was computed.
    pub truncated: bool,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub events: serde_json::Value,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn new(config: &RunConfig) -> RunRecord {
        RunRecord {
            version: version(),
            follower_lever: config.params.follower_lever,
            lever_arm: config.params.lever(),
            truncated: false,
            outputs: Vec::new(),
            events: serde_json::Value::Null,
            summary: serde_json::Value::Null,
            failure: None,
        }
    }
}

/// The sidecar is the configuration plus a `run` record; it parses back as a [`RunConfig`].
#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    config: &'a RunConfig,
    run: RunRecord,
}

pub fn version() -> String {
    match option_env!("ZIEGLER_GIT_DESCRIBE") {
        Some(git) => format!("ziegler {} ({git})", env!("CARGO_PKG_VERSION")),
        None => format!("ziegler {}", env!("CARGO_PKG_VERSION")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1e16, 123456789.123456789, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        out.write_bytes("a.txt", b"one").unwrap();
        out.write_bytes("a.txt", b"two").unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("a.txt")).unwrap(), "two");
        let leftovers = std::fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
