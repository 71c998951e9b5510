//! Run directories: one timestamped subdirectory per invocation holding
//! the resolved config, the artifacts and a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// CSV cell text; floats use the shortest round-trip form.
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        format!("{self:?}")
    }
}

impl Cell for Option<f64> {
    fn cell(&self) -> String {
        self.map_or(String::new(), |v| v.cell())
    }
}

impl Cell for String {
    fn cell(&self) -> String {
        self.clone()
    }
}

pub struct RunDir {
    path: PathBuf,
    subcommand: &'static str,
    created: String,
    started: Instant,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    created: &'a str,
    elapsed_seconds: f64,
    source_config: Option<String>,
    seed: u64,
    trials: usize,
    threads: usize,
    artifacts: &'a [String],
}

impl RunDir {
    /// Creates `<parent>/<subcommand>-<timestamp>`, suffixed on collision.
    pub fn create(parent: &Path, subcommand: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        let now = chrono::Local::now();
        let stamp = now.format("%Y%m%dT%H%M%S%.3f").to_string();
        let base = parent.join(format!("{subcommand}-{stamp}"));
        let mut path = base.clone();
        let mut k = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = PathBuf::from(format!("{}-{k}", base.display()));
                    k += 1;
                }
                Err(e) => return Err(CliError::Io(format!("{}: {e}", path.display()))),
            }
        }
        Ok(Self { path, subcommand, created: now.to_rfc3339(), started: Instant::now(), artifacts: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path.join(name);
        fs::write(&p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// Writes a CSV with the given header and rows of cells.
    pub fn write_csv<R, I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        R: IntoIterator,
        R::Item: Cell,
        I: IntoIterator<Item = R>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.into_iter().map(|v| v.cell()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let p = self.path.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, cfg: &ExperimentConfig, source: Option<&Path>) -> Result<(), CliError> {
        let artifacts = std::mem::take(&mut self.artifacts);
        let manifest = Manifest {
            tool: "ephoresim",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            created: &self.created,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
            source_config: source.map(|p| p.display().to_string()),
            seed: cfg.simulation.seed,
            trials: cfg.simulation.trials,
            threads: rayon::current_num_threads(),
            artifacts: &artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        self.write_text("manifest.json", &(text + "\n"))
    }
}
