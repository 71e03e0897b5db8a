//! Output directory with atomic writes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "MLSILAB_OUT";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub bytes: u64,
}

#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    /// Write through a temporary file in the same directory, then rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp-{}", std::process::id()));
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &target)?;
        self.artifacts.retain(|a| a.name != name);
        self.artifacts.push(Artifact { name: name.to_string(), bytes: bytes.len() as u64 });
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Render with a writer-based serializer (CSV tables), then write.
    pub fn write_with<F>(&mut self, name: &str, render: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> mlsilab_core::Result<()>,
    {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.write(name, &buf)
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub mlsilab: &'static str,
    pub mlsilab_core: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub config: serde_json::Value,
    pub versions: Versions,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub artifacts: &'a [Artifact],
}

impl<'a> Manifest<'a> {
    pub fn new<C: Serialize>(subcommand: &'a str, config: &C, wall: Duration, artifacts: &'a [Artifact]) -> Result<Self, CliError> {
        Ok(Self {
            subcommand,
            config: serde_json::to_value(config)?,
            versions: Versions { mlsilab: env!("CARGO_PKG_VERSION"), mlsilab_core: mlsilab_core::VERSION },
            threads: rayon::current_num_threads(),
            wall_time_seconds: wall.as_secs_f64(),
            artifacts,
        })
    }
}
