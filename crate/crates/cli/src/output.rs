use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
    pub warnings: Vec<String>,
    started: Instant,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a str,
    outputs: &'a [String],
    warnings: &'a [String],
    wall_time_s: f64,
}

impl Output {
    /// Creates the directory when its parent exists.
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        if !dir.is_dir() {
            let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !parent.is_dir() {
                return Err(CliError::Usage(format!(
                    "output directory {} cannot be created: parent {} does not exist",
                    dir.display(),
                    parent.display()
                )));
            }
            fs::create_dir(dir)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
        }
        let probe = dir.join(".fibercav-write-test");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            warnings: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Runs `f` on an in-memory buffer and writes the result.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| CliError::Data(format!("formatting {name}: {e}")))?;
        self.write_bytes(name, &buf)
    }

    /// Writes `report.json`: command, resolved config, file manifest,
    /// warnings and wall time. The manifest lists itself last.
    /// `failure` is recorded in the report but not logged; the caller
    /// reports it.
    pub fn finish(mut self, command: &str, config: &str, failure: Option<String>) -> Result<(), CliError> {
        let mut outputs = self.files.clone();
        outputs.push("report.json".into());
        let mut warnings = std::mem::take(&mut self.warnings);
        for w in &warnings {
            log::warn!("{w}");
        }
        warnings.extend(failure);
        let report = Report {
            command,
            config,
            outputs: &outputs,
            warnings: &warnings,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        self.write_json("report.json", &report)
    }
}
