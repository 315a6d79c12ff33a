//! Run directory bookkeeping: emitted files, stage status, content hashes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lplab::grid::{Field, Grid};
use lplab::io::{write_binary, CsvTable};
use num_complex::Complex64;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::plot::LinePlot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config: ExperimentConfig,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<StageStatus>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.stages.iter().all(|s| s.ok)
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one root and remembers them for the manifest. Shared
/// across sweep workers; every run writes to its own subdirectory.
pub struct Emitter {
    root: PathBuf,
    files: Mutex<Vec<PathBuf>>,
    stages: Mutex<Vec<StageStatus>>,
}

impl Emitter {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Emitter {
            root: root.to_path_buf(),
            files: Mutex::new(Vec::new()),
            stages: Mutex::new(Vec::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn create(&self, rel: &str) -> Result<BufWriter<fs::File>, CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let f = fs::File::create(&path)?;
        self.files.lock().expect("poisoned").push(PathBuf::from(rel));
        Ok(BufWriter::new(f))
    }

    pub fn csv(&self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut table = CsvTable::new(self.create(rel)?, header)?;
        for r in rows {
            table.row(&r)?;
        }
        table.finish()?.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn real_field(&self, rel: &str, grid: &Grid, values: &[f64]) -> Result<(), CliError> {
        let field = Field::real(grid, values.to_vec())?;
        let mut w = self.create(rel)?;
        write_binary(&field, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn complex_field(&self, rel: &str, grid: &Grid, values: &[Complex64]) -> Result<(), CliError> {
        let field = Field::complex(grid, values.to_vec())?;
        let mut w = self.create(rel)?;
        write_binary(&field, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn svg(&self, rel: &str, plot: &LinePlot) -> Result<(), CliError> {
        let mut w = self.create(rel)?;
        w.write_all(plot.render().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn stage<T>(&self, name: &str, result: &Result<T, CliError>) {
        if let Err(e) = result {
            log::error!("stage {name} failed: {e}");
        } else {
            log::info!("stage {name} done");
        }
        self.stages.lock().expect("poisoned").push(StageStatus {
            name: name.to_string(),
            ok: result.is_ok(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
    }

    /// Hashes every emitted file and writes `manifest.json`.
    pub fn finish(&self, kind: &str, config: &ExperimentConfig, started: f64) -> Result<RunManifest, CliError> {
        let mut files: Vec<PathBuf> = self.files.lock().expect("poisoned").clone();
        files.sort();
        files.dedup();
        let mut entries = Vec::with_capacity(files.len());
        for rel in files {
            let bytes = fs::read(self.root.join(&rel))?;
            entries.push(FileEntry {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_hex(&bytes),
            });
        }
        let mut stages = self.stages.lock().expect("poisoned").clone();
        stages.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = RunManifest {
            kind: kind.to_string(),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: started,
            finished_unix: unix_now(),
            stages,
            files: entries,
        };
        let mut w = BufWriter::new(fs::File::create(self.root.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(manifest)
    }
}
