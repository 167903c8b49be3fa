use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gaitrisk_core::dataset::Manifest;
use gaitrisk_core::seed::sha256_hex;
use serde::Serialize;

use crate::config::{seed_table, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HashedFile {
    pub path: String,
    pub sha256: String,
}

/// `run_manifest.json`: resolved config, seeds and digests of every input and output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    pub inputs: Vec<HashedFile>,
    pub outputs: Vec<HashedFile>,
}

/// Output directory of one command invocation.
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

impl RunDir {
    pub fn create(command: &str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", cfg.out.display())))?;
        let manifest = RunManifest {
            tool: "gaitrisk",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seeds: seed_table(cfg),
            config: cfg.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        };
        Ok(Self { root: cfg.out.clone(), manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = hash_file(path)?;
        self.manifest.inputs.push(HashedFile { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Hashes a dataset manifest and every file it lists.
    pub fn add_dataset_inputs(&mut self, manifest_path: &Path) -> Result<()> {
        self.add_input(manifest_path)?;
        let text = fs::read_to_string(manifest_path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", manifest_path.display())))?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut files = vec![m.subjects_csv.clone()];
        for r in &m.records {
            files.push(r.angles_csv.clone());
            files.extend(r.events_csv.clone());
        }
        for f in files {
            self.add_input(&base.join(f))?;
        }
        Ok(())
    }

    pub fn note_seed(&mut self, name: impl Into<String>, seed: u64) {
        self.manifest.seeds.insert(name.into(), seed);
    }

    /// Writes `rel` under the run directory and records its digest.
    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::data(format!("cannot create {}: {e}", parent.display())))?;
        }
        let bytes = bytes.as_ref();
        fs::write(&path, bytes).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(HashedFile { path: rel.into(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Records files some other writer already put under the run directory.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let sha256 = hash_file(&self.root.join(rel))?;
        self.manifest.outputs.push(HashedFile { path: rel.into(), sha256 });
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("output serialises");
        text.push('\n');
        self.write(rel, text)
    }

    /// Writes `config.json` and `run_manifest.json`.
    pub fn finish(mut self) -> Result<()> {
        let config = self.manifest.config.clone();
        self.write_json("config.json", &config)?;
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        text.push('\n');
        let path = self.root.join("run_manifest.json");
        fs::write(&path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }
}
