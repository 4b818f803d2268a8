use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Started,
    Finished,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub unix_time: f64,
    /// Seconds since the matching `started` record.
    pub wall_clock_s: Option<f64>,
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub users: usize,
    pub items: usize,
    pub train_entries: usize,
    pub test_entries: usize,
    pub train_fingerprint: String,
    pub test_fingerprint: String,
    pub split_seed: u64,
    pub similarity_threshold: u8,
}

/// Append-only record of one output directory: the config it belongs to,
/// the data it was built from and every stage run against it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub software: String,
    /// Threads used inside matrix products (always 1).
    pub kernel_threads: usize,
    pub config: toml::Table,
    pub data: Option<DataFingerprint>,
    pub stages: Vec<StageRecord>,
}

/// Stable id of a config: hash of its TOML form with the output directory
/// blanked, so the same experiment written elsewhere keeps its id.
pub fn run_id(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.out = PathBuf::new();
    let digest = Sha256::digest(c.to_toml().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        let table = toml::from_str(&config.to_toml()).expect("config round-trips through TOML");
        RunManifest {
            run_id: run_id(config),
            software: format!("hashrec {}", env!("CARGO_PKG_VERSION")),
            kernel_threads: 1,
            config: table,
            data: None,
            stages: Vec::new(),
        }
    }

    pub fn path(out: &Path) -> PathBuf {
        out.join(MANIFEST_FILE)
    }

    /// Opens the manifest in `out`, creating it if absent. A manifest from a
    /// different config is refused so artifacts never mix.
    pub fn open(out: &Path, config: &ExperimentConfig) -> Result<Self> {
        let path = RunManifest::path(out);
        if !path.exists() {
            return Ok(RunManifest::new(config));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let existing: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        let id = run_id(config);
        if existing.run_id != id {
            return Err(Error::Config(format!(
                "{} belongs to run {}, this config is run {id}; choose another --out",
                out.display(),
                existing.run_id
            )));
        }
        Ok(existing)
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = RunManifest::path(out);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn start(&mut self, stage: &str, jobs: usize) -> f64 {
        let t = now();
        self.stages.push(StageRecord {
            stage: stage.into(),
            status: StageStatus::Started,
            unix_time: t,
            wall_clock_s: None,
            jobs,
            outputs: Vec::new(),
            error: None,
        });
        t
    }

    pub fn finish(
        &mut self,
        stage: &str,
        jobs: usize,
        started: f64,
        outcome: std::result::Result<Vec<String>, String>,
    ) {
        let t = now();
        let (status, outputs, error) = match outcome {
            Ok(o) => (StageStatus::Finished, o, None),
            Err(e) => (StageStatus::Failed, Vec::new(), Some(e)),
        };
        self.stages.push(StageRecord {
            stage: stage.into(),
            status,
            unix_time: t,
            wall_clock_s: Some(t - started),
            jobs,
            outputs,
            error,
        });
    }

    /// Latest status of `stage`, if it ever ran.
    pub fn last_status(&self, stage: &str) -> Option<StageStatus> {
        self.stages
            .iter()
            .rev()
            .find(|s| s.stage == stage)
            .map(|s| s.status)
    }

    /// Comment line written at the top of every CSV output.
    pub fn reference(&self) -> String {
        format!("run {} ({MANIFEST_FILE})", self.run_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_toml("[dataset]\npath = \"r.dat\"\n").unwrap()
    }

    #[test]
    fn run_id_ignores_output_directory_only() {
        let a = config();
        let mut b = a.clone();
        b.out = PathBuf::from("/elsewhere");
        assert_eq!(run_id(&a), run_id(&b));
        b.seed = 1;
        assert_ne!(run_id(&a), run_id(&b));
    }

    #[test]
    fn stages_are_appended_and_reloaded() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config();
        let mut m = RunManifest::open(dir.path(), &cfg).unwrap();
        let t = m.start("prepare", 1);
        m.save(dir.path()).unwrap();
        m.finish("prepare", 1, t, Ok(vec!["data/split.tsv".into()]));
        m.save(dir.path()).unwrap();
        let back = RunManifest::open(dir.path(), &cfg).unwrap();
        assert_eq!(back.stages.len(), 2);
        assert_eq!(back.last_status("prepare"), Some(StageStatus::Finished));
        assert_eq!(back.last_status("train"), None);
        assert!(back.stages[1].wall_clock_s.unwrap() >= 0.0);
    }

    #[test]
    fn foreign_manifest_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config();
        RunManifest::new(&cfg).save(dir.path()).unwrap();
        let mut other = cfg.clone();
        other.seed = 99;
        assert!(matches!(
            RunManifest::open(dir.path(), &other),
            Err(Error::Config(_))
        ));
    }
}
