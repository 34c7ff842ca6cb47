use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use pruned_ntk::{AlphaSweepSpec, InputPairSource, WidthSweepSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{sha256_hex, write_file};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkRun {
    pub depth: usize,
    pub width: usize,
    pub alpha: f64,
    pub rescale: bool,
    pub samples: usize,
    pub seed: u64,
    pub inputs: InputPairSource,
    pub limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressRun {
    pub train: PathBuf,
    pub test: PathBuf,
    pub depth: usize,
    pub jitter: f64,
    pub kernel_scale: f64,
}

/// Everything needed to regenerate an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Ntk(NtkRun),
    SweepWidth(WidthSweepSpec),
    SweepAlpha(AlphaSweepSpec),
    Regress(RegressRun),
}

impl RunConfig {
    pub fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Ntk(r) => Some(r.seed),
            RunConfig::SweepWidth(s) => Some(s.seed),
            RunConfig::SweepAlpha(s) => Some(s.seed),
            RunConfig::Regress(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Digests of the files this run read (regression data).
    #[serde(default)]
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn sidecar_path(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        write_file(path, &json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let m = RunManifest {
            tool: "pruned-ntk".into(),
            version: "0.1.0".into(),
            config: RunConfig::SweepWidth(WidthSweepSpec::default()),
            seed: Some(0),
            started_at: Utc::now(),
            finished_at: Utc::now(),
            inputs: vec![],
            outputs: vec![FileDigest::of(Path::new("a.csv"), b"x")],
        };
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<RunManifest>(&json).unwrap(), m);
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            RunManifest::sidecar_path(Path::new("out/w.csv")),
            PathBuf::from("out/w.csv.manifest.json")
        );
    }
}
