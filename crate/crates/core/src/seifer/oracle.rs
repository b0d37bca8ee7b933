//! Structure oracles: anything that turns a designed sequence into a
//! predicted structure with per-residue confidence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::structio::{read_structure, StructError, StructureModel};

/// Environment variable naming a directory of cached predictions.
pub const CACHE_ENV: &str = "INFILL_BENCH_CACHE";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no prediction for sequence hash {0}")]
    Missing(String),
    #[error("prediction command failed: {0}")]
    Command(String),
    #[error("bad oracle configuration: {0}")]
    Config(String),
    #[error("mock oracle has no answer for protein {0}")]
    Mock(String),
    #[error(transparent)]
    Structure(#[from] StructError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Oracle output: a full structure (assigned downstream) or, for mocks,
/// ready-made labels.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Structure(StructureModel),
    Labels { ss3: String, plddt: Vec<f64> },
}

pub trait StructureOracle: Send + Sync {
    fn predict(&self, protein_id: &str, sequence: &str) -> Result<Prediction, OracleError>;

    /// Whether `predict` may run on several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

/// Lowercase hex SHA-256 of the residue string.
pub fn sequence_key(sequence: &str) -> String {
    hex::encode(Sha256::digest(sequence.as_bytes()))
}

const EXTENSIONS: [&str; 4] = ["pdb", "cif", "mmcif", "json"];

fn load_prediction(path: &Path) -> Result<StructureModel, OracleError> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(StructureModel::from_json(&std::fs::read_to_string(path)?)?);
    }
    Ok(read_structure(path)?)
}

fn find_keyed(dir: &Path, key: &str) -> Option<PathBuf> {
    EXTENSIONS.iter().map(|e| dir.join(format!("{key}.{e}"))).find(|p| p.is_file())
}

/// Precomputed predictions stored as `<sha256>.{pdb,cif,mmcif,json}`.
#[derive(Debug, Clone)]
pub struct DirectoryOracle {
    pub dir: PathBuf,
}

impl DirectoryOracle {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl StructureOracle for DirectoryOracle {
    fn predict(&self, _protein_id: &str, sequence: &str) -> Result<Prediction, OracleError> {
        let key = sequence_key(sequence);
        let path = find_keyed(&self.dir, &key).ok_or(OracleError::Missing(key))?;
        Ok(Prediction::Structure(load_prediction(&path)?))
    }
}

/// Runs an external predictor. The template is split on whitespace and each
/// word has `{sequence}`, `{fasta}`, `{out}` and `{key}` substituted; the
/// command must write a PDB file to `{out}`.
#[derive(Debug, Clone)]
pub struct CommandOracle {
    pub template: String,
    pub work_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub concurrent: bool,
}

impl CommandOracle {
    pub fn new(template: impl Into<String>, work_dir: impl Into<PathBuf>) -> Self {
        Self { template: template.into(), work_dir: work_dir.into(), cache_dir: None, concurrent: false }
    }
}

impl StructureOracle for CommandOracle {
    fn predict(&self, protein_id: &str, sequence: &str) -> Result<Prediction, OracleError> {
        let key = sequence_key(sequence);
        if let Some(hit) = self.cache_dir.as_deref().and_then(|d| find_keyed(d, &key)) {
            return Ok(Prediction::Structure(load_prediction(&hit)?));
        }
        std::fs::create_dir_all(&self.work_dir)?;
        let fasta = self.work_dir.join(format!("{key}.fasta"));
        let out = self.work_dir.join(format!("{key}.pdb"));
        std::fs::write(&fasta, format!(">{protein_id}\n{sequence}\n"))?;
        let words: Vec<String> = self
            .template
            .split_whitespace()
            .map(|w| {
                w.replace("{sequence}", sequence)
                    .replace("{fasta}", &fasta.to_string_lossy())
                    .replace("{out}", &out.to_string_lossy())
                    .replace("{key}", &key)
            })
            .collect();
        let (program, args) = words.split_first().ok_or_else(|| OracleError::Config("empty command template".into()))?;
        let status = Command::new(program).args(args).status()?;
        if !status.success() {
            return Err(OracleError::Command(format!("{program} exited with {status}")));
        }
        if !out.is_file() {
            return Err(OracleError::Command(format!("{program} did not write {}", out.display())));
        }
        if let Some(cache) = &self.cache_dir {
            std::fs::create_dir_all(cache)?;
            std::fs::copy(&out, cache.join(format!("{key}.pdb")))?;
        }
        Ok(Prediction::Structure(load_prediction(&out)?))
    }

    fn concurrent(&self) -> bool {
        self.concurrent
    }
}

type MockFn = dyn Fn(&str, &str) -> Result<Prediction, OracleError> + Send + Sync;

/// Test oracle answering from a closure over `(protein_id, sequence)`.
#[derive(Clone)]
pub struct MockOracle {
    answer: Arc<MockFn>,
}

impl MockOracle {
    pub fn new(f: impl Fn(&str, &str) -> Result<Prediction, OracleError> + Send + Sync + 'static) -> Self {
        Self { answer: Arc::new(f) }
    }

    /// Every prediction reproduces the protein's original SS3 with a
    /// constant confidence.
    pub fn identity(ss3: HashMap<String, String>, plddt: f64) -> Self {
        Self::new(move |id, seq| {
            let ss3 = ss3.get(id).ok_or_else(|| OracleError::Mock(id.to_string()))?.clone();
            Ok(Prediction::Labels { ss3, plddt: vec![plddt; seq.len()] })
        })
    }

    /// Fixed answer for every sequence.
    pub fn constant(ss3: impl Into<String>, plddt: f64) -> Self {
        let ss3 = ss3.into();
        Self::new(move |_, seq| Ok(Prediction::Labels { ss3: ss3.clone(), plddt: vec![plddt; seq.len()] }))
    }
}

impl std::fmt::Debug for MockOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MockOracle")
    }
}

impl StructureOracle for MockOracle {
    fn predict(&self, protein_id: &str, sequence: &str) -> Result<Prediction, OracleError> {
        (self.answer)(protein_id, sequence)
    }
}

/// Serialized oracle selection, as read from a JSON or TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OracleConfig {
    Directory {
        dir: PathBuf,
    },
    Command {
        template: String,
        #[serde(default = "default_work_dir")]
        work_dir: PathBuf,
        #[serde(default)]
        cache_dir: Option<PathBuf>,
        #[serde(default)]
        concurrent: bool,
    },
    /// Labels every designed sequence with the protein's own SS3.
    MockIdentity {
        #[serde(default = "default_mock_plddt")]
        plddt: f64,
    },
}

fn default_work_dir() -> PathBuf {
    std::env::temp_dir().join("infill-oracle")
}

fn default_mock_plddt() -> f64 {
    90.0
}

impl OracleConfig {
    /// Build the oracle. `ss3` supplies original labels for the identity
    /// mock; the cache directory defaults to `$INFILL_BENCH_CACHE`.
    pub fn build(&self, ss3: &HashMap<String, String>) -> Box<dyn StructureOracle> {
        match self {
            OracleConfig::Directory { dir } => Box::new(DirectoryOracle::new(dir.clone())),
            OracleConfig::Command { template, work_dir, cache_dir, concurrent } => Box::new(CommandOracle {
                template: template.clone(),
                work_dir: work_dir.clone(),
                cache_dir: cache_dir.clone().or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)),
                concurrent: *concurrent,
            }),
            OracleConfig::MockIdentity { plddt } => Box::new(MockOracle::identity(ss3.clone(), *plddt)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_lowercase_sha256() {
        assert_eq!(sequence_key(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(sequence_key("ACD").len(), 64);
    }

    #[test]
    fn directory_lookup_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let model = crate::structio::parse_pdb(include_str!("../../tests/fixtures/structures/altloc.pdb")).unwrap();
        let seq = model.chains[0].sequence();
        std::fs::write(dir.path().join(format!("{}.json", sequence_key(&seq))), model.to_json().unwrap()).unwrap();
        let oracle = DirectoryOracle::new(dir.path());
        assert_eq!(oracle.predict("p", &seq).unwrap(), Prediction::Structure(model));
        assert!(matches!(oracle.predict("p", "AAAA"), Err(OracleError::Missing(_))));
    }

    #[test]
    fn config_round_trip() {
        let cfg: OracleConfig = serde_json::from_str(r#"{"type":"directory","dir":"preds"}"#).unwrap();
        assert_eq!(cfg, OracleConfig::Directory { dir: "preds".into() });
        let cfg: OracleConfig = serde_json::from_str(r#"{"type":"command","template":"fold {fasta} {out}"}"#).unwrap();
        assert!(matches!(cfg, OracleConfig::Command { concurrent: false, .. }));
    }

    #[cfg(unix)]
    #[test]
    fn command_oracle_runs_template() {
        let dir = tempfile::tempdir().unwrap();
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/structures/altloc.pdb");
        let mut oracle = CommandOracle::new(format!("cp {} {{out}}", src.display()), dir.path().join("work"));
        oracle.cache_dir = Some(dir.path().join("cache"));
        let p = oracle.predict("p", "SG").unwrap();
        assert!(matches!(p, Prediction::Structure(ref m) if m.residue_count() == 2));
        assert!(dir.path().join("cache").join(format!("{}.pdb", sequence_key("SG"))).is_file());
        let failing = CommandOracle::new("false", dir.path().join("work"));
        assert!(matches!(failing.predict("p", "SG"), Err(OracleError::Command(_))));
        assert!(!oracle.concurrent());
    }
}
