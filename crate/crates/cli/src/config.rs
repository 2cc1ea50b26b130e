use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcsrif_core::filters::{EstimatorKind, FallbackPolicy};
use pcsrif_core::linalg::Precision;
use pcsrif_core::sim::{gen_scenario, read_dataset, write_dataset, Dataset, ScenarioSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FORMAT: &str = "pcsrif-run-manifest/1";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Preset name, scenario `.toml` file or binary scenario cache.
    pub scenario: String,
    pub estimator: EstimatorKind,
    pub precision: Precision,
    /// Empty keeps the scenario's own seed.
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub fallback: FallbackPolicy,
    /// Conditioning is recorded every `svd_stride` updates; 0 disables it.
    pub svd_stride: usize,
    pub count_flops: bool,
    pub verify_identity: bool,
    pub shadow_check: Option<bool>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<String>, estimator: EstimatorKind, precision: Precision, output: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            estimator,
            precision,
            seeds: Vec::new(),
            output: output.into(),
            fallback: FallbackPolicy::Abort,
            svd_stride: 10,
            count_flops: true,
            verify_identity: false,
            shadow_check: None,
        }
    }
}

/// Where scenario data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSource {
    Spec(ScenarioSpec),
    Cached(Box<Dataset>),
}

impl ScenarioSource {
    pub fn resolve(name: &str) -> Result<Self, CliError> {
        if let Some(spec) = ScenarioSpec::preset(name) {
            return Ok(Self::Spec(spec));
        }
        let path = Path::new(name);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "scenario `{name}` is neither a preset ({}) nor an existing file",
                ScenarioSpec::PRESETS.join(", ")
            )));
        }
        if path.extension().is_some_and(|e| e == "toml") {
            return Ok(Self::Spec(ScenarioSpec::load(path)?));
        }
        let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        Ok(Self::Cached(Box::new(read_dataset(std::io::BufReader::new(file))?)))
    }

    pub fn spec(&self) -> &ScenarioSpec {
        match self {
            Self::Spec(s) => s,
            Self::Cached(d) => &d.spec,
        }
    }

    /// Dataset for `seed`; a cache is regenerated from its spec only when
    /// the seed differs from the cached one.
    pub fn dataset(&self, seed: Option<u64>) -> Result<Dataset, CliError> {
        let mut spec = self.spec().clone();
        if let Self::Cached(d) = self {
            if seed.is_none_or(|s| s == d.spec.seed) {
                return Ok((**d).clone());
            }
        }
        if let Some(s) = seed {
            spec.seed = s;
        }
        spec.validate()?;
        Ok(gen_scenario(&spec))
    }
}

pub fn dataset_bytes(data: &Dataset) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, data).expect("writing to memory");
    bytes
}

/// Git-style object hash: SHA-256 over `blob <len>\0` followed by the bytes.
pub fn git_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn file_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub scenario: String,
    pub estimator: String,
    pub precision: Precision,
    pub fallback: String,
    pub svd_stride: usize,
    pub count_flops: bool,
    pub verify_identity: bool,
    pub shadow_check: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub frame: usize,
    pub message: String,
}

/// Everything needed to redo a run: the config, the seed and the full
/// scenario spec, plus hashes to check the redo against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    pub config: ManifestConfig,
    pub seed: u64,
    pub scenario_spec: String,
    pub scenario_hash: String,
    pub status: String,
    pub failure: Option<Failure>,
    pub frames: usize,
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::formats::read_text(path)?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::Format(format!("unsupported manifest format `{}`", m.format)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Rebuilds the run config, writing to `output`.
    pub fn run_config(&self, output: impl Into<PathBuf>) -> Result<RunConfig, CliError> {
        let c = &self.config;
        Ok(RunConfig {
            scenario: c.scenario.clone(),
            estimator: c.estimator.parse().map_err(CliError::Format)?,
            precision: c.precision,
            seeds: vec![self.seed],
            output: output.into(),
            fallback: c.fallback.parse().map_err(CliError::Format)?,
            svd_stride: c.svd_stride,
            count_flops: c.count_flops,
            verify_identity: c.verify_identity,
            shadow_check: c.shadow_check,
        })
    }
}
