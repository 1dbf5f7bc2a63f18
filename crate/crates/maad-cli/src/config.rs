use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use maad::agent::TrainConfig;
use maad::envs::EnvSpec;
use maad::error::{Error, Result};

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    /// Expert dataset path (JSON lines); anchors are read from the
    /// `.meta.json` sibling.
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

/// Environment input: either a named default or a fully specified
/// environment section.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum EnvInput {
    Full(EnvSpec),
    Named { name: String },
}

#[derive(Debug, Clone, Deserialize)]
struct RunConfigInput {
    run: RunSection,
    env: EnvInput,
    train: TrainConfig,
}

/// Fully resolved run configuration; serializable back to TOML bit-for-bit
/// reproducibly.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvSpec,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let input: RunConfigInput = toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        let env = match input.env {
            EnvInput::Full(spec) => spec,
            EnvInput::Named { name } => EnvSpec::by_name(&name)?,
        };
        let mut cfg = RunConfig {
            run: input.run,
            env,
            train: input.train,
        };
        if cfg.run.seeds.is_empty() {
            return Err(Error::contract("seeds list must be non-empty"));
        }
        cfg.train.resolve(&cfg.env)?;
        Ok(cfg)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::numeric(format!("config serialization: {e}")))
    }

    /// Hex digest identifying the resolved configuration.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml()?.as_bytes());
        let digest = hasher.finalize();
        Ok(hex_prefix(&digest, 16))
    }

    pub fn meta_path(&self) -> PathBuf {
        meta_path_for(&self.run.dataset)
    }
}

pub fn meta_path_for(dataset: &Path) -> PathBuf {
    let mut p = dataset.to_path_buf();
    p.set_extension("meta.json");
    p
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes
        .iter()
        .take(n / 2)
        .map(|b| format!("{b:02x}"))
        .collect()
}
