use std::path::{Path, PathBuf};

use reagent::data::{CorruptionConfig, ShapeKind};
use reagent::icp::IcpConfig;
use reagent::learn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kinds: Vec<ShapeKind>,
    pub train_shapes: usize,
    pub test_shapes: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kinds: ShapeKind::ALL.to_vec(),
            train_shapes: 48,
            test_shapes: 16,
        }
    }
}

/// Everything a run needs. Missing keys take their defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_every: usize,
    /// Evaluate on the test split every this many epochs; 0 disables.
    pub eval_every: usize,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub corruption: CorruptionConfig,
    pub icp: IcpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_dir: None,
            out_dir: None,
            checkpoint: None,
            checkpoint_every: 10,
            eval_every: 0,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            corruption: CorruptionConfig::default(),
            icp: IcpConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate()?;
        self.corruption.validate()?;
        self.icp.validate()?;
        if self.dataset.kinds.is_empty() {
            return Err(CliError::Config("dataset.kinds is empty".into()));
        }
        Ok(())
    }
}
