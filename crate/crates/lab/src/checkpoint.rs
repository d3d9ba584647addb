//! JSON checkpoints carrying the architecture next to the parameters.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cellfree::nn::{NetParams, NetworkSpec};
use cellfree::sysmodel::SystemConfig;
use cellfree::train::TrainConfig;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "cellfree-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Epochs completed when the checkpoint was taken.
    pub epoch: usize,
    pub system: SystemConfig,
    pub train: TrainConfig,
    pub spec: NetworkSpec,
    pub params: NetParams,
}

impl Checkpoint {
    pub fn new(epoch: usize, system: &SystemConfig, train: &TrainConfig, spec: &NetworkSpec, params: &NetParams) -> Self {
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            epoch,
            system: system.clone(),
            train: train.clone(),
            spec: spec.clone(),
            params: params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).with_context(|| format!("writing checkpoint {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ck.format != FORMAT {
            bail!("{} is not a cellfree checkpoint", path.display());
        }
        if ck.version != VERSION {
            bail!("unsupported checkpoint version {}", ck.version);
        }
        if !ck.params.matches(&ck.spec, ck.system.num_antennas) {
            bail!("checkpoint parameters do not fit the stored architecture");
        }
        Ok(ck)
    }
}
