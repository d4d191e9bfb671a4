use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::ActorCritic;
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained weights plus everything needed to rebuild the network and the
/// environment it was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub steps: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config: &TrainConfig, model: &ActorCritic, steps: u64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            obs_dim: model.obs_dim(),
            hidden: model.hidden().to_vec(),
            steps,
            params: model.params().to_vec(),
        }
    }

    pub fn model(&self) -> Result<ActorCritic> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if self.obs_dim != self.config.env.observation.dim() {
            return Err(Error::Checkpoint(format!(
                "observation size {} does not match the stored environment ({})",
                self.obs_dim,
                self.config.env.observation.dim()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        ActorCritic::from_params(self.obs_dim, &self.hidden, self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
