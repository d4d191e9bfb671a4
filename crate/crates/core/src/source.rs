//! Declarative record-source configuration shared by the CLI, tuner and
//! service.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::judgement::{
    calibrated_levels, load_dataset, ConfusionSpec, ConfusionSpecFile, Exhaustion, JudgementPool, JudgementSource,
    Split, SynthConfig, SyntheticSource,
};
use crate::level::Level;

/// Which confusion statistics drive a synthetic stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecChoice {
    /// The published per-level classifier performance.
    #[default]
    Calibrated,
    /// Every judgement correct.
    Identity,
    /// A confusion-spec JSON file.
    File(PathBuf),
}

impl SpecChoice {
    pub fn load(&self) -> Result<Vec<ConfusionSpec>> {
        match self {
            SpecChoice::Calibrated => Ok(calibrated_levels()),
            SpecChoice::Identity => Ok(Level::all().map(ConfusionSpec::identity_uniform).collect()),
            SpecChoice::File(path) => {
                let file = ConfusionSpecFile::load(path)?;
                file.validate()?;
                Ok(file.levels)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    Synthetic {
        #[serde(default)]
        specs: SpecChoice,
        #[serde(default)]
        synth: SynthConfig,
        #[serde(default)]
        split: Split,
    },
    Dataset {
        path: PathBuf,
        #[serde(default)]
        split: Split,
        /// Reshuffle and keep drawing once a level runs out.
        #[serde(default = "default_true")]
        reshuffle: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig::Synthetic {
            specs: SpecChoice::default(),
            synth: SynthConfig::default(),
            split: Split::default(),
        }
    }
}

impl SourceConfig {
    pub fn synthetic(specs: SpecChoice, seed: u64) -> Self {
        SourceConfig::Synthetic {
            specs,
            synth: SynthConfig {
                seed,
                ..Default::default()
            },
            split: Split::default(),
        }
    }

    /// Loads specs or the dataset once so many streams can be opened cheaply.
    pub fn factory(&self) -> Result<SourceFactory> {
        match self {
            SourceConfig::Synthetic { specs, synth, split } => {
                let proto = SyntheticSource::new(specs.load()?, synth.clone())?.with_split(*split);
                Ok(SourceFactory::Synthetic {
                    specs: proto.specs().to_vec(),
                    synth: synth.clone(),
                    split: *split,
                })
            }
            SourceConfig::Dataset { path, split, reshuffle } => Ok(SourceFactory::Dataset {
                pool: Arc::new(load_dataset(path)?),
                split: *split,
                exhaustion: if *reshuffle {
                    Exhaustion::Reshuffle
                } else {
                    Exhaustion::Fail
                },
            }),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        if let SourceConfig::Synthetic { synth, .. } = &mut out {
            synth.seed = seed;
        }
        out
    }
}

/// Opens independent record streams from a loaded [`SourceConfig`].
#[derive(Clone, Debug)]
pub enum SourceFactory {
    Synthetic {
        specs: Vec<ConfusionSpec>,
        synth: SynthConfig,
        split: Split,
    },
    Dataset {
        pool: Arc<JudgementPool>,
        split: Split,
        exhaustion: Exhaustion,
    },
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SourceFactory {
    /// Stream `stream`; equal arguments give identical record sequences.
    pub fn open(&self, stream: u64) -> Box<dyn JudgementSource + Send> {
        match self {
            SourceFactory::Synthetic { specs, synth, split } => {
                let cfg = SynthConfig {
                    seed: stream_seed(synth.seed, stream),
                    ..synth.clone()
                };
                let source = SyntheticSource::new(specs.clone(), cfg).expect("specs validated when loaded");
                Box::new(source.with_split(*split))
            }
            SourceFactory::Dataset {
                pool,
                split,
                exhaustion,
            } => Box::new(pool.sampler(*split, stream_seed(0, stream), *exhaustion)),
        }
    }
}
