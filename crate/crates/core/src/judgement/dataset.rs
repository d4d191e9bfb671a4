use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{read_jsonl, JudgementRecord, JudgementSource, Split};
use crate::error::{Error, Result};
use crate::level::{Level, N_LEVELS};

/// Records grouped by level and split. Immutable once loaded, so a single
/// pool can back many samplers through an `Arc`.
#[derive(Debug, Default)]
pub struct JudgementPool {
    groups: HashMap<(Level, Split), Vec<JudgementRecord>>,
}

impl JudgementPool {
    pub fn from_records(records: impl IntoIterator<Item = JudgementRecord>) -> Self {
        let mut groups: HashMap<(Level, Split), Vec<JudgementRecord>> = HashMap::new();
        for record in records {
            groups.entry((record.level, record.split)).or_default().push(record);
        }
        JudgementPool { groups }
    }

    pub fn records(&self, level: Level, split: Split) -> &[JudgementRecord] {
        self.groups.get(&(level, split)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self, level: Level, split: Split) -> usize {
        self.records(level, split).len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.values().all(Vec::is_empty)
    }

    /// Record counts per level for one split.
    pub fn sizes(&self, split: Split) -> [usize; N_LEVELS] {
        let mut out = [0; N_LEVELS];
        for level in Level::all() {
            out[level.index()] = self.len(level, split);
        }
        out
    }

    pub fn sampler(self: &Arc<Self>, split: Split, seed: u64, exhaustion: Exhaustion) -> PoolSampler {
        PoolSampler {
            pool: Arc::clone(self),
            split,
            exhaustion,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queues: Default::default(),
            epochs: [0; N_LEVELS],
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<JudgementPool> {
    let path = path.as_ref();
    let file = File::open(path)?;
    load_dataset_from_reader(BufReader::new(file), path)
}

pub fn load_dataset_from_reader<R: BufRead>(reader: R, origin: &Path) -> Result<JudgementPool> {
    Ok(JudgementPool::from_records(read_jsonl(reader, origin)?))
}

/// What a sampler does once every record of a level has been handed out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exhaustion {
    /// Start a new epoch with a fresh shuffle.
    Reshuffle,
    /// Report [`Error::SourceExhausted`].
    Fail,
}

/// Draws records of one split without replacement within an epoch.
#[derive(Debug)]
pub struct PoolSampler {
    pool: Arc<JudgementPool>,
    split: Split,
    exhaustion: Exhaustion,
    rng: ChaCha8Rng,
    queues: [Vec<usize>; N_LEVELS],
    epochs: [usize; N_LEVELS],
}

impl PoolSampler {
    /// Completed-or-started epochs for a level.
    pub fn epoch(&self, level: Level) -> usize {
        self.epochs[level.index()]
    }

    fn refill(&mut self, level: Level) -> bool {
        let n = self.pool.len(level, self.split);
        if n == 0 {
            return false;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        // popped from the back
        order.reverse();
        self.queues[level.index()] = order;
        self.epochs[level.index()] += 1;
        true
    }
}

impl JudgementSource for PoolSampler {
    fn draw(&mut self, level: Level) -> Result<JudgementRecord> {
        let idx = level.index();
        if self.queues[idx].is_empty() {
            let may_refill = self.epochs[idx] == 0 || self.exhaustion == Exhaustion::Reshuffle;
            if !may_refill || !self.refill(level) {
                return Err(Error::SourceExhausted(level));
            }
        }
        let pick = self.queues[idx].pop().expect("queue refilled above");
        Ok(self.pool.records(level, self.split)[pick].clone())
    }
}
