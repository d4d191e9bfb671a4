//! Random search over a hyperparameter grid with several seeds per
//! combination, scored on held-out scenarios.

use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::a2c::{evaluate, train, TrainConfig};
use crate::env::ScenarioEnv;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::source::{stream_seed, SourceFactory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    pub ent_coefs: Vec<f64>,
    pub learning_rates: Vec<f64>,
    /// Combinations drawn without replacement from the full grid.
    pub n_combos: usize,
    pub combo_seed: u64,
    pub seeds_per_combo: u64,
    pub steps_per_trial: u64,
    pub holdout_episodes: usize,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    /// Everything not searched over.
    pub base: TrainConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            gammas: vec![0.95, 0.99, 0.995, 0.999],
            ent_coefs: vec![0.0, 0.01, 0.02, 0.05],
            learning_rates: vec![1e-3, 5e-4, 1e-4],
            n_combos: 20,
            combo_seed: 0,
            seeds_per_combo: 5,
            steps_per_trial: 200_000,
            holdout_episodes: 500,
            parallelism: 0,
            base: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub combo_id: usize,
    pub gamma: f64,
    pub ent_coef: f64,
    pub learning_rate: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.ent_coefs.is_empty() || self.learning_rates.is_empty() {
            return Err(Error::InvalidArgument(
                "every grid axis needs at least one value".into(),
            ));
        }
        if self.n_combos == 0 || self.seeds_per_combo == 0 {
            return Err(Error::InvalidArgument(
                "n_combos and seeds_per_combo must be positive".into(),
            ));
        }
        if self.holdout_episodes == 0 {
            return Err(Error::InvalidArgument("holdout_episodes must be positive".into()));
        }
        Ok(())
    }

    /// The full grid in gamma-major order.
    pub fn full_grid(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &g in &self.gammas {
            for &e in &self.ent_coefs {
                for &lr in &self.learning_rates {
                    out.push((g, e, lr));
                }
            }
        }
        out
    }

    /// `n_combos` grid points drawn by `combo_seed`, kept in grid order.
    /// Asking for at least the whole grid returns all of it.
    pub fn combos(&self) -> Vec<Combo> {
        let grid = self.full_grid();
        let mut picked: Vec<usize> = if self.n_combos >= grid.len() {
            (0..grid.len()).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.combo_seed);
            sample(&mut rng, grid.len(), self.n_combos).into_vec()
        };
        picked.sort_unstable();
        picked
            .into_iter()
            .enumerate()
            .map(|(combo_id, i)| Combo {
                combo_id,
                gamma: grid[i].0,
                ent_coef: grid[i].1,
                learning_rate: grid[i].2,
            })
            .collect()
    }

    pub fn trial_config(&self, combo: &Combo, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: combo.gamma,
            ent_coef: combo.ent_coef,
            learning_rate: combo.learning_rate,
            total_steps: self.steps_per_trial,
            seed,
            eval_interval: 0,
            early_stop: None,
            ..self.base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One line of the trial table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub combo_id: usize,
    pub gamma: f64,
    pub ent_coef: f64,
    pub lr: f64,
    pub seed: u64,
    /// Mean held-out tree score; empty when the trial failed.
    pub mean_reward: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComboResult {
    pub combo: Combo,
    pub mean_reward: f64,
    pub n_ok: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunerReport {
    pub trials: Vec<TrialRecord>,
    pub combos: Vec<ComboResult>,
    pub best: Option<ComboResult>,
}

/// Trains one trial on stream `(seed, 1)` and scores it greedily on the
/// disjoint stream `(seed, 2)`.
pub fn score_trial(spec: &GridSpec, factory: &SourceFactory, combo: &Combo, seed: u64) -> Result<f64> {
    let cfg = spec.trial_config(combo, seed);
    let sources = (0..cfg.n_envs as u64)
        .map(|i| factory.open(stream_seed(seed, 1 + 2 * i)))
        .collect();
    let outcome = train(&cfg, sources, None::<Box<dyn crate::judgement::JudgementSource + Send>>)?;
    let mut env = ScenarioEnv::new(factory.open(stream_seed(seed, 2)), cfg.env.clone());
    let run = evaluate(&outcome.model, &mut env, spec.holdout_episodes)?;
    if run.scenarios.is_empty() {
        return Err(Error::InvalidArgument("holdout produced no scenarios".into()));
    }
    Ok(run.summary().mean(MetricKind::TreeScore))
}

pub fn run_grid(spec: &GridSpec, factory: &SourceFactory) -> Result<TunerReport> {
    run_grid_with(spec, |combo, seed| score_trial(spec, factory, combo, seed))
}

/// Runs every (combo, seed) trial through `trial`. Errors and panics mark
/// the trial failed without stopping the others.
pub fn run_grid_with<F>(spec: &GridSpec, trial: F) -> Result<TunerReport>
where
    F: Fn(&Combo, u64) -> Result<f64> + Sync,
{
    spec.validate()?;
    let combos = spec.combos();
    let jobs: Vec<(Combo, u64)> = combos
        .iter()
        .flat_map(|c| (0..spec.seeds_per_combo).map(move |s| (*c, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|(combo, seed)| {
                let result = catch_unwind(AssertUnwindSafe(|| trial(combo, *seed)));
                let mean_reward = match result {
                    Ok(Ok(r)) if r.is_finite() => Some(r),
                    Ok(Ok(r)) => {
                        log::warn!("trial combo {} seed {seed}: non-finite score {r}", combo.combo_id);
                        None
                    }
                    Ok(Err(e)) => {
                        log::warn!("trial combo {} seed {seed} failed: {e}", combo.combo_id);
                        None
                    }
                    Err(_) => {
                        log::warn!("trial combo {} seed {seed} panicked", combo.combo_id);
                        None
                    }
                };
                TrialRecord {
                    combo_id: combo.combo_id,
                    gamma: combo.gamma,
                    ent_coef: combo.ent_coef,
                    lr: combo.learning_rate,
                    seed: *seed,
                    status: if mean_reward.is_some() {
                        TrialStatus::Ok
                    } else {
                        TrialStatus::Failed
                    },
                    mean_reward,
                }
            })
            .collect()
    });
    let combo_results = summarize(&combos, &trials);
    let best = select_best(&combo_results).cloned();
    Ok(TunerReport {
        trials,
        combos: combo_results,
        best,
    })
}

/// Mean reward per combo over its successful trials; combos with none are
/// left out.
pub fn summarize(combos: &[Combo], trials: &[TrialRecord]) -> Vec<ComboResult> {
    combos
        .iter()
        .filter_map(|c| {
            let ok: Vec<f64> = trials
                .iter()
                .filter(|t| t.combo_id == c.combo_id)
                .filter_map(|t| t.mean_reward)
                .collect();
            (!ok.is_empty()).then(|| ComboResult {
                combo: *c,
                mean_reward: ok.iter().sum::<f64>() / ok.len() as f64,
                n_ok: ok.len(),
            })
        })
        .collect()
}

/// Highest mean reward; ties go to the lower learning rate, then the lower
/// entropy coefficient.
pub fn select_best(results: &[ComboResult]) -> Option<&ComboResult> {
    results.iter().reduce(|best, r| {
        let better = r.mean_reward > best.mean_reward
            || (r.mean_reward == best.mean_reward
                && (r.combo.learning_rate < best.combo.learning_rate
                    || (r.combo.learning_rate == best.combo.learning_rate && r.combo.ent_coef < best.combo.ent_coef)));
        if better {
            r
        } else {
            best
        }
    })
}

pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in trials {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
