//! Decision makers that do not learn, and the episode harness shared by
//! every agent.

use serde::{Deserialize, Serialize};

use crate::env::{ActionMask, EnvConfig, EpisodeMode, EventRecord, Observation, RewardSpec, ScenarioEnv};
use crate::error::{Error, Result};
use crate::judgement::{argmax, JudgementSource};
use crate::level::{Level, GATHER_SLOT, MAX_CLASSES};
use crate::metrics::{scenario_metrics, MetricSummary, ScenarioMetrics};

/// Picks one canonical slot per step.
pub trait DecisionMaker {
    fn decide(&mut self, obs: &Observation, mask: &ActionMask) -> Result<usize>;
}

impl<D: DecisionMaker + ?Sized> DecisionMaker for &mut D {
    fn decide(&mut self, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        (**self).decide(obs, mask)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

/// Always answers with the classifier's most confident class and never
/// gathers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkPolicy {
    pub tie_break: TieBreak,
}

impl BenchmarkPolicy {
    pub fn act(&self, confidences: &[f64]) -> Result<usize> {
        if confidences.is_empty() {
            return Err(Error::InvalidArgument("empty confidence vector".into()));
        }
        match self.tie_break {
            TieBreak::LowestIndex => Ok(argmax(confidences)),
        }
    }

    /// Argmax over the class slots of the observation's level.
    pub fn act_observation(&self, obs: &Observation) -> Result<usize> {
        let n = obs.level().map_or(MAX_CLASSES, Level::n_classes);
        self.act(&obs.confidences()[..n])
    }
}

impl DecisionMaker for BenchmarkPolicy {
    fn decide(&mut self, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        let slot = self.act_observation(obs)?;
        debug_assert_ne!(slot, GATHER_SLOT);
        if !mask.is_valid(slot) {
            return Err(Error::InvalidAction {
                slot,
                level: obs.level().unwrap_or(Level::FIRST),
            });
        }
        Ok(slot)
    }
}

/// What the agent saw and did at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub level: Level,
    pub max_confidence: f64,
    pub slot: usize,
}

/// Runs one scenario to completion.
pub fn run_episode<S, D>(
    env: &mut ScenarioEnv<S>,
    agent: &mut D,
    traces: &mut Vec<DecisionTrace>,
) -> Result<Vec<EventRecord>>
where
    S: JudgementSource,
    D: DecisionMaker + ?Sized,
{
    let obs = env.reset()?;
    play_episode(env, agent, obs, traces)
}

/// Plays a freshly reset scenario starting from `obs`.
fn play_episode<S, D>(
    env: &mut ScenarioEnv<S>,
    agent: &mut D,
    mut obs: Observation,
    traces: &mut Vec<DecisionTrace>,
) -> Result<Vec<EventRecord>>
where
    S: JudgementSource,
    D: DecisionMaker + ?Sized,
{
    loop {
        let mask = env.valid_actions()?;
        let slot = agent.decide(&obs, &mask)?;
        let state = env.state().expect("episode started");
        traces.push(DecisionTrace {
            level: state.current_level,
            max_confidence: state.current_record.max_confidence(),
            slot,
        });
        let outcome = env.step(slot)?;
        match outcome.next_observation {
            Some(next) => obs = next,
            None => break,
        }
    }
    Ok(env.state().expect("episode ran").events.clone())
}

/// Results of a batch of scenarios.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub scenarios: Vec<ScenarioMetrics>,
    pub traces: Vec<DecisionTrace>,
    /// Scenarios abandoned because the source ran dry mid-way.
    pub discarded: usize,
}

impl EpisodeRun {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary::from_scenarios(&self.scenarios)
    }

    /// Share of decisions that were gathers among steps whose record's max
    /// confidence falls in `[lo, hi)`. `None` when no step qualifies.
    pub fn gather_frequency(&self, lo: f64, hi: f64) -> Option<f64> {
        let in_band: Vec<&DecisionTrace> = self
            .traces
            .iter()
            .filter(|t| t.max_confidence >= lo && t.max_confidence < hi)
            .collect();
        if in_band.is_empty() {
            return None;
        }
        let gathers = in_band.iter().filter(|t| t.slot == GATHER_SLOT).count();
        Some(gathers as f64 / in_band.len() as f64)
    }
}

/// Plays `n_scenarios` scenarios. A scenario cut short by an exhausted
/// source is dropped with a warning; running dry at reset ends the run.
pub fn run_scenarios<S, D>(env: &mut ScenarioEnv<S>, agent: &mut D, n_scenarios: usize) -> Result<EpisodeRun>
where
    S: JudgementSource,
    D: DecisionMaker + ?Sized,
{
    let rewards = env.config().rewards.clone();
    let mut run = EpisodeRun::default();
    for i in 0..n_scenarios {
        let obs = match env.reset() {
            Ok(obs) => obs,
            Err(Error::SourceExhausted(_)) => {
                log::warn!(
                    "source exhausted at scenario {i}; stopping after {} scenarios",
                    run.scenarios.len()
                );
                break;
            }
            Err(e) => return Err(e),
        };
        let mut traces = Vec::new();
        match play_episode(env, agent, obs, &mut traces) {
            Ok(events) => {
                run.scenarios.push(scenario_metrics(&events, &rewards)?);
                run.traces.extend(traces);
            }
            Err(Error::SourceExhausted(level)) => {
                log::warn!("source exhausted at level {level} during scenario {i}; scenario discarded");
                run.discarded += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

/// The benchmark agent over `n_scenarios` scenarios.
pub fn run_benchmark<S: JudgementSource>(
    source: S,
    mode: EpisodeMode,
    rewards: RewardSpec,
    n_scenarios: usize,
) -> Result<EpisodeRun> {
    let config = EnvConfig {
        mode,
        rewards,
        ..Default::default()
    };
    let mut env = ScenarioEnv::new(source, config);
    run_scenarios(&mut env, &mut BenchmarkPolicy::default(), n_scenarios)
}
