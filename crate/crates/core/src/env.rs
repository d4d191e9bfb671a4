//! The scenario environment: an episodic MDP over the five levels with a
//! masked 5-slot action space, per-level gather credits and two
//! termination modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgement::{JudgementRecord, JudgementSource};
use crate::level::{Level, GATHER_SLOT, MAX_CLASSES, N_LEVELS, N_SLOTS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSpec {
    pub correct: f64,
    pub wrong: f64,
    pub gather: f64,
    pub credits_per_level: u32,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            correct: 1.0,
            wrong: -5.0,
            gather: -1.0,
            credits_per_level: 5,
        }
    }
}

impl RewardSpec {
    pub fn reward(&self, event: Event) -> f64 {
        match event {
            Event::Correct => self.correct,
            Event::Wrong => self.wrong,
            Event::Gathered | Event::IllegalGather => self.gather,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeMode {
    /// The first wrong classification ends the scenario.
    #[default]
    TerminateOnWrong,
    /// Wrong classifications are penalized and the scenario moves on.
    ContinueThrough,
}

/// Handling of a gather request once the level's credits are spent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ZeroCreditGather {
    /// Penalize and end the scenario.
    #[default]
    Terminate,
    /// Penalize and keep the current record.
    Penalize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationConfig {
    /// Append `credits / credits_per_level` as a tenth feature.
    pub credit_feature: bool,
}

impl ObservationConfig {
    pub fn dim(&self) -> usize {
        MAX_CLASSES + N_LEVELS + usize::from(self.credit_feature)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub mode: EpisodeMode,
    pub rewards: RewardSpec,
    pub observation: ObservationConfig,
    pub zero_credit_gather: ZeroCreditGather,
}

impl EnvConfig {
    pub fn with_mode(mode: EpisodeMode) -> Self {
        EnvConfig {
            mode,
            ..Default::default()
        }
    }
}

/// Padded confidences, level one-hot and optionally the credit feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn confidences(&self) -> &[f64] {
        &self.0[..MAX_CLASSES]
    }

    pub fn level(&self) -> Option<Level> {
        let one_hot = &self.0[MAX_CLASSES..MAX_CLASSES + N_LEVELS];
        one_hot
            .iter()
            .position(|x| *x == 1.0)
            .and_then(|i| Level::from_index(i).ok())
    }
}

impl From<Observation> for Vec<f64> {
    fn from(obs: Observation) -> Self {
        obs.0
    }
}

pub fn encode_observation(
    record: &JudgementRecord,
    level: Level,
    credits: u32,
    credits_per_level: u32,
    cfg: &ObservationConfig,
) -> Result<Observation> {
    if record.level != level {
        return Err(Error::InvalidArgument(format!(
            "record {} belongs to level {}, not {level}",
            record.record_id, record.level
        )));
    }
    if record.confidences.len() > MAX_CLASSES {
        return Err(Error::ConfidenceLength {
            level,
            expected: level.n_classes(),
            got: record.confidences.len(),
        });
    }
    let mut v = Vec::with_capacity(cfg.dim());
    v.extend_from_slice(&record.confidences);
    v.resize(MAX_CLASSES, 0.0);
    v.extend((0..N_LEVELS).map(|i| if i == level.index() { 1.0 } else { 0.0 }));
    if cfg.credit_feature {
        let scale = credits_per_level.max(1) as f64;
        v.push(credits as f64 / scale);
    }
    Ok(Observation(v))
}

/// Which canonical slots may be chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(pub [bool; N_SLOTS]);

impl ActionMask {
    pub fn for_level(level: Level, credits: u32) -> Self {
        let mut mask = [false; N_SLOTS];
        mask[..level.n_classes()].fill(true);
        mask[GATHER_SLOT] = credits > 0;
        ActionMask(mask)
    }

    pub fn all() -> Self {
        ActionMask([true; N_SLOTS])
    }

    pub fn is_valid(&self, slot: usize) -> bool {
        self.0.get(slot).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|v| **v).count()
    }

    pub fn valid_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    Correct,
    Wrong,
    Gathered,
    /// Gather requested with no credits left.
    IllegalGather,
}

impl Event {
    pub fn is_gather(self) -> bool {
        matches!(self, Event::Gathered | Event::IllegalGather)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, Event::Correct | Event::Wrong)
    }
}

/// One decision in a scenario's event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub level: Level,
    pub slot: usize,
    pub event: Event,
    pub reward: f64,
    pub record_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub event: Event,
    /// `None` once the episode is over.
    pub next_observation: Option<Observation>,
    pub episode_done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub current_level: Level,
    pub credits: u32,
    pub current_record: JudgementRecord,
    pub accumulated_reward: f64,
    pub events: Vec<EventRecord>,
    pub done: bool,
    pub mode: EpisodeMode,
}

impl EnvState {
    /// Events grouped by level in visiting order.
    pub fn per_level_log(&self) -> Vec<(Level, Vec<&EventRecord>)> {
        let mut out: Vec<(Level, Vec<&EventRecord>)> = Vec::new();
        for e in &self.events {
            match out.last_mut() {
                Some((level, events)) if *level == e.level => events.push(e),
                _ => out.push((e.level, vec![e])),
            }
        }
        out
    }
}

/// A single-owner scenario environment drawing records from `S`.
#[derive(Debug)]
pub struct ScenarioEnv<S> {
    source: S,
    config: EnvConfig,
    state: Option<EnvState>,
}

impl<S: JudgementSource> ScenarioEnv<S> {
    pub fn new(source: S, config: EnvConfig) -> Self {
        ScenarioEnv {
            source,
            config,
            state: None,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    pub fn into_source(self) -> S {
        self.source
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn obs_dim(&self) -> usize {
        self.config.observation.dim()
    }

    /// Starts a new scenario at level 1 with full credits.
    pub fn reset(&mut self) -> Result<Observation> {
        let record = self.source.draw(Level::FIRST)?;
        record.validate()?;
        let credits = self.config.rewards.credits_per_level;
        let obs = self.encode(&record, Level::FIRST, credits)?;
        self.state = Some(EnvState {
            current_level: Level::FIRST,
            credits,
            current_record: record,
            accumulated_reward: 0.0,
            events: Vec::new(),
            done: false,
            mode: self.config.mode,
        });
        Ok(obs)
    }

    pub fn observation(&self) -> Result<Observation> {
        let state = self.live_state()?;
        self.encode(&state.current_record, state.current_level, state.credits)
    }

    pub fn valid_actions(&self) -> Result<ActionMask> {
        let state = self.live_state()?;
        Ok(ActionMask::for_level(state.current_level, state.credits))
    }

    pub fn step(&mut self, slot: usize) -> Result<StepOutcome> {
        if slot >= N_SLOTS {
            return Err(Error::SlotOutOfRange(slot));
        }
        let (level, credits, label) = {
            let state = self.live_state()?;
            (state.current_level, state.credits, state.current_record.label)
        };
        let rewards = &self.config.rewards;

        // New records are drawn before any state change so an exhausted
        // source leaves the environment untouched.
        let (event, next) = if slot == GATHER_SLOT {
            if credits > 0 {
                let record = self.source.draw(level)?;
                record.validate()?;
                (
                    Event::Gathered,
                    Transition::Stay {
                        record: Some(record),
                        credits: credits - 1,
                    },
                )
            } else {
                match self.config.zero_credit_gather {
                    ZeroCreditGather::Terminate => (Event::IllegalGather, Transition::End),
                    ZeroCreditGather::Penalize => (Event::IllegalGather, Transition::Stay { record: None, credits }),
                }
            }
        } else if slot < level.n_classes() {
            let event = if slot == label { Event::Correct } else { Event::Wrong };
            let advance = event == Event::Correct || self.config.mode == EpisodeMode::ContinueThrough;
            match (advance, level.next()) {
                (true, Some(next_level)) => {
                    let record = self.source.draw(next_level)?;
                    record.validate()?;
                    (
                        event,
                        Transition::Advance {
                            level: next_level,
                            record,
                        },
                    )
                }
                _ => (event, Transition::End),
            }
        } else {
            return Err(Error::InvalidAction { slot, level });
        };

        let reward = rewards.reward(event);
        let credits_per_level = rewards.credits_per_level;
        let state = self.state.as_mut().expect("checked live above");
        state.events.push(EventRecord {
            level,
            slot,
            event,
            reward,
            record_id: state.current_record.record_id.clone(),
        });
        state.accumulated_reward += reward;
        match next {
            Transition::Stay { record, credits } => {
                if let Some(record) = record {
                    state.current_record = record;
                }
                state.credits = credits;
            }
            Transition::Advance { level, record } => {
                state.current_level = level;
                state.current_record = record;
                state.credits = credits_per_level;
            }
            Transition::End => state.done = true,
        }

        let done = state.done;
        let next_observation = if done { None } else { Some(self.observation()?) };
        Ok(StepOutcome {
            reward,
            event,
            next_observation,
            episode_done: done,
        })
    }

    fn live_state(&self) -> Result<&EnvState> {
        match &self.state {
            None => Err(Error::NotStarted),
            Some(s) if s.done => Err(Error::EpisodeFinished),
            Some(s) => Ok(s),
        }
    }

    fn encode(&self, record: &JudgementRecord, level: Level, credits: u32) -> Result<Observation> {
        encode_observation(
            record,
            level,
            credits,
            self.config.rewards.credits_per_level,
            &self.config.observation,
        )
    }
}

enum Transition {
    Stay {
        record: Option<JudgementRecord>,
        credits: u32,
    },
    Advance {
        level: Level,
        record: JudgementRecord,
    },
    End,
}
