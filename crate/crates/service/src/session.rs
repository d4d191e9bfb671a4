//! Session lifecycle and scoring, independent of HTTP.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use dmlab_core::env::{EnvConfig, EpisodeMode, Event, RewardSpec, ScenarioEnv};
use dmlab_core::judgement::{Exhaustion, JudgementPool, PoolSampler, Split};
use dmlab_core::metrics::{scenario_metrics, MetricKind, MetricSummary, ScenarioMetrics};
use dmlab_core::source::stream_seed;
use dmlab_core::Level;

use crate::model::*;
use crate::report::{build_report, comparison_groups, Participant};
use crate::store::{replay, write_snapshot, EventLog, LogEntry, SessionRecord, StoreError};

pub const MIN_SCORED_SCENARIOS: usize = 2;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Base seed for per-session record order.
    pub seed: u64,
    pub rewards: RewardSpec,
    pub min_scored: usize,
    /// Holds `events.jsonl` and `snapshot.json`; `None` keeps everything in
    /// memory.
    pub data_dir: Option<PathBuf>,
    /// Decision-maker scenarios shown as the "RL Agent" report row.
    pub rl_baseline: Option<Vec<ScenarioMetrics>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            seed: 0,
            rewards: RewardSpec::default(),
            min_scored: MIN_SCORED_SCENARIOS,
            data_dir: None,
            rl_baseline: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} is finished")]
    Finished(String),
    #[error("{0}")]
    InvalidRole(String),
    #[error("action {action} is not available at level {level}: {reason}")]
    InvalidAction {
        action: usize,
        level: Level,
        reason: String,
    },
    #[error("complete at least {required} scenarios before finishing; {remaining} remaining")]
    NotEnoughScenarios { required: usize, remaining: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Core(#[from] dmlab_core::Error),
    #[error("event log does not match the record pool: {0}")]
    ReplayMismatch(String),
}

pub type ServiceResult<T> = Result<T, ServiceError>;

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A participant's live state. Scenario 0 is the unscored tutorial.
struct LiveSession {
    id: String,
    role: Role,
    seq: usize,
    env: ScenarioEnv<PoolSampler>,
    scenario_index: usize,
    scored: Vec<ScenarioMetrics>,
    finished: bool,
    training_completed: bool,
}

impl LiveSession {
    fn is_training(&self) -> bool {
        self.scenario_index == 0
    }

    fn ensure_open(&self) -> ServiceResult<()> {
        if self.finished {
            return Err(ServiceError::Finished(self.id.clone()));
        }
        Ok(())
    }

    fn next_item(&self) -> ServiceResult<NextItemResponse> {
        self.ensure_open()?;
        let state = self.env.state().expect("sessions start with a scenario");
        let level = state.current_level;
        let spec = level.spec();
        let mask = self.env.valid_actions()?;
        let record = &state.current_record;
        let payload = record.payload.clone().unwrap_or_default();
        let options = (0..spec.action_space_size())
            .map(|action| {
                let slot = spec.slot_for_env_action(action).expect("id within action space");
                OptionLabel {
                    action,
                    label: spec.slot_label(slot).unwrap_or_default().to_string(),
                    is_gather: slot == dmlab_core::GATHER_SLOT,
                    available: mask.is_valid(slot),
                }
            })
            .collect();
        Ok(NextItemResponse {
            schema_version: SCHEMA_VERSION,
            session_id: self.id.clone(),
            scenario_index: self.scenario_index,
            is_training: self.is_training(),
            level: level.id(),
            level_name: spec.name.to_string(),
            record_id: record.record_id.clone(),
            payload: DisplayPayload {
                text: if spec.shows_text { payload.text } else { None },
                image_url: payload.image_uri.map(|uri| media_url(&uri)),
            },
            options,
            credits_remaining: state.credits,
            tree_score: state.accumulated_reward,
            scored_scenarios_completed: self.scored.len(),
        })
    }

    /// Applies one canonical slot and returns the response plus the log
    /// entries it produced.
    fn apply(&mut self, slot: usize, rewards: &RewardSpec) -> ServiceResult<(ActionResponse, Vec<LogEntry>)> {
        self.ensure_open()?;
        let state = self.env.state().expect("sessions start with a scenario");
        let level = state.current_level;
        let spec = level.spec();
        let action = spec.env_action_id(slot).unwrap_or(slot);
        if !self.env.valid_actions()?.is_valid(slot) {
            let reason = if slot == dmlab_core::GATHER_SLOT {
                "no credits left at this level".to_string()
            } else {
                format!("level {level} has {} classes", spec.n_classes())
            };
            return Err(ServiceError::InvalidAction { action, level, reason });
        }
        let label = state.current_record.label;
        let record_id = state.current_record.record_id.clone();
        let is_training = self.is_training();

        let outcome = self.env.step(slot)?;
        let state = self.env.state().expect("stepped");
        let tree_score = state.accumulated_reward;
        let chosen_label = spec.slot_label(slot).unwrap_or_default().to_string();
        let feedback = match outcome.event {
            Event::Correct => Feedback {
                message: format!("Correct: +{}", rewards.correct),
                chosen_label,
                correct_label: Some(spec.class_labels[label].to_string()),
            },
            Event::Wrong => Feedback {
                message: format!("Wrong: {}", rewards.wrong),
                chosen_label,
                correct_label: Some(spec.class_labels[label].to_string()),
            },
            Event::Gathered | Event::IllegalGather => Feedback {
                message: format!("Additional data requested: {}", rewards.gather),
                chosen_label,
                correct_label: None,
            },
        };
        let mut entries = vec![LogEntry::Action {
            session_id: self.id.clone(),
            scenario_index: self.scenario_index,
            is_training,
            level,
            slot,
            event: outcome.event,
            reward: outcome.reward,
            record_id,
        }];

        let mut scenario = None;
        if outcome.episode_done {
            let metrics = scenario_metrics(&state.events, rewards)?;
            entries.push(LogEntry::ScenarioCompleted {
                session_id: self.id.clone(),
                scenario_index: self.scenario_index,
                is_training,
            });
            if is_training {
                self.training_completed = true;
            } else {
                self.scored.push(metrics.clone());
            }
            scenario = Some(metrics);
            self.scenario_index += 1;
            self.env.reset()?;
        }
        let response = ActionResponse {
            schema_version: SCHEMA_VERSION,
            event: outcome.event,
            reward: outcome.reward,
            tree_score,
            feedback,
            scenario_completed: outcome.episode_done,
            scenario_metrics: scenario,
        };
        Ok((response, entries))
    }

    fn summary(&self, baseline: Option<&[ScenarioMetrics]>) -> SessionSummary {
        let totals = MetricSummary::from_scenarios(&self.scored);
        let total_tree_score = self.scored.iter().map(|s| s.tree_score).sum();
        let mut insights = vec![
            format!(
                "Mean tree score {:.2} over {} scenarios (best possible 5).",
                totals.mean(MetricKind::TreeScore),
                self.scored.len()
            ),
            format!(
                "{:.0}% of levels answered correctly, {:.0}% wrongly.",
                100.0 * totals.mean(MetricKind::Correct),
                100.0 * totals.mean(MetricKind::Wrong)
            ),
            format!(
                "Additional data requested at {:.0}% of levels.",
                100.0 * totals.mean(MetricKind::Gather)
            ),
        ];
        if let Some(base) = baseline.filter(|b| !b.is_empty()) {
            let rl = MetricSummary::from_scenarios(base).mean(MetricKind::TreeScore);
            insights.push(format!(
                "The RL decision maker averages a tree score of {rl:.2} on the same kind of scenarios."
            ));
        }
        SessionSummary {
            schema_version: SCHEMA_VERSION,
            session_id: self.id.clone(),
            role: self.role,
            scenarios: self.scored.clone(),
            total_tree_score,
            totals,
            insights,
        }
    }
}

/// Public image path for a payload URI.
fn media_url(uri: &str) -> String {
    if uri.starts_with("http://") || uri.starts_with("https://") || uri.starts_with('/') {
        uri.to_string()
    } else {
        format!("/media/{uri}")
    }
}

/// All sessions plus the event log. Each session has its own lock; the
/// log has a single writer lock taken after a session lock.
pub struct Service {
    pool: Arc<JudgementPool>,
    config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    log: Mutex<EventLog>,
}

impl Service {
    /// Opens the service, replaying any existing event log in `data_dir`.
    pub fn open(pool: Arc<JudgementPool>, config: ServiceConfig) -> ServiceResult<Self> {
        let log = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(StoreError::from)?;
                EventLog::open(dir.join("events.jsonl"))?
            }
            None => EventLog::in_memory(),
        };
        for level in Level::all() {
            if pool.len(level, Split::Val) == 0 {
                return Err(dmlab_core::Error::SourceExhausted(level).into());
            }
        }
        let existing = log.entries().to_vec();
        let service = Service {
            pool,
            config,
            sessions: RwLock::new(HashMap::new()),
            log: Mutex::new(log),
        };
        service.restore(&existing)?;
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn env_config(&self) -> EnvConfig {
        EnvConfig {
            mode: EpisodeMode::ContinueThrough,
            rewards: self.config.rewards.clone(),
            ..Default::default()
        }
    }

    fn new_session(&self, id: String, role: Role, seq: usize, seed: u64) -> ServiceResult<LiveSession> {
        let sampler = self.pool.sampler(Split::Val, seed, Exhaustion::Reshuffle);
        let mut env = ScenarioEnv::new(sampler, self.env_config());
        env.reset()?;
        Ok(LiveSession {
            id,
            role,
            seq,
            env,
            scenario_index: 0,
            scored: Vec::new(),
            finished: false,
            training_completed: false,
        })
    }

    fn restore(&self, entries: &[LogEntry]) -> ServiceResult<()> {
        let mut sessions = self.sessions.write().expect("session map lock");
        for entry in entries {
            match entry {
                LogEntry::SessionCreated {
                    session_id,
                    role,
                    created_at: _,
                    sampler_seed,
                } => {
                    let live = self.new_session(session_id.clone(), *role, sessions.len(), *sampler_seed)?;
                    sessions.insert(session_id.clone(), Arc::new(Mutex::new(live)));
                }
                LogEntry::Action { session_id, slot, .. } => {
                    let session = sessions
                        .get(session_id)
                        .ok_or_else(|| ServiceError::ReplayMismatch(format!("unknown session {session_id}")))?;
                    let mut s = session.lock().expect("session lock");
                    let (_, produced) = s.apply(*slot, &self.config.rewards)?;
                    if produced[0] != *entry {
                        return Err(ServiceError::ReplayMismatch(format!(
                            "session {session_id} diverged at {:?}",
                            entry
                        )));
                    }
                }
                LogEntry::ScenarioCompleted { .. } => {}
                LogEntry::SessionFinished { session_id, .. } => {
                    let session = sessions
                        .get(session_id)
                        .ok_or_else(|| ServiceError::ReplayMismatch(format!("unknown session {session_id}")))?;
                    session.lock().expect("session lock").finished = true;
                }
            }
        }
        Ok(())
    }

    fn session(&self, id: &str) -> ServiceResult<Arc<Mutex<LiveSession>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn append(&self, entries: Vec<LogEntry>) -> ServiceResult<()> {
        let mut log = self.log.lock().expect("log lock");
        for e in entries {
            log.append(e)?;
        }
        Ok(())
    }

    pub fn create_session(&self, role: &str) -> ServiceResult<CreateSessionResponse> {
        let role: Role = role.parse().map_err(ServiceError::InvalidRole)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = now();
        let mut sessions = self.sessions.write().expect("session map lock");
        let seq = sessions.len();
        let sampler_seed = stream_seed(self.config.seed, seq as u64);
        let live = self.new_session(id.clone(), role, seq, sampler_seed)?;
        self.append(vec![LogEntry::SessionCreated {
            session_id: id.clone(),
            role,
            created_at,
            sampler_seed,
        }])?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(live)));
        Ok(CreateSessionResponse {
            schema_version: SCHEMA_VERSION,
            session_id: id,
            role,
            tutorial_pending: true,
        })
    }

    pub fn next_item(&self, id: &str) -> ServiceResult<NextItemResponse> {
        let session = self.session(id)?;
        let s = session.lock().expect("session lock");
        s.next_item()
    }

    /// `action` is the level's own action id (gather = number of classes).
    pub fn submit_action(&self, id: &str, action: usize) -> ServiceResult<ActionResponse> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session lock");
        s.ensure_open()?;
        let level = s.env.state().expect("sessions start with a scenario").current_level;
        let slot = level
            .spec()
            .slot_for_env_action(action)
            .ok_or_else(|| ServiceError::InvalidAction {
                action,
                level,
                reason: format!("valid ids are 0..={}", level.n_classes()),
            })?;
        let (response, entries) = s.apply(slot, &self.config.rewards)?;
        self.append(entries)?;
        Ok(response)
    }

    pub fn finish_session(&self, id: &str) -> ServiceResult<SessionSummary> {
        let session = self.session(id)?;
        let mut s = session.lock().expect("session lock");
        s.ensure_open()?;
        if s.scored.len() < self.config.min_scored {
            return Err(ServiceError::NotEnoughScenarios {
                required: self.config.min_scored,
                remaining: self.config.min_scored - s.scored.len(),
            });
        }
        self.append(vec![LogEntry::SessionFinished {
            session_id: s.id.clone(),
            finished_at: now(),
        }])?;
        s.finished = true;
        let summary = s.summary(self.config.rl_baseline.as_deref());
        drop(s);
        self.write_snapshot()?;
        Ok(summary)
    }

    /// Session records rebuilt from the event log.
    pub fn records(&self) -> ServiceResult<Vec<SessionRecord>> {
        let log = self.log.lock().expect("log lock");
        Ok(replay(log.entries())?)
    }

    fn write_snapshot(&self) -> ServiceResult<()> {
        if let Some(dir) = &self.config.data_dir {
            write_snapshot(dir.join("snapshot.json"), &self.records()?)?;
        }
        Ok(())
    }

    /// Role aggregates, the participant with most scenarios per role, the
    /// collective row and the RL baseline. Only finished sessions count.
    pub fn comparison_report(&self, role: Option<Role>) -> ServiceResult<ComparisonReport> {
        let mut finished: Vec<(usize, Participant)> = Vec::new();
        for session in self.sessions.read().expect("session map lock").values() {
            let s = session.lock().expect("session lock");
            if s.finished {
                finished.push((
                    s.seq,
                    Participant {
                        role: s.role,
                        scenarios: s.scored.clone(),
                    },
                ));
            }
        }
        finished.sort_by_key(|f| f.0);
        let participants: Vec<Participant> = finished.into_iter().map(|f| f.1).collect();
        let mut groups = comparison_groups(&participants, role);
        if let (false, Some(base)) = (groups.is_empty(), &self.config.rl_baseline) {
            groups.push(("RL Agent".into(), base.clone()));
        }
        Ok(build_report(&groups))
    }
}
