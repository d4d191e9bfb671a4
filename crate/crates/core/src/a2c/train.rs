use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::optim::Adam;
use super::policy::ActorCritic;
use super::returns::compute_returns;
use super::update::{a2c_update, Batch, LossBreakdown, LossConfig};
use crate::env::{ActionMask, EnvConfig, Observation, ScenarioEnv};
use crate::error::{Error, Result};
use crate::judgement::JudgementSource;
use crate::metrics::{aggregate_intervals, scenario_metrics, IntervalRow, MetricKind, MetricSummary, ScenarioMetrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub n_steps: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub learning_rate: f64,
    pub adam_eps: f64,
    pub gae_lambda: f64,
    pub normalize_advantage: bool,
    pub total_steps: u64,
    /// Bucket width of the training metric log, in environment steps.
    pub log_interval: u64,
    /// Greedy evaluation cadence in environment steps; 0 disables it.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub n_envs: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub env: EnvConfig,
    pub early_stop: Option<EarlyStop>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.995,
            n_steps: 128,
            ent_coef: 0.02,
            vf_coef: 0.5,
            max_grad_norm: 1.0,
            learning_rate: 5e-4,
            adam_eps: 1e-7,
            gae_lambda: 1.0,
            normalize_advantage: false,
            total_steps: 2_000_000,
            log_interval: 1000,
            eval_interval: 0,
            eval_episodes: 50,
            n_envs: 1,
            hidden: super::policy::DEFAULT_HIDDEN.to_vec(),
            seed: 0,
            env: EnvConfig::default(),
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            ent_coef: self.ent_coef,
            vf_coef: self.vf_coef,
            max_grad_norm: self.max_grad_norm,
            normalize_advantage: self.normalize_advantage,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("invalid training config: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.n_steps == 0 || self.n_envs == 0 {
            return bad("n_steps and n_envs must be positive");
        }
        // negated so NaN is rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return bad("learning_rate and adam_eps must be positive");
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if self.ent_coef < 0.0 || self.vf_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        if let Some(es) = &self.early_stop {
            if es.window == 0 {
                return bad("early_stop.window must be positive");
            }
        }
        Ok(())
    }
}

/// Stop once the rolling means over the last `window` training scenarios
/// reach both thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub min_correct: f64,
    pub min_tree_score: f64,
    pub window: usize,
}

impl EarlyStop {
    fn reached(&self, episodes: &[(u64, ScenarioMetrics)]) -> bool {
        if episodes.len() < self.window {
            return false;
        }
        let recent = &episodes[episodes.len() - self.window..];
        let mean = |kind| recent.iter().map(|(_, m)| m.get(kind)).sum::<f64>() / self.window as f64;
        mean(MetricKind::Correct) >= self.min_correct && mean(MetricKind::TreeScore) >= self.min_tree_score
    }
}

/// Greedy evaluation at one point of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub summary: MetricSummary,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ActorCritic,
    pub steps: u64,
    pub updates: u64,
    /// Completed training scenarios tagged with the step they ended on.
    pub episodes: Vec<(u64, ScenarioMetrics)>,
    pub evals: Vec<EvalPoint>,
    pub last_loss: LossBreakdown,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn train_log(&self, interval: u64) -> Vec<IntervalRow> {
        aggregate_intervals(&self.episodes, interval)
    }

    pub fn eval_log(&self) -> Vec<IntervalRow> {
        let mut rows = Vec::new();
        for point in &self.evals {
            for stat in &point.summary.stats {
                rows.push(IntervalRow {
                    step: point.step,
                    metric: stat.metric.name().to_string(),
                    mean: stat.mean,
                    std: stat.std,
                });
            }
        }
        rows
    }
}

struct Worker<S> {
    env: ScenarioEnv<S>,
    obs: Observation,
    mask: ActionMask,
}

struct Rollout {
    obs: Vec<Vec<f64>>,
    masks: Vec<ActionMask>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
}

impl Rollout {
    fn new(capacity: usize) -> Self {
        Rollout {
            obs: Vec::with_capacity(capacity),
            masks: Vec::with_capacity(capacity),
            actions: Vec::with_capacity(capacity),
            rewards: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity),
            dones: Vec::with_capacity(capacity),
        }
    }
}

/// Synchronous A2C over one environment per source in `sources`.
/// `eval_source`, when given, feeds periodic greedy evaluations.
pub fn train<S, E>(cfg: &TrainConfig, sources: Vec<S>, eval_source: Option<E>) -> Result<TrainOutcome>
where
    S: JudgementSource,
    E: JudgementSource,
{
    cfg.validate()?;
    if sources.len() != cfg.n_envs {
        return Err(Error::InvalidArgument(format!(
            "expected {} record sources, got {}",
            cfg.n_envs,
            sources.len()
        )));
    }
    let obs_dim = cfg.env.observation.dim();
    let mut model = ActorCritic::new(obs_dim, &cfg.hidden, cfg.seed);
    let mut opt = Adam::new(model.n_params(), cfg.learning_rate, cfg.adam_eps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a2c0);
    let loss_cfg = cfg.loss_config();

    let mut workers = Vec::with_capacity(cfg.n_envs);
    for source in sources {
        let mut env = ScenarioEnv::new(source, cfg.env.clone());
        let obs = env.reset()?;
        let mask = env.valid_actions()?;
        workers.push(Worker { env, obs, mask });
    }
    let mut eval_env = eval_source.map(|s| ScenarioEnv::new(s, cfg.env.clone()));

    let mut outcome = TrainOutcome {
        model: model.clone(),
        steps: 0,
        updates: 0,
        episodes: Vec::new(),
        evals: Vec::new(),
        last_loss: LossBreakdown::default(),
        stopped_early: false,
    };
    let mut next_eval = cfg.eval_interval;

    while outcome.steps < cfg.total_steps {
        let remaining = cfg.total_steps - outcome.steps;
        let horizon = (cfg.n_steps as u64).min(remaining.div_ceil(cfg.n_envs as u64)) as usize;
        let mut rollouts: Vec<Rollout> = (0..cfg.n_envs).map(|_| Rollout::new(horizon)).collect();

        for _ in 0..horizon {
            for (w, ro) in workers.iter_mut().zip(rollouts.iter_mut()) {
                let (dist, value) = model.forward(w.obs.as_slice(), &w.mask)?;
                let action = dist.sample(&mut rng);
                let step = w.env.step(action)?;
                outcome.steps += 1;
                ro.obs.push(w.obs.as_slice().to_vec());
                ro.masks.push(w.mask);
                ro.actions.push(action);
                ro.rewards.push(step.reward);
                ro.values.push(value);
                ro.dones.push(step.episode_done);
                match step.next_observation {
                    Some(obs) => w.obs = obs,
                    None => {
                        let events = &w.env.state().expect("episode ran").events;
                        let metrics = scenario_metrics(events, &cfg.env.rewards)?;
                        outcome.episodes.push((outcome.steps, metrics));
                        w.obs = w.env.reset()?;
                    }
                }
                w.mask = w.env.valid_actions()?;
            }
        }

        let mut batch = Batch::default();
        for (w, ro) in workers.iter().zip(rollouts) {
            let bootstrap = model.value(w.obs.as_slice())?;
            let (returns, advantages) =
                compute_returns(&ro.rewards, &ro.values, &ro.dones, bootstrap, cfg.gamma, cfg.gae_lambda)?;
            batch.obs.extend(ro.obs);
            batch.masks.extend(ro.masks);
            batch.actions.extend(ro.actions);
            batch.returns.extend(returns);
            batch.advantages.extend(advantages);
        }
        outcome.last_loss = a2c_update(&mut model, &mut opt, &batch, &loss_cfg)?;
        outcome.updates += 1;

        if cfg.eval_interval > 0 && outcome.steps >= next_eval {
            if let Some(env) = eval_env.as_mut() {
                let run = evaluate(&model, env, cfg.eval_episodes)?;
                let summary = run.summary();
                log::info!(
                    "step {}: eval tree_score {:.3} correct {:.3}",
                    outcome.steps,
                    summary.mean(MetricKind::TreeScore),
                    summary.mean(MetricKind::Correct)
                );
                outcome.evals.push(EvalPoint {
                    step: outcome.steps,
                    summary,
                });
            }
            while next_eval <= outcome.steps {
                next_eval += cfg.eval_interval;
            }
        }

        if let Some(es) = &cfg.early_stop {
            if es.reached(&outcome.episodes) {
                log::info!("early stop at step {}", outcome.steps);
                outcome.stopped_early = true;
                break;
            }
        }
    }

    outcome.model = model;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judgement::{ConfusionSpec, SynthConfig, SyntheticSource};
    use crate::level::Level;

    fn identity_source(seed: u64) -> SyntheticSource {
        let specs = Level::all().map(ConfusionSpec::identity_uniform).collect();
        SyntheticSource::new(
            specs,
            SynthConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn step_budget_is_exact_and_deterministic() {
        let cfg = TrainConfig {
            total_steps: 1000,
            n_envs: 3,
            hidden: vec![16, 16],
            ..Default::default()
        };
        let run = |seed: u64| {
            let sources = (0..3u64).map(|i| identity_source(seed + i)).collect();
            train(&cfg, sources, None::<SyntheticSource>).unwrap()
        };
        let a = run(1);
        let b = run(1);
        assert!(a.steps >= 1000 && a.steps < 1000 + 3);
        assert_eq!(a.model, b.model);
        assert_eq!(a.episodes, b.episodes);
        assert!(a.episodes.windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn evals_happen_on_schedule() {
        let cfg = TrainConfig {
            total_steps: 2000,
            eval_interval: 500,
            eval_episodes: 5,
            hidden: vec![8],
            ..Default::default()
        };
        let out = train(&cfg, vec![identity_source(0)], Some(identity_source(9))).unwrap();
        assert_eq!(out.evals.len(), 4);
        assert_eq!(out.eval_log().len(), 16);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            n_steps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg = TrainConfig::default();
        assert!(train(&cfg, Vec::<SyntheticSource>::new(), None::<SyntheticSource>).is_err());
    }

    #[test]
    fn json_defaults_fill_missing_fields() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"gamma": 0.9, "seed": 4}"#).unwrap();
        assert_eq!(cfg.gamma, 0.9);
        assert_eq!(cfg.n_steps, 128);
        assert_eq!(cfg.seed, 4);
    }
}
