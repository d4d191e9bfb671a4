use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::ActorCritic;
use crate::agents::{run_scenarios, DecisionMaker, EpisodeRun};
use crate::env::{ActionMask, Observation, ScenarioEnv};
use crate::error::{Error, Result};
use crate::judgement::JudgementSource;

/// Picks the most probable valid slot.
#[derive(Clone, Copy, Debug)]
pub struct GreedyAgent<'a> {
    pub model: &'a ActorCritic,
}

impl DecisionMaker for GreedyAgent<'_> {
    fn decide(&mut self, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        Ok(self.model.forward(obs.as_slice(), mask)?.0.greedy())
    }
}

/// Samples from the masked policy.
#[derive(Clone, Debug)]
pub struct SamplingAgent<'a> {
    pub model: &'a ActorCritic,
    pub rng: ChaCha8Rng,
}

impl<'a> SamplingAgent<'a> {
    pub fn new(model: &'a ActorCritic, seed: u64) -> Self {
        SamplingAgent {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl DecisionMaker for SamplingAgent<'_> {
    fn decide(&mut self, obs: &Observation, mask: &ActionMask) -> Result<usize> {
        Ok(self.model.forward(obs.as_slice(), mask)?.0.sample(&mut self.rng))
    }
}

/// Greedy rollouts of `model` over `n_scenarios` scenarios.
pub fn evaluate<S: JudgementSource>(
    model: &ActorCritic,
    env: &mut ScenarioEnv<S>,
    n_scenarios: usize,
) -> Result<EpisodeRun> {
    if env.obs_dim() != model.obs_dim() {
        return Err(Error::ObservationShape {
            expected: model.obs_dim(),
            got: env.obs_dim(),
        });
    }
    run_scenarios(env, &mut GreedyAgent { model }, n_scenarios)
}
