use serde::{Deserialize, Serialize};

use super::nn::MlpCache;
use super::optim::{clip_grad_norm, Adam};
use super::policy::{ActorCritic, MaskedCategorical};
use crate::env::ActionMask;
use crate::error::{Error, Result};
use crate::level::N_SLOTS;

/// Loss weights and clipping used by one update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            ent_coef: 0.02,
            vf_coef: 0.5,
            max_grad_norm: 1.0,
            normalize_advantage: false,
        }
    }
}

/// One rollout flattened across environments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if [
            self.obs.len(),
            self.masks.len(),
            self.returns.len(),
            self.advantages.len(),
        ]
        .iter()
        .any(|l| *l != n)
        {
            return Err(Error::InvalidArgument("batch fields differ in length".into()));
        }
        for (a, m) in self.actions.iter().zip(&self.masks) {
            if !m.is_valid(*a) {
                return Err(Error::InvalidArgument(format!("batch action {a} is masked out")));
            }
        }
        Ok(())
    }

    fn advantages(&self, normalize: bool) -> Vec<f64> {
        if !normalize || self.len() < 2 {
            return self.advantages.clone();
        }
        let n = self.len() as f64;
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-8;
        self.advantages.iter().map(|a| (a - mean) / std).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Loss `policy + vf * value - ent * entropy` and its gradient with respect
/// to every parameter, before clipping.
pub fn loss_and_grad(model: &ActorCritic, batch: &Batch, cfg: &LossConfig) -> Result<(LossBreakdown, Vec<f64>)> {
    batch.check()?;
    let advantages = batch.advantages(cfg.normalize_advantage);
    let b = batch.len() as f64;
    let mut grads = vec![0.0; model.n_params()];
    let mut out = LossBreakdown::default();
    let mut actor_cache = MlpCache::default();
    let mut critic_cache = MlpCache::default();

    #[allow(clippy::needless_range_loop)]
    for i in 0..batch.len() {
        let obs = &batch.obs[i];
        model.check_obs(obs)?;
        let mask = &batch.masks[i];
        let action = batch.actions[i];
        let adv = advantages[i];

        model.actor().forward(model.params(), obs, &mut actor_cache);
        let dist = MaskedCategorical::new(actor_cache.output(), mask)?;
        let h = dist.entropy();
        out.policy_loss -= adv * dist.log_prob(action) / b;
        out.entropy += h / b;

        let mut d_logits = [0.0; N_SLOTS];
        for k in mask.valid_slots() {
            let p = dist.probs()[k];
            let indicator = if k == action { 1.0 } else { 0.0 };
            let d_policy = -adv * (indicator - p);
            // p * (log p + H) vanishes as p -> 0
            let d_entropy = if p > 0.0 {
                cfg.ent_coef * p * (dist.log_prob(k) + h)
            } else {
                0.0
            };
            d_logits[k] = (d_policy + d_entropy) / b;
        }
        model
            .actor()
            .backward(model.params(), &actor_cache, &d_logits, &mut grads);

        model.critic().forward(model.params(), obs, &mut critic_cache);
        let err = batch.returns[i] - critic_cache.output()[0];
        out.value_loss += err * err / b;
        let d_value = [-2.0 * cfg.vf_coef * err / b];
        model
            .critic()
            .backward(model.params(), &critic_cache, &d_value, &mut grads);
    }

    out.total = out.policy_loss + cfg.vf_coef * out.value_loss - cfg.ent_coef * out.entropy;
    if !out.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    out.grad_norm = super::optim::global_norm(&grads);
    Ok((out, grads))
}

/// The scalar loss alone, for gradient checks.
pub fn loss(model: &ActorCritic, batch: &Batch, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_and_grad(model, batch, cfg)?.0.total)
}

/// One clipped Adam step on `batch`. Parameters are left untouched if the
/// loss or gradient is not finite.
pub fn a2c_update(model: &mut ActorCritic, opt: &mut Adam, batch: &Batch, cfg: &LossConfig) -> Result<LossBreakdown> {
    let (mut out, mut grads) = loss_and_grad(model, batch, cfg)?;
    clip_grad_norm(&mut grads, cfg.max_grad_norm);
    out.clipped = out.grad_norm > cfg.max_grad_norm;
    opt.step(model.params_mut(), &grads);
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(out)
}
