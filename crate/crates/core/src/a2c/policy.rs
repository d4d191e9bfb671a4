use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{Mlp, MlpCache};
use crate::env::ActionMask;
use crate::error::{Error, Result};
use crate::level::N_SLOTS;

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

/// Separate actor and critic towers sharing one flat parameter vector
/// (actor first).
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    actor: Mlp,
    critic: Mlp,
    params: Vec<f64>,
}

impl ActorCritic {
    /// Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the policy
    /// head and 1.0 on the value head.
    pub fn new(obs_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut model = ActorCritic::zeroed(obs_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = std::f64::consts::SQRT_2;
        model.actor.init(&mut model.params, gain, 0.01, &mut rng);
        model.critic.init(&mut model.params, gain, 1.0, &mut rng);
        model
    }

    pub fn zeroed(obs_dim: usize, hidden: &[usize]) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::new(sizes(N_SLOTS), 0);
        let critic = Mlp::new(sizes(1), actor.n_params());
        let params = vec![0.0; actor.n_params() + critic.n_params()];
        ActorCritic { actor, critic, params }
    }

    pub fn from_params(obs_dim: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut model = ActorCritic::zeroed(obs_dim, hidden);
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn hidden(&self) -> &[usize] {
        let s = self.actor.sizes();
        &s[1..s.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub(crate) fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(Error::ObservationShape {
                expected: self.obs_dim(),
                got: obs.len(),
            });
        }
        Ok(())
    }

    /// Masked action distribution and value estimate for one observation.
    pub fn forward(&self, obs: &[f64], mask: &ActionMask) -> Result<(MaskedCategorical, f64)> {
        self.check_obs(obs)?;
        let mut cache = MlpCache::default();
        self.actor.forward(&self.params, obs, &mut cache);
        let dist = MaskedCategorical::new(cache.output(), mask)?;
        Ok((dist, self.value(obs)?))
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        self.check_obs(obs)?;
        let mut cache = MlpCache::default();
        self.critic.forward(&self.params, obs, &mut cache);
        Ok(cache.output()[0])
    }
}

/// Categorical distribution over the canonical slots with masked slots at
/// probability exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedCategorical {
    probs: [f64; N_SLOTS],
    log_probs: [f64; N_SLOTS],
    mask: ActionMask,
}

impl MaskedCategorical {
    pub fn new(logits: &[f64], mask: &ActionMask) -> Result<Self> {
        if mask.count() == 0 {
            return Err(Error::EmptyMask);
        }
        if logits.len() != N_SLOTS {
            return Err(Error::InvalidArgument(format!(
                "expected {N_SLOTS} logits, got {}",
                logits.len()
            )));
        }
        let max = mask.valid_slots().map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("policy logits".into()));
        }
        let log_norm = mask.valid_slots().map(|i| (logits[i] - max).exp()).sum::<f64>().ln() + max;
        let mut probs = [0.0; N_SLOTS];
        let mut log_probs = [f64::NEG_INFINITY; N_SLOTS];
        for i in mask.valid_slots() {
            log_probs[i] = logits[i] - log_norm;
            probs[i] = log_probs[i].exp();
        }
        Ok(MaskedCategorical {
            probs,
            log_probs,
            mask: *mask,
        })
    }

    pub fn probs(&self) -> &[f64; N_SLOTS] {
        &self.probs
    }

    pub fn log_prob(&self, slot: usize) -> f64 {
        self.log_probs[slot]
    }

    pub fn mask(&self) -> &ActionMask {
        &self.mask
    }

    pub fn entropy(&self) -> f64 {
        self.mask
            .valid_slots()
            .map(|i| -self.probs[i] * self.log_probs[i])
            .sum()
    }

    /// Most probable valid slot, lowest index on ties.
    pub fn greedy(&self) -> usize {
        let mut best = None;
        for i in self.mask.valid_slots() {
            if best.is_none_or(|b: usize| self.probs[i] > self.probs[b]) {
                best = Some(i);
            }
        }
        best.expect("mask has a valid slot")
    }

    /// Inverse-CDF draw restricted to valid slots.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for i in self.mask.valid_slots() {
            if self.probs[i] == 0.0 {
                continue;
            }
            acc += self.probs[i];
            last = Some(i);
            if u < acc {
                return i;
            }
        }
        last.unwrap_or_else(|| self.greedy())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::GATHER_SLOT;

    #[test]
    fn single_valid_slot_has_all_mass() {
        let mut m = [false; N_SLOTS];
        m[3] = true;
        let d = MaskedCategorical::new(&[5.0, 1.0, 2.0, -3.0, 0.0], &ActionMask(m)).unwrap();
        assert_eq!(d.probs(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.entropy(), 0.0);
    }

    #[test]
    fn zero_weights_are_uniform_over_valid() {
        let model = ActorCritic::zeroed(9, &DEFAULT_HIDDEN);
        let mask = ActionMask([true, true, false, false, true]);
        let (d, v) = model.forward(&[0.5; 9], &mask).unwrap();
        for i in [0, 1, GATHER_SLOT] {
            assert!((d.probs()[i] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(d.probs()[2], 0.0);
        assert_eq!(d.probs()[3], 0.0);
        assert_eq!(v, 0.0);
        assert!((d.entropy() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let model = ActorCritic::new(9, &DEFAULT_HIDDEN, 0);
        assert!(matches!(
            model.forward(&[0.0; 9], &ActionMask([false; N_SLOTS])),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            model.forward(&[0.0; 10], &ActionMask::all()),
            Err(Error::ObservationShape { expected: 9, got: 10 })
        ));
    }

    #[test]
    fn init_shapes_and_heads() {
        let model = ActorCritic::new(9, &DEFAULT_HIDDEN, 1);
        let actor = 9 * 64 + 64 + 64 * 64 + 64 + 64 * 5 + 5;
        let critic = 9 * 64 + 64 + 64 * 64 + 64 + 64 + 1;
        assert_eq!(model.n_params(), actor + critic);
        assert_eq!(model.hidden(), &[64, 64]);
        // policy head rows have norm 0.01
        let head = &model.params()[9 * 64 + 64 + 64 * 64 + 64..][..64 * 5];
        for row in head.chunks(64) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 0.01).abs() < 1e-12);
        }
        let (d, _) = model.forward(&[0.2; 9], &ActionMask::all()).unwrap();
        // near-uniform at init
        assert!(d.probs().iter().all(|p| (p - 0.2).abs() < 0.02));
    }
}
