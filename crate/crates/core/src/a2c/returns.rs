use crate::error::{Error, Result};

/// Discounted returns and advantages for one environment's rollout.
///
/// `dones[t]` marks that the episode ended with step `t`, so nothing after
/// it is bootstrapped into `t`. With `gae_lambda = 1` this is the n-step
/// return `G_t = r_t + gamma * G_{t+1}` seeded with `bootstrap_value`, and
/// the advantage is `G_t - values[t]`.
pub fn compute_returns(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rollout lengths differ: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_advantage = delta + gamma * gae_lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((returns, advantages))
}
