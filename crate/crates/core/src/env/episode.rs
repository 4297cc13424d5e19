use serde::{Deserialize, Serialize};

use super::{ActionTuple, Env, Transition};
use crate::error::Result;

/// Anything that can pick an action for a vehicle at a reselection instant.
pub trait Policy {
    fn act(&mut self, env: &Env, vehicle: usize) -> Result<ActionTuple>;

    /// Called with every closed epoch, in the order they close.
    fn observe(&mut self, _transition: &Transition) -> Result<()> {
        Ok(())
    }
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn act(&mut self, env: &Env, vehicle: usize) -> Result<ActionTuple> {
        (**self).act(env, vehicle)
    }

    fn observe(&mut self, transition: &Transition) -> Result<()> {
        (**self).observe(transition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub seed: u64,
    pub slots: u64,
    pub avg_aoi_slots: f64,
    pub avg_energy_j: f64,
    /// Mean reward over all transitions of the episode.
    pub mean_reward: f64,
    /// `w1 * E / E_ref + w2 * Phi / Phi_ref`; lower is better.
    pub objective: f64,
    pub transitions: usize,
    pub link_attempts: u64,
    pub link_deliveries: u64,
}

/// Runs one episode of `horizon_slots` from a reset with `seed`.
pub fn run_episode<P: Policy + ?Sized>(env: &mut Env, policy: &mut P, seed: u64) -> Result<EpisodeReport> {
    let horizon = env.config().scenario.horizon_slots;
    let mut reward_sum = 0.0;
    let mut transitions = 0usize;
    for v in env.reset_with_seed(seed)? {
        let a = policy.act(env, v)?;
        env.apply_action(v, a)?;
    }
    for _ in 0..horizon {
        let out = env.step()?;
        for v in out.needs_action {
            if let Some(t) = env.close_epoch(v, false) {
                reward_sum += t.reward;
                transitions += 1;
                policy.observe(&t)?;
            }
            let a = policy.act(env, v)?;
            env.apply_action(v, a)?;
        }
    }
    for v in 0..env.n_vehicles() {
        if let Some(t) = env.close_epoch(v, true) {
            reward_sum += t.reward;
            transitions += 1;
            policy.observe(&t)?;
        }
    }
    let n = env.n_vehicles();
    let avg_aoi_slots = env.aoi().avg_aoi(horizon);
    let avg_energy_j = env.energy().avg_energy(horizon, n);
    let (link_attempts, link_deliveries) = env.delivery_counts();
    Ok(EpisodeReport {
        seed,
        slots: horizon,
        avg_aoi_slots,
        avg_energy_j,
        mean_reward: if transitions == 0 { 0.0 } else { reward_sum / transitions as f64 },
        objective: env.config().objective(avg_energy_j, avg_aoi_slots),
        transitions,
        link_attempts,
        link_deliveries,
    })
}
