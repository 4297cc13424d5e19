//! Trains MPDQN on a five-vehicle road, prints the learning curve in
//! blocks, evaluates greedily and saves a checkpoint.

use sidelink_aoi::env::EnvConfig;
use sidelink_aoi::mpdqn::{evaluate, train, AgentParams, MpdqnAgent};

fn main() -> sidelink_aoi::Result<()> {
    env_logger::init();
    let mut cfg = EnvConfig::default();
    cfg.scenario.n_vehicles = 5;
    let params = AgentParams { episodes: 100, ..Default::default() };
    let (agent, curve) = train(&cfg, &params, 42)?;
    for block in curve.chunks(10) {
        let r = block.iter().map(|c| c.mean_reward).sum::<f64>() / block.len() as f64;
        println!("episodes {:>3}-{:>3}  P_ran {:.2}  mean reward {r:.4}", block[0].episode, block[block.len() - 1].episode, block[0].p_ran);
    }
    let test = evaluate(&cfg, &agent, &[1000, 1001, 1002])?;
    for r in &test {
        println!("eval seed {}: AoI {:.1} slots, energy {:.3e} J, objective {:.4}", r.seed, r.avg_aoi_slots, r.avg_energy_j, r.objective);
    }
    let path = std::env::temp_dir().join("mpdqn_agent.json");
    agent.save(&path)?;
    let back = MpdqnAgent::load(&path)?;
    println!("checkpoint {} ({} training steps)", path.display(), back.train_steps);
    Ok(())
}
