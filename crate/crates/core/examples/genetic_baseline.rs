//! Evolves an open-loop (RRI, power) schedule per vehicle and compares it
//! with random allocation on an unseen seed.

use sidelink_aoi::baselines::{ga_optimize_env, ChromosomePolicy, GaConfig, RandomPolicy};
use sidelink_aoi::env::{run_episode, Env, EnvConfig};

fn main() -> sidelink_aoi::Result<()> {
    let mut cfg = EnvConfig::default();
    cfg.scenario.n_vehicles = 10;
    let ga = GaConfig { generations: 20, fitness_horizon_slots: 3000, ..Default::default() };
    let outcome = ga_optimize_env(&cfg, &ga, 3, 3)?;
    for g in outcome.history.iter().step_by(5) {
        println!("generation {:>2}: best {:.4} mean {:.4}", g.generation, g.best_fitness, g.mean_fitness);
    }
    let mut env = Env::new(cfg.clone())?;
    let evolved = run_episode(&mut env, &mut ChromosomePolicy(outcome.best), 99)?;
    let random = run_episode(&mut env, &mut RandomPolicy::new(99, 10, cfg.p_max_w()), 99)?;
    println!("objective on seed 99: GA {:.4}, random {:.4}", evolved.objective, random.objective);
    Ok(())
}
