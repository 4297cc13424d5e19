//! Paired seeds: OMA against NOMA reception, NR Mode 2 against the LTE
//! stand-in, at two fleet sizes.

use sidelink_aoi::baselines::RandomPolicy;
use sidelink_aoi::env::{run_episode, AccessMode, Env, EnvConfig};
use sidelink_aoi::sps::RadioMode;

fn mean_aoi(n: usize, access: AccessMode, mode: RadioMode, seeds: u64) -> sidelink_aoi::Result<f64> {
    let mut cfg = EnvConfig::default();
    cfg.scenario.n_vehicles = n;
    cfg.env.access = access;
    cfg.sps.mode = mode;
    let mut env = Env::new(cfg.clone())?;
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut p = RandomPolicy::new(seed, n, cfg.p_max_w());
        total += run_episode(&mut env, &mut p, seed)?.avg_aoi_slots;
    }
    Ok(total / seeds as f64)
}

fn main() -> sidelink_aoi::Result<()> {
    println!("{:>4} {:>6} {:>8} {:>8}", "N", "access", "NR", "LTE");
    for n in [20, 40] {
        for access in [AccessMode::Oma, AccessMode::Noma] {
            let nr = mean_aoi(n, access, RadioMode::Nr, 5)?;
            let lte = mean_aoi(n, access, RadioMode::Lte, 5)?;
            println!("{n:>4} {access:>6} {nr:>8.2} {lte:>8.2}");
        }
    }
    Ok(())
}
