//! One desk-scale episode under the random strategy, with the event log.

use sidelink_aoi::baselines::RandomPolicy;
use sidelink_aoi::env::{run_episode, Env, EnvConfig, SimEvent};

fn main() -> sidelink_aoi::Result<()> {
    let mut cfg = EnvConfig::default();
    cfg.env.record_events = true;
    let mut env = Env::new(cfg.clone())?;
    let mut policy = RandomPolicy::new(1, cfg.scenario.n_vehicles, cfg.p_max_w());
    let report = run_episode(&mut env, &mut policy, 1)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    let events = env.take_events();
    let count = |f: fn(&SimEvent) -> bool| events.iter().filter(|e| f(e)).count();
    println!("selections   {}", count(|e| matches!(e, SimEvent::Selection { .. })));
    println!("re-evaluated {}", count(|e| matches!(e, SimEvent::Reevaluation { .. })));
    println!("keeps        {}", count(|e| matches!(e, SimEvent::Keep { .. })));
    println!("reselects    {}", count(|e| matches!(e, SimEvent::Reselect { .. })));
    Ok(())
}
