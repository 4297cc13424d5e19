//! A small sweep through the experiment API: run, summarize, print.

use sidelink_aoi::expcli::{run, summarize, ExperimentConfig, PolicyKind};

fn main() -> sidelink_aoi::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
        seeds = [0, 1, 2]
        [scenario]
        horizon_slots = 2000
        [sweep]
        n_vehicles = [10, 20]
        access = ["OMA", "NOMA"]
        "#,
    )?;
    assert_eq!(cfg.sweep.policy, vec![PolicyKind::Random]);
    let dir = std::env::temp_dir().join("sidelink_sweep");
    let summary = run(&cfg, &dir, 1)?;
    println!("{} records, {} failed", summary.records.len(), summary.failures);
    for row in summarize(&dir, &dir)? {
        println!(
            "N={:<3} {:<5} AoI {:>7.2} +- {:<6.2} energy {:.3e} J",
            row.n_vehicles, row.access, row.avg_aoi_mean, row.avg_aoi_std, row.avg_energy_mean
        );
    }
    println!("files in {}", dir.display());
    Ok(())
}
