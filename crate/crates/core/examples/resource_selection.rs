//! Sensing-based selection on a small grid where two neighbours already hold
//! periodic reservations.

use rand::SeedableRng;
use sidelink_aoi::rng::SimRng;
use sidelink_aoi::sps::{select_resource, ResourceGrid, Rri, SensedTx, SpsParams};

fn main() {
    let params = SpsParams { n_subchannels: 3, ..Default::default() };
    let mut grid = ResourceGrid::new(params.n_subchannels, params.lte_sense_slots);
    // vehicle 1 sends on subchannel 0 every 20 slots, vehicle 2 on
    // subchannel 1 every 50; both are loud at vehicle 0
    for slot in 0..100u64 {
        if slot % 20 == 3 {
            grid.record(SensedTx { slot, owner: 1, subchannel: 0, rri_slots: 20, rx_power_w: vec![1e-9, 0.2, 1e-9] });
        }
        if slot % 50 == 7 {
            grid.record(SensedTx { slot, owner: 2, subchannel: 1, rri_slots: 50, rx_power_w: vec![1e-10, 1e-10, 0.2] });
        }
    }
    let mut rng = SimRng::seed_from_u64(7);
    for _ in 0..5 {
        let (res, report) = select_resource(&grid, 0, Rri::Ms20, 100, 0.1, &params, -126.0, &mut rng).unwrap();
        println!(
            "picked slot {} subchannel {} ({} of {} candidates left, threshold raised {}x), rc0 {}",
            report.chosen.slot, report.chosen.subchannel, report.remaining, report.candidates, report.threshold_raises, res.rc0
        );
    }
}
