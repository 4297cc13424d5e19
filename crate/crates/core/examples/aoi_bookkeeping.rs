//! Priority queues and the per-link AoI ledger driven by hand.

use sidelink_aoi::kpi::{AoiLedger, PriorityQueues};

fn main() {
    let mut queues = PriorityQueues::new(2, 10);
    let mut aoi = AoiLedger::new(2);
    let gamma = 20;
    for slot in 0..100u64 {
        if slot % 50 == 0 {
            queues.arrive(0, 0);
            queues.arrive(0, 3);
        }
        let mut served = vec![None, None];
        if slot % gamma == 5 {
            if let Some((kind, head_age)) = queues.head_to_serve(0) {
                // every other opportunity fails
                let ok = (slot / gamma) % 2 == 0;
                let phi = aoi.record_opportunity(0, 1, ok, gamma, head_age);
                println!("slot {slot:>3}: type {kind} age {head_age:>2} {} -> AoI(0->1) = {phi}", if ok { "delivered" } else { "lost     " });
                served[0] = Some(kind);
            }
        }
        queues.step(&served);
        aoi.accumulate_slot();
    }
    println!("time-average AoI over all pairs: {:.2} slots", aoi.avg_aoi(100));
}
