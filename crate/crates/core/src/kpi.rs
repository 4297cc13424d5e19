//! Message queues, success criterion, age of information and energy.
//!
//! Receiver-side AoI `Phi[i][j]` only changes at transmit opportunities of
//! `i`: a successful delivery sets it to the delivered message's age plus
//! the RRI, a failure adds the RRI. Between opportunities it is held, and
//! the per-slot value is what the averages integrate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Number of message priority classes per vehicle.
pub const N_MESSAGE_TYPES: usize = 4;

/// `u = floor(W * log2(1 + sinr) * slot_s / G)`; delivery succeeds iff
/// `u >= 1`.
pub fn success_indicator(bandwidth_hz: f64, sinr: f64, message_bits: f64, slot_s: f64) -> u32 {
    let bits = bandwidth_hz * (1.0 + sinr.max(0.0)).log2() * slot_s;
    let u = (bits / message_bits).floor();
    if u.is_finite() {
        u.clamp(0.0, u32::MAX as f64) as u32
    } else {
        0
    }
}

/// Smallest SINR with `success_indicator >= 1`.
pub fn sinr_threshold(bandwidth_hz: f64, message_bits: f64, slot_s: f64) -> f64 {
    (message_bits / (bandwidth_hz * slot_s)).exp2() - 1.0
}

/// Receiver AoI after one transmit opportunity of the sender.
pub fn update_rx_aoi(current: u64, success: bool, gamma: u64, head_age: u64) -> u64 {
    if success {
        head_age + gamma
    } else {
        current + gamma
    }
}

/// One slot of queue aging for a single priority queue. With `beta` the
/// head departs and every remaining entry moves up one position; all ages
/// then grow by one slot.
pub fn queue_age_step(ages: &mut VecDeque<u64>, beta: bool) {
    if beta {
        ages.pop_front();
    }
    for a in ages.iter_mut() {
        *a += 1;
    }
}

/// Transmission gate of a queue: 1 exactly on a reserved slot
/// `z_new + m * gamma` while the queue holds at least one message.
pub fn beta(t: u64, z_new: u64, m: u64, gamma: u64, queue_len: usize, capacity: usize) -> u8 {
    let on_schedule = t == z_new + m * gamma;
    let occupied = queue_len.div_ceil(capacity).min(1);
    (on_schedule as u8) * occupied as u8
}

/// Per-vehicle FIFO queues, one per priority (index 0 is the highest).
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityQueues {
    capacity: usize,
    queues: Vec<[VecDeque<u64>; N_MESSAGE_TYPES]>,
    dropped: u64,
}

impl PriorityQueues {
    pub fn new(n_vehicles: usize, capacity: usize) -> Self {
        Self { capacity, queues: vec![Default::default(); n_vehicles], dropped: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ages(&self, vehicle: usize, kind: usize) -> &VecDeque<u64> {
        &self.queues[vehicle][kind]
    }

    pub fn len(&self, vehicle: usize, kind: usize) -> usize {
        self.queues[vehicle][kind].len()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Enqueues a fresh message. A full queue drops its head so the newest
    /// information survives.
    pub fn arrive(&mut self, vehicle: usize, kind: usize) {
        let q = &mut self.queues[vehicle][kind];
        if q.len() == self.capacity {
            q.pop_front();
            self.dropped += 1;
        }
        q.push_back(0);
    }

    /// Highest-priority non-empty queue and the age of its head.
    pub fn head_to_serve(&self, vehicle: usize) -> Option<(usize, u64)> {
        self.queues[vehicle]
            .iter()
            .enumerate()
            .find_map(|(n, q)| q.front().map(|&age| (n, age)))
    }

    /// Ages every queue by one slot; `served` names the queue whose head
    /// departed this slot.
    pub fn step(&mut self, served: &[Option<usize>]) {
        for (queues, served) in self.queues.iter_mut().zip(served) {
            for (n, q) in queues.iter_mut().enumerate() {
                queue_age_step(q, *served == Some(n));
            }
        }
    }
}

/// The `Phi` matrix with running row sums and their time integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiLedger {
    n: usize,
    phi: Vec<u64>,
    row_sum: Vec<u64>,
    row_integral: Vec<u128>,
    total_integral: u128,
    slots: u64,
}

impl AoiLedger {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            phi: vec![0; n * n],
            row_sum: vec![0; n],
            row_integral: vec![0; n],
            total_integral: 0,
            slots: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, tx: usize, rx: usize) -> u64 {
        self.phi[tx * self.n + rx]
    }

    pub fn row(&self, tx: usize) -> &[u64] {
        &self.phi[tx * self.n..(tx + 1) * self.n]
    }

    pub fn set(&mut self, tx: usize, rx: usize, value: u64) {
        if tx == rx {
            return;
        }
        let cell = &mut self.phi[tx * self.n + rx];
        self.row_sum[tx] = self.row_sum[tx] - *cell + value;
        *cell = value;
    }

    /// Applies one transmit-opportunity outcome and returns the new value.
    pub fn record_opportunity(&mut self, tx: usize, rx: usize, success: bool, gamma: u64, head_age: u64) -> u64 {
        let next = update_rx_aoi(self.get(tx, rx), success, gamma, head_age);
        self.set(tx, rx, next);
        next
    }

    /// Adds the current matrix to the time integrals (call once per slot).
    pub fn accumulate_slot(&mut self) {
        for (acc, &s) in self.row_integral.iter_mut().zip(&self.row_sum) {
            *acc += u128::from(s);
        }
        self.total_integral += self.row_sum.iter().map(|&s| u128::from(s)).sum::<u128>();
        self.slots += 1;
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn row_integral(&self, tx: usize) -> u128 {
        self.row_integral[tx]
    }

    pub fn total_integral(&self) -> u128 {
        self.total_integral
    }

    /// `(1/T)(1/N^2) sum_t sum_i sum_j Phi`.
    pub fn avg_aoi(&self, horizon_slots: u64) -> f64 {
        if horizon_slots == 0 {
            return 0.0;
        }
        self.total_integral as f64 / (horizon_slots as f64 * (self.n * self.n) as f64)
    }

    /// `(1/T)(1/N) sum_t sum_j Phi[tx][j]` between an earlier snapshot of
    /// `row_integral(tx)` and now.
    pub fn per_vehicle_mean_aoi(&self, tx: usize, since_integral: u128, window_slots: u64) -> f64 {
        if window_slots == 0 {
            return 0.0;
        }
        (self.row_integral[tx] - since_integral) as f64 / (window_slots as f64 * self.n as f64)
    }
}

/// Energy for one reservation lifetime: `p * l * rc0`.
pub fn energy_event(power_w: f64, slot_s: f64, rc0: u32) -> f64 {
    power_w * slot_s * f64::from(rc0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEvent {
    pub vehicle: usize,
    pub slot: u64,
    pub power_w: f64,
    pub duration_s: f64,
    pub rc0: u32,
    pub rri_slots: u64,
    pub joules: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    events: Vec<EnergyEvent>,
    per_vehicle: Vec<f64>,
}

impl EnergyLedger {
    pub fn new(n: usize) -> Self {
        Self { events: Vec::new(), per_vehicle: vec![0.0; n] }
    }

    /// Charges a reservation lifetime at its establishment.
    pub fn charge(&mut self, vehicle: usize, slot: u64, power_w: f64, slot_s: f64, rc0: u32, rri_slots: u64) -> f64 {
        let joules = energy_event(power_w, slot_s, rc0);
        self.per_vehicle[vehicle] += joules;
        self.events.push(EnergyEvent { vehicle, slot, power_w, duration_s: slot_s, rc0, rri_slots, joules });
        joules
    }

    pub fn events(&self) -> &[EnergyEvent] {
        &self.events
    }

    pub fn vehicle_total(&self, vehicle: usize) -> f64 {
        self.per_vehicle[vehicle]
    }

    pub fn total(&self) -> f64 {
        self.per_vehicle.iter().sum()
    }

    /// `(1/T)(1/N) sum_t sum_i E`.
    pub fn avg_energy(&self, horizon_slots: u64, n_vehicles: usize) -> f64 {
        if horizon_slots == 0 || n_vehicles == 0 {
            return 0.0;
        }
        self.total() / (horizon_slots as f64 * n_vehicles as f64)
    }
}
