//! Road geometry, vehicle placement and constant-speed mobility.
//!
//! The road is a ring of length `road_length_m`: vehicles leaving one end
//! re-enter at the other, which keeps the vehicle count fixed for a run.
//! Distances are longitudinal and wrap-aware; lane offsets are ignored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::units::kmh_to_mps;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    pub road_length_m: f64,
    /// Carried as metadata; no model quantity depends on it.
    pub rsu_range_m: f64,
    pub rx_range_m: f64,
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub n_lanes_per_direction: usize,
    pub slot_ms: f64,
    pub horizon_slots: u64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 20,
            road_length_m: 500.0,
            rsu_range_m: 250.0,
            rx_range_m: 150.0,
            v_min_mps: kmh_to_mps(60.0),
            v_max_mps: kmh_to_mps(80.0),
            n_lanes_per_direction: 2,
            slot_ms: 1.0,
            horizon_slots: 5000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vehicles < 2 {
            return Err(Error::config("scenario.n_vehicles", "must be >= 2"));
        }
        if !(self.road_length_m > 0.0) {
            return Err(Error::config("scenario.road_length_m", "must be > 0"));
        }
        if !(self.rx_range_m > 0.0 && self.rx_range_m <= self.road_length_m) {
            return Err(Error::config("scenario.rx_range_m", "must lie in (0, road_length_m]"));
        }
        if !(self.v_min_mps >= 0.0 && self.v_min_mps <= self.v_max_mps) {
            return Err(Error::config("scenario.v_min_mps", "must satisfy 0 <= v_min <= v_max"));
        }
        if self.n_lanes_per_direction == 0 {
            return Err(Error::config("scenario.n_lanes_per_direction", "must be >= 1"));
        }
        if self.slot_ms != 1.0 {
            return Err(Error::config("scenario.slot_ms", "only 1 ms slots are supported"));
        }
        if self.horizon_slots == 0 {
            return Err(Error::config("scenario.horizon_slots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn slot_s(&self) -> f64 {
        self.slot_ms / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: usize,
    pub position_m: f64,
    pub lane: usize,
    /// +1 or -1.
    pub direction: i8,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: ScenarioConfig,
    pub vehicles: Vec<Vehicle>,
    pub clock_slots: u64,
}

/// Places `n_vehicles` uniformly on the road. Even ids drive in the +1
/// direction, odd ids in -1; lanes are filled round-robin per direction.
///
/// Each vehicle draws from its own stream, so vehicle `k` is the same
/// vehicle in every world built from the same seed, whatever `n_vehicles`.
pub fn init_world(config: &ScenarioConfig) -> Result<World> {
    config.validate()?;
    let vehicles = (0..config.n_vehicles)
        .map(|id| {
            let mut rng = rng::substream(config.seed, Stream::Placement, id);
            let position_m = rng.random_range(0.0..config.road_length_m);
            let speed_mps = if config.v_max_mps > config.v_min_mps {
                rng.random_range(config.v_min_mps..=config.v_max_mps)
            } else {
                config.v_min_mps
            };
            Vehicle {
                id,
                position_m,
                lane: (id / 2) % config.n_lanes_per_direction,
                direction: if id % 2 == 0 { 1 } else { -1 },
                speed_mps,
            }
        })
        .collect();
    Ok(World { config: config.clone(), vehicles, clock_slots: 0 })
}

impl World {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Advances every vehicle by one slot of travel and bumps the clock.
    pub fn step_mobility(&mut self) {
        let dt = self.config.slot_s();
        let road = self.config.road_length_m;
        for v in &mut self.vehicles {
            let next = v.position_m + f64::from(v.direction) * v.speed_mps * dt;
            v.position_m = next.rem_euclid(road);
            // rem_euclid can round up to `road` for tiny negative inputs
            if v.position_m >= road {
                v.position_m = 0.0;
            }
        }
        self.clock_slots += 1;
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        ring_distance(self.vehicles[a].position_m, self.vehicles[b].position_m, self.config.road_length_m)
    }

    /// Vehicles within `rx_range_m` of `i` and their mean distance (0 when
    /// the set is empty).
    pub fn receivers_of(&self, i: usize) -> (Vec<usize>, f64) {
        let w = self.config.rx_range_m;
        let mut set = Vec::new();
        let mut total = 0.0;
        for j in 0..self.vehicles.len() {
            if j == i {
                continue;
            }
            let d = self.distance(i, j);
            if d <= w {
                set.push(j);
                total += d;
            }
        }
        let mean = if set.is_empty() { 0.0 } else { total / set.len() as f64 };
        (set, mean)
    }
}

pub fn ring_distance(a: f64, b: f64, road: f64) -> f64 {
    let d = (a - b).abs();
    d.min(road - d)
}
