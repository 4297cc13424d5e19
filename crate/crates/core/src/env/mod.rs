//! The simulator as an episodic decision process.
//!
//! A vehicle asks for an action (RRI, transmit power) at episode start and
//! whenever its reservation counter expires and the keep lottery says
//! reselect. The interval between two such requests is one decision epoch;
//! closing an epoch yields a [`Transition`] whose reward weighs the energy
//! rate of the reservations charged in the epoch against the mean receiver
//! AoI of the vehicle over the epoch.

mod episode;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    self, draw_small_scale, noise_power_in, path_loss, ChannelParams, LinkSample, Overlap, RxPowerEntry,
    ShadowingField,
};
use crate::error::{Error, Result};
use crate::kpi::{self, AoiLedger, EnergyEvent, EnergyLedger, PriorityQueues, N_MESSAGE_TYPES};
use crate::rng::{self, SimRng, Stream};
use crate::scenario::{self, ScenarioConfig, World};
use crate::sps::{self, KeepDecision, RadioMode, Reevaluation, Reservation, ResourceGrid, Rri, SelectionReport, SpsParams, TxOutcome};
use crate::units::{db_to_linear, dbm_to_watts};

pub use episode::{run_episode, EpisodeReport, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AccessMode {
    /// Every co-slot signal is interference.
    Oma,
    /// Successive interference cancellation at each receiver.
    Noma,
}

impl std::fmt::Display for AccessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            AccessMode::Oma => "OMA",
            AccessMode::Noma => "NOMA",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    pub message_size_bits: f64,
    /// Every message type is generated once per period, at a per-vehicle
    /// random phase.
    pub arrival_period_slots: u64,
    pub queue_capacity: usize,
}

impl Default for TrafficParams {
    fn default() -> Self {
        Self { message_size_bits: 2400.0, arrival_period_slots: 100, queue_capacity: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub energy: f64,
    pub aoi: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { energy: 0.6, aoi: 0.4 }
    }
}

impl ObjectiveWeights {
    /// Scaled to sum to one.
    pub fn normalized(self) -> Result<Self> {
        if !(self.energy >= 0.0 && self.aoi >= 0.0) || !(self.energy + self.aoi > 0.0) {
            return Err(Error::config("env.weights", "weights must be non-negative and not both zero"));
        }
        let s = self.energy + self.aoi;
        Ok(Self { energy: self.energy / s, aoi: self.aoi / s })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub access: AccessMode,
    pub p_max_dbm: f64,
    pub weights: ObjectiveWeights,
    /// Trailing window of the success-probability feature.
    pub succ_window_slots: u64,
    /// AoI scale of the reward and objective (slots).
    pub aoi_ref_slots: f64,
    /// Keep a JSON-serialisable event log of the run.
    pub record_events: bool,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            access: AccessMode::Noma,
            p_max_dbm: 23.0,
            weights: ObjectiveWeights::default(),
            succ_window_slots: 500,
            aoi_ref_slots: 200.0,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub channel: ChannelParams,
    pub sps: SpsParams,
    pub traffic: TrafficParams,
    pub env: EnvParams,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.sps.validate()?;
        if !(self.traffic.message_size_bits > 0.0) {
            return Err(Error::config("traffic.message_size_bits", "must be > 0"));
        }
        if self.traffic.arrival_period_slots == 0 {
            return Err(Error::config("traffic.arrival_period_slots", "must be >= 1"));
        }
        if self.traffic.queue_capacity == 0 {
            return Err(Error::config("traffic.queue_capacity", "must be >= 1"));
        }
        if !self.env.p_max_dbm.is_finite() {
            return Err(Error::config("env.p_max_dbm", "must be finite"));
        }
        if !(self.env.aoi_ref_slots > 0.0) {
            return Err(Error::config("env.aoi_ref_slots", "must be > 0"));
        }
        if self.env.succ_window_slots == 0 {
            return Err(Error::config("env.succ_window_slots", "must be >= 1"));
        }
        self.env.weights.normalized()?;
        Ok(())
    }

    pub fn p_max_w(&self) -> f64 {
        dbm_to_watts(self.env.p_max_dbm)
    }

    pub fn subchannel_bandwidth_hz(&self) -> f64 {
        self.channel.bandwidth_hz / self.sps.n_subchannels as f64
    }

    /// Energy scale: the per-slot energy rate of a full-power reservation at
    /// the shortest RRI.
    pub fn energy_ref_j_per_slot(&self) -> f64 {
        self.p_max_w() * self.scenario.slot_s() / Rri::Ms20.slots() as f64
    }

    /// `w1 * E / E_ref + w2 * Phi / Phi_ref` with normalized weights.
    pub fn objective(&self, avg_energy_j: f64, avg_aoi_slots: f64) -> f64 {
        let w = self.env.weights.normalized().unwrap_or_default();
        w.energy * avg_energy_j / self.energy_ref_j_per_slot() + w.aoi * avg_aoi_slots / self.env.aoi_ref_slots
    }
}

/// Observation of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub n_receivers: usize,
    pub mean_dist_m: f64,
    pub succ_prob: f64,
    pub rc0: u32,
}

pub const STATE_DIM: usize = 4;

impl VehicleState {
    /// Network input: `[N / N_v, d / w, P(u=1), RC0 / 50]`.
    pub fn features(&self, n_vehicles: usize, rx_range_m: f64) -> [f64; STATE_DIM] {
        [
            self.n_receivers as f64 / n_vehicles as f64,
            self.mean_dist_m / rx_range_m,
            self.succ_prob,
            f64::from(self.rc0) / 50.0,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionTuple {
    pub gamma: Rri,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub vehicle: usize,
    pub epoch: usize,
    pub state: [f64; STATE_DIM],
    pub action: ActionTuple,
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
    pub done: bool,
}

/// Debug log entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    Selection { report: SelectionReport, power_w: f64 },
    Reevaluation { vehicle: usize, slot: u64, outcome: Reevaluation },
    Keep { vehicle: usize, slot: u64 },
    Reselect { vehicle: usize, slot: u64 },
    Clamp { vehicle: usize, slot: u64, requested_w: f64, applied_w: f64 },
    Energy(EnergyEvent),
    Opportunity { vehicle: usize, slot: u64, subchannel: usize, message: Option<usize>, head_age: u64, receivers: usize, delivered: usize },
    Transition(Transition),
}

#[derive(Debug, Clone)]
struct OpenEpoch {
    index: usize,
    state: VehicleState,
    action: ActionTuple,
    start_slot: u64,
    row_integral: u128,
    energy_j: f64,
    lifetime_slots: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SuccessBin {
    slot: u64,
    attempts: u32,
    successes: u32,
}

/// What happened in one slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutcome {
    pub slot: u64,
    /// Vehicles at a reselection instant, waiting for `apply_action`.
    pub needs_action: Vec<usize>,
    pub transmissions: usize,
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    weights: ObjectiveWeights,
    world: World,
    grid: ResourceGrid,
    shadowing: ShadowingField,
    reservations: Vec<Option<Reservation>>,
    reeval_at: Vec<Option<u64>>,
    queues: PriorityQueues,
    aoi: AoiLedger,
    energy: EnergyLedger,
    success: Vec<VecDeque<SuccessBin>>,
    arrival_phase: Vec<[u64; N_MESSAGE_TYPES]>,
    epochs: Vec<Option<OpenEpoch>>,
    epoch_count: Vec<usize>,
    needs_action: Vec<bool>,
    fading_rng: Vec<SimRng>,
    shadow_rng: Vec<SimRng>,
    select_rng: Vec<SimRng>,
    keep_rng: Vec<SimRng>,
    noise_w: f64,
    overlap: Overlap,
    now: u64,
    attempts: u64,
    deliveries: u64,
    events: Vec<SimEvent>,
}

impl Env {
    /// Builds the environment and resets it with `cfg.scenario.seed`.
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = cfg.env.weights.normalized()?;
        let n = cfg.scenario.n_vehicles;
        let seed = cfg.scenario.seed;
        let world = scenario::init_world(&cfg.scenario)?;
        let noise_w = noise_power_in(cfg.subchannel_bandwidth_hz(), cfg.channel.noise_figure_db);
        let history = cfg.sps.n_sense_slots.max(cfg.sps.lte_sense_slots);
        let mut env = Self {
            weights,
            grid: ResourceGrid::new(cfg.sps.n_subchannels, history),
            shadowing: ShadowingField::new(n, &cfg.channel),
            reservations: vec![None; n],
            reeval_at: vec![None; n],
            queues: PriorityQueues::new(n, cfg.traffic.queue_capacity),
            aoi: AoiLedger::new(n),
            energy: EnergyLedger::new(n),
            success: vec![VecDeque::new(); n],
            arrival_phase: vec![[0; N_MESSAGE_TYPES]; n],
            epochs: vec![None; n],
            epoch_count: vec![0; n],
            needs_action: vec![true; n],
            fading_rng: rng::substreams(seed, Stream::Fading, n),
            shadow_rng: rng::substreams(seed, Stream::Shadowing, n),
            select_rng: rng::substreams(seed, Stream::Selection, n),
            keep_rng: rng::substreams(seed, Stream::Keep, n),
            noise_w,
            overlap: cfg.channel.overlap(),
            now: 0,
            attempts: 0,
            deliveries: 0,
            events: Vec::new(),
            world,
            cfg,
        };
        env.reset_with_seed(seed)?;
        Ok(env)
    }

    /// Fresh world, zeroed ledgers, every vehicle waiting for its first
    /// action. Returns the vehicles needing actions (all of them).
    pub fn reset(&mut self) -> Vec<usize> {
        let seed = self.cfg.scenario.seed;
        self.reset_with_seed(seed).expect("config already validated")
    }

    pub fn reset_with_seed(&mut self, seed: u64) -> Result<Vec<usize>> {
        self.cfg.scenario.seed = seed;
        let n = self.cfg.scenario.n_vehicles;
        self.world = scenario::init_world(&self.cfg.scenario)?;
        let history = self.cfg.sps.n_sense_slots.max(self.cfg.sps.lte_sense_slots);
        self.grid = ResourceGrid::new(self.cfg.sps.n_subchannels, history);
        self.shadowing = ShadowingField::new(n, &self.cfg.channel);
        self.reservations = vec![None; n];
        self.reeval_at = vec![None; n];
        self.queues = PriorityQueues::new(n, self.cfg.traffic.queue_capacity);
        self.aoi = AoiLedger::new(n);
        self.energy = EnergyLedger::new(n);
        self.success = vec![VecDeque::new(); n];
        self.epochs = vec![None; n];
        self.epoch_count = vec![0; n];
        self.needs_action = vec![true; n];
        self.fading_rng = rng::substreams(seed, Stream::Fading, n);
        self.shadow_rng = rng::substreams(seed, Stream::Shadowing, n);
        self.select_rng = rng::substreams(seed, Stream::Selection, n);
        self.keep_rng = rng::substreams(seed, Stream::Keep, n);
        let period = self.cfg.traffic.arrival_period_slots;
        self.arrival_phase = (0..n)
            .map(|v| {
                let mut r = rng::substream(seed, Stream::Traffic, v);
                std::array::from_fn(|_| r.random_range(0..period))
            })
            .collect();
        self.now = 0;
        self.attempts = 0;
        self.deliveries = 0;
        self.events.clear();
        Ok((0..n).collect())
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn weights(&self) -> ObjectiveWeights {
        self.weights
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn n_vehicles(&self) -> usize {
        self.cfg.scenario.n_vehicles
    }

    /// The next slot `step` will process.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn aoi(&self) -> &AoiLedger {
        &self.aoi
    }

    pub fn energy(&self) -> &EnergyLedger {
        &self.energy
    }

    pub fn queues(&self) -> &PriorityQueues {
        &self.queues
    }

    pub fn reservation(&self, vehicle: usize) -> Option<&Reservation> {
        self.reservations[vehicle].as_ref()
    }

    pub fn needs_action(&self, vehicle: usize) -> bool {
        self.needs_action[vehicle]
    }

    pub fn epoch_index(&self, vehicle: usize) -> usize {
        self.epoch_count[vehicle]
    }

    /// (receiver link attempts, successful deliveries) so far.
    pub fn delivery_counts(&self) -> (u64, u64) {
        (self.attempts, self.deliveries)
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    fn log(&mut self, e: impl FnOnce() -> SimEvent) {
        if self.cfg.env.record_events {
            self.events.push(e());
        }
    }

    pub fn observe(&self, vehicle: usize) -> VehicleState {
        let (set, mean_dist_m) = self.world.receivers_of(vehicle);
        let from = self.now.saturating_sub(self.cfg.env.succ_window_slots);
        let (att, ok) = self.success[vehicle]
            .iter()
            .filter(|b| b.slot >= from)
            .fold((0u64, 0u64), |(a, s), b| (a + u64::from(b.attempts), s + u64::from(b.successes)));
        let succ_prob = if att == 0 { 1.0 } else { ok as f64 / att as f64 };
        let rc0 = self.reservations[vehicle].as_ref().map_or(0, |r| r.rc0);
        VehicleState { n_receivers: set.len(), mean_dist_m, succ_prob, rc0 }
    }

    pub fn features(&self, vehicle: usize) -> [f64; STATE_DIM] {
        self.observe(vehicle).features(self.n_vehicles(), self.cfg.scenario.rx_range_m)
    }

    /// Applies `(gamma, power)` to a vehicle at a reselection instant: runs
    /// resource selection, installs the reservation and charges its energy.
    pub fn apply_action(&mut self, vehicle: usize, action: ActionTuple) -> Result<()> {
        if vehicle >= self.n_vehicles() {
            return Err(Error::Invalid(format!("no vehicle {vehicle}")));
        }
        if !self.needs_action[vehicle] {
            return Err(Error::Invalid(format!("vehicle {vehicle} is not at a reselection instant")));
        }
        let p_max = self.cfg.p_max_w();
        let power_w = if action.power_w.is_nan() { 0.0 } else { action.power_w.clamp(0.0, p_max) };
        if power_w != action.power_w {
            let (slot, requested_w) = (self.now, action.power_w);
            log::debug!("vehicle {vehicle}: power {requested_w} W clamped to {power_w} W");
            self.log(|| SimEvent::Clamp { vehicle, slot, requested_w, applied_w: power_w });
        }
        let action = ActionTuple { gamma: action.gamma, power_w };
        let state = self.observe(vehicle);
        let th = self.cfg.channel.rsrp_threshold_dbm;
        let (reservation, report) = match self.cfg.sps.mode {
            RadioMode::Nr => sps::select_resource(
                &self.grid, vehicle, action.gamma, self.now, power_w, &self.cfg.sps, th, &mut self.select_rng[vehicle],
            )?,
            RadioMode::Lte => sps::lte_mode4_select(
                &self.grid, vehicle, action.gamma, self.now, power_w, &self.cfg.sps, th, &mut self.select_rng[vehicle],
            )?,
        };
        self.log(|| SimEvent::Selection { report, power_w });
        let z_g = reservation.start_slot.saturating_sub(self.cfg.sps.t1_slots);
        self.reeval_at[vehicle] = (self.cfg.sps.mode == RadioMode::Nr && z_g > self.now).then_some(z_g);
        self.epochs[vehicle] = Some(OpenEpoch {
            index: self.epoch_count[vehicle],
            state,
            action,
            start_slot: self.now,
            row_integral: self.aoi.row_integral(vehicle),
            energy_j: 0.0,
            lifetime_slots: 0,
        });
        self.epoch_count[vehicle] += 1;
        self.charge(vehicle, &reservation);
        self.reservations[vehicle] = Some(reservation);
        self.needs_action[vehicle] = false;
        Ok(())
    }

    fn charge(&mut self, vehicle: usize, r: &Reservation) {
        let slot_s = self.cfg.scenario.slot_s();
        let joules = self.energy.charge(vehicle, self.now, r.tx_power_w, slot_s, r.rc0, r.rri.slots());
        if let Some(e) = self.epochs[vehicle].as_mut() {
            e.energy_j += joules;
            e.lifetime_slots += u64::from(r.rc0) * r.rri.slots();
        }
        if self.cfg.env.record_events {
            let ev = self.energy.events().last().cloned().expect("just charged");
            self.events.push(SimEvent::Energy(ev));
        }
    }

    /// Normalized reward terms `(energy, aoi)` of the open epoch of
    /// `vehicle`, each clipped to `[0, 1]`.
    pub fn reward_terms(&self, vehicle: usize) -> Option<(f64, f64)> {
        let e = self.epochs[vehicle].as_ref()?;
        let energy_rate = if e.lifetime_slots == 0 { 0.0 } else { e.energy_j / e.lifetime_slots as f64 };
        let window = self.now - e.start_slot;
        let aoi = self.aoi.per_vehicle_mean_aoi(vehicle, e.row_integral, window);
        Some((
            (energy_rate / self.cfg.energy_ref_j_per_slot()).clamp(0.0, 1.0),
            (aoi / self.cfg.env.aoi_ref_slots).clamp(0.0, 1.0),
        ))
    }

    /// `r = -(w1 * E + w2 * Phi)` over normalized terms.
    pub fn reward(&self, vehicle: usize) -> Option<f64> {
        let (e, a) = self.reward_terms(vehicle)?;
        Some(-(self.weights.energy * e + self.weights.aoi * a))
    }

    /// Ends the open epoch of `vehicle` and returns its transition.
    pub fn close_epoch(&mut self, vehicle: usize, done: bool) -> Option<Transition> {
        let reward = self.reward(vehicle)?;
        let e = self.epochs[vehicle].take()?;
        let (n, w) = (self.n_vehicles(), self.cfg.scenario.rx_range_m);
        let t = Transition {
            vehicle,
            epoch: e.index,
            state: e.state.features(n, w),
            action: e.action,
            reward,
            next_state: self.features(vehicle),
            done,
        };
        if self.cfg.env.record_events {
            self.events.push(SimEvent::Transition(t.clone()));
        }
        Some(t)
    }

    /// Processes slot `now` and advances the clock.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let n = self.n_vehicles();
        let t = self.now;
        self.world.step_mobility();

        self.run_reevaluations(t)?;

        let period = self.cfg.traffic.arrival_period_slots;
        for v in 0..n {
            for kind in 0..N_MESSAGE_TYPES {
                if (t + self.arrival_phase[v][kind]).is_multiple_of(period) {
                    self.queues.arrive(v, kind);
                }
            }
        }

        // transmit opportunities in vehicle order
        let mut served = vec![None; n];
        let mut opportunities = Vec::new();
        let mut expired = Vec::new();
        for v in 0..n {
            let Some(r) = self.reservations[v].as_mut() else { continue };
            if r.next_tx != t {
                continue;
            }
            let head = self.queues.head_to_serve(v);
            served[v] = head.map(|(kind, _)| kind);
            opportunities.push((v, r.subchannel, r.rri, r.tx_power_w, head));
            if r.on_transmit_opportunity(t)? == TxOutcome::CounterExpired {
                expired.push(v);
            }
        }
        let transmitting: Vec<(usize, usize, f64)> = opportunities
            .iter()
            .filter(|o| o.4.is_some())
            .map(|&(v, sub, _, p, _)| (v, sub, p))
            .collect();
        let rx = self.propagate(&transmitting, t);

        self.deliver(t, &opportunities, &transmitting, &rx);

        for v in expired {
            let r = self.reservations[v].as_mut().expect("expired reservations exist");
            match r.reselect_or_keep(self.cfg.sps.p_rk, &mut self.keep_rng[v]) {
                KeepDecision::Keep => {
                    let r = r.clone();
                    self.charge(v, &r);
                    self.log(|| SimEvent::Keep { vehicle: v, slot: t });
                }
                KeepDecision::Reselect => {
                    self.reservations[v] = None;
                    self.needs_action[v] = true;
                    self.log(|| SimEvent::Reselect { vehicle: v, slot: t });
                }
            }
        }

        self.queues.step(&served);
        self.aoi.accumulate_slot();
        self.now = t + 1;
        self.grid.prune(self.now);
        let horizon = self.cfg.env.succ_window_slots;
        for bins in &mut self.success {
            while bins.front().is_some_and(|b| b.slot + horizon < self.now) {
                bins.pop_front();
            }
        }
        let needs_action = (0..n).filter(|&v| self.needs_action[v]).collect();
        Ok(StepOutcome { slot: t, needs_action, transmissions: transmitting.len() })
    }

    fn run_reevaluations(&mut self, t: u64) -> Result<()> {
        for v in 0..self.n_vehicles() {
            if self.reeval_at[v] != Some(t) {
                continue;
            }
            self.reeval_at[v] = None;
            let Some(r) = self.reservations[v].as_mut() else { continue };
            let outcome = sps::reevaluate(
                &self.grid,
                r,
                t,
                &self.cfg.sps,
                self.cfg.channel.rsrp_threshold_dbm,
                &mut self.select_rng[v],
            )?;
            self.log(|| SimEvent::Reevaluation { vehicle: v, slot: t, outcome });
        }
        Ok(())
    }

    /// Received power of every transmission at every vehicle (row per
    /// transmitter, indexed like `transmitting`); also feeds the sensing
    /// history.
    fn propagate(&mut self, transmitting: &[(usize, usize, f64)], t: u64) -> Vec<Vec<f64>> {
        let n = self.n_vehicles();
        let shadow_db = self.cfg.channel.shadow_std_db > 0.0;
        let mut out = Vec::with_capacity(transmitting.len());
        for &(tx, subchannel, power) in transmitting {
            let mut row = vec![0.0; n];
            for (v, slot) in row.iter_mut().enumerate() {
                if v == tx {
                    continue;
                }
                let d = self.world.distance(tx, v);
                let shadow = if shadow_db {
                    self.shadowing.gain_db(tx, v, d, &mut self.shadow_rng[tx])
                } else {
                    0.0
                };
                let link = LinkSample {
                    large_scale_gain: db_to_linear(shadow),
                    small_scale_gain: draw_small_scale(&mut self.fading_rng[tx]),
                    path_loss: path_loss(&self.cfg.channel, d),
                };
                *slot = channel::rx_power(power, &link);
            }
            let rri = self.reservations[tx].as_ref().map_or(0, |r| r.rri.slots());
            self.grid.record(sps::SensedTx { slot: t, owner: tx, subchannel, rri_slots: rri, rx_power_w: row.clone() });
            out.push(row);
        }
        out
    }

    #[allow(clippy::type_complexity)]
    fn deliver(
        &mut self,
        t: u64,
        opportunities: &[(usize, usize, Rri, f64, Option<(usize, u64)>)],
        transmitting: &[(usize, usize, f64)],
        rx: &[Vec<f64>],
    ) {
        let n = self.n_vehicles();
        let bw = self.cfg.subchannel_bandwidth_hz();
        let bits = self.cfg.traffic.message_size_bits;
        let slot_s = self.cfg.scenario.slot_s();
        let decodes = |sinr: f64| kpi::success_indicator(bw, sinr, bits, slot_s) >= 1;
        let is_tx: Vec<bool> = {
            let mut m = vec![false; n];
            for &(v, _, _) in transmitting {
                m[v] = true;
            }
            m
        };
        // per receiver: SINR of every co-slot transmission, computed on demand
        let mut sinr_at: Vec<Option<Vec<f64>>> = vec![None; n];
        for &(v, subchannel, rri, _, head) in opportunities {
            let (receivers, _) = self.world.receivers_of(v);
            let gamma = rri.slots();
            let Some((kind, head_age)) = head else {
                for j in receivers {
                    self.aoi.record_opportunity(v, j, false, gamma, 0);
                }
                self.log(|| SimEvent::Opportunity {
                    vehicle: v, slot: t, subchannel, message: None, head_age: 0, receivers: 0, delivered: 0,
                });
                continue;
            };
            let k = transmitting.iter().position(|&(u, _, _)| u == v).expect("served opportunities transmit");
            let mut delivered = 0u32;
            for &j in &receivers {
                let ok = !is_tx[j] && {
                    let sinrs = sinr_at[j].get_or_insert_with(|| {
                        let entries: Vec<RxPowerEntry> = transmitting
                            .iter()
                            .zip(rx)
                            .map(|(&(u, sub, _), row)| RxPowerEntry { tx_id: u, rx_power: row[j], subchannel: sub })
                            .collect();
                        match self.cfg.env.access {
                            AccessMode::Oma => entries
                                .iter()
                                .map(|e| channel::sinr_oma(e.tx_id, &entries, self.noise_w, self.overlap).expect("present"))
                                .collect(),
                            AccessMode::Noma => {
                                let map = channel::sic_decode(&entries, self.noise_w, self.overlap, decodes);
                                entries.iter().map(|e| map[&e.tx_id]).collect()
                            }
                        }
                    });
                    decodes(sinrs[k])
                };
                if ok {
                    delivered += 1;
                }
                self.aoi.record_opportunity(v, j, ok, gamma, head_age);
            }
            let attempts = receivers.len() as u32;
            self.attempts += u64::from(attempts);
            self.deliveries += u64::from(delivered);
            if attempts > 0 {
                self.success[v].push_back(SuccessBin { slot: t, attempts, successes: delivered });
            }
            self.log(|| SimEvent::Opportunity {
                vehicle: v,
                slot: t,
                subchannel,
                message: Some(kind),
                head_age,
                receivers: attempts as usize,
                delivered: delivered as usize,
            });
        }
    }
}
