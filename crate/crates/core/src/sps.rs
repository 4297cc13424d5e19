//! Sensing-based semi-persistent scheduling (NR-V2X Mode 2) and a simplified
//! LTE-V2X Mode 4 variant.
//!
//! Every vehicle keeps the last `N_sense` slots of decoded sidelink
//! transmissions (who sent, on which subchannel, with which advertised RRI,
//! at what received power). On resource selection it builds the candidate
//! cells of its selection window, removes cells that its own half-duplex
//! transmissions left unobserved and cells whose projected reservations
//! measured at or above the RSRP threshold, relaxes the threshold in 3 dB
//! steps until at least X% of the window survives, and picks uniformly.
//!
//! A sensed reservation at slot `s` with RRI `r` projects onto every
//! candidate slot `c > s` with `(c - s) % r == 0`. Own transmissions at `s`
//! blank every candidate slot `c` with `(c - s)` a positive multiple of
//! `half_duplex_period_slots`; with the default 100-slot sensing window this
//! is the single mapping `c = s + N_sense`.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::watts_to_dbm;

/// Resource reservation interval in slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub enum Rri {
    Ms20,
    Ms50,
    Ms100,
}

impl Rri {
    pub const ALL: [Rri; 3] = [Rri::Ms20, Rri::Ms50, Rri::Ms100];

    pub fn slots(self) -> u64 {
        match self {
            Rri::Ms20 => 20,
            Rri::Ms50 => 50,
            Rri::Ms100 => 100,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Rri::Ms20 => 0,
            Rri::Ms50 => 1,
            Rri::Ms100 => 2,
        }
    }

    pub fn from_index(k: usize) -> Option<Rri> {
        Rri::ALL.get(k).copied()
    }
}

impl TryFrom<u64> for Rri {
    type Error = String;

    fn try_from(v: u64) -> Result<Self, Self::Error> {
        match v {
            20 => Ok(Rri::Ms20),
            50 => Ok(Rri::Ms50),
            100 => Ok(Rri::Ms100),
            other => Err(format!("RRI must be one of 20, 50, 100 (got {other})")),
        }
    }
}

impl From<Rri> for u64 {
    fn from(r: Rri) -> u64 {
        r.slots()
    }
}

impl fmt::Display for Rri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.slots())
    }
}

/// Initial reselection counter for an RRI of `gamma` slots.
pub fn rc0_of(gamma: u64) -> Result<u32> {
    match gamma {
        1..=19 => Ok(50),
        20..=100 => Ok((1000.0 / gamma.max(20) as f64).round() as u32),
        _ => Err(Error::config("rri", format!("RRI {gamma} outside [1, 100]"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RadioMode {
    /// NR-V2X Mode 2: short sensing window, re-evaluation before first use.
    Nr,
    /// LTE-V2X Mode 4 stand-in: long sensing window, no re-evaluation.
    Lte,
}

impl fmt::Display for RadioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            RadioMode::Nr => "NR",
            RadioMode::Lte => "LTE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsParams {
    pub t1_slots: u64,
    pub n_sense_slots: u64,
    pub lte_sense_slots: u64,
    pub half_duplex_period_slots: u64,
    pub x_percent: u32,
    /// Probability of keeping the resource when the counter expires.
    pub p_rk: f64,
    pub rsrp_step_db: f64,
    pub n_subchannels: usize,
    pub mode: RadioMode,
}

impl Default for SpsParams {
    fn default() -> Self {
        Self {
            t1_slots: 2,
            n_sense_slots: 100,
            lte_sense_slots: 1000,
            half_duplex_period_slots: 100,
            x_percent: 20,
            p_rk: 0.4,
            rsrp_step_db: 3.0,
            n_subchannels: 5,
            mode: RadioMode::Nr,
        }
    }
}

impl SpsParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_rk) {
            return Err(Error::config("sps.p_rk", "must lie in [0, 1)"));
        }
        if ![20, 35, 50].contains(&self.x_percent) {
            return Err(Error::config("sps.x_percent", "must be 20, 35 or 50"));
        }
        if self.t1_slots >= Rri::Ms20.slots() {
            return Err(Error::config("sps.t1_slots", "must be smaller than the shortest RRI (20)"));
        }
        if self.n_subchannels == 0 {
            return Err(Error::config("sps.n_subchannels", "must be >= 1"));
        }
        if self.n_sense_slots == 0 || self.lte_sense_slots == 0 {
            return Err(Error::config("sps.n_sense_slots", "sensing windows must be >= 1 slot"));
        }
        if self.half_duplex_period_slots == 0 {
            return Err(Error::config("sps.half_duplex_period_slots", "must be >= 1"));
        }
        if !(self.rsrp_step_db > 0.0) {
            return Err(Error::config("sps.rsrp_step_db", "must be > 0"));
        }
        Ok(())
    }

    /// Sensing window length for the configured radio mode.
    pub fn sense_slots(&self) -> u64 {
        match self.mode {
            RadioMode::Nr => self.n_sense_slots,
            RadioMode::Lte => self.lte_sense_slots,
        }
    }
}

/// One (slot, subchannel) resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub slot: u64,
    pub subchannel: usize,
}

/// A decoded sidelink transmission as stored in the sensing history.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedTx {
    pub slot: u64,
    pub owner: usize,
    pub subchannel: usize,
    /// Advertised reservation period in slots.
    pub rri_slots: u64,
    /// Received power of this transmission at every vehicle, in watts.
    pub rx_power_w: Vec<f64>,
}

impl SensedTx {
    pub fn rsrp_dbm(&self, at: usize) -> f64 {
        watts_to_dbm(self.rx_power_w[at])
    }
}

/// Shared sensing history of one simulation run. Each vehicle reads it
/// through its own half-duplex lens (see [`ResourceGrid::sensing_view`]).
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    pub n_subchannels: usize,
    history_slots: u64,
    log: VecDeque<SensedTx>,
}

/// The slice of the history one vehicle can use at a decision slot.
#[derive(Debug, Clone)]
pub struct SensingView<'a> {
    pub vehicle: usize,
    /// Inclusive sensing window `[from, to]`.
    pub from: u64,
    pub to: u64,
    txs: Vec<&'a SensedTx>,
}

impl ResourceGrid {
    pub fn new(n_subchannels: usize, history_slots: u64) -> Self {
        Self { n_subchannels, history_slots, log: VecDeque::new() }
    }

    pub fn record(&mut self, tx: SensedTx) {
        debug_assert!(self.log.back().is_none_or(|last| last.slot <= tx.slot));
        self.log.push_back(tx);
    }

    /// Drops history older than the longest sensing window relative to `now`.
    pub fn prune(&mut self, now: u64) {
        let oldest = now.saturating_sub(self.history_slots);
        while self.log.front().is_some_and(|tx| tx.slot < oldest) {
            self.log.pop_front();
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &SensedTx> {
        self.log.iter()
    }

    /// Transmissions in `[now - sense_slots, now - 1]`.
    pub fn sensing_view(&self, vehicle: usize, now: u64, sense_slots: u64) -> SensingView<'_> {
        let from = now.saturating_sub(sense_slots);
        let to = now.saturating_sub(1);
        let txs = if now == 0 {
            Vec::new()
        } else {
            self.log.iter().filter(|tx| tx.slot >= from && tx.slot <= to).collect()
        };
        SensingView { vehicle, from, to, txs }
    }
}

impl SensingView<'_> {
    fn own_slots(&self) -> Vec<u64> {
        let mut slots: Vec<u64> = self.txs.iter().filter(|t| t.owner == self.vehicle).map(|t| t.slot).collect();
        slots.dedup();
        slots
    }

    /// Transmissions by others the vehicle could hear (it was not
    /// transmitting itself in that slot).
    fn audible(&self) -> impl Iterator<Item = &SensedTx> {
        let own = self.own_slots();
        self.txs
            .iter()
            .copied()
            .filter(move |t| t.owner != self.vehicle && own.binary_search(&t.slot).is_err())
    }

    fn max_rsrp_dbm(&self) -> Option<f64> {
        self.audible().map(|t| t.rsrp_dbm(self.vehicle)).reduce(f64::max)
    }
}

/// `Z_A`: every subchannel of every slot in `[now + T1, now + gamma]`.
pub fn build_candidate_set(n_subchannels: usize, t1_slots: u64, gamma: u64, now: u64) -> Result<Vec<Cell>> {
    if t1_slots >= gamma {
        return Err(Error::config("sps.t1_slots", format!("T1 ({t1_slots}) must be below the RRI ({gamma})")));
    }
    Ok(window_cells(n_subchannels, now + t1_slots, now + gamma))
}

fn window_cells(n_subchannels: usize, first: u64, last: u64) -> Vec<Cell> {
    (first..=last)
        .flat_map(|slot| (0..n_subchannels).map(move |subchannel| Cell { slot, subchannel }))
        .collect()
}

/// Projects `from` forward by multiples of `period` onto `[lo, hi]`.
fn projections(from: u64, period: u64, lo: u64, hi: u64) -> impl Iterator<Item = u64> {
    let first = if lo <= from {
        from + period
    } else {
        let k = (lo - from).div_ceil(period);
        from + k * period
    };
    (0..)
        .map(move |k| first + k * period)
        .take_while(move |&c| c <= hi)
}

/// Cells excluded by the half-duplex rule alone.
fn half_duplex_slots(view: &SensingView<'_>, period: u64, lo: u64, hi: u64) -> HashSet<u64> {
    view.own_slots().into_iter().flat_map(|s| projections(s, period, lo, hi)).collect()
}

/// Removes half-duplex-blind slots and cells whose projected sensed
/// reservations reach `rsrp_th_dbm`. Order of `candidates` is preserved.
pub fn exclude_candidates(
    view: &SensingView<'_>,
    candidates: &[Cell],
    rsrp_th_dbm: f64,
    half_duplex_period: u64,
) -> Vec<Cell> {
    let Some((lo, hi)) = slot_span(candidates) else {
        return Vec::new();
    };
    let blind = half_duplex_slots(view, half_duplex_period, lo, hi);
    let mut busy: HashSet<Cell> = HashSet::new();
    for tx in view.audible() {
        if tx.rsrp_dbm(view.vehicle) >= rsrp_th_dbm {
            for slot in projections(tx.slot, tx.rri_slots, lo, hi) {
                busy.insert(Cell { slot, subchannel: tx.subchannel });
            }
        }
    }
    candidates
        .iter()
        .filter(|c| !blind.contains(&c.slot) && !busy.contains(c))
        .copied()
        .collect()
}

fn slot_span(cells: &[Cell]) -> Option<(u64, u64)> {
    let lo = cells.iter().map(|c| c.slot).min()?;
    let hi = cells.iter().map(|c| c.slot).max()?;
    Some((lo, hi))
}

/// Outcome of the exclusion / threshold-relaxation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Screening {
    pub candidates: usize,
    pub required: usize,
    pub remaining: Vec<Cell>,
    pub threshold_raises: u32,
    pub final_threshold_dbm: f64,
    /// Even with the threshold fully relaxed fewer than X% survived.
    pub saturated: bool,
}

/// Runs exclusion, raising the threshold by `rsrp_step_db` until at least
/// `x_percent` of `candidates` remain.
pub fn screen_candidates(
    view: &SensingView<'_>,
    candidates: &[Cell],
    params: &SpsParams,
    rsrp_th_dbm: f64,
) -> Screening {
    let required = (candidates.len() * params.x_percent as usize).div_ceil(100);
    let ceiling = view.max_rsrp_dbm();
    let mut threshold = rsrp_th_dbm;
    let mut raises = 0;
    loop {
        let remaining = exclude_candidates(view, candidates, threshold, params.half_duplex_period_slots);
        if remaining.len() >= required {
            return Screening {
                candidates: candidates.len(),
                required,
                remaining,
                threshold_raises: raises,
                final_threshold_dbm: threshold,
                saturated: false,
            };
        }
        // once the threshold is above every measurement only half-duplex
        // exclusions are left and raising further changes nothing
        if ceiling.is_none_or(|c| threshold > c) {
            let fallback = if remaining.is_empty() { candidates.to_vec() } else { remaining };
            log::debug!(
                "vehicle {}: selection saturated ({} of {} left, {} required)",
                view.vehicle,
                fallback.len(),
                candidates.len(),
                required
            );
            return Screening {
                candidates: candidates.len(),
                required,
                remaining: fallback,
                threshold_raises: raises,
                final_threshold_dbm: threshold,
                saturated: true,
            };
        }
        threshold += params.rsrp_step_db;
        raises += 1;
    }
}

/// A vehicle's semi-persistent grant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub owner: usize,
    /// Slot at which the selection was made (`z_n`).
    pub selected_at: u64,
    /// First reserved slot (`z_new`).
    pub start_slot: u64,
    pub subchannel: usize,
    pub rri: Rri,
    pub rc_remaining: u32,
    pub rc0: u32,
    pub tx_power_w: f64,
    /// Next reserved transmit slot.
    pub next_tx: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxOutcome {
    /// Transmit; more reserved opportunities follow.
    Transmit,
    /// Transmit; this was the last use and the counter is now 0.
    CounterExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeepDecision {
    Keep,
    Reselect,
}

impl Reservation {
    pub fn new(owner: usize, selected_at: u64, cell: Cell, rri: Rri, tx_power_w: f64) -> Self {
        let rc0 = rc0_of(rri.slots()).expect("every Rri is in range");
        Self {
            owner,
            selected_at,
            start_slot: cell.slot,
            subchannel: cell.subchannel,
            rri,
            rc_remaining: rc0,
            rc0,
            tx_power_w,
            next_tx: cell.slot,
        }
    }

    pub fn cell(&self) -> Cell {
        Cell { slot: self.start_slot, subchannel: self.subchannel }
    }

    pub fn on_transmit_opportunity(&mut self, slot: u64) -> Result<TxOutcome> {
        if slot != self.next_tx || self.rc_remaining == 0 {
            return Err(Error::OffSchedule { vehicle: self.owner, slot, expected: self.next_tx });
        }
        self.rc_remaining -= 1;
        self.next_tx += self.rri.slots();
        Ok(if self.rc_remaining == 0 { TxOutcome::CounterExpired } else { TxOutcome::Transmit })
    }

    /// Keeps the same resource with probability `p_rk` (counter reset to
    /// `rc0`); otherwise signals that a fresh selection is needed.
    pub fn reselect_or_keep<R: Rng + ?Sized>(&mut self, p_rk: f64, rng: &mut R) -> KeepDecision {
        debug_assert_eq!(self.rc_remaining, 0);
        if rng.random::<f64>() < p_rk {
            self.rc_remaining = self.rc0;
            KeepDecision::Keep
        } else {
            KeepDecision::Reselect
        }
    }
}

/// Result of a fresh selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub vehicle: usize,
    pub slot: u64,
    pub rri: Rri,
    pub chosen: Cell,
    pub candidates: usize,
    pub remaining: usize,
    pub threshold_raises: u32,
    pub saturated: bool,
}

/// Sensing-based selection with the window `[now + T1, now + gamma]`.
#[allow(clippy::too_many_arguments)]
pub fn select_resource<R: Rng + ?Sized>(
    grid: &ResourceGrid,
    vehicle: usize,
    rri: Rri,
    now: u64,
    tx_power_w: f64,
    params: &SpsParams,
    rsrp_th_dbm: f64,
    rng: &mut R,
) -> Result<(Reservation, SelectionReport)> {
    let candidates = build_candidate_set(grid.n_subchannels, params.t1_slots, rri.slots(), now)?;
    let view = grid.sensing_view(vehicle, now, params.sense_slots());
    let screening = screen_candidates(&view, &candidates, params, rsrp_th_dbm);
    let chosen = *screening.remaining.choose(rng).expect("screening never returns an empty set");
    let report = SelectionReport {
        vehicle,
        slot: now,
        rri,
        chosen,
        candidates: screening.candidates,
        remaining: screening.remaining.len(),
        threshold_raises: screening.threshold_raises,
        saturated: screening.saturated,
    };
    Ok((Reservation::new(vehicle, now, chosen, rri, tx_power_w), report))
}

/// LTE Mode 4 stand-in: the same pipeline over the long sensing window.
/// Re-evaluation never runs for these reservations.
#[allow(clippy::too_many_arguments)]
pub fn lte_mode4_select<R: Rng + ?Sized>(
    grid: &ResourceGrid,
    vehicle: usize,
    rri: Rri,
    now: u64,
    tx_power_w: f64,
    params: &SpsParams,
    rsrp_th_dbm: f64,
    rng: &mut R,
) -> Result<(Reservation, SelectionReport)> {
    if params.mode != RadioMode::Lte {
        return Err(Error::Invalid("lte_mode4_select called with radio mode NR".into()));
    }
    select_resource(grid, vehicle, rri, now, tx_power_w, params, rsrp_th_dbm, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reevaluation {
    Confirm,
    Moved { from: Cell, to: Cell },
    /// The held cell is excluded but nothing in `SW'` survived; kept as is.
    Conflict,
}

/// Re-checks a not-yet-used reservation at `z_g` over `SW' = [z_g + T1,
/// selected_at + gamma]` and moves it when its cell is now excluded.
pub fn reevaluate<R: Rng + ?Sized>(
    grid: &ResourceGrid,
    reservation: &mut Reservation,
    z_g: u64,
    params: &SpsParams,
    rsrp_th_dbm: f64,
    rng: &mut R,
) -> Result<Reevaluation> {
    if params.mode != RadioMode::Nr {
        return Err(Error::Invalid("re-evaluation is an NR Mode 2 mechanism".into()));
    }
    if z_g >= reservation.start_slot || reservation.next_tx != reservation.start_slot {
        return Err(Error::Invalid(format!(
            "re-evaluation at {z_g} after first use of reservation starting {}",
            reservation.start_slot
        )));
    }
    let first = z_g + params.t1_slots;
    let last = reservation.selected_at + reservation.rri.slots();
    if first > last {
        return Ok(Reevaluation::Confirm);
    }
    let candidates = window_cells(grid.n_subchannels, first, last);
    let view = grid.sensing_view(reservation.owner, z_g, params.sense_slots());
    let screening = screen_candidates(&view, &candidates, params, rsrp_th_dbm);
    let held = reservation.cell();
    if !candidates.contains(&held) || screening.remaining.contains(&held) {
        return Ok(Reevaluation::Confirm);
    }
    let options: Vec<Cell> = if screening.saturated {
        // fallback sets are not real availability information
        exclude_candidates(&view, &candidates, screening.final_threshold_dbm, params.half_duplex_period_slots)
    } else {
        screening.remaining
    };
    match options.choose(rng) {
        Some(&to) => {
            reservation.start_slot = to.slot;
            reservation.next_tx = to.slot;
            reservation.subchannel = to.subchannel;
            Ok(Reevaluation::Moved { from: held, to })
        }
        None => {
            log::debug!("vehicle {}: re-evaluation found no free resource in SW'", reservation.owner);
            Ok(Reevaluation::Conflict)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tx(slot: u64, owner: usize, subchannel: usize, rri: u64, dbm_at: &[f64]) -> SensedTx {
        SensedTx {
            slot,
            owner,
            subchannel,
            rri_slots: rri,
            rx_power_w: dbm_at.iter().map(|&d| crate::units::dbm_to_watts(d)).collect(),
        }
    }

    #[test]
    fn rc0_branches() {
        assert_eq!(rc0_of(20).unwrap(), 50);
        assert_eq!(rc0_of(50).unwrap(), 20);
        assert_eq!(rc0_of(100).unwrap(), 10);
        assert_eq!(rc0_of(10).unwrap(), 50);
        assert_eq!(rc0_of(1).unwrap(), 50);
        assert_eq!(rc0_of(30).unwrap(), 33);
        assert!(rc0_of(0).is_err());
        assert!(rc0_of(101).is_err());
    }

    #[test]
    fn rri_serde_closure() {
        assert_eq!(serde_json::to_string(&Rri::Ms50).unwrap(), "50");
        assert_eq!(serde_json::from_str::<Rri>("100").unwrap(), Rri::Ms100);
        assert!(serde_json::from_str::<Rri>("30").is_err());
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(build_candidate_set(3, 2, 20, 1000).unwrap().len(), 57);
        let c = build_candidate_set(1, 1, 100, 0).unwrap();
        assert_eq!(c.len(), 100);
        assert_eq!(c.first().unwrap().slot, 1);
        assert_eq!(c.last().unwrap().slot, 100);
        assert!(build_candidate_set(3, 20, 20, 0).is_err());
    }

    #[test]
    fn candidate_set_is_the_double_loop() {
        let got = build_candidate_set(5, 2, 50, 321).unwrap();
        let mut naive = Vec::new();
        for slot in 321 + 2..=321 + 50 {
            for subchannel in 0..5 {
                naive.push(Cell { slot, subchannel });
            }
        }
        assert_eq!(got, naive);
    }

    #[test]
    fn quiet_history_excludes_nothing() {
        let mut grid = ResourceGrid::new(3, 100);
        grid.record(tx(950, 1, 0, 100, &[-140.0, -30.0]));
        let z = build_candidate_set(3, 2, 20, 1000).unwrap();
        let view = grid.sensing_view(0, 1000, 100);
        assert_eq!(exclude_candidates(&view, &z, -126.0, 100), z);
    }

    #[test]
    fn strong_periodic_interferer_blocks_its_projections() {
        let mut grid = ResourceGrid::new(3, 100);
        // vehicle 1 reserves subchannel 2 every 20 slots, heard at -120 dBm
        for s in [905, 925, 945, 965, 985] {
            grid.record(tx(s, 1, 2, 20, &[-120.0, -30.0]));
        }
        let z = build_candidate_set(3, 2, 20, 1000).unwrap();
        let view = grid.sensing_view(0, 1000, 100);
        let left = exclude_candidates(&view, &z, -126.0, 100);
        assert_eq!(left.len(), 56);
        assert!(!left.contains(&Cell { slot: 1005, subchannel: 2 }));
        assert!(left.contains(&Cell { slot: 1005, subchannel: 1 }));
    }

    #[test]
    fn own_transmission_blanks_corresponding_slot() {
        let mut grid = ResourceGrid::new(3, 100);
        grid.record(tx(910, 0, 1, 100, &[-30.0, -90.0]));
        let z = build_candidate_set(3, 2, 20, 1000).unwrap();
        let view = grid.sensing_view(0, 1000, 100);
        let left = exclude_candidates(&view, &z, -126.0, 100);
        assert_eq!(left.len(), 54);
        assert!(left.iter().all(|c| c.slot != 1010));
    }

    #[test]
    fn own_slot_hides_others_in_that_slot() {
        let mut grid = ResourceGrid::new(3, 100);
        grid.record(tx(950, 0, 0, 100, &[-30.0, -90.0]));
        grid.record(tx(950, 1, 2, 20, &[-100.0, -30.0]));
        let z = build_candidate_set(3, 2, 20, 1000).unwrap();
        let view = grid.sensing_view(0, 1000, 100);
        // vehicle 1 was unheard, so only the half-duplex rule applies (slot 1050 is outside Z_A)
        assert_eq!(exclude_candidates(&view, &z, -126.0, 100), z);
    }

    #[test]
    fn threshold_loop_one_raise() {
        // every cell of a 1-subchannel window sensed at -124 dBm: excluded at
        // -126, all back after one 3 dB raise to -123
        let mut grid = ResourceGrid::new(1, 100);
        for s in 902..=920 {
            grid.record(tx(s, 1 + (s as usize % 3), 0, 100, &[-124.0, -30.0, -30.0, -30.0]));
        }
        let z = build_candidate_set(1, 2, 20, 1000).unwrap();
        let params = SpsParams { n_subchannels: 1, ..Default::default() };
        let view = grid.sensing_view(0, 1000, 100);
        let s = screen_candidates(&view, &z, &params, -126.0);
        assert_eq!(s.threshold_raises, 1);
        assert_eq!(s.remaining.len(), 19);
        assert!(!s.saturated);
    }

    #[test]
    fn x_percent_requirement() {
        let z = build_candidate_set(3, 2, 20, 1000).unwrap();
        let grid = ResourceGrid::new(3, 100);
        let view = grid.sensing_view(0, 1000, 100);
        let s = screen_candidates(&view, &z, &SpsParams::default(), -126.0);
        assert_eq!(s.required, 12);
    }

    #[test]
    fn half_duplex_saturation_falls_back() {
        // own transmissions blank every candidate slot
        let mut grid = ResourceGrid::new(2, 100);
        for s in 902..=920 {
            grid.record(tx(s, 0, 0, 20, &[-30.0]));
        }
        let z = build_candidate_set(2, 2, 20, 1000).unwrap();
        let view = grid.sensing_view(0, 1000, 100);
        let s = screen_candidates(&view, &z, &SpsParams::default(), -126.0);
        assert!(s.saturated);
        assert_eq!(s.remaining, z);
    }

    #[test]
    fn selection_is_seeded() {
        let grid = ResourceGrid::new(5, 100);
        let params = SpsParams::default();
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            select_resource(&grid, 0, Rri::Ms50, 10, 0.1, &params, -126.0, &mut rng).unwrap()
        };
        assert_eq!(pick(4), pick(4));
        let (r, report) = pick(4);
        assert_eq!(r.rc0, 20);
        assert_eq!(r.rc_remaining, 20);
        assert!(r.start_slot >= 12 && r.start_slot <= 60);
        assert_eq!(report.candidates, 49 * 5);
    }

    #[test]
    fn counter_runs_out_after_rc0_uses() {
        let mut r = Reservation::new(0, 0, Cell { slot: 5, subchannel: 0 }, Rri::Ms100, 0.1);
        let mut slots = Vec::new();
        let mut outcomes = Vec::new();
        while r.rc_remaining > 0 {
            slots.push(r.next_tx);
            outcomes.push(r.on_transmit_opportunity(r.next_tx).unwrap());
        }
        assert_eq!(outcomes.len(), 10);
        assert_eq!(outcomes.iter().filter(|o| **o == TxOutcome::Transmit).count(), 9);
        assert_eq!(*outcomes.last().unwrap(), TxOutcome::CounterExpired);
        assert!(slots.windows(2).all(|w| w[1] - w[0] == 100));
        assert_eq!(slots[0], 5);
    }

    #[test]
    fn last_use_reports_expiry() {
        let mut r = Reservation::new(0, 0, Cell { slot: 5, subchannel: 0 }, Rri::Ms20, 0.1);
        r.rc_remaining = 1;
        assert_eq!(r.on_transmit_opportunity(5).unwrap(), TxOutcome::CounterExpired);
        assert!(r.on_transmit_opportunity(25).is_err());
    }

    #[test]
    fn off_schedule_is_an_error() {
        let mut r = Reservation::new(3, 0, Cell { slot: 5, subchannel: 0 }, Rri::Ms20, 0.1);
        assert!(matches!(
            r.on_transmit_opportunity(6),
            Err(Error::OffSchedule { vehicle: 3, slot: 6, expected: 5 })
        ));
    }

    #[test]
    fn keep_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut r = Reservation::new(0, 0, Cell { slot: 5, subchannel: 1 }, Rri::Ms50, 0.1);
        for _ in 0..100 {
            r.rc_remaining = 0;
            assert_eq!(r.reselect_or_keep(0.0, &mut rng), KeepDecision::Reselect);
        }
        let p = 0.8 - 1e-9;
        let mut keeps = 0;
        for _ in 0..10_000 {
            r.rc_remaining = 0;
            if r.reselect_or_keep(p, &mut rng) == KeepDecision::Keep {
                keeps += 1;
                assert_eq!(r.rc_remaining, r.rc0);
                assert_eq!(r.cell(), Cell { slot: 5, subchannel: 1 });
            }
        }
        assert!((keeps as f64 / 10_000.0 - p).abs() < 0.02);
    }

    #[test]
    fn reevaluation_confirms_quiet_resource() {
        let grid = ResourceGrid::new(3, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Reservation::new(0, 100, Cell { slot: 140, subchannel: 1 }, Rri::Ms50, 0.1);
        let out = reevaluate(&grid, &mut r, 138, &SpsParams::default(), -126.0, &mut rng).unwrap();
        assert_eq!(out, Reevaluation::Confirm);
        assert_eq!(r.start_slot, 140);
    }

    #[test]
    fn reevaluation_moves_away_from_new_conflict() {
        let mut grid = ResourceGrid::new(3, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Reservation::new(0, 100, Cell { slot: 140, subchannel: 1 }, Rri::Ms50, 0.1);
        // after our selection, vehicle 1 started a 20-slot reservation that lands on (140, 1)
        grid.record(tx(120, 1, 1, 20, &[-95.0, -30.0]));
        let out = reevaluate(&grid, &mut r, 138, &SpsParams::default(), -126.0, &mut rng).unwrap();
        match out {
            Reevaluation::Moved { from, to } => {
                assert_eq!(from, Cell { slot: 140, subchannel: 1 });
                assert!(to.slot >= 140 && to.slot <= 150);
                assert_ne!(to, from);
                assert_eq!(r.start_slot, to.slot);
                assert_eq!(r.next_tx, to.slot);
            }
            other => panic!("expected a move, got {other:?}"),
        }
    }

    #[test]
    fn lte_never_reevaluates() {
        let grid = ResourceGrid::new(3, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = SpsParams { mode: RadioMode::Lte, ..Default::default() };
        let mut r = Reservation::new(0, 100, Cell { slot: 140, subchannel: 1 }, Rri::Ms50, 0.1);
        assert!(reevaluate(&grid, &mut r, 138, &params, -126.0, &mut rng).is_err());
        assert!(lte_mode4_select(&grid, 0, Rri::Ms20, 0, 0.1, &SpsParams::default(), -126.0, &mut rng).is_err());
    }

    #[test]
    fn lte_and_nr_pick_the_same_cell_without_conflicts() {
        let grid = ResourceGrid::new(5, 1000);
        let nr = SpsParams::default();
        let lte = SpsParams { mode: RadioMode::Lte, ..Default::default() };
        let a = select_resource(&grid, 2, Rri::Ms100, 500, 0.1, &nr, -126.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = lte_mode4_select(&grid, 2, Rri::Ms100, 500, 0.1, &lte, -126.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn conflict_after_selection_lte_keeps_nr_moves() {
        let mut grid = ResourceGrid::new(2, 1000);
        let nr = SpsParams { n_subchannels: 2, ..Default::default() };
        let lte = SpsParams { mode: RadioMode::Lte, ..nr.clone() };
        let held = Reservation::new(0, 1000, Cell { slot: 1040, subchannel: 1 }, Rri::Ms50, 0.1);
        // a neighbour whose 20-slot reservation lands on the held cell shows up
        grid.record(tx(1020, 1, 1, 20, &[-90.0, -30.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut nr_held = held.clone();
        let out = reevaluate(&grid, &mut nr_held, 1038, &nr, -126.0, &mut rng).unwrap();
        assert!(matches!(out, Reevaluation::Moved { .. }));
        assert_ne!(nr_held.cell(), held.cell());
        let mut lte_held = held.clone();
        assert!(reevaluate(&grid, &mut lte_held, 1038, &lte, -126.0, &mut rng).is_err());
        assert_eq!(lte_held, held);
    }

    #[test]
    fn reevaluation_after_first_use_is_rejected() {
        let grid = ResourceGrid::new(3, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut r = Reservation::new(0, 100, Cell { slot: 140, subchannel: 1 }, Rri::Ms50, 0.1);
        r.on_transmit_opportunity(140).unwrap();
        assert!(reevaluate(&grid, &mut r, 150, &SpsParams::default(), -126.0, &mut rng).is_err());
    }

    #[test]
    fn prune_keeps_window() {
        let mut grid = ResourceGrid::new(1, 100);
        for s in 0..300 {
            grid.record(tx(s, 0, 0, 20, &[-30.0]));
        }
        grid.prune(300);
        assert_eq!(grid.history().next().unwrap().slot, 200);
        assert_eq!(grid.history().count(), 100);
    }

    /// Direct replay of the sensing history, candidate by candidate.
    fn replay_oracle(grid: &ResourceGrid, vehicle: usize, now: u64, sense: u64, z: &[Cell], th: f64, hd: u64) -> Vec<Cell> {
        let from = now.saturating_sub(sense);
        let in_window: Vec<&SensedTx> = grid.history().filter(|t| t.slot >= from && t.slot < now).collect();
        z.iter()
            .filter(|c| {
                for t in &in_window {
                    let own_slot = in_window.iter().any(|o| o.owner == vehicle && o.slot == t.slot);
                    if t.owner == vehicle {
                        if c.slot > t.slot && (c.slot - t.slot) % hd == 0 {
                            return false;
                        }
                    } else if !own_slot
                        && t.subchannel == c.subchannel
                        && t.rsrp_dbm(vehicle) >= th
                        && c.slot > t.slot
                        && (c.slot - t.slot) % t.rri_slots == 0
                    {
                        return false;
                    }
                }
                true
            })
            .copied()
            .collect()
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn exclusion_matches_replay(
                seed in any::<u64>(),
                n_tx in 0usize..12,
                th in -130.0f64..-90.0,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (n_veh, n_sub, now) = (4usize, 3usize, 20u64);
                let mut txs: Vec<SensedTx> = (0..n_tx)
                    .map(|_| {
                        let dbm: Vec<f64> = (0..n_veh).map(|_| rng.random_range(-140.0..-80.0)).collect();
                        tx(rng.random_range(10..20), rng.random_range(0..n_veh), rng.random_range(0..n_sub), rng.random_range(1..8), &dbm)
                    })
                    .collect();
                txs.sort_by_key(|t| t.slot);
                let mut grid = ResourceGrid::new(n_sub, 10);
                for t in txs {
                    grid.record(t);
                }
                let z = build_candidate_set(n_sub, 1, 10, now).unwrap();
                for v in 0..n_veh {
                    let view = grid.sensing_view(v, now, 10);
                    let fast = exclude_candidates(&view, &z, th, 10);
                    let slow = replay_oracle(&grid, v, now, 10, &z, th, 10);
                    prop_assert_eq!(fast, slow);
                }
            }

            #[test]
            fn raising_threshold_never_shrinks_remaining(seed in any::<u64>(), th in -130.0f64..-90.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut grid = ResourceGrid::new(3, 100);
                for s in 0..100u64 {
                    if rng.random_bool(0.5) {
                        let dbm: Vec<f64> = (0..4).map(|_| rng.random_range(-140.0..-80.0)).collect();
                        grid.record(tx(s, rng.random_range(0..4), rng.random_range(0..3), [20, 50, 100][rng.random_range(0..3)], &dbm));
                    }
                }
                let z = build_candidate_set(3, 2, 100, 100).unwrap();
                let view = grid.sensing_view(0, 100, 100);
                let a = exclude_candidates(&view, &z, th, 100).len();
                let b = exclude_candidates(&view, &z, th + 3.0, 100).len();
                prop_assert!(b >= a);
            }
        }
    }

}
