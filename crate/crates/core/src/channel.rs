//! Link budget, interference and per-message SINR.
//!
//! Received power follows `C = h_s * h * p / L_d(d)`: `h_s` is unit-mean
//! exponential (Rayleigh power) fading redrawn per transmission, `h` is
//! log-normal shadowing with exponential spatial decorrelation, and `L_d` is a
//! log-distance law anchored at the 1 m free-space loss of the carrier.
//!
//! Two receivers are modelled. Plain (OMA) reception treats every other
//! co-slot signal as interference weighted by its overlap `sigma`. NOMA
//! reception runs successive interference cancellation: messages are decoded
//! strongest first and each successfully decoded signal is subtracted before
//! the next one is attempted.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{db_to_linear, dbm_to_watts};

/// Thermal noise density in dBm/Hz.
pub const THERMAL_DENSITY_DBM_HZ: f64 = -174.0;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub shadow_std_db: f64,
    pub decorr_dist_m: f64,
    pub pathloss_exponent: f64,
    /// Loss at 1 m; `None` uses free space at `carrier_ghz`.
    pub pathloss_ref_db: Option<f64>,
    pub rsrp_threshold_dbm: f64,
    /// In-band emission leakage onto an adjacent subchannel.
    pub adjacent_leakage_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_ghz: 5.9,
            bandwidth_hz: 10e6,
            noise_figure_db: 9.0,
            shadow_std_db: 3.0,
            decorr_dist_m: 25.0,
            pathloss_exponent: 2.75,
            pathloss_ref_db: None,
            rsrp_threshold_dbm: -126.0,
            adjacent_leakage_db: -30.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("channel.bandwidth_hz", "must be > 0"));
        }
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::config("channel.shadow_std_db", "must be >= 0"));
        }
        if !(self.decorr_dist_m > 0.0) {
            return Err(Error::config("channel.decorr_dist_m", "must be > 0"));
        }
        if !(self.carrier_ghz > 0.0) {
            return Err(Error::config("channel.carrier_ghz", "must be > 0"));
        }
        if !(self.pathloss_exponent >= 0.0) {
            return Err(Error::config("channel.pathloss_exponent", "must be >= 0"));
        }
        Ok(())
    }

    /// Free-space loss at 1 m, `20 log10(4 pi f / c)`.
    pub fn free_space_ref_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * self.carrier_ghz * 1e9 / SPEED_OF_LIGHT).log10()
    }

    pub fn reference_loss_db(&self) -> f64 {
        self.pathloss_ref_db.unwrap_or_else(|| self.free_space_ref_db())
    }

    pub fn adjacent_leakage(&self) -> f64 {
        db_to_linear(self.adjacent_leakage_db)
    }

    pub fn overlap(&self) -> Overlap {
        Overlap { adjacent: self.adjacent_leakage() }
    }
}

/// Noise power over the full configured bandwidth, in watts.
pub fn noise_power(params: &ChannelParams) -> f64 {
    noise_power_in(params.bandwidth_hz, params.noise_figure_db)
}

pub fn noise_power_in(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    dbm_to_watts(THERMAL_DENSITY_DBM_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db)
}

/// Log-distance attenuation `ref * d^n` as a linear ratio (>= 1 for any
/// sensible reference). Distances below 1 m are floored to 1 m.
pub fn path_loss(params: &ChannelParams, d_m: f64) -> f64 {
    let d = if d_m <= 0.0 {
        log::warn!("path_loss: non-positive distance {d_m} m clamped to 1 m");
        1.0
    } else {
        d_m.max(1.0)
    };
    db_to_linear(params.reference_loss_db()) * d.powf(params.pathloss_exponent)
}

/// Spatially correlated log-normal shadowing on one link (Gudmundson):
/// moving `dd` metres multiplies the correlation by `exp(-dd / decorr)`
/// while the marginal stays `N(0, std^2)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shadowing {
    pub value_db: f64,
    std_db: f64,
    decorr_m: f64,
}

impl Shadowing {
    pub fn new<R: Rng + ?Sized>(std_db: f64, decorr_m: f64, rng: &mut R) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        Self { value_db: std_db * z, std_db, decorr_m }
    }

    pub fn advance<R: Rng + ?Sized>(&mut self, displacement_m: f64, rng: &mut R) -> f64 {
        let rho = (-displacement_m.abs() / self.decorr_m).exp();
        if rho < 1.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.value_db = rho * self.value_db + (1.0 - rho * rho).sqrt() * self.std_db * z;
        }
        self.value_db
    }
}

/// Shadowing state for every unordered vehicle pair, advanced lazily by the
/// change in link length since the link was last used.
#[derive(Debug, Clone)]
pub struct ShadowingField {
    n: usize,
    links: Vec<Option<(Shadowing, f64)>>,
    std_db: f64,
    decorr_m: f64,
}

impl ShadowingField {
    pub fn new(n: usize, params: &ChannelParams) -> Self {
        Self { n, links: vec![None; n * n], std_db: params.shadow_std_db, decorr_m: params.decorr_dist_m }
    }

    /// Shadowing in dB on link `a <-> b` at the current link length.
    pub fn gain_db<R: Rng + ?Sized>(&mut self, a: usize, b: usize, distance_m: f64, rng: &mut R) -> f64 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let slot = &mut self.links[lo * self.n + hi];
        match slot {
            None => {
                let s = Shadowing::new(self.std_db, self.decorr_m, rng);
                *slot = Some((s, distance_m));
                s.value_db
            }
            Some((s, last)) => {
                let moved = (distance_m - *last).abs();
                *last = distance_m;
                s.advance(moved, rng)
            }
        }
    }
}

/// Unit-mean exponential power gain (Rayleigh amplitude).
pub fn draw_small_scale<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    /// `h`, linear, shadowing included.
    pub large_scale_gain: f64,
    /// `h_s`, linear.
    pub small_scale_gain: f64,
    /// `L_d(d)`, linear attenuation.
    pub path_loss: f64,
}

pub fn rx_power(tx_power_w: f64, link: &LinkSample) -> f64 {
    link.small_scale_gain * link.large_scale_gain * tx_power_w / link.path_loss
}

/// Interference coefficient between two subchannel allocations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub adjacent: f64,
}

impl Overlap {
    pub fn sigma(&self, a: usize, b: usize) -> f64 {
        overlap_sigma(a, b, self.adjacent)
    }
}

/// 1 on the same subchannel, `adjacent_leakage` next to it, 0 otherwise.
pub fn overlap_sigma(subch_a: usize, subch_b: usize, adjacent_leakage: f64) -> f64 {
    match subch_a.abs_diff(subch_b) {
        0 => 1.0,
        1 => adjacent_leakage,
        _ => 0.0,
    }
}

/// One co-slot signal as seen by a particular receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxPowerEntry {
    pub tx_id: usize,
    /// `C_{k->j}` in watts.
    pub rx_power: f64,
    pub subchannel: usize,
}

/// `I = sum_k sigma_{k,i} C_k` over `others`, which must not contain the
/// desired transmitter.
pub fn interference(desired: &RxPowerEntry, others: &[RxPowerEntry], overlap: Overlap) -> f64 {
    others
        .iter()
        .filter(|k| k.tx_id != desired.tx_id)
        .map(|k| overlap.sigma(k.subchannel, desired.subchannel) * k.rx_power)
        .sum()
}

/// SINR of `desired_tx` with every other entry treated as interference.
pub fn sinr_oma(desired_tx: usize, entries: &[RxPowerEntry], noise_w: f64, overlap: Overlap) -> Option<f64> {
    let desired = entries.iter().find(|e| e.tx_id == desired_tx)?;
    Some(desired.rx_power / (interference(desired, entries, overlap) + noise_w))
}

/// Successive interference cancellation at one receiver.
///
/// Signals are visited in descending received power (ties: lower `tx_id`
/// first). Each is decoded against the still-uncancelled signals; when
/// `decodable(sinr)` holds it is cancelled, otherwise it stays in the
/// interference of the remaining, weaker messages. Returns the SINR each
/// transmitter experienced at its decoding step.
pub fn sic_decode<F>(entries: &[RxPowerEntry], noise_w: f64, overlap: Overlap, decodable: F) -> BTreeMap<usize, f64>
where
    F: Fn(f64) -> bool,
{
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .rx_power
            .total_cmp(&entries[a].rx_power)
            .then(entries[a].tx_id.cmp(&entries[b].tx_id))
    });
    let mut cancelled = vec![false; entries.len()];
    let mut out = BTreeMap::new();
    for &i in &order {
        let desired = &entries[i];
        let interference: f64 = entries
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i && !cancelled[k])
            .map(|(_, e)| overlap.sigma(e.subchannel, desired.subchannel) * e.rx_power)
            .sum();
        let sinr = desired.rx_power / (interference + noise_w);
        if decodable(sinr) {
            cancelled[i] = true;
        }
        out.insert(desired.tx_id, sinr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{linear_to_db, watts_to_dbm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const NO_LEAK: Overlap = Overlap { adjacent: 0.0 };

    fn entry(tx_id: usize, rx_power: f64, subchannel: usize) -> RxPowerEntry {
        RxPowerEntry { tx_id, rx_power, subchannel }
    }

    #[test]
    fn noise_power_closed_forms() {
        let p = ChannelParams::default();
        assert!((watts_to_dbm(noise_power(&p)) - -95.0).abs() < 1e-9);
        assert!((watts_to_dbm(noise_power_in(1.0, 0.0)) - -174.0).abs() < 1e-9);
        let ratio = noise_power_in(20e6, 9.0) / noise_power_in(10e6, 9.0);
        assert!((linear_to_db(ratio) - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn path_loss_reference_and_slope() {
        let p = ChannelParams { pathloss_exponent: 2.0, ..Default::default() };
        let reference = db_to_linear(p.reference_loss_db());
        assert!((path_loss(&p, 1.0) / reference - 1.0).abs() < 1e-12);
        assert!((linear_to_db(path_loss(&p, 10.0) / reference) - 20.0).abs() < 1e-9);
        // clamp rather than blow up
        assert_eq!(path_loss(&p, 0.0), path_loss(&p, 1.0));
        assert_eq!(path_loss(&p, -3.0), path_loss(&p, 1.0));
    }

    #[test]
    fn free_space_reference_at_5_9_ghz() {
        let p = ChannelParams::default();
        assert!((p.free_space_ref_db() - 47.86).abs() < 0.01);
    }

    #[test]
    fn path_loss_is_monotone_on_grid() {
        let p = ChannelParams::default();
        let losses: Vec<f64> = (1..=500).map(|d| path_loss(&p, d as f64)).collect();
        assert!(losses.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn shadowing_zero_displacement_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = Shadowing::new(3.0, 25.0, &mut rng);
        let before = s.value_db;
        assert_eq!(s.advance(0.0, &mut rng), before);
    }

    #[test]
    fn shadowing_statistics() {
        // Monte-Carlo check of the Gudmundson model: stationary std and the
        // lag-25 m correlation e^-1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut s = Shadowing::new(3.0, 25.0, &mut rng);
        let step = 5.0;
        let samples: Vec<f64> = (0..100_000).map(|_| s.advance(step, &mut rng)).collect();
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - 3.0).abs() < 0.1, "std {}", var.sqrt());
        for (lag_m, tol) in [(5.0, 0.05), (25.0, 0.02), (50.0, 0.05)] {
            let lag = (lag_m / step) as usize;
            let cov = samples
                .iter()
                .zip(&samples[lag..])
                .map(|(a, b)| (a - mean) * (b - mean))
                .sum::<f64>()
                / (n - lag as f64);
            let corr = cov / var;
            let expected = (-lag_m / 25.0f64).exp();
            assert!((corr - expected).abs() < tol, "lag {lag_m}: {corr} vs {expected}");
        }
    }

    #[test]
    fn shadowing_field_is_reciprocal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut field = ShadowingField::new(4, &ChannelParams::default());
        let a = field.gain_db(1, 3, 100.0, &mut rng);
        let b = field.gain_db(3, 1, 100.0, &mut rng);
        assert_eq!(a, b);
    }

    #[test]
    fn rx_power_formula() {
        let unit = LinkSample { large_scale_gain: 1.0, small_scale_gain: 1.0, path_loss: 1.0 };
        assert_eq!(rx_power(1.0, &unit), 1.0);
        let link = LinkSample { large_scale_gain: 0.7, small_scale_gain: 1.9, path_loss: 3e9 };
        assert!((rx_power(0.2, &link) / rx_power(0.1, &link) - 2.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ChannelParams::default();
        for _ in 0..100 {
            let d: f64 = rng.random_range(1.0..250.0);
            let shadow_db: f64 = rng.random_range(-9.0..9.0);
            let h_s = draw_small_scale(&mut rng);
            let link = LinkSample {
                large_scale_gain: db_to_linear(shadow_db),
                small_scale_gain: h_s,
                path_loss: path_loss(&p, d),
            };
            let dbm = 23.0 + shadow_db + linear_to_db(h_s) - p.reference_loss_db() - 27.5 * d.log10();
            assert!((watts_to_dbm(rx_power(0.199_526_231_496_888, &link)) - dbm).abs() < 1e-9);
        }
    }

    #[test]
    fn overlap_levels() {
        let leak = ChannelParams::default().adjacent_leakage();
        assert_eq!(overlap_sigma(3, 3, leak), 1.0);
        assert_eq!(overlap_sigma(3, 5, leak), 0.0);
        assert!((overlap_sigma(3, 4, leak) - 0.001).abs() < 1e-15);
        assert!((overlap_sigma(4, 3, leak) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn interference_sums() {
        let d = entry(0, 1.0, 2);
        assert_eq!(interference(&d, &[], NO_LEAK), 0.0);
        assert!((interference(&d, &[entry(1, 2e-3, 2)], NO_LEAK) - 2e-3).abs() < 1e-18);
        let overlap = Overlap { adjacent: 0.001 };
        let others = [entry(1, 0.5, 2), entry(2, 0.25, 3), entry(3, 4.0, 4)];
        let oracle = 1.0 * 0.5 + 0.001 * 0.25 + 0.0 * 4.0;
        assert!((interference(&d, &others, overlap) - oracle).abs() < 1e-15);
    }

    #[test]
    fn oma_sinr_cases() {
        let pn = 1e-12;
        assert!((sinr_oma(0, &[entry(0, pn, 0)], pn, NO_LEAK).unwrap() - 1.0).abs() < 1e-12);
        let s = sinr_oma(0, &[entry(0, 1.0, 0), entry(1, 1e30, 0)], pn, NO_LEAK).unwrap();
        assert!(s < 1e-29);
        assert!(sinr_oma(7, &[entry(0, 1.0, 0)], pn, NO_LEAK).is_none());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let overlap = Overlap { adjacent: 0.001 };
        for _ in 0..200 {
            let entries: Vec<_> = (0..5)
                .map(|k| entry(k, rng.random_range(1e-12..1e-8), rng.random_range(0..5)))
                .collect();
            let mut i = 0.0;
            for k in 1..5 {
                i += overlap.sigma(entries[k].subchannel, entries[0].subchannel) * entries[k].rx_power;
            }
            let oracle = entries[0].rx_power / (i + pn);
            let got = sinr_oma(0, &entries, pn, overlap).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle);
        }
    }

    #[test]
    fn sic_single_message_matches_noise_limited_oma() {
        let pn = 2e-13;
        let e = [entry(4, 3e-12, 1)];
        let sic = sic_decode(&e, pn, NO_LEAK, |_| true);
        assert_eq!(sic[&4], sinr_oma(4, &e, pn, NO_LEAK).unwrap());
    }

    #[test]
    fn sic_two_step_hand_computation() {
        let pn = 1.0;
        let e = [entry(1, 4.0, 0), entry(2, 1.0, 0)];
        let sic = sic_decode(&e, pn, NO_LEAK, |s| s >= 1.5);
        assert!((sic[&1] - 2.0).abs() < 1e-15);
        assert!((sic[&2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sic_failed_message_stays_as_interference() {
        let pn = 1.0;
        let e = [entry(1, 4.0, 0), entry(2, 1.0, 0)];
        let sic = sic_decode(&e, pn, NO_LEAK, |s| s >= 3.0);
        assert!((sic[&1] - 2.0).abs() < 1e-15);
        assert!((sic[&2] - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn sic_tie_break_prefers_lower_id() {
        let pn = 1.0;
        let e = [entry(9, 2.0, 0), entry(3, 2.0, 0)];
        let sic = sic_decode(&e, pn, NO_LEAK, |_| true);
        assert!((sic[&3] - 2.0 / 3.0).abs() < 1e-15);
        assert!((sic[&9] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sic_without_overlap_is_noise_limited() {
        let e = [entry(0, 5.0, 0), entry(1, 3.0, 2), entry(2, 1.0, 4)];
        let sic = sic_decode(&e, 0.5, NO_LEAK, |_| false);
        for k in &e {
            assert_eq!(sic[&k.tx_id], k.rx_power / 0.5);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<RxPowerEntry>, f64, f64)> {
            (
                prop::collection::vec((1e-3f64..1e3, 0usize..4), 1..7),
                1e-3f64..10.0,
                0.5f64..8.0,
            )
                .prop_map(|(raw, pn, thr)| {
                    let entries = raw.into_iter().enumerate().map(|(k, (c, s))| entry(k, c, s)).collect();
                    (entries, pn, thr)
                })
        }

        proptest! {
            #[test]
            fn sic_never_below_oma((entries, pn, thr) in instance()) {
                let overlap = Overlap { adjacent: 0.01 };
                let sic = sic_decode(&entries, pn, overlap, |s| s >= thr);
                for e in &entries {
                    let oma = sinr_oma(e.tx_id, &entries, pn, overlap).unwrap();
                    prop_assert!(sic[&e.tx_id] >= oma);
                    prop_assert!(sic[&e.tx_id].is_finite() && sic[&e.tx_id] > 0.0);
                }
            }

            #[test]
            fn removing_an_interferer_never_hurts((entries, pn, thr) in instance()) {
                prop_assume!(entries.len() >= 2);
                let overlap = Overlap { adjacent: 0.01 };
                let fewer = &entries[..entries.len() - 1];
                let sic_all = sic_decode(&entries, pn, overlap, |s| s >= thr);
                let sic_fewer = sic_decode(fewer, pn, overlap, |s| s >= thr);
                for e in fewer {
                    let a = sinr_oma(e.tx_id, &entries, pn, overlap).unwrap();
                    let b = sinr_oma(e.tx_id, fewer, pn, overlap).unwrap();
                    prop_assert!(b >= a);
                    prop_assert!(sic_fewer[&e.tx_id] >= sic_all[&e.tx_id] * (1.0 - 1e-12));
                }
            }
        }
    }
}
