//! dB / linear conversions. Everything crossing a module boundary in dB or
//! dBm is converted here; the simulator works in watts and linear ratios.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Returns `-inf` for zero power.
pub fn watts_to_dbm(w: f64) -> f64 {
    if w <= 0.0 {
        f64::NEG_INFINITY
    } else {
        linear_to_db(w) + 30.0
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}
