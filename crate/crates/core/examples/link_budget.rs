//! Received power, OMA SINR and SIC on one receiver with three co-slot
//! transmitters.

use sidelink_aoi::channel::{noise_power_in, path_loss, sic_decode, sinr_oma, ChannelParams, RxPowerEntry};
use sidelink_aoi::kpi::sinr_threshold;
use sidelink_aoi::units::watts_to_dbm;

fn main() {
    let params = ChannelParams::default();
    let subchannel_hz = params.bandwidth_hz / 5.0;
    let noise = noise_power_in(subchannel_hz, params.noise_figure_db);
    println!("noise in one 2 MHz subchannel: {:.1} dBm", watts_to_dbm(noise));

    let txs = [(0, 20.0, 0.2), (1, 60.0, 0.2), (2, 140.0, 0.1)];
    let entries: Vec<RxPowerEntry> = txs
        .iter()
        .map(|&(id, d, p)| RxPowerEntry { tx_id: id, rx_power: p / path_loss(&params, d), subchannel: 0 })
        .collect();
    for e in &entries {
        println!("tx {} at {:>5.0} m: {:.1} dBm", e.tx_id, txs[e.tx_id].1, watts_to_dbm(e.rx_power));
    }

    let eta = sinr_threshold(subchannel_hz, 2400.0, 1e-3);
    println!("SINR needed for 2400 bits in 1 ms: {:.2} ({:.1} dB)", eta, 10.0 * eta.log10());
    let sic = sic_decode(&entries, noise, params.overlap(), |s| s >= eta);
    for e in &entries {
        let oma = sinr_oma(e.tx_id, &entries, noise, params.overlap()).unwrap();
        let s = sic[&e.tx_id];
        println!("tx {}: OMA {:>8.3}  SIC {:>12.3}  decoded {}", e.tx_id, oma, s, s >= eta);
    }
}
