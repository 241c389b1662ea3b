//! Draw a scatterer scene and synthesize its MIMO-OFDM channel.
//!
//! Usage: `cargo run --example simulate_channel [seed]`

use csifm::chansim::{generate_scene, synthesize_channel, ChannelConfig, SceneBounds};

fn main() -> csifm::Result<()> {
    let seed = std::env::args().nth(1).map_or(7, |s| s.parse().expect("integer seed"));
    let scene = generate_scene(seed, 12, SceneBounds::default())?;
    println!("tx at {:.1?}, rx at {:.1?}, {} paths", scene.tx, scene.rx_origin, scene.paths.len());

    let mut pdp = scene.power_delay_profile();
    pdp.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (delay, power) in pdp.iter().take(5) {
        println!("  delay {:>7.1} ns  power {power:.4}", delay * 1e9);
    }

    let mut cfg = ChannelConfig::estimation();
    cfg.velocity_mps = 30.0 / 3.6;
    println!("max doppler {:.1} Hz", cfg.max_doppler_hz());
    let h = synthesize_channel(&scene, &cfg, seed)?;
    let (t, s, f) = h.dims();
    println!("H is [{t}, {s}, {f}] complex, mean power {:.4}", h.mean_power());
    for slot in [0, t - 1] {
        let row: Vec<String> = (0..4).map(|k| format!("{:.3}", h.at(slot, 0, k))).collect();
        println!("  slot {slot}, antenna 0, subcarriers 0..4: {}", row.join("  "));
    }
    Ok(())
}
