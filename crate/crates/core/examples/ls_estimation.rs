//! Least-squares pilot estimation against its closed-form error.

use csifm::chansim::{
    channel_matrix, corpus_sample, ls_estimate, ls_estimate_tensor, ls_expected_nmse, simulate_pilot_observation, CorpusConfig,
};
use csifm::pipeline::{nmse, PILOT_LENGTH};

fn main() -> csifm::Result<()> {
    let h = corpus_sample(0, 0, &CorpusConfig::default())?;
    let m = channel_matrix(&h, 0, 0);
    let signal = m.frobenius_sq() / m.rows as f64;

    println!("{:>6} {:>12} {:>12} {:>12}", "snr", "one matrix", "expected", "full tensor");
    for snr in [-5.0, 0.0, 5.0, 10.0, 20.0] {
        let noise_var = signal / 10f64.powf(snr / 10.0);
        let frame = simulate_pilot_observation(&m, PILOT_LENGTH, noise_var, 1)?;
        let est = ls_estimate(&frame)?;
        let err = est.data.iter().zip(&m.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / m.frobenius_sq();
        let expected = ls_expected_nmse(&m, &frame.pilots, noise_var)?;
        let full = ls_estimate_tensor(&h, PILOT_LENGTH, Some(snr), 2)?;
        println!("{snr:>6} {err:>12.5} {expected:>12.5} {:>12.5}", nmse(full.values(), h.values())?);
    }
    Ok(())
}
