use rand_distr::{Distribution, StandardNormal};

use super::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::rng;

/// Noise power for a given signal power and SNR.
pub fn noise_power(signal_power: f64, snr_db: f64) -> f64 {
    signal_power * 10f64.powf(-snr_db / 10.0)
}

/// Add circular complex Gaussian noise at `snr_db` relative to the mean
/// power of `h`. `f64::INFINITY` returns `h` unchanged.
pub fn add_noise_at_snr(h: &ChannelTensor, snr_db: f64, seed: u64) -> Result<ChannelTensor> {
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("snr_db is NaN".into()));
    }
    let p = h.mean_power();
    if p <= 0.0 {
        return Err(Error::Contract("cannot add noise at a given SNR to an all-zero channel".into()));
    }
    let mut out = h.clone();
    out.meta.snr_db = Some(snr_db);
    if snr_db == f64::INFINITY {
        return Ok(out);
    }
    let sigma = (noise_power(p, snr_db) / 2.0).sqrt();
    let mut r = rng::stream(seed, 0x0153);
    for x in out.values_mut().data_mut() {
        let n: f64 = StandardNormal.sample(&mut r);
        *x = (*x as f64 + sigma * n) as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn ones(n: usize) -> ChannelTensor {
        let v = Tensor::from_fn([1, 1, n, 2], |i| if i % 2 == 0 { 1.0 } else { 0.0 });
        ChannelTensor::from_values(v).unwrap()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let h = ones(8);
        let y = add_noise_at_snr(&h, f64::INFINITY, 1).unwrap();
        assert_eq!(y.values(), h.values());
    }

    #[test]
    fn zero_channel_rejected() {
        let z = ChannelTensor::from_values(Tensor::zeros([1, 1, 4, 2])).unwrap();
        assert!(add_noise_at_snr(&z, 0.0, 0).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let h = ones(64);
        let a = add_noise_at_snr(&h, 5.0, 9).unwrap();
        let b = add_noise_at_snr(&h, 5.0, 9).unwrap();
        assert_eq!(a.values(), b.values());
    }
}
