use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// Indices of tokens hidden from the encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPlan {
    /// Sorted, unique, all `< n`.
    pub masked: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
    pub n: usize,
}

impl MaskPlan {
    pub fn empty(n: usize) -> Self {
        MaskPlan { masked: Vec::new(), ratio: 0.0, seed: 0, n }
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    /// Boolean row mask of length `n`.
    pub fn row_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.masked {
            m[i] = true;
        }
        m
    }
}

/// Number of masked tokens: `round(ratio * n)`, halves rounded away from zero.
pub fn mask_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).min(n)
}

/// Uniform sample of `round(ratio * n)` distinct indices, deterministic in `seed`.
pub fn plan_mask(n: usize, ratio: f64, seed: u64) -> Result<MaskPlan> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let k = mask_count(n, ratio);
    let mut r = rng::stream(seed, 0x3a5c);
    let mut masked = index::sample(&mut r, n, k).into_vec();
    masked.sort_unstable();
    Ok(MaskPlan { masked, ratio, seed, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert!(plan_mask(128, 0.0, 1).unwrap().is_empty());
        assert_eq!(plan_mask(128, 0.4, 1).unwrap().masked.len(), 51);
        assert_eq!(plan_mask(10, 1.0, 1).unwrap().masked, (0..10).collect::<Vec<_>>());
        assert!(plan_mask(10, 1.5, 1).is_err());
    }

    #[test]
    fn deterministic_and_unique() {
        let a = plan_mask(64, 0.4, 9).unwrap();
        assert_eq!(a, plan_mask(64, 0.4, 9).unwrap());
        assert!(a.masked.windows(2).all(|w| w[0] < w[1]));
        assert!(a.masked.iter().all(|&i| i < 64));
    }
}
