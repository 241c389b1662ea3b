use super::patch::PatchPos;
use crate::numerics::Tensor;

/// Sinusoidal spatial and frequency encodings.
///
/// The spatial code occupies the first half of the embedding and the
/// frequency code the second half, so their sum determines both indices.
/// There is no temporal term: temporal order is imposed by causal attention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionalEncoding {
    d_model: usize,
    enabled: bool,
}

const BASE: f64 = 10_000.0;

impl PositionalEncoding {
    pub fn new(d_model: usize) -> Self {
        PositionalEncoding { d_model, enabled: true }
    }

    /// All-zero encoding, for tests that isolate the patch projection.
    pub fn disabled(d_model: usize) -> Self {
        PositionalEncoding { d_model, enabled: false }
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    fn half_code(&self, pos: usize, out: &mut [f32]) {
        let h = out.len();
        for (i, o) in out.iter_mut().enumerate() {
            let k = (i / 2) as f64;
            let rate = 1.0 / BASE.powf(2.0 * k / h as f64);
            let a = pos as f64 * rate;
            *o = if i % 2 == 0 { a.sin() } else { a.cos() } as f32;
        }
    }

    pub fn spatial(&self, s: usize) -> Vec<f32> {
        let mut v = vec![0f32; self.d_model];
        if self.enabled {
            let h = self.d_model / 2;
            self.half_code(s, &mut v[..h]);
        }
        v
    }

    pub fn frequency(&self, f: usize) -> Vec<f32> {
        let mut v = vec![0f32; self.d_model];
        if self.enabled {
            let h = self.d_model / 2;
            self.half_code(f, &mut v[h..]);
        }
        v
    }

    /// `spatial(s) + frequency(f)`.
    pub fn code(&self, p: PatchPos) -> Vec<f32> {
        self.spatial(p.s).iter().zip(self.frequency(p.f)).map(|(a, b)| a + b).collect()
    }

    /// `[N, d_model]` table for a position list.
    pub fn table(&self, positions: &[PatchPos]) -> Tensor<f32> {
        let data = positions.iter().flat_map(|&p| self.code(p)).collect();
        Tensor::new([positions.len(), self.d_model], data).expect("table shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn spatial_and_frequency_halves_are_disjoint() {
        let pe = PositionalEncoding::new(16);
        assert!(pe.spatial(3)[8..].iter().all(|&x| x == 0.0));
        assert!(pe.frequency(3)[..8].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn codes_are_injective_over_grid() {
        let pe = PositionalEncoding::new(16);
        let mut seen = HashSet::new();
        for s in 0..64 {
            for f in 0..64 {
                let key: Vec<u32> = pe.code(PatchPos { t: 0, s, f }).iter().map(|x| x.to_bits()).collect();
                assert!(seen.insert(key), "collision at ({s}, {f})");
            }
        }
    }

    #[test]
    fn disabled_is_zero() {
        let pe = PositionalEncoding::disabled(8);
        assert!(pe.code(PatchPos { t: 1, s: 2, f: 3 }).iter().all(|&x| x == 0.0));
    }
}
