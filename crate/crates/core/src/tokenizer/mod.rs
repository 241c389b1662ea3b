//! Patch tokenization, positional encodings and random masking.

mod mask;
mod patch;
mod position;

pub use mask::{mask_count, plan_mask, MaskPlan};
pub use patch::{partition_patches, reassemble_patches, PaddingPolicy, PatchMatrix, PatchPos, PatchSpec};
pub use position::PositionalEncoding;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Embedded tokens `[N, d_model]` with their grid positions.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor<f32>,
    pub positions: Vec<PatchPos>,
    pub source_shape: (usize, usize, usize),
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn d_model(&self) -> usize {
        self.tokens.rows_cols().1
    }
}

/// `token = patch * W + PE_spatial(s) + PE_frequency(f)`.
pub fn embed_patches(patches: &PatchMatrix, weights: &Tensor<f32>, pe: &PositionalEncoding) -> Result<TokenSequence> {
    let width = patches.width();
    if weights.rank() != 2 || weights.shape()[0] != width || weights.shape()[1] != pe.d_model() {
        return Err(Error::shape(
            "embed_patches",
            format!("weights {:?} for raw width {width}, d_model {}", weights.shape(), pe.d_model()),
        ));
    }
    let mut tokens = patches.values.matmul(weights)?;
    tokens.add_assign(&pe.table(&patches.positions));
    Ok(TokenSequence { tokens, positions: patches.positions.clone(), source_shape: patches.source_shape })
}

/// Replace masked rows with `mask_token + PE(position)`.
pub fn apply_mask(
    seq: &TokenSequence,
    plan: &MaskPlan,
    mask_token: &[f32],
    pe: &PositionalEncoding,
) -> Result<TokenSequence> {
    let d = seq.d_model();
    if mask_token.len() != d {
        return Err(Error::shape("apply_mask", format!("mask token width {} vs d_model {d}", mask_token.len())));
    }
    if plan.n != seq.len() || plan.masked.iter().any(|&i| i >= seq.len()) {
        return Err(Error::Contract(format!("mask plan for {} tokens applied to {}", plan.n, seq.len())));
    }
    let mut out = seq.clone();
    for &i in &plan.masked {
        let code = pe.code(seq.positions[i]);
        for ((o, &m), c) in out.tokens.row_mut(i).iter_mut().zip(mask_token).zip(code) {
            *o = m + c;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chansim::ChannelTensor;

    fn setup() -> (ChannelTensor, PatchSpec, Tensor<f32>) {
        let h = ChannelTensor::from_values(Tensor::from_fn([8, 4, 8, 2], |i| (i as f32 * 0.37).cos())).unwrap();
        let spec = PatchSpec { d_model: 16, ..PatchSpec::communication() };
        let w = Tensor::from_fn([spec.raw_width(), 16], |i| ((i * 7919) % 13) as f32 * 0.01 - 0.06);
        (h, spec, w)
    }

    #[test]
    fn zero_patches_zero_pe_give_zero_tokens() {
        let (h, spec, w) = setup();
        let mut p = partition_patches(&h, &spec).unwrap();
        p.values = Tensor::zeros(p.values.shape().to_vec());
        let seq = embed_patches(&p, &w, &PositionalEncoding::disabled(16)).unwrap();
        assert!(seq.tokens.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn spatial_difference_is_pe_difference() {
        let (h, spec, w) = setup();
        let pe = PositionalEncoding::new(16);
        let mut p = partition_patches(&h, &spec).unwrap();
        let a = p.positions.iter().position(|q| *q == PatchPos { t: 0, s: 0, f: 1 }).unwrap();
        let b = p.positions.iter().position(|q| *q == PatchPos { t: 0, s: 1, f: 1 }).unwrap();
        let row = p.values.row(a).to_vec();
        p.values.row_mut(b).copy_from_slice(&row);
        let seq = embed_patches(&p, &w, &pe).unwrap();
        let (sa, sb) = (pe.spatial(0), pe.spatial(1));
        for j in 0..16 {
            let got = seq.tokens.row(b)[j] - seq.tokens.row(a)[j];
            assert!((got - (sb[j] - sa[j])).abs() < 1e-6);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let (h, spec, _) = setup();
        let p = partition_patches(&h, &spec).unwrap();
        assert!(embed_patches(&p, &Tensor::zeros([3, 16]), &PositionalEncoding::new(16)).is_err());
    }

    #[test]
    fn masking_rules() {
        let (h, spec, w) = setup();
        let pe = PositionalEncoding::new(16);
        let p = partition_patches(&h, &spec).unwrap();
        let seq = embed_patches(&p, &w, &pe).unwrap();
        let token = vec![0.25f32; 16];
        let same = apply_mask(&seq, &MaskPlan::empty(seq.len()), &token, &pe).unwrap();
        assert_eq!(same, seq);
        let full = apply_mask(&seq, &plan_mask(seq.len(), 1.0, 0).unwrap(), &token, &pe).unwrap();
        for i in 0..seq.len() {
            let code = pe.code(seq.positions[i]);
            assert!(full.tokens.row(i).iter().zip(code).all(|(&x, c)| x == 0.25 + c));
        }
        let bad = MaskPlan { masked: vec![999], ratio: 0.1, seed: 0, n: seq.len() };
        assert!(apply_mask(&seq, &bad, &token, &pe).is_err());
    }
}
