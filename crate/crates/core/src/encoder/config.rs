use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{PaddingPolicy, PatchSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub patch: PatchSpec,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub mask_ratio: f64,
    /// Dropout on token embeddings during pretraining.
    pub dropout: f64,
}

impl EncoderConfig {
    /// Desk-scale default: width 128, 4 layers, 4 heads, about 680K parameters.
    pub fn desk() -> Self {
        EncoderConfig {
            patch: PatchSpec::communication(),
            layers: 4,
            heads: 4,
            ff_width: 384,
            mask_ratio: 0.4,
            dropout: 0.0,
        }
    }

    /// Width 64 over the `72`-token activity grid.
    pub fn activity() -> Self {
        EncoderConfig { patch: PatchSpec::activity(), layers: 2, heads: 4, ff_width: 128, mask_ratio: 0.4, dropout: 0.0 }
    }

    /// One-layer model for fast tests.
    pub fn tiny() -> Self {
        EncoderConfig {
            patch: PatchSpec { time: 2, space: 2, freq: 2, d_model: 16, padding: PaddingPolicy::ZeroPad },
            layers: 1,
            heads: 2,
            ff_width: 32,
            mask_ratio: 0.4,
            dropout: 0.0,
        }
    }

    /// Larger rungs of the same family: `(width, layers, heads, ff)`.
    pub fn ladder(rung: usize) -> Result<Self> {
        let (d, l, h, ff) = match rung {
            0 => return Ok(Self::desk()),
            1 => (384, 4, 8, 1536),
            2 => (768, 11, 12, 3072),
            _ => return Err(Error::InvalidConfig(format!("no encoder ladder rung {rung}"))),
        };
        Ok(EncoderConfig {
            patch: PatchSpec { d_model: d, ..PatchSpec::communication() },
            layers: l,
            heads: h,
            ff_width: ff,
            ..Self::desk()
        })
    }

    pub fn d_model(&self) -> usize {
        self.patch.d_model
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        if self.layers == 0 {
            return Err(Error::InvalidConfig("encoder.layers must be at least 1".into()));
        }
        if self.heads == 0 || !self.d_model().is_multiple_of(self.heads) {
            return Err(Error::InvalidConfig(format!(
                "encoder.heads ({}) must divide d_model ({})",
                self.heads,
                self.d_model()
            )));
        }
        if self.ff_width == 0 {
            return Err(Error::InvalidConfig("encoder.ff_width must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::InvalidConfig(format!("encoder.mask_ratio {} outside [0, 1]", self.mask_ratio)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("encoder.dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}
