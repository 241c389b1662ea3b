use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadKind {
    #[serde(rename = "rescnn1d")]
    ResCnn1d,
    #[serde(rename = "rescnn2d")]
    ResCnn2d,
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "transformer-enc")]
    TransformerEnc,
    #[serde(rename = "transformer-encdec")]
    TransformerEncDec,
    #[serde(rename = "pointcloud-decoder")]
    PointCloudDecoder,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::ResCnn1d => "rescnn1d",
            HeadKind::ResCnn2d => "rescnn2d",
            HeadKind::Lstm => "lstm",
            HeadKind::TransformerEnc => "transformer-enc",
            HeadKind::TransformerEncDec => "transformer-encdec",
            HeadKind::PointCloudDecoder => "pointcloud-decoder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            HeadKind::ResCnn1d,
            HeadKind::ResCnn2d,
            HeadKind::Lstm,
            HeadKind::TransformerEnc,
            HeadKind::TransformerEncDec,
            HeadKind::PointCloudDecoder,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown head kind {s:?}")))
    }

    /// Reference parameter counts the defaults are compared against in logs.
    pub fn calibration_params(self) -> Option<usize> {
        match self {
            HeadKind::ResCnn1d => Some(161_500),
            HeadKind::ResCnn2d => Some(316_100),
            HeadKind::Lstm => Some(1_200_000),
            HeadKind::TransformerEnc => Some(1_300_000),
            HeadKind::TransformerEncDec => Some(1_700_000),
            HeadKind::PointCloudDecoder => None,
        }
    }
}

/// Shape and size of a downstream head.
///
/// Every head maps a per-sample input matrix `input = [rows, cols]` to a
/// per-sample output matrix `output = [rows, cols]`; batches stack samples
/// along rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub input: [usize; 2],
    pub output: [usize; 2],
    /// Channel width (conv), hidden size (recurrent, MLP) or model width (attention).
    pub width: usize,
    /// Residual blocks, recurrent layers, or encoder layers.
    pub layers: usize,
    /// Decoder layers for the encoder-decoder head.
    #[serde(default)]
    pub decoder_layers: usize,
    #[serde(default)]
    pub heads: usize,
    #[serde(default)]
    pub ff_width: usize,
    /// Image `[height, width]` for the 2D head; input rows are pixels in
    /// row-major order and input columns are channels.
    #[serde(default)]
    pub image: Option<[usize; 2]>,
    /// Time steps the input rows are grouped into (recurrent and
    /// encoder-decoder heads).
    #[serde(default)]
    pub steps: usize,
    /// Per-row projection width applied before a step's rows are flattened;
    /// 0 feeds rows directly (requires one row per step).
    #[serde(default)]
    pub row_proj: usize,
    /// Per-column affine map on the output: `y * scale + offset`.
    #[serde(default)]
    pub out_scale: Vec<f64>,
    #[serde(default)]
    pub out_offset: Vec<f64>,
}

impl HeadConfig {
    fn base(kind: HeadKind, input: [usize; 2], output: [usize; 2], width: usize, layers: usize) -> Self {
        HeadConfig {
            kind,
            input,
            output,
            width,
            layers,
            decoder_layers: 0,
            heads: 0,
            ff_width: 0,
            image: None,
            steps: 0,
            row_proj: 0,
            out_scale: Vec::new(),
            out_offset: Vec::new(),
        }
    }

    /// Residual 1D CNN along the token axis: 4 blocks, 64 channels, kernel 3.
    pub fn rescnn1d(tokens: usize, in_cols: usize, out_cols: usize) -> Self {
        Self::base(HeadKind::ResCnn1d, [tokens, in_cols], [tokens, out_cols], 64, 4)
    }

    /// Residual 2D CNN classifier: `channels -> 32` stem, 3 blocks.
    pub fn rescnn2d(height: usize, width: usize, channels: usize, classes: usize) -> Self {
        HeadConfig {
            image: Some([height, width]),
            ..Self::base(HeadKind::ResCnn2d, [height * width, channels], [1, classes], 32, 3)
        }
    }

    /// Two-layer LSTM over `steps` groups of input rows.
    pub fn lstm(input: [usize; 2], steps: usize, row_proj: usize, output: [usize; 2]) -> Self {
        HeadConfig { steps, row_proj, ..Self::base(HeadKind::Lstm, input, output, 64, 2) }
    }

    /// Two-layer encoder, 4 heads, width 256, feed-forward 512; per-row output.
    pub fn transformer_enc(tokens: usize, in_cols: usize, out_cols: usize) -> Self {
        HeadConfig {
            heads: 4,
            ff_width: 512,
            ..Self::base(HeadKind::TransformerEnc, [tokens, in_cols], [tokens, out_cols], 256, 2)
        }
    }

    /// 2 + 2 layer encoder-decoder with one learned query per output row.
    pub fn transformer_encdec(input: [usize; 2], steps: usize, row_proj: usize, output: [usize; 2]) -> Self {
        HeadConfig {
            heads: 4,
            ff_width: 512,
            decoder_layers: 2,
            steps,
            row_proj,
            ..Self::base(HeadKind::TransformerEncDec, input, output, 256, 2)
        }
    }

    /// Mean-pool, two hidden layers, `points x 3` coordinates.
    pub fn pointcloud(tokens: usize, in_cols: usize, points: usize) -> Self {
        Self::base(HeadKind::PointCloudDecoder, [tokens, in_cols], [points, 3], 256, 2)
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    /// Rows of the input that make up one time step.
    pub fn rows_per_step(&self) -> usize {
        self.input[0].checked_div(self.steps).unwrap_or(0)
    }

    /// Feature width of one time step after the row projection.
    pub fn step_features(&self) -> usize {
        if self.row_proj == 0 {
            self.input[1]
        } else {
            self.rows_per_step() * self.row_proj
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("{} head: {m}", self.kind.name())));
        if self.input.contains(&0) || self.output.contains(&0) || self.width == 0 || self.layers == 0 {
            return bad(format!("zero size in input {:?}, output {:?}, width {}, layers {}", self.input, self.output, self.width, self.layers));
        }
        if !self.out_scale.is_empty() && self.out_scale.len() != self.output[1] {
            return bad(format!("out_scale has {} entries for {} columns", self.out_scale.len(), self.output[1]));
        }
        if !self.out_offset.is_empty() && self.out_offset.len() != self.output[1] {
            return bad(format!("out_offset has {} entries for {} columns", self.out_offset.len(), self.output[1]));
        }
        match self.kind {
            HeadKind::ResCnn1d | HeadKind::TransformerEnc => {
                if self.input[0] != self.output[0] {
                    return bad(format!("per-token head needs equal row counts, got {:?} -> {:?}", self.input, self.output));
                }
            }
            HeadKind::ResCnn2d => match self.image {
                Some([h, w]) if h * w == self.input[0] => {
                    if self.output[0] != 1 {
                        return bad("classifier emits one row of logits".into());
                    }
                }
                _ => return bad(format!("image {:?} does not cover {} input rows", self.image, self.input[0])),
            },
            HeadKind::Lstm | HeadKind::TransformerEncDec => {
                if self.steps == 0 || !self.input[0].is_multiple_of(self.steps) {
                    return bad(format!("{} input rows do not split into {} steps", self.input[0], self.steps));
                }
                if self.row_proj == 0 && self.rows_per_step() != 1 {
                    return bad("row_proj = 0 needs one input row per step".into());
                }
            }
            HeadKind::PointCloudDecoder => {
                if self.output[1] != 3 {
                    return bad("points have three coordinates".into());
                }
            }
        }
        if matches!(self.kind, HeadKind::TransformerEnc | HeadKind::TransformerEncDec) {
            if self.heads == 0 || !self.width.is_multiple_of(self.heads) || self.ff_width == 0 {
                return bad(format!("{} heads, width {}, ff {}", self.heads, self.width, self.ff_width));
            }
            if self.kind == HeadKind::TransformerEncDec && self.decoder_layers == 0 {
                return bad("needs at least one decoder layer".into());
            }
        }
        Ok(())
    }
}
