use serde::{Deserialize, Serialize};

use crate::chansim::ChannelTensor;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingPolicy {
    /// Zero-pad axes that do not divide evenly.
    ZeroPad,
    /// Reject axes that do not divide evenly.
    Strict,
}

/// Patch extents per axis plus the embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub time: usize,
    pub space: usize,
    pub freq: usize,
    pub d_model: usize,
    pub padding: PaddingPolicy,
}

impl PatchSpec {
    pub fn new(time: usize, space: usize, freq: usize, d_model: usize) -> Result<Self> {
        let spec = PatchSpec { time, space, freq, d_model, padding: PaddingPolicy::ZeroPad };
        spec.validate()?;
        Ok(spec)
    }

    /// Default for communication channels: `(4, 2, 4)` at width 128.
    pub fn communication() -> Self {
        PatchSpec { time: 4, space: 2, freq: 4, d_model: 128, padding: PaddingPolicy::ZeroPad }
    }

    /// Activity amplitudes `3 x 114 x 2000` into `72` tokens of width 64.
    pub fn activity() -> Self {
        PatchSpec { time: 500, space: 1, freq: 19, d_model: 64, padding: PaddingPolicy::ZeroPad }
    }

    pub fn validate(&self) -> Result<()> {
        if self.time == 0 || self.space == 0 || self.freq == 0 {
            return Err(Error::InvalidConfig("patch extents must be at least 1".into()));
        }
        if self.d_model < 8 || !self.d_model.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("d_model must be even and >= 8, got {}", self.d_model)));
        }
        Ok(())
    }

    /// Real scalars per patch (complex values count twice).
    pub fn raw_width(&self) -> usize {
        self.time * self.space * self.freq * 2
    }

    /// Patch grid `(nt, ns, nf)` for a `(T, S, F)` tensor.
    pub fn grid(&self, shape: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (t, s, f) = shape;
        if self.padding == PaddingPolicy::Strict && (t % self.time != 0 || s % self.space != 0 || f % self.freq != 0) {
            return Err(Error::shape(
                "partition_patches",
                format!("shape {shape:?} not divisible by patch ({}, {}, {})", self.time, self.space, self.freq),
            ));
        }
        Ok((t.div_ceil(self.time), s.div_ceil(self.space), f.div_ceil(self.freq)))
    }

    pub fn token_count(&self, shape: (usize, usize, usize)) -> Result<usize> {
        let (a, b, c) = self.grid(shape)?;
        Ok(a * b * c)
    }
}

/// Grid coordinates of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatchPos {
    pub t: usize,
    pub s: usize,
    pub f: usize,
}

/// Raw patches `[N, t_p * s_p * f_p * 2]`, rows ordered time-major, then
/// space, then frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    pub values: Tensor<f32>,
    pub positions: Vec<PatchPos>,
    /// Per-element flag: false where the element is zero padding.
    pub valid: Vec<bool>,
    pub source_shape: (usize, usize, usize),
}

impl PatchMatrix {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.rows_cols().1
    }
}

fn positions_for(grid: (usize, usize, usize)) -> Vec<PatchPos> {
    let (nt, ns, nf) = grid;
    let mut out = Vec::with_capacity(nt * ns * nf);
    for t in 0..nt {
        for s in 0..ns {
            for f in 0..nf {
                out.push(PatchPos { t, s, f });
            }
        }
    }
    out
}

/// Cut `h` into uniform 3D patches; complex scalars expand to `[re, im]`.
pub fn partition_patches(h: &ChannelTensor, spec: &PatchSpec) -> Result<PatchMatrix> {
    spec.validate()?;
    let shape = h.dims();
    let grid = spec.grid(shape)?;
    let positions = positions_for(grid);
    let width = spec.raw_width();
    let (tt, ss, ff) = shape;
    let src = h.values().data();
    let mut data = vec![0f32; positions.len() * width];
    let mut valid = vec![false; positions.len() * width];
    for (row, p) in positions.iter().enumerate() {
        for dt in 0..spec.time {
            let t = p.t * spec.time + dt;
            if t >= tt {
                continue;
            }
            for ds in 0..spec.space {
                let s = p.s * spec.space + ds;
                if s >= ss {
                    continue;
                }
                for df in 0..spec.freq {
                    let f = p.f * spec.freq + df;
                    if f >= ff {
                        continue;
                    }
                    let col = ((dt * spec.space + ds) * spec.freq + df) * 2;
                    let si = ((t * ss + s) * ff + f) * 2;
                    let di = row * width + col;
                    data[di] = src[si];
                    data[di + 1] = src[si + 1];
                    valid[di] = true;
                    valid[di + 1] = true;
                }
            }
        }
    }
    Ok(PatchMatrix { values: Tensor::new([positions.len(), width], data)?, positions, valid, source_shape: shape })
}

/// Inverse of [`partition_patches`]: rows are placed by their positions,
/// so row order does not matter. Padding is dropped.
pub fn reassemble_patches(
    patches: &Tensor<f32>,
    positions: &[PatchPos],
    spec: &PatchSpec,
    shape: (usize, usize, usize),
) -> Result<Tensor<f32>> {
    let grid = spec.grid(shape)?;
    let width = spec.raw_width();
    let (rows, cols) = patches.rows_cols();
    if patches.rank() != 2 || cols != width || rows != positions.len() || rows != grid.0 * grid.1 * grid.2 {
        return Err(Error::shape(
            "reassemble_patches",
            format!("{:?} patches with {} positions for grid {grid:?}, width {width}", patches.shape(), positions.len()),
        ));
    }
    let (tt, ss, ff) = shape;
    let mut seen = vec![false; rows];
    let mut out = vec![0f32; tt * ss * ff * 2];
    for (row, p) in positions.iter().enumerate() {
        if p.t >= grid.0 || p.s >= grid.1 || p.f >= grid.2 {
            return Err(Error::shape("reassemble_patches", format!("position {p:?} outside grid {grid:?}")));
        }
        let id = (p.t * grid.1 + p.s) * grid.2 + p.f;
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::Contract(format!("duplicate patch position {p:?}")));
        }
        let src = patches.row(row);
        for dt in 0..spec.time {
            let t = p.t * spec.time + dt;
            if t >= tt {
                continue;
            }
            for ds in 0..spec.space {
                let s = p.s * spec.space + ds;
                if s >= ss {
                    continue;
                }
                for df in 0..spec.freq {
                    let f = p.f * spec.freq + df;
                    if f >= ff {
                        continue;
                    }
                    let col = ((dt * spec.space + ds) * spec.freq + df) * 2;
                    let di = ((t * ss + s) * ff + f) * 2;
                    out[di] = src[col];
                    out[di + 1] = src[col + 1];
                }
            }
        }
    }
    Tensor::new([tt, ss, ff, 2], out)
}
