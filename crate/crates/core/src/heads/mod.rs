//! Downstream heads over raw inputs or universal representations.

mod config;
mod pointcloud;
mod recurrent;
mod rescnn;
mod transformer;

pub use config::{HeadConfig, HeadKind};

use crate::error::{Error, Result};
use crate::numerics::layers::dense;
use crate::numerics::{Graph, ParamStore, Scalar, Tensor, Var};
use crate::rng;

/// Scatterer positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("point cloud is empty".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point cloud coordinates".into()));
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `[N, 3]` matrix.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new([self.points.len(), 3], self.points.iter().flatten().map(|&x| T::of(x)).collect())
            .expect("n x 3")
    }
}

/// A head's configuration and parameters. Parameter names start with `head.`.
#[derive(Clone, Debug, PartialEq)]
pub struct Head<T = f32> {
    pub config: HeadConfig,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Head<T> {
    pub fn new(config: HeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, 0x4ead);
        let mut p = ParamStore::new();
        match config.kind {
            HeadKind::ResCnn1d => rescnn::init_1d(&config, &mut p, &mut r)?,
            HeadKind::ResCnn2d => rescnn::init_2d(&config, &mut p, &mut r)?,
            HeadKind::Lstm => recurrent::init_lstm(&config, &mut p, &mut r)?,
            HeadKind::TransformerEnc => transformer::init_enc(&config, &mut p, &mut r)?,
            HeadKind::TransformerEncDec => transformer::init_encdec(&config, &mut p, &mut r)?,
            HeadKind::PointCloudDecoder => pointcloud::init(&config, &mut p, &mut r)?,
        }
        Ok(Head { config, params: p })
    }

    pub fn from_params(config: HeadConfig, params: ParamStore<T>) -> Result<Self> {
        let template = Head::<T>::new(config.clone(), 0)?;
        for (name, t) in template.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::shape("Head", format!("{name}: {:?} vs {:?}", params.get(name)?.shape(), t.shape())));
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::Contract(format!("head checkpoint has {} tensors, expected {}", params.len(), template.params.len())));
        }
        Ok(Head { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    pub fn cast<U: Scalar>(&self) -> Head<U> {
        Head { config: self.config.clone(), params: self.params.cast() }
    }

    /// Record the head on `g`: `x` is `[batch * input rows, input cols]`,
    /// the result `[batch * output rows, output cols]`.
    pub fn forward_graph(&self, g: &mut Graph<T>, x: Var, batch: usize) -> Result<Var> {
        let cfg = &self.config;
        let shape = g.value(x).shape();
        if shape.len() != 2 || batch == 0 || shape[0] != batch * cfg.input[0] || shape[1] != cfg.input[1] {
            return Err(Error::shape(
                cfg.kind.name(),
                format!("input {shape:?} for batch {batch} of {:?}", cfg.input),
            ));
        }
        let mut y = match cfg.kind {
            HeadKind::ResCnn1d => rescnn::forward_1d(cfg, g, &self.params, x, batch)?,
            HeadKind::ResCnn2d => rescnn::forward_2d(cfg, g, &self.params, x, batch)?,
            HeadKind::Lstm => recurrent::forward_lstm(cfg, g, &self.params, x, batch)?,
            HeadKind::TransformerEnc => transformer::forward_enc(cfg, g, &self.params, x, batch)?,
            HeadKind::TransformerEncDec => transformer::forward_encdec(cfg, g, &self.params, x, batch)?,
            HeadKind::PointCloudDecoder => pointcloud::forward(cfg, g, &self.params, x, batch)?,
        };
        if !cfg.out_scale.is_empty() {
            let s = g.constant(Tensor::new([cfg.output[1]], cfg.out_scale.iter().map(|&v| T::of(v)).collect())?);
            y = g.mul_row(y, s)?;
        }
        if !cfg.out_offset.is_empty() {
            let o = g.constant(Tensor::new([cfg.output[1]], cfg.out_offset.iter().map(|&v| T::of(v)).collect())?);
            y = g.add_row(y, o)?;
        }
        Ok(y)
    }

    /// Inference on a stacked batch.
    pub fn forward(&self, x: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let y = self.forward_graph(&mut g, v, batch)?;
        Ok(g.value(y).clone())
    }
}

impl Head<f32> {
    /// Point-cloud decoder on one representation matrix.
    pub fn decode_point_cloud(&self, rep: &Tensor<f32>) -> Result<PointCloud> {
        if self.config.kind != HeadKind::PointCloudDecoder {
            return Err(Error::Contract(format!("{} head cannot decode point clouds", self.config.kind.name())));
        }
        let y = self.forward(rep, 1)?;
        PointCloud::new(y.data().chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect())
    }
}

/// Rows of every step, projected and flattened: `[batch * steps, step features]`.
fn step_features<T: Scalar>(cfg: &HeadConfig, g: &mut Graph<T>, p: &ParamStore<T>, x: Var, batch: usize) -> Result<Var> {
    if cfg.row_proj == 0 {
        return Ok(x);
    }
    let y = dense(g, p, "head.rows", x)?;
    g.reshape(y, [batch * cfg.steps, cfg.step_features()])
}
