use std::collections::BTreeMap;

use super::{Gradients, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("adam lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("adam {name} must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState { m: Tensor::zeros(shape.to_vec()), v: Tensor::zeros(shape.to_vec()), t: 0 }
    }

    /// One bias-corrected Adam step on `params`.
    pub fn update(&mut self, cfg: &AdamConfig, name: &str, params: &mut Tensor<T>, grads: &Tensor<T>) -> Result<()> {
        if params.shape() != grads.shape() || params.shape() != self.m.shape() {
            return Err(Error::shape(
                "adam_update",
                format!("{name}: params {:?}, grads {:?}, state {:?}", params.shape(), grads.shape(), self.m.shape()),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        self.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let bc1 = T::one() - T::of(cfg.beta1.powi(self.t as i32));
        let bc2 = T::one() - T::of(cfg.beta2.powi(self.t as i32));
        let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (((p, &g), m), v) in params.data_mut().iter_mut().zip(grads.data()).zip(m).zip(v) {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

/// Adam over a whole [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam<T = f32> {
    pub cfg: AdamConfig,
    states: BTreeMap<String, AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Adam { cfg, states: BTreeMap::new() })
    }

    pub fn state(&self, name: &str) -> Option<&AdamState<T>> {
        self.states.get(name)
    }

    /// Apply one step to every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        // validate everything first so a bad gradient leaves params untouched
        for (name, g) in &grads.by_name {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(Error::shape("adam_update", format!("{name}: {:?} vs {:?}", p.shape(), g.shape())));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        for (name, g) in &grads.by_name {
            let p = params.get_mut(name)?;
            let st = self.states.entry(name.clone()).or_insert_with(|| AdamState::new(p.shape()));
            st.update(&self.cfg, name, p, g)?;
        }
        Ok(())
    }
}
