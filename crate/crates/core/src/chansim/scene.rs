use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{norm, sub, unit, Vec3};
use crate::error::{Error, Result};
use crate::rng;

/// Axis-aligned box in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl SceneBounds {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        SceneBounds { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.max[i] > self.min[i])
    }

    pub fn center(&self) -> Vec3 {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]), 0.5 * (self.min[2] + self.max[2])]
    }

    pub fn half_extent(&self) -> Vec3 {
        [0.5 * (self.max[0] - self.min[0]), 0.5 * (self.max[1] - self.min[1]), 0.5 * (self.max[2] - self.min[2])]
    }

    /// Squared length of the box diagonal.
    pub fn diagonal_sq(&self) -> f64 {
        let d = sub(self.max, self.min);
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }
}

impl Default for SceneBounds {
    fn default() -> Self {
        SceneBounds { min: [5.0, -50.0, 0.0], max: [105.0, 50.0, 20.0] }
    }
}

/// One propagation path; `order` 0 is line of sight, 1 a single bounce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationPath {
    pub order: u8,
    pub gain: Complex64,
    pub length_m: f64,
    /// Unit vector from the receiver toward where the wave arrives from.
    pub arrival: Vec3,
    /// Unit vector from the transmitter toward where the wave departs to.
    pub departure: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScattererScene {
    pub scatterers: Vec<Vec3>,
    pub tx: Vec3,
    pub rx_origin: Vec3,
    pub rx_azimuth_rad: f64,
    pub paths: Vec<PropagationPath>,
}

impl ScattererScene {
    /// Checks the scene invariants.
    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::Contract("scene has no propagation paths".into()));
        }
        let finite = |p: &Vec3| p.iter().all(|x| x.is_finite());
        if !self.scatterers.iter().all(finite) || !finite(&self.tx) || !finite(&self.rx_origin) {
            return Err(Error::NonFinite("scene coordinates".into()));
        }
        if self.paths.iter().any(|p| p.order > 1 || !p.length_m.is_finite() || p.length_m < 0.0) {
            return Err(Error::Contract("path order must be 0 or 1 with finite length".into()));
        }
        Ok(())
    }

    /// Path-delay power profile `(delay s, |gain|^2)`.
    pub fn power_delay_profile(&self) -> Vec<(f64, f64)> {
        self.paths
            .iter()
            .map(|p| (p.length_m / super::geometry::SPEED_OF_LIGHT, p.gain.norm_sqr()))
            .collect()
    }
}

const MIN_SEGMENT_M: f64 = 1.0;

/// Random scene: scatterers uniform in `bounds`, the transmitter uniform in
/// `bounds`, the receiver array at the centre of the `-x` face looking
/// toward `+x`. One line-of-sight path plus one single-bounce path per
/// scatterer; total path power is normalised to 1.
pub fn generate_scene(seed: u64, num_scatterers: usize, bounds: SceneBounds) -> Result<ScattererScene> {
    if num_scatterers == 0 {
        return Err(Error::Contract("num_scatterers must be at least 1".into()));
    }
    if !bounds.is_valid() {
        return Err(Error::InvalidConfig(format!("degenerate scene bounds {bounds:?}")));
    }
    let mut r = rng::stream(seed, 0x5cee);
    let point = |r: &mut rand_chacha::ChaCha8Rng| -> Vec3 {
        [
            r.random_range(bounds.min[0]..bounds.max[0]),
            r.random_range(bounds.min[1]..bounds.max[1]),
            r.random_range(bounds.min[2]..bounds.max[2]),
        ]
    };
    let c = bounds.center();
    let rx = [bounds.min[0] - 5.0, c[1], c[2]];
    let tx = point(&mut r);
    let scatterers: Vec<Vec3> = (0..num_scatterers).map(|_| point(&mut r)).collect();

    let mut paths = Vec::with_capacity(num_scatterers + 1);
    let d_los = norm(sub(tx, rx)).max(MIN_SEGMENT_M);
    paths.push(PropagationPath {
        order: 0,
        gain: Complex64::from_polar(1.0 / d_los, r.random_range(0.0..2.0 * PI)),
        length_m: d_los,
        arrival: unit(sub(tx, rx)),
        departure: unit(sub(rx, tx)),
    });
    for &s in &scatterers {
        let d1 = norm(sub(s, tx)).max(MIN_SEGMENT_M);
        let d2 = norm(sub(rx, s)).max(MIN_SEGMENT_M);
        let reflectivity: f64 = r.random_range(0.2..0.8);
        paths.push(PropagationPath {
            order: 1,
            gain: Complex64::from_polar(reflectivity / (d1 + d2), r.random_range(0.0..2.0 * PI)),
            length_m: d1 + d2,
            arrival: unit(sub(s, rx)),
            departure: unit(sub(s, tx)),
        });
    }
    let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    let k = 1.0 / total.sqrt();
    paths.iter_mut().for_each(|p| p.gain *= k);
    Ok(ScattererScene { scatterers, tx, rx_origin: rx, rx_azimuth_rad: 0.0, paths })
}
