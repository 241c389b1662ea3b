use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Phase offset applied to the second polarization block.
pub const POLARIZATION_OFFSET: f64 = PI / 2.0;

pub type Vec3 = [f64; 3];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn unit(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n == 0.0 {
        [1.0, 0.0, 0.0]
    } else {
        [a[0] / n, a[1] / n, a[2] / n]
    }
}

/// Unit direction for azimuth (from +x toward +y) and elevation (from the
/// horizontal plane toward +z).
pub fn direction(azimuth: f64, elevation: f64) -> Vec3 {
    [elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Linear,
    Planar,
}

/// Uniform antenna array. Linear arrays lie along the local horizontal
/// axis; planar arrays span the local horizontal and vertical axes. The
/// local horizontal axis is `+y` rotated by `azimuth_rad` about `+z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    /// Elements along the horizontal axis.
    pub horizontal: usize,
    /// Elements along the vertical axis (1 for linear arrays).
    pub vertical: usize,
    pub spacing_wavelengths: f64,
    pub dual_polarization: bool,
    #[serde(default)]
    pub azimuth_rad: f64,
}

impl ArrayGeometry {
    pub fn single() -> Self {
        Self::linear(1)
    }

    pub fn linear(n: usize) -> Self {
        ArrayGeometry {
            kind: ArrayKind::Linear,
            horizontal: n,
            vertical: 1,
            spacing_wavelengths: 0.5,
            dual_polarization: false,
            azimuth_rad: 0.0,
        }
    }

    pub fn planar(horizontal: usize, vertical: usize) -> Self {
        ArrayGeometry { kind: ArrayKind::Planar, horizontal, vertical, ..Self::linear(1) }
    }

    pub fn with_dual_polarization(mut self) -> Self {
        self.dual_polarization = true;
        self
    }

    /// Spatial elements including the polarization factor.
    pub fn elements(&self) -> usize {
        let physical = match self.kind {
            ArrayKind::Linear => self.horizontal,
            ArrayKind::Planar => self.horizontal * self.vertical,
        };
        physical * if self.dual_polarization { 2 } else { 1 }
    }

    pub fn is_valid(&self) -> bool {
        self.horizontal >= 1
            && self.vertical >= 1
            && (self.kind == ArrayKind::Planar || self.vertical == 1)
            && self.spacing_wavelengths > 0.0
            && self.spacing_wavelengths.is_finite()
    }

    /// Element positions in wavelengths, polarization excluded.
    pub fn positions(&self) -> Vec<Vec3> {
        let (s, c) = self.azimuth_rad.sin_cos();
        let h = [-s, c, 0.0];
        let v = [0.0, 0.0, 1.0];
        let rows = match self.kind {
            ArrayKind::Linear => 1,
            ArrayKind::Planar => self.vertical,
        };
        let mut out = Vec::with_capacity(rows * self.horizontal);
        for iv in 0..rows {
            for ih in 0..self.horizontal {
                let a = ih as f64 * self.spacing_wavelengths;
                let b = iv as f64 * self.spacing_wavelengths;
                out.push([a * h[0] + b * v[0], a * h[1] + b * v[1], a * h[2] + b * v[2]]);
            }
        }
        out
    }

    /// Response to a plane wave arriving from unit direction `toward_source`.
    ///
    /// Every entry has unit magnitude.
    pub fn steering_vector(&self, toward_source: Vec3) -> Vec<Complex64> {
        let k = unit(toward_source);
        let mut a: Vec<Complex64> =
            self.positions().into_iter().map(|p| Complex64::from_polar(1.0, 2.0 * PI * dot(p, k))).collect();
        if self.dual_polarization {
            let rot = Complex64::from_polar(1.0, POLARIZATION_OFFSET);
            let second: Vec<Complex64> = a.iter().map(|&z| z * rot).collect();
            a.extend(second);
        }
        a
    }

    pub fn steering_vector_angles(&self, azimuth: f64, elevation: f64) -> Vec<Complex64> {
        self.steering_vector(direction(azimuth, elevation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_counts() {
        assert_eq!(ArrayGeometry::linear(4).elements(), 4);
        assert_eq!(ArrayGeometry::planar(4, 4).elements(), 16);
        assert_eq!(ArrayGeometry::planar(4, 4).with_dual_polarization().elements(), 32);
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = ArrayGeometry::linear(8).steering_vector([1.0, 0.0, 0.0]);
        for z in a {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn endfire_half_wavelength_alternates() {
        let a = ArrayGeometry::linear(4).steering_vector([0.0, 1.0, 0.0]);
        for (i, z) in a.iter().enumerate() {
            let want = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }
}
