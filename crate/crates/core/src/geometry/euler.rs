//! Fixed-axis Euler angles with the composition `R = Rx(x) Ry(y) Rz(z)`.
//!
//! Every module that talks about per-axis rotations (action decoding, expert
//! residuals, MAE) uses this convention. Angle comparisons against other
//! tools are only meaningful under the same convention.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{is_rotation, Mat3, Vec3};
use crate::error::{Error, Result};

/// Below this value of `cos(y)` the decomposition is treated as gimbal-locked.
const GIMBAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EulerAngles {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn to_vec3(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_degrees(self) -> [f64; 3] {
        self.to_array().map(f64::to_degrees)
    }
}

pub fn rotation_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn euler_to_rotation(e: &EulerAngles) -> Mat3 {
    rotation_x(e.x) * rotation_y(e.y) * rotation_z(e.z)
}

/// Maps -π onto π so every angle lies in (-π, π].
fn canonical(a: f64) -> f64 {
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Inverse of [`euler_to_rotation`]. In the gimbal case `|y| = π/2` the
/// z angle is set to zero and x absorbs the remaining freedom.
pub fn rotation_to_euler(r: &Mat3) -> Result<EulerAngles> {
    if !is_rotation(r, 1e-6) {
        return Err(Error::invalid("matrix is not orthonormal with determinant +1"));
    }
    let sy = r[(0, 2)].clamp(-1.0, 1.0);
    let y = sy.asin();
    let cy = (r[(0, 0)] * r[(0, 0)] + r[(0, 1)] * r[(0, 1)]).sqrt();
    let (x, z) = if cy > GIMBAL_EPS {
        ((-r[(1, 2)]).atan2(r[(2, 2)]), (-r[(0, 1)]).atan2(r[(0, 0)]))
    } else {
        // R = Rx(x) Ry(±π/2): rows 1 and 2 of column 1 hold (cos x, sin x).
        (r[(2, 1)].atan2(r[(1, 1)]), 0.0)
    };
    Ok(EulerAngles::new(canonical(x), y, canonical(z)))
}
