//! Rigid-transform algebra, disentangled accumulation and point-set distances.

mod euler;
mod nn;

pub use euler::{euler_to_rotation, rotation_to_euler, rotation_x, rotation_y, rotation_z, EulerAngles};
pub use nn::{chamfer, modified_chamfer, nearest, NearestNeighbors, BRUTE_FORCE_LIMIT};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// An ordered, non-empty list of finite 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud has zero points"));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn from_arrays(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect())
    }

    /// Wraps points produced by a rigid or affine map of an existing cloud.
    pub(crate) fn from_mapped(points: Vec<Vec3>) -> Self {
        debug_assert!(!points.is_empty());
        Self { points }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.points.iter()
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self::from_mapped(self.points.iter().map(f).collect())
    }

    /// Points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub fn centroid(&self) -> Vec3 {
        centroid(self)
    }
}

/// Arithmetic mean of the points.
pub fn centroid(cloud: &PointCloud) -> Vec3 {
    let sum = cloud.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    sum / cloud.len() as f64
}

/// Largest pairwise Euclidean distance.
pub fn diameter(cloud: &PointCloud) -> f64 {
    let pts = cloud.points();
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

/// A rotation matrix paired with a translation, acting as `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOL) {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_rotation(rotation: Mat3) -> Self {
        Self {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation, ROTATION_TOL)
    }
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    r.iter().all(|c| c.is_finite())
        && (r.transpose() * r - Mat3::identity()).amax() <= tol
        && (r.determinant() - 1.0).abs() <= tol
}

/// Maps every point through `t`, preserving order.
pub fn apply_rigid(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.map(|p| t.apply_point(p))
}

/// How successive steps are folded into an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformMode {
    /// `R <- R_step R`, `t <- t_step + t`, rotations about the fixed origin.
    #[default]
    Global,
    /// `R <- R R_step`, `t <- t_step + t`, rotations about the fixed origin.
    Local,
    /// Homogeneous product of the steps, applied about the coordinate origin.
    Basic,
}

impl TransformMode {
    pub fn is_disentangled(self) -> bool {
        !matches!(self, TransformMode::Basic)
    }
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            "basic" => Ok(Self::Basic),
            other => Err(Error::invalid(format!("unknown transform mode '{other}'"))),
        }
    }
}

/// Running rotation and translation of an episode, with the rotation origin
/// pinned to the centroid of the initial observed source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformAccumulator {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub origin: Vec3,
    pub mode: TransformMode,
}

impl TransformAccumulator {
    pub fn new(origin: Vec3, mode: TransformMode) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            origin,
            mode,
        }
    }

    /// Identity accumulator anchored at the centroid of `source0`.
    pub fn for_source(source0: &PointCloud, mode: TransformMode) -> Self {
        Self::new(centroid(source0), mode)
    }

    pub fn accumulate(&self, step: &RigidTransform) -> Self {
        let (rotation, translation) = match self.mode {
            TransformMode::Global => (step.rotation * self.rotation, step.translation + self.translation),
            TransformMode::Local => (self.rotation * step.rotation, step.translation + self.translation),
            TransformMode::Basic => (
                step.rotation * self.rotation,
                step.rotation * self.translation + step.translation,
            ),
        };
        Self {
            rotation,
            translation,
            ..*self
        }
    }

    /// The plain rigid transform that maps the initial source to the current one.
    pub fn to_rigid(&self) -> RigidTransform {
        match self.mode {
            TransformMode::Basic => RigidTransform {
                rotation: self.rotation,
                translation: self.translation,
            },
            _ => RigidTransform {
                rotation: self.rotation,
                translation: self.origin - self.rotation * self.origin + self.translation,
            },
        }
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        match self.mode {
            TransformMode::Basic => self.rotation * p + self.translation,
            _ => self.rotation * (p - self.origin) + self.origin + self.translation,
        }
    }
}

/// Current source: the accumulator applied to the initial observed source.
pub fn apply_accumulator(source0: &PointCloud, acc: &TransformAccumulator) -> PointCloud {
    source0.map(|p| acc.apply_point(p))
}
