//! Shape augmentation: random scaling, shearing and mirroring, applied as a
//! single affine map about the centroid of the first cloud.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub scale_sigma: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub shear_sigma_deg: f64,
    pub shear_max_deg: f64,
    pub mirror_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_sigma: 0.1,
            scale_min: 0.5,
            scale_max: 1.5,
            shear_sigma_deg: 5.0,
            shear_max_deg: 15.0,
            mirror_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.scale_sigma >= 0.0
            && self.scale_min > 0.0
            && self.scale_min <= self.scale_max
            && self.shear_sigma_deg >= 0.0
            && (0.0..90.0).contains(&self.shear_max_deg)
            && (0.0..=1.0).contains(&self.mirror_prob);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("augmentation parameters out of range"))
        }
    }
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// One drawn augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub scale: f64,
    pub shear_deg: f64,
    /// Points move along this direction...
    pub shear_dir: Vec3,
    /// ...in proportion to their offset along this one (orthogonal to it).
    pub shear_normal: Vec3,
    /// Normal of the mirror plane, if mirroring.
    pub mirror: Option<Vec3>,
}

impl Augmentation {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            shear_deg: 0.0,
            shear_dir: Vec3::x(),
            shear_normal: Vec3::y(),
            mirror: None,
        }
    }

    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let scale = Normal::new(1.0, cfg.scale_sigma)
            .expect("validated sigma")
            .sample(rng)
            .clamp(cfg.scale_min, cfg.scale_max);
        let shear_deg = Normal::new(0.0, cfg.shear_sigma_deg)
            .expect("validated sigma")
            .sample(rng)
            .clamp(-cfg.shear_max_deg, cfg.shear_max_deg);
        let shear_normal = unit_vector(rng);
        let shear_dir = loop {
            let v = unit_vector(rng);
            let d = v - shear_normal * v.dot(&shear_normal);
            if d.norm() > 1e-6 {
                break d.normalize();
            }
        };
        let mirror = (rng.random::<f64>() < cfg.mirror_prob).then(|| unit_vector(rng));
        Self {
            scale,
            shear_deg,
            shear_dir,
            shear_normal,
            mirror,
        }
    }

    /// Linear part: mirror ∘ shear ∘ scale.
    pub fn matrix(&self) -> Mat3 {
        let shear = Mat3::identity() + self.shear_dir * self.shear_normal.transpose() * self.shear_deg.to_radians().tan();
        let m = match self.mirror {
            Some(n) => Mat3::identity() - 2.0 * n * n.transpose(),
            None => Mat3::identity(),
        };
        m * shear * self.scale
    }

    /// Applies the map about `center`.
    pub fn apply(&self, cloud: &PointCloud, center: &Vec3) -> PointCloud {
        let a = self.matrix();
        cloud.map(|p| center + a * (p - center))
    }
}

/// Reflects `cloud` across the plane through its centroid with normal `n`.
pub fn mirror(cloud: &PointCloud, n: &Vec3) -> PointCloud {
    let n = n.normalize();
    let c = cloud.centroid();
    cloud.map(|p| p - 2.0 * n * (p - c).dot(&n))
}

/// Draws one augmentation and applies it to both clouds about the centroid
/// of `source_clean`.
pub fn augment(
    source_clean: &PointCloud,
    target: &PointCloud,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (PointCloud, PointCloud, Augmentation) {
    let aug = Augmentation::sample(cfg, rng);
    let c = source_clean.centroid();
    (aug.apply(source_clean, &c), aug.apply(target, &c), aug)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn cloud() -> PointCloud {
        PointCloud::from_arrays(&[[0.1, 0.2, 0.3], [-1.0, 0.5, 0.0], [0.3, -0.7, 0.9], [0.0, 0.0, -1.0]]).unwrap()
    }

    #[test]
    fn identity_leaves_clouds_unchanged() {
        let c = cloud();
        let out = Augmentation::identity().apply(&c, &c.centroid());
        for (a, b) in out.iter().zip(c.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn double_mirror_is_identity() {
        let mut rng = seeded(2);
        let c = cloud();
        for _ in 0..100 {
            let n = unit_vector(&mut rng);
            let back = mirror(&mirror(&c, &n), &n);
            for (a, b) in back.iter().zip(c.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn draws_respect_clip_bounds() {
        let cfg = AugmentConfig::default();
        let mut rng = seeded(3);
        for _ in 0..10_000 {
            let a = Augmentation::sample(&cfg, &mut rng);
            assert!((0.5..=1.5).contains(&a.scale));
            assert!((-15.0..=15.0).contains(&a.shear_deg));
            assert!(a.shear_dir.dot(&a.shear_normal).abs() < 1e-12);
        }
    }

    #[test]
    fn both_clouds_get_the_same_map() {
        let c = cloud();
        let (a, b, aug) = augment(&c, &c, &AugmentConfig::default(), &mut seeded(4));
        assert_eq!(a, b);
        let det = aug.matrix().determinant();
        let expected = aug.scale.powi(3) * if aug.mirror.is_some() { -1.0 } else { 1.0 };
        assert!((det - expected).abs() < 1e-12);
    }
}
