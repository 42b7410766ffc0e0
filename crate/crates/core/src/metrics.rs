//! Registration and pose-quality metrics.
//!
//! Angles are reported in degrees. ADD and ADI use unsquared distances,
//! unlike the squared Chamfer distance in [`crate::geometry::chamfer`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_to_euler, PointCloud, RigidTransform};

/// Per-registration pose errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseError {
    pub mae_rot: f64,
    pub mae_trans: f64,
    pub iso_rot: f64,
    pub iso_trans: f64,
}

impl PoseError {
    pub fn between(est: &RigidTransform, truth: &RigidTransform) -> Result<Self> {
        let (mae_rot, mae_trans) = mae(est, truth)?;
        let (iso_rot, iso_trans) = iso(est, truth);
        Ok(Self {
            mae_rot,
            mae_trans,
            iso_rot,
            iso_trans,
        })
    }
}

/// Wraps an angle difference into (-180, 180] degrees.
fn wrap_degrees(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Per-axis mean absolute Euler difference in degrees, and per-axis mean
/// absolute translation difference.
pub fn mae(est: &RigidTransform, truth: &RigidTransform) -> Result<(f64, f64)> {
    let a = rotation_to_euler(&est.rotation)?.to_degrees();
    let b = rotation_to_euler(&truth.rotation)?.to_degrees();
    let rot = a.iter().zip(&b).map(|(x, y)| wrap_degrees(x - y).abs()).sum::<f64>() / 3.0;
    let trans = (est.translation - truth.translation).abs().sum() / 3.0;
    Ok((rot, trans))
}

/// Geodesic angle of the residual rotation in degrees, and the Euclidean
/// translation error.
pub fn iso(est: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    let residual = est.rotation.transpose() * truth.rotation;
    let cos = ((residual.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    (cos.acos().to_degrees(), (est.translation - truth.translation).norm())
}

/// Mean distance between index-corresponding points.
pub fn add(est: &PointCloud, truth: &PointCloud) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::invalid(format!(
            "ADD needs corresponding clouds, got {} and {} points",
            est.len(),
            truth.len()
        )));
    }
    let total: f64 = est.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm()).sum();
    Ok(total / truth.len() as f64)
}

/// Mean over `truth` of the distance to the closest point of `est`.
pub fn adi(est: &PointCloud, truth: &PointCloud) -> f64 {
    let nn = crate::geometry::nearest(truth, est);
    nn.iter().map(|&(_, d)| d.sqrt()).sum::<f64>() / truth.len() as f64
}

/// Both ADD and ADI.
pub fn add_adi(est: &PointCloud, truth: &PointCloud) -> Result<(f64, f64)> {
    Ok((add(est, truth)?, adi(est, truth)))
}

/// Recall as a function of the distance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub thresholds: Vec<f64>,
    pub recalls: Vec<f64>,
}

/// Number of thresholds on the AUC grid: `th_max / Δ`.
pub const AUC_STEPS: usize = 100;

/// Recall at the thresholds `Δ, 2Δ, …, 0.1 d` with `Δ = 0.001 d`.
pub fn adi_recall_curve(adi_values: &[f64], diameter: f64) -> Result<RecallCurve> {
    if diameter.is_nan() || diameter <= 0.0 {
        return Err(Error::invalid(format!("diameter must be positive, got {diameter}")));
    }
    if adi_values.is_empty() {
        return Err(Error::invalid("no ADI values"));
    }
    let delta = 1e-3 * diameter;
    let thresholds: Vec<f64> = (1..=AUC_STEPS).map(|k| k as f64 * delta).collect();
    let n = adi_values.len() as f64;
    let recalls = thresholds
        .iter()
        .map(|&th| adi_values.iter().filter(|&&v| v <= th).count() as f64 / n)
        .collect();
    Ok(RecallCurve { thresholds, recalls })
}

/// Area under the ADI recall curve, normalised to [0, 1].
pub fn adi_auc(adi_values: &[f64], diameter: f64) -> Result<f64> {
    let curve = adi_recall_curve(adi_values, diameter)?;
    // Δ / th_max is exactly 1 / AUC_STEPS.
    Ok(curve.recalls.iter().sum::<f64>() / AUC_STEPS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_rigid, euler_to_rotation, rotation_z, EulerAngles, Mat3, Vec3};
    use crate::rng::seeded;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new((0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()).unwrap()
    }

    #[test]
    fn mae_examples() {
        let t = RigidTransform::new(rotation_z(0.3), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(mae(&t, &t).unwrap(), (0.0, 0.0));

        let truth = RigidTransform::identity();
        let est = RigidTransform::new(
            euler_to_rotation(&EulerAngles::new(10f64.to_radians(), 20f64.to_radians(), 30f64.to_radians())),
            Vec3::new(0.3, 0.0, 0.0),
        )
        .unwrap();
        let (r, tr) = mae(&est, &truth).unwrap();
        assert!((r - 20.0).abs() < 1e-9);
        assert!((tr - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mae_matches_independent_recomputation() {
        let mut rng = seeded(31);
        for _ in 0..50 {
            let ea = EulerAngles::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let eb = EulerAngles::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let ta = Vec3::new(rng.random(), rng.random(), rng.random());
            let tb = Vec3::new(rng.random(), rng.random(), rng.random());
            let a = RigidTransform::new(euler_to_rotation(&ea), ta).unwrap();
            let b = RigidTransform::new(euler_to_rotation(&eb), tb).unwrap();
            let want_r = ((ea.x - eb.x).abs() + (ea.y - eb.y).abs() + (ea.z - eb.z).abs()).to_degrees() / 3.0;
            let want_t = ((ta.x - tb.x).abs() + (ta.y - tb.y).abs() + (ta.z - tb.z).abs()) / 3.0;
            let (r, t) = mae(&a, &b).unwrap();
            assert!((r - want_r).abs() < 1e-9);
            assert!((t - want_t).abs() < 1e-15);
        }
    }

    #[test]
    fn iso_examples() {
        let t = RigidTransform::identity();
        assert_eq!(iso(&t, &t), (0.0, 0.0));
        let est = RigidTransform::new(rotation_z(30f64.to_radians()), Vec3::new(3.0, 4.0, 0.0)).unwrap();
        let (r, tr) = iso(&est, &t);
        assert!((r - 30.0).abs() < 1e-9);
        assert!((tr - 5.0).abs() < 1e-15);
    }

    #[test]
    fn iso_recovers_axis_angle() {
        let mut rng = seeded(32);
        for _ in 0..200 {
            let axis = Unit::new_normalize(Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let theta: f64 = rng.random_range(0.01..3.1);
            let base = euler_to_rotation(&EulerAngles::new(rng.random(), rng.random(), rng.random()));
            let residual: Mat3 = Rotation3::from_axis_angle(&axis, theta).into_inner();
            let a = RigidTransform::from_rotation(base);
            let b = RigidTransform::from_rotation(base * residual);
            assert!((iso(&a, &b).0 - theta.to_degrees()).abs() < 1e-9 * 180.0 / std::f64::consts::PI);
            // symmetric under swapping the arguments
            assert!((iso(&b, &a).0 - iso(&a, &b).0).abs() < 1e-9);
        }
    }

    #[test]
    fn iso_near_identity_is_not_nan() {
        let a = RigidTransform::from_rotation(rotation_z(1e-9));
        let (r, _) = iso(&a, &RigidTransform::identity());
        assert!(r.is_finite());
    }

    #[test]
    fn add_adi_examples() {
        let mut rng = seeded(33);
        let x = random_cloud(&mut rng, 64);
        assert_eq!(add_adi(&x, &x).unwrap(), (0.0, 0.0));
        let shifted = apply_rigid(&x, &RigidTransform::from_translation(Vec3::new(0.1, 0.0, 0.0)));
        let (d, i) = add_adi(&shifted, &x).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert!(i <= 0.1 + 1e-12);

        let y = random_cloud(&mut rng, 64);
        let brute_add = x.iter().zip(y.iter()).map(|(a, b)| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()).sum::<f64>() / 64.0;
        let brute_adi = y
            .iter()
            .map(|b| x.iter().map(|a| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / 64.0;
        let (d, i) = add_adi(&x, &y).unwrap();
        assert!((d - brute_add).abs() < 1e-12);
        assert!((i - brute_adi).abs() < 1e-12);
    }

    #[test]
    fn add_requires_equal_lengths() {
        let mut rng = seeded(34);
        let a = random_cloud(&mut rng, 5);
        let b = random_cloud(&mut rng, 6);
        assert!(matches!(add_adi(&a, &b), Err(Error::InvalidInput(_))));
        assert!(adi(&a, &b).is_finite());
    }

    #[test]
    fn auc_canonical_lists() {
        let d = 2.0;
        assert_eq!(adi_auc(&[0.0; 10], d).unwrap(), 1.0);
        assert_eq!(adi_auc(&[0.5, 0.3, 1.0], d).unwrap(), 0.0);
        let half = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!((adi_auc(&half, d).unwrap() - 0.5).abs() < 1e-12);
        assert!(adi_auc(&[0.0], 0.0).is_err());
        assert!(adi_auc(&[0.0], -1.0).is_err());
    }

    #[test]
    fn auc_threshold_grid_oracle() {
        // Direct evaluation of the recall sum on the grid Δ..th_max.
        let values = [0.0005, 0.01, 0.05, 0.099, 0.2];
        let d = 1.0;
        let mut sum = 0.0;
        for k in 1..=100 {
            let th = k as f64 * 1e-3;
            let hits = values.iter().filter(|&&v| v <= th).count() as f64;
            sum += hits / values.len() as f64 * 1e-3;
        }
        assert!((adi_auc(&values, d).unwrap() - sum / 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_is_monotone_and_bounded(values in proptest::collection::vec(0.0f64..0.3, 1..40), shrink in 0.0f64..1.0) {
            let a = adi_auc(&values, 2.0).unwrap();
            let smaller: Vec<f64> = values.iter().map(|v| v * shrink).collect();
            let b = adi_auc(&smaller, 2.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b >= a);
            let curve = adi_recall_curve(&values, 2.0).unwrap();
            prop_assert!(curve.recalls.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn adi_never_exceeds_add(seed in 0u64..500) {
            let mut rng = seeded(seed);
            let a = random_cloud(&mut rng, 20);
            let b = random_cloud(&mut rng, 20);
            let (d, i) = add_adi(&a, &b).unwrap();
            prop_assert!(i <= d + 1e-15);
        }
    }
}
