//! Point-to-point ICP baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, NearestNeighbors, PointCloud, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once the Frobenius norm of the homogeneous update falls below this.
    pub convergence_tol: f64,
    pub max_correspondence_distance: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            convergence_tol: 1e-6,
            max_correspondence_distance: 0.5,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.convergence_tol > 0.0
            && self.max_correspondence_distance > 0.0
            && self.convergence_tol.is_finite()
            && self.max_correspondence_distance.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("ICP parameters must be positive"))
        }
    }
}

/// Relative singular-value threshold below which the cross-covariance is
/// considered rank deficient.
const RANK_TOL: f64 = 1e-10;

fn kabsch_points(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::invalid(format!("point counts differ: {} vs {}", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 pairs, got {}", src.len())));
    }
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vec3>() / n;
    let md = dst.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - ms) * (d - md).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if s[order[0]] <= 0.0 || s[order[1]] <= RANK_TOL * s[order[0]] {
        return Err(Error::DegenerateInput("point set spread is rank deficient".into()));
    }
    let v = v_t.transpose();
    let mut d = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let r = v * d * u.transpose();
    Ok(RigidTransform {
        rotation: r,
        translation: md - r * ms,
    })
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
pub fn kabsch(src: &PointCloud, dst: &PointCloud) -> Result<RigidTransform> {
    kabsch_points(src.points(), dst.points())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub iterations: usize,
    pub final_rmse: f64,
    /// Matched-point RMSE at the start of every iteration, followed by the
    /// value at the returned transform.
    pub rmse_history: Vec<f64>,
}

struct Matches {
    src: Vec<Vec3>,
    dst: Vec<Vec3>,
    rmse: f64,
}

fn correspond(
    source: &PointCloud,
    target: &PointCloud,
    index: &NearestNeighbors<'_>,
    t: &RigidTransform,
    max_sq: f64,
    max_distance: f64,
) -> Result<Matches> {
    let mut m = Matches {
        src: Vec::new(),
        dst: Vec::new(),
        rmse: 0.0,
    };
    let mut sum = 0.0;
    for p in source.iter() {
        let q = t.apply_point(p);
        let (j, d2) = index.nearest(&q);
        if d2 <= max_sq {
            m.src.push(q);
            m.dst.push(target.points()[j]);
            sum += d2;
        }
    }
    if m.src.is_empty() {
        return Err(Error::NoCorrespondences { max_distance });
    }
    m.rmse = (sum / m.src.len() as f64).sqrt();
    Ok(m)
}

/// Registers `source` onto `target` starting from `init`.
pub fn icp(source: &PointCloud, target: &PointCloud, cfg: &IcpConfig, init: &RigidTransform) -> Result<IcpResult> {
    cfg.validate()?;
    let index = NearestNeighbors::new(target);
    let max_d = cfg.max_correspondence_distance;
    let max_sq = max_d * max_d;
    let mut t = *init;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut m = correspond(source, target, &index, &t, max_sq, max_d)?;
    while iterations < cfg.max_iterations {
        history.push(m.rmse);
        iterations += 1;
        let delta = kabsch_points(&m.src, &m.dst)?;
        t = delta.compose(&t);
        m = correspond(source, target, &index, &t, max_sq, max_d)?;
        let change = (delta.to_homogeneous() - nalgebra::Matrix4::identity()).norm();
        if change < cfg.convergence_tol {
            break;
        }
    }
    history.push(m.rmse);
    Ok(IcpResult {
        transform: t,
        iterations,
        final_rmse: m.rmse,
        rmse_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_rigid, euler_to_rotation, rotation_z, EulerAngles};
    use crate::metrics::iso;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn kabsch_identity_and_recovery() {
        let mut rng = seeded(1);
        let src = random_cloud(&mut rng, 50);
        let id = kabsch(&src, &src).unwrap();
        assert!((id.rotation - Mat3::identity()).amax() < 1e-12);
        assert!(id.translation.amax() < 1e-12);

        let truth = RigidTransform {
            rotation: rotation_z(17f64.to_radians()),
            translation: Vec3::new(0.1, 0.2, 0.3),
        };
        let got = kabsch(&src, &apply_rigid(&src, &truth)).unwrap();
        assert!((got.rotation - truth.rotation).amax() < 1e-9);
        assert!((got.translation - truth.translation).amax() < 1e-9);
        assert!((got.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kabsch_handles_planar_sets_and_rejects_collinear() {
        let planar = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]).unwrap();
        let t = RigidTransform::from_rotation(euler_to_rotation(&EulerAngles::new(0.3, -0.2, 0.5)));
        let got = kabsch(&planar, &apply_rigid(&planar, &t)).unwrap();
        assert!((got.rotation - t.rotation).amax() < 1e-9);

        let line = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [3.0, 3.0, 3.0]]).unwrap();
        assert!(matches!(kabsch(&line, &line), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn identical_clouds_converge_immediately() {
        let c = random_cloud(&mut seeded(2), 80);
        let r = icp(&c, &c, &IcpConfig::default(), &RigidTransform::identity()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.final_rmse < 1e-12);
        assert!((r.transform.rotation - Mat3::identity()).amax() < 1e-12);
    }

    #[test]
    fn small_offset_is_recovered() {
        let mut rng = seeded(3);
        let target = random_cloud(&mut rng, 300);
        let offset = RigidTransform {
            rotation: euler_to_rotation(&EulerAngles::new(0.0, 0.0, 5f64.to_radians())),
            translation: Vec3::new(0.05, 0.0, 0.0),
        };
        let source = apply_rigid(&target, &offset);
        let r = icp(&source, &target, &IcpConfig::default(), &RigidTransform::identity()).unwrap();
        let (rot, trans) = iso(&r.transform, &offset.inverse());
        assert!(rot < 0.01 && trans < 1e-4, "{rot} {trans}");
        for w in r.rmse_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn far_offset_has_no_correspondences() {
        let c = random_cloud(&mut seeded(4), 20);
        let far = apply_rigid(&c, &RigidTransform::from_translation(Vec3::new(10.0, 0.0, 0.0)));
        assert!(matches!(
            icp(&far, &c, &IcpConfig::default(), &RigidTransform::identity()),
            Err(Error::NoCorrespondences { .. })
        ));
    }
}
