//! Procedural shapes, the corruption pipeline that turns a clean model into
//! a (source, target, truth) training pair, and XYZ point-cloud files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, euler_to_rotation, EulerAngles, PointCloud, RigidTransform, Vec3};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    /// Two axis-aligned boxes of seed-dependent size glued off-center.
    TwoBox,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
        ShapeKind::TwoBox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
            ShapeKind::TwoBox => "two-box",
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape kind '{s}'")))
    }
}

/// Uniform point on an axis-aligned box surface with half-extents `h`.
fn box_surface(h: Vec3, rng: &mut impl Rng) -> Vec3 {
    let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
    let total: f64 = areas.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut axis = 2;
    for (i, a) in areas.iter().enumerate() {
        if u < *a {
            axis = i;
            break;
        }
        u -= a;
    }
    let mut p = Vec3::new(
        rng.random_range(-h.x..=h.x),
        rng.random_range(-h.y..=h.y),
        rng.random_range(-h.z..=h.z),
    );
    p[axis] = if rng.random::<bool>() { h[axis] } else { -h[axis] };
    p
}

fn disk(radius: f64, rng: &mut impl Rng) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..2.0 * PI);
    (r * a.cos(), r * a.sin())
}

fn sample_surface(kind: ShapeKind, n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    match kind {
        ShapeKind::Sphere => (0..n)
            .map(|_| loop {
                let v = Vec3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                let norm = v.norm();
                if norm > 1e-12 {
                    break v / norm;
                }
            })
            .collect(),
        ShapeKind::Cube => (0..n).map(|_| box_surface(Vec3::repeat(1.0), rng)).collect(),
        ShapeKind::Cylinder => {
            let (r, h) = (0.5, 1.0);
            let side = 2.0 * PI * r * 2.0 * h;
            let caps = 2.0 * PI * r * r;
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() * (side + caps) < side {
                        let a = rng.random_range(0.0..2.0 * PI);
                        Vec3::new(r * a.cos(), r * a.sin(), rng.random_range(-h..=h))
                    } else {
                        let (x, y) = disk(r, rng);
                        Vec3::new(x, y, if rng.random::<bool>() { h } else { -h })
                    }
                })
                .collect()
        }
        ShapeKind::Cone => {
            let (r, h) = (0.6, 1.5);
            let lateral = PI * r * (r * r + h * h).sqrt();
            let base = PI * r * r;
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() * (lateral + base) < lateral {
                        let rho = r * rng.random::<f64>().sqrt();
                        let a = rng.random_range(0.0..2.0 * PI);
                        Vec3::new(rho * a.cos(), rho * a.sin(), h * (1.0 - rho / r))
                    } else {
                        let (x, y) = disk(r, rng);
                        Vec3::new(x, y, 0.0)
                    }
                })
                .collect()
        }
        ShapeKind::Torus => {
            let (big, small) = (0.7, 0.25);
            (0..n)
                .map(|_| loop {
                    let theta = rng.random_range(0.0..2.0 * PI);
                    let phi = rng.random_range(0.0..2.0 * PI);
                    let ring = big + small * phi.cos();
                    if rng.random::<f64>() * (big + small) <= ring {
                        break Vec3::new(ring * theta.cos(), ring * theta.sin(), small * phi.sin());
                    }
                })
                .collect()
        }
        ShapeKind::TwoBox => {
            let a = Vec3::new(
                rng.random_range(0.3..0.6),
                rng.random_range(0.2..0.45),
                rng.random_range(0.1..0.3),
            );
            let b = Vec3::new(
                rng.random_range(0.1..0.25),
                rng.random_range(0.1..0.3),
                rng.random_range(0.15..0.4),
            );
            let offset = Vec3::new(
                a.x * rng.random_range(0.3..0.9),
                a.y * rng.random_range(-0.8..0.8),
                a.z + b.z * rng.random_range(0.5..0.9),
            );
            let area = |h: Vec3| h.y * h.z + h.x * h.z + h.x * h.y;
            let share = area(a) / (area(a) + area(b));
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < share {
                        box_surface(a, rng)
                    } else {
                        box_surface(b, rng) + offset
                    }
                })
                .collect()
        }
    }
}

/// Shifts the centroid to the origin and scales the farthest point to norm 1.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud> {
    let c = cloud.centroid();
    let radius = cloud.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    if radius <= 0.0 {
        return Err(Error::DegenerateInput("cloud collapses to a single point".into()));
    }
    Ok(cloud.map(|p| (p - c) / radius))
}

/// `n` surface samples of a procedural shape, normalized.
pub fn generate_shape(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::invalid("a shape needs at least 2 points"));
    }
    let mut rng = seeded(seed);
    normalize(&PointCloud::new(sample_surface(kind, n, &mut rng))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub n_total: usize,
    pub n_sample: usize,
    /// Upper bound of the per-axis rotation, in degrees.
    pub rot_max_deg: f64,
    /// Draw a uniform random sign for each rotation axis.
    pub signed_rotation: bool,
    pub trans_max: f64,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub shuffle: bool,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            n_total: 2048,
            n_sample: 1024,
            rot_max_deg: 45.0,
            signed_rotation: true,
            trans_max: 0.5,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
            shuffle: true,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sample == 0 || self.n_sample > self.n_total {
            return Err(Error::invalid(format!(
                "n_sample must be in 1..={}, got {}",
                self.n_total, self.n_sample
            )));
        }
        let finite_nonneg = [self.rot_max_deg, self.trans_max, self.jitter_sigma, self.jitter_clip]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite_nonneg {
            return Err(Error::invalid("corruption ranges must be finite and non-negative"));
        }
        Ok(())
    }

    /// A noise-free configuration with no pose offset.
    pub fn clean(n_total: usize, n_sample: usize) -> Self {
        Self {
            n_total,
            n_sample,
            rot_max_deg: 0.0,
            trans_max: 0.0,
            jitter_sigma: 0.0,
            ..Self::default()
        }
    }
}

/// A corrupted registration problem together with its ground truth.
#[derive(Debug, Clone)]
pub struct Pair {
    /// Observed source, `truth` applied to a jittered subsample of `clean`.
    pub source: PointCloud,
    pub target: PointCloud,
    /// The corruption that produced the source.
    pub truth: RigidTransform,
    /// The full noise-free model.
    pub clean: PointCloud,
    /// Index into `clean` of each source point.
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
}

fn random_pose(cfg: &CorruptionConfig, rng: &mut impl Rng) -> RigidTransform {
    let max = cfg.rot_max_deg.to_radians();
    let mut angles = [0.0; 3];
    for a in &mut angles {
        let mag = if max > 0.0 { rng.random_range(0.0..=max) } else { 0.0 };
        let sign = if cfg.signed_rotation && rng.random::<bool>() { -1.0 } else { 1.0 };
        *a = sign * mag;
    }
    let mut t = Vec3::zeros();
    for c in t.iter_mut() {
        *c = if cfg.trans_max > 0.0 {
            rng.random_range(-cfg.trans_max..=cfg.trans_max)
        } else {
            0.0
        };
    }
    RigidTransform::new(euler_to_rotation(&EulerAngles::from_array(angles)), t)
        .expect("Euler rotations are orthonormal")
}

fn jittered(clean: &PointCloud, idx: &[usize], cfg: &CorruptionConfig, rng: &mut impl Rng) -> Result<Vec<Vec3>> {
    let normal = Normal::new(0.0, cfg.jitter_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let clip = cfg.jitter_clip;
    Ok(idx
        .iter()
        .map(|&i| {
            let mut p = clean.points()[i];
            for c in p.iter_mut() {
                *c += normal.sample(rng).clamp(-clip, clip);
            }
            p
        })
        .collect())
}

fn sample_indices(cfg: &CorruptionConfig, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx = index::sample(rng, cfg.n_total, cfg.n_sample).into_vec();
    // Order carries no information unless shuffling is disabled.
    if !cfg.shuffle {
        idx.sort_unstable();
    }
    idx
}

/// Independently subsamples and jitters source and target, then moves the
/// source by a random pose.
pub fn make_pair(clean: &PointCloud, cfg: &CorruptionConfig, rng: &mut impl Rng) -> Result<Pair> {
    cfg.validate()?;
    if clean.len() != cfg.n_total {
        return Err(Error::invalid(format!(
            "clean model has {} points, expected {}",
            clean.len(),
            cfg.n_total
        )));
    }
    let mut source_indices = sample_indices(cfg, rng);
    let mut target_indices = sample_indices(cfg, rng);
    if cfg.shuffle {
        source_indices.shuffle(rng);
        target_indices.shuffle(rng);
    }
    let source_pts = jittered(clean, &source_indices, cfg, rng)?;
    let target_pts = jittered(clean, &target_indices, cfg, rng)?;
    let truth = random_pose(cfg, rng);
    let source = apply_rigid(&PointCloud::new(source_pts)?, &truth);
    Ok(Pair {
        source,
        target: PointCloud::new(target_pts)?,
        truth,
        clean: clean.clone(),
        source_indices,
        target_indices,
    })
}

/// Writes one `x y z` line per point using the shortest representation that
/// parses back to the same value.
pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::with_capacity(cloud.len() * 64);
    for p in cloud.iter() {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).expect("writing to a String");
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 values, found {}", fields.len())));
        }
        let mut p = Vec3::zeros();
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| parse_err(format!("'{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("'{f}' is not finite")));
            }
            p[k] = v;
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    parse_cloud(&fs::read_to_string(path)?)
}

/// A named clean model stored as `<root>/<split>/<id>.xyz`.
#[derive(Debug, Clone)]
pub struct Shape {
    pub id: String,
    pub cloud: PointCloud,
}

pub fn split_dir(root: impl AsRef<Path>, split: &str) -> PathBuf {
    root.as_ref().join(split)
}

pub fn write_split(root: impl AsRef<Path>, split: &str, shapes: &[Shape]) -> Result<()> {
    let dir = split_dir(root, split);
    fs::create_dir_all(&dir)?;
    for s in shapes {
        save_cloud(&s.cloud, dir.join(format!("{}.xyz", s.id)))?;
    }
    Ok(())
}

/// Reads every `.xyz` file of a split, sorted by id.
pub fn read_split(root: impl AsRef<Path>, split: &str) -> Result<Vec<Shape>> {
    let dir = split_dir(root, split);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "xyz"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let cloud = load_cloud(&p).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", p.display()),
                },
                other => other,
            })?;
            Ok(Shape { id, cloud })
        })
        .collect()
}

/// `count` shapes cycling through `kinds`, each with its own seed.
pub fn shape_set(kinds: &[ShapeKind], count: usize, n: usize, seed: u64) -> Result<Vec<Shape>> {
    if kinds.is_empty() {
        return Err(Error::invalid("no shape kinds given"));
    }
    (0..count)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            let cloud = generate_shape(kind, n, crate::rng::derive_seed(seed, &[i as u64]))?;
            Ok(Shape {
                id: format!("{}-{i:04}", kind.name()),
                cloud,
            })
        })
        .collect()
}
