//! Exact nearest-neighbour queries and Chamfer distances.
//!
//! Reference sets smaller than [`BRUTE_FORCE_LIMIT`] are scanned directly.
//! Larger sets are bucketed into a uniform grid searched in Chebyshev shells.
//! Both paths evaluate the same squared-distance expression and break ties
//! toward the lowest index, so they return identical results.

use super::{PointCloud, Vec3};
use crate::error::Result;
use crate::par;

pub const BRUTE_FORCE_LIMIT: usize = 4096;

/// Query blocks below this many distance evaluations stay on one thread.
const PARALLEL_WORK: usize = 1 << 16;
const QUERY_CHUNK: usize = 256;

#[inline]
fn better(d: f64, i: usize, best: (usize, f64)) -> bool {
    d < best.1 || (d == best.1 && i < best.0)
}

fn brute_nearest(reference: &[Vec3], q: &Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in reference.iter().enumerate() {
        let d = (q - p).norm_squared();
        if better(d, i, best) {
            best = (i, d);
        }
    }
    best
}

struct Grid {
    min: Vec3,
    cell: f64,
    dims: [usize; 3],
    /// CSR layout: points of cell `c` are `indices[starts[c]..starts[c + 1]]`.
    starts: Vec<usize>,
    indices: Vec<usize>,
}

impl Grid {
    fn build(points: &[Vec3]) -> Self {
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        let extent = (max - min).map(|e| e.max(1e-12));
        let volume = extent.x * extent.y * extent.z;
        // About two points per cell, capped so flat clouds do not explode.
        let mut cell = (2.0 * volume / points.len() as f64).cbrt();
        let max_extent = extent.max();
        cell = cell.max(max_extent / 256.0);
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).min(512));
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; n_cells + 1];
        let mut cell_of = Vec::with_capacity(points.len());
        let mut grid = Self {
            min,
            cell,
            dims,
            starts: Vec::new(),
            indices: Vec::new(),
        };
        for p in points {
            let c = grid.linear(grid.coords(p));
            counts[c + 1] += 1;
            cell_of.push(c);
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut indices = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            indices[fill[c]] = i;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid.indices = indices;
        grid
    }

    fn coords(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let f = ((p[k] - self.min[k]) / self.cell).floor();
            if f <= 0.0 {
                0
            } else {
                (f as usize).min(self.dims[k] - 1)
            }
        })
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn scan_cell(&self, reference: &[Vec3], q: &Vec3, c: [usize; 3], best: &mut (usize, f64)) {
        let l = self.linear(c);
        for &i in &self.indices[self.starts[l]..self.starts[l + 1]] {
            let d = (q - reference[i]).norm_squared();
            if better(d, i, *best) {
                *best = (i, d);
            }
        }
    }

    /// Squared lower bound on the distance from `q` to any point outside the
    /// block of cells within Chebyshev radius `r` of `c`.
    fn outside_bound(&self, q: &Vec3, c: [usize; 3], r: usize) -> f64 {
        let mut bound = f64::INFINITY;
        for k in 0..3 {
            if c[k] > r {
                let lo = self.min[k] + (c[k] - r) as f64 * self.cell;
                bound = bound.min(q[k] - lo);
            }
            if c[k] + r + 1 < self.dims[k] {
                let hi = self.min[k] + (c[k] + r + 1) as f64 * self.cell;
                bound = bound.min(hi - q[k]);
            }
        }
        if bound.is_infinite() {
            bound
        } else {
            let b = bound.max(0.0);
            b * b
        }
    }

    fn nearest(&self, reference: &[Vec3], q: &Vec3) -> (usize, f64) {
        let c = self.coords(q);
        let mut best = (usize::MAX, f64::INFINITY);
        let max_r = self.dims.iter().copied().max().unwrap_or(1);
        for r in 0..=max_r {
            let lo = c.map(|v| v.saturating_sub(r));
            let hi = [0, 1, 2].map(|k| (c[k] + r).min(self.dims[k] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let on_shell = x.abs_diff(c[0]) == r || y.abs_diff(c[1]) == r || z.abs_diff(c[2]) == r;
                        if on_shell {
                            self.scan_cell(reference, q, [x, y, z], &mut best);
                        }
                    }
                }
            }
            let bound = self.outside_bound(q, c, r);
            // Equality must keep searching: a farther cell may hold a lower index at the same distance.
            if best.1 < bound || bound.is_infinite() {
                break;
            }
        }
        best
    }
}

/// Exact nearest-neighbour index over a fixed reference set.
pub struct NearestNeighbors<'a> {
    reference: &'a [Vec3],
    grid: Option<Grid>,
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(reference: &'a PointCloud) -> Self {
        Self::with_limit(reference, BRUTE_FORCE_LIMIT)
    }

    /// Uses the grid once the reference holds at least `limit` points.
    pub fn with_limit(reference: &'a PointCloud, limit: usize) -> Self {
        let pts = reference.points();
        let grid = (pts.len() >= limit).then(|| Grid::build(pts));
        Self { reference: pts, grid }
    }

    /// Index and squared distance of the closest reference point.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        match &self.grid {
            Some(g) => g.nearest(self.reference, q),
            None => brute_nearest(self.reference, q),
        }
    }

    /// Nearest neighbour for every query point, in query order.
    pub fn query_all(&self, queries: &PointCloud) -> Vec<(usize, f64)> {
        let q = queries.points();
        if q.len() * self.reference.len() < PARALLEL_WORK {
            return q.iter().map(|p| self.nearest(p)).collect();
        }
        let chunks: Vec<&[Vec3]> = q.chunks(QUERY_CHUNK).collect();
        par::map(&chunks, |chunk| chunk.iter().map(|p| self.nearest(p)).collect::<Vec<_>>())
            .into_iter()
            .flatten()
            .collect()
    }
}

/// Nearest neighbour of every point of `queries` in `reference`.
pub fn nearest(queries: &PointCloud, reference: &PointCloud) -> Vec<(usize, f64)> {
    NearestNeighbors::new(reference).query_all(queries)
}

/// Mean over `x` of the squared distance to its nearest point in `y`.
///
/// Asymmetric by definition. Both clouds are non-empty by construction, so
/// the `Result` only exists to keep the signature aligned with the other
/// distance functions.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    let total: f64 = nearest(x, y).iter().map(|&(_, d)| d).sum();
    Ok(total / x.len() as f64)
}

/// `CD(x, y_clean) + CD(y, x_clean)`.
pub fn modified_chamfer(x: &PointCloud, y: &PointCloud, x_clean: &PointCloud, y_clean: &PointCloud) -> Result<f64> {
    Ok(chamfer(x, y_clean)? + chamfer(y, x_clean)?)
}
