//! Bidirectional Chamfer distance with exact nearest-neighbour pairing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Scalar;

/// Combined set size from which a uniform grid replaces the brute-force scan.
pub const BRUTE_FORCE_LIMIT: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChamferReport<T> {
    /// `forward_term + backward_term`.
    pub value: T,
    /// Mean over `X` of the squared distance to the nearest point of `G`.
    pub forward_term: T,
    /// Mean over `G` of the squared distance to the nearest point of `X`.
    pub backward_term: T,
    /// Nearest `G` index for each point of `X`.
    pub forward_pairs: Vec<usize>,
    /// Nearest `X` index for each point of `G`.
    pub backward_pairs: Vec<usize>,
}

/// Exact nearest-neighbour index over a fixed point set.
pub enum NearestIndex<'a, T> {
    Brute(&'a [Vec3<T>]),
    Grid(Box<UniformGrid<'a, T>>),
}

impl<'a, T: Scalar> NearestIndex<'a, T> {
    pub fn brute(points: &'a [Vec3<T>]) -> Self {
        NearestIndex::Brute(points)
    }

    pub fn grid(points: &'a [Vec3<T>]) -> Self {
        NearestIndex::Grid(Box::new(UniformGrid::new(points)))
    }

    /// Index and squared distance of the nearest point; ties go to the
    /// smaller index.
    pub fn nearest(&self, q: Vec3<T>) -> (usize, T) {
        match self {
            NearestIndex::Brute(pts) => brute_nearest(pts, q),
            NearestIndex::Grid(g) => g.nearest(q),
        }
    }
}

#[inline]
fn better<T: Scalar>(d: T, k: usize, best_d: T, best_k: usize) -> bool {
    d < best_d || (d == best_d && k < best_k)
}

fn brute_nearest<T: Scalar>(pts: &[Vec3<T>], q: Vec3<T>) -> (usize, T) {
    let mut best = (usize::MAX, T::infinity());
    for (k, p) in pts.iter().enumerate() {
        let d = p.dist_squared(q);
        if better(d, k, best.1, best.0) {
            best = (k, d);
        }
    }
    best
}

/// Uniform bucket grid; queries scan Chebyshev rings of cells until the
/// ring lower bound exceeds the best distance found.
pub struct UniformGrid<'a, T> {
    points: &'a [Vec3<T>],
    origin: Vec3<T>,
    cell: T,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a, T: Scalar> UniformGrid<'a, T> {
    pub fn new(points: &'a [Vec3<T>]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let ext = hi - lo;
        let diag = ext.norm().max(T::of(1e-12));
        let pad = diag * T::of(1e-3);
        let vol = (ext.x + pad) * (ext.y + pad) * (ext.z + pad);
        let cell = (vol / T::of(points.len() as f64)).cbrt().max(pad);
        let dim = |e: T| -> usize {
            let d = (e / cell).floor().to_f64_lossy() as usize + 1;
            d.clamp(1, 512)
        };
        let dims = [dim(ext.x), dim(ext.y), dim(ext.z)];
        let mut grid = UniformGrid {
            points,
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (k, &p) in points.iter().enumerate() {
            let c = grid.cell_of(p);
            let idx = grid.flat(c);
            grid.buckets[idx].push(k as u32);
        }
        grid
    }

    fn cell_of(&self, p: Vec3<T>) -> [isize; 3] {
        let rel = p - self.origin;
        let f = |x: T, d: usize| -> isize {
            let c = (x / self.cell).floor().to_f64_lossy();
            (c.max(0.0) as isize).min(d as isize - 1)
        };
        [f(rel.x, self.dims[0]), f(rel.y, self.dims[1]), f(rel.z, self.dims[2])]
    }

    #[inline]
    fn flat(&self, c: [isize; 3]) -> usize {
        (c[0] as usize * self.dims[1] + c[1] as usize) * self.dims[2] + c[2] as usize
    }

    pub fn nearest(&self, q: Vec3<T>) -> (usize, T) {
        let c = self.cell_of(q);
        let max_r = *self.dims.iter().max().unwrap() as isize;
        let mut best = (usize::MAX, T::infinity());
        for r in 0..=max_r {
            for i in c[0] - r..=c[0] + r {
                if i < 0 || i >= self.dims[0] as isize {
                    continue;
                }
                for j in c[1] - r..=c[1] + r {
                    if j < 0 || j >= self.dims[1] as isize {
                        continue;
                    }
                    let on_shell_ij = (i - c[0]).abs() == r || (j - c[1]).abs() == r;
                    let step = if on_shell_ij || r == 0 { 1 } else { 2 * r as usize };
                    for k in (c[2] - r..=c[2] + r).step_by(step) {
                        if k < 0 || k >= self.dims[2] as isize {
                            continue;
                        }
                        for &p in &self.buckets[self.flat([i, j, k])] {
                            let p = p as usize;
                            let d = self.points[p].dist_squared(q);
                            if better(d, p, best.1, best.0) {
                                best = (p, d);
                            }
                        }
                    }
                }
            }
            // every unscanned cell is at least r cells away
            let bound = self.cell * T::of(r as f64);
            if best.0 != usize::MAX && best.1 < bound * bound {
                break;
            }
        }
        best
    }
}

fn index_for<T: Scalar>(points: &[Vec3<T>], total: usize) -> NearestIndex<'_, T> {
    if total < BRUTE_FORCE_LIMIT {
        NearestIndex::brute(points)
    } else {
        NearestIndex::grid(points)
    }
}

/// `F(X, G) = mean_x min_g |x-g|² + mean_g min_x |g-x|²`.
pub fn chamfer<T: Scalar>(x: &[Vec3<T>], g: &[Vec3<T>]) -> Result<ChamferReport<T>> {
    if x.is_empty() || g.is_empty() {
        return Err(Error::validation("chamfer distance needs two non-empty point sets"));
    }
    let total = x.len() + g.len();
    let gi = index_for(g, total);
    let mut fwd = T::zero();
    let mut forward_pairs = Vec::with_capacity(x.len());
    for &p in x {
        let (k, d) = gi.nearest(p);
        fwd += d;
        forward_pairs.push(k);
    }
    let xi = index_for(x, total);
    let mut bwd = T::zero();
    let mut backward_pairs = Vec::with_capacity(g.len());
    for &p in g {
        let (k, d) = xi.nearest(p);
        bwd += d;
        backward_pairs.push(k);
    }
    let forward_term = fwd / T::of(x.len() as f64);
    let backward_term = bwd / T::of(g.len() as f64);
    Ok(ChamferReport {
        value: forward_term + backward_term,
        forward_term,
        backward_term,
        forward_pairs,
        backward_pairs,
    })
}

/// Chamfer value and its gradient with respect to `X`, holding the
/// nearest-neighbour pairing fixed.
pub fn chamfer_grad<T: Scalar>(
    x: &[Vec3<T>],
    g: &[Vec3<T>],
) -> Result<(ChamferReport<T>, Vec<Vec3<T>>)> {
    let rep = chamfer(x, g)?;
    let grad = chamfer_grad_from(&rep, x, g);
    Ok((rep, grad))
}

pub fn chamfer_grad_from<T: Scalar>(
    rep: &ChamferReport<T>,
    x: &[Vec3<T>],
    g: &[Vec3<T>],
) -> Vec<Vec3<T>> {
    let two = T::of(2.0);
    let cx = two / T::of(x.len() as f64);
    let cg = two / T::of(g.len() as f64);
    let mut grad: Vec<Vec3<T>> = x
        .iter()
        .zip(&rep.forward_pairs)
        .map(|(&p, &k)| (p - g[k]) * cx)
        .collect();
    for (&q, &k) in g.iter().zip(&rep.backward_pairs) {
        grad[k] += (x[k] - q) * cg;
    }
    grad
}

/// One-sided term `mean_y min_x |y-x|²` (each observed point against the
/// nearest model point) with its gradient with respect to `X`.
pub fn directed_chamfer_grad<T: Scalar>(
    observed: &[Vec3<T>],
    x: &[Vec3<T>],
) -> Result<(T, Vec<Vec3<T>>)> {
    if observed.is_empty() || x.is_empty() {
        return Err(Error::validation("directed chamfer needs two non-empty point sets"));
    }
    let xi = index_for(x, observed.len() + x.len());
    let c = T::of(2.0 / observed.len() as f64);
    let mut value = T::zero();
    let mut grad = vec![Vec3::zero(); x.len()];
    for &y in observed {
        let (k, d) = xi.nearest(y);
        value += d;
        grad[k] += (x[k] - y) * c;
    }
    Ok((value / T::of(observed.len() as f64), grad))
}
