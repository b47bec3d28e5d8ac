//! Uniform-grid spatial index for nearest-neighbor queries over point sets.

use super::linear::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct PointGrid<S> {
    points: Vec<Vec3<S>>,
    lo: Vec3<S>,
    cell: S,
    dims: [usize; 3],
    /// point indices bucketed per cell
    buckets: Vec<Vec<u32>>,
}

impl<S: Real> PointGrid<S> {
    pub fn build(points: Vec<Vec3<S>>) -> Self {
        assert!(!points.is_empty(), "PointGrid needs at least one point");
        let mut lo = Vec3::splat(S::infinity());
        let mut hi = Vec3::splat(S::neg_infinity());
        for p in &points {
            lo = lo.min_elem(*p);
            hi = hi.max_elem(*p);
        }
        let ext = hi - lo;
        let diag = ext.norm().max(S::from_f64_(1e-9));
        // aim for ~ n^(1/3) cells per axis
        let n = points.len() as f64;
        let per_axis = n.cbrt().ceil().max(1.0) as usize;
        let cell = (diag / S::from_usize_(per_axis)).max(S::from_f64_(1e-9));
        let dim = |e: S| ((e / cell).to_f64_().floor() as usize + 1).max(1);
        let dims = [dim(ext.x), dim(ext.y), dim(ext.z)];
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let grid = PointGrid {
            points: Vec::new(),
            lo,
            cell,
            dims,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let c = grid.cell_of(*p);
            buckets[grid.bucket_index(c)].push(i as u32);
        }
        PointGrid {
            points,
            lo,
            cell,
            dims,
            buckets,
        }
    }

    fn cell_of(&self, p: Vec3<S>) -> [usize; 3] {
        let rel = p - self.lo;
        let f = |x: S, d: usize| {
            let c = (x / self.cell).to_f64_().floor();
            (c.max(0.0) as usize).min(d - 1)
        };
        [
            f(rel.x, self.dims[0]),
            f(rel.y, self.dims[1]),
            f(rel.z, self.dims[2]),
        ]
    }

    fn bucket_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Index and squared distance of the nearest point; expanding-ring
    /// search guarantees exactness.
    pub fn nearest(&self, q: Vec3<S>) -> (usize, S) {
        let c = self.cell_of(q);
        let mut best = (usize::MAX, S::infinity());
        let max_ring = *self.dims.iter().max().unwrap();
        for ring in 0..=max_ring {
            // once a candidate is found, one extra ring settles exactness
            if best.0 != usize::MAX {
                let safe = S::from_usize_(ring.saturating_sub(1)) * self.cell;
                if best.1 <= safe * safe {
                    break;
                }
            }
            let mut any_cell = false;
            for dz in -(ring as isize)..=(ring as isize) {
                for dy in -(ring as isize)..=(ring as isize) {
                    for dx in -(ring as isize)..=(ring as isize) {
                        if dx.unsigned_abs().max(dy.unsigned_abs()).max(dz.unsigned_abs())
                            != ring
                        {
                            continue;
                        }
                        let (ix, iy, iz) = (
                            c[0] as isize + dx,
                            c[1] as isize + dy,
                            c[2] as isize + dz,
                        );
                        if ix < 0
                            || iy < 0
                            || iz < 0
                            || ix >= self.dims[0] as isize
                            || iy >= self.dims[1] as isize
                            || iz >= self.dims[2] as isize
                        {
                            continue;
                        }
                        any_cell = true;
                        let b = self.bucket_index([ix as usize, iy as usize, iz as usize]);
                        for &pi in &self.buckets[b] {
                            let d = (self.points[pi as usize] - q).norm_sq();
                            if d < best.1 {
                                best = (pi as usize, d);
                            }
                        }
                    }
                }
            }
            if !any_cell && ring > 0 && best.0 != usize::MAX {
                break;
            }
        }
        best
    }

    pub fn points(&self) -> &[Vec3<S>] {
        &self.points
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force_nearest() {
        let mut rng = StdRng::seed_from_u64(11);
        let pts: Vec<Vec3<f64>> = (0..500)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let grid = PointGrid::build(pts.clone());
        for _ in 0..200 {
            let q = Vec3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
            );
            let (gi, gd) = grid.nearest(q);
            let (bi, bd) = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (*p - q).norm_sq()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert_eq!(gi, bi);
            assert!((gd - bd).abs() < 1e-15);
        }
    }
}
