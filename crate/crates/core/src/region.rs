//! Chart domains: open balls and axis-aligned boxes in ℝᵈ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dist, sub};
use crate::scalar::Scalar;

/// Open connected region of ℝᵈ.
#[derive(Clone, Debug, PartialEq)]
pub enum Region<T> {
    Ball { center: Vec<T>, radius: T },
    Box { center: Vec<T>, halfwidths: Vec<T> },
}

/// Serializable form used by config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { center: Vec<f64>, halfwidths: Vec<f64> },
}

impl RegionSpec {
    pub fn build<T: Scalar>(&self) -> Region<T> {
        let cv = |v: &[f64]| v.iter().map(|&x| T::of(x)).collect::<Vec<_>>();
        match self {
            RegionSpec::Ball { center, radius } => Region::Ball {
                center: cv(center),
                radius: T::of(*radius),
            },
            RegionSpec::Box { center, halfwidths } => Region::Box {
                center: cv(center),
                halfwidths: cv(halfwidths),
            },
        }
    }
}

impl<T: Scalar> Region<T> {
    pub fn ball(center: Vec<T>, radius: T) -> Self {
        Region::Ball { center, radius }
    }

    pub fn cube(center: Vec<T>, halfwidth: T) -> Self {
        let hw = vec![halfwidth; center.len()];
        Region::Box { center, halfwidths: hw }
    }

    pub fn to_spec(&self) -> RegionSpec {
        let cv = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        match self {
            Region::Ball { center, radius } => RegionSpec::Ball {
                center: cv(center),
                radius: radius.as_f64(),
            },
            Region::Box { center, halfwidths } => RegionSpec::Box {
                center: cv(center),
                halfwidths: cv(halfwidths),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn center(&self) -> &[T] {
        match self {
            Region::Ball { center, .. } | Region::Box { center, .. } => center,
        }
    }

    /// Characteristic size: the radius, or the smallest half-width.
    pub fn scale(&self) -> T {
        match self {
            Region::Ball { radius, .. } => *radius,
            Region::Box { halfwidths, .. } => halfwidths.iter().copied().fold(T::infinity(), T::min),
        }
    }

    /// Signed distance to the boundary, positive inside (max-norm face
    /// distance for boxes).
    pub fn clearance(&self, x: &[T]) -> T {
        match self {
            Region::Ball { center, radius } => *radius - dist(x, center),
            Region::Box { center, halfwidths } => x
                .iter()
                .zip(center)
                .zip(halfwidths)
                .map(|((&xi, &ci), &hi)| hi - (xi - ci).abs())
                .fold(T::infinity(), T::min),
        }
    }

    /// `x` lies inside with at least `margin` to spare.
    #[inline]
    pub fn contains(&self, x: &[T], margin: T) -> bool {
        self.clearance(x) > margin
    }

    /// Region homothetic about its center by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        match self {
            Region::Ball { center, radius } => Region::Ball {
                center: center.clone(),
                radius: *radius * factor,
            },
            Region::Box { center, halfwidths } => Region::Box {
                center: center.clone(),
                halfwidths: halfwidths.iter().map(|&h| h * factor).collect(),
            },
        }
    }

    /// Region with every face moved inward by `margin`.
    pub fn shrunk(&self, margin: T) -> Self {
        match self {
            Region::Ball { center, radius } => Region::Ball {
                center: center.clone(),
                radius: (*radius - margin).max(T::zero()),
            },
            Region::Box { center, halfwidths } => Region::Box {
                center: center.clone(),
                halfwidths: halfwidths.iter().map(|&h| (h - margin).max(T::zero())).collect(),
            },
        }
    }

    /// Half-extent of the bounding box along each axis.
    pub fn half_extent(&self) -> Vec<T> {
        match self {
            Region::Ball { center, radius } => vec![*radius; center.len()],
            Region::Box { halfwidths, .. } => halfwidths.clone(),
        }
    }

    /// Tensor grid over the closed bounding box with `per_axis` nodes per
    /// axis (reduced until the node count is at most `cap`), keeping nodes
    /// whose clearance is non-negative.
    pub fn grid(&self, per_axis: usize, cap: usize) -> Vec<Vec<T>> {
        let d = self.dim();
        let mut n = per_axis.max(1);
        while n > 1 && n.checked_pow(d as u32).is_none_or(|c| c > cap) {
            n -= 1;
        }
        let c = self.center();
        let h = self.half_extent();
        let coords: Vec<Vec<T>> = (0..d)
            .map(|k| {
                if n == 1 {
                    vec![c[k]]
                } else {
                    (0..n)
                        .map(|i| c[k] - h[k] + (h[k] + h[k]) * T::nat(i) / T::nat(n - 1))
                        .collect()
                }
            })
            .collect();
        let slack = self.scale() * T::of(1e-12);
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let p: Vec<T> = (0..d).map(|k| coords[k][idx[k]]).collect();
            if self.clearance(&p) >= -slack {
                out.push(p);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return out;
                }
                idx[k] += 1;
                if idx[k] < coords[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Grid spacing of [`Region::grid`] along the coarsest axis.
    pub fn grid_spacing(&self, per_axis: usize, cap: usize) -> T {
        let d = self.dim();
        let mut n = per_axis.max(2);
        while n > 2 && n.checked_pow(d as u32).is_none_or(|c| c > cap) {
            n -= 1;
        }
        let h = self.half_extent();
        h.iter().fold(T::zero(), |m, &hk| m.max((hk + hk) / T::nat(n - 1)))
    }

    /// Points on the boundary: a grid projected radially (balls) or onto
    /// the nearest face (boxes).
    pub fn boundary_samples(&self, per_axis: usize) -> Vec<Vec<T>> {
        let c = self.center().to_vec();
        let pts = self.grid(per_axis, 4096);
        let mut out = Vec::new();
        for p in pts {
            let offset = sub(&p, &c);
            match self {
                Region::Ball { radius, .. } => {
                    let r = crate::linalg::norm(&offset);
                    if r > T::zero() {
                        out.push(crate::linalg::axpy(&c, *radius / r, &offset));
                    }
                }
                Region::Box { halfwidths, .. } => {
                    let (k, _) = offset
                        .iter()
                        .zip(halfwidths)
                        .map(|(&o, &h)| (o / h).abs())
                        .enumerate()
                        .fold(
                            (0, T::neg_infinity()),
                            |best, (i, v)| {
                                if v > best.1 {
                                    (i, v)
                                } else {
                                    best
                                }
                            },
                        );
                    let mut q = p.clone();
                    let sign = if offset[k] < T::zero() { -T::one() } else { T::one() };
                    q[k] = c[k] + sign * halfwidths[k];
                    out.push(q);
                }
            }
        }
        out
    }

    /// Uniform sample from the region shrunk by `margin` (rejection from the bounding box).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, margin: T) -> Vec<T> {
        let c = self.center();
        let h = self.half_extent();
        loop {
            let p: Vec<T> = c
                .iter()
                .zip(&h)
                .map(|(&ci, &hi)| ci + hi * T::of(rng.gen_range(-1.0..1.0)))
                .collect();
            if self.contains(&p, margin) {
                return p;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_clearance_and_contains() {
        let b = Region::ball(vec![0.0, 0.0], 5.0);
        assert_eq!(b.clearance(&[3.0, 4.0]), 0.0);
        assert!(b.contains(&[1.0, 1.0], 0.5));
        assert!(!b.contains(&[3.0, 4.0], 0.0));
    }

    #[test]
    fn box_clearance_uses_nearest_face() {
        let r: Region<f64> = Region::Box {
            center: vec![1.0, 0.0],
            halfwidths: vec![0.5, 2.0],
        };
        assert!((r.clearance(&[1.2, 1.9]) - 0.1).abs() < 1e-12);
        assert_eq!(r.scale(), 0.5);
    }

    #[test]
    fn grid_respects_cap_and_region() {
        let b = Region::ball(vec![0.0, 0.0, 0.0], 1.0);
        let g = b.grid(17, 4096);
        assert!(g.len() <= 4096);
        assert!(g.iter().all(|p| b.clearance(p) >= -1e-12));
        let r = Region::cube(vec![0.0, 0.0], 1.0);
        assert_eq!(r.grid(9, 4096).len(), 81);
    }

    #[test]
    fn boundary_samples_lie_on_boundary() {
        for r in [
            Region::<f64>::ball(vec![0.5, -1.0], 2.0),
            Region::Box {
                center: vec![0.0, 0.0],
                halfwidths: vec![1.0, 3.0],
            },
        ] {
            for p in r.boundary_samples(7) {
                assert!(r.clearance(&p).abs() < 1e-12, "{p:?}");
            }
        }
    }
}
