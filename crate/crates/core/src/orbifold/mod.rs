//! Orbifolds given by finite atlases: local groups, singular locus, and the
//! orbit and tangent equivalence relations.
//!
//! Identifications between charts are searched to depth one: a source group
//! element, at most one declared change of charts, then a target group
//! element. Atlases are expected to declare every change this search needs.

mod atlas;
mod group;

pub use atlas::{
    Atlas, AtlasSpec, ChangeOfCharts, ChangeSpec, ChartId, ChartSpec, GroupSpec, MapSpec, OrbifoldChart, OrbitPoint,
    TangentOrbVector, TOL_ALG,
};
pub use group::{AffineMap, FiniteGroup, GroupElement, MAX_GROUP_ORDER};

use std::cmp::Ordering;

use crate::error::Result;
use crate::linalg::{dist, Mat};
use crate::scalar::Scalar;

/// One depth-1 identification `h ∘ λ ∘ g` between two charts.
#[derive(Clone, Debug, PartialEq)]
pub struct Transfer {
    pub source_group: usize,
    pub change: Option<usize>,
    pub target_group: usize,
}

impl Transfer {
    pub fn map<T: Scalar>(&self, atlas: &Atlas<T>, from: ChartId) -> AffineMap<T> {
        let g = atlas.chart(from).group.element(self.source_group).map().clone();
        let (to, lambda) = match self.change {
            Some(k) => {
                let c = &atlas.changes()[k];
                (c.target, c.map.map().compose(&g))
            }
            None => (from, g),
        };
        atlas.chart(to).group.element(self.target_group).map().compose(&lambda)
    }

    pub fn target<T: Scalar>(&self, atlas: &Atlas<T>, from: ChartId) -> ChartId {
        self.change.map_or(from, |k| atlas.changes()[k].target)
    }
}

impl<T: Scalar> Atlas<T> {
    /// Depth-1 maps carrying `x ∈ from` into chart `to` (before the target group acts).
    fn routes(&self, from: ChartId, x: &[T], to: ChartId) -> Vec<(Option<usize>, usize, Vec<T>)> {
        let src = self.chart(from);
        let mut out = Vec::new();
        if from == to {
            for (i, g) in src.group.elements().iter().enumerate() {
                out.push((None, i, g.apply(x)));
            }
        }
        for (k, ch) in self.changes_from(from).filter(|(_, c)| c.target == to) {
            for (i, g) in src.group.elements().iter().enumerate() {
                let gx = g.apply(x);
                if ch.region.contains(&gx, -self.tol()) {
                    out.push((Some(k), i, ch.map.apply(&gx)));
                }
            }
        }
        out
    }

    /// Depth-1 routes `λ ∘ g` through declared changes out of `from` whose
    /// domain contains `g·x` with clearance above `margin`, with the image of `x`.
    pub fn change_routes(&self, from: ChartId, x: &[T], margin: T) -> Vec<(Transfer, Vec<T>)> {
        let src = self.chart(from);
        let mut out = Vec::new();
        for (k, ch) in self.changes_from(from) {
            for (i, g) in src.group.elements().iter().enumerate() {
                let gx = g.apply(x);
                if ch.region.contains(&gx, margin) {
                    let t = Transfer {
                        source_group: i,
                        change: Some(k),
                        target_group: 0,
                    };
                    out.push((t, ch.map.apply(&gx)));
                }
            }
        }
        out
    }

    /// Some lift of the orbit of `x ∈ from` in chart `to`, if one is reachable.
    pub fn image_in(&self, from: ChartId, x: &[T], to: ChartId) -> Option<Vec<T>> {
        if from == to {
            return Some(x.to_vec());
        }
        self.routes(from, x, to).into_iter().next().map(|(_, _, y)| y)
    }

    /// Indices of the group elements fixing `x` within tolerance.
    pub fn isotropy_indices(&self, chart: ChartId, x: &[T]) -> Result<Vec<usize>> {
        let c = self.chart(chart);
        c.check_inside(x)?;
        Ok(c.group
            .elements()
            .iter()
            .enumerate()
            .filter(|(_, g)| dist(&g.apply(x), x) < self.tol())
            .map(|(i, _)| i)
            .collect())
    }

    /// Local group `G_x`.
    pub fn isotropy_group(&self, chart: ChartId, x: &[T]) -> Result<FiniteGroup<T>> {
        let idx = self.isotropy_indices(chart, x)?;
        self.chart(chart).group.subgroup(&idx, self.tol())
    }

    pub fn is_singular(&self, chart: ChartId, x: &[T]) -> Result<bool> {
        Ok(self.isotropy_indices(chart, x)?.len() > 1)
    }

    /// Smallest distance between `q.rep` and a depth-1 image of `p.rep`, or
    /// `None` when no identification connects the two charts.
    pub fn quotient_distance(&self, p: &OrbitPoint<T>, q: &OrbitPoint<T>) -> Option<T> {
        let direct = self.directed_distance(p, q);
        let reverse = self.directed_distance(q, p);
        match (direct, reverse) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn directed_distance(&self, p: &OrbitPoint<T>, q: &OrbitPoint<T>) -> Option<T> {
        let target = &self.chart(q.chart).group;
        self.routes(p.chart, &p.rep, q.chart)
            .iter()
            .flat_map(|(_, _, y)| target.elements().iter().map(move |h| dist(&h.apply(y), &q.rep)))
            .reduce(T::min)
    }

    pub fn orbit_equal(&self, p: &OrbitPoint<T>, q: &OrbitPoint<T>) -> bool {
        self.quotient_distance(p, q).is_some_and(|d| d < self.tol())
    }

    /// Lexicographically smallest orbit element (ties within tolerance fall
    /// through to the next coordinate).
    pub fn canonical_representative(&self, p: &OrbitPoint<T>) -> Vec<T> {
        let tol = self.tol();
        self.chart(p.chart)
            .group
            .orbit(&p.rep)
            .into_iter()
            .min_by(|a, b| lex_cmp(a, b, tol))
            .expect("groups contain the identity")
    }

    pub fn canonical_point(&self, p: &OrbitPoint<T>) -> OrbitPoint<T> {
        OrbitPoint {
            chart: p.chart,
            rep: self.canonical_representative(p),
        }
    }

    /// Identification carrying `xi` onto `zeta` through `(λ(x), Tλ·v)`, if any.
    pub fn tangent_witness(&self, xi: &TangentOrbVector<T>, zeta: &TangentOrbVector<T>) -> Option<Transfer> {
        self.tangent_witness_within(xi, zeta, self.tol())
    }

    /// [`Atlas::tangent_witness`] with an explicit tolerance.
    pub fn tangent_witness_within(
        &self,
        xi: &TangentOrbVector<T>,
        zeta: &TangentOrbVector<T>,
        tol: T,
    ) -> Option<Transfer> {
        let target = &self.chart(zeta.chart).group;
        for (change, gi, y) in self.routes(xi.chart, &xi.base, zeta.chart) {
            for (hi, h) in target.elements().iter().enumerate() {
                if dist(&h.apply(&y), &zeta.base) >= tol {
                    continue;
                }
                let t = Transfer {
                    source_group: gi,
                    change,
                    target_group: hi,
                };
                let v = t.map(self, xi.chart).apply_linear(&xi.vec);
                if dist(&v, &zeta.vec) < tol {
                    return Some(t);
                }
            }
        }
        None
    }

    pub fn tangent_equal(&self, xi: &TangentOrbVector<T>, zeta: &TangentOrbVector<T>) -> bool {
        self.tangent_witness(xi, zeta).is_some() || self.tangent_witness(zeta, xi).is_some()
    }
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T], tol: T) -> Ordering {
    for (&x, &y) in a.iter().zip(b) {
        if (x - y).abs() >= tol {
            return x.partial_cmp(&y).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

/// Orthonormal basis of `⋂_g ker(A_g − I)`.
pub fn fixed_subspace<T: Scalar>(elements: &[GroupElement<T>], tol: T) -> Vec<Vec<T>> {
    let Some(first) = elements.first() else {
        return Vec::new();
    };
    let d = first.linear_part().rows();
    let mut rows: Vec<Vec<T>> = Vec::new();
    for g in elements {
        let m = g.linear_part().sub(&Mat::identity(d));
        rows.extend(m.to_rows());
    }
    if rows.is_empty() {
        rows.push(vec![T::zero(); d]);
    }
    Mat::from_rows(&rows).null_space(tol.sqrt())
}

/// Euclidean distance from `v` to the span of an orthonormal basis.
pub fn distance_to_subspace<T: Scalar>(v: &[T], basis: &[Vec<T>]) -> T {
    let mut r = v.to_vec();
    for b in basis {
        let c = crate::linalg::dot(&r, b);
        r = crate::linalg::axpy(&r, -c, b);
    }
    crate::linalg::norm(&r)
}
