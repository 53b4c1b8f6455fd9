//! Equivariant diffeomorphisms of `ℝᵈ` under a finite linear group:
//! the isolated-fixed-point condition, weak equivalences `h∘g = α(g)∘h`,
//! descent to the quotient and the kernel of descent.

use std::fmt;
use std::sync::Arc;

use crate::diffeo::LocalDiffeo;
use crate::error::{Error, Result};
use crate::linalg::{dist, Mat};
use crate::metric::ChartMap;
use crate::orbifold::{fixed_subspace, Atlas, ChartId, FiniteGroup, OrbitPoint, MAX_GROUP_ORDER};
use crate::poly::PolyField;
use crate::scalar::Scalar;

/// `true` iff no non-identity element fixes a nonzero vector.
pub fn check_is<T: Scalar>(group: &FiniteGroup<T>, tol: T) -> Result<bool> {
    if group.elements().iter().any(|g| !g.is_linear()) {
        return Err(Error::InvalidArgument(
            "isolated-fixed-point check needs a linear group".into(),
        ));
    }
    let d = group.dim();
    Ok(group
        .elements()
        .iter()
        .filter(|g| g.distance(&crate::orbifold::GroupElement::identity(d)) > tol)
        .all(|g| fixed_subspace(std::slice::from_ref(g), tol).is_empty()))
}

/// Polynomial map `x ↦ p(x)`.
#[derive(Clone, Debug)]
pub struct PolyMap<T: Scalar>(pub PolyField<T>);

impl<T: Scalar> ChartMap<T> for PolyMap<T> {
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.0.eval(x))
    }

    fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        Ok(self.0.jacobian(x))
    }
}

/// `maps[n-1] ∘ … ∘ maps[0]`.
#[derive(Clone, Debug)]
pub struct Composite<T: Scalar>(pub Vec<Arc<dyn ChartMap<T>>>);

impl<T: Scalar> ChartMap<T> for Composite<T> {
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.0.iter().try_fold(x.to_vec(), |y, m| m.apply(&y))
    }

    fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        let mut y = x.to_vec();
        let mut j = Mat::identity(x.len());
        for m in &self.0 {
            j = m.jacobian(&y)?.mul(&j);
            y = m.apply(&y)?;
        }
        Ok(j)
    }
}

/// The lift `e^σ` of a local diffeomorphism on one chart.
#[derive(Clone)]
pub struct DiffeoLift<T: Scalar> {
    pub diffeo: LocalDiffeo<T>,
    pub chart: ChartId,
}

impl<T: Scalar> fmt::Debug for DiffeoLift<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffeoLift").field("chart", &self.chart).finish()
    }
}

impl<T: Scalar> ChartMap<T> for DiffeoLift<T> {
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.diffeo.lift(self.chart, x)
    }

    fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        self.diffeo.lift_jacobian(self.chart, x)
    }
}

/// `x ↦ a ψ(‖x − c‖/r) (x − c)` with `ψ(s) = exp(1 − 1/(1 − s²))` on `s < 1`:
/// compactly supported and equivariant under every orthogonal map fixing `c`.
#[derive(Clone, Debug)]
pub struct RadialBump<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub amplitude: T,
}

impl<T: Scalar> crate::orbisection::FieldFn<T> for RadialBump<T> {
    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let y = crate::linalg::sub(x, &self.center);
        let s = crate::linalg::norm(&y) / self.radius;
        if s >= T::one() {
            return Ok(vec![T::zero(); x.len()]);
        }
        let psi = (T::one() - T::one() / (T::one() - s * s)).exp();
        Ok(crate::linalg::scale(&y, self.amplitude * psi))
    }
}

/// A map with `h∘g = α(g)∘h` on samples; `alpha[i]` indexes the group.
#[derive(Clone, Debug)]
pub struct WeakEquivalence<T: Scalar> {
    pub map: Arc<dyn ChartMap<T>>,
    pub alpha: Vec<usize>,
    pub residual: T,
}

#[derive(Clone, Debug)]
pub enum WeakCheck<T: Scalar> {
    Accepted(WeakEquivalence<T>),
    /// Worst residual of the best candidate `α`, the element attaining it,
    /// and whether that candidate was an automorphism.
    Rejected {
        residual: T,
        element: usize,
        automorphism: bool,
    },
}

impl<T: Scalar> WeakCheck<T> {
    pub fn accepted(self) -> Option<WeakEquivalence<T>> {
        match self {
            WeakCheck::Accepted(w) => Some(w),
            WeakCheck::Rejected { .. } => None,
        }
    }
}

/// Search `α(g)` among all group elements, matching `h(g x)` with `α(g) h(x)` on `points`.
pub fn is_weak_equivalence<T: Scalar>(
    h: Arc<dyn ChartMap<T>>,
    group: &FiniteGroup<T>,
    points: &[Vec<T>],
    tol: T,
) -> Result<WeakCheck<T>> {
    let n = group.order();
    if n > MAX_GROUP_ORDER {
        return Err(Error::InvalidArgument(format!(
            "group order {n} exceeds {MAX_GROUP_ORDER}"
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    let images = points.iter().map(|x| h.apply(x)).collect::<Result<Vec<_>>>()?;
    for (i, a) in images.iter().enumerate() {
        for (j, b) in images.iter().enumerate().skip(i + 1) {
            if dist(a, b) <= tol && dist(&points[i], &points[j]) > tol {
                return Err(Error::InvalidArgument("map is not injective on the samples".into()));
            }
        }
    }
    let mut alpha = Vec::with_capacity(n);
    let (mut residual, mut element) = (T::zero(), 0);
    for (gi, g) in group.elements().iter().enumerate() {
        let moved = points
            .iter()
            .map(|x| h.apply(&g.apply(x)))
            .collect::<Result<Vec<_>>>()?;
        let (best, r) = group
            .elements()
            .iter()
            .enumerate()
            .map(|(ai, a)| {
                let r = moved
                    .iter()
                    .zip(&images)
                    .map(|(u, v)| dist(u, &a.apply(v)))
                    .fold(T::zero(), T::max);
                (ai, r)
            })
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
            .expect("groups are non-empty");
        if r > residual {
            residual = r;
            element = gi;
        }
        alpha.push(best);
    }
    let automorphism = is_automorphism(group, &alpha);
    if residual > tol || !automorphism {
        return Ok(WeakCheck::Rejected {
            residual,
            element,
            automorphism,
        });
    }
    Ok(WeakCheck::Accepted(WeakEquivalence {
        map: h,
        alpha,
        residual,
    }))
}

/// Bijective and `α(gh) = α(g)α(h)` on the Cayley table.
pub fn is_automorphism<T: Scalar>(group: &FiniteGroup<T>, alpha: &[usize]) -> bool {
    let n = group.order();
    let mut seen = vec![false; n];
    for &a in alpha {
        if a >= n || std::mem::replace(&mut seen[a], true) {
            return false;
        }
    }
    (0..n).all(|i| (0..n).all(|j| alpha[group.product(i, j)] == group.product(alpha[i], alpha[j])))
}

/// The orbit map `D(h)` on one chart.
#[derive(Clone, Debug)]
pub struct DescendedMap<T: Scalar> {
    pub map: Arc<dyn ChartMap<T>>,
    pub atlas: Atlas<T>,
    pub chart: ChartId,
    /// Largest quotient distance between images of group translates on the samples.
    pub residual: T,
}

impl<T: Scalar> DescendedMap<T> {
    /// Canonical representative of `h(rep)`.
    pub fn apply(&self, p: &OrbitPoint<T>) -> Result<OrbitPoint<T>> {
        if p.chart != self.chart {
            return Err(Error::InvalidArgument("orbit point lies on another chart".into()));
        }
        let y = self.map.apply(&p.rep)?;
        self.atlas.chart(self.chart).check_inside(&y)?;
        Ok(self.atlas.canonical_point(&OrbitPoint {
            chart: self.chart,
            rep: y,
        }))
    }
}

/// `D(h)`, after checking on `samples` that group translates land in one orbit.
pub fn descend<T: Scalar>(
    h: &WeakEquivalence<T>,
    atlas: &Atlas<T>,
    chart: ChartId,
    samples: &[Vec<T>],
    tol: T,
) -> Result<DescendedMap<T>> {
    let group = &atlas.chart(chart).group;
    let mut residual = T::zero();
    for x in samples {
        let base = OrbitPoint {
            chart,
            rep: h.map.apply(x)?,
        };
        for g in group.elements() {
            let q = OrbitPoint {
                chart,
                rep: h.map.apply(&g.apply(x))?,
            };
            let d = atlas.quotient_distance(&base, &q).unwrap_or(T::infinity());
            residual = residual.max(d);
        }
    }
    if residual > tol {
        return Err(Error::Descent {
            residual: residual.as_f64(),
        });
    }
    Ok(DescendedMap {
        map: h.map.clone(),
        atlas: atlas.clone(),
        chart,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelWitness<T> {
    /// `h` agrees with this group element on the samples.
    Element(usize),
    /// `D(h)` moves some orbit by this quotient distance.
    NotInKernel(T),
    /// `D(h)` is the identity but no single element matches `h`; the residual of the best one.
    NoneFound(T),
}

/// Decide whether `D(h) = id` on `samples` and, if so, which `g ∈ G` equals `h`.
pub fn kernel_witness<T: Scalar>(h: &DescendedMap<T>, samples: &[Vec<T>], tol: T) -> Result<KernelWitness<T>> {
    let atlas = &h.atlas;
    let mut moved = T::zero();
    let mut images = Vec::with_capacity(samples.len());
    for x in samples {
        let y = h.map.apply(x)?;
        let p = OrbitPoint {
            chart: h.chart,
            rep: x.clone(),
        };
        let q = OrbitPoint {
            chart: h.chart,
            rep: y.clone(),
        };
        moved = moved.max(atlas.quotient_distance(&p, &q).unwrap_or(T::infinity()));
        images.push(y);
    }
    if moved > tol {
        return Ok(KernelWitness::NotInKernel(moved));
    }
    let (best, r) = atlas
        .chart(h.chart)
        .group
        .elements()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let r = samples
                .iter()
                .zip(&images)
                .map(|(x, y)| dist(&g.apply(x), y))
                .fold(T::zero(), T::max);
            (i, r)
        })
        .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("groups are non-empty");
    Ok(if r < tol {
        KernelWitness::Element(best)
    } else {
        KernelWitness::NoneFound(r)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbifold::AffineMap;
    use crate::orbifold::{GroupElement, OrbifoldChart, TOL_ALG};
    use crate::region::Region;
    use std::f64::consts::PI;

    fn group(m: Mat<f64>) -> FiniteGroup<f64> {
        let d = m.rows();
        FiniteGroup::generated_by(d, &[GroupElement::linear(m, 1e-9).unwrap()], 1e-9).unwrap()
    }

    #[test]
    fn isolated_fixed_points() {
        assert!(check_is(&group(Mat::diag(&[-1.0])), TOL_ALG).unwrap());
        assert!(check_is(&group(Mat::rotation2(2.0 * PI / 3.0)), TOL_ALG).unwrap());
        assert!(!check_is(&group(Mat::diag(&[-1.0, 1.0])), TOL_ALG).unwrap());
    }

    #[test]
    fn scaling_and_translation() {
        let g = group(Mat::rotation2(2.0 * PI / 3.0));
        let pts = Region::ball(vec![0.0, 0.0], 1.0).grid(5, 100);
        let two: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::linear(Mat::identity(2).scale(2.0)));
        let w = is_weak_equivalence(two, &g, &pts, 1e-9).unwrap().accepted().unwrap();
        assert_eq!(w.alpha, (0..3).collect::<Vec<_>>());
        let line = group(Mat::diag(&[-1.0]));
        let pts1 = Region::ball(vec![0.0], 1.0).grid(9, 100);
        let shift: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::new(Mat::identity(1), vec![0.5]));
        match is_weak_equivalence(shift, &line, &pts1, 1e-9).unwrap() {
            WeakCheck::Rejected { residual, .. } => assert!(residual > 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kernel_recovers_elements() {
        let g = group(Mat::rotation2(2.0 * PI / 3.0));
        let chart = OrbifoldChart::new("U", Region::ball(vec![0.0, 0.0], 10.0), g.clone(), 1e-9).unwrap();
        let atlas = Atlas::global(chart, 1e-9).unwrap();
        let pts = Region::ball(vec![0.3, 0.1], 1.0).grid(5, 100);
        for (i, e) in g.elements().iter().enumerate() {
            let h: Arc<dyn ChartMap<f64>> = Arc::new(e.map().clone());
            let w = is_weak_equivalence(h, &g, &pts, 1e-9).unwrap().accepted().unwrap();
            let d = descend(&w, &atlas, ChartId(0), &pts, 1e-9).unwrap();
            assert_eq!(kernel_witness(&d, &pts, 1e-9).unwrap(), KernelWitness::Element(i));
        }
    }
}
