//! Orbisections: compatible families of equivariant per-chart vector fields.
//!
//! Closed-form kinds (polynomials, bumps, their combinations, symmetrizations
//! and affine transports) carry analytic Jacobians. Fields defined by a
//! numerical procedure plug in through [`FieldFn`] and fall back to central
//! differences.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{central_jacobian, dist, norm, norm_inf, sub, Mat};
use crate::metric::{build_polynomial, TermSpec};
use crate::orbifold::{distance_to_subspace, fixed_subspace, AffineMap, Atlas, ChartId, OrbifoldChart};
use crate::poly::{PolyField, Polynomial};
use crate::region::Region;
use crate::scalar::Scalar;

/// Nodes per axis of orbisection sample grids.
pub const GRID_PER_AXIS: usize = 9;
pub const GRID_CAP: usize = 4096;
/// Central-difference step for fields without an analytic Jacobian.
pub const FD_STEP: f64 = 1e-5;
/// Samples per fixed subspace when probing the singular locus.
pub const SINGULAR_SAMPLES: usize = 20;

/// Vector field given by a numerical procedure.
pub trait FieldFn<T: Scalar>: Debug + Send + Sync {
    fn eval(&self, x: &[T]) -> Result<Vec<T>>;

    fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        central_jacobian(x, T::of(FD_STEP), |y| self.eval(y))
    }
}

/// Smooth radial bump `ψ(‖x − c‖ / r)·w` with `ψ(s) = exp(1 − 1/(1 − s²))` on `s < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bump<T> {
    pub center: Vec<T>,
    pub radius: T,
    pub vector: Vec<T>,
}

impl<T: Scalar> Bump<T> {
    fn profile(&self, x: &[T]) -> (T, Vec<T>) {
        let d = sub(x, &self.center);
        let r2 = self.radius * self.radius;
        let s = d.iter().map(|&c| c * c).sum::<T>() / r2;
        if s >= T::one() {
            return (T::zero(), vec![T::zero(); x.len()]);
        }
        let q = T::one() - s;
        let psi = (T::one() - T::one() / q).exp();
        // ∂ψ/∂x = −ψ/(1−s)² · 2(x−c)/r²
        let k = -psi / (q * q) * T::of(2.0) / r2;
        (psi, d.into_iter().map(|c| k * c).collect())
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        let (psi, _) = self.profile(x);
        self.vector.iter().map(|&w| psi * w).collect()
    }

    pub fn jacobian(&self, x: &[T]) -> Mat<T> {
        let (_, grad) = self.profile(x);
        Mat::from_fn(x.len(), x.len(), |i, j| self.vector[i] * grad[j])
    }
}

/// Affine transport `z ↦ A f(λ⁻¹ z)` of a field through `λ(x) = A x + b`.
#[derive(Clone, Debug)]
pub struct Piece<T: Scalar> {
    /// Domain of the transport, in source coordinates.
    pub domain: Option<Region<T>>,
    pub map: AffineMap<T>,
    pub inverse: AffineMap<T>,
    pub field: Arc<ChartField<T>>,
}

impl<T: Scalar> Piece<T> {
    fn new(domain: Option<Region<T>>, map: AffineMap<T>, field: Arc<ChartField<T>>) -> Self {
        let inverse = AffineMap::new(
            map.matrix.transpose(),
            map.matrix
                .transpose()
                .mul_vec(&map.translation)
                .into_iter()
                .map(|c| -c)
                .collect(),
        );
        Self {
            domain,
            map,
            inverse,
            field,
        }
    }

    fn covers(&self, z: &[T], tol: T) -> Option<Vec<T>> {
        let x = self.inverse.apply(z);
        match &self.domain {
            Some(r) if r.clearance(&x) < -tol => None,
            _ => Some(x),
        }
    }

    fn eval_at(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.map.apply_linear(&self.field.eval(x)?))
    }

    fn jacobian_at(&self, x: &[T]) -> Result<Mat<T>> {
        Ok(self.map.matrix.mul(&self.field.jacobian(x)?).mul(&self.inverse.matrix))
    }
}

/// Vector field on one chart.
#[derive(Clone, Debug)]
pub enum ChartField<T: Scalar> {
    Zero(usize),
    Poly(PolyField<T>),
    Bump(Bump<T>),
    /// `Σ cᵢ fᵢ`.
    Combination(Vec<(T, Arc<ChartField<T>>)>),
    /// `(1/|G|) Σ_g A_g⁻¹ f(g x)`.
    Symmetrized {
        inner: Arc<ChartField<T>>,
        group: Vec<AffineMap<T>>,
    },
    /// First piece whose domain contains the point.
    Patched(Vec<Piece<T>>),
    /// `Df·g − Dg·f`.
    Bracket(Arc<ChartField<T>>, Arc<ChartField<T>>),
    Custom(Arc<dyn FieldFn<T>>),
}

impl<T: Scalar> ChartField<T> {
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        match self {
            ChartField::Zero(d) => Ok(vec![T::zero(); *d]),
            ChartField::Poly(p) => Ok(p.eval(x)),
            ChartField::Bump(b) => Ok(b.eval(x)),
            ChartField::Combination(terms) => {
                let mut acc = vec![T::zero(); x.len()];
                for (c, f) in terms {
                    for (a, v) in acc.iter_mut().zip(f.eval(x)?) {
                        *a = *a + *c * v;
                    }
                }
                Ok(acc)
            }
            ChartField::Symmetrized { inner, group } => {
                let mut acc = vec![T::zero(); x.len()];
                for g in group {
                    let v = g.matrix.transpose().mul_vec(&inner.eval(&g.apply(x))?);
                    for (a, c) in acc.iter_mut().zip(v) {
                        *a = *a + c;
                    }
                }
                let n = T::one() / T::nat(group.len());
                Ok(acc.into_iter().map(|c| c * n).collect())
            }
            ChartField::Patched(pieces) => {
                let (p, y) = Self::locate(pieces, x)?;
                p.eval_at(&y)
            }
            ChartField::Bracket(a, b) => {
                let (fa, fb) = (a.eval(x)?, b.eval(x)?);
                let u = a.jacobian(x)?.mul_vec(&fb);
                let w = b.jacobian(x)?.mul_vec(&fa);
                Ok(sub(&u, &w))
            }
            ChartField::Custom(f) => f.eval(x),
        }
    }

    pub fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        let d = x.len();
        match self {
            ChartField::Zero(_) => Ok(Mat::zeros(d, d)),
            ChartField::Poly(p) => Ok(p.jacobian(x)),
            ChartField::Bump(b) => Ok(b.jacobian(x)),
            ChartField::Combination(terms) => {
                let mut acc = Mat::zeros(d, d);
                for (c, f) in terms {
                    acc = acc.add(&f.jacobian(x)?.scale(*c));
                }
                Ok(acc)
            }
            ChartField::Symmetrized { inner, group } => {
                let mut acc = Mat::zeros(d, d);
                for g in group {
                    let a = &g.matrix;
                    acc = acc.add(&a.transpose().mul(&inner.jacobian(&g.apply(x))?).mul(a));
                }
                Ok(acc.scale(T::one() / T::nat(group.len())))
            }
            ChartField::Patched(pieces) => {
                let (p, y) = Self::locate(pieces, x)?;
                p.jacobian_at(&y)
            }
            ChartField::Bracket(..) => central_jacobian(x, T::of(FD_STEP), |y| self.eval(y)),
            ChartField::Custom(f) => f.jacobian(x),
        }
    }

    fn locate<'a>(pieces: &'a [Piece<T>], z: &[T]) -> Result<(&'a Piece<T>, Vec<T>)> {
        let tol = T::of(crate::orbifold::TOL_ALG);
        pieces
            .iter()
            .find_map(|p| p.covers(z, tol).map(|y| (p, y)))
            .ok_or_else(|| Error::Domain {
                chart: "transported field".into(),
            })
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ChartField::Zero(_) => true,
            ChartField::Poly(p) => p.components().iter().all(Polynomial::is_zero),
            _ => false,
        }
    }

    /// The field as a polynomial, when it is one in closed form.
    pub fn as_poly(&self, dim: usize) -> Option<PolyField<T>> {
        match self {
            ChartField::Zero(_) => Some(PolyField::zero(dim)),
            ChartField::Poly(p) => Some(p.clone()),
            _ => None,
        }
    }

    /// Values on a region's grid, for export.
    pub fn sample(&self, region: &Region<T>, per_axis: usize) -> Result<Vec<(Vec<T>, Vec<T>)>> {
        region
            .grid(per_axis, GRID_CAP)
            .into_iter()
            .map(|x| self.eval(&x).map(|v| (x, v)))
            .collect()
    }
}

/// Conservative support of a section on one chart.
#[derive(Clone, Debug, PartialEq)]
pub enum Support<T> {
    Empty,
    Region(Region<T>),
    WholeChart,
}

/// Compatible, equivariant family of chart fields (canonical lifts).
#[derive(Clone, Debug)]
pub struct Orbisection<T: Scalar> {
    fields: Vec<Arc<ChartField<T>>>,
}

impl<T: Scalar> Orbisection<T> {
    pub fn zero(atlas: &Atlas<T>) -> Self {
        Self {
            fields: (0..atlas.charts().len())
                .map(|_| Arc::new(ChartField::Zero(atlas.dim())))
                .collect(),
        }
    }

    /// Unchecked family, one field per chart.
    pub fn from_fields(atlas: &Atlas<T>, fields: Vec<ChartField<T>>) -> Result<Self> {
        if fields.len() != atlas.charts().len() {
            return Err(Error::Validation(format!(
                "{} fields for {} charts",
                fields.len(),
                atlas.charts().len()
            )));
        }
        Ok(Self {
            fields: fields.into_iter().map(Arc::new).collect(),
        })
    }

    pub(crate) fn from_arcs(fields: Vec<Arc<ChartField<T>>>) -> Self {
        Self { fields }
    }

    /// Family checked for equivariance and compatibility within `tol`.
    pub fn validated(atlas: &Atlas<T>, fields: Vec<ChartField<T>>, tol: T) -> Result<Self> {
        let s = Self::from_fields(atlas, fields)?;
        let (e, c) = (s.equivariance_residual(atlas)?, s.compatibility_residual(atlas)?);
        if e > tol || c > tol {
            return Err(Error::Validation(format!(
                "not an orbisection: equivariance residual {}, compatibility residual {}",
                e.as_f64(),
                c.as_f64()
            )));
        }
        Ok(s)
    }

    /// Extend a field on `chart` to every chart reachable through declared
    /// changes by transporting it along them (closed form for polynomials).
    pub fn propagate(atlas: &Atlas<T>, chart: ChartId, field: ChartField<T>) -> Result<Self> {
        let n = atlas.charts().len();
        let mut fields: Vec<Option<Arc<ChartField<T>>>> = vec![None; n];
        fields[chart.0] = Some(Arc::new(field));
        let mut queue = vec![chart];
        while let Some(c) = queue.pop() {
            let src = fields[c.0].clone().expect("queued charts carry a field");
            for (_, ch) in atlas.changes_from(c) {
                if fields[ch.target.0].is_none() {
                    fields[ch.target.0] = Some(Arc::new(transport_whole(&src, ch.map.map(), atlas.dim())));
                    queue.push(ch.target);
                }
            }
        }
        let missing: Vec<_> = fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_none())
            .map(|(i, _)| atlas.charts()[i].name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "charts {missing:?} are not reachable from `{}`",
                atlas.chart(chart).name
            )));
        }
        Ok(Self {
            fields: fields.into_iter().map(|f| f.expect("checked")).collect(),
        })
    }

    pub fn field(&self, chart: ChartId) -> &ChartField<T> {
        &self.fields[chart.0]
    }

    pub fn field_arc(&self, chart: ChartId) -> Arc<ChartField<T>> {
        self.fields[chart.0].clone()
    }

    pub fn fields(&self) -> &[Arc<ChartField<T>>] {
        &self.fields
    }

    pub fn eval(&self, chart: ChartId, x: &[T]) -> Result<Vec<T>> {
        self.fields[chart.0].eval(x)
    }

    pub fn jacobian(&self, chart: ChartId, x: &[T]) -> Result<Mat<T>> {
        self.fields[chart.0].jacobian(x)
    }

    pub fn is_zero(&self) -> bool {
        self.fields.iter().all(|f| f.is_zero())
    }

    /// `a·self`.
    pub fn scaled(&self, a: T) -> Self {
        let zero = Self {
            fields: self
                .fields
                .iter()
                .map(|f| Arc::new(ChartField::Zero(dim_hint(f))))
                .collect(),
        };
        linear_combination(&zero, self, a)
    }

    /// Largest `‖A_g f(x) − f(g x)‖` over chart grids.
    pub fn equivariance_residual(&self, atlas: &Atlas<T>) -> Result<T> {
        let mut worst = T::zero();
        for (id, chart) in atlas.chart_ids().zip(atlas.charts()) {
            worst = worst.max(self.chart_equivariance_residual(id, chart, &grid(&chart.region))?);
        }
        Ok(worst)
    }

    pub fn chart_equivariance_residual(&self, id: ChartId, chart: &OrbifoldChart<T>, points: &[Vec<T>]) -> Result<T> {
        let f = self.field(id);
        let mut worst = T::zero();
        for x in points {
            let fx = f.eval(x)?;
            for g in chart.group.elements().iter().skip(1) {
                let r = dist(&g.apply_tangent(&fx), &f.eval(&g.apply(x))?);
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }

    /// Largest `‖f_target(λ x) − Tλ f_source(x)‖` over declared changes.
    pub fn compatibility_residual(&self, atlas: &Atlas<T>) -> Result<T> {
        let mut worst = T::zero();
        for ch in atlas.changes() {
            let (fs, ft) = (self.field(ch.source), self.field(ch.target));
            for x in grid(&ch.region) {
                let r = dist(&ft.eval(&ch.map.apply(&x))?, &ch.map.apply_tangent(&fs.eval(&x)?));
                worst = worst.max(r);
            }
        }
        Ok(worst)
    }
}

fn dim_hint<T: Scalar>(f: &ChartField<T>) -> usize {
    match f {
        ChartField::Zero(d) => *d,
        ChartField::Poly(p) => p.dim(),
        ChartField::Bump(b) => b.center.len(),
        _ => 0,
    }
}

fn grid<T: Scalar>(region: &Region<T>) -> Vec<Vec<T>> {
    region.grid(GRID_PER_AXIS, GRID_CAP)
}

/// Whole-chart transport of `f` along `λ`: `z ↦ A f(λ⁻¹ z)`.
fn transport_whole<T: Scalar>(f: &Arc<ChartField<T>>, map: &AffineMap<T>, dim: usize) -> ChartField<T> {
    let piece = Piece::new(None, map.clone(), f.clone());
    match f.as_poly(dim) {
        Some(p) if p.components().iter().all(Polynomial::is_zero) => ChartField::Zero(dim),
        Some(p) => ChartField::Poly(p.conjugate(&map.matrix, &piece.inverse.matrix, &piece.inverse.translation)),
        None => ChartField::Patched(vec![piece]),
    }
}

/// Symmetrize `f` over the group of `chart`: `(1/|G|) Σ_g A_g⁻¹ f(g x)`.
pub fn symmetrize<T: Scalar>(chart: &OrbifoldChart<T>, f: ChartField<T>) -> ChartField<T> {
    let d = chart.dim();
    let group: Vec<AffineMap<T>> = chart.group.elements().iter().map(|g| g.map().clone()).collect();
    if let Some(p) = f.as_poly(d) {
        let n = T::one() / T::nat(group.len());
        let sum = group.iter().fold(PolyField::zero(d), |acc, g| {
            acc.add(&p.conjugate(&g.matrix.transpose(), &g.matrix, &g.translation))
        });
        return ChartField::Poly(sum.scale(n));
    }
    ChartField::Symmetrized {
        inner: Arc::new(f),
        group,
    }
}

/// Random polynomial section of the given degree with coefficients of size
/// at most `magnitude`, symmetrized on `chart` and propagated to the atlas.
pub fn random_polynomial_section<T: Scalar, R: Rng + ?Sized>(
    atlas: &Atlas<T>,
    chart: ChartId,
    degree: u32,
    magnitude: T,
    rng: &mut R,
) -> Result<Orbisection<T>> {
    let d = atlas.dim();
    let monomials = monomials(d, degree);
    let comps = (0..d)
        .map(|_| {
            Polynomial::from_terms(
                d,
                monomials
                    .iter()
                    .map(|m| (m.clone(), magnitude * T::of(rng.gen_range(-1.0..1.0)))),
            )
        })
        .collect();
    let f = symmetrize(atlas.chart(chart), ChartField::Poly(PolyField::new(comps)));
    Orbisection::propagate(atlas, chart, f)
}

/// All exponent vectors in `d` variables of total degree ≤ `degree`.
fn monomials(d: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|m: Vec<u32>| {
                let used: u32 = m.iter().sum();
                (0..=degree - used).map(move |k| {
                    let mut n = m.clone();
                    n.push(k);
                    n
                })
            })
            .collect();
    }
    out
}

/// Transport a partially defined section onto chart `target` through the
/// declared changes (and target group translates) that cover it.
pub fn canonical_lift_transport<T: Scalar>(
    atlas: &Atlas<T>,
    partial: &[Option<Arc<ChartField<T>>>],
    target: ChartId,
) -> Result<ChartField<T>> {
    let tgt = atlas.chart(target);
    let mut pieces = Vec::new();
    for ch in atlas.changes().iter().filter(|c| c.target == target) {
        let Some(f) = partial.get(ch.source.0).and_then(Clone::clone) else {
            continue;
        };
        for h in tgt.group.elements() {
            let map = h.map().compose(ch.map.map());
            pieces.push(Piece::new(Some(ch.region.clone()), map, f.clone()));
        }
    }
    let tol = atlas.tol();
    let uncovered: Vec<Vec<T>> = grid(&tgt.region)
        .into_iter()
        .filter(|z| tgt.region.contains(z, T::zero()) && !pieces.iter().any(|p| p.covers(z, tol).is_some()))
        .collect();
    if let Some(first) = uncovered.first() {
        return Err(Error::Coverage {
            count: uncovered.len(),
            first: first.iter().map(|c| c.as_f64()).collect(),
        });
    }
    Ok(ChartField::Patched(pieces))
}

/// Largest disagreement between the pieces of a transported field at points
/// covered more than once.
pub fn transport_choice_residual<T: Scalar>(field: &ChartField<T>, region: &Region<T>, tol: T) -> Result<T> {
    let ChartField::Patched(pieces) = field else {
        return Ok(T::zero());
    };
    let mut worst = T::zero();
    for z in grid(region) {
        let values = pieces
            .iter()
            .filter_map(|p| p.covers(&z, tol).map(|x| p.eval_at(&x)))
            .collect::<Result<Vec<_>>>()?;
        for v in values.iter().skip(1) {
            worst = worst.max(dist(v, &values[0]));
        }
    }
    Ok(worst)
}

/// `σ + a·τ`.
pub fn linear_combination<T: Scalar>(sigma: &Orbisection<T>, tau: &Orbisection<T>, a: T) -> Orbisection<T> {
    let fields = sigma
        .fields
        .iter()
        .zip(&tau.fields)
        .map(|(s, t)| {
            let d = dim_hint(s).max(dim_hint(t));
            if t.is_zero() || a == T::zero() {
                return s.clone();
            }
            if d > 0 {
                if let (Some(p), Some(q)) = (s.as_poly(d), t.as_poly(d)) {
                    let r = p.add(&q.scale(a));
                    return Arc::new(if r.components().iter().all(Polynomial::is_zero) {
                        ChartField::Zero(d)
                    } else {
                        ChartField::Poly(r)
                    });
                }
            }
            if s.is_zero() {
                return Arc::new(ChartField::Combination(vec![(a, t.clone())]));
            }
            Arc::new(ChartField::Combination(vec![(T::one(), s.clone()), (a, t.clone())]))
        })
        .collect();
    Orbisection { fields }
}

/// Bracket lift `Dσ·τ − Dτ·σ` (the negative of the vector-field bracket).
pub fn bracket<T: Scalar>(sigma: &Orbisection<T>, tau: &Orbisection<T>) -> Orbisection<T> {
    let fields = sigma
        .fields
        .iter()
        .zip(&tau.fields)
        .map(|(s, t)| {
            let d = dim_hint(s).max(dim_hint(t));
            if s.is_zero() || t.is_zero() {
                return Arc::new(ChartField::Zero(d.max(1)));
            }
            if d > 0 {
                if let (Some(p), Some(q)) = (s.as_poly(d), t.as_poly(d)) {
                    return Arc::new(ChartField::Poly(p.bracket(&q)));
                }
            }
            Arc::new(ChartField::Bracket(s.clone(), t.clone()))
        })
        .collect();
    Orbisection { fields }
}

/// Points of the singular locus of `chart`: samples of the fixed set of
/// each non-identity group element.
pub fn singular_samples<T: Scalar>(chart: &OrbifoldChart<T>, per_subspace: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let region = &chart.region;
    for (i, g) in chart.group.elements().iter().enumerate().skip(1) {
        // the centroid of the ⟨g⟩-orbit of the center is fixed by g
        let mut orbit = vec![region.center().to_vec()];
        let mut p = g.apply(region.center());
        while dist(&p, region.center()) > T::of(1e-12) && orbit.len() <= chart.group.order() {
            orbit.push(p.clone());
            p = g.apply(&p);
        }
        let n = T::one() / T::nat(orbit.len());
        let base: Vec<T> = (0..chart.dim())
            .map(|k| orbit.iter().map(|q| q[k]).sum::<T>() * n)
            .collect();
        let basis = fixed_subspace(std::slice::from_ref(chart.group.element(i)), T::of(1e-9));
        if basis.is_empty() {
            if region.contains(&base, T::zero()) {
                out.push(base);
            }
            continue;
        }
        let reach = region.scale() * T::of(0.95) / T::nat(basis.len()).sqrt();
        let mut found = 0;
        for _ in 0..per_subspace * 50 {
            if found == per_subspace {
                break;
            }
            let mut x = base.clone();
            for b in &basis {
                let c = reach * T::of(rng.gen_range(-1.0..1.0));
                x = crate::linalg::axpy(&x, c, b);
            }
            if region.contains(&x, T::zero()) {
                out.push(x);
                found += 1;
            }
        }
    }
    out
}

/// Largest distance from `σ(x)` to the subspace fixed by `G_x` over sampled singular points.
pub fn check_preserves_local_groups<T: Scalar>(atlas: &Atlas<T>, sigma: &Orbisection<T>) -> Result<T> {
    let mut worst = T::zero();
    for (id, chart) in atlas.chart_ids().zip(atlas.charts()) {
        for x in singular_samples(chart, SINGULAR_SAMPLES, 0x5eed) {
            let idx = atlas.isotropy_indices(id, &x)?;
            if idx.len() < 2 {
                continue;
            }
            let elements: Vec<_> = idx.iter().map(|&i| chart.group.element(i).clone()).collect();
            let basis = fixed_subspace(&elements, T::of(1e-9));
            worst = worst.max(distance_to_subspace(&sigma.eval(id, &x)?, &basis));
        }
    }
    Ok(worst)
}

/// `max_{x ∈ K} max(‖f(x)‖_∞, max_{ij} |∂_j f_i(x)|)` over the grid of `region`.
pub fn c1_norm<T: Scalar>(sigma: &Orbisection<T>, chart: ChartId, region: &Region<T>) -> Result<T> {
    c1_norm_on(sigma.field(chart), &grid(region))
}

pub fn c1_norm_on<T: Scalar>(f: &ChartField<T>, points: &[Vec<T>]) -> Result<T> {
    if f.is_zero() {
        return Ok(T::zero());
    }
    let mut worst = T::zero();
    for x in points {
        worst = worst.max(norm_inf(&f.eval(x)?)).max(f.jacobian(x)?.max_abs());
    }
    Ok(worst)
}

/// Conservative support on `chart`: ball around the nonzero samples of a
/// fine grid, grown by one grid cell.
pub fn support<T: Scalar>(atlas: &Atlas<T>, sigma: &Orbisection<T>, chart: ChartId) -> Result<Support<T>> {
    let region = &atlas.chart(chart).region;
    let f = sigma.field(chart);
    if f.is_zero() {
        return Ok(Support::Empty);
    }
    let per_axis = match atlas.dim() {
        1 => 401,
        2 => 64,
        _ => 16,
    };
    let pts = region.grid(per_axis, GRID_CAP);
    let cell = region.grid_spacing(per_axis, GRID_CAP);
    let mut nonzero = Vec::new();
    for x in &pts {
        if norm(&f.eval(x)?) > T::zero() {
            nonzero.push(x.clone());
        }
    }
    if nonzero.is_empty() {
        return Ok(Support::Empty);
    }
    if nonzero.len() == pts.len() {
        return Ok(Support::WholeChart);
    }
    let d = atlas.dim();
    let center: Vec<T> = (0..d)
        .map(|k| {
            let lo = nonzero.iter().map(|p| p[k]).fold(T::infinity(), T::min);
            let hi = nonzero.iter().map(|p| p[k]).fold(T::neg_infinity(), T::max);
            (lo + hi) * T::of(0.5)
        })
        .collect();
    let radius = nonzero.iter().map(|p| dist(p, &center)).fold(T::zero(), T::max) + cell;
    Ok(Support::Region(Region::ball(center, radius)))
}

// ---- config form -------------------------------------------------------

/// Chart field in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// One term list per component.
    Polynomial {
        components: Vec<Vec<TermSpec>>,
        #[serde(default)]
        symmetrize: bool,
    },
    /// `x ↦ A x`.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        symmetrize: bool,
    },
    Constant {
        vector: Vec<f64>,
        #[serde(default)]
        symmetrize: bool,
    },
    Bump {
        center: Vec<f64>,
        radius: f64,
        vector: Vec<f64>,
        #[serde(default = "yes")]
        symmetrize: bool,
    },
    Sum {
        terms: Vec<FieldSpec>,
        #[serde(default)]
        coefficients: Option<Vec<f64>>,
    },
}

fn yes() -> bool {
    true
}

impl FieldSpec {
    pub fn build<T: Scalar>(&self, chart: &OrbifoldChart<T>) -> Result<ChartField<T>> {
        let d = chart.dim();
        let vecf = |v: &[f64], what: &str| -> Result<Vec<T>> {
            if v.len() != d {
                return Err(Error::Config(format!("{what} must have {d} entries")));
            }
            Ok(v.iter().map(|&c| T::of(c)).collect())
        };
        let (f, sym) = match self {
            FieldSpec::Zero => (ChartField::Zero(d), false),
            FieldSpec::Polynomial { components, symmetrize } => {
                if components.len() != d {
                    return Err(Error::Config(format!("polynomial field needs {d} components")));
                }
                let comps = components
                    .iter()
                    .map(|t| build_polynomial(d, t))
                    .collect::<Result<Vec<_>>>()?;
                (ChartField::Poly(PolyField::new(comps)), *symmetrize)
            }
            FieldSpec::Linear { matrix, symmetrize } => {
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("linear field needs a {d}×{d} matrix")));
                }
                let rows: Vec<Vec<T>> = matrix.iter().map(|r| r.iter().map(|&c| T::of(c)).collect()).collect();
                (ChartField::Poly(PolyField::linear(&Mat::from_rows(&rows))), *symmetrize)
            }
            FieldSpec::Constant { vector, symmetrize } => (
                ChartField::Poly(PolyField::constant(&vecf(vector, "vector")?)),
                *symmetrize,
            ),
            FieldSpec::Bump {
                center,
                radius,
                vector,
                symmetrize,
            } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("bump radius must be positive".into()));
                }
                let b = Bump {
                    center: vecf(center, "center")?,
                    radius: T::of(*radius),
                    vector: vecf(vector, "vector")?,
                };
                (ChartField::Bump(b), *symmetrize)
            }
            FieldSpec::Sum { terms, coefficients } => {
                let coefs = coefficients.clone().unwrap_or_else(|| vec![1.0; terms.len()]);
                if coefs.len() != terms.len() {
                    return Err(Error::Config("sum: one coefficient per term".into()));
                }
                let parts = terms
                    .iter()
                    .zip(coefs)
                    .map(|(t, c)| Ok((T::of(c), Arc::new(t.build(chart)?))))
                    .collect::<Result<Vec<_>>>()?;
                let polys: Option<Vec<_>> = parts.iter().map(|(c, f)| f.as_poly(d).map(|p| p.scale(*c))).collect();
                let f = match polys {
                    Some(ps) => ChartField::Poly(ps.iter().fold(PolyField::zero(d), |a, p| a.add(p))),
                    None => ChartField::Combination(parts),
                };
                (f, false)
            }
        };
        Ok(if sym { symmetrize(chart, f) } else { f })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbifold::{ChangeOfCharts, FiniteGroup, GroupElement};

    fn single(gens: &[Mat<f64>], d: usize, radius: f64) -> Atlas<f64> {
        let g: Vec<_> = gens
            .iter()
            .map(|m| GroupElement::linear(m.clone(), 1e-9).unwrap())
            .collect();
        let group = FiniteGroup::generated_by(d, &g, 1e-9).unwrap();
        let chart = OrbifoldChart::new("U", Region::ball(vec![0.0; d], radius), group, 1e-9).unwrap();
        Atlas::global(chart, 1e-9).unwrap()
    }

    fn mirror() -> Atlas<f64> {
        single(&[Mat::diag(&[-1.0, 1.0])], 2, 3.0)
    }

    fn lin(rows: &[[f64; 2]; 2]) -> ChartField<f64> {
        ChartField::Poly(PolyField::linear(&Mat::from_rows(&[
            rows[0].to_vec(),
            rows[1].to_vec(),
        ])))
    }

    #[test]
    fn symmetrized_fields_are_equivariant() {
        let a = mirror();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_polynomial_section(&a, ChartId(0), 3, 0.1, &mut rng).unwrap();
        assert!(s.equivariance_residual(&a).unwrap() < 1e-12);
        assert!(check_preserves_local_groups(&a, &s).unwrap() < 1e-12);
        let bump = ChartField::Bump(Bump {
            center: vec![1.0, 0.5],
            radius: 0.8,
            vector: vec![0.3, -0.2],
        });
        let sb = Orbisection::from_fields(&a, vec![symmetrize(a.chart(ChartId(0)), bump)]).unwrap();
        assert!(sb.equivariance_residual(&a).unwrap() < 1e-12);
        let x = [0.7, 0.2];
        let fd = central_jacobian(&x, 1e-6, |y| sb.eval(ChartId(0), y)).unwrap();
        assert!(fd.sub(&sb.jacobian(ChartId(0), &x).unwrap()).max_abs() < 1e-8);
    }

    #[test]
    fn combination_examples() {
        let a = mirror();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_polynomial_section(&a, ChartId(0), 2, 0.1, &mut rng).unwrap();
        let t = random_polynomial_section(&a, ChartId(0), 2, 0.1, &mut rng).unwrap();
        let x = [0.4, -0.3];
        let same = linear_combination(&s, &t, 0.0);
        assert_eq!(same.eval(ChartId(0), &x).unwrap(), s.eval(ChartId(0), &x).unwrap());
        assert!(linear_combination(&s, &s, -1.0).is_zero());
    }

    #[test]
    fn linear_bracket_is_commutator() {
        let a = single(&[], 2, 3.0);
        let (ma, mb) = ([[0.1, 0.2], [-0.3, 0.05]], [[0.0, 0.4], [0.1, -0.2]]);
        let s = Orbisection::from_fields(&a, vec![lin(&ma)]).unwrap();
        let t = Orbisection::from_fields(&a, vec![lin(&mb)]).unwrap();
        let br = bracket(&s, &t);
        let am = Mat::from_rows(&[ma[0].to_vec(), ma[1].to_vec()]);
        let bm = Mat::from_rows(&[mb[0].to_vec(), mb[1].to_vec()]);
        let comm = am.mul(&bm).sub(&bm.mul(&am));
        for x in a.chart(ChartId(0)).region.grid(5, 100) {
            assert!(dist(&br.eval(ChartId(0), &x).unwrap(), &comm.mul_vec(&x)) < 1e-14);
        }
        assert!(bracket(&s, &s).is_zero());
    }

    #[test]
    fn c1_norm_examples() {
        let a = single(&[], 2, 3.0);
        let unit = Region::cube(vec![0.0, 0.0], 1.0);
        assert_eq!(c1_norm(&Orbisection::zero(&a), ChartId(0), &unit).unwrap(), 0.0);
        let c = Orbisection::from_fields(&a, vec![ChartField::Poly(PolyField::constant(&[0.3, -0.7]))]).unwrap();
        assert!((c1_norm(&c, ChartId(0), &unit).unwrap() - 0.7_f64).abs() < 1e-15);
        let l = Orbisection::from_fields(&a, vec![lin(&[[1.0, 2.0], [0.5, -3.0]])]).unwrap();
        // corners give ‖Ax‖_∞ = 3.5, largest entry 3
        assert!((c1_norm(&l, ChartId(0), &unit).unwrap() - 3.5_f64).abs() < 1e-12);
    }

    #[test]
    fn support_examples() {
        let a = single(&[], 2, 3.0);
        assert_eq!(support(&a, &Orbisection::zero(&a), ChartId(0)).unwrap(), Support::Empty);
        let c = Orbisection::from_fields(&a, vec![ChartField::Poly(PolyField::constant(&[1.0, 0.0]))]).unwrap();
        assert_eq!(support(&a, &c, ChartId(0)).unwrap(), Support::WholeChart);
        let b = Orbisection::from_fields(
            &a,
            vec![ChartField::Bump(Bump {
                center: vec![0.5, -0.5],
                radius: 1.0,
                vector: vec![1.0, 1.0],
            })],
        )
        .unwrap();
        let cell = a.chart(ChartId(0)).region.grid_spacing(64, GRID_CAP);
        match support(&a, &b, ChartId(0)).unwrap() {
            Support::Region(Region::Ball { center, radius }) => {
                assert!(dist(&center, &[0.5, -0.5]) <= cell);
                assert!(radius >= 1.0 - cell && radius <= 1.0 + 2.0 * cell);
            }
            other => panic!("unexpected support {other:?}"),
        }
    }

    #[test]
    fn rotation_transport_of_radial_field() {
        let rot = GroupElement::linear(Mat::rotation2(0.9), 1e-9).unwrap();
        let u = OrbifoldChart::new("U", Region::ball(vec![0.0, 0.0], 2.0), FiniteGroup::trivial(2), 1e-9).unwrap();
        let w = OrbifoldChart::new("W", Region::ball(vec![0.0, 0.0], 2.0), FiniteGroup::trivial(2), 1e-9).unwrap();
        let changes = vec![
            ChangeOfCharts {
                source: ChartId(0),
                target: ChartId(1),
                region: Region::ball(vec![0.0, 0.0], 2.0),
                map: rot.clone(),
            },
            ChangeOfCharts {
                source: ChartId(1),
                target: ChartId(0),
                region: Region::ball(vec![0.0, 0.0], 2.0),
                map: rot.inverse(),
            },
        ];
        let atlas = Atlas::new(vec![u, w], changes, 1e-9).unwrap();
        let radial = Arc::new(lin(&[[1.0, 0.0], [0.0, 1.0]]));
        let f = canonical_lift_transport(&atlas, &[Some(radial), None], ChartId(1)).unwrap();
        for z in atlas.chart(ChartId(1)).region.grid(7, 100) {
            assert!(dist(&f.eval(&z).unwrap(), &z) < 1e-14);
        }
    }

    #[test]
    fn monomial_count() {
        assert_eq!(monomials(2, 3).len(), 10);
        assert_eq!(monomials(1, 2).len(), 3);
    }
}
