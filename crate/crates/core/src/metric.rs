//! Riemannian metrics on charts: averaging over the chart group, isometry
//! checks, pullbacks, Christoffel symbols, and orbifold partitions of unity.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, Mat};
use crate::orbifold::{AffineMap, Atlas, ChartId, OrbifoldChart};
use crate::poly::Polynomial;
use crate::region::Region;
use crate::scalar::Scalar;

/// Residual bound for compatibility of metrics across changes of charts.
pub const TOL_METRIC: f64 = 1e-8;
/// Central-difference step for the finite-difference derivative mode.
pub const H_FD: f64 = 1e-5;
/// Nodes per axis of the sample grids used by the checks here.
pub const GRID_PER_AXIS: usize = 17;
/// Cap on the number of grid samples.
pub const GRID_CAP: usize = 4096;

/// Smooth map between chart coordinates with a Jacobian, as needed for pullbacks.
pub trait ChartMap<T: Scalar>: Debug + Send + Sync {
    fn apply(&self, x: &[T]) -> Result<Vec<T>>;

    /// Jacobian at `x`. Maps that only know their values leave this unimplemented.
    fn jacobian(&self, _x: &[T]) -> Result<Mat<T>> {
        Err(Error::UnsupportedLift("no Jacobian available for this map".into()))
    }

    /// The map as an affine map, if it is one.
    fn as_affine(&self) -> Option<&AffineMap<T>> {
        None
    }
}

impl<T: Scalar> ChartMap<T> for AffineMap<T> {
    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(AffineMap::apply(self, x))
    }

    fn jacobian(&self, _x: &[T]) -> Result<Mat<T>> {
        Ok(self.matrix.clone())
    }

    fn as_affine(&self) -> Option<&AffineMap<T>> {
        Some(self)
    }
}

#[derive(Clone, Debug)]
pub enum MetricKind<T: Scalar> {
    Constant(Mat<T>),
    /// `e^{2φ(x)} I`.
    Conformal(Polynomial<T>),
    /// Symmetric matrix of polynomial entries.
    Polynomial(Vec<Vec<Polynomial<T>>>),
    /// `(1/|G|) Σ_g A_gᵀ m(g x) A_g`.
    Averaged {
        base: Box<MetricField<T>>,
        group: Vec<AffineMap<T>>,
    },
    /// `Dφᵀ m(φ x) Dφ`.
    Pullback {
        base: Box<MetricField<T>>,
        map: Arc<dyn ChartMap<T>>,
    },
}

/// How `∂g` is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Derivative<T> {
    Analytic,
    FiniteDifference(T),
}

/// Metric tensor field on one chart.
#[derive(Clone, Debug)]
pub struct MetricField<T: Scalar> {
    kind: MetricKind<T>,
    derivative: Derivative<T>,
}

impl<T: Scalar> MetricField<T> {
    pub fn new(kind: MetricKind<T>) -> Self {
        Self {
            kind,
            derivative: Derivative::Analytic,
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::new(MetricKind::Constant(Mat::identity(dim)))
    }

    pub fn constant(m: Mat<T>) -> Self {
        Self::new(MetricKind::Constant(m))
    }

    pub fn conformal(phi: Polynomial<T>) -> Self {
        Self::new(MetricKind::Conformal(phi))
    }

    pub fn polynomial(entries: Vec<Vec<Polynomial<T>>>) -> Self {
        Self::new(MetricKind::Polynomial(entries))
    }

    /// Same tensor, derivatives by central differences with step `h`.
    pub fn with_finite_differences(mut self, h: T) -> Self {
        self.derivative = Derivative::FiniteDifference(h);
        self
    }

    pub fn kind(&self) -> &MetricKind<T> {
        &self.kind
    }

    pub fn derivative_mode(&self) -> Derivative<T> {
        self.derivative
    }

    /// Constant in chart coordinates, so that geodesics are straight lines.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            MetricKind::Constant(_) => true,
            MetricKind::Conformal(phi) => phi.degree() == 0,
            MetricKind::Polynomial(e) => e.iter().flatten().all(|p| p.degree() == 0),
            MetricKind::Averaged { base, .. } => base.is_constant(),
            MetricKind::Pullback { base, map } => map.as_affine().is_some() && base.is_constant(),
        }
    }

    /// `g(x)`.
    pub fn tensor(&self, x: &[T]) -> Result<Mat<T>> {
        Ok(match &self.kind {
            MetricKind::Constant(m) => m.clone(),
            MetricKind::Conformal(phi) => {
                let d = x.len();
                Mat::identity(d).scale((phi.eval(x) + phi.eval(x)).exp())
            }
            MetricKind::Polynomial(e) => Mat::from_fn(e.len(), e.len(), |i, j| e[i][j].eval(x)),
            MetricKind::Averaged { base, group } => {
                let mut acc = Mat::zeros(x.len(), x.len());
                for g in group {
                    let a = &g.matrix;
                    acc = acc.add(&a.transpose().mul(&base.tensor(&g.apply(x))?).mul(a));
                }
                acc.scale(T::one() / T::nat(group.len()))
            }
            MetricKind::Pullback { base, map } => {
                let j = map.jacobian(x)?;
                j.transpose().mul(&base.tensor(&map.apply(x)?)?).mul(&j)
            }
        })
    }

    /// Partial derivatives `∂_l g(x)`, `l = 0..d`.
    pub fn derivatives(&self, x: &[T]) -> Result<Vec<Mat<T>>> {
        if let Derivative::FiniteDifference(h) = self.derivative {
            return self.fd_derivatives(x, h);
        }
        let d = x.len();
        Ok(match &self.kind {
            MetricKind::Constant(_) => vec![Mat::zeros(d, d); d],
            MetricKind::Conformal(phi) => {
                let e2 = (phi.eval(x) + phi.eval(x)).exp();
                phi.gradient(x)
                    .into_iter()
                    .map(|p| Mat::identity(d).scale((p + p) * e2))
                    .collect()
            }
            MetricKind::Polynomial(e) => (0..d)
                .map(|l| Mat::from_fn(d, d, |i, j| e[i][j].partial(l).eval(x)))
                .collect(),
            MetricKind::Averaged { base, group } => {
                let mut acc = vec![Mat::zeros(d, d); d];
                for g in group {
                    let dg = chain_affine(&base.derivatives(&g.apply(x))?, &g.matrix);
                    for (a, b) in acc.iter_mut().zip(dg) {
                        *a = a.add(&b);
                    }
                }
                let s = T::one() / T::nat(group.len());
                acc.into_iter().map(|m| m.scale(s)).collect()
            }
            MetricKind::Pullback { base, map } => match map.as_affine() {
                Some(aff) => chain_affine(&base.derivatives(&aff.apply(x))?, &aff.matrix),
                None => self.fd_derivatives(x, T::of(H_FD))?,
            },
        })
    }

    fn fd_derivatives(&self, x: &[T], h: T) -> Result<Vec<Mat<T>>> {
        let d = x.len();
        let two_h = h + h;
        (0..d)
            .map(|l| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[l] = xp[l] + h;
                xm[l] = xm[l] - h;
                Ok(self.tensor(&xp)?.sub(&self.tensor(&xm)?).scale(T::one() / two_h))
            })
            .collect()
    }

    /// Errors unless `g(x)` is symmetric and positive definite.
    pub fn check_spd(&self, x: &[T]) -> Result<()> {
        let g = self.tensor(x)?;
        let asym = g.asymmetry();
        if asym > T::of(1e-9) {
            return Err(Error::Validation(format!(
                "metric not symmetric at {:?} (defect {asym})",
                as_f64(x)
            )));
        }
        let (vals, _) = g.symmetric_eigen();
        let min = vals.first().copied().unwrap_or(T::zero());
        if !(min > T::zero()) {
            return Err(Error::Validation(format!(
                "metric not positive definite at {:?} (smallest eigenvalue {min})",
                as_f64(x)
            )));
        }
        Ok(())
    }

    /// `g_x(v, v)`.
    pub fn norm_sq(&self, x: &[T], v: &[T]) -> Result<T> {
        Ok(self.tensor(x)?.bilinear(v, v))
    }

    /// Christoffel symbols, indexed `Γ[k][(i, j)]`.
    pub fn christoffel(&self, x: &[T]) -> Result<Vec<Mat<T>>> {
        let d = x.len();
        let g = self.tensor(x)?;
        let ginv = g
            .inverse()
            .ok_or_else(|| Error::Numerical(format!("singular metric at {:?}", as_f64(x))))?;
        let dg = self.derivatives(x)?;
        let half = T::of(0.5);
        // lowered symbols Γ_{l,ij} = ½(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})
        let lowered: Vec<Mat<T>> = (0..d)
            .map(|l| Mat::from_fn(d, d, |i, j| half * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])))
            .collect();
        Ok((0..d)
            .map(|k| Mat::from_fn(d, d, |i, j| (0..d).map(|l| ginv[(k, l)] * lowered[l][(i, j)]).sum()))
            .collect())
    }

    /// Geodesic acceleration `−Γᵏ_{ij} vⁱ vʲ`.
    pub fn acceleration(&self, x: &[T], v: &[T]) -> Result<Vec<T>> {
        if self.is_constant() {
            return Ok(vec![T::zero(); x.len()]);
        }
        Ok(self.christoffel(x)?.iter().map(|gk| -gk.bilinear(v, v)).collect())
    }
}

/// `∂_l [Aᵀ m(Ax+b) A] = Σ_m A_{ml} Aᵀ (∂_m m) A`.
fn chain_affine<T: Scalar>(dm: &[Mat<T>], a: &Mat<T>) -> Vec<Mat<T>> {
    let d = a.rows();
    let conj: Vec<Mat<T>> = dm.iter().map(|m| a.transpose().mul(m).mul(a)).collect();
    (0..d)
        .map(|l| (0..d).fold(Mat::zeros(d, d), |acc, m| acc.add(&conj[m].scale(a[(m, l)]))))
        .collect()
}

fn as_f64<T: Scalar>(x: &[T]) -> Vec<f64> {
    x.iter().map(|v| v.as_f64()).collect()
}

fn sample_grid<T: Scalar>(region: &Region<T>) -> Vec<Vec<T>> {
    region.grid(GRID_PER_AXIS, GRID_CAP)
}

/// Group average of `raw` over the chart group; errors if `raw` is not
/// positive definite on the chart's sample grid.
pub fn average_metric<T: Scalar>(chart: &OrbifoldChart<T>, raw: &MetricField<T>) -> Result<MetricField<T>> {
    for x in sample_grid(&chart.region) {
        raw.check_spd(&x)?;
    }
    let maps: Vec<AffineMap<T>> = chart.group.elements().iter().map(|g| g.map().clone()).collect();
    if let MetricKind::Constant(m) = &raw.kind {
        let n = T::one() / T::nat(maps.len());
        let avg = maps
            .iter()
            .fold(Mat::zeros(m.rows(), m.cols()), |acc, g| {
                acc.add(&g.matrix.transpose().mul(m).mul(&g.matrix))
            })
            .scale(n);
        return Ok(MetricField {
            kind: MetricKind::Constant(avg),
            derivative: raw.derivative,
        });
    }
    Ok(MetricField {
        kind: MetricKind::Averaged {
            base: Box::new(raw.clone()),
            group: maps,
        },
        derivative: raw.derivative,
    })
}

/// Largest `|g_{g·x}(A e_i, A e_j) − g_x(e_i, e_j)|` over `points` and the group.
pub fn equivariance_residual_on<T: Scalar>(
    metric: &MetricField<T>,
    chart: &OrbifoldChart<T>,
    points: &[Vec<T>],
) -> Result<T> {
    let mut worst = T::zero();
    for x in points {
        let gx0 = metric.tensor(x)?;
        for g in chart.group.elements() {
            let a = g.linear_part();
            let moved = a.transpose().mul(&metric.tensor(&g.apply(x))?).mul(a);
            worst = worst.max(moved.sub(&gx0).max_abs());
        }
    }
    Ok(worst)
}

/// [`equivariance_residual_on`] over the chart's sample grid.
pub fn check_equivariance<T: Scalar>(metric: &MetricField<T>, chart: &OrbifoldChart<T>) -> Result<T> {
    equivariance_residual_on(metric, chart, &sample_grid(&chart.region))
}

/// Pullback along a map with a Jacobian.
pub fn pullback_metric<T: Scalar>(map: Arc<dyn ChartMap<T>>, metric: &MetricField<T>) -> MetricField<T> {
    MetricField::new(MetricKind::Pullback {
        base: Box::new(metric.clone()),
        map,
    })
}

/// Free-standing form of [`MetricField::christoffel`].
pub fn christoffel<T: Scalar>(metric: &MetricField<T>, x: &[T]) -> Result<Vec<Mat<T>>> {
    metric.christoffel(x)
}

/// One metric per chart of an atlas.
#[derive(Clone, Debug)]
pub struct OrbifoldMetric<T: Scalar> {
    fields: Vec<MetricField<T>>,
}

impl<T: Scalar> OrbifoldMetric<T> {
    /// Unchecked family; use [`OrbifoldMetric::validated`] to enforce compatibility.
    pub fn new(atlas: &Atlas<T>, fields: Vec<MetricField<T>>) -> Result<Self> {
        if fields.len() != atlas.charts().len() {
            return Err(Error::Validation(format!(
                "{} metric fields for {} charts",
                fields.len(),
                atlas.charts().len()
            )));
        }
        Ok(Self { fields })
    }

    /// Family that is group invariant on every chart and isometric across
    /// every declared change, within `tol`.
    pub fn validated(atlas: &Atlas<T>, fields: Vec<MetricField<T>>, tol: T) -> Result<Self> {
        let m = Self::new(atlas, fields)?;
        for (id, chart) in atlas.chart_ids().zip(atlas.charts()) {
            let field = m.field(id);
            for x in sample_grid(&chart.region) {
                field.check_spd(&x)?;
            }
            let r = check_equivariance(field, chart)?;
            if r > tol {
                return Err(Error::Validation(format!(
                    "metric on `{}` is not group invariant (residual {r})",
                    chart.name
                )));
            }
        }
        let r = check_compatibility(atlas, &m)?;
        if r > tol {
            return Err(Error::Validation(format!(
                "metrics are not isometric across changes of charts (residual {r})"
            )));
        }
        Ok(m)
    }

    pub fn flat(atlas: &Atlas<T>) -> Self {
        Self {
            fields: vec![MetricField::flat(atlas.dim()); atlas.charts().len()],
        }
    }

    pub fn field(&self, chart: ChartId) -> &MetricField<T> {
        &self.fields[chart.0]
    }

    pub fn fields(&self) -> &[MetricField<T>] {
        &self.fields
    }
}

/// Largest `|g_target(Tλ v, Tλ w) − g_source(v, w)|` over declared changes.
pub fn check_compatibility<T: Scalar>(atlas: &Atlas<T>, metric: &OrbifoldMetric<T>) -> Result<T> {
    let mut worst = T::zero();
    for ch in atlas.changes() {
        let src = metric.field(ch.source);
        let tgt = metric.field(ch.target);
        let a = ch.map.linear_part();
        for x in sample_grid(&ch.region) {
            let moved = a.transpose().mul(&tgt.tensor(&ch.map.apply(&x))?).mul(a);
            worst = worst.max(moved.sub(&src.tensor(&x)?).max_abs());
        }
    }
    Ok(worst)
}

/// Flat-top bump: 1 for `r ≤ r0`, 0 for `r ≥ 1`, smooth in between.
fn bump<T: Scalar>(r: T, r0: T) -> T {
    if r <= r0 {
        return T::one();
    }
    if r >= T::one() {
        return T::zero();
    }
    let e = T::one() / (T::one() - r) - T::one() / (r - r0);
    T::one() / (T::one() + e.exp())
}

#[derive(Clone, Debug)]
struct ChartBump<T: Scalar> {
    region: Region<T>,
    group: Vec<AffineMap<T>>,
}

impl<T: Scalar> ChartBump<T> {
    const FLAT_TOP: f64 = 0.5;

    fn raw(&self, x: &[T]) -> T {
        let r0 = T::of(Self::FLAT_TOP);
        match &self.region {
            Region::Ball { center, radius } => bump(dist(x, center) / *radius, r0),
            Region::Box { center, halfwidths } => x
                .iter()
                .zip(center)
                .zip(halfwidths)
                .map(|((&xi, &ci), &hi)| bump((xi - ci).abs() / hi, r0))
                .fold(T::one(), |a, b| a * b),
        }
    }

    /// Group average of the raw bump.
    fn value(&self, x: &[T]) -> T {
        let s: T = self.group.iter().map(|g| self.raw(&g.apply(x))).sum();
        s / T::nat(self.group.len())
    }
}

/// Smooth orbifold partition of unity subordinate to the charts of an atlas.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity<T: Scalar> {
    atlas: Atlas<T>,
    bumps: Vec<ChartBump<T>>,
}

/// Relative inset of the grids on which coverage is certified.
const COVERAGE_INSET: f64 = 0.01;

/// Build the partition and certify coverage on each chart's sample grid.
pub fn build_partition_of_unity<T: Scalar>(atlas: &Atlas<T>) -> Result<PartitionOfUnity<T>> {
    let bumps = atlas
        .charts()
        .iter()
        .map(|c| ChartBump {
            region: c.region.clone(),
            group: c.group.elements().iter().map(|g| g.map().clone()).collect(),
        })
        .collect();
    let pu = PartitionOfUnity {
        atlas: atlas.clone(),
        bumps,
    };
    let mut uncovered = Vec::new();
    for (id, chart) in atlas.chart_ids().zip(atlas.charts()) {
        let inner = chart.region.shrunk(chart.region.scale() * T::of(COVERAGE_INSET));
        for x in sample_grid(&inner) {
            if !(pu.denominator(id, &x) > T::zero()) {
                uncovered.push(x);
            }
        }
    }
    if let Some(first) = uncovered.first() {
        return Err(Error::Coverage {
            count: uncovered.len(),
            first: as_f64(first),
        });
    }
    Ok(pu)
}

impl<T: Scalar> PartitionOfUnity<T> {
    /// Sum of the averaged bumps of every chart at the orbit of `x ∈ chart`.
    fn denominator(&self, chart: ChartId, x: &[T]) -> T {
        self.atlas
            .chart_ids()
            .filter_map(|b| self.atlas.image_in(chart, x, b).map(|y| self.bumps[b.0].value(&y)))
            .sum()
    }

    /// `χ_α(y)` for `y` in chart `alpha`.
    pub fn lift_value(&self, alpha: ChartId, y: &[T]) -> Result<T> {
        self.atlas.chart(alpha).check_inside(y)?;
        let s = self.denominator(alpha, y);
        if !(s > T::zero()) {
            return Err(Error::Coverage {
                count: 1,
                first: as_f64(y),
            });
        }
        Ok(self.bumps[alpha.0].value(y) / s)
    }

    /// `χ_α` at the orbit of `x ∈ chart` (zero when the orbit misses chart `alpha`).
    pub fn value(&self, alpha: ChartId, chart: ChartId, x: &[T]) -> Result<T> {
        self.atlas.chart(chart).check_inside(x)?;
        match self.atlas.image_in(chart, x, alpha) {
            Some(y) if self.atlas.chart(alpha).region.contains(&y, T::zero()) => self.lift_value(alpha, &y),
            _ => Ok(T::zero()),
        }
    }

    /// `Σ_α χ_α` at the orbit of `x ∈ chart`.
    pub fn sum(&self, chart: ChartId, x: &[T]) -> Result<T> {
        self.atlas.chart_ids().map(|a| self.value(a, chart, x)).sum()
    }

    /// Largest `|χ_α(g y) − χ_α(y)|` over the inset sample grid of chart `alpha`.
    pub fn equivariance_residual(&self, alpha: ChartId) -> Result<T> {
        let chart = self.atlas.chart(alpha);
        let inner = chart.region.shrunk(chart.region.scale() * T::of(COVERAGE_INSET));
        let mut worst = T::zero();
        for y in sample_grid(&inner) {
            let v = self.lift_value(alpha, &y)?;
            for g in chart.group.elements() {
                worst = worst.max((self.lift_value(alpha, &g.apply(&y))? - v).abs());
            }
        }
        Ok(worst)
    }

    pub fn atlas(&self) -> &Atlas<T> {
        &self.atlas
    }
}

/// Polynomial term `coef · Π x_k^{powers_k}` in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coef: f64,
    pub powers: Vec<u32>,
}

pub fn build_polynomial<T: Scalar>(dim: usize, terms: &[TermSpec]) -> Result<Polynomial<T>> {
    if let Some(t) = terms.iter().find(|t| t.powers.len() != dim) {
        return Err(Error::Config(format!(
            "monomial {:?} has {} exponents, expected {dim}",
            t.powers,
            t.powers.len()
        )));
    }
    Ok(Polynomial::from_terms(
        dim,
        terms.iter().map(|t| (t.powers.clone(), T::of(t.coef))),
    ))
}

/// Metric of one chart in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MetricSpec {
    Flat,
    Constant {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        average: bool,
    },
    Conformal {
        phi: Vec<TermSpec>,
        #[serde(default)]
        average: bool,
    },
    Polynomial {
        entries: Vec<Vec<Vec<TermSpec>>>,
        #[serde(default)]
        average: bool,
    },
}

impl MetricSpec {
    /// Build for `chart`, averaging over its group when requested.
    pub fn build<T: Scalar>(&self, chart: &OrbifoldChart<T>) -> Result<MetricField<T>> {
        let d = chart.dim();
        let (field, average) = match self {
            MetricSpec::Flat => (MetricField::flat(d), false),
            MetricSpec::Constant { matrix, average } => {
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("constant metric must be {d}×{d}")));
                }
                let rows: Vec<Vec<T>> = matrix.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect();
                (MetricField::constant(Mat::from_rows(&rows)), *average)
            }
            MetricSpec::Conformal { phi, average } => (MetricField::conformal(build_polynomial(d, phi)?), *average),
            MetricSpec::Polynomial { entries, average } => {
                if entries.len() != d || entries.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("polynomial metric must be {d}×{d}")));
                }
                let e = entries
                    .iter()
                    .map(|r| r.iter().map(|t| build_polynomial(d, t)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                (MetricField::polynomial(e), *average)
            }
        };
        if average {
            average_metric(chart, &field)
        } else {
            Ok(field)
        }
    }
}
