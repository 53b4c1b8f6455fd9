//! The local chart of the diffeomorphism group: `E(σ) = exp ∘ σ`, budgets
//! for its validity, the composition `σ ⋄ τ` and the inversion `σ*`.
//!
//! Every chart is treated as normalized to a ball of radius 5: with
//! `s = scale/5`, the nested regions `Ω_r` are the chart domain shrunk about
//! its center by `r/5`. Flat charts use closed forms (`exp(x, v) = x + v`);
//! other charts shoot geodesics and invert them by Newton's method, so ⋄ and
//! * are evaluated exactly (to Newton tolerance) rather than interpolated.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geodesic::chart_exp;
use crate::linalg::{add, central_jacobian, dist, norm, sub, Mat};
use crate::metric::OrbifoldMetric;
use crate::orbifold::{Atlas, ChartId, OrbitPoint};
use crate::orbisection::{c1_norm, ChartField, FieldFn, Orbisection};
use crate::region::Region;
use crate::scalar::Scalar;

/// Radii of the nested budget regions.
pub const OMEGA_RADII: [f64; 5] = [1.0, 1.25, 2.0, 3.0, 5.0];
/// Newton: target residual, stall acceptance, iteration cap.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_ACCEPT: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Default step of the chart exponential in non-flat charts.
pub const EXP_STEP: f64 = 1.0 / 64.0;
/// Lower bound on sampled Jacobian determinants of étale lifts.
pub const MIN_DET: f64 = 0.5;
/// Sampled-injectivity resolution.
pub const INJECTIVITY_TOL: f64 = 1e-6;
const FD_SHOOT: f64 = 1e-6;

/// Index into [`OMEGA_RADII`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Omega {
    One,
    FiveQuarters,
    Two,
    Three,
    Five,
}

impl Omega {
    pub fn radius(self) -> f64 {
        OMEGA_RADII[self as usize]
    }
}

/// Budget constants of one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartBudget<T> {
    /// Injectivity radius of the chart exponential on `Ω_4`.
    pub epsilon: T,
    /// Reach of the local inverse: `B_δ(x) ⊆ exp(x, B_ε(0))`.
    pub delta: T,
    pub sigma_t: T,
    /// Bound on section values.
    pub nu: T,
    /// Cap on the C¹ norm over `Ω_1`.
    pub tau: T,
    pub radius: T,
    pub flat: bool,
    regions: Vec<Region<T>>,
}

impl<T: Scalar> ChartBudget<T> {
    pub fn omega(&self, r: Omega) -> &Region<T> {
        &self.regions[r as usize]
    }

    fn from_constants(region: &Region<T>, epsilon: T, delta: T, flat: bool, dim: usize) -> Self {
        let half = T::of(0.5);
        let nu = delta * half;
        let tau = nu.min(T::one() / T::nat(2 * dim));
        let regions = OMEGA_RADII.iter().map(|&r| region.scaled(T::of(r / 5.0))).collect();
        Self {
            epsilon,
            delta,
            sigma_t: epsilon * half,
            nu,
            tau,
            radius: epsilon,
            flat,
            regions,
        }
    }
}

#[derive(Debug)]
struct BudgetInner<T: Scalar> {
    atlas: Atlas<T>,
    metric: OrbifoldMetric<T>,
    charts: Vec<ChartBudget<T>>,
    exp_step: T,
}

/// Validity constants for every chart, with the atlas and metric they refer to.
#[derive(Clone, Debug)]
pub struct NeighborhoodBudget<T: Scalar>(Arc<BudgetInner<T>>);

/// Estimate the budget of every chart.
pub fn estimate_budget<T: Scalar>(atlas: &Atlas<T>, metric: &OrbifoldMetric<T>) -> Result<NeighborhoodBudget<T>> {
    estimate_budget_with_step(atlas, metric, T::of(EXP_STEP))
}

pub fn estimate_budget_with_step<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    exp_step: T,
) -> Result<NeighborhoodBudget<T>> {
    let d = atlas.dim();
    let charts = atlas
        .chart_ids()
        .map(|id| {
            let region = &atlas.chart(id).region;
            let unit = region.scale() / T::of(5.0);
            let field = metric.field(id);
            if field.is_constant() {
                return Ok(ChartBudget::from_constants(region, unit, unit, true, d));
            }
            let (eps, delta) = search_epsilon(atlas, metric, id, unit, exp_step)?;
            Ok(ChartBudget::from_constants(region, eps, delta, false, d))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NeighborhoodBudget(Arc::new(BudgetInner {
        atlas: atlas.clone(),
        metric: metric.clone(),
        charts,
        exp_step,
    })))
}

/// Dyadic search for the largest radius on which sampled `exp(x, ·)` is
/// injective with Jacobian determinant above [`MIN_DET`], for `x` on a grid
/// of `Ω_4`. A candidate is accepted only if it also passes on grids of
/// twice the density.
fn search_epsilon<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    chart: ChartId,
    unit: T,
    step: T,
) -> Result<(T, T)> {
    let mut r = unit;
    for _ in 0..12 {
        if let Some(reach) = exp_admissible(atlas, metric, chart, r, step, 5, true)? {
            if let Some(fine) = exp_admissible(atlas, metric, chart, r, step, 9, false)? {
                return Ok((r, reach.min(fine) * T::of(0.9)));
            }
        }
        r = r * T::of(0.5);
    }
    Err(Error::Numerical(format!(
        "degenerate metric on chart `{}`: no admissible injectivity radius",
        atlas.chart(chart).name
    )))
}

/// Smallest distance reached from the base points at radius `r`, if `exp`
/// is sampled-étale and injective on `B_r(0)` over the base grid.
/// Determinants are checked at every direction, or only on the rim.
fn exp_admissible<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    chart: ChartId,
    r: T,
    step: T,
    dirs_per_axis: usize,
    det_everywhere: bool,
) -> Result<Option<T>> {
    let region = &atlas.chart(chart).region;
    let field = metric.field(chart);
    let d = atlas.dim();
    let bases = region.scaled(T::of(0.8)).grid(3, 27);
    let ball = Region::ball(vec![T::zero(); d], r);
    let dirs: Vec<(Vec<T>, bool)> = ball
        .grid(dirs_per_axis, 4096)
        .into_iter()
        .map(|v| (v, det_everywhere))
        .chain(ball.boundary_samples(dirs_per_axis).into_iter().map(|v| (v, true)))
        .collect();
    let mut reach = r;
    for x in &bases {
        let mut images = Vec::with_capacity(dirs.len());
        for (v, check_det) in &dirs {
            let y = chart_exp(field, x, v, step)?;
            if !region.contains(&y, T::zero()) {
                return Ok(None);
            }
            if *check_det {
                let j = central_jacobian(v, T::of(FD_SHOOT), |w| chart_exp(field, x, w, step))?;
                if !(j.det() > T::of(MIN_DET)) {
                    return Ok(None);
                }
            }
            if norm(v) >= r * T::of(1.0 - 1e-9) {
                reach = reach.min(dist(&y, x));
            }
            images.push((v, y));
        }
        if !injective(&images) {
            return Ok(None);
        }
    }
    Ok(Some(reach))
}

/// No two samples collapse: distinct sources have distinct images.
fn injective<T: Scalar>(pairs: &[(&Vec<T>, Vec<T>)]) -> bool {
    let tol = T::of(INJECTIVITY_TOL);
    for (i, (a, fa)) in pairs.iter().enumerate() {
        for (b, fb) in &pairs[i + 1..] {
            if dist(fa, fb) < tol && dist(a, b) >= tol {
                return false;
            }
        }
    }
    true
}

impl<T: Scalar> NeighborhoodBudget<T> {
    pub fn atlas(&self) -> &Atlas<T> {
        &self.0.atlas
    }

    pub fn metric(&self) -> &OrbifoldMetric<T> {
        &self.0.metric
    }

    pub fn chart(&self, id: ChartId) -> &ChartBudget<T> {
        &self.0.charts[id.0]
    }

    pub fn charts(&self) -> &[ChartBudget<T>] {
        &self.0.charts
    }

    pub fn exp_step(&self) -> T {
        self.0.exp_step
    }

    /// Pointwise injectivity radius: boundary clearance in flat charts,
    /// the searched constant otherwise.
    pub fn epsilon_at(&self, chart: ChartId, x: &[T]) -> T {
        let b = self.chart(chart);
        if b.flat {
            self.atlas().chart(chart).region.clearance(x)
        } else {
            b.epsilon
        }
    }

    /// Chart exponential `exp(x, v)`.
    pub fn exp(&self, chart: ChartId, x: &[T], v: &[T]) -> Result<Vec<T>> {
        if self.chart(chart).flat {
            return Ok(add(x, v));
        }
        chart_exp(self.metric().field(chart), x, v, self.0.exp_step)
    }

    /// `∂ exp(x, v) / ∂v`.
    pub fn exp_jacobian(&self, chart: ChartId, x: &[T], v: &[T]) -> Result<Mat<T>> {
        if self.chart(chart).flat {
            return Ok(Mat::identity(x.len()));
        }
        central_jacobian(v, T::of(FD_SHOOT), |w| self.exp(chart, x, w))
    }

    /// `b(x, y)`: the tangent vector at `x` whose geodesic reaches `y` at time 1.
    pub fn local_inverse_exp(&self, chart: ChartId, x: &[T], y: &[T]) -> Result<Vec<T>> {
        if self.chart(chart).flat {
            return Ok(sub(y, x));
        }
        newton(
            sub(y, x),
            |v| Ok(sub(&self.exp(chart, x, v)?, y)),
            |v| self.exp_jacobian(chart, x, v),
        )
        .map_err(|e| match e {
            Error::Inversion(m) => {
                Error::Inversion(format!("b(x, y) on chart `{}`: {m}", self.atlas().chart(chart).name))
            }
            other => other,
        })
    }

    /// Uniform samples of `Ω_r` on `chart`.
    pub fn sample<R: Rng + ?Sized>(&self, chart: ChartId, r: Omega, n: usize, rng: &mut R) -> Vec<Vec<T>> {
        let region = self.chart(chart).omega(r);
        (0..n).map(|_| region.sample(rng, T::zero())).collect()
    }
}

/// Damped Newton for `F(z) = 0` from `z0`.
pub fn newton<T: Scalar>(
    z0: Vec<T>,
    f: impl Fn(&[T]) -> Result<Vec<T>>,
    jac: impl Fn(&[T]) -> Result<Mat<T>>,
) -> Result<Vec<T>> {
    let mut z = z0;
    let mut r = f(&z)?;
    let mut res = norm(&r);
    let tol = T::of(NEWTON_TOL);
    for _ in 0..NEWTON_MAX_ITER {
        if res <= tol {
            return Ok(z);
        }
        let step = jac(&z)?
            .solve(&r)
            .ok_or_else(|| Error::Inversion("singular Jacobian".into()))?;
        let mut lambda = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<T> = z.iter().zip(&step).map(|(&a, &b)| a - lambda * b).collect();
            let rc = f(&cand)?;
            let rn = norm(&rc);
            if rn < res {
                z = cand;
                r = rc;
                res = rn;
                improved = true;
                break;
            }
            lambda = lambda * T::of(0.5);
        }
        if !improved {
            break;
        }
    }
    if res <= T::of(NEWTON_ACCEPT) {
        Ok(z)
    } else {
        Err(Error::Inversion(format!(
            "Newton stalled at residual {:e}",
            res.as_f64()
        )))
    }
}

/// Outcome of budget validation on one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartReport<T> {
    pub chart: String,
    pub c1_norm: T,
    pub tau: T,
    pub sup_norm: T,
    pub sup_bound: T,
    pub min_det: T,
    pub injective: bool,
}

impl<T: Scalar> ChartReport<T> {
    pub fn pass(&self) -> bool {
        self.c1_norm < self.tau && self.sup_norm < self.sup_bound && self.min_det > T::of(MIN_DET) && self.injective
    }

    fn error(&self) -> Option<Error> {
        let e = |norm: &str, value: T, bound: T| Error::Budget {
            chart: self.chart.clone(),
            norm: norm.into(),
            value: value.as_f64(),
            bound: bound.as_f64(),
        };
        if !(self.c1_norm < self.tau) {
            Some(e("C1 norm on Ω_1", self.c1_norm, self.tau))
        } else if !(self.sup_norm < self.sup_bound) {
            Some(e("sup norm on Ω_2", self.sup_norm, self.sup_bound))
        } else if !(self.min_det > T::of(MIN_DET)) {
            Some(e("Jacobian determinant of exp∘σ on Ω_2", self.min_det, T::of(MIN_DET)))
        } else if !self.injective {
            Some(e("injectivity of exp∘σ on Ω_2", T::one(), T::zero()))
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetReport<T> {
    pub charts: Vec<ChartReport<T>>,
}

impl<T: Scalar> BudgetReport<T> {
    pub fn pass(&self) -> bool {
        self.charts.iter().all(ChartReport::pass)
    }

    /// The first violation as an out-of-neighborhood error.
    pub fn into_result(self) -> Result<()> {
        match self.charts.iter().find_map(ChartReport::error) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Check `σ` against the budget: C¹ norm on `Ω_1`, values on `Ω_2`, and
/// sampled étale-ness and injectivity of `exp ∘ σ` on `Ω_2`.
pub fn validate_budget<T: Scalar>(sigma: &Orbisection<T>, budget: &NeighborhoodBudget<T>) -> Result<BudgetReport<T>> {
    let atlas = budget.atlas();
    let mut charts = Vec::new();
    for id in atlas.chart_ids() {
        let b = budget.chart(id);
        let name = atlas.chart(id).name.clone();
        let bound = b.epsilon.min(b.nu);
        if sigma.field(id).is_zero() {
            charts.push(ChartReport {
                chart: name,
                c1_norm: T::zero(),
                tau: b.tau,
                sup_norm: T::zero(),
                sup_bound: bound,
                min_det: T::one(),
                injective: true,
            });
            continue;
        }
        let c1 = c1_norm(sigma, id, b.omega(Omega::One))?;
        let metric = budget.metric().field(id);
        let pts = b.omega(Omega::Two).grid(crate::orbisection::GRID_PER_AXIS, 1024);
        let mut sup = T::zero();
        let mut min_det = T::infinity();
        let mut images = Vec::with_capacity(pts.len());
        for x in &pts {
            let v = sigma.eval(id, x)?;
            sup = sup.max(metric.norm_sq(x, &v)?.sqrt());
            let lift = LocalDiffeo::lift_with(budget, sigma, id, x)?;
            min_det = min_det.min(LocalDiffeo::lift_jacobian_with(budget, sigma, id, x)?.det());
            images.push((x, lift));
        }
        charts.push(ChartReport {
            chart: name,
            c1_norm: c1,
            tau: b.tau,
            sup_norm: sup,
            sup_bound: bound,
            min_det,
            injective: injective(&images),
        });
    }
    Ok(BudgetReport { charts })
}

/// `E(σ)`: the orbifold map `exp_Orb ∘ σ` with lifts `e^σ = exp ∘ σ`.
#[derive(Clone, Debug)]
pub struct LocalDiffeo<T: Scalar> {
    section: Orbisection<T>,
    budget: NeighborhoodBudget<T>,
}

/// `E(σ)`, after checking `σ` against the budget.
pub fn exp_section<T: Scalar>(sigma: &Orbisection<T>, budget: &NeighborhoodBudget<T>) -> Result<LocalDiffeo<T>> {
    validate_budget(sigma, budget)?.into_result()?;
    Ok(LocalDiffeo {
        section: sigma.clone(),
        budget: budget.clone(),
    })
}

impl<T: Scalar> LocalDiffeo<T> {
    /// `E(σ)` without the budget check, for callers that validated already.
    pub fn unchecked(sigma: &Orbisection<T>, budget: &NeighborhoodBudget<T>) -> Self {
        Self {
            section: sigma.clone(),
            budget: budget.clone(),
        }
    }

    pub fn section(&self) -> &Orbisection<T> {
        &self.section
    }

    pub fn budget(&self) -> &NeighborhoodBudget<T> {
        &self.budget
    }

    fn lift_with(budget: &NeighborhoodBudget<T>, sigma: &Orbisection<T>, chart: ChartId, x: &[T]) -> Result<Vec<T>> {
        budget.exp(chart, x, &sigma.eval(chart, x)?)
    }

    fn lift_jacobian_with(
        budget: &NeighborhoodBudget<T>,
        sigma: &Orbisection<T>,
        chart: ChartId,
        x: &[T],
    ) -> Result<Mat<T>> {
        if budget.chart(chart).flat {
            return Ok(Mat::identity(x.len()).add(&sigma.jacobian(chart, x)?));
        }
        central_jacobian(x, T::of(FD_SHOOT), |y| Self::lift_with(budget, sigma, chart, y))
    }

    /// `e^σ(x) = exp(x, σ(x))`.
    pub fn lift(&self, chart: ChartId, x: &[T]) -> Result<Vec<T>> {
        Self::lift_with(&self.budget, &self.section, chart, x)
    }

    pub fn lift_jacobian(&self, chart: ChartId, x: &[T]) -> Result<Mat<T>> {
        Self::lift_jacobian_with(&self.budget, &self.section, chart, x)
    }

    /// `(e^σ)⁻¹(y)` by damped Newton from `y`.
    pub fn inverse_lift(&self, chart: ChartId, y: &[T]) -> Result<Vec<T>> {
        newton(
            y.to_vec(),
            |x| Ok(sub(&self.lift(chart, x)?, y)),
            |x| self.lift_jacobian(chart, x),
        )
    }

    /// Underlying orbit map: canonical representative of `e^σ(p.rep)`.
    pub fn apply(&self, p: &OrbitPoint<T>) -> Result<OrbitPoint<T>> {
        let atlas = self.budget.atlas();
        let y = self.lift(p.chart, &p.rep)?;
        atlas.chart(p.chart).check_inside(&y)?;
        Ok(atlas.canonical_point(&OrbitPoint { chart: p.chart, rep: y }))
    }

    /// Largest `‖e^σ(g x) − g e^σ(x)‖` over a chart grid of `Ω_2`.
    pub fn equivariance_residual(&self, chart: ChartId) -> Result<T> {
        let c = self.budget.atlas().chart(chart);
        let mut worst = T::zero();
        for x in self.budget.chart(chart).omega(Omega::Two).grid(9, 1024) {
            let fx = self.lift(chart, &x)?;
            for g in c.group.elements() {
                worst = worst.max(dist(&self.lift(chart, &g.apply(&x))?, &g.apply(&fx)));
            }
        }
        Ok(worst)
    }
}

// ---- lazily evaluated ⋄ and * ----------------------------------------

#[derive(Debug)]
struct FlatCompose<T: Scalar> {
    sigma: Arc<ChartField<T>>,
    tau: Arc<ChartField<T>>,
}

impl<T: Scalar> FieldFn<T> for FlatCompose<T> {
    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let t = self.tau.eval(x)?;
        Ok(add(&t, &self.sigma.eval(&add(x, &t))?))
    }

    fn jacobian(&self, x: &[T]) -> Result<Mat<T>> {
        let t = self.tau.eval(x)?;
        let dt = self.tau.jacobian(x)?;
        let ds = self.sigma.jacobian(&add(x, &t))?;
        Ok(dt.add(&ds.mul(&Mat::identity(x.len()).add(&dt))))
    }
}

#[derive(Debug)]
struct FlatInverse<T: Scalar> {
    sigma: Arc<ChartField<T>>,
}

impl<T: Scalar> FlatInverse<T> {
    fn preimage(&self, y: &[T]) -> Result<Vec<T>> {
        newton(
            y.to_vec(),
            |x| Ok(sub(&add(x, &self.sigma.eval(x)?), y)),
            |x| Ok(Mat::identity(x.len()).add(&self.sigma.jacobian(x)?)),
        )
    }
}

impl<T: Scalar> FieldFn<T> for FlatInverse<T> {
    fn eval(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(sub(&self.preimage(y)?, y))
    }

    fn jacobian(&self, y: &[T]) -> Result<Mat<T>> {
        let x = self.preimage(y)?;
        let d = y.len();
        let inv = Mat::identity(d)
            .add(&self.sigma.jacobian(&x)?)
            .inverse()
            .ok_or_else(|| Error::Inversion("I + Dσ is singular".into()))?;
        Ok(inv.sub(&Mat::identity(d)))
    }
}

#[derive(Debug)]
struct GeodesicCompose<T: Scalar> {
    budget: NeighborhoodBudget<T>,
    chart: ChartId,
    sigma: Orbisection<T>,
    tau: Orbisection<T>,
}

impl<T: Scalar> FieldFn<T> for GeodesicCompose<T> {
    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let b = &self.budget;
        let y = LocalDiffeo::lift_with(b, &self.tau, self.chart, x)?;
        check_within(b, self.chart, &y)?;
        let z = LocalDiffeo::lift_with(b, &self.sigma, self.chart, &y)?;
        check_within(b, self.chart, &z)?;
        b.local_inverse_exp(self.chart, x, &z)
    }
}

#[derive(Debug)]
struct GeodesicInverse<T: Scalar> {
    diffeo: LocalDiffeo<T>,
    chart: ChartId,
}

impl<T: Scalar> FieldFn<T> for GeodesicInverse<T> {
    fn eval(&self, y: &[T]) -> Result<Vec<T>> {
        let x = self.diffeo.inverse_lift(self.chart, y)?;
        check_within(&self.diffeo.budget, self.chart, &x)?;
        self.diffeo.budget.local_inverse_exp(self.chart, y, &x)
    }
}

fn check_within<T: Scalar>(budget: &NeighborhoodBudget<T>, chart: ChartId, y: &[T]) -> Result<()> {
    let c = budget.atlas().chart(chart);
    if c.region.contains(y, T::zero()) {
        Ok(())
    } else {
        Err(Error::Budget {
            chart: c.name.clone(),
            norm: "intermediate point clearance in Ω_5".into(),
            value: c.region.clearance(y).as_f64(),
            bound: 0.0,
        })
    }
}

/// `σ ⋄ τ` with `exp ∘ (σ ⋄ τ) = e^σ ∘ e^τ`.
pub fn compose_sections<T: Scalar>(
    sigma: &Orbisection<T>,
    tau: &Orbisection<T>,
    budget: &NeighborhoodBudget<T>,
) -> Result<Orbisection<T>> {
    validate_budget(sigma, budget)?.into_result()?;
    validate_budget(tau, budget)?.into_result()?;
    Ok(compose_unchecked(sigma, tau, budget))
}

/// [`compose_sections`] without the budget checks.
pub fn compose_unchecked<T: Scalar>(
    sigma: &Orbisection<T>,
    tau: &Orbisection<T>,
    budget: &NeighborhoodBudget<T>,
) -> Orbisection<T> {
    let fields = budget
        .atlas()
        .chart_ids()
        .map(|id| {
            let (s, t) = (sigma.field_arc(id), tau.field_arc(id));
            if t.is_zero() {
                return s;
            }
            if s.is_zero() {
                return t;
            }
            let f: Arc<dyn FieldFn<T>> = if budget.chart(id).flat {
                Arc::new(FlatCompose { sigma: s, tau: t })
            } else {
                Arc::new(GeodesicCompose {
                    budget: budget.clone(),
                    chart: id,
                    sigma: sigma.clone(),
                    tau: tau.clone(),
                })
            };
            Arc::new(ChartField::Custom(f))
        })
        .collect();
    Orbisection::from_arcs(fields)
}

/// `σ*` with `exp ∘ σ* = (e^σ)⁻¹`.
pub fn invert_section<T: Scalar>(sigma: &Orbisection<T>, budget: &NeighborhoodBudget<T>) -> Result<Orbisection<T>> {
    validate_budget(sigma, budget)?.into_result()?;
    Ok(invert_unchecked(sigma, budget))
}

/// [`invert_section`] without the budget check.
pub fn invert_unchecked<T: Scalar>(sigma: &Orbisection<T>, budget: &NeighborhoodBudget<T>) -> Orbisection<T> {
    let diffeo = LocalDiffeo::unchecked(sigma, budget);
    let fields = budget
        .atlas()
        .chart_ids()
        .map(|id| {
            let s = sigma.field_arc(id);
            if s.is_zero() {
                return s;
            }
            let f: Arc<dyn FieldFn<T>> = if budget.chart(id).flat {
                Arc::new(FlatInverse { sigma: s })
            } else {
                Arc::new(GeodesicInverse {
                    diffeo: diffeo.clone(),
                    chart: id,
                })
            };
            Arc::new(ChartField::Custom(f))
        })
        .collect();
    Orbisection::from_arcs(fields)
}

/// Largest `t ∈ [0, t_max]` (to `tol`) for which `t·σ` passes the budget,
/// assuming validity is monotone in `t`.
pub fn admissible_scale<T: Scalar>(
    sigma: &Orbisection<T>,
    budget: &NeighborhoodBudget<T>,
    t_max: T,
    tol: T,
) -> Result<T> {
    if validate_budget(&sigma.scaled(t_max), budget)?.pass() {
        return Ok(t_max);
    }
    let (mut lo, mut hi) = (T::zero(), t_max);
    while hi - lo > tol {
        let mid = (lo + hi) * T::of(0.5);
        if validate_budget(&sigma.scaled(mid), budget)?.pass() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{average_metric, MetricField};
    use crate::orbifold::{FiniteGroup, GroupElement, OrbifoldChart};
    use crate::poly::{PolyField, Polynomial};

    fn mirror(radius: f64) -> Atlas<f64> {
        let g = GroupElement::linear(Mat::diag(&[-1.0, 1.0]), 1e-9).unwrap();
        let group = FiniteGroup::generated_by(2, &[g], 1e-9).unwrap();
        let chart = OrbifoldChart::new("U", Region::ball(vec![0.0, 0.0], radius), group, 1e-9).unwrap();
        Atlas::global(chart, 1e-9).unwrap()
    }

    fn linear(atlas: &Atlas<f64>, rows: [[f64; 2]; 2]) -> Orbisection<f64> {
        let m = Mat::from_rows(&[rows[0].to_vec(), rows[1].to_vec()]);
        Orbisection::from_fields(atlas, vec![ChartField::Poly(PolyField::linear(&m))]).unwrap()
    }

    #[test]
    fn flat_budget_regions() {
        let a = mirror(5.0);
        let b = estimate_budget(&a, &OrbifoldMetric::flat(&a)).unwrap();
        let c = b.chart(ChartId(0));
        assert_eq!(c.epsilon, 1.0);
        assert_eq!(c.delta, 1.0);
        assert!(c.tau <= c.nu && c.nu < c.epsilon && c.tau < c.radius);
        assert_eq!(c.omega(Omega::Two), &Region::ball(vec![0.0, 0.0], 2.0));
        assert!((b.epsilon_at(ChartId(0), &[3.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flat_inverse_exp_and_newton() {
        let a = mirror(5.0);
        let b = estimate_budget(&a, &OrbifoldMetric::flat(&a)).unwrap();
        assert_eq!(
            b.local_inverse_exp(ChartId(0), &[0.5, 0.5], &[0.7, 0.1]).unwrap(),
            vec![0.7 - 0.5, 0.1 - 0.5]
        );
        let s = linear(&a, [[0.1, 0.0], [0.0, -0.05]]);
        let inv = invert_section(&s, &b).unwrap();
        let x = [0.4, -0.6];
        let want = [x[0] * (1.0 / 1.1 - 1.0), x[1] * (1.0 / 0.95 - 1.0)];
        assert!(dist(&inv.eval(ChartId(0), &x).unwrap(), &want) < 1e-12);
    }

    #[test]
    fn conformal_inverse_exp_round_trip() {
        let a = mirror(5.0);
        let chart = a.chart(ChartId(0));
        let raw = MetricField::conformal(Polynomial::from_terms(2, [(vec![2, 0], 0.02), (vec![0, 2], 0.02)]));
        let m = OrbifoldMetric::new(&a, vec![average_metric(chart, &raw).unwrap()]).unwrap();
        let b = estimate_budget(&a, &m).unwrap();
        let c = b.chart(ChartId(0));
        assert!(!c.flat && c.epsilon > 0.0);
        let x = [0.3, 0.2];
        let y = [0.5, -0.1];
        let v = b.local_inverse_exp(ChartId(0), &x, &y).unwrap();
        assert!(dist(&b.exp(ChartId(0), &x, &v).unwrap(), &y) < 1e-10);
        assert!(norm(&b.local_inverse_exp(ChartId(0), &x, &x).unwrap()) < 1e-12);
    }

    #[test]
    fn budget_rejects_large_sections() {
        let a = mirror(5.0);
        let b = estimate_budget(&a, &OrbifoldMetric::flat(&a)).unwrap();
        assert!(validate_budget(&Orbisection::zero(&a), &b).unwrap().pass());
        let big = linear(&a, [[2.0, 0.0], [0.0, 2.0]]);
        let err = exp_section(&big, &b).unwrap_err();
        assert!(matches!(err, Error::Budget { ref norm, .. } if norm.contains("C1")));
        let small = linear(&a, [[1.0, 0.0], [0.0, 1.0]]);
        let t = admissible_scale(&small, &b, 1.0, 1e-6).unwrap();
        assert!(t > 0.0 && t < 1.0);
        assert!(validate_budget(&small.scaled(t * 0.99), &b).unwrap().pass());
        assert!(!validate_budget(&small.scaled(t * 1.01 + 1e-6), &b).unwrap().pass());
    }
}
