//! Time-dependent sections, their flows, the evolution `e(γ)` and the right
//! logarithmic derivative used to check that `Evol(γ)` integrates `γ`.

use std::fmt;
use std::sync::Arc;

use crate::diffeo::{exp_section, LocalDiffeo, NeighborhoodBudget, Omega};
use crate::error::{Error, Result};
use crate::linalg::{axpy, scale, sub, Mat};
use crate::orbifold::{Atlas, ChartId};
use crate::orbisection::{c1_norm, ChartField, FieldFn, Orbisection};
use crate::scalar::Scalar;

/// RK4 steps per unit time.
pub const FLOW_STEPS: usize = 256;
/// Default number of evolution slices.
pub const SLICES: usize = 64;
/// Default step of the central difference in [`right_log_derivative`].
pub const H_FD: f64 = 1e-4;

/// `t ↦ γ(t)` on `[0, 1]`.
#[derive(Clone, Debug)]
pub enum TimeDependentSection<T: Scalar> {
    /// `γ(t) = Σ tᵏ σ_k`.
    PolyT(Vec<Orbisection<T>>),
    /// `K + 1` equally spaced slices, linear in between.
    Samples(Vec<Orbisection<T>>),
}

impl<T: Scalar> TimeDependentSection<T> {
    pub fn constant(sigma: Orbisection<T>) -> Self {
        Self::PolyT(vec![sigma])
    }

    pub fn zero(atlas: &Atlas<T>) -> Self {
        Self::constant(Orbisection::zero(atlas))
    }

    pub fn poly(coefficients: Vec<Orbisection<T>>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidArgument("poly_t needs at least one coefficient".into()));
        }
        Ok(Self::PolyT(coefficients))
    }

    pub fn samples(slices: Vec<Orbisection<T>>) -> Result<Self> {
        if slices.len() < 2 {
            return Err(Error::InvalidArgument("need at least two time slices".into()));
        }
        Ok(Self::Samples(slices))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::PolyT(c) | Self::Samples(c) => c.iter().all(Orbisection::is_zero),
        }
    }

    /// Weights `(index, weight)` of the stored sections at time `t`.
    fn weights(&self, t: T) -> Vec<(usize, T)> {
        match self {
            Self::PolyT(c) => {
                let mut p = T::one();
                (0..c.len())
                    .map(|k| {
                        let w = p;
                        p = p * t;
                        (k, w)
                    })
                    .collect()
            }
            Self::Samples(s) => {
                let k = s.len() - 1;
                let u = (t.max(T::zero()).min(T::one())) * T::nat(k);
                let i = u.floor().to_usize().unwrap_or(0).min(k - 1);
                let f = u - T::nat(i);
                vec![(i, T::one() - f), (i + 1, f)]
            }
        }
    }

    fn stored(&self) -> &[Orbisection<T>] {
        match self {
            Self::PolyT(c) | Self::Samples(c) => c,
        }
    }

    /// `γ(t)(x)` on `chart`.
    pub fn eval(&self, chart: ChartId, t: T, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); x.len()];
        for (i, w) in self.weights(t) {
            let s = &self.stored()[i];
            if w != T::zero() && !s.field(chart).is_zero() {
                out = axpy(&out, w, &s.eval(chart, x)?);
            }
        }
        Ok(out)
    }

    pub fn jacobian(&self, chart: ChartId, t: T, x: &[T]) -> Result<Mat<T>> {
        let mut out = Mat::zeros(x.len(), x.len());
        for (i, w) in self.weights(t) {
            let s = &self.stored()[i];
            if w != T::zero() && !s.field(chart).is_zero() {
                out = out.add(&s.jacobian(chart, x)?.scale(w));
            }
        }
        Ok(out)
    }

    /// The slice `γ(t)` as an orbisection.
    pub fn at(&self, atlas: &Atlas<T>, t: T) -> Orbisection<T> {
        let stored = self.stored();
        let charts = stored[0].fields().len();
        let fields = (0..charts)
            .map(|c| {
                let terms: Vec<_> = self
                    .weights(t)
                    .into_iter()
                    .filter(|&(i, w)| w != T::zero() && !stored[i].fields()[c].is_zero())
                    .map(|(i, w)| (w, stored[i].fields()[c].clone()))
                    .collect();
                match terms.len() {
                    0 => Arc::new(ChartField::Zero(atlas.dim())),
                    _ => Arc::new(ChartField::Combination(terms)),
                }
            })
            .collect();
        Orbisection::from_arcs(fields)
    }
}

/// RK4 solution of `x' = γ(s)(x)`, `x(0) = x0`, at time `t ∈ [0, 1]`,
/// aborting when the trajectory leaves `Ω_3`.
pub fn flow<T: Scalar>(
    gamma: &TimeDependentSection<T>,
    budget: &NeighborhoodBudget<T>,
    chart: ChartId,
    x0: &[T],
    t: T,
) -> Result<Vec<T>> {
    let omega = budget.chart(chart).omega(Omega::Three);
    let escape = |time: T| Error::FlowEscape {
        chart: budget.atlas().chart(chart).name.clone(),
        time: time.as_f64(),
    };
    if !omega.contains(x0, T::zero()) {
        return Err(escape(T::zero()));
    }
    if gamma.is_zero() || t == T::zero() {
        return Ok(x0.to_vec());
    }
    if t < T::zero() || t > T::one() {
        return Err(Error::InvalidArgument(format!(
            "flow time {} outside [0, 1]",
            t.as_f64()
        )));
    }
    let h0 = T::one() / T::nat(FLOW_STEPS);
    let f = |s: T, x: &[T]| gamma.eval(chart, s, x);
    let mut x = x0.to_vec();
    let mut s = T::zero();
    let mut n = 0usize;
    while s < t {
        let next = (T::nat(n + 1) * h0).min(t);
        let h = next - s;
        let half = h * T::of(0.5);
        let k1 = f(s, &x)?;
        let k2 = f(s + half, &axpy(&x, half, &k1))?;
        let k3 = f(s + half, &axpy(&x, half, &k2))?;
        let k4 = f(next, &axpy(&x, h, &k3))?;
        let sixth = h / T::of(6.0);
        for i in 0..x.len() {
            x[i] = x[i] + sixth * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        s = next;
        n += 1;
        if !omega.contains(&x, T::zero()) {
            return Err(escape(s));
        }
    }
    Ok(x)
}

/// `x ↦ b(x, Fl(t, x))`.
struct EvolveSlice<T: Scalar> {
    gamma: TimeDependentSection<T>,
    budget: NeighborhoodBudget<T>,
    chart: ChartId,
    t: T,
}

impl<T: Scalar> fmt::Debug for EvolveSlice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvolveSlice")
            .field("chart", &self.chart)
            .field("t", &self.t)
            .finish()
    }
}

impl<T: Scalar> FieldFn<T> for EvolveSlice<T> {
    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let y = flow(&self.gamma, &self.budget, self.chart, x, self.t)?;
        self.budget.local_inverse_exp(self.chart, x, &y)
    }
}

/// Slices `e(γ)(t_k)` at `t_k = k/K`.
#[derive(Clone, Debug)]
pub struct Evolution<T: Scalar> {
    pub times: Vec<T>,
    pub slices: Vec<Orbisection<T>>,
}

/// Reject curves whose velocity exceeds the C¹ cap on `Ω_1` at the slice times.
fn check_curve<T: Scalar>(gamma: &TimeDependentSection<T>, budget: &NeighborhoodBudget<T>, k: usize) -> Result<()> {
    let atlas = budget.atlas();
    for i in 0..=k {
        let t = T::nat(i) / T::nat(k);
        let slice = gamma.at(atlas, t);
        for id in atlas.chart_ids() {
            if slice.field(id).is_zero() {
                continue;
            }
            let b = budget.chart(id);
            let n = c1_norm(&slice, id, b.omega(Omega::One))?;
            if !(n < b.tau) {
                return Err(Error::Budget {
                    chart: atlas.chart(id).name.clone(),
                    norm: format!("C1 norm of γ({}) on Ω_1", t.as_f64()),
                    value: n.as_f64(),
                    bound: b.tau.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// The slice `e(γ)(t)` without curve checks. `e(γ)(0)` and `e(0)(t)` are the zero section.
pub fn evolve_at<T: Scalar>(gamma: &TimeDependentSection<T>, budget: &NeighborhoodBudget<T>, t: T) -> Orbisection<T> {
    if t == T::zero() || gamma.is_zero() {
        return Orbisection::zero(budget.atlas());
    }
    let fields = budget
        .atlas()
        .chart_ids()
        .map(|chart| {
            let f: Arc<dyn FieldFn<T>> = Arc::new(EvolveSlice {
                gamma: gamma.clone(),
                budget: budget.clone(),
                chart,
                t,
            });
            Arc::new(ChartField::Custom(f))
        })
        .collect();
    Orbisection::from_arcs(fields)
}

/// `e(γ)` on `K + 1` equally spaced times.
pub fn evolve<T: Scalar>(
    gamma: &TimeDependentSection<T>,
    budget: &NeighborhoodBudget<T>,
    slices: usize,
) -> Result<Evolution<T>> {
    let k = slices.max(1);
    check_curve(gamma, budget, k)?;
    let times: Vec<T> = (0..=k).map(|i| T::nat(i) / T::nat(k)).collect();
    let slices = times.iter().map(|&t| evolve_at(gamma, budget, t)).collect();
    Ok(Evolution { times, slices })
}

/// `Evol(γ) = E(e(γ)(1))`.
pub fn evol<T: Scalar>(gamma: &TimeDependentSection<T>, budget: &NeighborhoodBudget<T>) -> Result<LocalDiffeo<T>> {
    check_curve(gamma, budget, SLICES)?;
    exp_section(&evolve_at(gamma, budget, T::one()), budget)
}

/// A curve of local diffeomorphisms.
pub type DiffeoPath<T> = Arc<dyn Fn(T) -> Result<LocalDiffeo<T>> + Send + Sync>;

/// `t ↦ E(e(γ)(t))`, the evolution as a curve (slices are not re-validated).
pub fn evolution_path<T: Scalar>(gamma: &TimeDependentSection<T>, budget: &NeighborhoodBudget<T>) -> DiffeoPath<T> {
    let (gamma, budget) = (gamma.clone(), budget.clone());
    Arc::new(move |t: T| Ok(LocalDiffeo::unchecked(&evolve_at(&gamma, &budget, t), &budget)))
}

struct RightLog<T: Scalar> {
    plus: LocalDiffeo<T>,
    minus: LocalDiffeo<T>,
    at: LocalDiffeo<T>,
    chart: ChartId,
    h: T,
}

impl<T: Scalar> fmt::Debug for RightLog<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RightLog")
            .field("chart", &self.chart)
            .field("h", &self.h)
            .finish()
    }
}

impl<T: Scalar> FieldFn<T> for RightLog<T> {
    fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let y = self.at.inverse_lift(self.chart, x)?;
        let (p, m) = (self.plus.lift(self.chart, &y)?, self.minus.lift(self.chart, &y)?);
        let budget = self.at.budget();
        let diff = if budget.chart(self.chart).flat {
            sub(&p, &m)
        } else {
            sub(
                &budget.local_inverse_exp(self.chart, x, &p)?,
                &budget.local_inverse_exp(self.chart, x, &m)?,
            )
        };
        Ok(scale(&diff, T::one() / (self.h + self.h)))
    }
}

/// `(δʳp)(t) = p'(t)·p(t)⁻¹` by a central difference of step `h`.
pub fn right_log_derivative<T: Scalar>(path: &DiffeoPath<T>, t: T, h: T) -> Result<Orbisection<T>> {
    let (plus, minus, at) = (path(t + h)?, path(t - h)?, path(t)?);
    let fields = at
        .budget()
        .atlas()
        .chart_ids()
        .map(|chart| {
            let f: Arc<dyn FieldFn<T>> = Arc::new(RightLog {
                plus: plus.clone(),
                minus: minus.clone(),
                at: at.clone(),
                chart,
                h,
            });
            Arc::new(ChartField::Custom(f))
        })
        .collect();
    Ok(Orbisection::from_arcs(fields))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::estimate_budget;
    use crate::linalg::dist;
    use crate::metric::OrbifoldMetric;
    use crate::orbifold::{FiniteGroup, GroupElement, OrbifoldChart};
    use crate::poly::PolyField;
    use crate::region::Region;

    fn mirror() -> Atlas<f64> {
        let g = GroupElement::linear(Mat::diag(&[-1.0, 1.0]), 1e-9).unwrap();
        let group = FiniteGroup::generated_by(2, &[g], 1e-9).unwrap();
        let chart = OrbifoldChart::new("U", Region::ball(vec![0.0, 0.0], 10.0), group, 1e-9).unwrap();
        Atlas::global(chart, 1e-9).unwrap()
    }

    fn section(a: &Atlas<f64>, f: PolyField<f64>) -> Orbisection<f64> {
        Orbisection::from_fields(a, vec![ChartField::Poly(f)]).unwrap()
    }

    #[test]
    fn constant_field_translates() {
        let a = mirror();
        let b = estimate_budget(&a, &OrbifoldMetric::flat(&a)).unwrap();
        let g = TimeDependentSection::constant(section(&a, PolyField::constant(&[0.0, 0.1])));
        let x = flow(&g, &b, ChartId(0), &[0.3, 0.2], 0.5).unwrap();
        assert!(dist(&x, &[0.3, 0.25]) < 1e-14);
        let e = evolve(&g, &b, 4).unwrap();
        assert!(e.slices[0].is_zero());
        let v = e.slices[2].eval(ChartId(0), &[0.3, 0.2]).unwrap();
        assert!(dist(&v, &[0.0, 0.05]) < 1e-14);
    }

    #[test]
    fn zero_curve_and_escape() {
        let a = mirror();
        let b = estimate_budget(&a, &OrbifoldMetric::flat(&a)).unwrap();
        let z = TimeDependentSection::zero(&a);
        assert_eq!(flow(&z, &b, ChartId(0), &[0.5, 0.5], 1.0).unwrap(), vec![0.5, 0.5]);
        assert!(evolve(&z, &b, 8).unwrap().slices.iter().all(Orbisection::is_zero));
        let fast = TimeDependentSection::constant(section(&a, PolyField::constant(&[0.0, 10.0])));
        assert!(matches!(
            flow(&fast, &b, ChartId(0), &[0.0, 0.0], 1.0),
            Err(Error::FlowEscape { .. })
        ));
    }

    #[test]
    fn linear_interpolation_of_samples() {
        let a = mirror();
        let s0 = section(&a, PolyField::constant(&[0.0, 0.0]));
        let s1 = section(&a, PolyField::constant(&[0.0, 1.0]));
        let g = TimeDependentSection::samples(vec![s0, s1]).unwrap();
        assert!((g.eval(ChartId(0), 0.25, &[0.0, 0.0]).unwrap()[1] - 0.25).abs() < 1e-15);
        assert!((g.at(&a, 0.75).eval(ChartId(0), &[1.0, 0.0]).unwrap()[1] - 0.75).abs() < 1e-15);
    }
}
