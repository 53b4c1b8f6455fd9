//! The invariant suite run by `orbidiff verify`: every structural property
//! of atlases, metrics, geodesics, orbisections, the local diffeomorphism
//! chart, evolutions and equivariant maps, checked on one scenario.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffeo::{
    compose_unchecked, estimate_budget, invert_unchecked, validate_budget, LocalDiffeo, NeighborhoodBudget, Omega,
};
use crate::equivariant::{
    check_is, descend, is_weak_equivalence, kernel_witness, DiffeoLift, KernelWitness, RadialBump, WeakCheck,
};
use crate::error::{Error, Result};
use crate::geodesic::{
    arc_distance, integrate_geodesic, trace_orbifold_geodesic, trace_span, OrbifoldGeodesic, TOL_ENERGY, TOL_INT,
};
use crate::linalg::dist;
use crate::metric::{
    average_metric, build_partition_of_unity, check_compatibility, check_equivariance, ChartMap, TOL_METRIC,
};
use crate::orbifold::{ChartId, OrbitPoint, TangentOrbVector, TOL_ALG};
use crate::orbisection::{bracket, check_preserves_local_groups, linear_combination, ChartField, Orbisection};
use crate::regularity::{evolution_path, evolve_at, flow, right_log_derivative, TimeDependentSection, H_FD};
use crate::scalar::Scalar;
use crate::scenario::Scenario;

/// One verified property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub module: &'static str,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random samples per chart for the cheap checks; non-flat charts use a fifth.
    pub samples: usize,
    pub step: f64,
    pub horizon: f64,
}

impl VerifyOptions {
    pub fn from_scenario<T: Scalar>(s: &Scenario<T>) -> Self {
        let c = s.commands();
        Self {
            seed: c.seed,
            samples: 20,
            step: c.step,
            horizon: c.horizon,
        }
    }
}

enum Bound {
    AtMost(f64),
    Above(f64),
}

struct Suite<'a, T: Scalar> {
    s: &'a Scenario<T>,
    opts: &'a VerifyOptions,
    checks: Vec<Check>,
}

impl<'a, T: Scalar> Suite<'a, T> {
    fn record(&mut self, module: &'static str, name: impl Into<String>, bound: Bound, value: Result<T>) {
        let (b, passed_if): (f64, Box<dyn Fn(f64) -> bool>) = match bound {
            Bound::AtMost(b) => (b, Box::new(move |v| v <= b)),
            Bound::Above(b) => (b, Box::new(move |v| v > b)),
        };
        let check = match value {
            Ok(v) => {
                let v = v.as_f64();
                Check {
                    module,
                    name: name.into(),
                    value: v,
                    bound: b,
                    passed: passed_if(v),
                    note: String::new(),
                }
            }
            Err(e) => Check {
                module,
                name: name.into(),
                value: f64::NAN,
                bound: b,
                passed: false,
                note: e.to_string(),
            },
        };
        self.checks.push(check);
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.opts.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    fn flat(&self) -> bool {
        self.s.metric.fields().iter().all(|m| m.is_constant())
    }

    /// Sample count for expensive checks.
    fn heavy(&self) -> usize {
        if self.flat() {
            self.opts.samples
        } else {
            (self.opts.samples / 5).max(3)
        }
    }
}

/// Run the full suite on a scenario.
pub fn verify<T: Scalar>(s: &Scenario<T>, opts: &VerifyOptions) -> VerifyReport {
    let mut suite = Suite {
        s,
        opts,
        checks: Vec::new(),
    };
    orbifold_checks(&mut suite);
    metric_checks(&mut suite);
    geodesic_checks(&mut suite);
    let pair = section_pair(s);
    if let Some((sigma, tau)) = &pair {
        section_checks(&mut suite, sigma, tau);
    }
    let budget = estimate_budget(&s.atlas, &s.metric);
    suite.record(
        "diffeo",
        "budget estimation",
        Bound::AtMost(0.0),
        budget.as_ref().map(|_| T::zero()).map_err(Clone::clone),
    );
    if let Ok(budget) = budget {
        if let Some((sigma, tau)) = &pair {
            diffeo_checks(&mut suite, &budget, sigma, tau);
            regularity_checks(&mut suite, &budget, sigma);
        }
        equivariant_checks(&mut suite, &budget, pair.as_ref().map(|p| &p.0));
    }
    VerifyReport {
        scenario: s.name().to_string(),
        seed: opts.seed,
        checks: suite.checks,
    }
}

/// The sections named by the compose or bracket command, else the first two.
fn section_pair<T: Scalar>(s: &Scenario<T>) -> Option<(Orbisection<T>, Orbisection<T>)> {
    let c = s.commands();
    if let Some(p) = c.compose.as_ref().or(c.bracket.as_ref()) {
        return Some((s.section(&p.sigma).ok()?.clone(), s.section(&p.tau).ok()?.clone()));
    }
    let mut it = s.sections.values().filter(|v| !v.is_zero());
    let sigma = it.next()?.clone();
    let tau = it.next().cloned().unwrap_or_else(|| sigma.scaled(T::of(-0.5)));
    Some((sigma, tau))
}

fn count(n: usize) -> Result<f64> {
    Ok(n as f64)
}

fn tof<T: Scalar>(r: Result<f64>) -> Result<T> {
    r.map(T::of)
}

// ---- orbifold core ---------------------------------------------------------

fn orbifold_checks<T: Scalar>(su: &mut Suite<T>) {
    let atlas = &su.s.atlas;

    let mut closure = T::zero();
    for c in atlas.charts() {
        let g = &c.group;
        for i in 0..g.order() {
            for j in 0..g.order() {
                let prod = g.element(i).compose(g.element(j));
                closure = closure.max(prod.distance(g.element(g.product(i, j))));
            }
        }
    }
    su.record(
        "orbifold_core",
        "group closure (Cayley table)",
        Bound::AtMost(TOL_ALG),
        Ok(closure),
    );

    let mut rng = su.rng(1);
    let singular = (|| {
        let mut hits = 0;
        for id in atlas.chart_ids() {
            let region = &atlas.chart(id).region;
            for _ in 0..1000 {
                if atlas.is_singular(id, &region.sample(&mut rng, T::zero()))? {
                    hits += 1;
                }
            }
        }
        count(hits)
    })();
    su.record(
        "orbifold_core",
        "Newman density: singular hits in 1000 random points per chart",
        Bound::AtMost(0.0),
        tof(singular),
    );

    // orbit families: a point, its group translates and its images in other charts
    let mut rng = su.rng(2);
    let n = su.opts.samples;
    let mut families = Vec::new();
    for id in atlas.chart_ids() {
        let c = atlas.chart(id);
        for _ in 0..n {
            let x = c.region.sample(&mut rng, c.region.scale() * T::of(0.01));
            let mut fam = vec![(
                OrbitPoint {
                    chart: id,
                    rep: x.clone(),
                },
                Vec::new(),
            )];
            for g in c.group.elements().iter().skip(1) {
                fam.push((
                    OrbitPoint {
                        chart: id,
                        rep: g.apply(&x),
                    },
                    Vec::new(),
                ));
            }
            for (transfer, y) in atlas.change_routes(id, &x, T::zero()) {
                let target = transfer.target(atlas, id);
                let lin = transfer.map(atlas, id).matrix;
                fam.push((OrbitPoint { chart: target, rep: y }, vec![lin]));
            }
            families.push(fam);
        }
    }
    let mut violations = 0usize;
    for (i, fam) in families.iter().enumerate() {
        for (p, _) in fam {
            if !atlas.orbit_equal(p, p) {
                violations += 1;
            }
            for (q, _) in fam {
                if atlas.orbit_equal(p, q) != atlas.orbit_equal(q, p) || !atlas.orbit_equal(p, q) {
                    violations += 1;
                }
            }
        }
        // transitivity across the family through the first member
        if let Some(other) = families.get(i + 1) {
            let (p, q, r) = (&fam[0].0, &fam[fam.len() - 1].0, &other[0].0);
            if atlas.orbit_equal(p, q) && atlas.orbit_equal(q, r) && !atlas.orbit_equal(p, r) {
                violations += 1;
            }
        }
    }
    su.record(
        "orbifold_core",
        "orbit_equal is an equivalence relation on sampled orbits",
        Bound::AtMost(0.0),
        tof(count(violations)),
    );

    let mut rng = su.rng(3);
    let mut tangent_violations = 0usize;
    let mut tangent_pairs = 0usize;
    for fam in &families {
        let base = &fam[0].0;
        let v = atlas.chart(base.chart).region.sample(&mut rng, T::zero());
        let v: Vec<T> = crate::linalg::sub(&v, atlas.chart(base.chart).region.center());
        let xi = TangentOrbVector {
            chart: base.chart,
            base: base.rep.clone(),
            vec: v.clone(),
        };
        let c = atlas.chart(base.chart);
        let mut candidates: Vec<TangentOrbVector<T>> = c
            .group
            .elements()
            .iter()
            .map(|g| TangentOrbVector {
                chart: base.chart,
                base: g.apply(&base.rep),
                vec: g.apply_tangent(&v),
            })
            .collect();
        for (p, lin) in fam.iter().skip(1) {
            if let Some(m) = lin.first() {
                candidates.push(TangentOrbVector {
                    chart: p.chart,
                    base: p.rep.clone(),
                    vec: m.mul_vec(&v),
                });
            }
        }
        for zeta in &candidates {
            if atlas.tangent_equal(&xi, zeta) {
                tangent_pairs += 1;
                if !atlas.orbit_equal(&xi.point(), &zeta.point()) {
                    tangent_violations += 1;
                }
            } else {
                tangent_violations += 1;
            }
        }
    }
    su.record(
        "orbifold_core",
        format!("tangent_equal implies orbit_equal ({tangent_pairs} pairs)"),
        Bound::AtMost(0.0),
        tof(count(tangent_violations)),
    );

    let mut canon = 0usize;
    for fam in &families {
        for (p, _) in fam {
            let c = atlas.canonical_point(p);
            if !atlas.orbit_equal(p, &c) || atlas.canonical_representative(&c) != c.rep {
                canon += 1;
            }
        }
    }
    su.record(
        "orbifold_core",
        "canonical representative lies in the orbit and is idempotent",
        Bound::AtMost(0.0),
        tof(count(canon)),
    );
}

// ---- metric -----------------------------------------------------------------

fn metric_checks<T: Scalar>(su: &mut Suite<T>) {
    let atlas = &su.s.atlas;
    let metric = &su.s.metric;
    let mut proj = Ok(T::zero());
    let mut equi = Ok(T::zero());
    let mut chris = Ok(T::zero());
    for id in atlas.chart_ids() {
        let chart = atlas.chart(id);
        let field = metric.field(id);
        let grid = chart.region.grid(crate::metric::GRID_PER_AXIS, crate::metric::GRID_CAP);
        let p = (|| {
            let avg = average_metric(chart, field)?;
            let mut worst = T::zero();
            for x in &grid {
                let g = field.tensor(x)?;
                let scale = g.max_abs().max(T::one());
                worst = worst.max(avg.tensor(x)?.sub(&g).max_abs() / scale);
            }
            Ok(worst)
        })();
        proj = merge(proj, p);
        equi = merge(equi, check_equivariance(field, chart));
        let c = (|| {
            let fd = field.clone().with_finite_differences(T::of(crate::metric::H_FD));
            let mut worst = T::zero();
            for x in grid.iter().step_by(3) {
                let (a, b) = (field.christoffel(x)?, fd.christoffel(x)?);
                for (ak, bk) in a.iter().zip(&b) {
                    worst = worst.max(ak.sub(bk).max_abs());
                }
            }
            Ok(worst)
        })();
        chris = merge(chris, c);
    }
    su.record(
        "metric",
        "group averaging is a projection (relative grid residual)",
        Bound::AtMost(1e-12),
        proj,
    );
    su.record("metric", "metric equivariance residual", Bound::AtMost(1e-9), equi);
    su.record(
        "metric",
        "Christoffel symbols vs finite-difference oracle",
        Bound::AtMost(1e-5),
        chris,
    );
    su.record(
        "metric",
        "changes of charts are isometries",
        Bound::AtMost(TOL_METRIC),
        check_compatibility(atlas, metric),
    );

    let pou = build_partition_of_unity(atlas);
    let (sum, eq) = match &pou {
        Ok(pou) => {
            let sum = (|| {
                let mut worst = T::zero();
                for id in atlas.chart_ids() {
                    let region = &atlas.chart(id).region;
                    let inner = region.shrunk(region.scale() * T::of(0.01));
                    for x in inner.grid(crate::metric::GRID_PER_AXIS, crate::metric::GRID_CAP) {
                        worst = worst.max((pou.sum(id, &x)? - T::one()).abs());
                    }
                }
                Ok(worst)
            })();
            let eq = atlas
                .chart_ids()
                .map(|a| pou.equivariance_residual(a))
                .try_fold(T::zero(), |m, r| r.map(|r| m.max(r)));
            (sum, eq)
        }
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    su.record("metric", "partition of unity sums to one", Bound::AtMost(1e-9), sum);
    su.record(
        "metric",
        "partition of unity is group invariant",
        Bound::AtMost(1e-9),
        eq,
    );
}

fn merge<T: Scalar>(acc: Result<T>, next: Result<T>) -> Result<T> {
    Ok(acc?.max(next?))
}

// ---- geodesics -------------------------------------------------------------

fn geodesic_checks<T: Scalar>(su: &mut Suite<T>) {
    let s = su.s;
    let Some(cmd) = s.commands().trace.first() else {
        return;
    };
    let (atlas, metric) = (&s.atlas, &s.metric);
    let step = T::of(su.opts.step);
    let horizon = T::of(su.opts.horizon);
    let Ok(chart) = s.chart(&cmd.chart) else {
        return;
    };
    let xi = TangentOrbVector {
        chart,
        base: cmd.base.iter().map(|&v| T::of(v)).collect(),
        vec: cmd.vector.iter().map(|&v| T::of(v)).collect(),
    };
    let trace = trace_orbifold_geodesic(atlas, metric, &xi, horizon, step);
    su.record(
        "geodesic",
        "trace of the configured initial vector",
        Bound::AtMost(0.0),
        trace.as_ref().map(|_| T::zero()).map_err(Clone::clone),
    );
    let Ok(trace) = trace else {
        return;
    };
    let (_, t_end) = trace.t_span();

    // uniqueness: group translates and change images of ξ trace the same quotient arc
    let uniq = (|| {
        let c = atlas.chart(chart);
        let mut zetas: Vec<TangentOrbVector<T>> = c
            .group
            .elements()
            .iter()
            .skip(1)
            .map(|g| TangentOrbVector {
                chart,
                base: g.apply(&xi.base),
                vec: g.apply_tangent(&xi.vec),
            })
            .collect();
        for (transfer, y) in atlas.change_routes(chart, &xi.base, T::zero()) {
            let m = transfer.map(atlas, chart);
            zetas.push(TangentOrbVector {
                chart: transfer.target(atlas, chart),
                base: y,
                vec: m.matrix.mul_vec(&xi.vec),
            });
        }
        let mut worst = T::zero();
        for z in zetas {
            let other = trace_orbifold_geodesic(atlas, metric, &z, t_end, step)?;
            worst = worst.max(
                arc_distance(atlas, &trace, &other)
                    .ok_or_else(|| Error::Consistency("arcs are not comparable".into()))?,
            );
        }
        Ok(worst)
    })();
    su.record(
        "geodesic",
        "uniqueness: tangent-equal initial vectors give equal arcs",
        Bound::AtMost(TOL_INT),
        uniq,
    );

    let energy = (|| {
        let mut worst = T::zero();
        for seg in &trace.segments {
            let (a, b) = seg.t_span();
            let span = (b - a).max(T::one());
            worst = worst.max(seg.energy_drift(metric.field(seg.chart))? / span);
        }
        Ok(worst)
    })();
    su.record(
        "geodesic",
        "energy drift per unit time",
        Bound::AtMost(TOL_ENERGY),
        energy,
    );

    let iso = (|| {
        let field = metric.field(chart);
        let span = (T::zero(), T::of(0.5).min(t_end));
        let base = integrate_geodesic(field, &xi.base, &xi.vec, span, step)?;
        let mut worst = T::zero();
        for g in atlas.chart(chart).group.elements().iter().skip(1) {
            let moved = integrate_geodesic(field, &g.apply(&xi.base), &g.apply_tangent(&xi.vec), span, step)?;
            for (a, b) in base.samples.iter().zip(&moved.samples) {
                worst = worst.max(dist(&g.apply(&a.x), &b.x));
            }
        }
        Ok(worst)
    })();
    su.record(
        "geodesic",
        "isometry invariance of chart geodesics",
        Bound::AtMost(TOL_INT),
        iso,
    );

    if metric.fields().iter().any(|m| m.is_constant()) {
        let mut worst = T::zero();
        for seg in trace.segments.iter().filter(|s| metric.field(s.chart).is_constant()) {
            let f = seg.first();
            for smp in &seg.samples {
                let line: Vec<T> = f.x.iter().zip(&f.v).map(|(&x, &v)| x + (smp.t - f.t) * v).collect();
                worst = worst.max(dist(&line, &smp.x));
            }
        }
        su.record(
            "geodesic",
            "flat segments are straight lines",
            Bound::AtMost(1e-12),
            Ok(worst),
        );
    }

    let restr = (|| {
        let (a, b) = (T::of(0.25) * t_end, T::of(0.75) * t_end);
        let a = (a / step).round() * step;
        let piece = trace.restrict(a, b)?;
        let fresh: OrbifoldGeodesic<T> = trace_span(atlas, metric, &trace.initial_vector(a)?, a, b, step)?;
        arc_distance(atlas, &piece, &fresh).ok_or_else(|| Error::Consistency("arcs are not comparable".into()))
    })();
    su.record(
        "geodesic",
        "restriction re-traced from its initial vector",
        Bound::AtMost(TOL_INT),
        restr,
    );
}

// ---- orbisections -----------------------------------------------------------

fn on_grids<T: Scalar>(
    atlas: &crate::orbifold::Atlas<T>,
    per_axis: usize,
    mut f: impl FnMut(ChartId, &[T]) -> Result<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for id in atlas.chart_ids() {
        for x in atlas.chart(id).region.grid(per_axis, 4096) {
            worst = worst.max(f(id, &x)?);
        }
    }
    Ok(worst)
}

fn section_checks<T: Scalar>(su: &mut Suite<T>, sigma: &Orbisection<T>, tau: &Orbisection<T>) {
    let atlas = &su.s.atlas;
    let comb = linear_combination(sigma, tau, T::of(0.7));
    let br = bracket(sigma, tau);
    let invariants =
        |x: &Orbisection<T>| -> Result<T> { Ok(x.equivariance_residual(atlas)?.max(x.compatibility_residual(atlas)?)) };
    su.record(
        "orbisection",
        "linear combination is an orbisection",
        Bound::AtMost(1e-9),
        invariants(&comb),
    );
    su.record(
        "orbisection",
        "bracket is an orbisection",
        Bound::AtMost(1e-9),
        invariants(&br),
    );

    let rho = linear_combination(tau, sigma, T::of(0.5));
    let a = T::of(1.3);
    let lhs = bracket(&linear_combination(tau, sigma, a), &rho);
    let (b1, b2) = (bracket(sigma, &rho), bracket(tau, &rho));
    let bil = on_grids(atlas, 9, |id, x| {
        let l = lhs.eval(id, x)?;
        let r: Vec<T> = b1
            .eval(id, x)?
            .iter()
            .zip(b2.eval(id, x)?)
            .map(|(&p, q)| a * p + q)
            .collect();
        Ok(dist(&l, &r))
    });
    su.record("orbisection", "bracket bilinearity", Bound::AtMost(1e-9), bil);
    let swapped = bracket(tau, sigma);
    let anti = on_grids(atlas, 9, |id, x| {
        let (p, q) = (br.eval(id, x)?, swapped.eval(id, x)?);
        Ok(p.iter().zip(&q).map(|(&u, &v)| (u + v).abs()).fold(T::zero(), T::max))
    });
    su.record("orbisection", "bracket antisymmetry (exact)", Bound::AtMost(0.0), anti);

    let uniq = (|| {
        let first = ChartId(0);
        let transported = Orbisection::propagate(atlas, first, (*sigma.field_arc(first)).clone())?;
        on_grids(atlas, 9, |id, x| match transported.eval(id, x) {
            Ok(v) => Ok(dist(&v, &sigma.eval(id, x)?)),
            Err(Error::Domain { .. }) => Ok(T::zero()),
            Err(e) => Err(e),
        })
    })();
    su.record(
        "orbisection",
        "canonical lifts are determined by one chart",
        Bound::AtMost(1e-9),
        uniq,
    );

    let mut local = Ok(T::zero());
    for x in [sigma, tau, &comb, &br] {
        local = merge(local, check_preserves_local_groups(atlas, x));
    }
    su.record(
        "orbisection",
        "orbisections vanish off the fixed subspaces' tangent directions",
        Bound::AtMost(1e-9),
        local,
    );
}

// ---- local diffeomorphism chart ---------------------------------------------

fn omega_samples<T: Scalar>(
    su: &Suite<T>,
    budget: &NeighborhoodBudget<T>,
    salt: u64,
    n: usize,
) -> Vec<(ChartId, Vec<T>)> {
    let mut rng = su.rng(salt);
    su.s.atlas
        .chart_ids()
        .flat_map(|id| {
            budget
                .sample(id, Omega::One, n, &mut rng)
                .into_iter()
                .map(move |x| (id, x))
        })
        .collect()
}

fn quotient_gap<T: Scalar>(atlas: &crate::orbifold::Atlas<T>, chart: ChartId, a: Vec<T>, b: Vec<T>) -> Result<T> {
    atlas
        .quotient_distance(&OrbitPoint { chart, rep: a }, &OrbitPoint { chart, rep: b })
        .ok_or_else(|| Error::Consistency("points are not comparable".into()))
}

fn diffeo_checks<T: Scalar>(
    su: &mut Suite<T>,
    budget: &NeighborhoodBudget<T>,
    sigma: &Orbisection<T>,
    tau: &Orbisection<T>,
) {
    let atlas = su.s.atlas.clone();
    let flat = su.flat();
    let law_tol = if flat { 1e-8 } else { 1e-6 };
    let valid = (|| {
        Ok(T::nat(
            usize::from(!validate_budget(sigma, budget)?.pass()) + usize::from(!validate_budget(tau, budget)?.pass()),
        ))
    })();
    su.record(
        "diffeo",
        "configured sections lie in the budget",
        Bound::AtMost(0.0),
        valid,
    );

    let n = su.heavy();
    let pts = omega_samples(su, budget, 10, n);
    let (es, et) = (
        LocalDiffeo::unchecked(sigma, budget),
        LocalDiffeo::unchecked(tau, budget),
    );
    let comp = compose_unchecked(sigma, tau, budget);
    let ec = LocalDiffeo::unchecked(&comp, budget);
    let law = pts.iter().try_fold(T::zero(), |m, (id, x)| {
        let lhs = es.lift(*id, &et.lift(*id, x)?)?;
        Ok::<T, Error>(m.max(quotient_gap(&atlas, *id, lhs, ec.lift(*id, x)?)?))
    });
    su.record("diffeo", "group law E(σ)∘E(τ) = E(σ⋄τ)", Bound::AtMost(law_tol), law);

    let inv = invert_unchecked(sigma, budget);
    let ei = LocalDiffeo::unchecked(&inv, budget);
    let inversion = pts.iter().try_fold(T::zero(), |m, (id, x)| {
        let a = ei.lift(*id, &es.lift(*id, x)?)?;
        let b = es.lift(*id, &ei.lift(*id, x)?)?;
        Ok::<T, Error>(
            m.max(quotient_gap(&atlas, *id, a, x.clone())?)
                .max(quotient_gap(&atlas, *id, b, x.clone())?),
        )
    });
    su.record(
        "diffeo",
        "inversion law E(σ*)∘E(σ) = E(σ)∘E(σ*) = id",
        Bound::AtMost(law_tol),
        inversion,
    );

    let witness = omega_samples(su, budget, 11, if flat { 1000 } else { 50 })
        .iter()
        .try_fold(T::zero(), |m, (id, x)| {
            Ok::<T, Error>(m.max(quotient_gap(&atlas, *id, es.lift(*id, x)?, et.lift(*id, x)?)?))
        });
    su.record(
        "diffeo",
        "injectivity of E: σ ≠ τ are told apart on samples",
        Bound::Above(1e-9),
        witness,
    );

    let rho = sigma.scaled(T::of(0.5));
    let left = compose_unchecked(&comp, &rho, budget);
    let right = compose_unchecked(sigma, &compose_unchecked(tau, &rho, budget), budget);
    let (el, er) = (
        LocalDiffeo::unchecked(&left, budget),
        LocalDiffeo::unchecked(&right, budget),
    );
    let assoc = pts.iter().try_fold(T::zero(), |m, (id, x)| {
        Ok::<T, Error>(m.max(quotient_gap(&atlas, *id, el.lift(*id, x)?, er.lift(*id, x)?)?))
    });
    su.record(
        "diffeo",
        "associativity of ⋄ on underlying maps",
        Bound::AtMost(1e-6),
        assoc,
    );

    let outputs = (|| {
        let mut worst = T::zero();
        for out in [&comp, &inv] {
            for id in atlas.chart_ids() {
                let chart = atlas.chart(id);
                let grid = budget.chart(id).omega(Omega::One).grid(if flat { 5 } else { 3 }, 64);
                worst = worst.max(out.chart_equivariance_residual(id, chart, &grid)?);
            }
            for ch in atlas.changes() {
                for x in ch.region.grid(if flat { 5 } else { 3 }, 64) {
                    let r = dist(
                        &out.eval(ch.target, &ch.map.apply(&x))?,
                        &ch.map.apply_tangent(&out.eval(ch.source, &x)?),
                    );
                    worst = worst.max(r);
                }
            }
        }
        Ok(worst)
    })();
    su.record("diffeo", "⋄ and * produce orbisections", Bound::AtMost(1e-6), outputs);

    // bracket as the antisymmetrized mixed derivative of ⋄ at the origin
    let h = T::of(1e-3);
    let br = bracket(sigma, tau);
    let fd = pts.iter().take(n.min(5)).try_fold(T::zero(), |m, (id, x)| {
        let f = |t: T, s: T| -> Result<Vec<T>> {
            let a = compose_unchecked(&sigma.scaled(t), &tau.scaled(s), budget).eval(*id, x)?;
            let b = compose_unchecked(&tau.scaled(t), &sigma.scaled(s), budget).eval(*id, x)?;
            Ok(crate::linalg::sub(&a, &b))
        };
        let (pp, pm, mp, mm) = (f(h, h)?, f(h, -h)?, f(-h, h)?, f(-h, -h)?);
        let four_h2 = T::of(4.0) * h * h;
        let est: Vec<T> = (0..x.len())
            .map(|i| (pp[i] - pm[i] - mp[i] + mm[i]) / four_h2)
            .collect();
        Ok::<T, Error>(m.max(dist(&est, &br.eval(*id, x)?)))
    });
    su.record(
        "orbisection",
        "bracket equals the mixed derivative of ⋄ (h = 1e-3)",
        Bound::AtMost(1e-4),
        fd,
    );
}

// ---- regularity -------------------------------------------------------------

fn regularity_checks<T: Scalar>(su: &mut Suite<T>, budget: &NeighborhoodBudget<T>, sigma: &Orbisection<T>) {
    let atlas = su.s.atlas.clone();
    let curve =
        su.s.commands()
            .evolve
            .as_ref()
            .and_then(|e| su.s.curves.get(&e.curve).cloned())
            .unwrap_or_else(|| TimeDependentSection::constant(sigma.clone()));
    let n = if su.flat() { 5 } else { 2 };
    let pts = omega_samples(su, budget, 20, n);

    let zero_slice = evolve_at(&curve, budget, T::zero()).is_zero();
    su.record(
        "regularity",
        "e(γ)(0) is the zero section",
        Bound::AtMost(0.0),
        Ok(T::nat(usize::from(!zero_slice))),
    );

    let path = evolution_path(&curve, budget);
    let times: Vec<T> = if su.flat() {
        vec![T::of(0.25), T::of(0.5), T::of(0.75)]
    } else {
        vec![T::of(0.5)]
    };
    let rlog = times.iter().try_fold(T::zero(), |m, &t| {
        let d = right_log_derivative(&path, t, T::of(H_FD))?;
        pts.iter().try_fold(m, |m, (id, x)| {
            Ok::<T, Error>(m.max(dist(&d.eval(*id, x)?, &curve.eval(*id, t, x)?)))
        })
    });
    su.record(
        "regularity",
        "right logarithmic derivative of Evol(γ) recovers γ",
        Bound::AtMost(1e-4),
        rlog,
    );

    let slice = evolve_at(&curve, budget, T::one());
    let slice_eq = (|| {
        let mut worst = T::zero();
        for id in atlas.chart_ids() {
            let grid = budget.chart(id).omega(Omega::One).grid(3, 27);
            worst = worst.max(slice.chart_equivariance_residual(id, atlas.chart(id), &grid)?);
        }
        Ok(worst)
    })();
    su.record(
        "regularity",
        "evolution slices are equivariant",
        Bound::AtMost(1e-6),
        slice_eq,
    );

    let auto = TimeDependentSection::constant(sigma.clone());
    let semigroup = pts.iter().try_fold(T::zero(), |m, (id, x)| {
        let (s, t) = (T::of(0.25), T::of(0.5));
        let a = flow(&auto, budget, *id, &flow(&auto, budget, *id, x, s)?, t)?;
        Ok::<T, Error>(m.max(dist(&a, &flow(&auto, budget, *id, x, s + t)?)))
    });
    su.record(
        "regularity",
        "flow semigroup for autonomous fields",
        Bound::AtMost(1e-8),
        semigroup,
    );

    let commute = pts.iter().try_fold(T::zero(), |m, (id, x)| {
        let fx = flow(&curve, budget, *id, x, T::one())?;
        atlas.chart(*id).group.elements().iter().try_fold(m, |m, g| {
            Ok::<T, Error>(m.max(dist(&g.apply(&fx), &flow(&curve, budget, *id, &g.apply(x), T::one())?)))
        })
    });
    su.record(
        "regularity",
        "flows commute with the group action",
        Bound::AtMost(1e-8),
        commute,
    );
}

// ---- equivariant diffeomorphisms ------------------------------------------------

fn equivariant_checks<T: Scalar>(su: &mut Suite<T>, budget: &NeighborhoodBudget<T>, sigma: Option<&Orbisection<T>>) {
    let atlas = su.s.atlas.clone();
    let tol = T::of(TOL_ALG);
    for id in atlas.chart_ids() {
        let chart = atlas.chart(id);
        if chart.group.is_trivial() || chart.group.elements().iter().any(|g| !g.is_linear()) {
            continue;
        }
        let name = &chart.name;
        let pts = budget.chart(id).omega(Omega::One).grid(5, 125);

        let auto = (|| {
            let mut bad = 0usize;
            for (i, g) in chart.group.elements().iter().enumerate() {
                let h: Arc<dyn ChartMap<T>> = Arc::new(g.map().clone());
                match is_weak_equivalence(h, &chart.group, &pts, tol)? {
                    WeakCheck::Accepted(w) => {
                        let d = descend(&w, &atlas, id, &pts, tol)?;
                        if kernel_witness(&d, &pts, tol)? != KernelWitness::Element(i) {
                            bad += 1;
                        }
                    }
                    WeakCheck::Rejected { .. } => bad += 1,
                }
            }
            Ok(T::nat(bad))
        })();
        su.record(
            "equivariant_diffeo",
            format!("chart `{name}`: group elements are weak equivalences recovered by the kernel"),
            Bound::AtMost(0.0),
            auto,
        );

        if let Some(sigma) = sigma {
            let consistency = (|| {
                let diffeo = LocalDiffeo::unchecked(sigma, budget);
                let h: Arc<dyn ChartMap<T>> = Arc::new(DiffeoLift {
                    diffeo: diffeo.clone(),
                    chart: id,
                });
                let w = is_weak_equivalence(h, &chart.group, &pts, T::of(1e-8))?
                    .accepted()
                    .ok_or_else(|| Error::Validation("E(σ) lift is not a weak equivalence".into()))?;
                let d = descend(&w, &atlas, id, &pts, T::of(1e-8))?;
                let mut worst = T::zero();
                for x in &pts {
                    let p = OrbitPoint {
                        chart: id,
                        rep: x.clone(),
                    };
                    let q = atlas.canonical_point(&OrbitPoint {
                        chart: id,
                        rep: diffeo.lift(id, x)?,
                    });
                    worst = worst.max(atlas.quotient_distance(&d.apply(&p)?, &q).unwrap_or(T::infinity()));
                }
                Ok(worst)
            })();
            su.record(
                "equivariant_diffeo",
                format!("chart `{name}`: descent of E(σ)'s lift equals E(σ)"),
                Bound::AtMost(1e-8),
                consistency,
            );
        }

        if check_is(&chart.group, tol).unwrap_or(false)
            && chart
                .group
                .elements()
                .iter()
                .all(|g| g.translation().iter().all(|t| t.abs() <= tol))
        {
            let rigid = (|| {
                let r = budget.chart(id).omega(Omega::One).scale() * T::of(0.5);
                let bump = RadialBump {
                    center: vec![T::zero(); chart.dim()],
                    radius: r,
                    amplitude: T::of(0.05),
                };
                let fields = atlas
                    .chart_ids()
                    .map(|c| {
                        if c == id {
                            ChartField::Custom(Arc::new(bump.clone()))
                        } else {
                            ChartField::Zero(atlas.dim())
                        }
                    })
                    .collect();
                let section = Orbisection::from_fields(&atlas, fields)?;
                let h: Arc<dyn ChartMap<T>> = Arc::new(DiffeoLift {
                    diffeo: LocalDiffeo::unchecked(&section, budget),
                    chart: id,
                });
                let outside: Vec<Vec<T>> = budget
                    .chart(id)
                    .omega(Omega::Two)
                    .grid(7, 343)
                    .into_iter()
                    .filter(|x| crate::linalg::norm(x) > r)
                    .collect();
                Ok(match is_weak_equivalence(h, &chart.group, &outside, tol)? {
                    WeakCheck::Accepted(w) if w.alpha.iter().enumerate().all(|(i, &a)| a == i) => T::zero(),
                    _ => T::one(),
                })
            })();
            su.record(
                "equivariant_diffeo",
                format!("chart `{name}`: maps equal to id off a ball have α = id"),
                Bound::AtMost(0.0),
                rigid,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_passes() {
        let s: Scenario<f64> = crate::fixtures::load("mirror").unwrap();
        let r = verify(&s, &VerifyOptions::from_scenario(&s));
        let bad: Vec<_> = r.failures().collect();
        assert!(bad.is_empty(), "{bad:#?}");
    }
}
