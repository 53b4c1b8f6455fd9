//! Geodesics: fixed-step RK4 inside a chart, continuation across declared
//! changes of charts, the orbifold exponential map and the geodesic flow.
//!
//! Sample times lie on the grid `t_start + n·step`; a segment entered at a
//! transition time first takes a partial step back onto that grid, so a
//! trace restarted from any grid time reproduces the original samples.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::axpy;
#[cfg(test)]
use crate::linalg::dist;
use crate::metric::{MetricField, OrbifoldMetric};
use crate::orbifold::{Atlas, ChartId, OrbitPoint, TangentOrbVector, Transfer};
use crate::region::Region;
use crate::scalar::Scalar;

/// Default integration step.
pub const STEP: f64 = 1e-3;
/// Time resolution of boundary-event bisection.
pub const EVENT_TOL: f64 = 1e-10;
/// Chart-transition margin, relative to the domain scale.
pub const TRANSITION_MARGIN: f64 = 0.05;
/// Agreement bound for arcs computed along different routes.
pub const TOL_INT: f64 = 1e-8;
/// Allowed drift of `‖v‖²_g` per unit time at the default step.
pub const TOL_ENERGY: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSample<T> {
    pub t: T,
    pub x: Vec<T>,
    pub v: Vec<T>,
}

/// Piece of a geodesic inside one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment<T> {
    pub chart: ChartId,
    pub samples: Vec<GeodesicSample<T>>,
}

impl<T: Scalar> GeodesicSegment<T> {
    pub fn t_span(&self) -> (T, T) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    pub fn first(&self) -> &GeodesicSample<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &GeodesicSample<T> {
        &self.samples[self.samples.len() - 1]
    }

    /// State at `t` (cubic Hermite between samples).
    pub fn state_at(&self, t: T) -> Option<(Vec<T>, Vec<T>)> {
        let (a, b) = self.t_span();
        let slack = time_slack(t);
        if t < a - slack || t > b + slack {
            return None;
        }
        let k = self.samples.partition_point(|s| s.t < t - slack);
        let k = k.min(self.samples.len() - 1);
        let s = &self.samples[k];
        if (s.t - t).abs() <= slack || k == 0 {
            return Some((s.x.clone(), s.v.clone()));
        }
        Some(hermite(&self.samples[k - 1], s, t))
    }

    /// Largest `|‖v(t)‖²_g − ‖v(t₀)‖²_g|` along the samples.
    pub fn energy_drift(&self, metric: &MetricField<T>) -> Result<T> {
        let e0 = metric.norm_sq(&self.first().x, &self.first().v)?;
        let mut worst = T::zero();
        for s in &self.samples {
            worst = worst.max((metric.norm_sq(&s.x, &s.v)? - e0).abs());
        }
        Ok(worst)
    }

    fn restrict(&self, t0: T, t1: T) -> Option<Self> {
        let (a, b) = self.t_span();
        let (lo, hi) = (t0.max(a), t1.min(b));
        if lo > hi + time_slack(hi) {
            return None;
        }
        let slack = time_slack(hi);
        let (x0, v0) = self.state_at(lo)?;
        let (x1, v1) = self.state_at(hi)?;
        let mut samples = vec![GeodesicSample { t: lo, x: x0, v: v0 }];
        samples.extend(
            self.samples
                .iter()
                .filter(|s| s.t > lo + slack && s.t < hi - slack)
                .cloned(),
        );
        if hi > lo + slack {
            samples.push(GeodesicSample { t: hi, x: x1, v: v1 });
        }
        Some(Self {
            chart: self.chart,
            samples,
        })
    }
}

fn time_slack<T: Scalar>(t: T) -> T {
    T::of(1e-12) * t.abs().max(T::one())
}

fn hermite<T: Scalar>(a: &GeodesicSample<T>, b: &GeodesicSample<T>, t: T) -> (Vec<T>, Vec<T>) {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (one, two, three) = (T::one(), T::of(2.0), T::of(3.0));
    let s2 = s * s;
    let s3 = s2 * s;
    let (h00, h10, h01, h11) = (
        two * s3 - three * s2 + one,
        s3 - two * s2 + s,
        -two * s3 + three * s2,
        s3 - s2,
    );
    let six = T::of(6.0);
    let (d00, d10, d01, d11) = (
        (six * s2 - six * s) / h,
        three * s2 - T::of(4.0) * s + one,
        (-six * s2 + six * s) / h,
        three * s2 - two * s,
    );
    let x = (0..a.x.len())
        .map(|i| h00 * a.x[i] + h10 * h * a.v[i] + h01 * b.x[i] + h11 * h * b.v[i])
        .collect();
    let v = (0..a.x.len())
        .map(|i| d00 * a.x[i] + d10 * a.v[i] + d01 * b.x[i] + d11 * b.v[i])
        .collect();
    (x, v)
}

/// Why a trace stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// No declared change continues the arc past the last chart boundary.
    LeftAtlas,
    TimeHorizon,
}

/// Chart switch between consecutive segments.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord<T> {
    pub time: T,
    pub from: ChartId,
    pub to: ChartId,
    pub transfer: Transfer,
}

/// Chart-segmented geodesic; consecutive segments share their transition time.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbifoldGeodesic<T> {
    pub segments: Vec<GeodesicSegment<T>>,
    pub transitions: Vec<TransitionRecord<T>>,
    pub stop: StopReason,
}

impl<T: Scalar> OrbifoldGeodesic<T> {
    pub fn t_span(&self) -> (T, T) {
        (
            self.segments[0].t_span().0,
            self.segments[self.segments.len() - 1].t_span().1,
        )
    }

    /// Whether the trace was cut by leaving the atlas rather than by the horizon.
    pub fn is_maximal(&self) -> bool {
        self.stop == StopReason::LeftAtlas
    }

    /// (chart, x, v) at `t`, from the earliest segment containing `t`.
    pub fn state_at(&self, t: T) -> Option<(ChartId, Vec<T>, Vec<T>)> {
        self.segments
            .iter()
            .find_map(|s| s.state_at(t).map(|(x, v)| (s.chart, x, v)))
    }

    /// Tangent vector of the arc at `t`.
    pub fn initial_vector(&self, t: T) -> Result<TangentOrbVector<T>> {
        let (chart, base, vec) = self.state_at(t).ok_or_else(|| {
            let (a, b) = self.t_span();
            Error::InvalidArgument(format!(
                "t = {} outside traced span [{}, {}]",
                t.as_f64(),
                a.as_f64(),
                b.as_f64()
            ))
        })?;
        Ok(TangentOrbVector { chart, base, vec })
    }

    pub fn point_at(&self, t: T) -> Option<OrbitPoint<T>> {
        self.state_at(t).map(|(chart, rep, _)| OrbitPoint { chart, rep })
    }

    /// Canonical representative of the arc point at `t`.
    pub fn quotient_point(&self, atlas: &Atlas<T>, t: T) -> Option<OrbitPoint<T>> {
        self.point_at(t).map(|p| atlas.canonical_point(&p))
    }

    pub fn end(&self) -> &GeodesicSample<T> {
        self.segments[self.segments.len() - 1].last()
    }

    pub fn end_chart(&self) -> ChartId {
        self.segments[self.segments.len() - 1].chart
    }

    /// Every sample with its chart, in time order (transition times appear twice).
    pub fn samples(&self) -> impl Iterator<Item = (ChartId, &GeodesicSample<T>)> {
        self.segments
            .iter()
            .flat_map(|s| s.samples.iter().map(move |x| (s.chart, x)))
    }

    /// The arc on `[t0, t1]`.
    pub fn restrict(&self, t0: T, t1: T) -> Result<Self> {
        let segments: Vec<_> = self.segments.iter().filter_map(|s| s.restrict(t0, t1)).collect();
        if segments.is_empty() {
            return Err(Error::InvalidArgument("restriction span misses the trace".into()));
        }
        let (a, b) = (segments[0].t_span().0, segments[segments.len() - 1].t_span().1);
        let transitions = self
            .transitions
            .iter()
            .filter(|r| r.time >= a && r.time <= b && segments.iter().any(|s| s.chart == r.to))
            .cloned()
            .collect();
        let stop = if b < self.t_span().1 {
            StopReason::TimeHorizon
        } else {
            self.stop
        };
        Ok(Self {
            segments,
            transitions,
            stop,
        })
    }
}

/// One RK4 step of `ẋ = v, v̇ = −Γ(x)(v, v)`, or the straight line for constant metrics.
fn advance<T: Scalar>(metric: &MetricField<T>, x: &[T], v: &[T], h: T) -> Result<(Vec<T>, Vec<T>)> {
    if metric.is_constant() {
        return Ok((axpy(x, h, v), v.to_vec()));
    }
    let half = h * T::of(0.5);
    let k1x = v.to_vec();
    let k1v = metric.acceleration(x, v)?;
    let x2 = axpy(x, half, &k1x);
    let v2 = axpy(v, half, &k1v);
    let k2v = metric.acceleration(&x2, &v2)?;
    let x3 = axpy(x, half, &v2);
    let v3 = axpy(v, half, &k2v);
    let k3v = metric.acceleration(&x3, &v3)?;
    let x4 = axpy(x, h, &v3);
    let v4 = axpy(v, h, &k3v);
    let k4v = metric.acceleration(&x4, &v4)?;
    let sixth = h / T::of(6.0);
    let two = T::of(2.0);
    let nx: Vec<T> = (0..x.len())
        .map(|i| x[i] + sixth * (k1x[i] + two * v2[i] + two * v3[i] + v4[i]))
        .collect();
    let nv: Vec<T> = (0..x.len())
        .map(|i| v[i] + sixth * (k1v[i] + two * k2v[i] + two * k3v[i] + k4v[i]))
        .collect();
    if nx.iter().chain(&nv).any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite state in geodesic integration".into()));
    }
    Ok((nx, nv))
}

/// Where a segment ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exit<T> {
    Reached,
    /// Left the domain (shrunk by the margin) at this time.
    Boundary(T),
}

/// Integration parameters of one segment.
#[derive(Clone, Copy, Debug)]
pub struct Span<T> {
    pub t0: T,
    pub t1: T,
    pub step: T,
    /// Grid origin: samples lie at `origin + n·step`.
    pub origin: T,
}

/// Solve the geodesic equation on `[t0, t1]` with no domain restriction.
pub fn integrate_geodesic<T: Scalar>(
    metric: &MetricField<T>,
    x0: &[T],
    v0: &[T],
    t_span: (T, T),
    step: T,
) -> Result<GeodesicSegment<T>> {
    let span = Span {
        t0: t_span.0,
        t1: t_span.1,
        step,
        origin: t_span.0,
    };
    Ok(integrate_in_domain(metric, ChartId(0), None, x0, v0, span)?.0)
}

/// Solve the geodesic equation until `t1` or until the point leaves
/// `domain` shrunk by `margin` (localized by bisection).
pub fn integrate_in_domain<T: Scalar>(
    metric: &MetricField<T>,
    chart: ChartId,
    domain: Option<(&Region<T>, T)>,
    x0: &[T],
    v0: &[T],
    span: Span<T>,
) -> Result<(GeodesicSegment<T>, Exit<T>)> {
    let Span { t0, t1, step, origin } = span;
    if !(step > T::zero()) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {}",
            step.as_f64()
        )));
    }
    if t1 < t0 {
        return Err(Error::InvalidArgument("integration span must be increasing".into()));
    }
    metric.check_spd(x0).map_err(|e| Error::Numerical(e.to_string()))?;
    let inside = |x: &[T]| domain.is_none_or(|(r, m)| r.contains(x, m));
    let mut samples = vec![GeodesicSample {
        t: t0,
        x: x0.to_vec(),
        v: v0.to_vec(),
    }];
    // first grid index strictly after t0 (skipping one that is numerically t0)
    let mut n = ((t0 - origin) / step).floor().to_i64().unwrap_or(0) + 1;
    while origin + step * T::of(n as f64) <= t0 + step * T::of(1e-9) {
        n += 1;
    }
    let (mut x, mut v, mut t) = (x0.to_vec(), v0.to_vec(), t0);
    while t < t1 {
        let mut tn = origin + step * T::of(n as f64);
        if tn > t1 - step * T::of(1e-9) {
            tn = t1;
        }
        let (nx, nv) = advance(metric, &x, &v, tn - t)?;
        if !inside(&nx) {
            let (lo, hi) = (T::zero(), tn - t);
            let s = bisect_exit(metric, &x, &v, lo, hi, &inside)?;
            let (bx, bv) = advance(metric, &x, &v, s)?;
            if s > T::zero() {
                samples.push(GeodesicSample { t: t + s, x: bx, v: bv });
            }
            return Ok((GeodesicSegment { chart, samples }, Exit::Boundary(t + s)));
        }
        x = nx;
        v = nv;
        t = tn;
        samples.push(GeodesicSample {
            t,
            x: x.clone(),
            v: v.clone(),
        });
        n += 1;
    }
    Ok((GeodesicSegment { chart, samples }, Exit::Reached))
}

/// Largest `s` (to `EVENT_TOL`) with the sub-step endpoint still inside.
fn bisect_exit<T: Scalar>(
    metric: &MetricField<T>,
    x: &[T],
    v: &[T],
    mut lo: T,
    mut hi: T,
    inside: &impl Fn(&[T]) -> bool,
) -> Result<T> {
    let tol = T::of(EVENT_TOL);
    while hi - lo > tol {
        let mid = (lo + hi) * T::of(0.5);
        if inside(&advance(metric, x, v, mid)?.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Change taken, target chart, position and velocity in the target.
type Handover<T> = (Transfer, ChartId, Vec<T>, Vec<T>);

fn margin_of<T: Scalar>(region: &Region<T>) -> T {
    region.scale() * T::of(TRANSITION_MARGIN)
}

/// Best declared continuation of `(x, v)` out of `chart`: the image with the
/// most clearance in its target (ties to the lowest chart id), which must
/// clear the target's transition margin.
fn continuation<T: Scalar>(atlas: &Atlas<T>, chart: ChartId, x: &[T], v: &[T]) -> Result<Option<Handover<T>>> {
    let mut cands: Vec<(T, Handover<T>)> = Vec::new();
    for (tr, y) in atlas.change_routes(chart, x, -atlas.tol()) {
        let to = tr.target(atlas, chart);
        let region = &atlas.chart(to).region;
        let c = region.clearance(&y);
        if c > margin_of(region) {
            let w = tr.map(atlas, chart).apply_linear(v);
            cands.push((c, (tr, to, y, w)));
        }
    }
    if cands.is_empty() {
        return Ok(None);
    }
    cands.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.1).1.cmp(&(b.1).1))
    });
    // all candidates must describe the same tangent vector
    let best = &cands[0].1;
    let tol = T::of(TOL_INT).max(atlas.tol());
    for (_, other) in &cands[1..] {
        let a = TangentOrbVector {
            chart: best.1,
            base: best.2.clone(),
            vec: best.3.clone(),
        };
        let b = TangentOrbVector {
            chart: other.1,
            base: other.2.clone(),
            vec: other.3.clone(),
        };
        if atlas.tangent_witness_within(&a, &b, tol).is_none() && atlas.tangent_witness_within(&b, &a, tol).is_none() {
            return Err(Error::Consistency(format!(
                "continuations out of chart `{}` at {:?} disagree",
                atlas.chart(chart).name,
                x.iter().map(|c| c.as_f64()).collect::<Vec<_>>()
            )));
        }
    }
    Ok(Some(cands.swap_remove(0).1))
}

/// Trace the orbifold geodesic with initial vector `xi` on `[t0, t1]`.
pub fn trace_span<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    xi: &TangentOrbVector<T>,
    t0: T,
    t1: T,
    step: T,
) -> Result<OrbifoldGeodesic<T>> {
    atlas.chart(xi.chart).check_inside(&xi.base)?;
    let mut segments = Vec::new();
    let mut transitions = Vec::new();
    let (mut chart, mut x, mut v, mut t) = (xi.chart, xi.base.clone(), xi.vec.clone(), t0);
    // Start in a chart where the point is not already inside the margin, if one exists.
    let region = &atlas.chart(chart).region;
    if !region.contains(&x, margin_of(region)) {
        if let Some((_, to, y, w)) = continuation(atlas, chart, &x, &v)? {
            chart = to;
            x = y;
            v = w;
        }
    }
    loop {
        let region = &atlas.chart(chart).region;
        let m = margin_of(region);
        // a start inside the margin band integrates up to the true boundary
        let m = if region.contains(&x, m) { m } else { T::zero() };
        let span = Span {
            t0: t,
            t1,
            step,
            origin: t0,
        };
        let (seg, exit) = integrate_in_domain(metric.field(chart), chart, Some((region, m)), &x, &v, span)?;
        let end = seg.last().clone();
        segments.push(seg);
        match exit {
            Exit::Reached => {
                return Ok(OrbifoldGeodesic {
                    segments,
                    transitions,
                    stop: StopReason::TimeHorizon,
                })
            }
            Exit::Boundary(te) => match continuation(atlas, chart, &end.x, &end.v)? {
                Some((transfer, to, y, w)) => {
                    transitions.push(TransitionRecord {
                        time: te,
                        from: chart,
                        to,
                        transfer,
                    });
                    chart = to;
                    x = y;
                    v = w;
                    t = te;
                }
                None => {
                    return Ok(OrbifoldGeodesic {
                        segments,
                        transitions,
                        stop: StopReason::LeftAtlas,
                    })
                }
            },
        }
    }
}

/// Trace on `[0, horizon]`.
pub fn trace_orbifold_geodesic<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    xi: &TangentOrbVector<T>,
    horizon: T,
    step: T,
) -> Result<OrbifoldGeodesic<T>> {
    trace_span(atlas, metric, xi, T::zero(), horizon, step)
}

/// `α(t, ξ)` as a canonical orbit point; negative `t` runs `−ξ` forward.
pub fn geodesic_flow<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    xi: &TangentOrbVector<T>,
    t: T,
    step: T,
) -> Result<OrbitPoint<T>> {
    let (xi, t) = if t < T::zero() {
        (xi.scaled(-T::one()), -t)
    } else {
        (xi.clone(), t)
    };
    let geo = trace_orbifold_geodesic(atlas, metric, &xi, t, step)?;
    let (_, reached) = geo.t_span();
    if geo.is_maximal() || reached < t - time_slack(t) {
        return Err(Error::DomainOfExp {
            time: reached.as_f64(),
            target: t.as_f64(),
        });
    }
    let end = geo.end();
    Ok(atlas.canonical_point(&OrbitPoint {
        chart: geo.end_chart(),
        rep: end.x.clone(),
    }))
}

/// [`geodesic_flow`] over many initial vectors, evaluated in parallel.
pub fn geodesic_flow_batch<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    xis: &[TangentOrbVector<T>],
    t: T,
    step: T,
) -> Vec<Result<OrbitPoint<T>>> {
    xis.par_iter()
        .map(|xi| geodesic_flow(atlas, metric, xi, t, step))
        .collect()
}

/// `exp_Orb(ξ) = c_ξ(1)`.
pub fn exp_orb<T: Scalar>(
    atlas: &Atlas<T>,
    metric: &OrbifoldMetric<T>,
    xi: &TangentOrbVector<T>,
    step: T,
) -> Result<OrbitPoint<T>> {
    geodesic_flow(atlas, metric, xi, T::one(), step)
}

/// Glue two arcs that agree at a common time.
pub fn join_geodesics<T: Scalar>(
    atlas: &Atlas<T>,
    a: &OrbifoldGeodesic<T>,
    b: &OrbifoldGeodesic<T>,
) -> Result<OrbifoldGeodesic<T>> {
    let (a, b) = if a.t_span().0 <= b.t_span().0 { (a, b) } else { (b, a) };
    let (a0, a1) = a.t_span();
    let (b0, b1) = b.t_span();
    if b0 > a1 + time_slack(a1) {
        return Err(Error::Join(format!(
            "spans [{}, {}] and [{}, {}] do not overlap",
            a0.as_f64(),
            a1.as_f64(),
            b0.as_f64(),
            b1.as_f64()
        )));
    }
    if b1 <= a1 {
        // b's span lies inside a's; still require agreement somewhere
        find_join_time(atlas, a, b)?;
        return Ok(a.clone());
    }
    let (tj, transfer, from, to) = find_join_time(atlas, a, b)?;
    let mut head = a.restrict(a0, tj)?;
    let tail = b.restrict(tj, b1)?;
    head.transitions.push(TransitionRecord {
        time: tj,
        from,
        to,
        transfer,
    });
    head.segments.extend(tail.segments);
    head.transitions.extend(tail.transitions);
    head.stop = b.stop;
    Ok(head)
}

/// Earliest common sample time at which the tangent vectors agree.
fn find_join_time<T: Scalar>(
    atlas: &Atlas<T>,
    a: &OrbifoldGeodesic<T>,
    b: &OrbifoldGeodesic<T>,
) -> Result<(T, Transfer, ChartId, ChartId)> {
    let (a0, a1) = a.t_span();
    let tol = T::of(TOL_INT).max(atlas.tol());
    for (_, s) in b.samples() {
        if s.t < a0 - time_slack(a0) || s.t > a1 + time_slack(a1) {
            continue;
        }
        let (Ok(u), Ok(w)) = (a.initial_vector(s.t), b.initial_vector(s.t)) else {
            continue;
        };
        if let Some(tr) = atlas.tangent_witness_within(&u, &w, tol) {
            return Ok((s.t, tr, u.chart, w.chart));
        }
    }
    Err(Error::Join(
        "initial vectors disagree at every common sample time".into(),
    ))
}

/// Largest distance between the quotient arcs of two traces on a common span,
/// measured with [`Atlas::quotient_distance`] at the sample times of `a`.
pub fn arc_distance<T: Scalar>(atlas: &Atlas<T>, a: &OrbifoldGeodesic<T>, b: &OrbifoldGeodesic<T>) -> Option<T> {
    let (b0, b1) = b.t_span();
    let mut worst = T::zero();
    for (chart, s) in a.samples() {
        if s.t < b0 || s.t > b1 {
            continue;
        }
        let p = OrbitPoint {
            chart,
            rep: s.x.clone(),
        };
        let q = b.point_at(s.t)?;
        worst = worst.max(atlas.quotient_distance(&p, &q)?);
    }
    Some(worst)
}

/// Exponential map of a single chart metric: the geodesic from `x` with
/// velocity `v` at time 1, integrated without domain restriction.
pub fn chart_exp<T: Scalar>(metric: &MetricField<T>, x: &[T], v: &[T], step: T) -> Result<Vec<T>> {
    if metric.is_constant() {
        return Ok(crate::linalg::add(x, v));
    }
    let n = (T::one() / step).ceil().to_usize().unwrap_or(1).max(1);
    let h = T::one() / T::nat(n);
    let (mut y, mut w) = (x.to_vec(), v.to_vec());
    for _ in 0..n {
        (y, w) = advance(metric, &y, &w, h)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::orbifold::{FiniteGroup, GroupElement, OrbifoldChart};
    use crate::poly::Polynomial;

    fn mirror() -> (Atlas<f64>, OrbifoldMetric<f64>) {
        let g = GroupElement::linear(Mat::diag(&[-1.0, 1.0]), 1e-9).unwrap();
        let group = FiniteGroup::generated_by(2, &[g], 1e-9).unwrap();
        let chart = OrbifoldChart::new("U", Region::ball(vec![0.0, 0.0], 10.0), group, 1e-9).unwrap();
        let atlas = Atlas::global(chart, 1e-9).unwrap();
        let metric = OrbifoldMetric::flat(&atlas);
        (atlas, metric)
    }

    #[test]
    fn flat_integration_is_exact() {
        let m = MetricField::flat(2);
        let seg = integrate_geodesic(&m, &[0.5, -1.0], &[0.3, 0.2], (0.0, 1.0), 1e-3).unwrap();
        for s in &seg.samples {
            let want = [0.5 + s.t * 0.3, -1.0 + s.t * 0.2];
            assert!(dist(&s.x, &want) < 1e-12);
        }
        assert_eq!(seg.samples.len(), 1001);
        assert_eq!(seg.last().t, 1.0);
    }

    #[test]
    fn zero_velocity_is_constant() {
        let m = MetricField::conformal(Polynomial::linear(&[0.2, 0.1]));
        let seg = integrate_geodesic(&m, &[0.1, 0.1], &[0.0, 0.0], (0.0, 1.0), 1e-2).unwrap();
        assert!(seg.samples.iter().all(|s| s.x == vec![0.1, 0.1]));
    }

    #[test]
    fn bad_step_is_rejected() {
        let m = MetricField::<f64>::flat(2);
        assert!(integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], (0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn mirror_trace_example() {
        let (atlas, metric) = mirror();
        let xi = TangentOrbVector::new(&atlas, ChartId(0), vec![2.0, 1.0], vec![-1.0, -1.0]).unwrap();
        let geo = trace_orbifold_geodesic(&atlas, &metric, &xi, 3.0, 1e-3).unwrap();
        assert_eq!(geo.stop, StopReason::TimeHorizon);
        let p2 = geo.point_at(2.0).unwrap();
        assert!(dist(&p2.rep, &[0.0, -1.0]) < 1e-12);
        let p3 = geo.point_at(3.0).unwrap();
        let folded = OrbitPoint::new(&atlas, ChartId(0), vec![1.0, -2.0]).unwrap();
        assert!(atlas.orbit_equal(&p3, &folded));
    }

    #[test]
    fn hermite_reproduces_lines() {
        let a = GeodesicSample {
            t: 0.0,
            x: vec![1.0],
            v: vec![2.0],
        };
        let b = GeodesicSample {
            t: 0.5,
            x: vec![2.0],
            v: vec![2.0],
        };
        let (x, v) = hermite(&a, &b, 0.2);
        assert!((x[0] - 1.4_f64).abs() < 1e-15 && (v[0] - 2.0_f64).abs() < 1e-14);
    }
}
