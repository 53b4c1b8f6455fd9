mod common;

use std::sync::Arc;

use common::*;
use orbidiff::diffeo::{estimate_budget, LocalDiffeo, NeighborhoodBudget, Omega};
use orbidiff::linalg::{add, dist, scale, Mat};
use orbidiff::metric::{average_metric, MetricField, OrbifoldMetric};
use orbidiff::orbifold::{Atlas, ChartId};
use orbidiff::orbisection::{ChartField, Orbisection};
use orbidiff::poly::{PolyField, Polynomial};
use orbidiff::regularity::{
    evol, evolution_path, evolve, evolve_at, flow, right_log_derivative, DiffeoPath, TimeDependentSection,
};
use orbidiff::Error;

const U: ChartId = ChartId(0);

fn flat_budget(atlas: &Atlas<f64>) -> NeighborhoodBudget<f64> {
    estimate_budget(atlas, &OrbifoldMetric::flat(atlas)).unwrap()
}

fn conformal_budget(atlas: &Atlas<f64>) -> NeighborhoodBudget<f64> {
    let phi = Polynomial::from_terms(2, [(vec![2, 0], 0.02), (vec![0, 2], 0.02)]);
    let g = average_metric(atlas.chart(U), &MetricField::conformal(phi)).unwrap();
    estimate_budget(atlas, &OrbifoldMetric::new(atlas, vec![g]).unwrap()).unwrap()
}

fn linear(atlas: &Atlas<f64>, a: &Mat<f64>) -> Orbisection<f64> {
    Orbisection::from_fields(atlas, vec![ChartField::Poly(PolyField::linear(a))]).unwrap()
}

fn constant(atlas: &Atlas<f64>, c: &[f64]) -> Orbisection<f64> {
    Orbisection::from_fields(atlas, vec![ChartField::Poly(PolyField::constant(c))]).unwrap()
}

/// Matrix exponential by its Taylor series.
fn expm(a: &Mat<f64>) -> Mat<f64> {
    let d = a.rows();
    let (mut sum, mut term) = (Mat::identity(d), Mat::identity(d));
    for k in 1..40 {
        term = term.mul(a).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    sum
}

fn points() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-0.5, 0.4], vec![0.7, 0.1]]
}

#[test]
fn constant_field_flow_translates() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let c = [0.2, -0.1];
    let gamma = TimeDependentSection::constant(constant(&atlas, &c));
    for x in points() {
        for t in [0.25, 0.5, 1.0] {
            assert_close(&flow(&gamma, &b, U, &x, t).unwrap(), &add(&x, &scale(&c, t)), 1e-12);
        }
    }
}

#[test]
fn linear_field_flow_is_the_exponential() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let a = Mat::from_rows(&[vec![0.1, -0.3], vec![0.2, 0.05]]);
    let gamma = TimeDependentSection::constant(linear(&atlas, &a));
    let e = expm(&a);
    for x in points() {
        assert_close(&flow(&gamma, &b, U, &x, 1.0).unwrap(), &e.mul_vec(&x), 1e-6);
    }
}

#[test]
fn zero_curve_and_time_zero() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    let zero = TimeDependentSection::zero(&atlas);
    for x in points() {
        assert_eq!(flow(&zero, &b, U, &x, 0.7).unwrap(), x);
    }
    let gamma = TimeDependentSection::constant(linear(&atlas, &Mat::diag(&[0.05, -0.02])));
    assert!(evolve_at(&gamma, &b, 0.0).is_zero());
    assert!(evolve_at(&zero, &b, 0.6).is_zero());
    let ev = evolve(&gamma, &b, 4).unwrap();
    assert_eq!(ev.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert!(ev.slices[0].is_zero());
}

#[test]
fn flat_constant_evolution_is_linear_in_time() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let c = [0.1, 0.05];
    let gamma = TimeDependentSection::constant(constant(&atlas, &c));
    let ev = evolve(&gamma, &b, 8).unwrap();
    for (t, s) in ev.times.iter().zip(&ev.slices) {
        for x in points() {
            assert_close(&s.eval(U, &x).unwrap(), &scale(&c, *t), 1e-12);
        }
    }
}

#[test]
fn evol_of_a_linear_field() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    let a = Mat::diag(&[0.08, -0.05]);
    let gamma = TimeDependentSection::constant(linear(&atlas, &a));
    let e = evol(&gamma, &b).unwrap();
    let m = expm(&a);
    for x in points() {
        assert_close(&e.lift(U, &x).unwrap(), &m.mul_vec(&x), 1e-6);
    }
    assert!(e.equivariance_residual(U).unwrap() < 1e-9);
}

#[test]
fn fast_curves_are_rejected() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    let gamma = TimeDependentSection::constant(linear(&atlas, &Mat::diag(&[2.0, 2.0])));
    assert!(matches!(evolve(&gamma, &b, 4), Err(Error::Budget { .. })));
    let escape = TimeDependentSection::constant(constant(&trivial(2), &[20.0, 0.0]));
    let bt = flat_budget(&trivial(2));
    assert!(matches!(
        flow(&escape, &bt, U, &[0.0, 0.0], 1.0),
        Err(Error::FlowEscape { .. })
    ));
}

#[test]
fn right_log_of_a_translation_path() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let c = vec![0.1, -0.2];
    let (a2, b2) = (atlas.clone(), b.clone());
    let path: DiffeoPath<f64> = Arc::new(move |t: f64| Ok(LocalDiffeo::unchecked(&constant(&a2, &scale(&c, t)), &b2)));
    let r = right_log_derivative(&path, 0.5, 1e-4).unwrap();
    for x in points() {
        assert_close(&r.eval(U, &x).unwrap(), &[0.1, -0.2], 1e-10);
    }
}

fn right_log_matches(atlas: &Atlas<f64>, b: &NeighborhoodBudget<f64>, pts: &[Vec<f64>]) {
    let s0 = linear(atlas, &Mat::diag(&[0.04, -0.03]));
    let s1 = linear(atlas, &Mat::diag(&[-0.02, 0.05]));
    let gamma = TimeDependentSection::poly(vec![s0, s1]).unwrap();
    let path = evolution_path(&gamma, b);
    for t in [0.25, 0.5, 0.75] {
        let r = right_log_derivative(&path, t, 1e-4).unwrap();
        let want = gamma.at(atlas, t);
        for x in pts {
            let err = dist(&r.eval(U, x).unwrap(), &want.eval(U, x).unwrap());
            assert!(err < 1e-4, "t = {t}, x = {x:?}: {err:e}");
        }
    }
}

#[test]
fn evolution_integrates_the_curve_flat() {
    let atlas = mirror();
    right_log_matches(&atlas, &flat_budget(&atlas), &points());
}

#[test]
fn evolution_integrates_the_curve_conformal() {
    let atlas = mirror();
    let b = conformal_budget(&atlas);
    let pts = b.chart(U).omega(Omega::One).grid(2, 4);
    right_log_matches(&atlas, &b, &pts);
}

#[test]
fn sampled_curves_interpolate() {
    let atlas = trivial(2);
    let s = TimeDependentSection::samples(vec![constant(&atlas, &[0.0, 0.0]), constant(&atlas, &[0.2, 0.0])]).unwrap();
    assert_close(&s.eval(U, 0.5, &[0.0, 0.0]).unwrap(), &[0.1, 0.0], 1e-15);
    assert!(TimeDependentSection::samples(vec![constant(&atlas, &[0.0, 0.0])]).is_err());
    assert!(TimeDependentSection::<f64>::poly(vec![]).is_err());
}
