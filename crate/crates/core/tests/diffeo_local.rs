mod common;

use common::*;
use orbidiff::diffeo::{
    admissible_scale, compose_sections, compose_unchecked, estimate_budget, exp_section, invert_section,
    validate_budget, LocalDiffeo, NeighborhoodBudget, Omega,
};
use orbidiff::linalg::{add, dist, norm, Mat};
use orbidiff::metric::{average_metric, MetricField, OrbifoldMetric};
use orbidiff::orbifold::{Atlas, ChartId, OrbitPoint};
use orbidiff::orbisection::{ChartField, Orbisection};
use orbidiff::poly::{PolyField, Polynomial};
use orbidiff::region::Region;
use orbidiff::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const U: ChartId = ChartId(0);

fn flat_budget(atlas: &Atlas<f64>) -> NeighborhoodBudget<f64> {
    estimate_budget(atlas, &OrbifoldMetric::flat(atlas)).unwrap()
}

fn conformal_budget(atlas: &Atlas<f64>) -> NeighborhoodBudget<f64> {
    let phi = Polynomial::from_terms(2, [(vec![2, 0], 0.02), (vec![0, 2], 0.02)]);
    let g = average_metric(atlas.chart(U), &MetricField::conformal(phi)).unwrap();
    estimate_budget(atlas, &OrbifoldMetric::new(atlas, vec![g]).unwrap()).unwrap()
}

fn linear(atlas: &Atlas<f64>, a: [[f64; 2]; 2]) -> Orbisection<f64> {
    let m = Mat::from_rows(&[a[0].to_vec(), a[1].to_vec()]);
    Orbisection::from_fields(atlas, vec![ChartField::Poly(PolyField::linear(&m))]).unwrap()
}

fn constant(atlas: &Atlas<f64>, c: [f64; 2]) -> Orbisection<f64> {
    Orbisection::from_fields(atlas, vec![ChartField::Poly(PolyField::constant(&c))]).unwrap()
}

fn samples(b: &NeighborhoodBudget<f64>, n: usize, seed: u64) -> Vec<Vec<f64>> {
    b.sample(U, Omega::One, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn flat_budget_is_boundary_clearance() {
    let atlas = global(group(2, &[Mat::diag(&[-1.0, 1.0])]), 5.0);
    let b = flat_budget(&atlas);
    for x in [[0.0, 0.0], [1.0, 2.0], [-3.0, 0.5]] {
        assert!((b.epsilon_at(U, &x) - (5.0 - norm(&x))).abs() < 1e-12);
    }
    for (r, radius) in [
        (Omega::One, 1.0),
        (Omega::Two, 2.0),
        (Omega::Three, 3.0),
        (Omega::Five, 5.0),
    ] {
        match b.chart(U).omega(r) {
            Region::Ball { radius: got, .. } => assert!((got - radius).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn conformal_budget_is_positive_and_ordered() {
    let b = conformal_budget(&cone3());
    let c = b.chart(U);
    assert!(c.epsilon > 0.0 && c.delta > 0.0 && !c.flat);
    assert!(c.tau <= c.nu && c.nu < c.epsilon && c.epsilon <= c.radius);
    assert_eq!(c.sigma_t, c.epsilon / 2.0);
}

#[test]
fn exp_of_the_zero_section_is_the_identity() {
    for b in [flat_budget(&mirror()), conformal_budget(&mirror())] {
        let e = exp_section(&Orbisection::zero(b.atlas()), &b).unwrap();
        for x in samples(&b, 100, 1) {
            assert_eq!(e.lift(U, &x).unwrap(), x);
        }
    }
}

#[test]
fn flat_constant_field_translates() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let e = exp_section(&constant(&atlas, [0.1, -0.05]), &b).unwrap();
    for x in samples(&b, 20, 2) {
        assert_close(&e.lift(U, &x).unwrap(), &add(&x, &[0.1, -0.05]), 1e-15);
    }
}

#[test]
fn lifts_commute_with_the_group() {
    let atlas = mirror();
    let refl = Mat::diag(&[-1.0, 1.0]);
    for b in [flat_budget(&atlas), conformal_budget(&atlas)] {
        let e = exp_section(&linear(&atlas, [[0.04, 0.0], [0.0, -0.03]]), &b).unwrap();
        for x in b.chart(U).omega(Omega::One).grid(5, 25) {
            let lhs = e.lift(U, &refl.mul_vec(&x)).unwrap();
            let rhs = refl.mul_vec(&e.lift(U, &x).unwrap());
            assert_close(&lhs, &rhs, 1e-8);
        }
        assert!(e.equivariance_residual(U).unwrap() < 1e-8);
    }
}

#[test]
fn local_inverse_of_exp() {
    let atlas = mirror();
    let flat = flat_budget(&atlas);
    let (x, y) = ([0.3, -0.2], [0.5, 0.1]);
    assert_eq!(flat.local_inverse_exp(U, &x, &y).unwrap(), vec![0.5 - 0.3, 0.1 + 0.2]);
    let b = conformal_budget(&atlas);
    assert_close(&b.local_inverse_exp(U, &x, &x).unwrap(), &[0.0, 0.0], 1e-14);
    let v = b.local_inverse_exp(U, &x, &y).unwrap();
    assert!(dist(&b.exp(U, &x, &v).unwrap(), &y) < 1e-10);
}

#[test]
fn flat_composition_closed_form() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    let sigma = linear(&atlas, [[0.04, 0.0], [0.0, -0.03]]);
    let tau = linear(&atlas, [[-0.02, 0.0], [0.0, 0.05]]);
    let st = compose_sections(&sigma, &tau, &b).unwrap();
    for x in samples(&b, 50, 3) {
        let t = tau.eval(U, &x).unwrap();
        let want = add(&t, &sigma.eval(U, &add(&x, &t)).unwrap());
        assert_close(&st.eval(U, &x).unwrap(), &want, 1e-12);
    }
    let zero = Orbisection::zero(&atlas);
    for x in samples(&b, 10, 4) {
        assert_eq!(
            compose_sections(&sigma, &zero, &b).unwrap().eval(U, &x).unwrap(),
            sigma.eval(U, &x).unwrap()
        );
        assert_eq!(
            compose_sections(&zero, &tau, &b).unwrap().eval(U, &x).unwrap(),
            tau.eval(U, &x).unwrap()
        );
    }
    let manifold = trivial(2);
    let bm = flat_budget(&manifold);
    let sum = compose_sections(
        &constant(&manifold, [0.1, 0.2]),
        &constant(&manifold, [-0.05, 0.03]),
        &bm,
    )
    .unwrap();
    assert_close(&sum.eval(U, &[0.4, 0.4]).unwrap(), &[0.05, 0.23], 1e-15);
}

#[test]
fn flat_linear_inverse_is_the_matrix_inverse() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let a = [[0.05, -0.02], [0.03, 0.04]];
    let inv = invert_section(&linear(&atlas, a), &b).unwrap();
    let ia = Mat::identity(2).add(&Mat::from_rows(&[a[0].to_vec(), a[1].to_vec()]));
    let want = ia.inverse().unwrap().sub(&Mat::identity(2));
    for x in samples(&b, 50, 5) {
        assert_close(&inv.eval(U, &x).unwrap(), &want.mul_vec(&x), 1e-10);
    }
    let zero = invert_section(&Orbisection::zero(&atlas), &b).unwrap();
    assert!(zero.is_zero());
}

#[test]
fn inversion_law_on_orbit_samples() {
    let atlas = cone3();
    for (b, tol, n) in [(flat_budget(&atlas), 1e-8, 100), (conformal_budget(&atlas), 1e-8, 10)] {
        let sigma = orbidiff::fixtures::load::<f64>("cone").unwrap().sections["sigma"].clone();
        let (e, inv) = (
            exp_section(&sigma, &b).unwrap(),
            exp_section(&invert_section(&sigma, &b).unwrap(), &b).unwrap(),
        );
        for x in samples(&b, n, 6) {
            let back = inv.lift(U, &e.lift(U, &x).unwrap()).unwrap();
            let p = OrbitPoint { chart: U, rep: back };
            assert!(atlas.quotient_distance(&p, &pt(&x)).unwrap() < tol);
        }
    }
}

#[test]
fn conformal_group_law() {
    let atlas = mirror();
    let b = conformal_budget(&atlas);
    let s: orbidiff::Scenario64 = orbidiff::fixtures::load("mirror").unwrap();
    let (sigma, tau) = (&s.sections["sigma"], &s.sections["tau"]);
    let (es, et) = (LocalDiffeo::unchecked(sigma, &b), LocalDiffeo::unchecked(tau, &b));
    let ec = LocalDiffeo::unchecked(&compose_sections(sigma, tau, &b).unwrap(), &b);
    for x in samples(&b, 8, 7) {
        let lhs = es.lift(U, &et.lift(U, &x).unwrap()).unwrap();
        assert!(dist(&lhs, &ec.lift(U, &x).unwrap()) < 1e-6);
    }
}

#[test]
fn budget_validation() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    assert!(validate_budget(&Orbisection::zero(&atlas), &b).unwrap().pass());
    let big = linear(&atlas, [[0.9, 0.0], [0.0, 0.9]]);
    let report = validate_budget(&big, &b).unwrap();
    assert!(!report.pass());
    match report.into_result() {
        Err(Error::Budget { norm, value, bound, .. }) => {
            assert!(norm.contains("C1"), "{norm}");
            assert!(value > bound);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(compose_sections(&big, &big, &b), Err(Error::Budget { .. })));
    assert!(matches!(exp_section(&big, &b), Err(Error::Budget { .. })));
}

#[test]
fn admissible_scale_is_a_threshold() {
    let atlas = mirror();
    let b = flat_budget(&atlas);
    let sigma = linear(&atlas, [[1.0, 0.0], [0.0, -0.5]]);
    let t = admissible_scale(&sigma, &b, 1.0, 1e-6).unwrap();
    assert!(t > 0.0 && t < 1.0);
    for s in [0.25 * t, 0.5 * t, t] {
        assert!(validate_budget(&sigma.scaled(s), &b).unwrap().pass());
    }
    assert!(!validate_budget(&sigma.scaled(t + 1e-5), &b).unwrap().pass());
}

#[test]
fn injectivity_of_the_chart_map() {
    let atlas = trivial(2);
    let b = flat_budget(&atlas);
    let (sigma, tau) = (
        linear(&atlas, [[0.05, 0.0], [0.0, 0.05]]),
        linear(&atlas, [[0.05, 0.01], [0.0, 0.05]]),
    );
    let (es, et) = (exp_section(&sigma, &b).unwrap(), exp_section(&tau, &b).unwrap());
    let witness = samples(&b, 100, 8)
        .iter()
        .map(|x| dist(&es.lift(U, x).unwrap(), &et.lift(U, x).unwrap()))
        .fold(0.0, f64::max);
    assert!(witness > 1e-9);
}

#[test]
fn outputs_of_compose_and_invert_are_orbisections() {
    let s: orbidiff::Scenario64 = orbidiff::fixtures::load("teardrop").unwrap();
    let b = estimate_budget(&s.atlas, &s.metric).unwrap();
    let (sigma, tau) = (&s.sections["sigma"], &s.sections["tau"]);
    for out in [compose_unchecked(sigma, tau, &b), invert_section(sigma, &b).unwrap()] {
        for id in s.atlas.chart_ids() {
            let pts = b.chart(id).omega(Omega::One).grid(5, 25);
            assert!(out.chart_equivariance_residual(id, s.atlas.chart(id), &pts).unwrap() < 1e-9);
        }
    }
}
