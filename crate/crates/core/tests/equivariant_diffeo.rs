mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::*;
use orbidiff::diffeo::{estimate_budget, exp_section};
use orbidiff::equivariant::{
    check_is, descend, is_weak_equivalence, kernel_witness, Composite, DiffeoLift, KernelWitness, PolyMap, WeakCheck,
};
use orbidiff::linalg::Mat;
use orbidiff::metric::{ChartMap, OrbifoldMetric};
use orbidiff::orbifold::{AffineMap, ChartId, FiniteGroup, OrbitPoint, TOL_ALG};
use orbidiff::orbisection::{ChartField, Orbisection};
use orbidiff::poly::{PolyField, Polynomial};
use orbidiff::region::Region;

const U: ChartId = ChartId(0);

fn samples(d: usize) -> Vec<Vec<f64>> {
    Region::ball(vec![0.2; d], 1.0).grid(if d == 1 { 15 } else { 5 }, 100)
}

fn linear_map(m: Mat<f64>) -> Arc<dyn ChartMap<f64>> {
    Arc::new(AffineMap::linear(m))
}

#[test]
fn isolated_fixed_point_condition() {
    assert!(check_is(&group(1, &[Mat::diag(&[-1.0])]), TOL_ALG).unwrap());
    assert!(check_is(&group(2, &[Mat::rotation2(2.0 * PI / 3.0)]), TOL_ALG).unwrap());
    assert!(!check_is(&group(2, &[Mat::diag(&[-1.0, 1.0])]), TOL_ALG).unwrap());
    assert!(check_is(&FiniteGroup::<f64>::trivial(2), TOL_ALG).unwrap());
}

#[test]
fn group_element_induces_conjugation() {
    let d3 = group(2, &[Mat::rotation2(2.0 * PI / 3.0), Mat::diag(&[1.0, -1.0])]);
    assert_eq!(d3.order(), 6);
    for (i0, g0) in d3.elements().iter().enumerate() {
        let w = is_weak_equivalence(Arc::new(g0.map().clone()), &d3, &samples(2), 1e-9)
            .unwrap()
            .accepted()
            .unwrap();
        for (i, g) in d3.elements().iter().enumerate() {
            let conj = g0.compose(g).compose(&g0.inverse());
            assert_eq!(w.alpha[i], d3.index_of(&conj, 1e-9).unwrap(), "g0 = {i0}, g = {i}");
        }
    }
}

#[test]
fn scaling_is_a_weak_equivalence_with_trivial_alpha() {
    let g = group(2, &[Mat::rotation2(2.0 * PI / 3.0)]);
    let w = is_weak_equivalence(linear_map(Mat::identity(2).scale(2.0)), &g, &samples(2), 1e-9)
        .unwrap()
        .accepted()
        .unwrap();
    assert_eq!(w.alpha, vec![0, 1, 2]);
    assert!(w.residual < 1e-12);
}

#[test]
fn translation_is_rejected_by_the_sign_group() {
    let g = group(1, &[Mat::diag(&[-1.0])]);
    let shift: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::new(Mat::identity(1), vec![0.5]));
    match is_weak_equivalence(shift, &g, &samples(1), 1e-9).unwrap() {
        WeakCheck::Rejected { residual, .. } => assert!(residual > 0.1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn group_elements_lie_in_the_kernel() {
    for atlas in [line(), cone3(), cone4()] {
        let grp = atlas.chart(U).group.clone();
        let pts = samples(grp.dim());
        for (i, g) in grp.elements().iter().enumerate() {
            let w = is_weak_equivalence(Arc::new(g.map().clone()), &grp, &pts, 1e-9)
                .unwrap()
                .accepted()
                .unwrap();
            let h = descend(&w, &atlas, U, &pts, 1e-9).unwrap();
            for x in &pts {
                let p = pt(x);
                assert!(atlas.quotient_distance(&h.apply(&p).unwrap(), &p).unwrap() < 1e-12);
            }
            assert_eq!(kernel_witness(&h, &pts, 1e-9).unwrap(), KernelWitness::Element(i));
        }
    }
}

#[test]
fn doubling_on_the_half_line() {
    let atlas = line();
    let grp = atlas.chart(U).group.clone();
    let pts = samples(1);
    let w = is_weak_equivalence(linear_map(Mat::diag(&[2.0])), &grp, &pts, 1e-9)
        .unwrap()
        .accepted()
        .unwrap();
    let h = descend(&w, &atlas, U, &pts, 1e-9).unwrap();
    for x in [-0.3, 0.0, 0.45, 1.2] {
        let q = h.apply(&pt(&[x])).unwrap();
        assert!((q.rep[0].abs() - 2.0 * x.abs()).abs() < 1e-15);
    }
    match kernel_witness(&h, &pts, 1e-9).unwrap() {
        KernelWitness::NotInKernel(moved) => assert!(moved > 0.1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn descent_is_functorial() {
    let atlas = cone3();
    let grp = atlas.chart(U).group.clone();
    let pts = samples(2);
    let r2 = |i| Polynomial::variable(2, i).mul(&Polynomial::variable(2, i));
    let radial = r2(0).add(&r2(1)).scale(0.1);
    let bend = PolyField::new(
        (0..2)
            .map(|i| Polynomial::variable(2, i).add(&Polynomial::variable(2, i).mul(&radial)))
            .collect(),
    );
    let h1 = linear_map(Mat::identity(2).scale(0.5));
    let h2: Arc<dyn ChartMap<f64>> = Arc::new(PolyMap(bend));
    let both: Arc<dyn ChartMap<f64>> = Arc::new(Composite(vec![h1.clone(), h2.clone()]));
    let desc = |h: Arc<dyn ChartMap<f64>>| {
        let w = is_weak_equivalence(h, &grp, &pts, 1e-9).unwrap().accepted().unwrap();
        descend(&w, &atlas, U, &pts, 1e-9).unwrap()
    };
    let (d1, d2, d12) = (desc(h1), desc(h2), desc(both));
    for x in &pts {
        let p = atlas.canonical_point(&pt(x));
        let lhs = d12.apply(&p).unwrap();
        let rhs = d2.apply(&d1.apply(&p).unwrap()).unwrap();
        assert!(atlas.quotient_distance(&lhs, &rhs).unwrap() < 1e-12);
    }
}

#[test]
fn nonzero_exponential_is_not_in_the_kernel() {
    let atlas = cone3();
    let b = estimate_budget(&atlas, &OrbifoldMetric::flat(&atlas)).unwrap();
    let sigma = Orbisection::from_fields(
        &atlas,
        vec![ChartField::Poly(PolyField::linear(&Mat::identity(2).scale(0.05)))],
    )
    .unwrap();
    let lift: Arc<dyn ChartMap<f64>> = Arc::new(DiffeoLift {
        diffeo: exp_section(&sigma, &b).unwrap(),
        chart: U,
    });
    let pts = samples(2);
    let w = is_weak_equivalence(lift, &atlas.chart(U).group, &pts, 1e-9)
        .unwrap()
        .accepted()
        .unwrap();
    assert_eq!(w.alpha, vec![0, 1, 2]);
    let h = descend(&w, &atlas, U, &pts, 1e-9).unwrap();
    assert!(h.residual < 1e-9);
    let q = h
        .apply(&OrbitPoint {
            chart: U,
            rep: vec![1.0, 0.0],
        })
        .unwrap();
    assert!(atlas.quotient_distance(&q, &pt(&[1.05, 0.0])).unwrap() < 1e-12);
    assert!(matches!(
        kernel_witness(&h, &pts, 1e-9).unwrap(),
        KernelWitness::NotInKernel(_)
    ));
}

#[test]
fn zero_exponential_is_the_identity_element() {
    let atlas = cone4();
    let b = estimate_budget(&atlas, &OrbifoldMetric::flat(&atlas)).unwrap();
    let lift: Arc<dyn ChartMap<f64>> = Arc::new(DiffeoLift {
        diffeo: exp_section(&Orbisection::zero(&atlas), &b).unwrap(),
        chart: U,
    });
    let pts = samples(2);
    let w = is_weak_equivalence(lift, &atlas.chart(U).group, &pts, 1e-9)
        .unwrap()
        .accepted()
        .unwrap();
    let h = descend(&w, &atlas, U, &pts, 1e-9).unwrap();
    assert_eq!(kernel_witness(&h, &pts, 1e-9).unwrap(), KernelWitness::Element(0));
}
