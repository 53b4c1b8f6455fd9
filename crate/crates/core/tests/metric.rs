mod common;

use std::sync::Arc;

use common::*;
use orbidiff::linalg::Mat;
use orbidiff::metric::{
    average_metric, build_partition_of_unity, check_compatibility, check_equivariance, pullback_metric, ChartMap,
    MetricField, OrbifoldMetric,
};
use orbidiff::orbifold::{AffineMap, Atlas, ChangeOfCharts, ChartId, FiniteGroup, GroupElement, OrbifoldChart};
use orbidiff::poly::Polynomial;
use orbidiff::region::Region;

const U: ChartId = ChartId(0);

fn mat_close(a: &Mat<f64>, b: &Mat<f64>, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol
}

#[test]
fn averaging_flat_is_flat() {
    for atlas in [mirror(), cone3(), cone4()] {
        let avg = average_metric(atlas.chart(U), &MetricField::flat(2)).unwrap();
        assert!(mat_close(&avg.tensor(&[0.3, -1.2]).unwrap(), &Mat::identity(2), 1e-15));
    }
}

#[test]
fn averaging_diag_under_rotations_and_reflections() {
    let raw = MetricField::constant(Mat::diag(&[1.0, 2.0]));
    let z4 = average_metric(cone4().chart(U), &raw).unwrap();
    assert!(mat_close(
        &z4.tensor(&[1.0, 1.0]).unwrap(),
        &Mat::diag(&[1.5, 1.5]),
        1e-14
    ));
    let refl = average_metric(mirror().chart(U), &raw).unwrap();
    assert!(mat_close(
        &refl.tensor(&[1.0, 1.0]).unwrap(),
        &Mat::diag(&[1.0, 2.0]),
        1e-14
    ));
}

#[test]
fn equivariance_residuals() {
    let raw = MetricField::constant(Mat::diag(&[1.0, 2.0]));
    let r = check_equivariance(&raw, cone4().chart(U)).unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
    assert!(check_equivariance(&MetricField::flat(2), cone3().chart(U)).unwrap() < 1e-15);
    let avg = average_metric(cone4().chart(U), &raw).unwrap();
    assert!(check_equivariance(&avg, cone4().chart(U)).unwrap() < 1e-9);
    // averaging a non-invariant conformal factor
    let phi = Polynomial::from_terms(2, [(vec![1, 0], 0.1), (vec![0, 2], 0.05)]);
    let avg = average_metric(cone3().chart(U), &MetricField::conformal(phi)).unwrap();
    assert!(check_equivariance(&avg, cone3().chart(U)).unwrap() < 1e-9);
}

fn two_plane_charts(shift: f64) -> Atlas<f64> {
    let c = |name: &str, center: Vec<f64>| {
        OrbifoldChart::new(name, Region::ball(center, 2.0), FiniteGroup::trivial(2), TOL).unwrap()
    };
    let id = GroupElement::new(AffineMap::new(Mat::identity(2), vec![shift, 0.0]), TOL).unwrap();
    let back = GroupElement::new(AffineMap::new(Mat::identity(2), vec![-shift, 0.0]), TOL).unwrap();
    Atlas::new(
        vec![c("A", vec![0.0, 0.0]), c("B", vec![shift + 1.0, 0.0])],
        vec![
            ChangeOfCharts {
                source: ChartId(0),
                target: ChartId(1),
                region: Region::ball(vec![1.0, 0.0], 0.5),
                map: id,
            },
            ChangeOfCharts {
                source: ChartId(1),
                target: ChartId(0),
                region: Region::ball(vec![shift + 1.0, 0.0], 0.5),
                map: back,
            },
        ],
        TOL,
    )
    .unwrap()
}

#[test]
fn compatibility_residuals() {
    let atlas = two_plane_charts(0.0);
    let flat = OrbifoldMetric::flat(&atlas);
    assert!(check_compatibility(&atlas, &flat).unwrap() < 1e-12);
    let mismatched = OrbifoldMetric::new(
        &atlas,
        vec![MetricField::constant(Mat::diag(&[1.0, 2.0])), MetricField::flat(2)],
    )
    .unwrap();
    let r = check_compatibility(&atlas, &mismatched).unwrap();
    assert!((r - 1.0).abs() < 1e-12, "{r}");
    assert!(OrbifoldMetric::validated(
        &atlas,
        vec![MetricField::constant(Mat::diag(&[1.0, 2.0])), MetricField::flat(2)],
        1e-8
    )
    .is_err());
}

#[test]
fn pullback_family_is_compatible() {
    // a conformal metric on A pulled back to B along the inverse change
    let atlas = two_plane_charts(3.0);
    let phi = Polynomial::from_terms(2, [(vec![1, 0], 0.05), (vec![0, 2], 0.02)]);
    let ga = MetricField::conformal(phi);
    let to_a: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::new(Mat::identity(2), vec![-3.0, 0.0]));
    let gb = pullback_metric(to_a, &ga);
    let metric = OrbifoldMetric::new(&atlas, vec![ga, gb]).unwrap();
    assert!(check_compatibility(&atlas, &metric).unwrap() < 1e-8);
}

#[test]
fn pullbacks() {
    let flat = MetricField::flat(2);
    let rot: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::new(Mat::rotation2(0.7), vec![0.0, 0.0]));
    assert!(mat_close(
        &pullback_metric(rot, &flat).tensor(&[1.0, 2.0]).unwrap(),
        &Mat::identity(2),
        1e-15
    ));
    let dbl: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::new(Mat::diag(&[2.0, 2.0]), vec![0.0, 0.0]));
    assert!(mat_close(
        &pullback_metric(dbl, &flat).tensor(&[1.0, 2.0]).unwrap(),
        &Mat::diag(&[4.0, 4.0]),
        1e-15
    ));
    let g = MetricField::constant(Mat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]));
    let id: Arc<dyn ChartMap<f64>> = Arc::new(AffineMap::identity(2));
    assert!(mat_close(
        &pullback_metric(id, &g).tensor(&[0.0, 0.0]).unwrap(),
        &g.tensor(&[0.0, 0.0]).unwrap(),
        0.0
    ));
}

/// Γ^k_ij of e^{2a·x} I in closed form.
fn conformal_linear_christoffel(a: &[f64], i: usize, j: usize, k: usize) -> f64 {
    let delta = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    a[i] * delta(j, k) + a[j] * delta(i, k) - a[k] * delta(i, j)
}

#[test]
fn christoffel_symbols_of_conformal_linear_metric() {
    let a = [0.3, -0.2];
    let g = MetricField::conformal(Polynomial::linear(&a));
    let fd = g.clone().with_finite_differences(1e-5);
    for x in [[0.0, 0.0], [1.0, -0.5], [-2.0, 1.5]] {
        let gamma = g.christoffel(&x).unwrap();
        let gamma_fd = fd.christoffel(&x).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let want = conformal_linear_christoffel(&a, i, j, k);
                    assert!((gamma[k][(i, j)] - want).abs() < 1e-12);
                    assert!((gamma_fd[k][(i, j)] - want).abs() < 1e-8);
                    assert_eq!(gamma[k][(i, j)], gamma[k][(j, i)]);
                }
            }
        }
    }
}

#[test]
fn flat_christoffel_vanishes() {
    let g = MetricField::constant(Mat::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]));
    for m in g.christoffel(&[1.0, 2.0]).unwrap() {
        assert_eq!(m.max_abs(), 0.0);
    }
}

#[test]
fn non_spd_metrics_are_rejected() {
    let bad = MetricField::constant(Mat::diag(&[1.0, -1.0]));
    assert!(bad.check_spd(&[0.0, 0.0]).is_err());
    assert!(average_metric(mirror().chart(U), &bad).is_err());
}

#[test]
fn partition_of_unity_global_chart_is_one() {
    let atlas = cone3();
    let pu = build_partition_of_unity(&atlas).unwrap();
    for x in [[0.0, 0.0], [3.0, -2.0], [-7.0, 6.0]] {
        assert!((pu.sum(U, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pu.value(U, U, &x).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn partition_of_unity_on_two_interval_charts() {
    let s: orbidiff::Scenario64 = orbidiff::fixtures::load("line").unwrap();
    let pu = build_partition_of_unity(&s.atlas).unwrap();
    let a = s.chart("A").unwrap();
    for k in 0..200 {
        let x = -1.98 + 3.96 * k as f64 / 199.0;
        assert!((pu.sum(a, &[x]).unwrap() - 1.0).abs() < 1e-9, "x = {x}");
    }
    for id in s.atlas.chart_ids() {
        assert!(pu.equivariance_residual(id).unwrap() < 1e-9);
    }
    // both charts contribute on the overlap
    let b = s.chart("B").unwrap();
    assert!(pu.value(a, a, &[1.5]).unwrap() > 0.0);
    assert!(pu.value(b, a, &[1.5]).unwrap() > 0.0);
}
