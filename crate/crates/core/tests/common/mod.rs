#![allow(dead_code)]

use orbidiff::linalg::Mat;
use orbidiff::orbifold::{Atlas, ChartId, FiniteGroup, GroupElement, OrbifoldChart, OrbitPoint, TangentOrbVector};
use orbidiff::region::Region;

pub const TOL: f64 = 1e-9;

pub fn group(dim: usize, generators: &[Mat<f64>]) -> FiniteGroup<f64> {
    let gens: Vec<_> = generators
        .iter()
        .map(|m| GroupElement::linear(m.clone(), TOL).unwrap())
        .collect();
    FiniteGroup::generated_by(dim, &gens, TOL).unwrap()
}

pub fn global(group: FiniteGroup<f64>, radius: f64) -> Atlas<f64> {
    let d = group.dim();
    let chart = OrbifoldChart::new("U", Region::ball(vec![0.0; d], radius), group, TOL).unwrap();
    Atlas::global(chart, TOL).unwrap()
}

pub fn mirror() -> Atlas<f64> {
    global(group(2, &[Mat::diag(&[-1.0, 1.0])]), 10.0)
}

pub fn cone3() -> Atlas<f64> {
    global(group(2, &[Mat::rotation2(2.0 * std::f64::consts::PI / 3.0)]), 10.0)
}

pub fn cone4() -> Atlas<f64> {
    global(group(2, &[Mat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]])]), 10.0)
}

pub fn line() -> Atlas<f64> {
    global(group(1, &[Mat::diag(&[-1.0])]), 10.0)
}

pub fn trivial(d: usize) -> Atlas<f64> {
    global(FiniteGroup::trivial(d), 10.0)
}

pub fn pt(x: &[f64]) -> OrbitPoint<f64> {
    OrbitPoint {
        chart: ChartId(0),
        rep: x.to_vec(),
    }
}

pub fn tv(x: &[f64], v: &[f64]) -> TangentOrbVector<f64> {
    TangentOrbVector {
        chart: ChartId(0),
        base: x.to_vec(),
        vec: v.to_vec(),
    }
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[track_caller]
pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert!(close(a, b, tol), "{a:?} vs {b:?} (tol {tol:e})");
}
