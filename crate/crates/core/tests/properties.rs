mod common;

use common::*;
use orbidiff::diffeo::{compose_sections, estimate_budget, exp_section};
use orbidiff::geodesic::{exp_orb, STEP};
use orbidiff::linalg::{add, dist};
use orbidiff::metric::OrbifoldMetric;
use orbidiff::orbifold::ChartId;
use orbidiff::orbisection::{bracket, random_polynomial_section};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const U: ChartId = ChartId(0);

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_representative_is_orbit_invariant(x in coord(), y in coord()) {
        for atlas in [mirror(), cone3(), cone4()] {
            let p = pt(&[x, y]);
            let c = atlas.canonical_representative(&p);
            prop_assert!(atlas.orbit_equal(&p, &pt(&c)));
            for g in atlas.chart(U).group.elements() {
                let q = pt(&g.apply(&[x, y]));
                prop_assert!(atlas.orbit_equal(&p, &q));
                prop_assert!(close(&atlas.canonical_representative(&q), &c, 1e-12));
            }
        }
    }

    #[test]
    fn quotient_distance_is_a_pseudometric(a in coord(), b in coord(), c in coord(), d in coord()) {
        let atlas = cone3();
        let (p, q) = (pt(&[a, b]), pt(&[c, d]));
        let pq = atlas.quotient_distance(&p, &q).unwrap();
        prop_assert!((pq - atlas.quotient_distance(&q, &p).unwrap()).abs() < 1e-12);
        prop_assert!(pq <= dist(&[a, b], &[c, d]) + 1e-12);
        prop_assert!(atlas.quotient_distance(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn flat_exponential_is_translation(x in -3.0..3.0f64, y in -3.0..3.0f64, u in -2.0..2.0f64, v in -2.0..2.0f64) {
        let atlas = trivial(2);
        let q = exp_orb(&atlas, &OrbifoldMetric::flat(&atlas), &tv(&[x, y], &[u, v]), STEP).unwrap();
        prop_assert!(close(&q.rep, &add(&[x, y], &[u, v]), 1e-12));
    }

    #[test]
    fn bracket_is_exactly_antisymmetric(seed in any::<u64>(), degree in 0u32..4) {
        let atlas = cone3();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_polynomial_section(&atlas, U, degree, 0.5, &mut rng).unwrap();
        let t = random_polynomial_section(&atlas, U, 3 - degree, 0.5, &mut rng).unwrap();
        let (st, ts) = (bracket(&s, &t), bracket(&t, &s));
        for x in [[0.3, -0.4], [1.0, 2.0], [-2.5, 0.1]] {
            let (a, b) = (st.eval(U, &x).unwrap(), ts.eval(U, &x).unwrap());
            prop_assert!(a.iter().zip(&b).all(|(p, q)| *p == -*q));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flat_group_law(seed in any::<u64>(), x in -0.8..0.8f64, y in -0.8..0.8f64) {
        let atlas = mirror();
        let b = estimate_budget(&atlas, &OrbifoldMetric::flat(&atlas)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_polynomial_section(&atlas, U, 2, 0.01, &mut rng).unwrap();
        let t = random_polynomial_section(&atlas, U, 2, 0.01, &mut rng).unwrap();
        let (es, et) = (exp_section(&s, &b).unwrap(), exp_section(&t, &b).unwrap());
        let est = exp_section(&compose_sections(&s, &t, &b).unwrap(), &b).unwrap();
        let lhs = es.lift(U, &et.lift(U, &[x, y]).unwrap()).unwrap();
        prop_assert!(dist(&lhs, &est.lift(U, &[x, y]).unwrap()) < 1e-12);
    }
}
