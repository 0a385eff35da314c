mod common;

use std::sync::Arc;

use chaosvws_core::chaos::{expectation, wick_product, ChaosField, CoefficientNorm};
use chaosvws_core::grid::{GridFunction, GridSpec};
use chaosvws_core::multiindex::{MultiIndex, TruncationSet};
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec::new(-2.0, 2.0, 9, 1.0, 2).unwrap()
}

fn field(values: &[(f64, f64)], t: &Arc<TruncationSet>) -> ChaosField {
    let g = grid();
    let mut f = ChaosField::zeros(g, t.clone(), CoefficientNorm::L2InX, false);
    for (gamma, &(a, c)) in t.members().iter().zip(values) {
        f.insert(
            gamma.clone(),
            GridFunction::from_fn_space(&g, |x| a * (-(x - c) * (x - c)).exp()),
        )
        .unwrap();
    }
    f
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -1.0f64..1.0), n)
}

fn diff(a: &ChaosField, b: &ChaosField) -> f64 {
    a.truncation()
        .members()
        .iter()
        .map(|g| common::max_abs_diff(&a.coefficient_or_zero(g), &b.coefficient_or_zero(g)))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn commutative_and_associative(u in coeffs(10), v in coeffs(10), w in coeffs(10)) {
        let t = Arc::new(TruncationSet::enumerate(3, 2).unwrap());
        let (u, v, w) = (field(&u, &t), field(&v, &t), field(&w, &t));
        let p = |a: &ChaosField, b: &ChaosField| wick_product(a, b).unwrap().field;
        prop_assert!(diff(&p(&u, &v), &p(&v, &u)) <= 1e-12);
        prop_assert!(diff(&p(&p(&u, &v), &w), &p(&u, &p(&v, &w))) <= 1e-12);
    }

    #[test]
    fn expectation_is_multiplicative(u in coeffs(10), v in coeffs(10)) {
        let t = Arc::new(TruncationSet::enumerate(3, 2).unwrap());
        let (u, v) = (field(&u, &t), field(&v, &t));
        let e = expectation(&wick_product(&u, &v).unwrap().field);
        let want = expectation(&u).product(&expectation(&v)).unwrap();
        prop_assert!(common::max_abs_diff(&e, &want) <= 1e-12);
    }

    #[test]
    fn dropped_mass_vanishes_only_for_closed_products(u in coeffs(6), v in coeffs(6)) {
        let t = Arc::new(TruncationSet::enumerate(2, 2).unwrap());
        let (u, v) = (field(&u, &t), field(&v, &t));
        let wp = wick_product(&u, &v).unwrap();
        prop_assert!(wp.dropped_mass >= 0.0);
        let only0 = u.restrict(Arc::new(TruncationSet::enumerate(2, 0).unwrap())).unwrap();
        let u0 = ChaosField::zeros(grid(), t.clone(), CoefficientNorm::L2InX, false)
            .with(MultiIndex::zero(), only0.coefficient_or_zero(&MultiIndex::zero()))
            .unwrap();
        prop_assert_eq!(wick_product(&u0, &v).unwrap().dropped_mass, 0.0);
    }
}

#[test]
fn mismatched_truncations_are_rejected() {
    let a = Arc::new(TruncationSet::enumerate(2, 2).unwrap());
    let b = Arc::new(TruncationSet::enumerate(3, 2).unwrap());
    let u = ChaosField::zeros(grid(), a, CoefficientNorm::L2InX, false);
    let v = ChaosField::zeros(grid(), b, CoefficientNorm::L2InX, false);
    assert!(wick_product(&u, &v).is_err());
}
