mod common;

use kangle::dsl::print_expr;
use kangle::jets::{Jet, UnaryFn};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{finite_difference_defect, smooth_expr};

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let nvars = rng.gen_range(1..=4);
        let e = smooth_expr(&mut rng, 4, nvars);
        let p: Vec<f64> = (0..nvars).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let defect = finite_difference_defect(&e, &p);
        assert!(
            defect <= 1e-6,
            "case {case}: {} at {p:?} defect {defect:e}",
            print_expr(&e)
        );
        worst = worst.max(defect);
    }
    println!("worst relative defect over 1000 cases: {worst:e}");
}

fn jet(dim: usize, order: usize) -> impl Strategy<Value = Jet> {
    let len = kangle::jets::layout(dim, order).len();
    prop::collection::vec(-2.0..2.0f64, len)
        .prop_map(move |c| Jet::from_coeffs(dim, order, c).unwrap())
}

fn triple() -> impl Strategy<Value = (Jet, Jet, Jet)> {
    (1usize..=3, 0usize..=4).prop_flat_map(|(d, k)| (jet(d, k), jet(d, k), jet(d, k)))
}

fn close(a: &Jet, b: &Jet, tol: f64) -> bool {
    a.coeffs()
        .iter()
        .zip(b.coeffs())
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn ring_axioms((a, b, c) in triple()) {
        prop_assert_eq!(&a + &b, &b + &a);
        prop_assert!(close(&(&a * &b), &(&b * &a), 1e-15));
        prop_assert!(close(&((&a + &b) + &c), &(&a + &(&b + &c)), 1e-14));
        prop_assert!(close(&((&a * &b) * &c), &(&a * &(&b * &c)), 1e-12));
        prop_assert!(close(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c)), 1e-12));
        let one = Jet::constant(a.dim(), a.order(), 1.0);
        prop_assert_eq!(&a * &one, a.clone());
        prop_assert!(close(&(&a - &a), &Jet::zero(a.dim(), a.order()), 0.0));
    }

    #[test]
    fn division_inverts_multiplication((a, b, _c) in triple()) {
        let b = b.add_scalar(3.0);
        prop_assert!(close(&(&(&a * &b) / &b), &a, 1e-12));
    }

    #[test]
    fn elementary_identities((a, _b, _c) in triple()) {
        let one = Jet::constant(a.dim(), a.order(), 1.0);
        let pythagoras = &a.sin().powi(2) + &a.cos().powi(2);
        prop_assert!(close(&pythagoras, &one, 1e-13));
        let hyper = &a.cosh().powi(2) - &a.sinh().powi(2);
        prop_assert!(close(&hyper, &one, 1e-11));
        let pos = a.add_scalar(3.0);
        prop_assert!(close(&pos.try_log().unwrap().exp(), &pos, 1e-12));
        let r = pos.try_sqrt().unwrap();
        prop_assert!(close(&(&r * &r), &pos, 1e-12));
        prop_assert_eq!(a.unary(UnaryFn::PowInt(3)).unwrap(), a.powi(3));
    }

    #[test]
    fn differentiation_commutes((a, _b, _c) in triple()) {
        prop_assume!(a.order() >= 2 && a.dim() >= 2);
        prop_assert!(close(&a.diff(0).diff(1), &a.diff(1).diff(0), 0.0));
    }

    #[test]
    fn leibniz_rule((a, b, _c) in triple()) {
        prop_assume!(a.order() >= 1);
        for v in 0..a.dim() {
            let lhs = (&a * &b).diff(v);
            let k = a.order() - 1;
            let rhs = &(&a.diff(v) * &b.truncate(k)) + &(&a.truncate(k) * &b.diff(v));
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }
    }
}
