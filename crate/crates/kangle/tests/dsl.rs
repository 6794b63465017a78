mod common;

use kangle::dsl::{parse_expr, parse_immersion, print_expr, print_immersion, BinOp, Expr, Func};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::{check_fuzz_case, fuzz_input};

fn any_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0usize..4).prop_map(Expr::var),
        (-1e3..1e3f64).prop_map(Expr::num),
        (0u32..100).prop_map(|k| Expr::num(k as f64)),
    ];
    leaf.prop_recursive(6, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (0usize..8, inner.clone()).prop_map(|(f, e)| Expr::func(Func::ALL[f], e)),
            (inner.clone(), 0u32..6).prop_map(|(e, k)| Expr::pow(e, k)),
            (0usize..4, inner.clone(), inner).prop_map(|(op, a, b)| {
                let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][op];
                Expr::bin(op, a, b)
            }),
        ]
    })
}

proptest! {
    #[test]
    fn printed_expressions_parse_back(e in any_expr()) {
        let text = print_expr(&e);
        let back = parse_expr(&text, Some(4)).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn printed_immersions_parse_back(comps in prop::collection::vec(any_expr(), 4), periodic in any::<bool>(), rho in -2.0..2.0f64) {
        let header = if periodic { "periodic; " } else { "" };
        let text = format!(
            "n = 2; ambient = space_form({rho:?}); {header}map = [{}]",
            comps.iter().chain(&comps).map(print_expr).collect::<Vec<_>>().join(", ")
        );
        let spec = parse_immersion(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        let again = parse_immersion(&print_immersion(&spec)).unwrap();
        prop_assert_eq!(again, spec);
    }
}

#[test]
fn fuzzed_inputs_never_panic_and_errors_are_positioned() {
    let mut rng = StdRng::seed_from_u64(11);
    let mut rejected = 0;
    for _ in 0..100_000 {
        let text = fuzz_input(&mut rng);
        rejected += check_fuzz_case(&text).unwrap_or_else(|e| panic!("{e}"));
    }
    assert!(rejected > 100_000);
}

#[test]
fn missing_operand_points_at_the_gap() {
    let err = parse_immersion("n=1;\nambient=flat;\nmap=[u1, u2 +, u1, u2]").unwrap_err();
    assert_eq!((err.line, err.column), (3, 14));
}

#[test]
fn unary_minus_binds_tighter_than_power() {
    let e = parse_expr("-u1^2", Some(1)).unwrap();
    assert_eq!(e.eval_f64(&[3.0]), 9.0);
    let e = parse_expr("-(u1^2)", Some(1)).unwrap();
    assert_eq!(e.eval_f64(&[3.0]), -9.0);
}
