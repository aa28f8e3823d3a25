use super::*;
use crate::taylor::evaluate_jet;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn eval_str(src: &str) -> f64 {
    Expr::parse(src, &VarContext::default()).unwrap().evaluate(&Bindings::default()).unwrap()
}

#[test]
fn precedence_conformance() {
    assert_eq!(eval_str("2+3*4"), 14.0);
    assert_eq!(eval_str("2^3^2"), 512.0);
    assert_eq!(eval_str("-2^2"), -4.0);
    assert_eq!(eval_str("(-2)^2"), 4.0);
    assert_eq!(eval_str("2*-3"), -6.0);
    assert_eq!(eval_str("8/4/2"), 1.0);
    assert_eq!(eval_str("2^-1"), 0.5);
    assert_eq!(eval_str("pow(2, 10)"), 1024.0);
    assert_eq!(eval_str("1.5e2 + .5"), 150.5);
}

#[test]
fn randers_expression_parses() {
    let e = Expr::parse("sqrt(y1^2 + y2^2) + 0.1*y1", &VarContext::finsler(2)).unwrap();
    let v = e.evaluate(&Bindings { y: &[3.0, 4.0], ..Bindings::default() }).unwrap();
    assert_relative_eq!(v, 5.3, epsilon = 1e-15);
}

#[test]
fn unclosed_paren_reports_position() {
    let err = Expr::parse("sqrt(y1^2", &VarContext::finsler(2)).unwrap_err();
    match err {
        ParseError::Syntax { position, expected, .. } => {
            assert_eq!(position, 10);
            assert_eq!(expected, vec!["')'".to_string()]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn fiber_expression_evaluates() {
    let e = Expr::parse("2*x1 + exp(-t1^2)", &VarContext::fiber(1, 1)).unwrap();
    let v = e.evaluate(&Bindings { x: &[1.0], t: &[0.0], ..Bindings::default() }).unwrap();
    // 2·1 + e^0
    assert_eq!(v, 3.0);
}

#[test]
fn rejects_unknown_and_out_of_range() {
    let ctx = VarContext::finsler(2);
    assert!(matches!(Expr::parse("z1 + 1", &ctx), Err(ParseError::UnknownIdentifier { .. })));
    assert!(matches!(Expr::parse("y3", &ctx), Err(ParseError::VariableOutOfRange { declared: 2, .. })));
    assert!(matches!(Expr::parse("t1", &ctx), Err(ParseError::VariableOutOfRange { declared: 0, .. })));
    assert!(matches!(Expr::parse("x0", &ctx), Err(ParseError::UnknownIdentifier { .. })));
    assert!(matches!(Expr::parse("pow(y1)", &ctx), Err(ParseError::Arity { expected: 2, got: 1, .. })));
    assert!(matches!(Expr::parse("sin(y1, y2)", &ctx), Err(ParseError::Arity { .. })));
    assert!(matches!(Expr::parse("y1 y2", &ctx), Err(ParseError::Syntax { position: 4, .. })));
    assert!(matches!(Expr::parse("", &ctx), Err(ParseError::Syntax { position: 1, .. })));
    assert!(matches!(Expr::parse("y1 # 2", &ctx), Err(ParseError::Syntax { position: 4, .. })));
}

#[test]
fn simple_evaluation() {
    let e = Expr::parse("y1+y2", &VarContext::finsler(2)).unwrap();
    assert_eq!(e.evaluate(&Bindings { y: &[1.0, 2.0], ..Bindings::default() }).unwrap(), 3.0);
    let unbound = e.evaluate(&Bindings::default()).unwrap_err();
    assert_eq!(unbound, EvalError::Unbound(Var::Y(0)));
}

#[test]
fn norm_jet() {
    let e = Expr::parse("sqrt(y1^2+y2^2)", &VarContext::finsler(2)).unwrap();
    let y = Jet::seed(&[3.0, 4.0], 2);
    let v = e.evaluate_jet(&Bindings { y: &y, ..Bindings::default() }).unwrap();
    assert_relative_eq!(v.value(), 5.0, epsilon = 1e-15);
    // ∂/∂y1 √(y1²+y2²) = y1/|y| = 3/5
    assert_relative_eq!(v.first(0), 0.6, epsilon = 1e-15);
    // ∂²/∂y1² = y2²/|y|³ = 16/125
    assert_relative_eq!(v.second(0, 0), 16.0 / 125.0, epsilon = 1e-15);
}

#[test]
fn domain_errors_carry_location() {
    let e = Expr::parse("y1/(x1-x1)", &VarContext::finsler(1)).unwrap();
    let err = e.evaluate(&Bindings { x: &[2.0], y: &[1.0], ..Bindings::default() }).unwrap_err();
    match err {
        EvalError::Domain { what, span, .. } => {
            assert_eq!(what, "division by zero");
            assert_eq!((span.start, span.end), (0, 10));
        }
        other => panic!("unexpected {other:?}"),
    }
    let e = Expr::parse("1 + log(x1)", &VarContext::finsler(1)).unwrap();
    let err = e.evaluate(&Bindings { x: &[-1.0], ..Bindings::default() }).unwrap_err();
    assert!(matches!(err, EvalError::Domain { span: Span { start: 4, end: 11 }, .. }));
    let e = Expr::parse("sqrt(x1)", &VarContext::finsler(1)).unwrap();
    assert!(e.evaluate(&Bindings { x: &[-1.0], ..Bindings::default() }).is_err());
    let e = Expr::parse("x1^0.5", &VarContext::finsler(1)).unwrap();
    assert!(e.evaluate(&Bindings { x: &[-1.0], ..Bindings::default() }).is_err());
}

#[test]
fn abs_is_flagged() {
    let ctx = VarContext::finsler(2);
    assert!(Expr::parse("abs(y1) + abs(y2)", &ctx).unwrap().uses_abs());
    assert!(!Expr::parse("sqrt(y1^2 + y2^2)", &ctx).unwrap().uses_abs());
}

#[test]
fn parsed_finsler_matches_catalog() {
    let parsed = finsler_from_expr("sqrt(y1^2 + exp(2*x1)*y2^2) + 0.1*y1 + 0.2*y2", 2).unwrap();
    let catalog = crate::finsler::Catalog::RandersGeneral { b: vec![0.1, 0.2] }.build().unwrap();
    let x = [0.3, -0.2];
    let y = [0.4, 1.1];
    let a = crate::finsler::chern_coefficients(&parsed, &x, &y).unwrap();
    let b = crate::finsler::chern_coefficients(&catalog, &x, &y).unwrap();
    assert!(a.gamma.sub(&b.gamma).max_abs() < 1e-13);
}

#[test]
fn parsed_finsler_on_a_coordinate_axis() {
    // y2 = 0 makes y2^2 a square of zero
    let parsed = finsler_from_expr("sqrt(y1^2 + y2^2) + 0.1*y1", 2).unwrap();
    let catalog = crate::finsler::Catalog::RandersFlat { b: vec![0.1, 0.0] }.build().unwrap();
    let x = [0.5, 0.0];
    let y = [0.9, 0.0];
    let a = crate::finsler::chern_coefficients(&parsed, &x, &y).unwrap();
    let b = crate::finsler::chern_coefficients(&catalog, &x, &y).unwrap();
    assert!(a.gamma.sub(&b.gamma).max_abs() < 1e-13);
}

// Random expressions over x1, x2, t1 that stay finite near the sample box.
fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.1f64..5.0).prop_map(|v| Expr::new(ExprKind::Num((v * 1000.0).round() / 1000.0))),
        (0usize..2).prop_map(|i| Expr::new(ExprKind::Var(Var::X(i)))),
        Just(Expr::new(ExprKind::Var(Var::T(0)))),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::new(ExprKind::Neg(Box::new(e)))),
            (inner.clone(), inner.clone(), prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul)])
                .prop_map(|(a, b, op)| Expr::new(ExprKind::Binary(op, Box::new(a), Box::new(b)))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                // a / (1 + b²) never divides by zero
                let one = Expr::new(ExprKind::Num(1.0));
                let sq = Expr::new(ExprKind::Binary(BinOp::Pow, Box::new(b), Box::new(Expr::new(ExprKind::Num(2.0)))));
                let den = Expr::new(ExprKind::Binary(BinOp::Add, Box::new(one), Box::new(sq)));
                Expr::new(ExprKind::Binary(BinOp::Div, Box::new(a), Box::new(den)))
            }),
            inner.clone().prop_map(|e| Expr::new(ExprKind::Call(Func::Sin, vec![e]))),
            inner.clone().prop_map(|e| Expr::new(ExprKind::Call(Func::Cos, vec![e]))),
            inner.prop_map(|e| {
                let one = Expr::new(ExprKind::Num(1.0));
                let sq = Expr::new(ExprKind::Binary(BinOp::Mul, Box::new(e.clone()), Box::new(e)));
                Expr::new(ExprKind::Call(
                    Func::Sqrt,
                    vec![Expr::new(ExprKind::Binary(BinOp::Add, Box::new(one), Box::new(sq)))],
                ))
            }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn print_parse_round_trip(e in arb_expr(), samples in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 100)) {
        let ctx = VarContext::fiber(2, 1);
        let printed = e.to_string();
        let reparsed = Expr::parse(&printed, &ctx).unwrap();
        prop_assert_eq!(reparsed.to_string(), printed.clone());
        for (a, b, c) in samples {
            let bind = Bindings { x: &[a, b], t: &[c], ..Bindings::default() };
            let v1 = e.evaluate(&bind).unwrap();
            let v2 = reparsed.evaluate(&bind).unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-12 * v1.abs().max(1.0), "{} vs {} for {}", v1, v2, printed);
        }
    }

    #[test]
    fn parsed_jets_match_finite_differences(e in arb_expr(), a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let field = ExprField::new(e, Layout::Fiber { n: 2, k: 1 });
        let p = [a, b, c];
        let jet = evaluate_jet(&field, &p, 1).unwrap();
        for i in 0..3 {
            let h = 1e-5;
            let mut plus = p;
            let mut minus = p;
            plus[i] += h;
            minus[i] -= h;
            let fd = (field.eval_f64(&plus).unwrap() - field.eval_f64(&minus).unwrap()) / (2.0 * h);
            prop_assert!((jet.first(i) - fd).abs() <= 1e-6 * jet.first(i).abs().max(1.0),
                "d/dv{}: jet {} vs fd {}", i, jet.first(i), fd);
        }
    }
}
