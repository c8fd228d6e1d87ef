use contactum_core::expr::{ChartSpec, ScalarField};
use proptest::prelude::*;

const NAMES: [&str; 5] = ["q1", "q2", "p1", "p2", "z"];

fn chart() -> ChartSpec {
    ChartSpec::darboux(2).unwrap()
}

/// Random smooth expressions that are defined everywhere.
fn expression() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0..NAMES.len()).prop_map(|i| NAMES[i].to_string()),
        (-20i32..20).prop_map(|k| format!("({:.2})", k as f64 / 8.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + cos({b})))")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("exp({a} / 4)")),
            inner.clone().prop_map(|a| format!("ln(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.prop_map(|a| format!("({a})^3")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn partials_match_central_differences(text in expression(), x in point()) {
        let f = ScalarField::parse(&text, &chart()).unwrap();
        let grad = f.eval_jet(&x, 1).unwrap().gradient;
        for i in 0..5 {
            let h = 1e-5 * (1.0 + x[i].abs());
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[i] += h;
            minus[i] -= h;
            let (fp, fm) = (f.eval(&plus).unwrap(), f.eval(&minus).unwrap());
            let fd = (fp - fm) / (2.0 * h);
            // Round-off in the difference quotient grows like eps |f| / h.
            let cancellation = 2.0 * f64::EPSILON * fp.abs().max(fm.abs()) / h;
            let err = ((grad[i] - fd).abs() - cancellation).max(0.0) / (1.0 + grad[i].abs());
            prop_assert!(err < 1e-6, "{text}: d/d{} symbolic {} fd {fd}", NAMES[i], grad[i]);
        }
    }

    #[test]
    fn mixed_partials_are_symmetric(text in expression(), x in point()) {
        let f = ScalarField::parse(&text, &chart()).unwrap();
        let j = f.eval_jet(&x, 3).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                prop_assert_eq!(j.hessian[a][b].to_bits(), j.hessian[b][a].to_bits());
                for c in 0..5 {
                    let v = j.third[a][b][c].to_bits();
                    prop_assert_eq!(v, j.third[b][a][c].to_bits());
                    prop_assert_eq!(v, j.third[c][b][a].to_bits());
                    prop_assert_eq!(v, j.third[a][c][b].to_bits());
                }
            }
        }
    }

    #[test]
    fn printing_round_trips(text in expression(), xs in prop::collection::vec(point(), 50)) {
        let f = ScalarField::parse(&text, &chart()).unwrap();
        let printed = f.to_string();
        let g = ScalarField::parse(&printed, &chart()).unwrap();
        for x in &xs {
            let (a, b) = (f.eval(x).unwrap(), g.eval(x).unwrap());
            prop_assert!((a - b).abs() < 1e-12, "{text} printed as {printed}: {a} vs {b}");
        }
    }
}
