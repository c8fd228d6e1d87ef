use std::sync::Arc;

use contactum_core::brackets::{
    bracket, classify, dirac_jacobi_bracket, BracketContext, Classification,
};
use contactum_core::expr::{ChartSpec, ScalarField};
use contactum_core::function::{function, FunctionRef};
use contactum_core::geometry::contact_hamiltonian_vf;
use proptest::prelude::*;

const NAMES: [&str; 5] = ["q1", "q2", "p1", "p2", "z"];

fn monomials() -> Vec<String> {
    let mut out = vec!["1".to_string()];
    for (i, a) in NAMES.iter().enumerate() {
        out.push(a.to_string());
        for b in &NAMES[i..] {
            out.push(format!("{a}*{b}"));
        }
    }
    out
}

fn poly_text(coeffs: &[f64]) -> String {
    monomials()
        .iter()
        .zip(coeffs)
        .map(|(m, c)| format!("({c:.6})*{m}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn parse(text: &str) -> ScalarField {
    ScalarField::parse(text, &ChartSpec::darboux(2).unwrap()).unwrap()
}

fn poly() -> impl Strategy<Value = String> {
    prop::collection::vec(-2.0f64..2.0, 21).prop_map(|c| poly_text(&c))
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 5)
}

fn ctx() -> Arc<BracketContext> {
    Arc::new(BracketContext::canonical(2).unwrap())
}

fn shared_velocity_classification(samples: &[Vec<f64>]) -> Classification {
    let psi = ["p1 - p2", "z - 1", "p1^2/2 + q1 + q2*(z - 2)"]
        .iter()
        .map(|t| function(&parse(t)))
        .collect();
    classify(&ctx(), psi, samples, 1e-8).unwrap()
}

/// A point where every constraint of [`shared_velocity_classification`] vanishes.
fn on_zero_set(q2: f64, p: f64) -> Vec<f64> {
    vec![q2 - 0.5 * p * p, q2, p, p, 1.0]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn jacobi_bracket_axioms(f in poly(), g in poly(), h in poly(), x in point(), a in -3.0f64..3.0) {
        let c = ctx();
        let (f, g, h) = (function(&parse(&f)), function(&parse(&g)), function(&parse(&h)));
        let fg = c.jacobi_bracket(f.as_ref(), g.as_ref(), &x).unwrap();
        let gf = c.jacobi_bracket(g.as_ref(), f.as_ref(), &x).unwrap();
        prop_assert_eq!(fg, -gf);

        let jacobi = c.jacobi_bracket(f.as_ref(), bracket(&c, g.clone(), h.clone()).as_ref(), &x).unwrap()
            + c.jacobi_bracket(g.as_ref(), bracket(&c, h.clone(), f.clone()).as_ref(), &x).unwrap()
            + c.jacobi_bracket(h.as_ref(), bracket(&c, f.clone(), g.clone()).as_ref(), &x).unwrap();
        prop_assert!(jacobi.abs() < 1e-8, "Jacobi residual {}", jacobi);

        let combo = function(&parse(&format!("({}) * {a:.6} + ({})", f.label(), h.label())));
        let lin = c.jacobi_bracket(combo.as_ref(), g.as_ref(), &x).unwrap();
        let expected = a_round(a) * fg + c.jacobi_bracket(h.as_ref(), g.as_ref(), &x).unwrap();
        prop_assert!((lin - expected).abs() <= 1e-12 * (1.0 + expected.abs()) * 10.0, "{} vs {}", lin, expected);
    }

    #[test]
    fn generalized_leibniz_rule(f in poly(), g in poly(), h in poly(), x in point()) {
        let c = ctx();
        let product = function(&parse(&format!("({}) * ({})", f, g)));
        let (f, g, h) = (function(&parse(&f)), function(&parse(&g)), function(&parse(&h)));
        let lhs = c.jacobi_bracket(product.as_ref(), h.as_ref(), &x).unwrap();
        let (fv, gv) = (f.value(&x).unwrap(), g.value(&x).unwrap());
        let rhs = fv * c.jacobi_bracket(g.as_ref(), h.as_ref(), &x).unwrap()
            + gv * c.jacobi_bracket(f.as_ref(), h.as_ref(), &x).unwrap()
            + fv * gv * c.reeb_derivative(h.as_ref(), &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn evolution_is_the_hamiltonian_field(h in poly(), f in poly(), x in point()) {
        let c = ctx();
        let hf = parse(&h);
        let (h, f) = (function(&hf), function(&parse(&f)));
        let xh = contact_hamiltonian_vf(&hf, &x).unwrap();
        let direct: f64 = f.gradient(&x).unwrap().iter().zip(xh.iter()).map(|(a, b)| a * b).sum();
        let via_bracket = c.evolution(h.as_ref(), f.as_ref(), &x).unwrap();
        prop_assert!((direct - via_bracket).abs() < 1e-10);
    }
}

fn a_round(a: f64) -> f64 {
    format!("{a:.6}").parse().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn dirac_jacobi_axioms_on_the_zero_set(
        f in poly(), g in poly(), h in poly(), q2 in -1.0f64..1.0, p in 0.2f64..1.5,
    ) {
        let x = on_zero_set(q2, p);
        let cls = shared_velocity_classification(std::slice::from_ref(&x));
        let (f, g, h): (FunctionRef, FunctionRef, FunctionRef) =
            (function(&parse(&f)), function(&parse(&g)), function(&parse(&h)));
        let fg = cls.dirac_jacobi(f.as_ref(), g.as_ref(), &x).unwrap();
        prop_assert_eq!(fg, -cls.dirac_jacobi(g.as_ref(), f.as_ref(), &x).unwrap());

        let jacobi = cls.dirac_jacobi(f.as_ref(), dirac_jacobi_bracket(&cls, g.clone(), h.clone()).as_ref(), &x).unwrap()
            + cls.dirac_jacobi(g.as_ref(), dirac_jacobi_bracket(&cls, h.clone(), f.clone()).as_ref(), &x).unwrap()
            + cls.dirac_jacobi(h.as_ref(), dirac_jacobi_bracket(&cls, f.clone(), g.clone()).as_ref(), &x).unwrap();
        prop_assert!(jacobi.abs() < 1e-8, "Jacobi residual {}", jacobi);

        let product = function(&parse(&format!("({}) * ({})", f.label(), g.label())));
        let (fv, gv) = (f.value(&x).unwrap(), g.value(&x).unwrap());
        let lhs = cls.dirac_jacobi(product.as_ref(), h.as_ref(), &x).unwrap();
        let rhs = fv * cls.dirac_jacobi(g.as_ref(), h.as_ref(), &x).unwrap()
            + gv * cls.dirac_jacobi(f.as_ref(), h.as_ref(), &x).unwrap()
            + fv * gv * cls.reeb_dj(h.as_ref(), &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn first_class_functions_see_the_same_bracket(f in poly(), q2 in -1.0f64..1.0, p in 0.2f64..1.5) {
        let x = on_zero_set(q2, p);
        let cls = shared_velocity_classification(std::slice::from_ref(&x));
        let c = cls.context().clone();
        let chi = cls.first_class_combos()[0].clone();
        let f = function(&parse(&f));
        let dj = cls.dirac_jacobi(chi.as_ref(), f.as_ref(), &x).unwrap();
        let j = c.jacobi_bracket(chi.as_ref(), f.as_ref(), &x).unwrap();
        prop_assert!((dj - j).abs() < 1e-9);
        prop_assert!((cls.reeb_dj(chi.as_ref(), &x).unwrap() - c.reeb_derivative(chi.as_ref(), &x).unwrap()).abs() < 1e-9);
        for phi in cls.constraints() {
            prop_assert!(c.jacobi_bracket(chi.as_ref(), phi.as_ref(), &x).unwrap().abs() < 1e-9);
        }
    }
}
