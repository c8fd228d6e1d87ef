use contactum_core::dynamics::{integrate_contact, integrate_herglotz, observed_order};
use contactum_core::expr::{ChartSpec, ScalarField};
use contactum_core::lagrangian::LagrangianSystem;
use proptest::prelude::*;

fn damped_hamiltonian() -> ScalarField {
    ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", &ChartSpec::darboux(1).unwrap()).unwrap()
}

fn damped_lagrangian() -> LagrangianSystem {
    let chart = ChartSpec::tangent(1).unwrap();
    LagrangianSystem::new(ScalarField::parse("qdot^2/2 - q^2/2 - 0.1*z", &chart).unwrap()).unwrap()
}

/// Largest per-step defect of `d(ln H)/dt = -dH/dz` for the damped oscillator.
fn dissipation_defect(dt: f64) -> f64 {
    let tr = integrate_contact(&damped_hamiltonian(), &[1.0, 2.0, 0.0], 1.0, dt).unwrap();
    tr.diagnostics
        .windows(2)
        .zip(tr.times.windows(2))
        .map(|(d, t)| ((d[1].hamiltonian.ln() - d[0].hamiltonian.ln()) / (t[1] - t[0]) + 0.1).abs())
        .fold(0.0, f64::max)
}

#[test]
fn dissipation_law_holds_per_step_to_fourth_order() {
    for dt in [0.2, 0.1, 0.05, 0.025] {
        let defect = dissipation_defect(dt);
        assert!(defect < 1e-2 * dt.powi(4), "dt {dt}: {defect}");
    }
}

#[test]
fn herglotz_integrator_is_fourth_order() {
    let sys = damped_lagrangian();
    let order = observed_order(
        |dt| {
            Ok(integrate_herglotz(&sys, &[1.0], &[2.0], 0.0, 1.0, dt)?
                .last()
                .to_vec())
        },
        0.1,
    )
    .unwrap();
    assert!((3.5..=4.5).contains(&order), "{order}");
}

#[test]
fn contact_integrator_is_fourth_order_on_a_nonlinear_system() {
    let h = ScalarField::parse(
        "p1^2/2 + p2^2/2 + sin(q1)*q2 + 0.2*z*p1",
        &ChartSpec::darboux(2).unwrap(),
    )
    .unwrap();
    let x0 = [0.3, -0.2, 0.5, 0.1, 0.0];
    let order = observed_order(
        |dt| Ok(integrate_contact(&h, &x0, 1.0, dt)?.last().to_vec()),
        0.1,
    )
    .unwrap();
    assert!((3.5..=4.5).contains(&order), "{order}");
}

fn quadratic_hamiltonian() -> impl Strategy<Value = String> {
    let names = ["q1", "q2", "p1", "p2", "z"];
    prop::collection::vec(-1.0f64..1.0, 15).prop_map(move |c| {
        let mut terms = Vec::new();
        let mut k = 0;
        for i in 0..5 {
            for j in i..5 {
                terms.push(format!("({:.6})*{}*{}", c[k], names[i], names[j]));
                k += 1;
            }
        }
        terms.join(" + ")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn contraction_with_eta_is_minus_h_at_every_step(
        text in quadratic_hamiltonian(),
        x0 in prop::collection::vec(-0.5f64..0.5, 5),
    ) {
        let h = ScalarField::parse(&text, &ChartSpec::darboux(2).unwrap()).unwrap();
        let tr = integrate_contact(&h, &x0, 0.5, 0.05).unwrap();
        for d in &tr.diagnostics {
            prop_assert!((d.eta_x + d.hamiltonian).abs() < 1e-9);
        }
    }

    #[test]
    fn legendre_transform_intertwines_the_flows(q0 in -1.0f64..1.0, v0 in -1.0f64..1.0, c in -1.0f64..1.0) {
        let lag = integrate_herglotz(&damped_lagrangian(), &[q0], &[v0], c, 1.0, 1e-3).unwrap();
        let ham = integrate_contact(&damped_hamiltonian(), &[q0, v0, c], 1.0, 1e-3).unwrap();
        let image = damped_lagrangian().legendre(lag.last()).unwrap().target;
        let gap = image.iter().zip(ham.last()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(gap < 1e-6);
    }
}
