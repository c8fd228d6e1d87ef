#![allow(dead_code)]

use contactum_core::constraints::ConstraintSystem;
use contactum_core::expr::{ChartSpec, ScalarField};
use contactum_core::geometry::PrecontactStructure;
use contactum_core::lagrangian::LagrangianSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GAMMA: f64 = 0.1;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Two coupled oscillators sharing a velocity, plus a free coordinate.
pub fn coupled_oscillators() -> LagrangianSystem {
    let chart = ChartSpec::tangent(3).unwrap();
    let l = ScalarField::parse(
        "(qdot1 + qdot2)^2/2 + qdot3^2/2 + q1^2 + q2^2/2 + 0.1*z",
        &chart,
    )
    .unwrap();
    LagrangianSystem::new(l).unwrap()
}

/// Shared velocity with a z-dependent potential.
pub fn shared_velocity() -> LagrangianSystem {
    let chart = ChartSpec::tangent(2).unwrap();
    LagrangianSystem::new(ScalarField::parse("0.5*(qdot1 + qdot2)^2 + q1 + q2*z", &chart).unwrap())
        .unwrap()
}

pub fn damped_oscillator() -> LagrangianSystem {
    let chart = ChartSpec::tangent(1).unwrap();
    LagrangianSystem::new(ScalarField::parse("qdot^2/2 - q^2/2 - 0.1*z", &chart).unwrap()).unwrap()
}

pub fn lagrangian_system(sys: &LagrangianSystem) -> ConstraintSystem {
    ConstraintSystem::new(sys.structure().clone(), sys.energy_field().clone()).unwrap()
}

/// Hamiltonian counterpart of [`shared_velocity`] on the image of the Legendre map.
pub fn shared_velocity_hamiltonian() -> ConstraintSystem {
    let st = PrecontactStructure::canonical_contact(2).unwrap();
    let h = ScalarField::parse("p1^2/2 - q1 - q2*z", st.chart()).unwrap();
    let psi = ScalarField::parse("p1 - p2", st.chart()).unwrap();
    ConstraintSystem::new(st, h)
        .unwrap()
        .with_constraint("psi1", 0, psi)
        .unwrap()
}

/// Hamiltonian counterpart of [`coupled_oscillators`].
pub fn coupled_oscillators_hamiltonian() -> ConstraintSystem {
    let st = PrecontactStructure::canonical_contact(3).unwrap();
    let h = ScalarField::parse("p1^2/2 + p3^2/2 - q1^2 - q2^2/2 - 0.1*z", st.chart()).unwrap();
    let psi = ScalarField::parse("p1 - p2", st.chart()).unwrap();
    ConstraintSystem::new(st, h)
        .unwrap()
        .with_constraint("psi1", 0, psi)
        .unwrap()
}

/// Random points of `TQ x R` for [`coupled_oscillators`].
pub fn oscillator_seeds(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..7).map(|_| uniform(rng, -1.0, 1.0)).collect())
        .collect()
}

/// A point of the final set of [`shared_velocity`] with `s = qdot1 + qdot2`.
pub fn shared_velocity_final_point(s: f64, qdot1: f64) -> Vec<f64> {
    let q2 = -2.0 / s;
    let q1 = -0.5 * s * s - q2;
    vec![q1, q2, qdot1, s - qdot1, 1.0]
}

/// Points near the final set of [`shared_velocity`], on the branch `s q2 = -2`.
pub fn shared_velocity_seeds(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let s = uniform(rng, 0.8, 2.0);
            let mut x = shared_velocity_final_point(s, uniform(rng, -1.0, 1.0));
            for c in &mut x {
                *c += uniform(rng, -0.02, 0.02);
            }
            x
        })
        .collect()
}

/// Points near the final set of [`shared_velocity_hamiltonian`].
pub fn shared_velocity_hamiltonian_seeds(rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    shared_velocity_seeds(rng, count)
        .into_iter()
        .map(|x| {
            let s = x[2] + x[3];
            vec![x[0], x[1], s, s + uniform(rng, -0.02, 0.02), x[4]]
        })
        .collect()
}
