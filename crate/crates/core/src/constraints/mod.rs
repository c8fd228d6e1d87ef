//! The precontact constraint algorithm.
//!
//! Starting from a structure, a Hamiltonian and optional closed-form
//! constraints, each level intersects the current set with the zero set of
//! `<gamma_H, w>` for `w` in the complement of its tangent space. Generated
//! constraints are evaluated through Taylor jets: the null vectors of the
//! complement matrix come from an elimination whose pivot order is fixed once
//! at a reference seed, so they are smooth functions of the point.

mod algorithm;
mod system;

pub use algorithm::{
    run_algorithm, run_algorithm_reeb_variant, ConstraintReport, ConstraintTower, LevelReport,
    LocalData, MotionSolution, Outcome, RunConfig, SampleCertificate, TowerConstraint, TowerReport,
    Variant,
};
pub use system::{
    ComplementGroup, ConstraintDef, ConstraintKind, ConstraintSystem, UserConstraint,
};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::expr::ScalarField;
use crate::geometry::PrecontactStructure;
use crate::linalg::{self, PivotFrame};

/// Orthonormal basis of `{w : <flat(v), w> = 0 for all v in span(delta)}`.
pub fn orth_complement(
    structure: &PrecontactStructure,
    x: &[f64],
    delta: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<DMatrix<f64>> {
    let b = structure.at(x, rank_tol)?.flat;
    if delta.ncols() == 0 {
        return Ok(DMatrix::identity(b.nrows(), b.nrows()));
    }
    let scale = b.norm() * delta.norm();
    Ok(linalg::null_space_scaled(
        &(b * delta).transpose(),
        rank_tol,
        scale,
    ))
}

/// Orthonormal basis of `{w : <flat(w), v> = 0 for all v in span(delta)}`.
pub fn left_complement(
    structure: &PrecontactStructure,
    x: &[f64],
    delta: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<DMatrix<f64>> {
    let b = structure.at(x, rank_tol)?.flat;
    if delta.ncols() == 0 {
        return Ok(DMatrix::identity(b.nrows(), b.nrows()));
    }
    let scale = b.norm() * delta.norm();
    Ok(linalg::null_space_scaled(
        &(delta.transpose() * b),
        rank_tol,
        scale,
    ))
}

/// Basis of the characteristic distribution from a pivot frame on `flat^T`.
/// Each vector has a unit entry at its free column and its first nonzero entry positive.
pub fn characteristic_frame(
    structure: &PrecontactStructure,
    x: &[f64],
    rank_tol: f64,
) -> Result<Vec<DVector<f64>>> {
    let bt = structure.at(x, rank_tol)?.flat.transpose();
    let frame = PivotFrame::from_matrix(&bt, linalg::numerical_rank(&bt, rank_tol));
    let rows: Vec<Vec<f64>> = (0..bt.nrows())
        .map(|i| bt.row(i).iter().copied().collect())
        .collect();
    Ok(frame
        .null_basis(&rows)?
        .into_iter()
        .map(|v| {
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            let lead = v
                .iter()
                .find(|c| c.abs() > 1e-9 * n)
                .copied()
                .unwrap_or(1.0);
            DVector::from_vec(v) * lead.signum()
        })
        .collect())
}

/// Values `<gamma_H, X_a>` over the frame of [`characteristic_frame`]; equal to `X_a(H)`.
pub fn primary_constraints(
    structure: &PrecontactStructure,
    h: &ScalarField,
    x: &[f64],
    rank_tol: f64,
) -> Result<Vec<f64>> {
    let dh = DVector::from_vec(h.eval_jet(x, 1)?.gradient);
    Ok(characteristic_frame(structure, x, rank_tol)?
        .iter()
        .map(|v| v.dot(&dh))
        .collect())
}
