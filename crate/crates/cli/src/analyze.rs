//! The `analyze` command: structure class, constraint tower, brackets.

use std::sync::Arc;

use contactum_core::brackets::{
    bracket_table, classify, BracketContext, BracketKind, BracketTable, Classification,
};
use contactum_core::constraints::{
    run_algorithm, run_algorithm_reeb_variant, ConstraintTower, Outcome, TowerReport,
};
use contactum_core::error::Error;
use contactum_core::function::{function, FunctionRef};
use contactum_core::geometry::form_class;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, ConfigError, LoadedSystem, SystemConfig, SCHEMA};
use crate::output::{emit, to_json};
use crate::{AnalyzeArgs, Failure, VariantArg, EXIT_EMPTY, EXIT_OK, EXIT_RANK};

/// Largest `|Z(R(H))|` accepted as Reeb tangency.
pub const TANGENCY_TOL: f64 = 1e-6;
/// Solvability threshold of the motion solve.
pub const SOLVABILITY_TOL: f64 = 1e-8;
/// Size of the random offsets applied before projecting samples back.
pub const PERTURBATION: f64 = 1e-3;
/// Samples used in bracket tables and C-matrix listings.
pub const TABLE_SAMPLES: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct StructureSummary {
    pub dim: usize,
    pub class: usize,
    pub contact: bool,
    pub rank_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReebTangency {
    pub value: f64,
    pub tolerance: f64,
    pub reeb_tangent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatrixSample {
    pub point: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationSummary {
    pub constraints: Vec<String>,
    pub second_class: Vec<String>,
    pub first_class: Vec<String>,
    pub rank: usize,
    pub rank_tol: f64,
    /// Largest bracket of a first class combination with any constraint, over the samples.
    pub first_class_defect: f64,
    pub c_matrix_samples: Vec<MatrixSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationPoint {
    pub start: Vec<f64>,
    pub projected: Option<Vec<f64>>,
    pub membership: Option<f64>,
    pub solvability_residual: Option<f64>,
    pub tangency_defect: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Validation {
    pub perturbation: f64,
    pub membership_tol: f64,
    pub solvability_tol: f64,
    pub tangency_tol: f64,
    pub points: Vec<ValidationPoint>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub seed: u64,
    pub variant: String,
    pub system: SystemConfig,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub structure: Option<StructureSummary>,
    pub tower: Option<TowerReport>,
    pub reeb_tangency: Option<ReebTangency>,
    pub classification: Option<ClassificationSummary>,
    pub notes: Vec<String>,
    pub bracket_tables: Vec<BracketTable>,
    pub validation: Option<Validation>,
}

impl AnalysisReport {
    fn fail(mut self, status: &str, code: i32, e: impl std::fmt::Display) -> AnalysisReport {
        self.status = status.into();
        self.exit_code = code;
        self.error = Some(e.to_string());
        self
    }
}

fn failure_status(e: &Error) -> &'static str {
    match e {
        Error::RankNotConstant { .. } | Error::NotOdd(_) => "rank_failure",
        _ => "numerical_failure",
    }
}

pub fn run(args: &AnalyzeArgs) -> Result<i32, Failure> {
    let mut sys = config::load_path(&args.config)?;
    sys.override_tolerances(args.tolerances.rank_tol, args.tolerances.fd_step)?;
    let report = analyze(&sys, args.variant, args.seed)?;
    emit(args.out.as_deref(), &to_json(&report))?;
    if let Some(e) = &report.error {
        eprintln!("analysis stopped: {e}");
    }
    Ok(report.exit_code)
}

/// Run the whole analysis. Numerical failures end up in the report, not in the error.
pub fn analyze(
    sys: &LoadedSystem,
    variant: VariantArg,
    seed: u64,
) -> Result<AnalysisReport, ConfigError> {
    let seeds = &sys.config.seeds;
    if seeds.is_empty() {
        return Err(ConfigError::field(
            "seeds",
            "analyze needs at least one seed point",
        ));
    }
    let rank_tol = sys.config.tolerances.rank_tol;
    let mut report = AnalysisReport {
        schema: SCHEMA,
        seed,
        variant: match variant {
            VariantArg::Plain => "plain".into(),
            VariantArg::Reeb => "reeb".into(),
        },
        system: sys.config.clone(),
        status: "stabilized".into(),
        exit_code: EXIT_OK,
        error: None,
        structure: None,
        tower: None,
        reeb_tangency: None,
        classification: None,
        notes: Vec::new(),
        bracket_tables: Vec::new(),
        validation: None,
    };
    let structure = sys.structure();
    let class = match form_class(structure, seeds, rank_tol) {
        Ok(c) => c,
        Err(e) => return Ok(report.fail(failure_status(&e), EXIT_RANK, e)),
    };
    let contact = class == structure.dim();
    report.structure = Some(StructureSummary {
        dim: structure.dim(),
        class,
        contact,
        rank_tol,
    });

    let csys = sys.constraint_system();
    let run_cfg = sys.run_config();
    let tower = match variant {
        VariantArg::Plain => run_algorithm(&csys, seeds, &run_cfg),
        VariantArg::Reeb => run_algorithm_reeb_variant(&csys, seeds, &run_cfg),
    };
    let tower = match tower {
        Ok(t) => Arc::new(t),
        Err(e) => return Ok(report.fail(failure_status(&e), EXIT_RANK, e)),
    };
    match tower.report() {
        Ok(r) => report.tower = Some(r),
        Err(e) => return Ok(report.fail(failure_status(&e), EXIT_RANK, e)),
    }
    if let Outcome::Empty { level, reason, .. } = tower.outcome() {
        report.status = "empty".into();
        report.exit_code = EXIT_EMPTY;
        report.error = Some(format!(
            "final constraint set is empty at level {level}: {reason}"
        ));
        return Ok(report);
    }

    let samples = tower.samples().to_vec();
    match tower.reeb_tangency_test(&samples) {
        Ok(value) => {
            report.reeb_tangency = Some(ReebTangency {
                value,
                tolerance: TANGENCY_TOL,
                reeb_tangent: value < TANGENCY_TOL,
            })
        }
        Err(e) => report.notes.push(format!("Reeb tangency test failed: {e}")),
    }
    if contact {
        brackets(sys, &tower, &samples, rank_tol, &mut report);
    } else {
        report.notes.push(format!(
            "brackets and classification need a contact structure; class {class} is below dimension {}",
            structure.dim()
        ));
    }
    let validation = validate(&tower, &samples, seed, sys.config.tolerances.residual_tol);
    report.validation = Some(validation);
    Ok(report)
}

fn brackets(
    sys: &LoadedSystem,
    tower: &Arc<ConstraintTower>,
    samples: &[Vec<f64>],
    rank_tol: f64,
    report: &mut AnalysisReport,
) {
    let ctx = Arc::new(BracketContext::new(sys.structure().clone()));
    let table_points = &samples[..samples.len().min(TABLE_SAMPLES)];
    let observables: Vec<(String, FunctionRef)> = sys
        .observables
        .iter()
        .map(|(name, f)| (name.clone(), function(f)))
        .collect();
    match bracket_table(&ctx, BracketKind::Jacobi, &observables, table_points) {
        Ok(t) => report.bracket_tables.push(t),
        Err(e) => report
            .notes
            .push(format!("Jacobi bracket table failed: {e}")),
    }
    let ids: Vec<String> = tower.constraints().iter().map(|c| c.id.clone()).collect();
    if ids.is_empty() {
        report.notes.push("no constraints to classify".into());
        return;
    }
    let cls = match classify(&ctx, tower.constraint_functions(), samples, rank_tol) {
        Ok(c) => c,
        Err(e) => {
            report.notes.push(format!("classification failed: {e}"));
            return;
        }
    };
    report.classification = Some(summarize(&cls, &ids, table_points, rank_tol));
    match bracket_table(
        &ctx,
        BracketKind::DiracJacobi(&cls),
        &observables,
        table_points,
    ) {
        Ok(t) => report.bracket_tables.push(t),
        Err(e) => report
            .notes
            .push(format!("Dirac-Jacobi bracket table failed: {e}")),
    }
}

pub fn summarize(
    cls: &Classification,
    ids: &[String],
    points: &[Vec<f64>],
    rank_tol: f64,
) -> ClassificationSummary {
    let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect();
    ClassificationSummary {
        constraints: ids.to_vec(),
        second_class: pick(cls.second_class()),
        first_class: pick(cls.first_class()),
        rank: cls.rank(),
        rank_tol,
        first_class_defect: cls.first_class_defect(),
        c_matrix_samples: points
            .iter()
            .filter_map(|x| {
                let m = cls.c_matrix(x).ok()?;
                Some(MatrixSample {
                    point: x.clone(),
                    matrix: (0..m.nrows())
                        .map(|i| m.row(i).iter().copied().collect())
                        .collect(),
                })
            })
            .collect(),
    }
}

/// Perturb each sample, project it back and re-solve the equations of motion there.
pub fn validate(
    tower: &ConstraintTower,
    samples: &[Vec<f64>],
    seed: u64,
    membership_tol: f64,
) -> Validation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| {
            x.iter()
                .map(|c| c + PERTURBATION * rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let points: Vec<ValidationPoint> = starts
        .into_par_iter()
        .map(|start| {
            let mut point = ValidationPoint {
                start,
                projected: None,
                membership: None,
                solvability_residual: None,
                tangency_defect: None,
                error: None,
            };
            let Some(y) = tower.project(&point.start) else {
                point.error = Some("projection did not converge".into());
                return point;
            };
            match tower
                .membership_defect(&y)
                .and_then(|m| Ok((m, tower.solve_motion(&y)?)))
            {
                Ok((m, sol)) => {
                    point.membership = Some(m);
                    point.solvability_residual = Some(sol.residual);
                    point.tangency_defect = Some(sol.tangency);
                }
                Err(e) => point.error = Some(e.to_string()),
            }
            point.projected = Some(y);
            point
        })
        .collect();
    let passed = points.iter().all(|p| {
        p.error.is_none()
            && p.membership.is_some_and(|v| v < membership_tol)
            && p.solvability_residual.is_some_and(|v| v < SOLVABILITY_TOL)
            && p.tangency_defect.is_some_and(|v| v < TANGENCY_TOL)
    });
    Validation {
        perturbation: PERTURBATION,
        membership_tol,
        solvability_tol: SOLVABILITY_TOL,
        tangency_tol: TANGENCY_TOL,
        points,
        passed,
    }
}
