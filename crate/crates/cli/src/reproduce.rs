//! The `reproduce` command: recompute the two worked examples and check every
//! number against its expected value.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use contactum_core::brackets::{
    bracket_table, classify, BracketContext, BracketKind, BracketTable,
};
use contactum_core::constraints::{
    run_algorithm, run_algorithm_reeb_variant, ConstraintTower, Outcome, TowerReport,
};
use contactum_core::error::Result as CoreResult;
use contactum_core::expr::ScalarField;
use contactum_core::function::{function, FunctionRef, SmoothFunction};
use contactum_core::geometry::form_class;
use contactum_core::lagrangian::{sode_deviation, LagrangianSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analyze::{summarize, ClassificationSummary, TABLE_SAMPLES};
use crate::config::{load, parse_config, LoadedSystem, SystemConfig, SCHEMA};
use crate::output::{io_failure, to_json, write_atomic};
use crate::{ExampleId, Failure, ReproduceArgs, EXIT_OK, EXIT_REPRODUCE_FAIL};

pub const COUPLED_OSCILLATORS: &str = include_str!("../configs/coupled_oscillators.json");
pub const COUPLED_OSCILLATORS_HAMILTONIAN: &str =
    include_str!("../configs/coupled_oscillators_hamiltonian.json");
pub const SHARED_VELOCITY: &str = include_str!("../configs/shared_velocity.json");
pub const SHARED_VELOCITY_HAMILTONIAN: &str =
    include_str!("../configs/shared_velocity_hamiltonian.json");

/// Samples per zero-set comparison.
pub const ZERO_SET_SAMPLES: usize = 20;
/// Samples per bracket comparison.
pub const BRACKET_SAMPLES: usize = 10;
pub const MEMBERSHIP_TOL: f64 = 1e-8;
pub const BRACKET_TOL: f64 = 1e-9;
pub const REEB_CONSTANT_TOL: f64 = 1e-9;
pub const TANGENCY_TOL: f64 = 1e-6;
pub const SECOND_ORDER_TOL: f64 = 1e-8;
pub const DEVIATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

/// One checked number.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub table: String,
    pub name: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tolerance: f64,
    pub status: Status,
    /// Property the row checks; the one violated when it fails.
    pub invariant: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub schema: u32,
    pub example: String,
    pub seed: u64,
    pub systems: Vec<SystemConfig>,
    pub passed: usize,
    pub failed: usize,
    pub rows: Vec<Row>,
    pub towers: Vec<TowerReport>,
    pub classification: Option<ClassificationSummary>,
    pub bracket_tables: Vec<BracketTable>,
}

impl Bundle {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} seed {}: {} PASS, {} FAIL\n",
            self.example, self.seed, self.passed, self.failed
        );
        for r in &self.rows {
            let status = match r.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
            };
            let actual = r
                .actual
                .map_or_else(|| "error".to_string(), |a| format!("{a:.12e}"));
            let _ = write!(
                out,
                "{status}  {:<16} {:<52} expected {:.12e}  actual {actual}  tolerance {:.0e}",
                r.table, r.name, r.expected, r.tolerance
            );
            if r.status == Status::Fail {
                let _ = write!(out, "  violates: {}", r.invariant);
                if let Some(e) = &r.error {
                    let _ = write!(out, " ({e})");
                }
            }
            out.push('\n');
        }
        out
    }
}

struct Recorder {
    table: &'static str,
    rows: Vec<Row>,
}

impl Recorder {
    fn new() -> Recorder {
        Recorder {
            table: "",
            rows: Vec::new(),
        }
    }

    fn section(&mut self, table: &'static str) {
        self.table = table;
    }

    fn check(
        &mut self,
        name: &str,
        expected: f64,
        actual: CoreResult<f64>,
        tolerance: f64,
        invariant: &str,
    ) {
        let (actual, error) = match actual {
            Ok(a) => (Some(a), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let pass = actual.is_some_and(|a| a.is_finite() && (a - expected).abs() <= tolerance);
        self.rows.push(Row {
            table: self.table.to_string(),
            name: name.to_string(),
            expected,
            actual,
            tolerance,
            status: if pass { Status::Pass } else { Status::Fail },
            invariant: invariant.to_string(),
            error,
        });
    }

    fn check_flag(&mut self, name: &str, actual: bool, invariant: &str) {
        self.check(
            name,
            1.0,
            Ok(if actual { 1.0 } else { 0.0 }),
            0.0,
            invariant,
        );
    }

    /// Compare over samples and keep the sample with the largest discrepancy.
    fn check_samples<E, A>(
        &mut self,
        name: &str,
        samples: &[Vec<f64>],
        expected: E,
        actual: A,
        tolerance: f64,
        invariant: &str,
    ) where
        E: Fn(&[f64]) -> f64,
        A: Fn(&[f64]) -> CoreResult<f64>,
    {
        let mut worst: Option<(f64, f64)> = None;
        for x in samples {
            let e = expected(x);
            match actual(x) {
                Ok(a) => {
                    let gap = (a - e).abs();
                    if worst.is_none_or(|(we, wa)| gap > (wa - we).abs() || gap.is_nan()) {
                        worst = Some((e, a));
                    }
                }
                Err(err) => return self.check(name, e, Err(err), tolerance, invariant),
            }
        }
        match worst {
            Some((e, a)) => self.check(name, e, Ok(a), tolerance, invariant),
            None => self.check(name, 0.0, Ok(f64::NAN), tolerance, invariant),
        }
    }

    /// Largest absolute value over samples, expected to vanish.
    fn check_vanishes<A>(
        &mut self,
        name: &str,
        samples: &[Vec<f64>],
        actual: A,
        tolerance: f64,
        invariant: &str,
    ) where
        A: Fn(&[f64]) -> CoreResult<f64>,
    {
        self.check_samples(
            name,
            samples,
            |_| 0.0,
            |x| actual(x).map(f64::abs),
            tolerance,
            invariant,
        )
    }

    fn finish(
        self,
        example: ExampleId,
        seed: u64,
        systems: Vec<SystemConfig>,
        extra: Extra,
    ) -> Bundle {
        let failed = self
            .rows
            .iter()
            .filter(|r| r.status == Status::Fail)
            .count();
        Bundle {
            schema: SCHEMA,
            example: example.to_string(),
            seed,
            systems,
            passed: self.rows.len() - failed,
            failed,
            rows: self.rows,
            towers: extra.towers,
            classification: extra.classification,
            bracket_tables: extra.bracket_tables,
        }
    }
}

#[derive(Default)]
struct Extra {
    towers: Vec<TowerReport>,
    classification: Option<ClassificationSummary>,
    bracket_tables: Vec<BracketTable>,
}

pub fn embedded(text: &str) -> LoadedSystem {
    load(parse_config(text).expect("bundled config parses")).expect("bundled config is valid")
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn field(text: &str, sys: &LoadedSystem) -> FunctionRef {
    function(&ScalarField::parse(text, &sys.chart).expect("fixed expression parses"))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn push_report(extra: &mut Extra, tower: &ConstraintTower) {
    if let Ok(r) = tower.report() {
        extra.towers.push(r);
    }
}

/// `max |FL_*(X - S(X) deviation)|` over samples and the free directions of each solution.
fn deviation_lemma(lag: &LagrangianSystem, tower: &ConstraintTower, x: &[f64]) -> CoreResult<f64> {
    let sol = tower.solve_motion(x)?;
    let jac = lag.legendre(x)?.jacobian;
    let mut fields = vec![sol.x.clone()];
    for k in 0..sol.freedom.ncols() {
        fields.push(&sol.x + sol.freedom.column(k) * 0.8);
    }
    let mut worst: f64 = 0.0;
    for v in fields {
        let dev = sode_deviation(lag.chart(), &v, x)?;
        worst = worst.max((&jac * dev).amax());
    }
    Ok(worst)
}

fn second_order_rows(
    rec: &mut Recorder,
    lag: &LagrangianSystem,
    tower: &ConstraintTower,
    points: &[Vec<f64>],
    rank_tol: f64,
) {
    let motion = |p: &[f64]| tower.solve_motion(p).map(|m| m.x);
    rec.check_vanishes(
        "second order defect S(X) - Delta at the lifted point",
        points,
        |x| {
            let y = lag.legendre(x)?.target;
            lag.second_order_section(motion, &y, x, rank_tol)
                .map(|s| s.deviation)
        },
        SECOND_ORDER_TOL,
        "the lifted point carries a second order solution",
    );
    rec.check_vanishes(
        "Legendre image of the lifted point minus y",
        points,
        |x| {
            let y = lag.legendre(x)?.target;
            let s = lag.second_order_section(motion, &y, x, rank_tol)?;
            let image = lag.legendre(&s.point)?.target;
            Ok(image
                .iter()
                .zip(&y)
                .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
        },
        SECOND_ORDER_TOL,
        "the lifted point stays in the Legendre fiber",
    );
    rec.check_vanishes(
        "Legendre pushforward of the second order deviation",
        tower.samples(),
        |x| deviation_lemma(lag, tower, x),
        DEVIATION_TOL,
        "deviations of solutions from second order lie in the kernel of the Legendre map",
    );
}

/// Recompute one example. Numerical failures become FAIL rows.
pub fn reproduce(example: ExampleId, seed: u64) -> Bundle {
    match example {
        ExampleId::Example1 => coupled_oscillators(seed),
        ExampleId::Example2 => shared_velocity(seed),
    }
}

fn coupled_oscillators(seed: u64) -> Bundle {
    let example = ExampleId::Example1;
    let lsys = embedded(COUPLED_OSCILLATORS);
    let hsys = embedded(COUPLED_OSCILLATORS_HAMILTONIAN);
    let systems = vec![lsys.config.clone(), hsys.config.clone()];
    let lag = lsys.lagrangian().expect("Lagrangian config");
    let cfg = lsys.run_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| (0..7).map(|_| uniform(&mut rng, -1.0, 1.0)).collect())
        .collect();
    let mut rec = Recorder::new();
    let mut extra = Extra::default();

    rec.section("structure");
    rec.check(
        "class of the Lagrangian structure",
        5.0,
        form_class(lag.structure(), &seeds, cfg.rank_tol).map(|c| c as f64),
        0.0,
        "class equals the rank of the flat map and is odd",
    );

    rec.section("constraints");
    let tower = match run_algorithm(&lsys.constraint_system(), &seeds, &cfg) {
        Ok(t) => t,
        Err(e) => {
            rec.check(
                "constraint algorithm runs",
                1.0,
                Err(e),
                0.0,
                "constraint algorithm terminates",
            );
            return rec.finish(example, seed, systems, extra);
        }
    };
    push_report(&mut extra, &tower);
    rec.check_flag(
        "tower stabilizes",
        tower.is_stabilized(),
        "constraint algorithm terminates with a nonempty set",
    );
    let invariant_levels = "constraint tower stabilizes at the stated level count";
    rec.check(
        "nontrivial levels",
        1.0,
        Ok(tower.nontrivial_levels() as f64),
        0.0,
        invariant_levels,
    );
    rec.check(
        "constraints at level 1",
        1.0,
        Ok(tower.levels().get(1).map_or(0, |l| l.len()) as f64),
        0.0,
        invariant_levels,
    );
    let zero_set = "final set equals the zero set of -2 q1 + q2";
    rec.check_vanishes(
        "-2 q1 + q2 on final samples",
        tower.samples(),
        |x| Ok(-2.0 * x[0] + x[1]),
        MEMBERSHIP_TOL,
        zero_set,
    );
    let on_closed: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            let mut x: Vec<f64> = (0..7).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            x[1] = 2.0 * x[0];
            x
        })
        .collect();
    rec.check_vanishes(
        "tower constraints on -2 q1 + q2 = 0",
        &on_closed,
        |x| tower.membership_defect(x),
        MEMBERSHIP_TOL,
        zero_set,
    );
    let solvability = tower
        .certificates()
        .iter()
        .map(|c| c.solvability_residual)
        .fold(0.0, f64::max);
    rec.check(
        "solvability residual on final samples",
        0.0,
        Ok(solvability),
        MEMBERSHIP_TOL,
        "equations of motion are solvable on the final set",
    );
    rec.check(
        "Reeb tangency |Z(R(H))| on final samples",
        0.0,
        tower.reeb_tangency_test(tower.samples()),
        TANGENCY_TOL,
        "the Reeb vector is tangent to the final set",
    );

    rec.section("reeb_variant");
    match run_algorithm_reeb_variant(&lsys.constraint_system(), &seeds, &cfg) {
        Ok(reeb) => {
            push_report(&mut extra, &reeb);
            let same = "Reeb variant leaves the final set unchanged";
            rec.check_flag("Reeb variant stabilizes", reeb.is_stabilized(), same);
            rec.check(
                "Reeb variant constraint count",
                tower.constraints().len() as f64,
                Ok(reeb.constraints().len() as f64),
                0.0,
                same,
            );
            rec.check_vanishes(
                "plain samples on the Reeb variant set",
                tower.samples(),
                |x| reeb.membership_defect(x),
                MEMBERSHIP_TOL,
                same,
            );
            rec.check_vanishes(
                "Reeb variant samples on the plain set",
                reeb.samples(),
                |x| tower.membership_defect(x),
                MEMBERSHIP_TOL,
                same,
            );
        }
        Err(e) => rec.check(
            "Reeb variant runs",
            1.0,
            Err(e),
            0.0,
            "constraint algorithm terminates",
        ),
    }

    // Hamiltonian side: canonical structure, H on the image of the Legendre map.
    rec.section("hamiltonian");
    let htower = run_algorithm(&hsys.constraint_system(), &seeds, &hsys.run_config());
    match &htower {
        Ok(t) => {
            push_report(&mut extra, t);
            rec.check(
                "nontrivial levels",
                1.0,
                Ok(t.nontrivial_levels() as f64),
                0.0,
                invariant_levels,
            );
            rec.check_vanishes(
                "p1 - p2 and 2 q1 - q2 on final samples",
                t.samples(),
                |x| Ok((x[3] - x[4]).abs().max((2.0 * x[0] - x[1]).abs())),
                MEMBERSHIP_TOL,
                "final set equals the zero set of p1 - p2 and 2 q1 - q2",
            );
        }
        Err(e) => rec.check(
            "constraint algorithm runs",
            1.0,
            Err(e.clone()),
            0.0,
            "constraint algorithm terminates",
        ),
    }

    rec.section("brackets");
    let ctx = Arc::new(BracketContext::new(hsys.structure().clone()));
    let psi = [field("p1 - p2", &hsys), field("2*q1 - q2", &hsys)];
    let on_set: Vec<Vec<f64>> = (0..BRACKET_SAMPLES)
        .map(|_| {
            let q1 = uniform(&mut rng, -1.0, 1.0);
            let mut x: Vec<f64> = (0..7).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
            x[0] = q1;
            x[1] = 2.0 * q1;
            x[4] = x[3];
            x
        })
        .collect();
    rec.check_samples(
        "{p1 - p2, 2 q1 - q2}",
        &on_set,
        |_| 3.0,
        |x| ctx.jacobi_bracket(psi[0].as_ref(), psi[1].as_ref(), x),
        BRACKET_TOL,
        "constraint bracket matrix has the closed form value",
    );
    let cls = match classify(&ctx, psi.to_vec(), &on_set, cfg.rank_tol) {
        Ok(c) => c,
        Err(e) => {
            rec.check(
                "classification runs",
                1.0,
                Err(e),
                0.0,
                "constraint bracket matrix has constant rank",
            );
            return rec.finish(example, seed, systems, extra);
        }
    };
    let ids = ["p1 - p2".to_string(), "2 q1 - q2".to_string()];
    extra.classification = Some(summarize(
        &cls,
        &ids,
        &on_set[..TABLE_SAMPLES],
        cfg.rank_tol,
    ));
    rec.check(
        "classification rank",
        2.0,
        Ok(cls.rank() as f64),
        0.0,
        "both constraints are second class",
    );
    rec.check(
        "second class constraints",
        2.0,
        Ok(cls.second_class().len() as f64),
        0.0,
        "both constraints are second class",
    );

    // Closed forms with psi = 2 q1 - q2, dpsi = (2, -1, 0) and F = {p1 - p2, psi} = 3.
    const F: f64 = 3.0;
    const DPSI: [f64; 3] = [2.0, -1.0, 0.0];
    let psi2 = |x: &[f64]| 2.0 * x[0] - x[1];
    type Closed = Box<dyn Fn(&[f64]) -> f64>;
    let pairs: Vec<(&str, &str, Closed)> = vec![
        ("q1", "p1", Box::new(|_| DPSI[1] / F)),
        ("q1", "p2", Box::new(|_| DPSI[1] / F)),
        ("q2", "p1", Box::new(|_| -DPSI[0] / F)),
        ("q2", "p2", Box::new(|_| -DPSI[0] / F)),
        ("q1", "p3", Box::new(|_| DPSI[2] / F)),
        ("q2", "p3", Box::new(|_| -DPSI[2] / F)),
        ("q3", "p3", Box::new(|_| -1.0)),
        ("q3", "z", Box::new(|x| -x[2])),
        ("q1", "z", Box::new(move |x| -x[0] + psi2(x) / F)),
        ("q2", "z", Box::new(move |x| -x[1] - psi2(x) / F)),
    ];
    let explicit = |f: &dyn SmoothFunction, g: &dyn SmoothFunction, x: &[f64]| -> CoreResult<f64> {
        let b = |a: &dyn SmoothFunction, c: &dyn SmoothFunction| ctx.jacobi_bracket(a, c, x);
        let (p1, p2) = (psi[0].as_ref(), psi[1].as_ref());
        Ok(b(f, g)? + (b(f, p1)? * b(p2, g)? - b(f, p2)? * b(p1, g)?) / b(p1, p2)?)
    };
    let agree = "Dirac-Jacobi bracket agrees with its closed forms";
    for (a, b, closed) in &pairs {
        let (f, g) = (field(a, &hsys), field(b, &hsys));
        rec.check_samples(
            &format!("{{{a}, {b}}} Dirac-Jacobi via C-matrix"),
            &on_set,
            closed,
            |x| cls.dirac_jacobi(f.as_ref(), g.as_ref(), x),
            BRACKET_TOL,
            agree,
        );
        rec.check_samples(
            &format!("{{{a}, {b}}} Dirac-Jacobi via coordinate formula"),
            &on_set,
            closed,
            |x| explicit(f.as_ref(), g.as_ref(), x),
            BRACKET_TOL,
            agree,
        );
        rec.check_vanishes(
            &format!("{{{a}, {b}}} routes agree"),
            &on_set,
            |x| {
                Ok(cls.dirac_jacobi(f.as_ref(), g.as_ref(), x)?
                    - explicit(f.as_ref(), g.as_ref(), x)?)
            },
            BRACKET_TOL,
            agree,
        );
    }
    let coords: Vec<(String, FunctionRef)> = hsys
        .observables
        .iter()
        .map(|(n, f)| (n.clone(), function(f)))
        .collect();
    if let Ok(t) = bracket_table(
        &ctx,
        BracketKind::DiracJacobi(&cls),
        &coords,
        &on_set[..TABLE_SAMPLES],
    ) {
        extra.bracket_tables.push(t);
    }
    let h = function(hsys.hamiltonian());
    let q3 = field("q3", &hsys);
    rec.check_samples(
        "evolution of q3",
        &on_set,
        |x| x[5],
        |x| cls.evolve_observable(h.as_ref(), q3.as_ref(), x, &[]),
        BRACKET_TOL,
        "Dirac-Jacobi evolution reproduces the equations of motion",
    );
    for (name, c) in ids.iter().zip(&psi) {
        rec.check_vanishes(
            &format!("evolution of {name}"),
            &on_set,
            |x| cls.evolve_observable(h.as_ref(), c.as_ref(), x, &[]),
            BRACKET_TOL,
            "constraints are preserved by the Dirac-Jacobi evolution",
        );
    }

    rec.section("second_order");
    second_order_rows(&mut rec, lag, &tower, tower.samples(), cfg.rank_tol);
    rec.finish(example, seed, systems, extra)
}

/// A point of the final set with `s = qdot1 + qdot2`.
pub fn shared_velocity_final_point(s: f64, qdot1: f64) -> Vec<f64> {
    let q2 = -2.0 / s;
    vec![-0.5 * s * s - q2, q2, qdot1, s - qdot1, 1.0]
}

fn shared_velocity(seed: u64) -> Bundle {
    let example = ExampleId::Example2;
    let lsys = embedded(SHARED_VELOCITY);
    let hsys = embedded(SHARED_VELOCITY_HAMILTONIAN);
    let systems = vec![lsys.config.clone(), hsys.config.clone()];
    let lag = lsys.lagrangian().expect("Lagrangian config");
    let cfg = lsys.run_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            let s = uniform(&mut rng, 0.8, 2.0);
            let x = shared_velocity_final_point(s, uniform(&mut rng, -1.0, 1.0));
            x.iter()
                .map(|c| c + uniform(&mut rng, -0.02, 0.02))
                .collect()
        })
        .collect();
    let mut rec = Recorder::new();
    let mut extra = Extra::default();

    rec.section("structure");
    rec.check(
        "class of the Lagrangian structure",
        3.0,
        form_class(lag.structure(), &seeds, cfg.rank_tol).map(|c| c as f64),
        0.0,
        "class equals the rank of the flat map and is odd",
    );

    rec.section("constraints");
    let tower = match run_algorithm(&lsys.constraint_system(), &seeds, &cfg) {
        Ok(t) => t,
        Err(e) => {
            rec.check(
                "constraint algorithm runs",
                1.0,
                Err(e),
                0.0,
                "constraint algorithm terminates",
            );
            return rec.finish(example, seed, systems, extra);
        }
    };
    push_report(&mut extra, &tower);
    rec.check_flag(
        "tower stabilizes",
        tower.is_stabilized(),
        "constraint algorithm terminates with a nonempty set",
    );
    rec.check(
        "nontrivial levels",
        2.0,
        Ok(tower.nontrivial_levels() as f64),
        0.0,
        "constraint tower stabilizes at the stated level count",
    );
    let random_point = |rng: &mut ChaCha8Rng| -> [f64; 4] {
        [
            uniform(rng, -1.0, 1.0),
            uniform(rng, 0.3, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        ]
    };
    let level1_points: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            let [q1, q2, v1, v2] = random_point(&mut rng);
            vec![q1, q2, v1, v2, 1.0]
        })
        .collect();
    let level1 = "level 1 zero set equals z = 1";
    rec.check_vanishes(
        "z - 1 on final samples",
        tower.samples(),
        |x| Ok(x[4] - 1.0),
        MEMBERSHIP_TOL,
        level1,
    );
    rec.check_vanishes(
        "level 1 constraint on z = 1",
        &level1_points,
        |x| Ok(max_abs(&tower.level_values(1, x)?)),
        MEMBERSHIP_TOL,
        level1,
    );

    // Level 2 as displayed: 1/2 s^2 + q1 + q2 (z - 2).
    let displayed = |x: &[f64]| 0.5 * (x[2] + x[3]).powi(2) + x[0] + x[1] * (x[4] - 2.0);
    let displayed_points: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            let [_, q2, v1, v2] = random_point(&mut rng);
            vec![-0.5 * (v1 + v2).powi(2) + q2, q2, v1, v2, 1.0]
        })
        .collect();
    let level2_displayed = "level 2 zero set equals 1/2 s^2 + q1 + q2 (z - 2) = 0";
    rec.check_vanishes(
        "1/2 s^2 + q1 + q2 (z - 2) on final samples",
        tower.samples(),
        |x| Ok(displayed(x)),
        MEMBERSHIP_TOL,
        level2_displayed,
    );
    rec.check_vanishes(
        "level 2 constraint on 1/2 s^2 + q1 + q2 (z - 2) = 0",
        &displayed_points,
        |x| Ok(max_abs(&tower.level_values(2, x)?)),
        MEMBERSHIP_TOL,
        level2_displayed,
    );

    let computed = |x: &[f64]| 0.5 * (x[2] + x[3]).powi(2) + x[0] + x[1] * x[4];
    let computed_points: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            let [_, q2, v1, v2] = random_point(&mut rng);
            vec![-0.5 * (v1 + v2).powi(2) - q2, q2, v1, v2, 1.0]
        })
        .collect();
    let level2 = "level 2 zero set equals 1/2 s^2 + q1 + q2 z = 0";
    rec.check_vanishes(
        "1/2 s^2 + q1 + q2 z on final samples",
        tower.samples(),
        |x| Ok(computed(x)),
        MEMBERSHIP_TOL,
        level2,
    );
    rec.check_vanishes(
        "level 2 constraint on 1/2 s^2 + q1 + q2 z = 0",
        &computed_points,
        |x| Ok(max_abs(&tower.level_values(2, x)?)),
        MEMBERSHIP_TOL,
        level2,
    );
    let final_points: Vec<Vec<f64>> = (0..ZERO_SET_SAMPLES)
        .map(|_| {
            shared_velocity_final_point(uniform(&mut rng, 0.8, 2.0), uniform(&mut rng, -2.0, 2.0))
        })
        .collect();
    let level3 = "level 3 zero set equals s q2 + 2 = 0";
    rec.check_vanishes(
        "s q2 + 2 on final samples",
        tower.samples(),
        |x| Ok((x[2] + x[3]) * x[1] + 2.0),
        MEMBERSHIP_TOL,
        level3,
    );
    rec.check_vanishes(
        "tower constraints on the final set",
        &final_points,
        |x| tower.membership_defect(x),
        MEMBERSHIP_TOL,
        level3,
    );
    let solvability = tower
        .certificates()
        .iter()
        .map(|c| c.solvability_residual)
        .fold(0.0, f64::max);
    rec.check(
        "solvability residual on final samples",
        0.0,
        Ok(solvability),
        MEMBERSHIP_TOL,
        "equations of motion are solvable on the final set",
    );

    rec.section("reeb_variant");
    match run_algorithm_reeb_variant(&lsys.constraint_system(), &seeds, &cfg) {
        Ok(reeb) => {
            push_report(&mut extra, &reeb);
            let empty = "Reeb variant ends with a constant nonzero constraint";
            match reeb.outcome() {
                Outcome::Empty { values, .. } => {
                    rec.check_flag("Reeb variant is empty", true, empty);
                    let worst = values.iter().copied().fold(1.0_f64, |w, v| {
                        if (v - 1.0).abs() > (w - 1.0).abs() {
                            v
                        } else {
                            w
                        }
                    });
                    rec.check(
                        "constant value of the generated constraint",
                        1.0,
                        Ok(worst),
                        REEB_CONSTANT_TOL,
                        empty,
                    );
                }
                Outcome::Stabilized => rec.check_flag("Reeb variant is empty", false, empty),
            }
        }
        Err(e) => rec.check(
            "Reeb variant runs",
            1.0,
            Err(e),
            0.0,
            "constraint algorithm terminates",
        ),
    }

    rec.section("brackets");
    let ctx = Arc::new(BracketContext::new(hsys.structure().clone()));
    let names = ["p1 - p2", "z - 1", "p1^2/2 + q1 + q2*(z - 2)"];
    let psi: Vec<FunctionRef> = names.iter().map(|t| field(t, &hsys)).collect();
    let on_set: Vec<Vec<f64>> = (0..BRACKET_SAMPLES)
        .map(|_| {
            let (q2, p) = (uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.5, 1.5));
            vec![q2 - 0.5 * p * p, q2, p, p, 1.0]
        })
        .collect();
    let closed = "constraint brackets have the closed form values";
    let br =
        |i: usize, j: usize, x: &[f64]| ctx.jacobi_bracket(psi[i].as_ref(), psi[j].as_ref(), x);
    rec.check_samples(
        "{p1 - p2, z - 1}",
        &on_set,
        |_| 0.0,
        |x| br(0, 1, x),
        BRACKET_TOL,
        closed,
    );
    rec.check_samples(
        "{p1 - p2, 1/2 p1^2 + q1 + q2 (z - 2)} at z = 1",
        &on_set,
        |_| 2.0,
        |x| br(0, 2, x),
        BRACKET_TOL,
        closed,
    );
    rec.check_samples(
        "{z - 1, 1/2 p1^2 + q1 + q2 (z - 2)}",
        &on_set,
        |x| -2.0 * (x[1] - x[0]),
        |x| br(1, 2, x),
        BRACKET_TOL,
        closed,
    );
    let named: Vec<(String, FunctionRef)> = ["psi1", "psi2", "psi3"]
        .iter()
        .map(|n| n.to_string())
        .zip(psi.iter().cloned())
        .collect();
    if let Ok(t) = bracket_table(&ctx, BracketKind::Jacobi, &named, &on_set[..TABLE_SAMPLES]) {
        extra.bracket_tables.push(t);
    }
    rec.section("classification");
    match classify(&ctx, psi.clone(), &on_set, cfg.rank_tol) {
        Ok(cls) => {
            let ids: Vec<String> = names.iter().map(|n| n.to_string()).collect();
            extra.classification = Some(summarize(
                &cls,
                &ids,
                &on_set[..TABLE_SAMPLES],
                cfg.rank_tol,
            ));
            let split = "p1 - p2 and the level 2 function are second class, z - 1 is first class";
            rec.check(
                "rank of the constraint bracket matrix",
                2.0,
                Ok(cls.rank() as f64),
                0.0,
                split,
            );
            rec.check_flag(
                "second class constraints",
                cls.second_class() == [0, 2],
                split,
            );
            rec.check_flag("first class constraints", cls.first_class() == [1], split);
            let combo = "first class combination equals (p1 - p2)(q2 - q1) + z - 1";
            let expected = field("(p1 - p2)*(q2 - q1) + z - 1", &hsys);
            match cls.first_class_combos().first() {
                Some(chi) => {
                    rec.check_samples(
                        "first class combination value",
                        &on_set,
                        |x| expected.value(x).unwrap_or(f64::NAN),
                        |x| chi.value(x),
                        BRACKET_TOL,
                        combo,
                    );
                    rec.check_vanishes(
                        "first class combination gradient",
                        &on_set,
                        |x| {
                            let (a, b) = (chi.gradient(x)?, expected.gradient(x)?);
                            Ok(a.iter().zip(&b).fold(0.0, |m, (u, v)| m.max((u - v).abs())))
                        },
                        BRACKET_TOL,
                        combo,
                    );
                }
                None => rec.check_flag("first class combination exists", false, combo),
            }
        }
        Err(e) => rec.check(
            "classification runs",
            1.0,
            Err(e),
            0.0,
            "constraint bracket matrix has constant rank",
        ),
    }

    rec.section("second_order");
    second_order_rows(&mut rec, lag, &tower, &final_points, cfg.rank_tol);
    rec.finish(example, seed, systems, extra)
}

pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let report = dir.join("report.json");
    write_atomic(&report, to_json(bundle).as_bytes()).map_err(|e| io_failure(&report, e))?;
    let summary = dir.join("summary.txt");
    write_atomic(&summary, bundle.summary().as_bytes()).map_err(|e| io_failure(&summary, e))?;
    Ok(())
}

pub fn run(args: &ReproduceArgs) -> Result<i32, Failure> {
    let bundle = reproduce(args.example, args.seed);
    write_bundle(&bundle, &args.out)?;
    println!(
        "{}: {} PASS, {} FAIL",
        bundle.example, bundle.passed, bundle.failed
    );
    for r in bundle.rows.iter().filter(|r| r.status == Status::Fail) {
        println!("FAIL {} / {}: violates {}", r.table, r.name, r.invariant);
    }
    Ok(if bundle.all_pass() {
        EXIT_OK
    } else {
        EXIT_REPRODUCE_FAIL
    })
}
