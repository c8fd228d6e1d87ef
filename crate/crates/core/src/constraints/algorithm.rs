use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::system::{
    ComplementGroup, ConstraintDef, ConstraintKind, ConstraintSystem, Evaluator, Registry,
};
use crate::error::{Error, Result};
use crate::function::{FunctionRef, SmoothFunction};
use crate::jet::Jet;
use crate::linalg::{self, PivotFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    ReebTangency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub rank_tol: f64,
    /// Relative step for the finite-difference gradient cross-check.
    pub fd_step: f64,
    /// Values below this count as zero on the constraint set.
    pub residual_tol: f64,
    pub max_levels: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rank_tol: 1e-8,
            fd_step: 1e-6,
            residual_tol: 1e-8,
            max_levels: 10,
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Stabilized,
    /// No seed survives: the constraint set is empty near every seed.
    Empty {
        level: usize,
        reason: String,
        constraint: Option<String>,
        values: Vec<f64>,
    },
}

/// Solvability and tangency numbers at one surviving seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCertificate {
    pub point: Vec<f64>,
    pub membership: f64,
    pub solvability_residual: f64,
    pub tangency_defect: f64,
    pub reeb_defect: Option<f64>,
    /// Largest relative gap between jet gradients and central differences.
    pub gradient_fd_error: f64,
}

/// A solution of the equations of motion tangent to the final set.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSolution {
    pub x: DVector<f64>,
    /// Orthonormal basis of the solution freedom.
    pub freedom: DMatrix<f64>,
    pub residual: f64,
    pub tangency: f64,
}

/// Pointwise linear data of a tower.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub flat: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub reeb: DVector<f64>,
    pub gamma: DVector<f64>,
    pub values: Vec<f64>,
    /// Gradients of all accepted constraints as rows.
    pub gradients: DMatrix<f64>,
    /// Gradients of the level 0 constraints as rows.
    pub base_gradients: DMatrix<f64>,
}

/// Result of the constraint algorithm.
#[derive(Debug, Clone)]
pub struct ConstraintTower {
    system: ConstraintSystem,
    registry: Registry,
    accepted: Vec<usize>,
    levels: Vec<Vec<usize>>,
    rank_history: Vec<usize>,
    outcome: Outcome,
    variant: Variant,
    seeds: Vec<Vec<f64>>,
    dropped_seeds: usize,
    certificates: Vec<SampleCertificate>,
    config: RunConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintReport {
    pub id: String,
    pub kind: String,
    pub depth: usize,
    pub seed_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub constraints: Vec<ConstraintReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerReport {
    pub variant: Variant,
    pub outcome: Outcome,
    pub stabilized: bool,
    pub config: RunConfig,
    pub levels: Vec<LevelReport>,
    pub rank_history: Vec<usize>,
    pub seeds_used: usize,
    pub seeds_dropped: usize,
    pub certificates: Vec<SampleCertificate>,
}

fn to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

/// Values and gradients of `which` at `x`.
fn evaluate(
    sys: &ConstraintSystem,
    reg: &Registry,
    which: &[usize],
    x: &[f64],
    order: usize,
    rank_tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut ev = Evaluator::new(sys, reg, which, x, order, rank_tol)?;
    let mut values = Vec::with_capacity(which.len());
    let mut grads = Vec::with_capacity(which.len());
    for &i in which {
        let v = ev.value(i)?;
        values.push(v.value());
        if order >= 1 {
            grads.push(v.gradient());
        }
    }
    Ok((values, grads))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Whether `g` adds a new direction to the row space of `rows`.
fn increases_rank(rows: &[Vec<f64>], g: &[f64], rank_tol: f64) -> bool {
    let gn = norm(g);
    if gn < 1e-12 {
        return false;
    }
    let d = g.len();
    let mut residual = DVector::from_row_slice(g);
    let mut scale = gn;
    if !rows.is_empty() {
        let m = to_matrix(rows, d);
        scale = scale.max(linalg::singular_values(&m)[0]);
        let q = linalg::column_space(&m.transpose(), rank_tol);
        residual -= &q * (q.transpose() * &residual);
    }
    let r = residual.norm();
    r > 1e-12 && r > rank_tol * scale
}

/// Damped Newton projection onto the common zero set of `which`.
fn project(
    sys: &ConstraintSystem,
    reg: &Registry,
    which: &[usize],
    x0: &[f64],
    cfg: &RunConfig,
) -> Option<Vec<f64>> {
    if which.is_empty() {
        return Some(x0.to_vec());
    }
    let d = x0.len();
    let mut x = x0.to_vec();
    for _ in 0..cfg.newton_max_iter {
        let (f, g) = evaluate(sys, reg, which, &x, 1, cfg.rank_tol).ok()?;
        let r = norm(&f);
        if r < cfg.newton_tol {
            return Some(x);
        }
        let (step, _) =
            linalg::lstsq_min_norm(&to_matrix(&g, d), &-DVector::from_vec(f), cfg.rank_tol);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Ok((ft, _)) = evaluate(sys, reg, which, &trial, 0, cfg.rank_tol) {
                if norm(&ft) < r {
                    x = trial;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    let (f, _) = evaluate(sys, reg, which, &x, 0, cfg.rank_tol).ok()?;
    (norm(&f) < cfg.newton_tol).then_some(x)
}

/// Local linear data at `x` for the accepted constraints.
fn local_data(
    sys: &ConstraintSystem,
    reg: &Registry,
    accepted: &[usize],
    x: &[f64],
    rank_tol: f64,
) -> Result<LocalData> {
    let mut ev = Evaluator::new(sys, reg, accepted, x, 1, rank_tol)?;
    let d = x.len();
    let flat = ev.structure().flat_values();
    let eta = DVector::from_iterator(d, ev.structure().eta.iter().map(Jet::value));
    let reeb = DVector::from_iterator(d, ev.reeb()?.iter().map(Jet::value));
    let gamma = DVector::from_iterator(d, ev.gamma()?.iter().map(Jet::value));
    let mut values = Vec::new();
    let mut grads = Vec::new();
    for &i in accepted {
        let v = ev.value(i)?;
        values.push(v.value());
        grads.push(v.gradient());
    }
    let base: Vec<Vec<f64>> = reg
        .base
        .iter()
        .map(|&b| ev.value(b).map(|v| v.gradient()))
        .collect::<Result<_>>()?;
    Ok(LocalData {
        flat,
        eta,
        reeb,
        gamma,
        values,
        gradients: to_matrix(&grads, d),
        base_gradients: to_matrix(&base, d),
    })
}

/// Orthonormal basis of the w-part of the null space of `[[B^T, -G^T], [G0, 0]]`.
fn complement_basis(data: &LocalData, rank_tol: f64) -> DMatrix<f64> {
    let d = data.eta.len();
    let m = data.gradients.nrows();
    let m0 = data.base_gradients.nrows();
    let mut a = DMatrix::zeros(d + m0, d + m);
    a.view_mut((0, 0), (d, d)).copy_from(&data.flat.transpose());
    if m > 0 {
        a.view_mut((0, d), (d, m))
            .copy_from(&(-data.gradients.transpose()));
    }
    if m0 > 0 {
        a.view_mut((d, 0), (m0, d)).copy_from(&data.base_gradients);
    }
    let null = linalg::null_space(&a, rank_tol);
    let w = null.rows(0, d).into_owned();
    linalg::column_space(&w, rank_tol)
}

/// Minimum-norm solve of `[[B, -G0^T], [G, 0]] (X, mu) = (gamma, 0)`.
fn motion_solve(data: &LocalData, rank_tol: f64) -> MotionSolution {
    let d = data.eta.len();
    let m = data.gradients.nrows();
    let m0 = data.base_gradients.nrows();
    let mut a = DMatrix::zeros(d + m, d + m0);
    a.view_mut((0, 0), (d, d)).copy_from(&data.flat);
    if m0 > 0 {
        a.view_mut((0, d), (d, m0))
            .copy_from(&(-data.base_gradients.transpose()));
    }
    if m > 0 {
        a.view_mut((d, 0), (m, d)).copy_from(&data.gradients);
    }
    let mut rhs = DVector::zeros(d + m);
    rhs.rows_mut(0, d).copy_from(&data.gamma);
    let (sol, residual) = linalg::lstsq_min_norm(&a, &rhs, rank_tol);
    let x = sol.rows(0, d).into_owned();
    let null = linalg::null_space(&a, rank_tol);
    let freedom = linalg::column_space(&null.rows(0, d).into_owned(), rank_tol);
    let tangency = if m > 0 {
        (&data.gradients * &x).amax()
    } else {
        0.0
    };
    MotionSolution {
        x,
        freedom,
        residual,
        tangency,
    }
}

struct Builder<'a> {
    sys: &'a ConstraintSystem,
    cfg: &'a RunConfig,
    variant: Variant,
    reg: Registry,
    accepted: Vec<usize>,
    levels: Vec<Vec<usize>>,
    rank_history: Vec<usize>,
    seeds: Vec<Vec<f64>>,
    dropped: usize,
}

enum LevelResult {
    Added,
    Nothing,
    Empty(Outcome),
}

impl Builder<'_> {
    fn project_seeds(&mut self) {
        let before = self.seeds.len();
        let which = self.accepted.clone();
        self.seeds = self
            .seeds
            .par_iter()
            .filter_map(|s| project(self.sys, &self.reg, &which, s, self.cfg))
            .collect();
        self.dropped += before - self.seeds.len();
    }

    fn gradient_rows(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(evaluate(self.sys, &self.reg, &self.accepted, x, 1, self.cfg.rank_tol)?.1)
    }

    fn add_group(&mut self, level: usize) -> Result<Vec<usize>> {
        let priors = self.accepted.clone();
        let reference = self.seeds[0].clone();
        let mut ranks = Vec::with_capacity(self.seeds.len());
        let mut reference_values = None;
        for s in &self.seeds {
            let mut ev = Evaluator::new(self.sys, &self.reg, &priors, s, 1, self.cfg.rank_tol)?;
            let a = ev.complement_matrix(&priors)?;
            let v = linalg::values(&a);
            ranks.push(linalg::numerical_rank(&v, self.cfg.rank_tol));
            if reference_values.is_none() {
                reference_values = Some(v);
            }
        }
        if ranks.iter().any(|&r| r != ranks[0]) {
            return Err(Error::RankNotConstant {
                context: format!("complement matrix at level {level}"),
                ranks,
            });
        }
        let a = reference_values.expect("at least one seed");
        let frame = PivotFrame::from_matrix(&a, ranks[0]);
        let rows: Vec<Vec<f64>> = (0..a.nrows())
            .map(|i| a.row(i).iter().copied().collect())
            .collect();
        let null = frame.null_basis(&rows)?;
        let d = reference.len();
        let depth = self.reg.group_depth(&priors);
        let group = self.reg.groups.len();
        let free = frame.free_columns();
        self.reg.groups.push(ComplementGroup { priors, frame });
        let mut out = Vec::new();
        for (v, column) in null.iter().zip(free) {
            let w = &v[..d];
            let wn = norm(w);
            if wn < 1e-12 * (1.0 + norm(v)) {
                continue;
            }
            let lead = w
                .iter()
                .find(|c| c.abs() > 1e-9 * wn)
                .copied()
                .unwrap_or(1.0);
            out.push(self.reg.push(ConstraintDef {
                id: format!("L{level}.c{column}"),
                level,
                kind: ConstraintKind::Complement {
                    group,
                    column,
                    sign: lead.signum(),
                },
                depth,
            }));
        }
        Ok(out)
    }

    fn candidates(&mut self, level: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (u, c) in self.sys.user_constraints().iter().enumerate() {
            if c.level == level {
                out.push(self.reg.push(ConstraintDef {
                    id: c.id.clone(),
                    level,
                    kind: ConstraintKind::User(u),
                    depth: 0,
                }));
            }
        }
        out.extend(self.add_group(level)?);
        if self.variant == Variant::ReebTangency {
            let previous = self.levels[level - 1].clone();
            for target in previous {
                let depth = self.reg.reeb_depth(target);
                let id = format!("L{level}.R({})", self.reg.defs[target].id);
                out.push(self.reg.push(ConstraintDef {
                    id,
                    level,
                    kind: ConstraintKind::ReebDerivative { target },
                    depth,
                }));
            }
        }
        Ok(out)
    }

    fn run_level(&mut self, level: usize) -> Result<LevelResult> {
        let mut pending = self.candidates(level)?;
        let mut added = Vec::new();
        loop {
            let mut all: Vec<usize> = self.accepted.clone();
            all.extend(&pending);
            let evals: Vec<(Vec<f64>, Vec<Vec<f64>>)> = self
                .seeds
                .par_iter()
                .map(|s| evaluate(self.sys, &self.reg, &all, s, 1, self.cfg.rank_tol))
                .collect::<Result<_>>()?;
            let na = self.accepted.len();
            let rows: Vec<Vec<Vec<f64>>> = evals.iter().map(|(_, g)| g[..na].to_vec()).collect();
            // One acceptance per pass: a candidate can look independent on the
            // current set yet be a multiple of an earlier one on their common zero set.
            let mut progressed = false;
            let mut still = Vec::new();
            for (k, &c) in pending.iter().enumerate() {
                if progressed {
                    still.push(c);
                    continue;
                }
                let flags: Vec<bool> = evals
                    .iter()
                    .zip(&rows)
                    .map(|((_, g), r)| increases_rank(r, &g[na + k], self.cfg.rank_tol))
                    .collect();
                if flags.iter().all(|&f| f) {
                    self.accepted.push(c);
                    added.push(c);
                    progressed = true;
                } else if flags.iter().any(|&f| f) {
                    let ranks = rows
                        .iter()
                        .zip(&flags)
                        .map(|(r, &f)| r.len() + usize::from(f))
                        .collect();
                    return Err(Error::RankNotConstant {
                        context: format!("constraint {} at level {level}", self.reg.defs[c].id),
                        ranks,
                    });
                } else {
                    still.push(c);
                }
            }
            pending = still;
            if progressed {
                self.project_seeds();
                if self.seeds.is_empty() {
                    return Ok(LevelResult::Empty(Outcome::Empty {
                        level,
                        reason: "projection onto the constraint set failed at every seed".into(),
                        constraint: None,
                        values: Vec::new(),
                    }));
                }
                continue;
            }
            // Every pending candidate is now dependent; it must also vanish.
            let mut keep = Vec::new();
            let mut witness: Option<(String, Vec<f64>)> = None;
            for (s, (values, _)) in self.seeds.iter().zip(&evals) {
                let bad = pending
                    .iter()
                    .enumerate()
                    .find(|(k, _)| values[na + k].abs() > self.cfg.residual_tol);
                match bad {
                    None => keep.push(s.clone()),
                    Some((k, &c)) => {
                        let entry = witness
                            .get_or_insert_with(|| (self.reg.defs[c].id.clone(), Vec::new()));
                        if entry.0 == self.reg.defs[c].id {
                            entry.1.push(values[na + k]);
                        }
                    }
                }
            }
            self.dropped += self.seeds.len() - keep.len();
            self.seeds = keep;
            if self.seeds.is_empty() {
                let (id, values) = witness.expect("a seed was dropped");
                return Ok(LevelResult::Empty(Outcome::Empty {
                    level,
                    reason: "a generated constraint is nonzero but depends on the others".into(),
                    constraint: Some(id),
                    values,
                }));
            }
            break;
        }
        let rank = self.gradient_rows(&self.seeds[0].clone())?.len();
        self.rank_history.push(rank);
        self.levels.push(added.clone());
        Ok(if added.is_empty() {
            LevelResult::Nothing
        } else {
            LevelResult::Added
        })
    }
}

fn build(
    sys: &ConstraintSystem,
    seeds: &[Vec<f64>],
    cfg: &RunConfig,
    variant: Variant,
) -> Result<ConstraintTower> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "the constraint algorithm needs at least one seed".into(),
        ));
    }
    if cfg.max_levels == 0 {
        return Err(Error::InvalidArgument(
            "max_levels must be at least 1".into(),
        ));
    }
    for s in seeds {
        sys.structure().chart().check_point(s)?;
    }
    let mut b = Builder {
        sys,
        cfg,
        variant,
        reg: Registry::default(),
        accepted: Vec::new(),
        levels: Vec::new(),
        rank_history: Vec::new(),
        seeds: seeds.to_vec(),
        dropped: 0,
    };
    let mut base = Vec::new();
    for (u, c) in sys.user_constraints().iter().enumerate() {
        if c.level == 0 {
            let i = b.reg.push(ConstraintDef {
                id: c.id.clone(),
                level: 0,
                kind: ConstraintKind::User(u),
                depth: 0,
            });
            base.push(i);
        }
    }
    b.reg.base = base.clone();
    b.accepted = base.clone();
    b.levels.push(base);
    b.project_seeds();
    let mut outcome = None;
    if b.seeds.is_empty() {
        outcome = Some(Outcome::Empty {
            level: 0,
            reason: "no seed projects onto the level 0 constraints".into(),
            constraint: None,
            values: Vec::new(),
        });
    } else {
        b.rank_history.push(b.accepted.len());
        check_explicit_reeb(&b)?;
    }
    if outcome.is_none() {
        let mut stabilized = false;
        for level in 1..=cfg.max_levels {
            match b.run_level(level)? {
                LevelResult::Added => {}
                LevelResult::Nothing => {
                    stabilized = true;
                    break;
                }
                LevelResult::Empty(o) => {
                    outcome = Some(o);
                    break;
                }
            }
        }
        if outcome.is_none() {
            if !stabilized {
                return Err(Error::MaxLevelsExceeded(cfg.max_levels));
            }
            outcome = Some(Outcome::Stabilized);
        }
    }
    let mut tower = ConstraintTower {
        system: sys.clone(),
        registry: b.reg,
        accepted: b.accepted,
        levels: b.levels,
        rank_history: b.rank_history,
        outcome: outcome.expect("set above"),
        variant,
        seeds: b.seeds,
        dropped_seeds: b.dropped,
        certificates: Vec::new(),
        config: cfg.clone(),
    };
    if tower.is_stabilized() {
        tower.certificates = tower
            .seeds
            .par_iter()
            .map(|s| tower.certificate(s))
            .collect::<Result<_>>()?;
    }
    Ok(tower)
}

fn check_explicit_reeb(b: &Builder) -> Result<()> {
    if let crate::geometry::ReebChoice::Explicit(_) = b.sys.reeb_choice() {
        for s in &b.seeds {
            let data = local_data(b.sys, &b.reg, &b.accepted, s, b.cfg.rank_tol)?;
            let mut residual = &data.flat * &data.reeb - &data.eta;
            if data.base_gradients.nrows() > 0 {
                let q = linalg::column_space(&data.base_gradients.transpose(), b.cfg.rank_tol);
                residual -= &q * (q.transpose() * &residual);
                residual = DVector::from_iterator(
                    residual.len() + data.base_gradients.nrows(),
                    residual
                        .iter()
                        .copied()
                        .chain((&data.base_gradients * &data.reeb).iter().copied()),
                );
            }
            if residual.norm() > 1e-8 {
                return Err(Error::InconsistentSystem {
                    residual: residual.norm(),
                });
            }
        }
    }
    Ok(())
}

/// Plain constraint algorithm.
pub fn run_algorithm(
    sys: &ConstraintSystem,
    seeds: &[Vec<f64>],
    cfg: &RunConfig,
) -> Result<ConstraintTower> {
    build(sys, seeds, cfg, Variant::Plain)
}

/// Constraint algorithm that also imposes tangency of the system's Reeb vector.
pub fn run_algorithm_reeb_variant(
    sys: &ConstraintSystem,
    seeds: &[Vec<f64>],
    cfg: &RunConfig,
) -> Result<ConstraintTower> {
    build(sys, seeds, cfg, Variant::ReebTangency)
}

impl ConstraintTower {
    pub fn system(&self) -> &ConstraintSystem {
        &self.system
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }

    pub fn is_stabilized(&self) -> bool {
        self.outcome == Outcome::Stabilized
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Seeds that survived projection, lying on the final set.
    pub fn samples(&self) -> &[Vec<f64>] {
        &self.seeds
    }

    pub fn dropped_seeds(&self) -> usize {
        self.dropped_seeds
    }

    pub fn certificates(&self) -> &[SampleCertificate] {
        &self.certificates
    }

    pub fn rank_history(&self) -> &[usize] {
        &self.rank_history
    }

    /// Accepted constraints, level 0 first.
    pub fn constraints(&self) -> Vec<&ConstraintDef> {
        self.accepted
            .iter()
            .map(|&i| &self.registry.defs[i])
            .collect()
    }

    /// Accepted constraint indices per level; entry 0 holds the level 0 constraints.
    pub fn levels(&self) -> Vec<Vec<&ConstraintDef>> {
        self.levels
            .iter()
            .map(|l| l.iter().map(|&i| &self.registry.defs[i]).collect())
            .collect()
    }

    /// Number of levels above 0 that added at least one constraint.
    pub fn nontrivial_levels(&self) -> usize {
        self.levels.iter().skip(1).filter(|l| !l.is_empty()).count()
    }

    /// Values of accepted constraints at `x`.
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(evaluate(
            &self.system,
            &self.registry,
            &self.accepted,
            x,
            0,
            self.config.rank_tol,
        )?
        .0)
    }

    /// Values of the constraints accepted at `level`.
    pub fn level_values(&self, level: usize, x: &[f64]) -> Result<Vec<f64>> {
        let which = self.levels.get(level).cloned().unwrap_or_default();
        Ok(evaluate(
            &self.system,
            &self.registry,
            &which,
            x,
            0,
            self.config.rank_tol,
        )?
        .0)
    }

    /// Largest absolute constraint value at `x`.
    pub fn membership_defect(&self, x: &[f64]) -> Result<f64> {
        Ok(max_abs(&self.values(x)?))
    }

    /// Taylor jets of every accepted constraint at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let mut ev = Evaluator::new(
            &self.system,
            &self.registry,
            &self.accepted,
            x,
            order,
            self.config.rank_tol,
        )?;
        self.accepted.iter().map(|&i| ev.value(i)).collect()
    }

    pub fn local_data(&self, x: &[f64]) -> Result<LocalData> {
        local_data(
            &self.system,
            &self.registry,
            &self.accepted,
            x,
            self.config.rank_tol,
        )
    }

    /// Central-difference gradient of accepted constraint `k`.
    pub fn fd_gradient(&self, k: usize, x: &[f64], step: f64) -> Result<Vec<f64>> {
        let which = [self.accepted[k]];
        let h = step * (1.0 + norm(x));
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                let fp = evaluate(
                    &self.system,
                    &self.registry,
                    &which,
                    &xp,
                    0,
                    self.config.rank_tol,
                )?
                .0[0];
                let fm = evaluate(
                    &self.system,
                    &self.registry,
                    &which,
                    &xm,
                    0,
                    self.config.rank_tol,
                )?
                .0[0];
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    }

    /// Newton-project `x` onto the final set.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        project(
            &self.system,
            &self.registry,
            &self.accepted,
            x,
            &self.config,
        )
    }

    /// Orthonormal basis of the complement of the tangent space of the final set.
    pub fn final_complement(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(complement_basis(&self.local_data(x)?, self.config.rank_tol))
    }

    /// Solution of the equations of motion tangent to the final set at `x`.
    pub fn solve_motion(&self, x: &[f64]) -> Result<MotionSolution> {
        let data = self.local_data(x)?;
        let residual = max_abs(&data.values);
        if residual > self.config.residual_tol {
            return Err(Error::NotOnManifold { residual });
        }
        let sol = motion_solve(&data, self.config.rank_tol);
        if sol.residual > 1e-8 {
            return Err(Error::NoSolution {
                residual: sol.residual,
            });
        }
        Ok(sol)
    }

    /// Largest `|Z(R(H))|` over unit `Z` in the complement of the final set, across samples.
    pub fn reeb_tangency_test(&self, samples: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in samples {
            let mut ev = Evaluator::new(
                &self.system,
                &self.registry,
                &self.accepted,
                x,
                1,
                self.config.rank_tol,
            )?;
            let r = ev.reeb()?;
            let (_, dh) = ev.hamiltonian();
            let rh = linalg::dot(&r, dh);
            let grad = DVector::from_vec(rh.gradient());
            let z = self.final_complement(x)?;
            worst = worst.max((z.transpose() * grad).norm());
        }
        Ok(worst)
    }

    fn certificate(&self, x: &[f64]) -> Result<SampleCertificate> {
        let data = self.local_data(x)?;
        let sol = motion_solve(&data, self.config.rank_tol);
        let reeb_defect = match self.variant {
            Variant::Plain => None,
            Variant::ReebTangency => Some(if data.gradients.nrows() > 0 {
                (&data.gradients * &data.reeb).amax()
            } else {
                0.0
            }),
        };
        let mut fd_error: f64 = 0.0;
        for (k, &i) in self.accepted.iter().enumerate() {
            if self.registry.defs[i].is_user() {
                continue;
            }
            let fd = self.fd_gradient(k, x, self.config.fd_step)?;
            let g: Vec<f64> = data.gradients.row(k).iter().copied().collect();
            let diff: Vec<f64> = fd.iter().zip(&g).map(|(a, b)| a - b).collect();
            fd_error = fd_error.max(norm(&diff) / norm(&g).max(1e-12));
        }
        Ok(SampleCertificate {
            point: x.to_vec(),
            membership: max_abs(&data.values),
            solvability_residual: sol.residual,
            tangency_defect: sol.tangency,
            reeb_defect,
            gradient_fd_error: fd_error,
        })
    }

    pub fn report(&self) -> Result<TowerReport> {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(level, ids)| {
                let constraints = ids
                    .iter()
                    .map(|&i| {
                        let def = &self.registry.defs[i];
                        let seed_values = self
                            .seeds
                            .iter()
                            .map(|s| {
                                Ok(evaluate(
                                    &self.system,
                                    &self.registry,
                                    &[i],
                                    s,
                                    0,
                                    self.config.rank_tol,
                                )?
                                .0[0])
                            })
                            .collect::<Result<_>>()?;
                        Ok(ConstraintReport {
                            id: def.id.clone(),
                            kind: def.kind_label().to_string(),
                            depth: def.depth,
                            seed_values,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(LevelReport { level, constraints })
            })
            .collect::<Result<_>>()?;
        Ok(TowerReport {
            variant: self.variant,
            outcome: self.outcome.clone(),
            stabilized: self.is_stabilized(),
            config: self.config.clone(),
            levels,
            rank_history: self.rank_history.clone(),
            seeds_used: self.seeds.len(),
            seeds_dropped: self.dropped_seeds,
            certificates: self.certificates.clone(),
        })
    }

    /// Accepted constraints as smooth functions.
    pub fn constraint_functions(self: &Arc<Self>) -> Vec<FunctionRef> {
        (0..self.accepted.len())
            .map(|k| {
                Arc::new(TowerConstraint {
                    tower: Arc::clone(self),
                    index: k,
                }) as FunctionRef
            })
            .collect()
    }
}

/// One accepted constraint of a tower.
pub struct TowerConstraint {
    tower: Arc<ConstraintTower>,
    index: usize,
}

impl SmoothFunction for TowerConstraint {
    fn dim(&self) -> usize {
        self.tower.system.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let t = &self.tower;
        let i = t.accepted[self.index];
        let mut ev = Evaluator::new(&t.system, &t.registry, &[i], x, order, t.config.rank_tol)?;
        ev.value(i)
    }

    fn label(&self) -> String {
        self.tower.registry.defs[self.tower.accepted[self.index]]
            .id
            .clone()
    }
}
