//! Jacobi and Dirac-Jacobi brackets on a contact manifold.
//!
//! The Jacobi bracket is `{f,g} = Lambda(df, dg) - f R(g) + g R(f)` with the
//! bivector and Reeb field taken from the structure. All brackets are
//! available as jets, so nested brackets and brackets of derived functions
//! (first class combinations, other brackets) are exact up to rounding.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{FunctionRef, SmoothFunction};
use crate::geometry::{PrecontactStructure, DEFAULT_RANK_TOL};
use crate::jet::Jet;
use crate::linalg::{self, Mat};

/// Largest condition number accepted for the matrix of second class brackets.
pub const MAX_C_CONDITION: f64 = 1e12;

/// Bracket data of a contact structure.
#[derive(Debug, Clone)]
pub struct BracketContext {
    structure: PrecontactStructure,
    rank_tol: f64,
}

struct LocalJets {
    lambda: Mat<Jet>,
    reeb: Vec<Jet>,
}

fn pair(a: &[Jet], m: &Mat<Jet>, b: &[Jet]) -> Jet {
    let mut out = a[0].zero_like();
    for (ai, row) in a.iter().zip(m) {
        for (mij, bj) in row.iter().zip(b) {
            out = out + ai * &(mij * bj);
        }
    }
    out
}

impl BracketContext {
    pub fn new(structure: PrecontactStructure) -> BracketContext {
        BracketContext {
            structure,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }

    /// Canonical contact structure on `T*R^n x R`, where `R = d/dz`.
    pub fn canonical(n: usize) -> Result<BracketContext> {
        Ok(BracketContext::new(PrecontactStructure::canonical_contact(
            n,
        )?))
    }

    pub fn structure(&self) -> &PrecontactStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    fn local(&self, x: &[f64], order: usize) -> Result<LocalJets> {
        let sj = self.structure.jets(x, order)?;
        Ok(LocalJets {
            lambda: sj.lambda()?,
            reeb: sj.reeb_min_norm(self.rank_tol)?,
        })
    }

    /// Jet of `{f,g}` at `x` truncated at `order`.
    pub fn bracket_jet(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
        order: usize,
    ) -> Result<Jet> {
        let k = order + 1;
        let loc = self.local(x, k)?;
        let fj = f.jet(x, k)?;
        let gj = g.jet(x, k)?;
        let df = fj.gradient_jets();
        let dg = gj.gradient_jets();
        let rf = linalg::dot(&loc.reeb, &df);
        let rg = linalg::dot(&loc.reeb, &dg);
        // Both halves flip sign exactly when f and g swap.
        let lam = (pair(&df, &loc.lambda, &dg) - pair(&dg, &loc.lambda, &df)).scale(0.5);
        let out = lam + (&gj * &rf - &fj * &rg);
        Ok(out.truncate(order))
    }

    /// Jet of `R(f)` at `x` truncated at `order`.
    pub fn reeb_derivative_jet(
        &self,
        f: &dyn SmoothFunction,
        x: &[f64],
        order: usize,
    ) -> Result<Jet> {
        let k = order + 1;
        let loc = self.local(x, k)?;
        let df = f.jet(x, k)?.gradient_jets();
        Ok(linalg::dot(&loc.reeb, &df).truncate(order))
    }

    pub fn jacobi_bracket(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
    ) -> Result<f64> {
        Ok(self.bracket_jet(f, g, x, 0)?.value())
    }

    pub fn reeb_derivative(&self, f: &dyn SmoothFunction, x: &[f64]) -> Result<f64> {
        Ok(self.reeb_derivative_jet(f, x, 0)?.value())
    }

    /// `Lambda(df, dg)` at `x`.
    pub fn lambda_pairing(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
    ) -> Result<f64> {
        let loc = self.local(x, 0)?;
        let df: Vec<Jet> = f
            .gradient(x)?
            .iter()
            .map(|&v| loc.reeb[0].constant_like(v))
            .collect();
        let dg: Vec<Jet> = g
            .gradient(x)?
            .iter()
            .map(|&v| loc.reeb[0].constant_like(v))
            .collect();
        Ok(pair(&df, &loc.lambda, &dg).value())
    }

    /// Reeb vector at `x`.
    pub fn reeb(&self, x: &[f64]) -> Result<DVector<f64>> {
        let loc = self.local(x, 0)?;
        Ok(DVector::from_iterator(
            loc.reeb.len(),
            loc.reeb.iter().map(Jet::value),
        ))
    }

    /// `X_H = sharp(dH) - H R`, so that `X_H(f) = {H,f} - f R(H)`.
    pub fn hamiltonian_vector(&self, h: &dyn SmoothFunction, x: &[f64]) -> Result<DVector<f64>> {
        let loc = self.local(x, 0)?;
        let dh = h.gradient(x)?;
        let hv = h.value(x)?;
        let d = dh.len();
        Ok(DVector::from_fn(d, |j, _| {
            let sharp: f64 = (0..d).map(|i| loc.lambda[i][j].value() * dh[i]).sum();
            sharp - hv * loc.reeb[j].value()
        }))
    }

    /// `X_H(f) = {H,f} - f R(H)`.
    pub fn evolution(
        &self,
        h: &dyn SmoothFunction,
        f: &dyn SmoothFunction,
        x: &[f64],
    ) -> Result<f64> {
        Ok(self.jacobi_bracket(h, f, x)? - f.value(x)? * self.reeb_derivative(h, x)?)
    }
}

/// `{f,g}` as a smooth function.
pub struct JacobiBracket {
    ctx: Arc<BracketContext>,
    f: FunctionRef,
    g: FunctionRef,
}

pub fn bracket(ctx: &Arc<BracketContext>, f: FunctionRef, g: FunctionRef) -> FunctionRef {
    Arc::new(JacobiBracket {
        ctx: ctx.clone(),
        f,
        g,
    })
}

impl SmoothFunction for JacobiBracket {
    fn dim(&self) -> usize {
        self.ctx.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        self.ctx
            .bracket_jet(self.f.as_ref(), self.g.as_ref(), x, order)
    }

    fn label(&self) -> String {
        format!("{{{}, {}}}", self.f.label(), self.g.label())
    }
}

/// Split of a constraint family into second class constraints and first class combinations.
#[derive(Clone)]
pub struct Classification {
    ctx: Arc<BracketContext>,
    constraints: Vec<FunctionRef>,
    second_class: Vec<usize>,
    first_class: Vec<usize>,
    ranks: Vec<usize>,
    first_class_defect: f64,
}

impl std::fmt::Debug for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classification")
            .field(
                "constraints",
                &self
                    .constraints
                    .iter()
                    .map(|c| c.label())
                    .collect::<Vec<_>>(),
            )
            .field("second_class", &self.second_class)
            .field("first_class", &self.first_class)
            .field("ranks", &self.ranks)
            .finish()
    }
}

/// Indices of rows picked greedily, lowest index first, while they stay independent.
fn independent_rows(c: &DMatrix<f64>, rank_tol: f64) -> Vec<usize> {
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut picked = Vec::new();
    for i in 0..c.nrows() {
        let mut r = c.row(i).transpose();
        for b in &basis {
            let coef = b.dot(&r);
            r -= b * coef;
        }
        let n = r.norm();
        if n > rank_tol * scale {
            basis.push(r / n);
            picked.push(i);
        }
    }
    picked
}

fn select<T: Clone>(m: &Mat<T>, rows: &[usize], cols: &[usize]) -> Mat<T> {
    rows.iter()
        .map(|&i| cols.iter().map(|&j| m[i][j].clone()).collect())
        .collect()
}

/// Classify constraints at samples of the final set.
pub fn classify(
    ctx: &Arc<BracketContext>,
    constraints: Vec<FunctionRef>,
    samples: &[Vec<f64>],
    rank_tol: f64,
) -> Result<Classification> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "classification needs at least one sample".into(),
        ));
    }
    let mut cls = Classification {
        ctx: ctx.clone(),
        constraints,
        second_class: Vec::new(),
        first_class: Vec::new(),
        ranks: Vec::new(),
        first_class_defect: 0.0,
    };
    let mats: Vec<DMatrix<f64>> = samples
        .iter()
        .map(|x| cls.c_matrix(x))
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = mats
        .iter()
        .map(|c| {
            if c.amax() == 0.0 {
                0
            } else {
                linalg::numerical_rank(c, rank_tol)
            }
        })
        .collect();
    if ranks.iter().any(|&r| r != ranks[0]) {
        return Err(Error::RankNotConstant {
            context: "constraint bracket matrix".into(),
            ranks,
        });
    }
    let second = independent_rows(&mats[0], rank_tol);
    if second.len() != ranks[0] {
        return Err(Error::RankNotConstant {
            context: "second class selection".into(),
            ranks: vec![ranks[0], second.len()],
        });
    }
    cls.first_class = (0..cls.constraints.len())
        .filter(|i| !second.contains(i))
        .collect();
    cls.second_class = second;
    cls.ranks = ranks;
    for x in samples {
        cls.c_inverse(x)?;
        for chi in cls.first_class_combos() {
            for phi in &cls.constraints {
                let v = ctx.jacobi_bracket(chi.as_ref(), phi.as_ref(), x)?.abs();
                cls.first_class_defect = cls.first_class_defect.max(v);
            }
        }
    }
    Ok(cls)
}

impl Classification {
    pub fn context(&self) -> &Arc<BracketContext> {
        &self.ctx
    }

    pub fn constraints(&self) -> &[FunctionRef] {
        &self.constraints
    }

    pub fn second_class(&self) -> &[usize] {
        &self.second_class
    }

    pub fn first_class(&self) -> &[usize] {
        &self.first_class
    }

    pub fn rank(&self) -> usize {
        self.second_class.len()
    }

    /// Rank of the bracket matrix at each sample.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Largest `|{chi, phi}|` over first class combinations and constraints at the samples.
    pub fn first_class_defect(&self) -> f64 {
        self.first_class_defect
    }

    fn c_jets(&self, x: &[f64], order: usize) -> Result<Mat<Jet>> {
        let m = self.constraints.len();
        let mut c: Mat<Option<Jet>> = vec![vec![None; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                let v = self.ctx.bracket_jet(
                    self.constraints[i].as_ref(),
                    self.constraints[j].as_ref(),
                    x,
                    order,
                )?;
                c[j][i] = Some(-&v);
                c[i][j] = Some(v);
            }
        }
        let zero = self.constraints[0].jet(x, order)?.zero_like();
        Ok(c.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|v| v.unwrap_or_else(|| zero.clone()))
                    .collect()
            })
            .collect())
    }

    /// Full matrix `{phi_i, phi_j}` at `x`.
    pub fn c_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.constraints.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        Ok(linalg::values(&self.c_jets(x, 0)?))
    }

    fn check_condition(c: &DMatrix<f64>) -> Result<()> {
        let condition = linalg::condition_number(c);
        if condition > MAX_C_CONDITION {
            return Err(Error::SingularCMatrix { condition });
        }
        Ok(())
    }

    /// Inverse of the second class block as jets.
    fn c_inverse_jets(&self, x: &[f64], order: usize) -> Result<(Mat<Jet>, Mat<Jet>)> {
        let c = self.c_jets(x, order)?;
        let s = select(&c, &self.second_class, &self.second_class);
        Self::check_condition(&linalg::values(&s))?;
        Ok((linalg::inverse(&s)?, c))
    }

    /// Inverse of the second class block at `x`.
    pub fn c_inverse(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.second_class.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        Ok(linalg::values(&self.c_inverse_jets(x, 0)?.0))
    }

    fn coefficient_jets(&self, x: &[f64], order: usize) -> Result<Mat<Jet>> {
        if self.second_class.is_empty() {
            return Ok(vec![Vec::new(); self.first_class.len()]);
        }
        let (inv, c) = self.c_inverse_jets(x, order)?;
        let cross = select(&c, &self.first_class, &self.second_class);
        Ok(cross
            .iter()
            .map(|row| {
                (0..inv.len())
                    .map(|b| {
                        linalg::dot(row, &inv.iter().map(|r| r[b].clone()).collect::<Vec<_>>())
                    })
                    .collect()
            })
            .collect())
    }

    /// Coefficients `B` with rows over first class indices and columns over second class ones.
    pub fn combination_coefficients(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let b = self.coefficient_jets(x, 0)?;
        Ok(DMatrix::from_fn(
            self.first_class.len(),
            self.second_class.len(),
            |i, j| b[i][j].value(),
        ))
    }

    /// `chi_k = phi_k - B_ka phi_a` for each first class index `k`.
    pub fn first_class_combos(&self) -> Vec<FunctionRef> {
        (0..self.first_class.len())
            .map(|k| {
                Arc::new(FirstClassCombo {
                    cls: self.clone(),
                    k,
                }) as FunctionRef
            })
            .collect()
    }

    fn correction_parts(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
        order: usize,
    ) -> Result<Jet> {
        let base = self.ctx.bracket_jet(f, g, x, order)?;
        if self.second_class.is_empty() {
            return Ok(base);
        }
        let (inv, _) = self.c_inverse_jets(x, order)?;
        let left: Vec<Jet> = self
            .second_class
            .iter()
            .map(|&a| {
                self.ctx
                    .bracket_jet(f, self.constraints[a].as_ref(), x, order)
            })
            .collect::<Result<_>>()?;
        let right: Vec<Jet> = self
            .second_class
            .iter()
            .map(|&b| {
                self.ctx
                    .bracket_jet(self.constraints[b].as_ref(), g, x, order)
            })
            .collect::<Result<_>>()?;
        let correction = (pair(&left, &inv, &right) - pair(&right, &inv, &left)).scale(0.5);
        Ok(base - correction)
    }

    /// Jet of `{f,g}_DJ = {f,g} - {f,phi_a} C_ab {phi_b,g}`.
    pub fn dirac_jacobi_jet(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
        order: usize,
    ) -> Result<Jet> {
        self.correction_parts(f, g, x, order)
    }

    pub fn dirac_jacobi(
        &self,
        f: &dyn SmoothFunction,
        g: &dyn SmoothFunction,
        x: &[f64],
    ) -> Result<f64> {
        Ok(self.dirac_jacobi_jet(f, g, x, 0)?.value())
    }

    /// `R_DJ(f) = R(f) + C_ab R(phi_b) (Lambda(dphi_a, df) + phi_a R(f))`.
    pub fn reeb_dj(&self, f: &dyn SmoothFunction, x: &[f64]) -> Result<f64> {
        let rf = self.ctx.reeb_derivative(f, x)?;
        if self.second_class.is_empty() {
            return Ok(rf);
        }
        let inv = self.c_inverse(x)?;
        let mut out = rf;
        for (ia, &a) in self.second_class.iter().enumerate() {
            let phi_a = self.constraints[a].as_ref();
            let along = self.ctx.lambda_pairing(phi_a, f, x)? + phi_a.value(x)? * rf;
            for (ib, &b) in self.second_class.iter().enumerate() {
                out += inv[(ia, ib)]
                    * self.ctx.reeb_derivative(self.constraints[b].as_ref(), x)?
                    * along;
            }
        }
        Ok(out)
    }

    /// Multipliers `u_a` of the second class constraints that make `H + u_a phi_a` consistent.
    pub fn multipliers(&self, h: &dyn SmoothFunction, x: &[f64]) -> Result<DVector<f64>> {
        if self.second_class.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let c = self.c_matrix(x)?;
        let sc = &self.second_class;
        let k = sc.len();
        // u_a C^{ab} = -{H, phi_b}
        let ct = DMatrix::from_fn(k, k, |i, j| c[(sc[j], sc[i])]);
        Self::check_condition(&ct)?;
        let rhs = DVector::from_iterator(
            k,
            sc.iter()
                .map(|&b| {
                    self.ctx
                        .jacobi_bracket(h, self.constraints[b].as_ref(), x)
                        .map(|v| -v)
                })
                .collect::<Result<Vec<f64>>>()?,
        );
        ct.lu().solve(&rhs).ok_or(Error::SingularCMatrix {
            condition: f64::INFINITY,
        })
    }

    /// `f' = {H,f}_DJ - f R_DJ(H) + u_k ({chi_k,f}_DJ - f R_DJ(chi_k))`.
    pub fn evolve_observable(
        &self,
        h: &dyn SmoothFunction,
        f: &dyn SmoothFunction,
        x: &[f64],
        first_class_multipliers: &[f64],
    ) -> Result<f64> {
        if first_class_multipliers.len() != self.first_class.len() {
            return Err(Error::DimensionMismatch {
                expected: self.first_class.len(),
                found: first_class_multipliers.len(),
            });
        }
        let fv = f.value(x)?;
        let mut out = self.dirac_jacobi(h, f, x)? - fv * self.reeb_dj(h, x)?;
        for (chi, u) in self
            .first_class_combos()
            .iter()
            .zip(first_class_multipliers)
        {
            out += u
                * (self.dirac_jacobi(chi.as_ref(), f, x)? - fv * self.reeb_dj(chi.as_ref(), x)?);
        }
        Ok(out)
    }
}

/// First class combination of a classified family.
struct FirstClassCombo {
    cls: Classification,
    k: usize,
}

impl SmoothFunction for FirstClassCombo {
    fn dim(&self) -> usize {
        self.cls.ctx.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let cls = &self.cls;
        let mut out = cls.constraints[cls.first_class[self.k]].jet(x, order)?;
        let b = cls.coefficient_jets(x, order)?;
        for (bka, &a) in b[self.k].iter().zip(&cls.second_class) {
            out = out - bka * &cls.constraints[a].jet(x, order)?;
        }
        Ok(out)
    }

    fn label(&self) -> String {
        let cls = &self.cls;
        let mut s = cls.constraints[cls.first_class[self.k]].label();
        for &a in &cls.second_class {
            s.push_str(&format!(" - B*({})", cls.constraints[a].label()));
        }
        s
    }
}

/// `{f,g}_DJ` as a smooth function.
pub struct DiracJacobiBracket {
    cls: Classification,
    f: FunctionRef,
    g: FunctionRef,
}

pub fn dirac_jacobi_bracket(cls: &Classification, f: FunctionRef, g: FunctionRef) -> FunctionRef {
    Arc::new(DiracJacobiBracket {
        cls: cls.clone(),
        f,
        g,
    })
}

impl SmoothFunction for DiracJacobiBracket {
    fn dim(&self) -> usize {
        self.cls.ctx.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        self.cls
            .dirac_jacobi_jet(self.f.as_ref(), self.g.as_ref(), x, order)
    }

    fn label(&self) -> String {
        format!("{{{}, {}}}_DJ", self.f.label(), self.g.label())
    }
}

/// Which bracket a table holds.
#[derive(Clone, Copy)]
pub enum BracketKind<'a> {
    Jacobi,
    DiracJacobi(&'a Classification),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedFunction {
    pub name: String,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketEntry {
    pub left: String,
    pub right: String,
    pub values: Vec<f64>,
}

/// Bracket values of every ordered pair `i < j` at the sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketTable {
    pub kind: String,
    pub functions: Vec<NamedFunction>,
    pub samples: Vec<Vec<f64>>,
    pub entries: Vec<BracketEntry>,
}

pub fn bracket_table(
    ctx: &BracketContext,
    kind: BracketKind<'_>,
    functions: &[(String, FunctionRef)],
    samples: &[Vec<f64>],
) -> Result<BracketTable> {
    let mut entries = Vec::new();
    for i in 0..functions.len() {
        for j in (i + 1)..functions.len() {
            let (f, g) = (functions[i].1.as_ref(), functions[j].1.as_ref());
            let values = samples
                .iter()
                .map(|x| match kind {
                    BracketKind::Jacobi => ctx.jacobi_bracket(f, g, x),
                    BracketKind::DiracJacobi(cls) => cls.dirac_jacobi(f, g, x),
                })
                .collect::<Result<_>>()?;
            entries.push(BracketEntry {
                left: functions[i].0.clone(),
                right: functions[j].0.clone(),
                values,
            });
        }
    }
    Ok(BracketTable {
        kind: match kind {
            BracketKind::Jacobi => "jacobi".into(),
            BracketKind::DiracJacobi(_) => "dirac_jacobi".into(),
        },
        functions: functions
            .iter()
            .map(|(name, f)| NamedFunction {
                name: name.clone(),
                expression: f.label(),
            })
            .collect(),
        samples: samples.to_vec(),
        entries,
    })
}
