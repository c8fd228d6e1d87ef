use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::ScalarField;
use crate::geometry::{PrecontactStructure, ReebChoice, StructureJets};
use crate::jet::{Jet, JetSpace};
use crate::linalg::{self, Mat, PivotFrame};

/// A constraint given in closed form.
#[derive(Debug, Clone)]
pub struct UserConstraint {
    pub id: String,
    /// Level 0 constraints cut out the ambient submanifold the algorithm runs on.
    pub level: usize,
    pub field: ScalarField,
    gradient: Vec<ScalarField>,
}

impl UserConstraint {
    pub fn new(id: impl Into<String>, level: usize, field: ScalarField) -> UserConstraint {
        let gradient = (0..field.dim()).map(|i| field.partial(i)).collect();
        UserConstraint {
            id: id.into(),
            level,
            field,
            gradient,
        }
    }
}

/// Structure, Hamiltonian, Reeb choice and closed-form constraints.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    structure: PrecontactStructure,
    hamiltonian: ScalarField,
    dh: Vec<ScalarField>,
    reeb: ReebChoice,
    user: Vec<UserConstraint>,
}

impl ConstraintSystem {
    pub fn new(
        structure: PrecontactStructure,
        hamiltonian: ScalarField,
    ) -> Result<ConstraintSystem> {
        if hamiltonian.chart() != structure.chart() {
            return Err(Error::InvalidChart(
                "Hamiltonian and structure use different charts".into(),
            ));
        }
        let dh = (0..hamiltonian.dim())
            .map(|i| hamiltonian.partial(i))
            .collect();
        Ok(ConstraintSystem {
            structure,
            hamiltonian,
            dh,
            reeb: ReebChoice::MinNorm,
            user: Vec::new(),
        })
    }

    pub fn with_reeb(mut self, reeb: ReebChoice) -> Result<ConstraintSystem> {
        if let ReebChoice::Explicit(fields) = &reeb {
            if fields.len() != self.dim()
                || fields.iter().any(|f| f.chart() != self.structure.chart())
            {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: fields.len(),
                });
            }
        }
        self.reeb = reeb;
        Ok(self)
    }

    pub fn with_constraint(
        mut self,
        id: impl Into<String>,
        level: usize,
        field: ScalarField,
    ) -> Result<ConstraintSystem> {
        if field.chart() != self.structure.chart() {
            return Err(Error::InvalidChart("constraint uses another chart".into()));
        }
        self.user.push(UserConstraint::new(id, level, field));
        Ok(self)
    }

    pub fn structure(&self) -> &PrecontactStructure {
        &self.structure
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.hamiltonian
    }

    pub fn reeb_choice(&self) -> &ReebChoice {
        &self.reeb
    }

    pub fn user_constraints(&self) -> &[UserConstraint] {
        &self.user
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }
}

/// How a constraint is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// Index into the system's closed-form constraints.
    User(usize),
    /// `<gamma_H, w>` with `w` the null vector of a complement group at a free column.
    Complement {
        group: usize,
        column: usize,
        sign: f64,
    },
    /// `R(phi)` for an earlier constraint.
    ReebDerivative { target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintDef {
    pub id: String,
    pub level: usize,
    pub kind: ConstraintKind,
    /// Number of derivative orders lost when evaluating through jets.
    pub depth: usize,
}

impl ConstraintDef {
    pub fn is_user(&self) -> bool {
        matches!(self.kind, ConstraintKind::User(_))
    }

    fn gradient_depth(&self) -> usize {
        if self.is_user() {
            self.depth
        } else {
            self.depth + 1
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self.kind {
            ConstraintKind::User(_) => "user",
            ConstraintKind::Complement { .. } => "complement",
            ConstraintKind::ReebDerivative { .. } => "reeb_derivative",
        }
    }
}

/// The null space frame of `[[B^T, -G^T], [G0, 0]]` for a fixed list of prior constraints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementGroup {
    pub priors: Vec<usize>,
    pub frame: PivotFrame,
}

/// Every constraint ever considered, accepted or not.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    pub defs: Vec<ConstraintDef>,
    pub groups: Vec<ComplementGroup>,
    /// Indices of level 0 closed-form constraints.
    pub base: Vec<usize>,
}

impl Registry {
    pub fn push(&mut self, def: ConstraintDef) -> usize {
        self.defs.push(def);
        self.defs.len() - 1
    }

    pub fn group_depth(&self, priors: &[usize]) -> usize {
        priors
            .iter()
            .map(|&p| self.defs[p].gradient_depth())
            .max()
            .unwrap_or(0)
    }

    pub fn reeb_depth(&self, target: usize) -> usize {
        self.defs[target].gradient_depth()
    }
}

/// Values of constraints (and what they need) as jets at one point.
pub(crate) struct Evaluator<'a> {
    sys: &'a ConstraintSystem,
    reg: &'a Registry,
    rank_tol: f64,
    order: usize,
    vars: Vec<Jet>,
    structure: StructureJets,
    dh: Vec<Jet>,
    h: Jet,
    reeb: Option<Vec<Jet>>,
    gamma: Option<Vec<Jet>>,
    values: HashMap<usize, Jet>,
    grads: HashMap<usize, Vec<Jet>>,
    nulls: HashMap<usize, Mat<Jet>>,
}

impl<'a> Evaluator<'a> {
    /// Prepare jets exact to `order` for every constraint in `which`.
    pub fn new(
        sys: &'a ConstraintSystem,
        reg: &'a Registry,
        which: &[usize],
        x: &[f64],
        order: usize,
        rank_tol: f64,
    ) -> Result<Evaluator<'a>> {
        sys.structure.chart().check_point(x)?;
        let depth = which.iter().map(|&i| reg.defs[i].depth).max().unwrap_or(0);
        let k = order + depth;
        let space = JetSpace::get(sys.dim(), k);
        let vars = Jet::variables(&space, x);
        let structure = sys.structure.jets_with(&vars)?;
        let dh = sys
            .dh
            .iter()
            .map(|f| f.taylor_with(&vars))
            .collect::<Result<_>>()?;
        let h = sys.hamiltonian.taylor_with(&vars)?;
        Ok(Evaluator {
            sys,
            reg,
            rank_tol,
            order,
            vars,
            structure,
            dh,
            h,
            reeb: None,
            gamma: None,
            values: HashMap::new(),
            grads: HashMap::new(),
            nulls: HashMap::new(),
        })
    }

    fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn structure(&self) -> &StructureJets {
        &self.structure
    }

    pub fn hamiltonian(&self) -> (&Jet, &[Jet]) {
        (&self.h, &self.dh)
    }

    fn base_gradients(&mut self) -> Result<Mat<Jet>> {
        let base = self.reg.base.clone();
        base.iter().map(|&b| self.gradient(b)).collect()
    }

    /// Reeb vector of the structure restricted to the level 0 submanifold.
    pub fn reeb(&mut self) -> Result<Vec<Jet>> {
        if let Some(r) = &self.reeb {
            return Ok(r.clone());
        }
        let r = match &self.sys.reeb {
            ReebChoice::Explicit(fields) => fields
                .iter()
                .map(|f| f.taylor_with(&self.vars))
                .collect::<Result<Vec<_>>>()?,
            ReebChoice::MinNorm => {
                let g0 = self.base_gradients()?;
                let d = self.dim();
                let m0 = g0.len();
                let zero = self.vars[0].zero_like();
                let mut a = vec![vec![zero.clone(); d + m0]; d + m0];
                for i in 0..d {
                    for j in 0..d {
                        a[i][j] = self.structure.flat[i][j].clone();
                    }
                    for (k, g) in g0.iter().enumerate() {
                        a[i][d + k] = -&g[i];
                        a[d + k][i] = g[i].clone();
                    }
                }
                let mut rhs = self.structure.eta.clone();
                rhs.extend(std::iter::repeat_n(zero, m0));
                let values = linalg::values(&a);
                let frame = PivotFrame::from_matrix(
                    &values,
                    linalg::numerical_rank(&values, self.rank_tol),
                );
                let particular = frame.solve(&a, &rhs)?;
                let check = &values
                    * nalgebra::DVector::from_iterator(
                        d + m0,
                        particular.iter().map(|j| j.value()),
                    )
                    - nalgebra::DVector::from_iterator(d + m0, rhs.iter().map(|j| j.value()));
                if check.norm() > 1e-8 * (1.0 + values.norm()) {
                    return Err(Error::InconsistentSystem {
                        residual: check.norm(),
                    });
                }
                let null = frame.null_basis(&a)?;
                min_norm_head(&particular, &null, d, self.rank_tol)?
            }
        };
        self.reeb = Some(r.clone());
        Ok(r)
    }

    /// `gamma_H = dH - (H + R(H)) eta`.
    pub fn gamma(&mut self) -> Result<Vec<Jet>> {
        if let Some(g) = &self.gamma {
            return Ok(g.clone());
        }
        let r = self.reeb()?;
        let rh = linalg::dot(&r, &self.dh);
        let factor = &self.h + &rh;
        let g: Vec<Jet> = self
            .dh
            .iter()
            .zip(&self.structure.eta)
            .map(|(d, e)| d - &(&factor * e))
            .collect();
        self.gamma = Some(g.clone());
        Ok(g)
    }

    fn value_raw(&mut self, i: usize) -> Result<Jet> {
        if let Some(v) = self.values.get(&i) {
            return Ok(v.clone());
        }
        let def = self.reg.defs[i].clone();
        let v = match def.kind {
            ConstraintKind::User(u) => self.sys.user[u].field.taylor_with(&self.vars)?,
            ConstraintKind::Complement {
                group,
                column,
                sign,
            } => {
                let null = self.null_basis(group)?;
                let frame = &self.reg.groups[group].frame;
                let pos = frame
                    .free_columns()
                    .iter()
                    .position(|&c| c == column)
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("column {column} is not free"))
                    })?;
                let w: Vec<Jet> = null[pos][..self.dim()].to_vec();
                let gamma = self.gamma()?;
                linalg::dot(&gamma, &w).scale(sign)
            }
            ConstraintKind::ReebDerivative { target } => {
                let r = self.reeb()?;
                let g = self.gradient(target)?;
                linalg::dot(&r, &g)
            }
        };
        self.values.insert(i, v.clone());
        Ok(v)
    }

    /// Gradient jets of constraint `i`.
    pub fn gradient(&mut self, i: usize) -> Result<Vec<Jet>> {
        if let Some(g) = self.grads.get(&i) {
            return Ok(g.clone());
        }
        let g = match self.reg.defs[i].kind {
            ConstraintKind::User(u) => self.sys.user[u]
                .gradient
                .iter()
                .map(|f| f.taylor_with(&self.vars))
                .collect::<Result<Vec<_>>>()?,
            _ => self.value_raw(i)?.gradient_jets(),
        };
        self.grads.insert(i, g.clone());
        Ok(g)
    }

    /// The complement matrix `[[B^T, -G^T], [G0, 0]]` for a list of priors.
    pub fn complement_matrix(&mut self, priors: &[usize]) -> Result<Mat<Jet>> {
        let g: Mat<Jet> = priors
            .iter()
            .map(|&p| self.gradient(p))
            .collect::<Result<_>>()?;
        let g0 = self.base_gradients()?;
        let d = self.dim();
        let zero = self.vars[0].zero_like();
        let mut a = vec![vec![zero; d + g.len()]; d + g0.len()];
        for i in 0..d {
            for j in 0..d {
                a[i][j] = self.structure.flat[j][i].clone();
            }
            for (k, gk) in g.iter().enumerate() {
                a[i][d + k] = -&gk[i];
            }
        }
        for (k, gk) in g0.iter().enumerate() {
            for j in 0..d {
                a[d + k][j] = gk[j].clone();
            }
        }
        Ok(a)
    }

    fn null_basis(&mut self, group: usize) -> Result<Mat<Jet>> {
        if let Some(n) = self.nulls.get(&group) {
            return Ok(n.clone());
        }
        let g = &self.reg.groups[group];
        let a = self.complement_matrix(&g.priors.clone())?;
        let n = g.frame.null_basis(&a)?;
        self.nulls.insert(group, n.clone());
        Ok(n)
    }

    /// Value jet of constraint `i`, truncated to the requested order.
    pub fn value(&mut self, i: usize) -> Result<Jet> {
        Ok(self.value_raw(i)?.truncate(self.order))
    }
}

/// Minimum-norm solution restricted to the first `head` components of the unknowns.
fn min_norm_head(
    particular: &[Jet],
    null: &[Vec<Jet>],
    head: usize,
    rank_tol: f64,
) -> Result<Vec<Jet>> {
    let x: Vec<Jet> = particular[..head].to_vec();
    let mut kept: Vec<Vec<Jet>> = Vec::new();
    let mut rank = 0;
    for v in null {
        let h = v[..head].to_vec();
        let mut trial = kept.clone();
        trial.push(h.clone());
        let r = linalg::numerical_rank(&linalg::values(&trial), rank_tol);
        let norm: f64 = h.iter().map(|j| j.value().powi(2)).sum::<f64>().sqrt();
        if r > rank && norm > 1e-14 {
            kept.push(h);
            rank = r;
        }
    }
    linalg::remove_span(&x, &kept)
}
