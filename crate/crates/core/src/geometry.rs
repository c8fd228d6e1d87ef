//! Pointwise contact, precontact and cosymplectic geometry.
//!
//! A [`PrecontactStructure`] is a one-form `eta` given by expression fields.
//! Its exterior derivative is formed symbolically, and the flat map
//! `v -> i_v d(eta) + eta(v) eta` is assembled as a dense matrix whose
//! column `i` holds the components of the image of the `i`-th coordinate
//! vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{ChartSpec, Expr, ScalarField, SecondBlock};
use crate::jet::{Jet, JetSpace};
use crate::linalg::{self, Mat, PivotFrame};

/// Default relative threshold below which singular values count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// A numeric point in a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    chart: ChartSpec,
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(chart: &ChartSpec, coords: Vec<f64>) -> Result<PhasePoint> {
        chart.check_point(&coords)?;
        Ok(PhasePoint {
            chart: chart.clone(),
            coords,
        })
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Contact,
    Precontact,
    Cosymplectic,
}

/// Where a structure came from.
#[derive(Debug, Clone)]
pub enum StructureSource {
    /// `dz - p_i dq^i` on `T*Q x R`.
    Canonical,
    /// `dz - (dL/dqdot^i) dq^i` on `TQ x R`.
    Lagrangian(ScalarField),
    /// Components supplied directly.
    OneForm,
}

/// How to pick a Reeb vector when the structure is degenerate.
#[derive(Debug, Clone)]
pub enum ReebChoice {
    /// Minimum-norm solution of `flat(R) = eta`.
    MinNorm,
    /// Components given as fields; they must solve `flat(R) = eta`.
    Explicit(Vec<ScalarField>),
}

/// A one-form on a chart together with its exterior derivative.
#[derive(Debug, Clone)]
pub struct PrecontactStructure {
    chart: ChartSpec,
    eta: Vec<ScalarField>,
    d_eta: Vec<Vec<ScalarField>>,
    source: StructureSource,
}

impl PrecontactStructure {
    /// Build from one-form components; `d_eta[i][j] = d_i eta_j - d_j eta_i`.
    pub fn from_one_form(chart: &ChartSpec, eta: Vec<ScalarField>) -> Result<PrecontactStructure> {
        Self::assemble(chart, eta, StructureSource::OneForm)
    }

    fn assemble(
        chart: &ChartSpec,
        eta: Vec<ScalarField>,
        source: StructureSource,
    ) -> Result<PrecontactStructure> {
        let d = chart.dim();
        if eta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: eta.len(),
            });
        }
        if eta.iter().any(|f| f.chart() != chart) {
            return Err(Error::InvalidChart(
                "one-form components use another chart".into(),
            ));
        }
        let d_eta = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let body = Expr::sub(
                            (*eta[j].derivative_expr(&[i])).clone(),
                            (*eta[i].derivative_expr(&[j])).clone(),
                        );
                        ScalarField::from_expr(chart, body)
                    })
                    .collect()
            })
            .collect();
        Ok(PrecontactStructure {
            chart: chart.clone(),
            eta,
            d_eta,
            source,
        })
    }

    /// Canonical contact form `dz - p_i dq^i` in Darboux coordinates.
    pub fn canonical_contact(n: usize) -> Result<PrecontactStructure> {
        let chart = ChartSpec::darboux(n)?;
        Self::canonical_on(&chart)
    }

    /// Canonical contact form on a chart with a momentum block.
    pub fn canonical_on(chart: &ChartSpec) -> Result<PrecontactStructure> {
        if chart.second_block() != SecondBlock::Momentum {
            return Err(Error::InvalidChart(
                "canonical form needs a momentum block".into(),
            ));
        }
        let n = chart.n();
        let mut eta = Vec::with_capacity(chart.dim());
        for i in 0..n {
            eta.push(ScalarField::from_expr(
                chart,
                Expr::neg(Expr::Var(chart.s(i))),
            ));
        }
        for _ in 0..n {
            eta.push(ScalarField::constant(chart, 0.0));
        }
        eta.push(ScalarField::constant(chart, 1.0));
        Self::assemble(chart, eta, StructureSource::Canonical)
    }

    /// `eta_L = dz - (dL/dqdot^i) dq^i` for a Lagrangian on a velocity chart.
    pub fn lagrangian(l: &ScalarField) -> Result<PrecontactStructure> {
        let chart = l.chart().clone();
        if chart.second_block() != SecondBlock::Velocity {
            return Err(Error::InvalidChart(
                "Lagrangian needs a velocity block".into(),
            ));
        }
        let n = chart.n();
        let mut eta = Vec::with_capacity(chart.dim());
        for i in 0..n {
            eta.push(ScalarField::from_expr(
                &chart,
                Expr::neg((*l.derivative_expr(&[chart.s(i)])).clone()),
            ));
        }
        for _ in 0..n {
            eta.push(ScalarField::constant(&chart, 0.0));
        }
        eta.push(ScalarField::constant(&chart, 1.0));
        Self::assemble(&chart, eta, StructureSource::Lagrangian(l.clone()))
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn source(&self) -> &StructureSource {
        &self.source
    }

    pub fn eta_fields(&self) -> &[ScalarField] {
        &self.eta
    }

    pub fn d_eta_fields(&self) -> &[Vec<ScalarField>] {
        &self.d_eta
    }

    /// Evaluate everything at `x`, classifying with `rank_tol`.
    pub fn at(&self, x: &[f64], rank_tol: f64) -> Result<StructureAtPoint> {
        self.chart.check_point(x)?;
        let d = self.dim();
        let eta = DVector::from_iterator(
            d,
            self.eta
                .iter()
                .map(|f| f.eval(x))
                .collect::<Result<Vec<_>>>()?,
        );
        let mut d_eta = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = self.d_eta[i][j].eval(x)?;
                d_eta[(i, j)] = v;
                d_eta[(j, i)] = -v;
            }
        }
        Ok(StructureAtPoint::from_parts(eta, d_eta, rank_tol, false))
    }

    /// Taylor jets of `eta`, `d(eta)` and the flat matrix at `x`.
    pub fn jets(&self, x: &[f64], order: usize) -> Result<StructureJets> {
        self.chart.check_point(x)?;
        let space = JetSpace::get(self.dim(), order);
        let vars = Jet::variables(&space, x);
        self.jets_with(&vars)
    }

    pub fn jets_with(&self, vars: &[Jet]) -> Result<StructureJets> {
        let d = self.dim();
        let eta: Vec<Jet> = self
            .eta
            .iter()
            .map(|f| f.taylor_with(vars))
            .collect::<Result<_>>()?;
        let zero = vars[0].zero_like();
        let mut d_eta = vec![vec![zero.clone(); d]; d];
        for i in 0..d {
            for j in (i + 1)..d {
                let v = self.d_eta[i][j].taylor_with(vars)?;
                d_eta[j][i] = -&v;
                d_eta[i][j] = v;
            }
        }
        let flat = (0..d)
            .map(|row| {
                (0..d)
                    .map(|col| &d_eta[col][row] + &(&eta[col] * &eta[row]))
                    .collect()
            })
            .collect();
        Ok(StructureJets { eta, d_eta, flat })
    }
}

/// Jets of the structure at one point.
#[derive(Debug, Clone)]
pub struct StructureJets {
    pub eta: Vec<Jet>,
    pub d_eta: Mat<Jet>,
    /// Row `j`, column `i`: component `j` of `flat(d/dx^i)`.
    pub flat: Mat<Jet>,
}

impl StructureJets {
    pub fn flat_values(&self) -> DMatrix<f64> {
        linalg::values(&self.flat)
    }

    /// Minimum-norm Reeb vector as jets.
    pub fn reeb_min_norm(&self, rank_tol: f64) -> Result<Vec<Jet>> {
        let b = self.flat_values();
        let rank = linalg::numerical_rank(&b, rank_tol);
        let frame = PivotFrame::from_matrix(&b, rank);
        let particular = frame.solve(&self.flat, &self.eta)?;
        let null = frame.null_basis(&self.flat)?;
        linalg::remove_span(&particular, &null)
    }

    /// Matrix of the Jacobi bivector, `-B^{-T} D B^{-1}`, for a contact structure.
    pub fn lambda(&self) -> Result<Mat<Jet>> {
        let inv = linalg::inverse(&self.flat).map_err(|_| Error::NotContact)?;
        let inv_t = linalg::transpose(&inv);
        let d = self.eta.len();
        // (B^{-T} D)
        let left: Mat<Jet> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let col: Vec<Jet> = (0..d).map(|k| self.d_eta[k][j].clone()).collect();
                        linalg::dot(&inv_t[i], &col)
                    })
                    .collect()
            })
            .collect();
        Ok((0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let col: Vec<Jet> = (0..d).map(|k| inv[k][j].clone()).collect();
                        -linalg::dot(&left[i], &col)
                    })
                    .collect()
            })
            .collect())
    }
}

/// The structure evaluated at one point.
#[derive(Debug, Clone)]
pub struct StructureAtPoint {
    pub eta: DVector<f64>,
    /// `d_eta[(i, j)] = d(eta)(d_i, d_j)`.
    pub d_eta: DMatrix<f64>,
    /// Column `i` is `flat(d_i)`.
    pub flat: DMatrix<f64>,
    pub rank: usize,
    pub kind: StructureKind,
    pub rank_tol: f64,
}

/// Jacobi bivector and vector field at a point.
#[derive(Debug, Clone)]
pub struct JacobiPairAtPoint {
    /// `lambda(alpha, beta) = alpha^T lambda beta`.
    pub lambda: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl JacobiPairAtPoint {
    pub fn eval(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        alpha.dot(&(&self.lambda * beta))
    }
}

impl StructureAtPoint {
    fn from_parts(
        eta: DVector<f64>,
        d_eta: DMatrix<f64>,
        rank_tol: f64,
        cosymplectic: bool,
    ) -> Self {
        let flat = d_eta.transpose() + &eta * eta.transpose();
        let rank = linalg::numerical_rank(&flat, rank_tol);
        let kind = if cosymplectic {
            StructureKind::Cosymplectic
        } else if rank == eta.len() {
            StructureKind::Contact
        } else {
            StructureKind::Precontact
        };
        StructureAtPoint {
            eta,
            d_eta,
            flat,
            rank,
            kind,
            rank_tol,
        }
    }

    /// Standard cosymplectic pair `Omega = dq^i ^ dp_i`, `eta = dz` on a Darboux chart of base dimension `n`.
    pub fn cosymplectic(n: usize) -> StructureAtPoint {
        let d = 2 * n + 1;
        let mut eta = DVector::zeros(d);
        eta[2 * n] = 1.0;
        let mut omega = DMatrix::zeros(d, d);
        for i in 0..n {
            omega[(i, n + i)] = 1.0;
            omega[(n + i, i)] = -1.0;
        }
        Self::from_parts(eta, omega, DEFAULT_RANK_TOL, true)
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    /// `<flat(v), w> = d(eta)(v, w) + eta(v) eta(w)`.
    pub fn pairing(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (&self.flat * v).dot(w)
    }

    /// Orthonormal basis of the characteristic distribution `ker flat`.
    pub fn characteristic(&self) -> DMatrix<f64> {
        linalg::null_space(&self.flat, self.rank_tol)
    }

    /// Minimum-norm solution of `flat(v) = alpha` with a consistency check.
    pub fn sharp(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        let (v, residual) = linalg::lstsq_min_norm(&self.flat, alpha, self.rank_tol);
        if residual > 1e-9 * (1.0 + alpha.norm()) {
            return Err(Error::InconsistentSystem { residual });
        }
        Ok(v)
    }

    /// Minimum-norm Reeb vector.
    pub fn reeb(&self) -> Result<DVector<f64>> {
        self.sharp(&self.eta)
    }

    /// `gamma_H = dH - (H + R(H)) eta` for a given Reeb vector.
    pub fn gamma(&self, h: f64, dh: &DVector<f64>, reeb: &DVector<f64>) -> DVector<f64> {
        dh - (h + dh.dot(reeb)) * &self.eta
    }

    /// `lambda(alpha, beta) = -d(eta)(v_alpha, v_beta)` with `flat(v) = covector`.
    pub fn lambda(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
        let va = self.sharp(alpha)?;
        let vb = self.sharp(beta)?;
        Ok(-va.dot(&(&self.d_eta * vb)))
    }

    /// Jacobi pair `(lambda, E = -R)`; exact for contact structures, pseudo-inverse otherwise.
    pub fn jacobi_pair(&self) -> Result<JacobiPairAtPoint> {
        let pinv = linalg::pseudo_inverse(&self.flat, self.rank_tol * self.flat.norm());
        let lambda = -(pinv.transpose() * &self.d_eta * &pinv);
        Ok(JacobiPairAtPoint {
            lambda,
            e: -self.reeb()?,
        })
    }
}

/// Class `2r + 1` of the structure: the rank of the flat map, required to be
/// constant over the samples and cross-checked against the rank of `d(eta)` on `ker eta`.
pub fn form_class(
    structure: &PrecontactStructure,
    samples: &[Vec<f64>],
    rank_tol: f64,
) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "form_class needs at least one sample".into(),
        ));
    }
    let at: Vec<StructureAtPoint> = samples
        .iter()
        .map(|x| structure.at(x, rank_tol))
        .collect::<Result<_>>()?;
    let ranks: Vec<usize> = at.iter().map(|s| s.rank).collect();
    if ranks.iter().any(|&r| r != ranks[0]) {
        return Err(Error::RankNotConstant {
            context: "flat map".into(),
            ranks,
        });
    }
    let rank = ranks[0];
    if rank % 2 == 0 {
        return Err(Error::NotOdd(rank));
    }
    // eta ^ (d eta)^r != 0 and eta ^ (d eta)^{r+1} = 0 iff d(eta) has rank 2r on ker eta.
    let s = &at[0];
    let row = DMatrix::from_row_slice(1, s.dim(), s.eta.as_slice());
    let k = linalg::null_space(&row, rank_tol);
    let restricted = k.transpose() * &s.d_eta * &k;
    let two_r = linalg::numerical_rank(&restricted, rank_tol);
    if two_r + 1 != rank {
        return Err(Error::NotOdd(rank));
    }
    Ok(rank)
}

/// Orthonormal basis of the characteristic distribution at `x`.
pub fn characteristic_distribution(
    structure: &PrecontactStructure,
    x: &[f64],
    rank_tol: f64,
) -> Result<DMatrix<f64>> {
    Ok(structure.at(x, rank_tol)?.characteristic())
}

/// Minimum-norm Reeb vector at `x`.
pub fn reeb(structure: &PrecontactStructure, x: &[f64], rank_tol: f64) -> Result<DVector<f64>> {
    structure.at(x, rank_tol)?.reeb()
}

/// Gradient of a field as a vector.
pub fn differential(h: &ScalarField, x: &[f64]) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(h.eval_jet(x, 1)?.gradient))
}

/// `gamma_H` at `x` with the minimum-norm Reeb vector.
pub fn gamma_h(
    structure: &PrecontactStructure,
    h: &ScalarField,
    x: &[f64],
    rank_tol: f64,
) -> Result<DVector<f64>> {
    let s = structure.at(x, rank_tol)?;
    let r = s.reeb()?;
    Ok(s.gamma(h.eval(x)?, &differential(h, x)?, &r))
}

/// `gamma_H` at `x` with a caller-supplied Reeb vector.
pub fn gamma_h_with_reeb(
    structure: &PrecontactStructure,
    h: &ScalarField,
    x: &[f64],
    reeb: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = structure.at(x, DEFAULT_RANK_TOL)?;
    Ok(s.gamma(h.eval(x)?, &differential(h, x)?, reeb))
}

fn require_darboux(h: &ScalarField) -> Result<()> {
    if h.chart().second_block() != SecondBlock::Momentum {
        return Err(Error::InvalidChart(
            "Hamiltonian must live on a momentum chart".into(),
        ));
    }
    Ok(())
}

/// Contact Hamiltonian vector field in Darboux coordinates:
/// `H_p d_q - (H_q + p H_z) d_p + (p H_p - H) d_z`.
pub fn contact_hamiltonian_vf(h: &ScalarField, x: &[f64]) -> Result<DVector<f64>> {
    require_darboux(h)?;
    let c = h.chart();
    let n = c.n();
    let j = h.eval_jet(x, 1)?;
    let hz = j.gradient[c.z()];
    let mut v = DVector::zeros(c.dim());
    let mut p_hp = 0.0;
    for i in 0..n {
        let hq = j.gradient[c.q(i)];
        let hp = j.gradient[c.s(i)];
        let p = x[c.s(i)];
        v[c.q(i)] = hp;
        v[c.s(i)] = -(hq + p * hz);
        p_hp += p * hp;
    }
    v[c.z()] = p_hp - j.value;
    Ok(v)
}

/// Gradient, Hamiltonian and evolution fields of the standard cosymplectic structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CosymplecticFields {
    pub grad: DVector<f64>,
    pub x_h: DVector<f64>,
    pub e_h: DVector<f64>,
}

pub fn cosymplectic_fields(h: &ScalarField, x: &[f64]) -> Result<CosymplecticFields> {
    require_darboux(h)?;
    let s = StructureAtPoint::cosymplectic(h.chart().n());
    let dh = differential(h, x)?;
    let grad = s.sharp(&dh)?;
    let r = s.reeb()?;
    let x_h = &grad - dh.dot(&r) * &r;
    let e_h = &x_h + &r;
    Ok(CosymplecticFields { grad, x_h, e_h })
}

/// `lambda(alpha, beta)` at `x`.
pub fn lambda_bracket(
    structure: &PrecontactStructure,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    x: &[f64],
    rank_tol: f64,
) -> Result<f64> {
    structure.at(x, rank_tol)?.lambda(alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn example1_lagrangian() -> ScalarField {
        let chart = ChartSpec::tangent(3).unwrap();
        let params: BTreeMap<String, f64> = [("m", 1.0), ("mu", 1.0), ("gamma", 0.1)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        ScalarField::parse_with_params(
            "m/2*(qdot1 + qdot2)^2 + mu/2*qdot3^2 + q1^2 + q2^2/2 + gamma*z",
            &chart,
            &params,
        )
        .unwrap()
    }

    fn example2_lagrangian() -> ScalarField {
        let chart = ChartSpec::tangent(2).unwrap();
        ScalarField::parse("0.5*(qdot1 + qdot2)^2 + q1 + q2*z", &chart).unwrap()
    }

    #[test]
    fn canonical_components() {
        let s = PrecontactStructure::canonical_contact(1).unwrap();
        let at = s.at(&[1.0, 2.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!(at.eta, v(&[-2.0, 0.0, 1.0]));
        assert_eq!(at.flat.column(0).into_owned(), v(&[4.0, 1.0, -2.0]));
        assert_eq!(at.flat.column(1).into_owned(), v(&[-1.0, 0.0, 0.0]));
        assert_eq!(at.flat.column(2).into_owned(), v(&[-2.0, 0.0, 1.0]));
        assert_eq!(at.kind, StructureKind::Contact);

        let s2 = PrecontactStructure::canonical_contact(2).unwrap();
        let at2 = s2
            .at(&[0.3, 0.1, -1.0, 2.0, 0.5], DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(at2.d_eta[(0, 2)], 1.0);
        assert_eq!(at2.d_eta[(0, 3)], 0.0);
    }

    #[test]
    fn lagrangian_forms_of_the_examples() {
        let s2 = PrecontactStructure::lagrangian(&example2_lagrangian()).unwrap();
        let x = [0.2, -0.4, 1.5, 0.7, 3.0];
        let at = s2.at(&x, DEFAULT_RANK_TOL).unwrap();
        let sum = 1.5 + 0.7;
        assert_eq!(at.eta, v(&[-sum, -sum, 0.0, 0.0, 1.0]));

        let s1 = PrecontactStructure::lagrangian(&example1_lagrangian()).unwrap();
        let x1 = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let d = s1.at(&x1, DEFAULT_RANK_TOL).unwrap().d_eta;
        // (dq1 + dq2) ^ (dqdot1 + dqdot2) + dq3 ^ dqdot3
        let mut expect = DMatrix::zeros(7, 7);
        for a in [0, 1] {
            for b in [3, 4] {
                expect[(a, b)] = 1.0;
                expect[(b, a)] = -1.0;
            }
        }
        expect[(2, 5)] = 1.0;
        expect[(5, 2)] = -1.0;
        assert_eq!(d, expect);

        let free = ScalarField::parse("qdot^2/2", &ChartSpec::tangent(1).unwrap()).unwrap();
        let s = PrecontactStructure::lagrangian(&free).unwrap();
        for x in [[0.0, 3.0, 0.0], [1.0, -2.0, 5.0]] {
            let at = s.at(&x, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(at.eta, v(&[-x[1], 0.0, 1.0]));
            assert_eq!(at.kind, StructureKind::Contact);
        }
    }

    #[test]
    fn classes_of_the_examples() {
        let s1 = PrecontactStructure::lagrangian(&example1_lagrangian()).unwrap();
        let samples1 = vec![
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            vec![1.0, -1.0, 2.0, 0.0, 3.0, -2.0, 1.0],
        ];
        assert_eq!(form_class(&s1, &samples1, DEFAULT_RANK_TOL).unwrap(), 5);
        let s2 = PrecontactStructure::lagrangian(&example2_lagrangian()).unwrap();
        let samples2 = vec![vec![0.2, -0.4, 1.5, 0.7, 3.0]];
        assert_eq!(form_class(&s2, &samples2, DEFAULT_RANK_TOL).unwrap(), 3);
        let c2 = PrecontactStructure::canonical_contact(2).unwrap();
        assert_eq!(
            form_class(&c2, &[vec![0.0; 5]], DEFAULT_RANK_TOL).unwrap(),
            5
        );
    }

    #[test]
    fn class_rank_jump_is_reported() {
        // eta = dz - q^2 dp, whose differential vanishes at q = 0.
        let chart = ChartSpec::darboux(1).unwrap();
        let eta = vec![
            ScalarField::constant(&chart, 0.0),
            ScalarField::parse("-q^2", &chart).unwrap(),
            ScalarField::constant(&chart, 1.0),
        ];
        let s = PrecontactStructure::from_one_form(&chart, eta).unwrap();
        match form_class(
            &s,
            &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
            DEFAULT_RANK_TOL,
        ) {
            Err(Error::RankNotConstant { ranks, .. }) => assert_eq!(ranks, vec![3, 1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn characteristic_of_the_examples() {
        let s1 = PrecontactStructure::lagrangian(&example1_lagrangian()).unwrap();
        let c = characteristic_distribution(
            &s1,
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let mut expect = DMatrix::zeros(7, 2);
        expect[(0, 0)] = 1.0;
        expect[(1, 0)] = -1.0;
        expect[(3, 1)] = 1.0;
        expect[(4, 1)] = -1.0;
        let diff = linalg::projector(&c, 1e-10) - linalg::projector(&expect, 1e-10);
        assert!(diff.norm() < 1e-8);

        let s2 = PrecontactStructure::lagrangian(&example2_lagrangian()).unwrap();
        let c2 = characteristic_distribution(&s2, &[0.2, -0.4, 1.5, 0.7, 3.0], DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(c2.ncols(), 2);
        let w = v(&[0.0, 0.0, 1.0, -1.0, 0.0]);
        let p = linalg::projector(&c2, 1e-10);
        assert!((&p * &w - &w).norm() < 1e-10);

        let can = PrecontactStructure::canonical_contact(1).unwrap();
        assert_eq!(
            characteristic_distribution(&can, &[1.0, 2.0, 0.0], DEFAULT_RANK_TOL)
                .unwrap()
                .ncols(),
            0
        );
    }

    #[test]
    fn reeb_vectors() {
        let can = PrecontactStructure::canonical_contact(1).unwrap();
        let r = reeb(&can, &[1.0, 2.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert!((r - v(&[0.0, 0.0, 1.0])).norm() < 1e-12);

        let free = ScalarField::parse("qdot^2/2", &ChartSpec::tangent(1).unwrap()).unwrap();
        let s = PrecontactStructure::lagrangian(&free).unwrap();
        let r = reeb(&s, &[0.0, 3.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert!((r - v(&[0.0, 0.0, 1.0])).norm() < 1e-12);

        let s1 = PrecontactStructure::lagrangian(&example1_lagrangian()).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let at = s1.at(&x, DEFAULT_RANK_TOL).unwrap();
        let r = at.reeb().unwrap();
        assert!((&at.flat * &r - &at.eta).norm() < 1e-9);
        assert!((at.eta.dot(&r) - 1.0).abs() < 1e-9);
        assert!((at.characteristic().transpose() * &r).norm() < 1e-9);
    }

    #[test]
    fn reeb_residual_where_the_flat_matrix_has_repeated_singular_values() {
        let s2 = PrecontactStructure::lagrangian(&example2_lagrangian()).unwrap();
        let x = [
            0.8639809549832806,
            0.7534002114285601,
            0.6520300294304655,
            -0.6548162166476357,
            -0.6717780771948232,
        ];
        let at = s2.at(&x, DEFAULT_RANK_TOL).unwrap();
        let r = at.reeb().unwrap();
        assert!((&at.flat * &r - &at.eta).amax() < 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let can = PrecontactStructure::canonical_contact(1).unwrap();
        let chart = can.chart().clone();
        let h = ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", &chart).unwrap();
        let g = gamma_h(&can, &h, &[1.0, 2.0, 0.0], DEFAULT_RANK_TOL).unwrap();
        assert!((g - v(&[6.2, 2.0, -2.5])).norm() < 1e-12);

        let zero = ScalarField::constant(&chart, 0.0);
        assert_eq!(
            gamma_h(&can, &zero, &[1.0, 2.0, 0.0], DEFAULT_RANK_TOL).unwrap(),
            v(&[0.0, 0.0, 0.0])
        );

        let hz = ScalarField::parse("z", &chart).unwrap();
        let x = [0.7, -1.5, 2.0];
        let g = gamma_h(&can, &hz, &x, DEFAULT_RANK_TOL).unwrap();
        assert!((g - v(&[(x[2] + 1.0) * x[1], 0.0, -x[2]])).norm() < 1e-12);
    }

    #[test]
    fn darboux_hamiltonian_fields() {
        let chart = ChartSpec::darboux(1).unwrap();
        let h = ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", &chart).unwrap();
        let x = [1.0, 2.0, 0.0];
        let xh = contact_hamiltonian_vf(&h, &x).unwrap();
        assert!((&xh - v(&[2.0, -1.2, 1.5])).norm() < 1e-12);
        let can = PrecontactStructure::canonical_contact(1).unwrap();
        let at = can.at(&x, DEFAULT_RANK_TOL).unwrap();
        assert!((at.eta.dot(&xh) + 2.5).abs() < 1e-12);

        let hz = ScalarField::parse("z", &chart).unwrap();
        assert_eq!(
            contact_hamiltonian_vf(&hz, &[0.0, 0.0, 1.0]).unwrap(),
            v(&[0.0, 0.0, -1.0])
        );
        let hp = ScalarField::parse("p", &chart).unwrap();
        assert_eq!(
            contact_hamiltonian_vf(&hp, &[0.4, 1.3, -2.0]).unwrap(),
            v(&[1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn cosymplectic_examples() {
        let chart = ChartSpec::darboux(1).unwrap();
        let h = ScalarField::parse("p^2/2 + q^2/2 + z", &chart).unwrap();
        let f = cosymplectic_fields(&h, &[1.0, 2.0, 0.0]).unwrap();
        assert!((f.grad - v(&[2.0, -1.0, 1.0])).norm() < 1e-12);
        assert!((f.x_h - v(&[2.0, -1.0, 0.0])).norm() < 1e-12);
        assert!((f.e_h - v(&[2.0, -1.0, 1.0])).norm() < 1e-12);

        let c = ScalarField::constant(&chart, 4.0);
        let f = cosymplectic_fields(&c, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.grad, v(&[0.0, 0.0, 0.0]));
        assert_eq!(f.e_h, v(&[0.0, 0.0, 1.0]));

        let hp = ScalarField::parse("p", &chart).unwrap();
        let f = cosymplectic_fields(&hp, &[0.0, 1.0, 0.0]).unwrap();
        assert!((f.e_h - v(&[1.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn lambda_on_canonical_coordinates() {
        let can = PrecontactStructure::canonical_contact(1).unwrap();
        let dq = v(&[1.0, 0.0, 0.0]);
        let dp = v(&[0.0, 1.0, 0.0]);
        let dz = v(&[0.0, 0.0, 1.0]);
        for x in [[1.0, 2.0, 0.0], [-0.3, 0.7, 5.0]] {
            let p = x[1];
            assert!(
                (lambda_bracket(&can, &dq, &dp, &x, DEFAULT_RANK_TOL).unwrap() + 1.0).abs() < 1e-12
            );
            assert!(
                lambda_bracket(&can, &dq, &dz, &x, DEFAULT_RANK_TOL)
                    .unwrap()
                    .abs()
                    < 1e-12
            );
            assert!(
                (lambda_bracket(&can, &dp, &dz, &x, DEFAULT_RANK_TOL).unwrap() - p).abs() < 1e-12
            );
            let at = can.at(&x, DEFAULT_RANK_TOL).unwrap();
            assert!(at.lambda(&at.eta, &dp).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_jets_match_pointwise_values() {
        let can = PrecontactStructure::canonical_contact(2).unwrap();
        let x = [0.3, -0.2, 1.1, 0.4, 0.9];
        let j = can.jets(&x, 1).unwrap();
        let lam = j.lambda().unwrap();
        let at = can.at(&x, DEFAULT_RANK_TOL).unwrap();
        let pair = at.jacobi_pair().unwrap();
        for a in 0..5 {
            for b in 0..5 {
                assert!((lam[a][b].value() - pair.lambda[(a, b)]).abs() < 1e-12);
            }
        }
        assert!((pair.e + v(&[0.0, 0.0, 0.0, 0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn reeb_jets_match_pointwise_solution() {
        let s1 = PrecontactStructure::lagrangian(&example1_lagrangian()).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let r = s1
            .jets(&x, 1)
            .unwrap()
            .reeb_min_norm(DEFAULT_RANK_TOL)
            .unwrap();
        let rp = s1.at(&x, DEFAULT_RANK_TOL).unwrap().reeb().unwrap();
        for i in 0..7 {
            assert!((r[i].value() - rp[i]).abs() < 1e-10);
        }
    }
}
