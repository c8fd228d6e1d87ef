//! Lagrangian side: energy, Legendre map, regular Herglotz dynamics and the
//! second-order section of a solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{ChartSpec, Expr, ScalarField, SecondBlock};
use crate::geometry::PrecontactStructure;
use crate::linalg::{self, PivotFrame};

/// A Lagrangian on `TQ x R` with its precontact form and energy.
#[derive(Debug, Clone)]
pub struct LagrangianSystem {
    l: ScalarField,
    structure: PrecontactStructure,
    energy: ScalarField,
}

/// Image of a point under the Legendre map.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreImage {
    /// Point in `(q, p, z)` coordinates.
    pub target: Vec<f64>,
    /// Jacobian of the map at the source point.
    pub jacobian: DMatrix<f64>,
}

/// Result of moving a point along its Legendre fiber to where a solution is second order.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderPoint {
    pub point: Vec<f64>,
    /// `|S(X) - Delta|` at the new point.
    pub deviation: f64,
    /// `|FL(point) - y|`.
    pub fiber_error: f64,
}

impl LagrangianSystem {
    pub fn new(l: ScalarField) -> Result<LagrangianSystem> {
        let chart = l.chart().clone();
        if chart.second_block() != SecondBlock::Velocity {
            return Err(Error::InvalidChart(
                "Lagrangian needs a (q, qdot, z) chart".into(),
            ));
        }
        let structure = PrecontactStructure::lagrangian(&l)?;
        let mut body = Expr::neg(l.body().clone());
        for i in 0..chart.n() {
            let v = chart.s(i);
            body = Expr::add(
                body,
                Expr::mul(Expr::Var(v), (*l.derivative_expr(&[v])).clone()),
            );
        }
        let energy = ScalarField::from_expr(&chart, body);
        Ok(LagrangianSystem {
            l,
            structure,
            energy,
        })
    }

    pub fn lagrangian(&self) -> &ScalarField {
        &self.l
    }

    pub fn chart(&self) -> &ChartSpec {
        self.l.chart()
    }

    pub fn n(&self) -> usize {
        self.chart().n()
    }

    pub fn structure(&self) -> &PrecontactStructure {
        &self.structure
    }

    /// `E_L = qdot^i dL/dqdot^i - L` as a field.
    pub fn energy_field(&self) -> &ScalarField {
        &self.energy
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        self.energy.eval(x)
    }

    /// Velocity Hessian `W_ij = d^2 L / dqdot^i dqdot^j`.
    pub fn velocity_hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.chart();
        let h = self.l.eval_jet(x, 2)?.hessian;
        Ok(DMatrix::from_fn(c.n(), c.n(), |i, j| h[c.s(i)][c.s(j)]))
    }

    pub fn legendre(&self, x: &[f64]) -> Result<LegendreImage> {
        let c = self.chart();
        let j = self.l.eval_jet(x, 2)?;
        let d = c.dim();
        let mut target = x.to_vec();
        let mut jacobian = DMatrix::identity(d, d);
        for i in 0..c.n() {
            let row = c.s(i);
            target[row] = j.gradient[row];
            for col in 0..d {
                jacobian[(row, col)] = j.hessian[row][col];
            }
        }
        Ok(LegendreImage { target, jacobian })
    }

    /// Basis of `ker (FL)_*`. Each vector carries a unit entry at one free velocity coordinate.
    pub fn ker_fl(&self, x: &[f64], rank_tol: f64) -> Result<Vec<DVector<f64>>> {
        let jac = self.legendre(x)?.jacobian;
        let rank = linalg::numerical_rank(&jac, rank_tol);
        let frame = PivotFrame::from_matrix(&jac, rank);
        let rows: Vec<Vec<f64>> = (0..jac.nrows())
            .map(|i| jac.row(i).iter().copied().collect())
            .collect();
        Ok(frame
            .null_basis(&rows)?
            .into_iter()
            .map(DVector::from_vec)
            .collect())
    }

    /// Largest `|Z(f)|` over the kernel basis vectors `Z` of the Legendre map at the samples.
    pub fn fiber_constancy_check(
        &self,
        f: &ScalarField,
        samples: &[Vec<f64>],
        rank_tol: f64,
    ) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in samples {
            let grad = DVector::from_vec(f.eval_jet(x, 1)?.gradient);
            for z in self.ker_fl(x, rank_tol)? {
                worst = worst.max(z.dot(&grad).abs());
            }
        }
        Ok(worst)
    }

    /// Right-hand side of `W b = rhs` for the Herglotz accelerations.
    fn acceleration_rhs(&self, x: &[f64]) -> Result<DVector<f64>> {
        let c = self.chart();
        let n = c.n();
        let j = self.l.eval_jet(x, 2)?;
        let lz = j.gradient[c.z()];
        Ok(DVector::from_fn(n, |i, _| {
            let vi = c.s(i);
            let mut r = j.gradient[c.q(i)] + j.gradient[vi] * lz - j.hessian[vi][c.z()] * j.value;
            for k in 0..n {
                r -= j.hessian[vi][c.q(k)] * x[c.s(k)];
            }
            r
        }))
    }

    /// `qdot d_q + b d_qdot + L d_z` with `b` from the Herglotz equations.
    pub fn regular_dynamics(&self, x: &[f64], rank_tol: f64) -> Result<DVector<f64>> {
        let c = self.chart();
        let n = c.n();
        let w = self.velocity_hessian(x)?;
        let rank = linalg::numerical_rank(&w, rank_tol);
        if rank < n {
            return Err(Error::SingularHessian { rank, dim: n });
        }
        let b = w
            .lu()
            .solve(&self.acceleration_rhs(x)?)
            .ok_or(Error::SingularHessian { rank, dim: n })?;
        let mut v = DVector::zeros(c.dim());
        for i in 0..n {
            v[c.q(i)] = x[c.s(i)];
            v[c.s(i)] = b[i];
        }
        v[c.z()] = self.l.eval(x)?;
        Ok(v)
    }

    /// Residuals `d/dt(dL/dqdot) - dL/dq - (dL/dqdot)(dL/dz)` along a curve jet.
    pub fn herglotz_residual(
        &self,
        q: &[f64],
        qdot: &[f64],
        qddot: &[f64],
        z: f64,
        zdot: f64,
    ) -> Result<Vec<f64>> {
        let c = self.chart();
        let n = c.n();
        for s in [q, qdot, qddot] {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.len(),
                });
            }
        }
        let mut x = Vec::with_capacity(c.dim());
        x.extend_from_slice(q);
        x.extend_from_slice(qdot);
        x.push(z);
        let j = self.l.eval_jet(&x, 2)?;
        let lz = j.gradient[c.z()];
        Ok((0..n)
            .map(|i| {
                let vi = c.s(i);
                let mut dt = j.hessian[vi][c.z()] * zdot;
                for k in 0..n {
                    dt += j.hessian[vi][c.q(k)] * qdot[k] + j.hessian[vi][c.s(k)] * qddot[k];
                }
                dt - j.gradient[c.q(i)] - j.gradient[vi] * lz
            })
            .collect())
    }

    /// Move `x` along its Legendre fiber to the point where the solution `field` is second order.
    pub fn second_order_section<F>(
        &self,
        field: F,
        y: &[f64],
        x: &[f64],
        rank_tol: f64,
    ) -> Result<SecondOrderPoint>
    where
        F: Fn(&[f64]) -> Result<DVector<f64>>,
    {
        let c = self.chart();
        let distance = fiber_distance(&self.legendre(x)?.target, y);
        if distance > 1e-8 {
            return Err(Error::NotOnFiber { distance });
        }
        let motion = field(x)?;
        let residual = self.motion_residual(&motion, x, rank_tol)?;
        if residual > 1e-8 {
            return Err(Error::NotASolution { residual });
        }
        let mut point = x.to_vec();
        for i in 0..c.n() {
            point[c.s(i)] = motion[c.q(i)];
        }
        let fiber_error = fiber_distance(&self.legendre(&point)?.target, y);
        if fiber_error > 1e-8 {
            return Err(Error::NotOnFiber {
                distance: fiber_error,
            });
        }
        let there = field(&point)?;
        let deviation = sode_deviation(c, &there, &point)?.norm();
        if deviation > 1e-8 {
            return Err(Error::NotASolution {
                residual: deviation,
            });
        }
        Ok(SecondOrderPoint {
            point,
            deviation,
            fiber_error,
        })
    }

    /// `|flat_L(X) - gamma_{E_L}|` with the minimum-norm Reeb vector.
    pub fn motion_residual(&self, v: &DVector<f64>, x: &[f64], rank_tol: f64) -> Result<f64> {
        let s = self.structure.at(x, rank_tol)?;
        let r = s.reeb()?;
        let dh = DVector::from_vec(self.energy.eval_jet(x, 1)?.gradient);
        let gamma = s.gamma(self.energy.eval(x)?, &dh, &r);
        Ok((&s.flat * v - gamma).norm())
    }
}

fn fiber_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `S(X) - Delta`: zero except in the velocity block, where it is `X^q - qdot`.
pub fn sode_deviation(chart: &ChartSpec, v: &DVector<f64>, x: &[f64]) -> Result<DVector<f64>> {
    chart.check_point(x)?;
    if v.len() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            found: v.len(),
        });
    }
    let mut out = DVector::zeros(chart.dim());
    for i in 0..chart.n() {
        out[chart.s(i)] = v[chart.q(i)] - x[chart.s(i)];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, DEFAULT_RANK_TOL};
    use std::collections::BTreeMap;

    fn sys(text: &str, n: usize) -> LagrangianSystem {
        LagrangianSystem::new(ScalarField::parse(text, &ChartSpec::tangent(n).unwrap()).unwrap())
            .unwrap()
    }

    fn example1() -> LagrangianSystem {
        let params: BTreeMap<String, f64> = [("gamma".to_string(), 0.1)].into_iter().collect();
        let l = ScalarField::parse_with_params(
            "(qdot1 + qdot2)^2/2 + qdot3^2/2 + q1^2 + q2^2/2 + gamma*z",
            &ChartSpec::tangent(3).unwrap(),
            &params,
        )
        .unwrap();
        LagrangianSystem::new(l).unwrap()
    }

    fn example2() -> LagrangianSystem {
        sys("0.5*(qdot1 + qdot2)^2 + q1 + q2*z", 2)
    }

    #[test]
    fn energies() {
        assert_eq!(example2().energy(&[0.0, 0.0, 1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(sys("qdot", 1).energy(&[0.3, 2.0, 1.0]).unwrap(), 0.0);
        let e = example1()
            .energy(&[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 2.0])
            .unwrap();
        assert!((e + 1.2).abs() < 1e-12);
    }

    #[test]
    fn legendre_images() {
        let x = [0.2, -0.3, 1.5, 0.25, 2.0];
        let img = example2().legendre(&x).unwrap();
        assert_eq!(img.target, vec![0.2, -0.3, 1.75, 1.75, 2.0]);
        assert_eq!(
            sys("qdot^2/2", 1)
                .legendre(&[1.0, -4.0, 2.0])
                .unwrap()
                .target,
            vec![1.0, -4.0, 2.0]
        );
        let img = example1()
            .legendre(&[0.0, 0.0, 0.0, 2.0, 3.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(img.target, vec![0.0, 0.0, 0.0, 5.0, 5.0, 1.0, 0.0]);
        assert_eq!(linalg::numerical_rank(&img.jacobian, DEFAULT_RANK_TOL), 6);
    }

    #[test]
    fn legendre_kernels() {
        let x = [0.2, -0.3, 1.5, 0.25, 2.0];
        let k = example2().ker_fl(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(k.len(), 1);
        let expect = DMatrix::from_column_slice(5, 1, &[0.0, 0.0, 1.0, -1.0, 0.0]);
        let got = DMatrix::from_columns(&k);
        assert!(
            (linalg::projector(&got, 1e-10) - linalg::projector(&expect, 1e-10)).norm() < 1e-10
        );
        assert!(sys("qdot^2/2", 1)
            .ker_fl(&[0.0, 1.0, 0.0], DEFAULT_RANK_TOL)
            .unwrap()
            .is_empty());
        let k1 = example1()
            .ker_fl(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(k1.len(), 1);
        assert!((k1[0][3] + k1[0][4]).abs() < 1e-12 && k1[0][3].abs() == 1.0);
    }

    #[test]
    fn fiber_constancy() {
        let s = example2();
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let t = k as f64;
                vec![
                    (0.3 * t).sin(),
                    (0.7 * t).cos(),
                    0.1 * t - 1.0,
                    (1.3 * t).sin() * 2.0,
                    0.5 + 0.05 * t,
                ]
            })
            .collect();
        assert!(
            s.fiber_constancy_check(s.energy_field(), &samples, DEFAULT_RANK_TOL)
                .unwrap()
                < 1e-12
        );
        let qdot1 = ScalarField::parse("qdot1", s.chart()).unwrap();
        assert_eq!(
            s.fiber_constancy_check(&qdot1, &samples, DEFAULT_RANK_TOL)
                .unwrap(),
            1.0
        );
        let s1 = example1();
        let x1 = vec![vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]];
        assert!(
            s1.fiber_constancy_check(s1.energy_field(), &x1, DEFAULT_RANK_TOL)
                .unwrap()
                < 1e-12
        );
    }

    #[test]
    fn regular_dynamics_examples() {
        let v = sys("qdot^2/2", 1)
            .regular_dynamics(&[0.0, 3.0, 0.0], DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(v, DVector::from_vec(vec![3.0, 0.0, 4.5]));
        let v = sys("qdot^2/2 - q", 1)
            .regular_dynamics(&[0.0, 0.0, 0.0], DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(v, DVector::from_vec(vec![0.0, -1.0, 0.0]));
        let v = sys("qdot^2/2 - 0.1*z", 1)
            .regular_dynamics(&[0.0, 2.0, 5.0], DEFAULT_RANK_TOL)
            .unwrap();
        assert!((v[1] + 0.2).abs() < 1e-15);
        assert!(matches!(
            example2().regular_dynamics(&[0.0; 5], DEFAULT_RANK_TOL),
            Err(Error::SingularHessian { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn regular_dynamics_solves_the_structure_equation() {
        let s = sys(
            "qdot1^2/2 + qdot1*qdot2 + qdot2^2 - q1^2*q2 - 0.3*z*qdot1 + sin(z)",
            2,
        );
        for x in [[0.1, 0.2, 0.3, -0.4, 0.5], [1.0, -0.5, 0.7, 0.2, -1.1]] {
            let v = s.regular_dynamics(&x, DEFAULT_RANK_TOL).unwrap();
            assert!(s.motion_residual(&v, &x, DEFAULT_RANK_TOL).unwrap() < 1e-9);
            assert_eq!(sode_deviation(s.chart(), &v, &x).unwrap().norm(), 0.0);
            let r = s
                .herglotz_residual(&x[0..2], &x[2..4], &[v[2], v[3]], x[4], v[4])
                .unwrap();
            assert!(r.iter().all(|e| e.abs() < 1e-9));
        }
    }

    #[test]
    fn herglotz_residual_examples() {
        let s = sys("qdot^2/2 - 0.1*z", 1);
        assert!(
            s.herglotz_residual(&[0.0], &[1.0], &[-0.1], 0.0, 0.5)
                .unwrap()[0]
                .abs()
                < 1e-15
        );
        let f = sys("qdot^2/2 - q", 1);
        assert_eq!(
            f.herglotz_residual(&[0.0], &[0.0], &[-1.0], 0.0, 0.0)
                .unwrap(),
            vec![0.0]
        );
        assert_eq!(
            f.herglotz_residual(&[0.0], &[0.0], &[0.0], 0.0, 0.0)
                .unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn sode_deviation_examples() {
        let c = ChartSpec::tangent(1).unwrap();
        let x = [0.0, 5.0, 0.0];
        let sode = DVector::from_vec(vec![5.0, 7.0, 1.0]);
        assert_eq!(sode_deviation(&c, &sode, &x).unwrap().norm(), 0.0);
        let v = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        assert_eq!(
            sode_deviation(&c, &v, &x).unwrap(),
            DVector::from_vec(vec![0.0, -3.0, 0.0])
        );
    }

    #[test]
    fn pullback_of_the_canonical_form() {
        let s = example1();
        let can = geometry::PrecontactStructure::canonical_contact(3).unwrap();
        for x in [
            [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            [1.0, -2.0, 0.5, 0.0, 3.0, -1.0, 2.0],
        ] {
            let img = s.legendre(&x).unwrap();
            let eta = can.at(&img.target, DEFAULT_RANK_TOL).unwrap().eta;
            let eta_l = s.structure().at(&x, DEFAULT_RANK_TOL).unwrap().eta;
            assert!((img.jacobian.transpose() * eta - eta_l).norm() < 1e-10);
        }
    }

    #[test]
    fn regular_pushforward_is_the_contact_hamiltonian_field() {
        let s = sys("qdot^2/2 - q^2/2 - 0.1*z", 1);
        let h =
            ScalarField::parse("p^2/2 + q^2/2 + 0.1*z", &ChartSpec::darboux(1).unwrap()).unwrap();
        for x in [[1.0, 2.0, 0.0], [-0.5, 0.3, 1.7]] {
            let img = s.legendre(&x).unwrap();
            let pushed = &img.jacobian * s.regular_dynamics(&x, DEFAULT_RANK_TOL).unwrap();
            let xh = geometry::contact_hamiltonian_vf(&h, &img.target).unwrap();
            assert!((pushed - xh).norm() < 1e-8);
        }
    }

    #[test]
    fn second_order_section_of_a_regular_system() {
        let s = sys("qdot^2/2 - q", 1);
        let x = [0.4, 1.2, -0.3];
        let y = s.legendre(&x).unwrap().target;
        let field = |p: &[f64]| s.regular_dynamics(p, DEFAULT_RANK_TOL);
        let out = s
            .second_order_section(field, &y, &x, DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(out.point, x.to_vec());
        assert_eq!(out.deviation, 0.0);
        let far = [0.4, 0.0, -0.3];
        assert!(matches!(
            s.second_order_section(field, &y, &far, DEFAULT_RANK_TOL),
            Err(Error::NotOnFiber { .. })
        ));
        let wrong = |_: &[f64]| Ok(DVector::from_vec(vec![0.0, 0.0, 0.0]));
        assert!(matches!(
            s.second_order_section(wrong, &y, &x, DEFAULT_RANK_TOL),
            Err(Error::NotASolution { .. })
        ));
    }
}
