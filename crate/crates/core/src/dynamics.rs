//! Fixed-step integration of contact and Herglotz dynamics, and the Herglotz action.

use std::io::{self, Write};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{ChartSpec, ScalarField};
use crate::function::SmoothFunction;
use crate::geometry::{contact_hamiltonian_vf, PhasePoint, DEFAULT_RANK_TOL};
use crate::lagrangian::LagrangianSystem;

/// Values recorded at every accepted state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Hamiltonian, or energy for Lagrangian trajectories.
    pub hamiltonian: f64,
    /// `eta(X)` of the vector field at the state.
    pub eta_x: f64,
    /// Largest absolute value of the monitored constraints.
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
            .coords()
    }

    /// CSV with header `t,<coords>,H,eta_X,constraint_residual` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let Some(first) = self.states.first() else {
            return Ok(());
        };
        let mut header = vec!["t".to_string()];
        header.extend(first.chart().names().iter().cloned());
        header.extend(["H", "eta_X", "constraint_residual"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(&self.diagnostics) {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(s.coords().iter().map(|v| format!("{v:.16e}")));
            row.extend(
                [d.hamiltonian, d.eta_x, d.constraint_residual].map(|v| format!("{v:.16e}")),
            );
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(f: &F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
{
    let x0 = DVector::from_column_slice(x);
    let k1 = f(x)?;
    let k2 = f((&x0 + &k1 * (h / 2.0)).as_slice())?;
    let k3 = f((&x0 + &k2 * (h / 2.0)).as_slice())?;
    let k4 = f((&x0 + &k3 * h).as_slice())?;
    Ok((x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        .as_slice()
        .to_vec())
}

/// Step sizes covering `[0, t_end]`: `dt` repeated, with a shorter last step when needed.
fn step_sizes(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !dt.is_finite() || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and t_end >= 0, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let ratio = t_end / dt;
    let whole = ratio.round();
    if (ratio - whole).abs() < 1e-9 * ratio.max(1.0) {
        return Ok(vec![dt; whole as usize]);
    }
    let full = ratio.floor() as usize;
    let mut steps = vec![dt; full];
    steps.push(t_end - full as f64 * dt);
    Ok(steps)
}

fn run<F, D>(
    chart: &ChartSpec,
    field: F,
    diagnose: D,
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> Result<DVector<f64>>,
    D: Fn(&[f64]) -> Result<StepDiagnostics>,
{
    let steps = step_sizes(t_end, dt)?;
    let mut times = Vec::with_capacity(steps.len() + 1);
    let mut states = Vec::with_capacity(steps.len() + 1);
    let mut diagnostics = Vec::with_capacity(steps.len() + 1);
    let at = |time: f64| {
        move |e: Error| Error::IntegrationFailed {
            time,
            source: Box::new(e),
        }
    };
    let mut x = x0.to_vec();
    let mut t = 0.0;
    times.push(t);
    diagnostics.push(diagnose(&x).map_err(at(t))?);
    states.push(PhasePoint::new(chart, x.clone())?);
    for (k, h) in steps.iter().enumerate() {
        x = rk4_step(&field, &x, *h).map_err(at(t))?;
        t = if k + 1 == steps.len() {
            t_end
        } else {
            (k + 1) as f64 * dt
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { time: t });
        }
        times.push(t);
        diagnostics.push(diagnose(&x).map_err(at(t))?);
        states.push(PhasePoint::new(chart, x.clone())?);
    }
    Ok(Trajectory {
        times,
        states,
        diagnostics,
    })
}

fn max_abs_value(constraints: &[&dyn SmoothFunction], x: &[f64]) -> Result<f64> {
    constraints
        .iter()
        .try_fold(0.0f64, |m, c| Ok(m.max(c.value(x)?.abs())))
}

/// Integrate the Darboux contact Hamiltonian equations from `x0` over `[0, t_end]`.
pub fn integrate_contact(h: &ScalarField, x0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory> {
    integrate_contact_monitored(h, &[], x0, t_end, dt)
}

/// As [`integrate_contact`], recording the largest constraint value at each state.
pub fn integrate_contact_monitored(
    h: &ScalarField,
    constraints: &[&dyn SmoothFunction],
    x0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let chart = h.chart().clone();
    chart.check_point(x0)?;
    let n = chart.n();
    let diagnose = |x: &[f64]| -> Result<StepDiagnostics> {
        let v = contact_hamiltonian_vf(h, x)?;
        let eta_x = v[chart.z()] - (0..n).map(|i| x[chart.s(i)] * v[chart.q(i)]).sum::<f64>();
        Ok(StepDiagnostics {
            hamiltonian: h.eval(x)?,
            eta_x,
            constraint_residual: max_abs_value(constraints, x)?,
        })
    };
    run(
        &chart,
        |x: &[f64]| contact_hamiltonian_vf(h, x),
        diagnose,
        x0,
        t_end,
        dt,
    )
}

/// Integrate the Herglotz equations with `z' = L` from `(q0, qdot0, c)`.
pub fn integrate_herglotz(
    sys: &LagrangianSystem,
    q0: &[f64],
    qdot0: &[f64],
    c: f64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    let chart = sys.chart().clone();
    let n = chart.n();
    if q0.len() != n || qdot0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: q0.len().max(qdot0.len()),
        });
    }
    let mut x0 = q0.to_vec();
    x0.extend_from_slice(qdot0);
    x0.push(c);
    let field = |x: &[f64]| sys.regular_dynamics(x, DEFAULT_RANK_TOL);
    let diagnose = |x: &[f64]| -> Result<StepDiagnostics> {
        let v = field(x)?;
        let j = sys.lagrangian().eval_jet(x, 1)?;
        let eta_x = v[chart.z()]
            - (0..n)
                .map(|i| j.gradient[chart.s(i)] * v[chart.q(i)])
                .sum::<f64>();
        Ok(StepDiagnostics {
            hamiltonian: sys.energy(x)?,
            eta_x,
            constraint_residual: 0.0,
        })
    };
    run(&chart, field, diagnose, &x0, t_end, dt)
}

/// Observed order from runs at `dt`, `dt/2` and `dt/4`, each returning a final state.
pub fn observed_order<F>(run: F, dt: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let a = DVector::from_vec(run(dt)?);
    let b = DVector::from_vec(run(dt / 2.0)?);
    let c = DVector::from_vec(run(dt / 4.0)?);
    Ok(((&a - &b).norm() / (&b - &c).norm()).log2())
}

/// Clamped cubic spline through uniformly spaced values.
///
/// End slopes come from second-order one-sided differences, so quadratics are reproduced exactly.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    a: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(a: f64, b: f64, y: &[f64]) -> Result<CubicSpline> {
        let k = y.len();
        if k < 3 {
            return Err(Error::InvalidArgument(
                "a spline needs at least 3 nodes".into(),
            ));
        }
        let h = (b - a) / (k - 1) as f64;
        let s0 = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
        let s1 = (3.0 * y[k - 1] - 4.0 * y[k - 2] + y[k - 3]) / (2.0 * h);
        // Second derivatives from the clamped tridiagonal system.
        let mut diag = vec![4.0; k];
        let mut rhs = vec![0.0; k];
        diag[0] = 2.0;
        diag[k - 1] = 2.0;
        rhs[0] = 6.0 * ((y[1] - y[0]) / h - s0) / h;
        rhs[k - 1] = 6.0 * (s1 - (y[k - 1] - y[k - 2]) / h) / h;
        for i in 1..k - 1 {
            rhs[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]) / (h * h);
        }
        for i in 1..k {
            let w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; k];
        m[k - 1] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i] = (rhs[i] - m[i + 1]) / diag[i];
        }
        Ok(CubicSpline {
            a,
            h,
            y: y.to_vec(),
            m,
        })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.y.len() - 2;
        let i = (((t - self.a) / self.h).floor().max(0.0) as usize).min(last);
        (i, t - (self.a + i as f64 * self.h))
    }

    /// Value and first derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (i, s) = self.locate(t);
        let h = self.h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let r = h - s;
        let v = m0 * r.powi(3) / (6.0 * h)
            + m1 * s.powi(3) / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * r
            + (y1 / h - m1 * h / 6.0) * s;
        let d = -m0 * r * r / (2.0 * h) + m1 * s * s / (2.0 * h) - (y0 / h - m0 * h / 6.0)
            + (y1 / h - m1 * h / 6.0);
        (v, d)
    }
}

/// Configuration curve sampled at uniform times on `[a, b]`, with an initial action value.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    a: f64,
    b: f64,
    /// `nodes[k]` is the configuration at time `a + k (b - a) / (K - 1)`.
    nodes: Vec<Vec<f64>>,
    c: f64,
}

impl DiscreteCurve {
    pub fn new(a: f64, b: f64, nodes: Vec<Vec<f64>>, c: f64) -> Result<DiscreteCurve> {
        if nodes.len() < 3 {
            return Err(Error::InvalidArgument(
                "a curve needs at least 3 nodes".into(),
            ));
        }
        if !(b > a) {
            return Err(Error::InvalidArgument(format!(
                "empty time interval [{a}, {b}]"
            )));
        }
        let n = nodes[0].len();
        if let Some(bad) = nodes.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("curve nodes must be finite".into()));
        }
        Ok(DiscreteCurve { a, b, nodes, c })
    }

    /// Sample `q(t)` at `count` uniform times.
    pub fn from_fn(
        a: f64,
        b: f64,
        count: usize,
        c: f64,
        q: impl Fn(f64) -> Vec<f64>,
    ) -> Result<DiscreteCurve> {
        let nodes = (0..count)
            .map(|k| q(a + (b - a) * k as f64 / (count.max(2) - 1) as f64))
            .collect();
        DiscreteCurve::new(a, b, nodes, c)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn initial_value(&self) -> f64 {
        self.c
    }

    pub fn times(&self) -> Vec<f64> {
        let k = self.nodes.len();
        (0..k)
            .map(|i| self.a + (self.b - self.a) * i as f64 / (k - 1) as f64)
            .collect()
    }

    /// Curve plus `scale * v` at the interior nodes; the endpoints never move.
    pub fn perturbed(&self, v: &[Vec<f64>], scale: f64) -> DiscreteCurve {
        let last = self.nodes.len() - 1;
        let nodes = self
            .nodes
            .iter()
            .zip(v)
            .enumerate()
            .map(|(k, (q, dv))| {
                if k == 0 || k == last {
                    q.clone()
                } else {
                    q.iter().zip(dv).map(|(a, b)| a + scale * b).collect()
                }
            })
            .collect();
        DiscreteCurve {
            nodes,
            ..self.clone()
        }
    }

    fn splines(&self) -> Result<Vec<CubicSpline>> {
        (0..self.nodes[0].len())
            .map(|i| {
                let y: Vec<f64> = self.nodes.iter().map(|q| q[i]).collect();
                CubicSpline::new(self.a, self.b, &y)
            })
            .collect()
    }
}

/// Fourth-order steps per node interval when solving for the action.
pub const ACTION_SUBSTEPS: usize = 8;

/// Evaluate `(q, qdot)` of the interpolated curve at `t`.
fn curve_state(splines: &[CubicSpline], t: f64) -> (Vec<f64>, Vec<f64>) {
    splines.iter().map(|s| s.eval(t)).unzip()
}

/// `Z` at every node, where `Z' = L(q, qdot, Z)` along the interpolated curve and `Z(a) = c`.
pub fn action_profile(sys: &LagrangianSystem, curve: &DiscreteCurve) -> Result<Vec<f64>> {
    let n = sys.n();
    if curve.nodes[0].len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: curve.nodes[0].len(),
        });
    }
    let splines = curve.splines()?;
    let l = sys.lagrangian();
    let rate = |t: f64, z: f64| -> Result<f64> {
        let (q, qdot) = curve_state(&splines, t);
        let mut x = q;
        x.extend(qdot);
        x.push(z);
        l.eval(&x)
    };
    let intervals = curve.nodes.len() - 1;
    let h = (curve.b - curve.a) / (intervals * ACTION_SUBSTEPS) as f64;
    let mut z = curve.c;
    let mut profile = Vec::with_capacity(intervals + 1);
    profile.push(z);
    for k in 0..intervals * ACTION_SUBSTEPS {
        let t = curve.a + k as f64 * h;
        let k1 = rate(t, z)?;
        let k2 = rate(t + h / 2.0, z + h / 2.0 * k1)?;
        let k3 = rate(t + h / 2.0, z + h / 2.0 * k2)?;
        let k4 = rate(t + h, z + h * k3)?;
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (k + 1) % ACTION_SUBSTEPS == 0 {
            profile.push(z);
        }
    }
    Ok(profile)
}

/// The action `Z(b)`.
pub fn action(sys: &LagrangianSystem, curve: &DiscreteCurve) -> Result<f64> {
    Ok(*action_profile(sys, curve)?
        .last()
        .expect("at least 3 nodes"))
}

/// Composite Simpson quadrature of `L(q, qdot, 0)` along the interpolated curve.
pub fn lagrangian_quadrature(sys: &LagrangianSystem, curve: &DiscreteCurve) -> Result<f64> {
    let splines = curve.splines()?;
    let l = sys.lagrangian();
    let steps = 2 * (curve.nodes.len() - 1) * ACTION_SUBSTEPS;
    let h = (curve.b - curve.a) / steps as f64;
    let mut sum = 0.0;
    for k in 0..=steps {
        let (q, qdot) = curve_state(&splines, curve.a + k as f64 * h);
        let mut x = q;
        x.extend(qdot);
        x.push(0.0);
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * l.eval(&x)?;
    }
    Ok(sum * h / 3.0)
}

/// Number of sine modes in a random variation direction.
pub const DIRECTION_MODES: usize = 4;

/// Random directions vanishing at both endpoints: sine series with uniform coefficients in `[-1, 1]`.
pub fn random_directions(curve: &DiscreteCurve, count: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = curve.nodes[0].len();
    let (a, b) = (curve.a, curve.b);
    let times = curve.times();
    (0..count)
        .map(|_| {
            let coeffs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..DIRECTION_MODES)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            times
                .iter()
                .map(|t| {
                    let s = (t - a) / (b - a);
                    coeffs
                        .iter()
                        .map(|cs| {
                            cs.iter()
                                .enumerate()
                                .map(|(m, c)| c * ((m + 1) as f64 * std::f64::consts::PI * s).sin())
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Largest central-difference directional derivative of the action over random directions.
pub fn stationarity_test(
    sys: &LagrangianSystem,
    curve: &DiscreteCurve,
    n_directions: usize,
    eps: f64,
    seed: u64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for v in random_directions(curve, n_directions, seed) {
        let plus = action(sys, &curve.perturbed(&v, eps))?;
        let minus = action(sys, &curve.perturbed(&v, -eps))?;
        worst = worst.max(((plus - minus) / (2.0 * eps)).abs());
    }
    Ok(worst)
}

/// Largest Herglotz residual at the interior nodes, using the spline jets of the curve.
pub fn curve_herglotz_residual(sys: &LagrangianSystem, curve: &DiscreteCurve) -> Result<f64> {
    let splines = curve.splines()?;
    let zs = action_profile(sys, curve)?;
    let times = curve.times();
    let d = 1e-4 * (curve.b - curve.a) / (times.len() - 1) as f64;
    let l = sys.lagrangian();
    let mut worst: f64 = 0.0;
    for k in 1..times.len() - 1 {
        let t = times[k];
        let (q, qdot) = curve_state(&splines, t);
        let (_, plus) = curve_state(&splines, t + d);
        let (_, minus) = curve_state(&splines, t - d);
        let qddot: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * d))
            .collect();
        let mut x = q.clone();
        x.extend(qdot.iter().copied());
        x.push(zs[k]);
        let zdot = l.eval(&x)?;
        for r in sys.herglotz_residual(&q, &qdot, &qddot, zs[k], zdot)? {
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn darboux_field(n: usize, text: &str) -> ScalarField {
        ScalarField::parse(text, &ChartSpec::darboux(n).unwrap()).unwrap()
    }

    fn lagrangian(n: usize, text: &str) -> LagrangianSystem {
        LagrangianSystem::new(ScalarField::parse(text, &ChartSpec::tangent(n).unwrap()).unwrap())
            .unwrap()
    }

    fn damped_hamiltonian() -> ScalarField {
        darboux_field(1, "p^2/2 + q^2/2 + 0.1*z")
    }

    #[test]
    fn damped_oscillator_energy_decays_exponentially() {
        let tr = integrate_contact(&damped_hamiltonian(), &[1.0, 2.0, 0.0], 1.0, 1e-3).unwrap();
        let h_end = tr.diagnostics.last().unwrap().hamiltonian;
        assert!((h_end - 2.5 * (-0.1f64).exp()).abs() < 1e-6);
        assert_eq!(tr.len(), 1001);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let tr = integrate_contact(
            &darboux_field(2, "0"),
            &[0.3, -1.0, 2.0, 0.5, 4.0],
            1.0,
            0.1,
        )
        .unwrap();
        assert!(tr
            .states
            .iter()
            .all(|s| s.coords() == [0.3, -1.0, 2.0, 0.5, 4.0]));
    }

    #[test]
    fn momentum_hamiltonian_translates() {
        let tr = integrate_contact(&darboux_field(1, "p"), &[0.0, 1.0, 0.0], 1.0, 0.01).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let x = s.coords();
            assert!((x[0] - t).abs() < 1e-12 && x[1] == 1.0 && x[2].abs() < 1e-12);
        }
    }

    #[test]
    fn last_step_lands_on_end_time() {
        let tr = integrate_contact(&damped_hamiltonian(), &[1.0, 0.0, 0.0], 0.25, 0.1).unwrap();
        assert_eq!(tr.times, vec![0.0, 0.1, 0.2, 0.25]);
        assert!(integrate_contact(&damped_hamiltonian(), &[1.0, 0.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let h = darboux_field(1, "-z^2");
        match integrate_contact(&h, &[0.0, 0.0, 1.0], 10.0, 0.01) {
            Err(Error::NonFiniteState { time }) => assert!(time > 0.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn contraction_with_eta_is_minus_h() {
        let h = darboux_field(2, "p1^2/2 + p2^2/2 + q1*q2 + 0.3*z*p1");
        let tr = integrate_contact(&h, &[0.2, -0.4, 0.5, 0.1, 0.3], 1.0, 1e-2).unwrap();
        for d in &tr.diagnostics {
            assert!((d.eta_x + d.hamiltonian).abs() < 1e-9);
        }
    }

    #[test]
    fn monitored_constraints_are_recorded() {
        let h = darboux_field(1, "p^2/2");
        let c = darboux_field(1, "p - 1");
        let tr = integrate_contact_monitored(&h, &[&c], &[0.0, 1.0, 0.0], 0.5, 0.1).unwrap();
        assert!(tr.diagnostics.iter().all(|d| d.constraint_residual < 1e-14));
        let tr = integrate_contact_monitored(&h, &[&c], &[0.0, 3.0, 0.0], 0.5, 0.1).unwrap();
        assert!(tr
            .diagnostics
            .iter()
            .all(|d| (d.constraint_residual - 2.0).abs() < 1e-12));
    }

    #[test]
    fn herglotz_damped_velocity() {
        let sys = lagrangian(1, "qdot^2/2 - 0.1*z");
        let tr = integrate_herglotz(&sys, &[0.0], &[1.0], 0.0, 1.0, 1e-3).unwrap();
        assert!((tr.last()[1] - (-0.1f64).exp()).abs() < 1e-6);
        assert_eq!(tr.states[0].coords()[2], 0.0);
    }

    #[test]
    fn singular_hessian_reports_the_time() {
        let sys = lagrangian(2, "0.5*(qdot1 + qdot2)^2 + q1 + q2*z");
        match integrate_herglotz(&sys, &[0.0, 0.0], &[1.0, 0.0], 1.0, 1.0, 0.1) {
            Err(Error::IntegrationFailed { time, source }) => {
                assert_eq!(time, 0.0);
                assert!(matches!(
                    *source,
                    Error::SingularHessian { rank: 1, dim: 2 }
                ));
            }
            other => panic!("expected a singular Hessian, got {other:?}"),
        }
    }

    #[test]
    fn herglotz_free_particle() {
        let sys = lagrangian(1, "qdot^2/2");
        let tr = integrate_herglotz(&sys, &[0.5], &[2.0], 1.5, 1.0, 0.1).unwrap();
        let x = tr.last();
        assert!((x[0] - 2.5).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!((x[2] - (1.5 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn herglotz_falling_body_is_exact() {
        let sys = lagrangian(1, "qdot^2/2 - q");
        let tr = integrate_herglotz(&sys, &[1.0], &[0.5], 0.0, 1.0, 0.05).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let x = s.coords();
            assert!((x[0] - (1.0 + 0.5 * t - 0.5 * t * t)).abs() < 1e-10);
            assert!((x[1] - (0.5 - t)).abs() < 1e-10);
        }
    }

    #[test]
    fn herglotz_contraction_is_minus_energy() {
        let sys = lagrangian(1, "qdot^2/2 - q^2/2 - 0.1*z");
        let tr = integrate_herglotz(&sys, &[1.0], &[0.0], 0.0, 1.0, 1e-2).unwrap();
        assert!(tr
            .diagnostics
            .iter()
            .all(|d| (d.eta_x + d.hamiltonian).abs() < 1e-12));
    }

    #[test]
    fn csv_layout() {
        let tr = integrate_contact(&damped_hamiltonian(), &[1.0, 2.0, 0.0], 0.2, 0.1).unwrap();
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,q,p,z,H,eta_X,constraint_residual");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').next().unwrap(), "0.0000000000000000e0");
        let h: f64 = lines[1].split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(h, 2.5);
    }

    #[test]
    fn rk4_order() {
        let h = damped_hamiltonian();
        let order = observed_order(
            |dt| {
                Ok(integrate_contact(&h, &[1.0, 2.0, 0.0], 1.0, dt)?
                    .last()
                    .to_vec())
            },
            0.1,
        )
        .unwrap();
        assert!((3.5..=4.5).contains(&order), "order {order}");
    }

    #[test]
    fn spline_reproduces_quadratics() {
        let y: Vec<f64> = (0..6)
            .map(|k| {
                let t = k as f64 * 0.2;
                3.0 * t * t - t + 1.0
            })
            .collect();
        let s = CubicSpline::new(0.0, 1.0, &y).unwrap();
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            let (v, d) = s.eval(t);
            assert!((v - (3.0 * t * t - t + 1.0)).abs() < 1e-12);
            assert!((d - (6.0 * t - 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn curve_validation() {
        assert!(DiscreteCurve::new(0.0, 1.0, vec![vec![0.0], vec![1.0]], 0.0).is_err());
        assert!(DiscreteCurve::new(1.0, 1.0, vec![vec![0.0]; 3], 0.0).is_err());
        assert!(
            DiscreteCurve::new(0.0, 1.0, vec![vec![0.0], vec![1.0, 2.0], vec![0.0]], 0.0).is_err()
        );
        assert!(
            DiscreteCurve::new(0.0, 1.0, vec![vec![0.0], vec![f64::NAN], vec![0.0]], 0.0).is_err()
        );
    }

    #[test]
    fn perturbation_keeps_endpoints() {
        let curve = DiscreteCurve::from_fn(0.0, 1.0, 5, 0.0, |t| vec![t, -t]).unwrap();
        let v = vec![vec![1.0, 1.0]; 5];
        let p = curve.perturbed(&v, 0.5);
        assert_eq!(p.nodes()[0], curve.nodes()[0]);
        assert_eq!(p.nodes()[4], curve.nodes()[4]);
        assert_eq!(p.nodes()[2], vec![1.0, 0.0]);
        for d in random_directions(&curve, 3, 0) {
            assert_eq!(d[0], vec![0.0, 0.0]);
            assert!(d[4].iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn action_examples() {
        let line = |c| DiscreteCurve::from_fn(0.0, 1.0, 11, c, |t| vec![t]).unwrap();
        let free = lagrangian(1, "qdot^2/2");
        assert!((action(&free, &line(0.0)).unwrap() - 0.5).abs() < 1e-6);
        assert!((action(&free, &line(2.0)).unwrap() - 2.5).abs() < 1e-6);
        let damped = lagrangian(1, "qdot^2/2 - 0.1*z");
        let expected = 5.0 * (1.0 - (-0.1f64).exp());
        assert!((action(&damped, &line(0.0)).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn z_independent_action_is_quadrature_plus_constant() {
        let sys = lagrangian(2, "qdot1^2/2 + qdot1*qdot2 - cos(q1) + q2^2");
        let curve =
            DiscreteCurve::from_fn(0.0, 2.0, 21, 0.7, |t| vec![t.sin(), t * t - t]).unwrap();
        let a = action(&sys, &curve).unwrap();
        let quad = lagrangian_quadrature(&sys, &curve).unwrap();
        assert!((a - (0.7 + quad)).abs() < 1e-6);
    }

    #[test]
    fn stationarity_examples() {
        let free = lagrangian(1, "qdot^2/2");
        let line = DiscreteCurve::from_fn(0.0, 1.0, 64, 0.0, |t| vec![2.0 * t - 1.0]).unwrap();
        assert!(stationarity_test(&free, &line, 8, 1e-4, 0).unwrap() < 1e-6);

        let falling = lagrangian(1, "qdot^2/2 - q");
        let parabola =
            DiscreteCurve::from_fn(0.0, 1.0, 64, 0.0, |t| vec![0.5 * t - 0.5 * t * t]).unwrap();
        assert!(stationarity_test(&falling, &parabola, 8, 1e-4, 0).unwrap() < 1e-4);

        let bent = DiscreteCurve::from_fn(0.0, 1.0, 64, 0.0, |t| {
            vec![0.1 * (1.0 - (2.0 * t - 1.0).abs())]
        })
        .unwrap();
        assert!(stationarity_test(&free, &bent, 8, 1e-4, 0).unwrap() > 1e-2);
    }

    #[test]
    fn herglotz_solutions_are_stationary() {
        let sys = lagrangian(1, "qdot^2/2 - q^2/2 - 0.1*z");
        let tr = integrate_herglotz(&sys, &[1.0], &[0.3], 0.0, 1.0, 1.0 / 630.0).unwrap();
        let nodes: Vec<Vec<f64>> = tr
            .states
            .iter()
            .step_by(10)
            .map(|s| vec![s.coords()[0]])
            .collect();
        assert_eq!(nodes.len(), 64);
        let curve = DiscreteCurve::new(0.0, 1.0, nodes, 0.0).unwrap();
        let r = curve_herglotz_residual(&sys, &curve).unwrap();
        assert!(r < 1e-2, "{r}");
        assert!(stationarity_test(&sys, &curve, 8, 1e-4, 0).unwrap() < 1e-4);
        let bumped = DiscreteCurve::from_fn(0.0, 1.0, 64, 0.0, |t| {
            let k = (t * 630.0).round() as usize;
            vec![tr.states[k].coords()[0] + 0.1 * (std::f64::consts::PI * t).sin()]
        })
        .unwrap();
        assert!(stationarity_test(&sys, &bumped, 8, 1e-4, 0).unwrap() > 1e-2);
    }

    #[test]
    fn hamiltonian_and_lagrangian_flows_agree() {
        let sys = lagrangian(1, "qdot^2/2 - q^2/2 - 0.1*z");
        let lag = integrate_herglotz(&sys, &[1.0], &[2.0], 0.0, 1.0, 1e-3).unwrap();
        let ham = integrate_contact(&damped_hamiltonian(), &[1.0, 2.0, 0.0], 1.0, 1e-3).unwrap();
        let image = sys.legendre(lag.last()).unwrap();
        let diff = image
            .target
            .iter()
            .zip(ham.last())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }
}
