//! Dense linear algebra for small systems.
//!
//! Two families live here. The `f64` helpers are thin wrappers over the SVD
//! and make every rank decision. The generic routines run Gaussian
//! elimination with a pivot order chosen once from values, so they work over
//! plain numbers and over [`Jet`]s alike, and the jets come out as smooth
//! functions of the base point.

use nalgebra::{DMatrix, DVector, Dyn, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Field operations needed by the generic elimination routines.
pub trait Scalar: Clone {
    fn value(&self) -> f64;
    fn constant_like(&self, c: f64) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn over(&self, o: &Self) -> Result<Self>;
    fn scaled(&self, s: f64) -> Self;

    fn zero_like(&self) -> Self {
        self.constant_like(0.0)
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn constant_like(&self, c: f64) -> f64 {
        c
    }
    fn plus(&self, o: &f64) -> f64 {
        self + o
    }
    fn minus(&self, o: &f64) -> f64 {
        self - o
    }
    fn times(&self, o: &f64) -> f64 {
        self * o
    }
    fn over(&self, o: &f64) -> Result<f64> {
        if *o == 0.0 {
            Err(Error::EvalDomainError("division by zero pivot".into()))
        } else {
            Ok(self / o)
        }
    }
    fn scaled(&self, s: f64) -> f64 {
        self * s
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        Jet::value(self)
    }
    fn constant_like(&self, c: f64) -> Jet {
        Jet::constant_like(self, c)
    }
    fn plus(&self, o: &Jet) -> Jet {
        self + o
    }
    fn minus(&self, o: &Jet) -> Jet {
        self - o
    }
    fn times(&self, o: &Jet) -> Jet {
        self * o
    }
    fn over(&self, o: &Jet) -> Result<Jet> {
        self.div(o)
    }
    fn scaled(&self, s: f64) -> Jet {
        self.scale(s)
    }
}

/// Row-major dense matrix over a [`Scalar`].
pub type Mat<T> = Vec<Vec<T>>;

pub fn values<T: Scalar>(a: &[Vec<T>]) -> DMatrix<f64> {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows, cols, |i, j| a[i][j].value())
}

pub fn transpose<T: Clone>(a: &[Vec<T>]) -> Mat<T> {
    let cols = a.first().map_or(0, |r| r.len());
    (0..cols)
        .map(|j| a.iter().map(|row| row[j].clone()).collect())
        .collect()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = a[0].times(&b[0]);
    for (x, y) in a.iter().zip(b).skip(1) {
        acc = acc.plus(&x.times(y));
    }
    acc
}

pub fn mat_vec<T: Scalar>(a: &[Vec<T>], x: &[T]) -> Vec<T> {
    a.iter().map(|row| dot(row, x)).collect()
}

/// Thin SVD in nalgebra's layout, singular values in decreasing order.
/// Computed by faer: nalgebra's implicit-shift iteration can return factors
/// that do not reproduce rank-deficient inputs.
pub fn svd(a: &DMatrix<f64>, u: bool, v: bool) -> SVD<f64, Dyn, Dyn> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return SVD {
            u: u.then(|| DMatrix::zeros(m, 0)),
            v_t: v.then(|| DMatrix::zeros(0, n)),
            singular_values: DVector::zeros(0),
        };
    }
    let f = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let d = f.thin_svd().expect("finite input");
    let (fu, fs, fv) = (d.U(), d.S().column_vector(), d.V());
    SVD {
        u: u.then(|| DMatrix::from_fn(m, k, |i, j| fu[(i, j)])),
        v_t: v.then(|| DMatrix::from_fn(k, n, |i, j| fv[(j, i)])),
        singular_values: DVector::from_fn(k, |i, _| fs[i]),
    }
}

/// Moore-Penrose pseudo-inverse with singular values below `abs_tol` dropped.
pub fn pseudo_inverse(a: &DMatrix<f64>, abs_tol: f64) -> DMatrix<f64> {
    let d = svd(a, true, true);
    let u = d.u.expect("u requested");
    let v_t = d.v_t.expect("v_t requested");
    let inv =
        DMatrix::from_diagonal(
            &d.singular_values
                .map(|s| if s > abs_tol { 1.0 / s } else { 0.0 }),
        );
    v_t.transpose() * inv * u.transpose()
}

/// Singular values in decreasing order. Empty matrices have none.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(a, false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&x| x > rel_tol * top).count(),
        _ => 0,
    }
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    null_space_scaled(a, rel_tol, 0.0)
}

/// As [`null_space`], with singular values measured against `max(largest, scale)`.
/// A product whose factors have norms multiplying to `scale` is then rank zero when it is round-off.
pub fn null_space_scaled(a: &DMatrix<f64>, rel_tol: f64, scale: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = svd(&padded, false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let top = svd.singular_values.iter().cloned().fold(scale, f64::max);
    let cutoff = rel_tol * top;
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| top == 0.0 || s <= cutoff)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let m = a.nrows();
    if a.ncols() == 0 || m == 0 {
        return DMatrix::zeros(m, 0);
    }
    let padded = if a.ncols() < m {
        let mut p = DMatrix::zeros(m, m);
        p.view_mut((0, 0), (m, a.ncols())).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = svd(&padded, true, false);
    let u = svd.u.expect("u requested");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return DMatrix::zeros(m, 0);
    }
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * top)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthogonal projector onto the span of the columns of `basis`.
pub fn projector(basis: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let q = column_space(basis, rel_tol);
    &q * q.transpose()
}

/// Minimum-norm least-squares solution of `a x = b` and its residual norm.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, f64) {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return (DVector::zeros(n), b.norm());
    }
    let svd = svd(a, true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let x = if top == 0.0 {
        DVector::zeros(n)
    } else {
        svd.solve(b, rel_tol * top).expect("u and v_t requested")
    };
    let residual = (a * &x - b).norm();
    (x, residual)
}

/// Pivot order of a complete-pivoting elimination, recorded so the same
/// elimination can be replayed over jets or at nearby points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PivotFrame {
    pub rows: usize,
    pub cols: usize,
    pub pivots: Vec<(usize, usize)>,
    /// Magnitudes of the eliminated pivots at the matrix the frame was chosen from.
    #[serde(default)]
    pub pivot_sizes: Vec<f64>,
}

impl PivotFrame {
    /// Choose `rank` pivots by complete pivoting. Ties go to the lowest row, then column.
    pub fn from_matrix(a: &DMatrix<f64>, rank: usize) -> PivotFrame {
        let (m, n) = a.shape();
        let mut work = a.clone();
        let mut row_used = vec![false; m];
        let mut col_used = vec![false; n];
        let mut pivots = Vec::with_capacity(rank);
        let mut pivot_sizes = Vec::with_capacity(rank);
        for _ in 0..rank.min(m).min(n) {
            let mut best: Option<(usize, usize)> = None;
            let mut best_abs = -1.0;
            for i in (0..m).filter(|&i| !row_used[i]) {
                for j in (0..n).filter(|&j| !col_used[j]) {
                    let v = work[(i, j)].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = Some((i, j));
                    }
                }
            }
            let Some((r, c)) = best else { break };
            row_used[r] = true;
            col_used[c] = true;
            pivots.push((r, c));
            let p = work[(r, c)];
            pivot_sizes.push(p.abs());
            if p == 0.0 {
                continue;
            }
            for i in (0..m).filter(|&i| !row_used[i]) {
                let f = work[(i, c)] / p;
                if f != 0.0 {
                    for j in 0..n {
                        work[(i, j)] -= f * work[(r, j)];
                    }
                }
            }
        }
        PivotFrame {
            rows: m,
            cols: n,
            pivots,
            pivot_sizes,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Columns without a pivot, ascending.
    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|j| !self.pivots.iter().any(|&(_, c)| c == *j))
            .collect()
    }

    /// Forward elimination of `a` (with optional right-hand sides) in pivot order.
    fn eliminate<T: Scalar>(&self, a: &[Vec<T>], rhs: &mut [Vec<T>]) -> Result<Mat<T>> {
        if a.len() != self.rows || a.first().map_or(0, |r| r.len()) != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: a.len() * a.first().map_or(0, |r| r.len()),
            });
        }
        let mut w: Mat<T> = a.to_vec();
        let mut done = vec![false; self.rows];
        for &(r, c) in &self.pivots {
            done[r] = true;
            let pivot = w[r][c].clone();
            for i in 0..self.rows {
                if done[i] {
                    continue;
                }
                let f = w[i][c].over(&pivot)?;
                for j in 0..self.cols {
                    if j == c {
                        continue;
                    }
                    let t = f.times(&w[r][j]);
                    w[i][j] = w[i][j].minus(&t);
                }
                w[i][c] = w[i][c].zero_like();
                for col in rhs.iter_mut() {
                    let t = f.times(&col[r]);
                    col[i] = col[i].minus(&t);
                }
            }
        }
        Ok(w)
    }

    /// Back substitution for the pivot variables given values of the free ones.
    fn back_substitute<T: Scalar>(&self, w: &[Vec<T>], b: &[T], x: &mut [T]) -> Result<()> {
        for &(r, c) in self.pivots.iter().rev() {
            let mut acc = b[r].clone();
            for j in 0..self.cols {
                if j != c {
                    let t = w[r][j].times(&x[j]);
                    acc = acc.minus(&t);
                }
            }
            x[c] = acc.over(&w[r][c])?;
        }
        Ok(())
    }

    /// One null vector per free column: that column set to one, other free columns zero.
    pub fn null_basis<T: Scalar>(&self, a: &[Vec<T>]) -> Result<Mat<T>> {
        let w = self.eliminate(a, &mut [])?;
        let proto = a[0][0].zero_like();
        let zeros = vec![proto.clone(); self.rows];
        self.free_columns()
            .into_iter()
            .map(|f| {
                let mut x = vec![proto.clone(); self.cols];
                x[f] = proto.constant_like(1.0);
                self.back_substitute(&w, &zeros, &mut x)?;
                Ok(x)
            })
            .collect()
    }

    /// Particular solution of `a x = b` with every free variable zero.
    /// Rows without a pivot are ignored, so the caller must know the system is consistent.
    pub fn solve<T: Scalar>(&self, a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
        let mut rhs = vec![b.to_vec()];
        let w = self.eliminate(a, &mut rhs)?;
        let mut x = vec![b[0].zero_like(); self.cols];
        self.back_substitute(&w, &rhs[0], &mut x)?;
        Ok(x)
    }
}

/// Solve a square system with pivots chosen from its values.
fn square_frame<T: Scalar>(a: &[Vec<T>]) -> Result<PivotFrame> {
    let n = a.len();
    let frame = PivotFrame::from_matrix(&values(a), n);
    let largest = frame.pivot_sizes.iter().cloned().fold(0.0, f64::max);
    let smallest = frame
        .pivot_sizes
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if frame.rank() < n || !(smallest > 1e-14 * largest) {
        return Err(Error::SingularCMatrix {
            condition: largest / smallest,
        });
    }
    Ok(frame)
}

pub fn solve_square<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    let frame = square_frame(a)?;
    frame.solve(a, b)
}

/// Inverse of a square matrix with pivots chosen from its values.
pub fn inverse<T: Scalar>(a: &[Vec<T>]) -> Result<Mat<T>> {
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let frame = square_frame(a)?;
    let proto = a[0][0].zero_like();
    let cols: Result<Vec<Vec<T>>> = (0..n)
        .map(|k| {
            let e: Vec<T> = (0..n)
                .map(|i| proto.constant_like(if i == k { 1.0 } else { 0.0 }))
                .collect();
            frame.solve(a, &e)
        })
        .collect();
    Ok(transpose(&cols?))
}

/// Remove from `x` its component in the span of `null` (columns given as vectors),
/// which turns any solution of a consistent system into the minimum-norm one.
pub fn remove_span<T: Scalar>(x: &[T], null: &[Vec<T>]) -> Result<Vec<T>> {
    if null.is_empty() {
        return Ok(x.to_vec());
    }
    let k = null.len();
    let gram: Mat<T> = (0..k)
        .map(|i| (0..k).map(|j| dot(&null[i], &null[j])).collect())
        .collect();
    let proj: Vec<T> = null.iter().map(|v| dot(v, x)).collect();
    let c = solve_square(&gram, &proj)?;
    let mut out = x.to_vec();
    for (v, ci) in null.iter().zip(&c) {
        for (o, vj) in out.iter_mut().zip(v) {
            *o = o.minus(&ci.times(vj));
        }
    }
    Ok(out)
}

/// Condition number from the singular values (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetSpace;

    #[test]
    fn rank_and_null_space() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert_eq!(numerical_rank(&a, 1e-8), 1);
        let n = null_space(&a, 1e-8);
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
        assert!((n.transpose() * &n - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn frame_null_basis_matches_svd_span() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, -2.0, 0.0, 0.0, 1.0, 1.0, 3.0]);
        let frame = PivotFrame::from_matrix(&a, 2);
        let rows: Mat<f64> = (0..2).map(|i| a.row(i).iter().copied().collect()).collect();
        let basis = frame.null_basis(&rows).unwrap();
        assert_eq!(basis.len(), 2);
        let bm = DMatrix::from_fn(4, 2, |i, j| basis[j][i]);
        assert!((&a * &bm).norm() < 1e-12);
        let p1 = projector(&bm, 1e-10);
        let p2 = projector(&null_space(&a, 1e-10), 1e-10);
        assert!((p1 - p2).norm() < 1e-10);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let frame = PivotFrame::from_matrix(&a, 1);
        assert_eq!(frame.pivots, vec![(0, 0)]);
        assert_eq!(frame.free_columns(), vec![1]);
    }

    #[test]
    fn generic_solve_over_jets_differentiates_the_solution() {
        // Solve [[x, 1], [1, 2]] u = [1, 0]; u0 = 2 / (2x - 1).
        let s = JetSpace::get(1, 2);
        let x = Jet::variable(&s, 0, 1.5);
        let one = Jet::constant(&s, 1.0);
        let two = Jet::constant(&s, 2.0);
        let zero = Jet::constant(&s, 0.0);
        let a = vec![vec![x.clone(), one.clone()], vec![one.clone(), two]];
        let u = solve_square(&a, &[one, zero]).unwrap();
        let v = 2.0 * 1.5 - 1.0;
        assert!((u[0].value() - 2.0 / v).abs() < 1e-14);
        assert!((u[0].partial(&[0]) + 4.0 / (v * v)).abs() < 1e-13);
        assert!((u[0].partial(&[0, 0]) - 16.0 / (v * v * v)).abs() < 1e-12);
    }

    #[test]
    fn min_norm_correction() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_row_slice(&[2.0]);
        let (x, res) = lstsq_min_norm(&a, &b, 1e-12);
        assert!(res < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        let y = remove_span(&[2.0, 0.0], &[vec![1.0, -1.0]]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-14 && (y[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = vec![
            vec![0.0, 2.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![3.0, 1.0, 4.0],
        ];
        let inv = inverse(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
