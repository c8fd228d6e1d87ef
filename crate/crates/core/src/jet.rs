//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] holds the Taylor coefficients of a smooth function around a base
//! point up to a fixed total degree. Arithmetic and the elementary functions
//! act on all coefficients at once, so every partial derivative up to the
//! truncation order is exact up to rounding.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Monomial layout shared by all jets of a given dimension and order.
///
/// Monomials are graded by total degree, and the ordering inside a degree
/// does not depend on the truncation order. A space of lower order is
/// therefore a prefix of any space of higher order with the same dimension.
pub struct JetSpace {
    dim: usize,
    order: usize,
    exponents: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    degree_start: Vec<usize>,
    products: Vec<Vec<(u32, u32)>>,
    shifts: Vec<Vec<(u32, u32, f64)>>,
}

impl fmt::Debug for JetSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetSpace")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("len", &self.exponents.len())
            .finish()
    }
}

fn push_compositions(dim: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() + 1 == dim {
        prefix.push(degree as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=degree).rev() {
        prefix.push(first as u8);
        push_compositions(dim, degree - first, prefix, out);
        prefix.pop();
    }
}

impl JetSpace {
    fn build(dim: usize, order: usize) -> JetSpace {
        assert!(dim >= 1, "jet space needs at least one variable");
        let mut exponents = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for degree in 0..=order {
            degree_start.push(exponents.len());
            push_compositions(dim, degree, &mut Vec::with_capacity(dim), &mut exponents);
        }
        degree_start.push(exponents.len());
        let lookup: HashMap<Vec<u8>, usize> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let degree_of = |i: usize| exponents[i].iter().map(|&e| e as usize).sum::<usize>();

        let mut products = vec![Vec::new(); exponents.len()];
        for (i, row) in products.iter_mut().enumerate() {
            let di = degree_of(i);
            let end = degree_start[order - di + 1];
            for j in 0..end {
                let sum: Vec<u8> = exponents[i]
                    .iter()
                    .zip(&exponents[j])
                    .map(|(a, b)| a + b)
                    .collect();
                row.push((j as u32, lookup[&sum] as u32));
            }
        }

        let mut shifts = vec![Vec::new(); dim];
        for (src, e) in exponents.iter().enumerate() {
            for (var, table) in shifts.iter_mut().enumerate() {
                if e[var] > 0 {
                    let mut lowered = e.clone();
                    lowered[var] -= 1;
                    table.push((src as u32, lookup[&lowered] as u32, e[var] as f64));
                }
            }
        }

        JetSpace {
            dim,
            order,
            exponents,
            lookup,
            degree_start,
            products,
            shifts,
        }
    }

    /// Shared space for `dim` variables truncated at total degree `order`.
    pub fn get(dim: usize, order: usize) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard
            .entry((dim, order))
            .or_insert_with(|| Arc::new(JetSpace::build(dim, order)))
            .clone()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored coefficients.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exponents
    }

    /// Position of a monomial, if it is within the truncation.
    pub fn index_of(&self, exponent: &[u8]) -> Option<usize> {
        self.lookup.get(exponent).copied()
    }

    /// Number of coefficients of total degree at most `degree`.
    pub fn len_through(&self, degree: usize) -> usize {
        self.degree_start[degree.min(self.order) + 1]
    }
}

/// Taylor coefficients `c` with `f(x0 + h) = sum c[a] h^a` up to the space order.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.space.dim)
            .field("order", &self.space.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, value: f64) -> Jet {
        let mut coeffs = vec![0.0; space.len()];
        coeffs[0] = value;
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    /// The coordinate function `x_var` expanded at a point where it equals `value`.
    pub fn variable(space: &Arc<JetSpace>, var: usize, value: f64) -> Jet {
        let mut jet = Jet::constant(space, value);
        if space.order >= 1 {
            jet.coeffs[1 + var] = 1.0;
        }
        jet
    }

    /// Jets of all coordinate functions at `x`.
    pub fn variables(space: &Arc<JetSpace>, x: &[f64]) -> Vec<Jet> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(space, i, v))
            .collect()
    }

    pub fn from_coeffs(space: &Arc<JetSpace>, coeffs: Vec<f64>) -> Jet {
        assert_eq!(
            coeffs.len(),
            space.len(),
            "coefficient count does not match space"
        );
        Jet {
            space: space.clone(),
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn order(&self) -> usize {
        self.space.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn zero_like(&self) -> Jet {
        Jet::constant(&self.space, 0.0)
    }

    pub fn constant_like(&self, value: f64) -> Jet {
        Jet::constant(&self.space, value)
    }

    /// Partial derivative at the base point; `vars` lists the variables with repetition.
    pub fn partial(&self, vars: &[usize]) -> f64 {
        if vars.len() > self.space.order {
            return 0.0;
        }
        let mut exponent = vec![0u8; self.space.dim];
        for &v in vars {
            exponent[v] += 1;
        }
        let factorial: f64 = exponent
            .iter()
            .map(|&e| (1..=e as u32).map(f64::from).product::<f64>())
            .product();
        self.space
            .index_of(&exponent)
            .map(|i| self.coeffs[i] * factorial)
            .unwrap_or(0.0)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.space.dim).map(|i| self.partial(&[i])).collect()
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let d = self.space.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.partial(&[i, j])).collect())
            .collect()
    }

    /// Partial derivative as a jet. The top-degree coefficients of the result are zero,
    /// so it is only valid to one order less than `self`.
    pub fn derivative(&self, var: usize) -> Jet {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(src, dst, factor) in &self.space.shifts[var] {
            coeffs[dst as usize] += factor * self.coeffs[src as usize];
        }
        Jet {
            space: self.space.clone(),
            coeffs,
        }
    }

    /// Gradient as jets, each valid to one order less than `self`.
    pub fn gradient_jets(&self) -> Vec<Jet> {
        (0..self.space.dim).map(|i| self.derivative(i)).collect()
    }

    /// Restriction to a space of lower (or equal) order with the same dimension.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(
            order <= self.space.order,
            "cannot raise jet order by truncation"
        );
        let space = JetSpace::get(self.space.dim, order);
        Jet {
            coeffs: self.coeffs[..space.len()].to_vec(),
            space,
        }
    }

    /// Evaluate the truncated polynomial at the displacement `h`.
    pub fn eval_at(&self, h: &[f64]) -> f64 {
        self.space
            .exponents
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(h)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn same_space(&self, other: &Jet) {
        debug_assert!(
            Arc::ptr_eq(&self.space, &other.space)
                || (self.space.dim == other.space.dim && self.space.order == other.space.order),
            "jets from different spaces"
        );
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        self.same_space(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    fn multiply(&self, other: &Jet) -> Jet {
        self.same_space(other);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for (i, row) in self.space.products.iter().enumerate() {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            for &(j, k) in row {
                coeffs[k as usize] += a * other.coeffs[j as usize];
            }
        }
        Jet {
            space: self.space.clone(),
            coeffs,
        }
    }

    /// `sum_k g[k] (self - value)^k`, the composition with a function whose
    /// Taylor coefficients at `value` are `g`.
    fn compose(&self, g: &[f64]) -> Jet {
        let mut u = self.clone();
        u.coeffs[0] = 0.0;
        let top = self.space.order.min(g.len() - 1);
        let mut acc = Jet::constant(&self.space, g[top]);
        for k in (0..top).rev() {
            acc = acc.multiply(&u);
            acc.coeffs[0] += g[k];
        }
        acc
    }

    pub fn recip(&self) -> Result<Jet> {
        let c0 = self.value();
        if c0 == 0.0 || !c0.is_finite() {
            return Err(Error::EvalDomainError(format!("division by {c0}")));
        }
        let g: Vec<f64> = (0..=self.space.order)
            .map(|k| (-1f64).powi(k as i32) / c0.powi(k as i32 + 1))
            .collect();
        Ok(self.compose(&g))
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        Ok(self.multiply(&other.recip()?))
    }

    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.recip()?.powi(-n);
        }
        let mut result = Jet::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.multiply(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.multiply(&base);
            }
        }
        Ok(result)
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let mut g = Vec::with_capacity(self.space.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.space.order {
            if k > 0 {
                fact *= k as f64;
            }
            g.push(e0 / fact);
        }
        self.compose(&g)
    }

    pub fn ln(&self) -> Result<Jet> {
        let c0 = self.value();
        if c0 <= 0.0 || !c0.is_finite() {
            return Err(Error::EvalDomainError(format!("logarithm of {c0}")));
        }
        let mut g = vec![c0.ln()];
        for k in 1..=self.space.order {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            g.push(sign / (k as f64 * c0.powi(k as i32)));
        }
        Ok(self.compose(&g))
    }

    fn trig(&self, phase: usize) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let mut g = Vec::with_capacity(self.space.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.space.order {
            if k > 0 {
                fact *= k as f64;
            }
            g.push(cycle[(k + phase) % 4] / fact);
        }
        self.compose(&g)
    }

    pub fn sin(&self) -> Jet {
        self.trig(0)
    }

    pub fn cos(&self) -> Jet {
        self.trig(1)
    }

    /// True when every coefficient is finite.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        Jet {
            space: self.space.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.same_space(rhs);
        Jet {
            space: self.space.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.multiply(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

macro_rules! owned_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { (&self).$m(&rhs) }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet { (&self).$m(rhs) }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet { self.$m(&rhs) }
        }
    )*};
}
owned_ops!(Add add, Sub sub, Mul mul);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn lower_order_space_is_prefix() {
        let lo = JetSpace::get(3, 2);
        let hi = JetSpace::get(3, 4);
        assert_eq!(&hi.exponents()[..lo.len()], lo.exponents());
        assert_eq!(hi.len(), 35);
    }

    #[test]
    fn product_of_polynomials() {
        let s = JetSpace::get(2, 3);
        let x = Jet::variable(&s, 0, 1.0);
        let y = Jet::variable(&s, 1, 2.0);
        // f = x^2 y, f_x = 2xy = 4, f_xy = 2x = 2, f_xxy = 2
        let f = &(&x * &x) * &y;
        assert_eq!(f.value(), 2.0);
        assert_eq!(f.partial(&[0]), 4.0);
        assert_eq!(f.partial(&[1]), 1.0);
        assert_eq!(f.partial(&[0, 1]), 2.0);
        assert_eq!(f.partial(&[0, 0, 1]), 2.0);
        assert_eq!(f.partial(&[1, 1]), 0.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let s = JetSpace::get(1, 4);
        let x = Jet::variable(&s, 0, 0.3);
        let e = x.exp();
        let l = x.ln().unwrap();
        let sn = x.sin();
        let cs = x.cos();
        let r = x.recip().unwrap();
        for k in 0..=4usize {
            let vars = vec![0; k];
            assert!(close(e.partial(&vars), 0.3f64.exp(), 1e-13));
            let sin_d = [0.3f64.sin(), 0.3f64.cos(), -0.3f64.sin(), -0.3f64.cos()][k % 4];
            let cos_d = [0.3f64.cos(), -0.3f64.sin(), -0.3f64.cos(), 0.3f64.sin()][k % 4];
            assert!(close(sn.partial(&vars), sin_d, 1e-13));
            assert!(close(cs.partial(&vars), cos_d, 1e-13));
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let recip_d = (-1f64).powi(k as i32) * fact / 0.3f64.powi(k as i32 + 1);
            assert!(close(r.partial(&vars), recip_d, 1e-12));
            if k > 0 {
                let fact1: f64 = (1..k).map(|i| i as f64).product();
                let ln_d = (-1f64).powi(k as i32 + 1) * fact1 / 0.3f64.powi(k as i32);
                assert!(close(l.partial(&vars), ln_d, 1e-12));
            }
        }
    }

    #[test]
    fn negative_power_and_domain_errors() {
        let s = JetSpace::get(1, 2);
        let x = Jet::variable(&s, 0, 2.0);
        let p = x.powi(-2).unwrap();
        assert!(close(p.value(), 0.25, 1e-15));
        assert!(close(p.partial(&[0]), -0.25, 1e-15));
        assert!(close(p.partial(&[0, 0]), 6.0 / 16.0, 1e-15));
        let zero = Jet::variable(&s, 0, 0.0);
        assert!(zero.recip().is_err());
        assert!(zero.ln().is_err());
    }

    #[test]
    fn derivative_and_truncation() {
        let s = JetSpace::get(2, 3);
        let x = Jet::variable(&s, 0, 0.5);
        let y = Jet::variable(&s, 1, -1.0);
        let f = (&x * &y).sin();
        let fx = f.derivative(0).truncate(2);
        // d/dx sin(xy) = y cos(xy)
        assert!(close(fx.value(), -1.0 * (-0.5f64).cos(), 1e-14));
        // d/dy of that = cos(xy) - xy sin(xy)
        let expect = (-0.5f64).cos() + 0.5 * (-0.5f64).sin();
        assert!(close(fx.partial(&[1]), expect, 1e-14));
    }
}
