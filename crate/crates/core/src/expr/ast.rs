use std::fmt;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Elementary functions accepted by the grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }
}

/// Expression tree. Variables refer to chart positions.
///
/// Subtraction is stored as `Add(a, Neg(b))`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Func(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
            (Expr::Const(x), _) if *x == 0.0 => b,
            (_, Expr::Const(y)) if *y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
            (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => Expr::Const(0.0),
            (Expr::Const(x), _) if *x == 1.0 => b,
            (_, Expr::Const(y)) if *y == 1.0 => a,
            (Expr::Const(x), _) if *x == -1.0 => Expr::neg(b),
            (_, Expr::Const(y)) if *y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (&a, &b) {
            (Expr::Const(x), Expr::Const(y)) if *y != 0.0 => Expr::Const(x / y),
            (Expr::Const(x), _) if *x == 0.0 => Expr::Const(0.0),
            (_, Expr::Const(y)) if *y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, k: i32) -> Expr {
        match (&a, k) {
            (_, 0) => Expr::Const(1.0),
            (_, 1) => a,
            (Expr::Const(x), _) if *x != 0.0 || k > 0 => Expr::Const(x.powi(k)),
            _ => Expr::Pow(Box::new(a), k),
        }
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        match (f, &a) {
            (Func::Exp, Expr::Const(x)) => Expr::Const(x.exp()),
            (Func::Sin, Expr::Const(x)) => Expr::Const(x.sin()),
            (Func::Cos, Expr::Const(x)) => Expr::Const(x.cos()),
            (Func::Ln, Expr::Const(x)) if *x > 0.0 => Expr::Const(x.ln()),
            _ => Expr::Func(f, Box::new(a)),
        }
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.derivative(var), (**b).clone()),
                Expr::mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Neg(a) => Expr::neg(a.derivative(var)),
            Expr::Div(a, b) => {
                let da = a.derivative(var);
                let db = b.derivative(var);
                if db.as_const() == Some(0.0) {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                        Expr::pow((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, k) => Expr::mul(
                Expr::mul(Expr::Const(*k as f64), Expr::pow((**a).clone(), k - 1)),
                a.derivative(var),
            ),
            Expr::Func(f, a) => {
                let inner = a.derivative(var);
                let outer = match f {
                    Func::Exp => Expr::func(Func::Exp, (**a).clone()),
                    Func::Ln => Expr::div(Expr::Const(1.0), (**a).clone()),
                    Func::Sin => Expr::func(Func::Cos, (**a).clone()),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, (**a).clone())),
                };
                Expr::mul(outer, inner)
            }
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.max_var().max(b.max_var()),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.max_var(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(Error::EvalDomainError("division by zero".into()));
                }
                a.eval(x)? / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x)?;
                if base == 0.0 && *k < 0 {
                    return Err(Error::EvalDomainError("negative power of zero".into()));
                }
                base.powi(*k)
            }
            Expr::Func(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Ln => {
                        if v <= 0.0 {
                            return Err(Error::EvalDomainError(format!("ln({v})")));
                        }
                        v.ln()
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        })
    }

    /// Taylor-mode evaluation: `vars` are the jets of the coordinates.
    pub fn taylor(&self, vars: &[Jet]) -> Result<Jet> {
        Ok(match self {
            Expr::Const(c) => vars[0].constant_like(*c),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Add(a, b) => a.taylor(vars)? + b.taylor(vars)?,
            Expr::Mul(a, b) => a.taylor(vars)? * b.taylor(vars)?,
            Expr::Neg(a) => -a.taylor(vars)?,
            Expr::Div(a, b) => a
                .taylor(vars)?
                .div(&b.taylor(vars)?)
                .map_err(|_| Error::EvalDomainError("division by zero".into()))?,
            Expr::Pow(a, k) => {
                let base = a.taylor(vars)?;
                if base.value() == 0.0 && *k < 0 {
                    return Err(Error::EvalDomainError("negative power of zero".into()));
                }
                base.powi(*k)?
            }
            Expr::Func(f, a) => {
                let v = a.taylor(vars)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln()?,
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                }
            }
        })
    }

    /// Display adapter resolving variable indices to names.
    pub fn display<'a>(&'a self, names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, names }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 6,
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    names: &'a [String],
}

impl ExprDisplay<'_> {
    fn sub<'b>(&'b self, e: &'b Expr) -> ExprDisplay<'b> {
        ExprDisplay {
            expr: e,
            names: self.names,
        }
    }

    fn wrapped(&self, f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({})", self.sub(e))
        } else {
            write!(f, "{}", self.sub(e))
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "(-{:?})", c.abs())
                } else {
                    write!(f, "{c:?}")
                }
            }
            Expr::Var(i) => write!(f, "{}", self.names[*i]),
            Expr::Add(a, b) => {
                write!(f, "{}", self.sub(a))?;
                match &**b {
                    Expr::Neg(inner) => {
                        f.write_str(" - ")?;
                        let p = inner.precedence();
                        self.wrapped(f, inner, p <= 1 || p == 3)
                    }
                    other => {
                        f.write_str(" + ")?;
                        self.wrapped(f, other, other.precedence() <= 1)
                    }
                }
            }
            Expr::Mul(a, b) => {
                self.wrapped(f, a, a.precedence() < 2)?;
                f.write_str("*")?;
                self.wrapped(f, b, b.precedence() <= 3)
            }
            Expr::Div(a, b) => {
                self.wrapped(f, a, a.precedence() < 2)?;
                f.write_str("/")?;
                self.wrapped(f, b, b.precedence() <= 4)
            }
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.wrapped(f, a, a.precedence() <= 3)
            }
            Expr::Pow(a, k) => {
                self.wrapped(f, a, a.precedence() <= 5)?;
                if *k < 0 {
                    write!(f, "^({k})")
                } else {
                    write!(f, "^{k}")
                }
            }
            Expr::Func(func, a) => write!(f, "{}({})", func.name(), self.sub(a)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smart_constructors_fold() {
        assert_eq!(
            Expr::add(Expr::Const(1.0), Expr::Const(2.0)),
            Expr::Const(3.0)
        );
        assert_eq!(Expr::mul(Expr::Const(0.0), Expr::var(0)), Expr::Const(0.0));
        assert_eq!(Expr::mul(Expr::Const(1.0), Expr::var(0)), Expr::var(0));
        assert_eq!(Expr::pow(Expr::var(0), 1), Expr::var(0));
        assert_eq!(Expr::neg(Expr::neg(Expr::var(1))), Expr::var(1));
        // division by a literal zero stays unevaluated
        assert!(matches!(
            Expr::div(Expr::Const(1.0), Expr::Const(0.0)),
            Expr::Div(..)
        ));
    }

    #[test]
    fn derivative_of_quotient_and_functions() {
        // f = sin(x)/y ; df/dx = cos(x)/y ; df/dy = -sin(x)/y^2
        let f = Expr::div(Expr::func(Func::Sin, Expr::var(0)), Expr::var(1));
        let x = [0.4, 2.0];
        assert!((f.derivative(0).eval(&x).unwrap() - 0.4f64.cos() / 2.0).abs() < 1e-15);
        assert!((f.derivative(1).eval(&x).unwrap() + 0.4f64.sin() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors_at_evaluation() {
        let f = Expr::div(Expr::Const(1.0), Expr::var(0));
        assert!(matches!(f.eval(&[0.0]), Err(Error::EvalDomainError(_))));
        let g = Expr::func(Func::Ln, Expr::var(0));
        assert!(matches!(g.eval(&[-1.0]), Err(Error::EvalDomainError(_))));
    }

    #[test]
    fn display_keeps_structure() {
        let names: Vec<String> = vec!["a".into(), "b".into()];
        let e = Expr::sub(Expr::var(0), Expr::add(Expr::var(1), Expr::Const(-2.0)));
        assert_eq!(e.display(&names).to_string(), "a - (b + (-2.0))");
        let p = Expr::pow(Expr::neg(Expr::var(0)), 2);
        assert_eq!(p.display(&names).to_string(), "(-a)^2");
    }
}
