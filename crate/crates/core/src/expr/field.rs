use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use super::ast::Expr;
use super::chart::ChartSpec;
use super::parser::parse_expr;
use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace};

struct Inner {
    chart: ChartSpec,
    body: Expr,
    derivatives: RwLock<HashMap<Vec<usize>, Arc<Expr>>>,
}

/// A parsed expression over a chart with cached symbolic partial derivatives.
///
/// Cloning is cheap and clones share the derivative cache.
#[derive(Clone)]
pub struct ScalarField {
    inner: Arc<Inner>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({self})")
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.inner.body.display(self.inner.chart.names()))
    }
}

/// Value and partial derivatives up to third order at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub order: usize,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub third: Vec<Vec<Vec<f64>>>,
}

impl ScalarField {
    pub fn parse(text: &str, chart: &ChartSpec) -> Result<ScalarField> {
        Self::parse_with_params(text, chart, &BTreeMap::new())
    }

    pub fn parse_with_params(
        text: &str,
        chart: &ChartSpec,
        params: &BTreeMap<String, f64>,
    ) -> Result<ScalarField> {
        Ok(Self::from_expr(chart, parse_expr(text, chart, params)?))
    }

    pub fn from_expr(chart: &ChartSpec, body: Expr) -> ScalarField {
        if let Some(i) = body.max_var() {
            assert!(
                i < chart.dim(),
                "expression refers to a coordinate outside the chart"
            );
        }
        ScalarField {
            inner: Arc::new(Inner {
                chart: chart.clone(),
                body,
                derivatives: RwLock::new(HashMap::new()),
            }),
        }
    }

    pub fn constant(chart: &ChartSpec, c: f64) -> ScalarField {
        Self::from_expr(chart, Expr::Const(c))
    }

    pub fn coordinate(chart: &ChartSpec, i: usize) -> ScalarField {
        Self::from_expr(chart, Expr::Var(i))
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.inner.chart
    }

    pub fn body(&self) -> &Expr {
        &self.inner.body
    }

    pub fn dim(&self) -> usize {
        self.inner.chart.dim()
    }

    /// Symbolic partial derivative for a multi-index given as a list of variables.
    pub fn derivative_expr(&self, vars: &[usize]) -> Arc<Expr> {
        let mut key = vars.to_vec();
        key.sort_unstable();
        if key.is_empty() {
            return Arc::new(self.inner.body.clone());
        }
        if let Some(e) = self
            .inner
            .derivatives
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&key)
        {
            return e.clone();
        }
        let (last, prefix) = key.split_last().expect("non-empty");
        let parent = if prefix.is_empty() {
            None
        } else {
            Some(self.derivative_expr(prefix))
        };
        let d = match &parent {
            Some(p) => p.derivative(*last),
            None => self.inner.body.derivative(*last),
        };
        let d = Arc::new(d);
        self.inner
            .derivatives
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key)
            .or_insert(d)
            .clone()
    }

    /// Partial derivative with respect to coordinate index `i` as a new field.
    pub fn partial(&self, i: usize) -> ScalarField {
        Self::from_expr(&self.inner.chart, (*self.derivative_expr(&[i])).clone())
    }

    /// Partial derivative with respect to a named coordinate.
    pub fn differentiate(&self, name: &str) -> Result<ScalarField> {
        let i = self
            .inner
            .chart
            .index_of(name)
            .ok_or_else(|| Error::UnknownIdentifier(name.to_string()))?;
        Ok(self.partial(i))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.inner.chart.check_point(x)?;
        self.inner.body.eval(x)
    }

    /// Value and symbolic partials of order at most `order` (0 to 3).
    pub fn eval_jet(&self, x: &[f64], order: usize) -> Result<Derivatives> {
        if order > 3 {
            return Err(Error::InvalidOrder(order));
        }
        self.inner.chart.check_point(x)?;
        let d = self.dim();
        let value = self.inner.body.eval(x)?;
        let mut gradient = Vec::new();
        let mut hessian = Vec::new();
        let mut third = Vec::new();
        if order >= 1 {
            gradient = (0..d)
                .map(|i| self.derivative_expr(&[i]).eval(x))
                .collect::<Result<_>>()?;
        }
        if order >= 2 {
            hessian = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in i..d {
                    let v = self.derivative_expr(&[i, j]).eval(x)?;
                    hessian[i][j] = v;
                    hessian[j][i] = v;
                }
            }
        }
        if order >= 3 {
            third = vec![vec![vec![0.0; d]; d]; d];
            for i in 0..d {
                for j in i..d {
                    for k in j..d {
                        let v = self.derivative_expr(&[i, j, k]).eval(x)?;
                        for (a, b, c) in [
                            (i, j, k),
                            (i, k, j),
                            (j, i, k),
                            (j, k, i),
                            (k, i, j),
                            (k, j, i),
                        ] {
                            third[a][b][c] = v;
                        }
                    }
                }
            }
        }
        Ok(Derivatives {
            order,
            value,
            gradient,
            hessian,
            third,
        })
    }

    /// Taylor expansion at `x` to any order, computed by propagating jets through the tree.
    pub fn taylor(&self, x: &[f64], order: usize) -> Result<Jet> {
        self.inner.chart.check_point(x)?;
        let space = JetSpace::get(self.dim(), order);
        self.inner.body.taylor(&Jet::variables(&space, x))
    }

    /// Taylor expansion given precomputed coordinate jets.
    pub fn taylor_with(&self, vars: &[Jet]) -> Result<Jet> {
        if vars.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: vars.len(),
            });
        }
        self.inner.body.taylor(vars)
    }

    fn combine(&self, other: &ScalarField, op: fn(Expr, Expr) -> Expr) -> ScalarField {
        assert_eq!(
            self.chart(),
            other.chart(),
            "fields live on different charts"
        );
        Self::from_expr(self.chart(), op(self.body().clone(), other.body().clone()))
    }

    /// # Panics
    /// If the charts differ; likewise for the other combinators.
    pub fn plus(&self, other: &ScalarField) -> ScalarField {
        self.combine(other, Expr::add)
    }

    pub fn minus(&self, other: &ScalarField) -> ScalarField {
        self.combine(other, Expr::sub)
    }

    pub fn times(&self, other: &ScalarField) -> ScalarField {
        self.combine(other, Expr::mul)
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        Self::from_expr(self.chart(), Expr::mul(Expr::Const(c), self.body().clone()))
    }
}
