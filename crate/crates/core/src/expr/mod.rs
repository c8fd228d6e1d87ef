//! Scalar expressions over a coordinate chart.
//!
//! Fields are parsed from text, differentiated symbolically (with a shared
//! derivative cache) and evaluated either pointwise or as Taylor jets.

mod ast;
mod chart;
mod field;
mod parser;

pub use ast::{Expr, ExprDisplay, Func};
pub use chart::{ChartSpec, SecondBlock};
pub use field::{Derivatives, ScalarField};
pub use parser::parse_expr;
