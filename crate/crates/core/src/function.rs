//! Smooth functions that can be expanded as jets.

use std::sync::Arc;

use crate::error::Result;
use crate::expr::ScalarField;
use crate::jet::Jet;

/// A smooth real function on a chart that can produce its Taylor jet at a point.
pub trait SmoothFunction: Send + Sync {
    fn dim(&self) -> usize;

    /// Taylor jet at `x` truncated at total degree `order`.
    fn jet(&self, x: &[f64], order: usize) -> Result<Jet>;

    fn label(&self) -> String;

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jet(x, 0)?.value())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, 1)?.gradient())
    }
}

/// Shared handle to a smooth function.
pub type FunctionRef = Arc<dyn SmoothFunction>;

impl SmoothFunction for ScalarField {
    fn dim(&self) -> usize {
        ScalarField::dim(self)
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        self.taylor(x, order)
    }

    fn label(&self) -> String {
        self.to_string()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.eval(x)
    }
}

/// Wrap a field as a shared function handle.
pub fn function(field: &ScalarField) -> FunctionRef {
    Arc::new(field.clone())
}
