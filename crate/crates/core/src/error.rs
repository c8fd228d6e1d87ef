use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at position {position}: expected {}", expected.join(", "))]
    SyntaxError {
        position: usize,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("evaluation outside the domain: {0}")]
    EvalDomainError(String),
    #[error("derivative order {0} is not supported")]
    InvalidOrder(usize),
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("rank is not constant across samples ({context}): {ranks:?}")]
    RankNotConstant { context: String, ranks: Vec<usize> },
    #[error("rank {0} of the flat map is even; the rank threshold is probably misestimated")]
    NotOdd(usize),
    #[error("linear system is inconsistent (residual {residual:e})")]
    InconsistentSystem { residual: f64 },
    #[error("operation requires a contact (nondegenerate) structure")]
    NotContact,
    #[error("velocity Hessian is singular (rank {rank} of {dim})")]
    SingularHessian { rank: usize, dim: usize },
    #[error("point is not in the fiber (distance {distance:e})")]
    NotOnFiber { distance: f64 },
    #[error("vector field does not solve the equations of motion (residual {residual:e})")]
    NotASolution { residual: f64 },
    #[error("constraint algorithm did not stabilize within {0} levels")]
    MaxLevelsExceeded(usize),
    #[error("point is not on the constraint manifold (residual {residual:e})")]
    NotOnManifold { residual: f64 },
    #[error("equations of motion have no solution here (residual {residual:e})")]
    NoSolution { residual: f64 },
    #[error("constraint bracket matrix is singular (condition number {condition:e})")]
    SingularCMatrix { condition: f64 },
    #[error("state became non-finite at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("integration failed at t = {time}: {source}")]
    IntegrationFailed { time: f64, source: Box<Error> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
