use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("CFL: dt = {dt_hours} h exceeds 1/|A[{row}][{row}]| = {bound_hours} h")]
    Cfl {
        row: usize,
        dt_hours: f64,
        bound_hours: f64,
    },

    #[error("factorization mismatch: max |Phi*G - P| = {max_dev:e}")]
    FactorizationMismatch { max_dev: f64 },

    #[error("policy structure violation: {0}")]
    StructureViolation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint residual {residual:e} exceeds {tolerance:e}: {what}")]
    ConstraintResidual {
        what: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("solver hit the iteration cap ({iterations}) with primal residual {primal:e}, dual residual {dual:e}")]
    MaxIterations {
        iterations: usize,
        primal: f64,
        dual: f64,
        best: Box<Vec<f64>>,
    },

    #[error("linear algebra: {0}")]
    Numerical(String),
}
