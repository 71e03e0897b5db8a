use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} outside domain [{min}, {max}]")]
    OutOfDomain { x: f64, min: f64, max: f64 },

    #[error("second derivative at {x} needs a neighbour outside [{min}, {max}]")]
    Boundary { x: f64, min: f64, max: f64 },

    #[error("derivative order {0} not supported (expected 0, 1 or 2)")]
    Order(u8),

    #[error("perturbation appears unbounded: |value| = {value} at domain edge {x}")]
    Unbounded { x: f64, value: f64 },

    #[error("quadrature did not converge at y = {at} (error estimate {error:e} after {subdivisions} subdivisions)")]
    Quadrature { at: f64, error: f64, subdivisions: usize },

    #[error("integrand tail not negligible at y = {at}: window half-width {window} too narrow")]
    TailNotNegligible { at: f64, window: f64 },

    #[error("grid exhausted: only {remaining} interior nodes left (need {needed})")]
    GridExhausted { remaining: usize, needed: usize },

    #[error("insufficient grid: {got} usable points, need {needed}")]
    InsufficientGrid { got: usize, needed: usize },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty test family: every member had degenerate entropy")]
    EmptyFamily,

    #[error("function is not 1-Lipschitz: max slope {0}")]
    Lipschitz(f64),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("empty input")]
    Empty,

    #[error("sinkhorn did not converge: marginal violation {violation:e} after {iterations} iterations")]
    Sinkhorn { violation: f64, iterations: usize },

    #[error("trajectory blow-up at step {step} (|x| = {value}); reduce the time step")]
    BlowUp { step: usize, value: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
