use thiserror::Error;

/// Errors raised by the laboratory. Each variant names the failed contract.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("oracle `{oracle}` returned a non-finite value at x = {x:?}")]
    Oracle { oracle: &'static str, x: Vec<f64> },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("truncation: boundary-cell mass fraction {fraction:e} exceeds budget {budget:e}; enlarge the domain")]
    Truncation { fraction: f64, budget: f64 },

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("shift component {component} = {value} is not a multiple of the spacing {spacing}")]
    Alignment {
        component: usize,
        value: f64,
        spacing: f64,
    },

    #[error("translation loses mass {lost:e} (> {budget:e}) through the grid boundary")]
    MassLoss { lost: f64, budget: f64 },

    #[error("perturbation rejected: {0}")]
    Perturbation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("problem too large: {entries} cost entries exceed the budget of {budget}; use the entropic solver with on-the-fly costs")]
    Size { entries: usize, budget: usize },

    #[error("marginal mismatch: total masses differ by {0:e}")]
    Marginal(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("expected dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("monotone map degenerates at x = {x}: second derivative of the displacement is {value} <= -1")]
    MapDegeneracy { x: f64, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Hessian of the potential is singular (min eigenvalue {min_eigenvalue:e}) at x = {x:?}")]
    SingularHessian { x: Vec<f64>, min_eigenvalue: f64 },

    #[error("remainder transport cost vanishes although the measures differ")]
    DegenerateRemainder,

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
