use thiserror::Error;

/// Errors produced by the tensor algebra, the solvers and the control pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("tensor is singular: Fourier block {block} has sigma_min/sigma_max = {ratio:e}")]
    Singular { block: usize, ratio: f64 },

    #[error("matrix is not block circulant (max deviation {deviation:e})")]
    NotCirculant { deviation: f64 },

    #[error("Fourier blocks violate conjugate symmetry at block {block} (deviation {deviation:e})")]
    ConjugateSymmetry { block: usize, deviation: f64 },

    #[error("Fourier block {block} is defective (eigenvector condition number {condition:e})")]
    Defective { block: usize, condition: f64 },

    #[error("tensor is not T-symmetric (deviation {deviation:e})")]
    NotSymmetric { deviation: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid weight tensor: {0}")]
    InvalidWeights(String),

    #[error("data are not informative: {0}")]
    NotInformative(String),

    #[error("data are inconsistent with every linear system (relative residual {residual:e})")]
    InconsistentData { residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("deadline exceeded")]
    Timeout,

    #[error("working set of {required_bytes} bytes exceeds the memory budget of {budget_bytes} bytes")]
    ResourceLimit { required_bytes: u64, budget_bytes: u64 },

    #[error("invalid input: {0}")]
    Parse(String),

    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_block(self, block: usize) -> Self {
        match self {
            e @ (Error::Timeout | Error::ResourceLimit { .. }) => e,
            e => Error::Block {
                block,
                source: Box::new(e),
            },
        }
    }

    /// True for budget exhaustion (deadline or memory), as opposed to a mathematical failure.
    pub fn is_budget(&self) -> bool {
        match self {
            Error::Timeout | Error::ResourceLimit { .. } => true,
            Error::Block { source, .. } => source.is_budget(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
