use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid size {n}: need an even number of nodes, at least 4")]
    GridSize { n: usize },

    #[error("wavenumber {k} aliases on a grid of {n} nodes (need k < n/2)")]
    Aliasing { k: u32, n: usize },

    #[error("wavenumber {0} appears more than once")]
    DuplicateWavenumber(u32),

    #[error("wavenumber must be positive")]
    ZeroWavenumber,

    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid functions live on different grids ({left} vs {right} nodes)")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("principal eigenvector is not positive at node {node} (value {value:e})")]
    PositivityViolation { node: usize, value: f64 },

    #[error("spectral gap {gap:e} is too small; principal eigenvalue is not simple")]
    DegenerateGap { gap: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("{what}: discrepancy {discrepancy:e} exceeds tolerance {tolerance:e}")]
    Inconsistent {
        what: &'static str,
        discrepancy: f64,
        tolerance: f64,
    },

    #[error("drift potential spans {range} units; e^(2g) would overflow (limit 300)")]
    DriftRange { range: f64 },

    #[error("optimizer did not converge: last values spread {spread:e}, gradient norm {grad_norm:e}")]
    NonConvergence { spread: f64, grad_norm: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
