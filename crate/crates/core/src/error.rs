use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The average orientation is not uniquely defined (non-positive determinant
    /// or a multiple top eigenvalue).
    #[error("degenerate average: {0}")]
    DegenerateAverage(String),

    #[error("box length {length} is smaller than twice the interaction radius {radius}")]
    BoxTooSmall { length: f64, radius: f64 },

    #[error("spectral solve did not converge: residual {residual:e} > {tolerance:e} at {nodes} nodes")]
    NoConvergence {
        residual: f64,
        tolerance: f64,
        nodes: usize,
    },

    #[error("argument {value} outside of domain {domain}")]
    DomainError { value: f64, domain: &'static str },

    #[error("quaternion field changes sign between node {node} and node {neighbor}")]
    SignDiscontinuity { node: usize, neighbor: usize },

    #[error("time step {dt} exceeds the CFL bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrong orientation representation: expected {expected}")]
    WrongRepresentation { expected: &'static str },
}
