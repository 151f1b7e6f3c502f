use thiserror::Error;

/// Errors raised by the discretization and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid mesh topology: {0}")]
    Topology(String),
    #[error("unknown subdomain id {0}")]
    UnknownSubdomain(usize),
    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),
    #[error("singular interpolation system on element {0}")]
    SingularInterpolation(usize),
    #[error("tensor is not skew-symmetric (deviation {0:e})")]
    NotSkew(f64),
    #[error("invalid material data: {}", .0.join("; "))]
    InvalidMaterials(Vec<String>),
    #[error("subdomain {0} is elastic; the viscous compliance is undefined there")]
    ElasticSubdomain(usize),
    #[error("singular local system on element {0}")]
    SingularLocal(usize),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("manufactured case check failed: {0}")]
    CaseCheck(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
