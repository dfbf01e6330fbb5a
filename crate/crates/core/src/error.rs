use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two fields that must live on the same mesh do not.
    #[error("geometry mismatch: expected {expected_m1}x{expected_m2}, found {found_m1}x{found_m2}")]
    GeometryMismatch {
        expected_m1: usize,
        expected_m2: usize,
        found_m1: usize,
        found_m2: usize,
    },

    /// Invalid construction parameters (mesh sizes, decomposition, solver settings).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// An input that must lie in the feasible set C does not.
    #[error("infeasible input: {0}")]
    Infeasible(String),

    /// A local subdomain solve aborted.
    #[error("local solve failed on subdomain {subdomain}: {source}")]
    LocalSolve {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn geometry_mismatch(
        expected: crate::grid::GridGeometry,
        found: crate::grid::GridGeometry,
    ) -> Self {
        Error::GeometryMismatch {
            expected_m1: expected.m1,
            expected_m2: expected.m2,
            found_m1: found.m1,
            found_m2: found.m2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
