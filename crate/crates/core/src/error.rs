use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition on an input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input geometry does not determine a unique solution.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("point lies behind the camera (depth {depth:.3e})")]
    BehindCamera { depth: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("augmented normal equations are numerically singular (damping reached {lambda:.1e})")]
    SingularNormalEquations { lambda: f64 },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "{count} timestamps outside trajectory span [{span_start}, {span_end}] \
         (offending range [{min}, {max}])"
    )]
    OutOfSpan {
        count: usize,
        min: f64,
        max: f64,
        span_start: f64,
        span_end: f64,
    },

    #[error("GPS gap [{start}, {end}] s exceeds the gap threshold and is not covered by odometer/IMU samples")]
    UncoveredGap { start: f64, end: f64 },

    #[error("no row of the grid exhibits a road-edge signature")]
    NoEdges,

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
