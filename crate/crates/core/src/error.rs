use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no buckling under this load direction at k = [{:.4}, {:.4}, {:.4}] (largest load factor inverse {tau_max:.3e})", k[0], k[1], k[2])]
    NoBuckling { k: [f64; 3], tau_max: f64 },

    #[error("degenerate feature {0}: control point coincides with center")]
    DegenerateFeature(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True when the failure is numerical rather than a bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotConverged { .. } | Error::Singular(_) | Error::NoBuckling { .. } => true,
            Error::Iteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
