use std::path::PathBuf;

/// Errors produced by the multiscale solver and its building blocks.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid connectivity: {0}")]
    InvalidConnectivity(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("mesh generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    #[error("linear solver failed: {reason} (residual {residual:.3e})")]
    Solver { reason: String, residual: f64 },

    #[error("trace-back failed at node {node}: {reason}")]
    Trace { node: usize, reason: String },

    #[error("basis propagation failed in cell {cell}: {reason}")]
    Propagation { cell: usize, reason: String },

    #[error("conformity violated: {0}")]
    Conformity(String),

    #[error("division by zero norm: {0}")]
    Division(String),

    #[error("step {step}, cell {cell}: {source}")]
    Cell {
        step: usize,
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a cell-level failure with the time step and cell it happened in.
    pub fn at_cell(self, step: usize, cell: usize) -> Self {
        match self {
            e @ Error::Cell { .. } => e,
            e => Error::Cell {
                step,
                cell,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of the numerical solution process (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Solver { .. }
            | Error::Trace { .. }
            | Error::Propagation { .. }
            | Error::Conformity(_)
            | Error::SingularGeometry(_)
            | Error::Internal(_)
            | Error::Division(_) => true,
            Error::Cell { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}
