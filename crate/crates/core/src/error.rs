use thiserror::Error;

/// Failure raised by one of the solver stages.
///
/// Every variant records the operation of origin as `module::operation`
/// so that messages surfaced by the CLI point at the failing stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: geometry error: {msg}")]
    Geometry { op: &'static str, msg: String },

    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("{op}: singular evaluation: {msg}")]
    Singular { op: &'static str, msg: String },

    #[error("{op}: quadrature did not converge (achieved {achieved:.3e}, target {target:.3e})")]
    Oracle {
        op: &'static str,
        achieved: f64,
        target: f64,
    },

    #[error("{op}: solver error: {msg} (condition estimate {condition:.3e})")]
    Solver {
        op: &'static str,
        msg: String,
        condition: f64,
    },

    #[error("{op}: convergence error: {msg}")]
    Convergence { op: &'static str, msg: String },

    #[error("{op}: rotational degeneracy along ({:.6}, {:.6}, {:.6}): {msg}", axis[0], axis[1], axis[2])]
    Degeneracy {
        op: &'static str,
        axis: [f64; 3],
        msg: String,
    },

    #[error("{op}: mass model error: {msg}")]
    MassModel { op: &'static str, msg: String },

    #[error("{op}: integration became unstable after {steps} steps")]
    Instability { op: &'static str, steps: usize },

    #[error("{op}: internal consistency error: residual {residual:.3e} exceeds {limit:.3e}")]
    Consistency {
        op: &'static str,
        residual: f64,
        limit: f64,
    },

    #[error("{op}: config error: {msg}")]
    Config { op: &'static str, msg: String },

    #[error("{op}: i/o error on {path}: {source}")]
    Io {
        op: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn geometry(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Geometry {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Config {
            op,
            msg: msg.into(),
        }
    }
}
