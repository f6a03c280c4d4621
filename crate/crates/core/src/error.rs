use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("decay {lambda} is not reachable by the device, range is ({lo}, {hi})")]
    UnreachableDecay { lambda: f64, lo: f64, hi: f64 },

    #[error("pulse ({voltage} V, {width_us} us) lies outside the characterized grid")]
    Extrapolation { voltage: f64, width_us: f64 },

    #[error("short-term update of {target_ns} nS is not achievable, grid covers [{lo_ns}, {hi_ns}] nS")]
    UnachievableUpdate {
        target_ns: f64,
        lo_ns: f64,
        hi_ns: f64,
    },

    #[error("long-term target {target_ns} nS is below the current level {current_ns} nS; only potentiation is modeled")]
    UnsupportedDepression { target_ns: f64, current_ns: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("unknown synapse id {id} (ledger holds {len})")]
    UnknownSynapse { id: usize, len: usize },

    #[error("unknown cost-model key {0}")]
    UnknownKey(String),

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("illegal action {action}, environment accepts 0..{n_actions}")]
    IllegalAction { action: usize, n_actions: usize },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid characterization data: {0}")]
    InvalidData(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("worker {worker}: {source}")]
    Worker {
        worker: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI for exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Range { .. }
            | Error::UnreachableDecay { .. }
            | Error::Extrapolation { .. }
            | Error::UnachievableUpdate { .. }
            | Error::UnsupportedDepression { .. } => "device",
            Error::DimensionMismatch { .. } => "shape",
            Error::UnknownSynapse { .. } | Error::UnknownKey(_) => "lookup",
            Error::NonFinite(_) => "numeric",
            Error::IllegalAction { .. } | Error::Worker { .. } => "environment",
            Error::Fit(_) => "fit",
            Error::InvalidData(_) | Error::MalformedTrace(_) | Error::Csv(_) | Error::Json(_) => {
                "data"
            }
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io",
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
