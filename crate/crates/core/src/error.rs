// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("excitation linewidth is undefined for gamma_r = 0")]
    UndefinedLinewidth,

    #[error("no lattice sites fall inside the disk")]
    EmptyGeometry,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("atoms {i} and {j} coincide")]
    SingularDistance { i: usize, j: usize },

    #[error("basis needs {required_bytes} bytes, over the configured cap of {cap_bytes} bytes")]
    Capacity { required_bytes: u128, cap_bytes: u128 },

    #[error("invalid basis request: {0}")]
    InvalidBasis(String),

    #[error("configuration {0:#b} is not in the basis")]
    NotInBasis(u64),

    #[error("index {index} out of range for basis of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("cannot lower atom {atom} in configuration {bits:#b}: atom is in the ground state")]
    InvalidLowering { bits: u64, atom: usize },

    #[error("state and operator are defined over different bases")]
    BasisMismatch,

    #[error("time step {dt} exceeds the stability limit {dt_max}")]
    StepSize { dt: f64, dt_max: f64 },

    #[error("jump left a zero-norm state on channel {0}")]
    ImpossibleJump(String),

    #[error("state is not normalized (norm^2 = {0})")]
    Unnormalized(f64),

    #[error("Mandel Q is undefined for a distribution with zero mean")]
    UndefinedQ,

    #[error("no samples recorded at t = {0}")]
    UnknownSampleTime(f64),

    #[error("invalid time window: {0}")]
    InvalidTimeWindow(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParams(_)
            | Error::InvalidGeometry(_)
            | Error::SingularDistance { .. }
            | Error::InvalidBasis(_)
            | Error::EmptyGeometry
            | Error::UndefinedLinewidth
            | Error::Json(_) => 2,
            Error::Capacity { .. } => 3,
            Error::StepSize { .. }
            | Error::ImpossibleJump(_)
            | Error::Numeric(_)
            | Error::Unnormalized(_)
            | Error::UndefinedQ => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
