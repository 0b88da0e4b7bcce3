//! Experiment harness behind the `msde` binary: experiment configuration,
//! the replicated Monte Carlo driver, and machine-readable reports.

// `!(x > 0)` guards double as NaN checks; the clippy rewrite would accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod mc;

use std::fmt;

/// Harness-level error with a process exit code attached.
#[derive(Debug)]
pub enum HarnessError {
    Core(msde::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
    Config(String),
    TooManyFailures { failed: usize, total: usize, first: String },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Core(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
            HarnessError::Json(e) => write!(f, "json error: {e}"),
            HarnessError::Config(msg) => write!(f, "configuration error: {msg}"),
            HarnessError::TooManyFailures { failed, total, first } => {
                write!(f, "{failed}/{total} replicates failed (>1%); first failure: {first}")
            }
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<msde::Error> for HarnessError {
    fn from(e: msde::Error) -> Self {
        match e {
            msde::Error::Io(io) => HarnessError::Io(io),
            other => HarnessError::Core(other),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Json(e)
    }
}

impl HarnessError {
    /// Exit-code convention: 2 configuration, 3 numeric/estimation,
    /// 4 input/output.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Io(_) | HarnessError::Json(_) => 4,
            HarnessError::TooManyFailures { .. } => 3,
            HarnessError::Core(e) => match e {
                msde::Error::InvalidConfig(_) | msde::Error::GridMismatch(_) => 2,
                msde::Error::Io(_) | msde::Error::Format(_) => 4,
                msde::Error::SingularDiffusion { .. }
                | msde::Error::NonFiniteState { .. }
                | msde::Error::DegenerateNormalEquations { .. }
                | msde::Error::NonPositiveDefinite { .. } => 3,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
