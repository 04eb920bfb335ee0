use std::fmt;

use thiserror::Error;

/// One row of an N-continuation distance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationRow {
    pub n: f64,
    /// Space-time L¹ distance to the previous level; `None` for the first level.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable(pub Vec<ContinuationRow>);

impl fmt::Display for DistanceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.0 {
            match row.distance {
                Some(d) => writeln!(f, "  N={:<10} distance={:.6e}", row.n, d)?,
                None => writeln!(f, "  N={:<10} distance=-", row.n)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("nonlinear solve failed at t={time:.6e} (dt={dt:.3e}): residual {residual:.3e} after {iterations} iterations")]
    SolverFailure {
        time: f64,
        dt: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("N-continuation did not converge: {reason}\n{table}")]
    ContinuationStalled { reason: String, table: DistanceTable },

    #[error("insufficient asymptotic window: {0}")]
    InsufficientWindow(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
