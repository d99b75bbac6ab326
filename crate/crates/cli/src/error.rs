use std::path::PathBuf;

use bulksurf_core::diagnostics::DiagError;
use bulksurf_core::solver::SolverError;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("invalid initial data file {}: {message}", path.display())]
    InitialData { path: PathBuf, message: String },
    #[error("solver failed at t = {time}: {source}")]
    Solver { time: f64, source: SolverError },
    #[error("diagnostics failed: {0}")]
    Diagnostics(#[from] DiagError),
    #[error("{0}")]
    Usage(String),
    #[error("limit convergence study failed: {0}")]
    Study(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Schema { .. } => "schema",
            CliError::InitialData { .. } => "initial_data",
            CliError::Solver { .. } => "solver",
            CliError::Diagnostics(_) => "diagnostics",
            CliError::Usage(_) => "usage",
            CliError::Study(_) => "study",
        }
    }

    /// Configuration problems exit with 2, runtime failures with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Schema { .. } | CliError::Usage(_) | CliError::InitialData { .. } => 2,
            _ => 1,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> Value {
        let mut rec = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        let e = &mut rec["error"];
        match self {
            CliError::Io { path, .. } | CliError::InitialData { path, .. } => {
                e["path"] = json!(path.display().to_string())
            }
            CliError::Parse { line, column, .. } => {
                e["line"] = json!(line);
                e["column"] = json!(column);
            }
            CliError::Schema { key, .. } => e["key"] = json!(key),
            CliError::Solver { time, .. } => e["time"] = json!(time),
            _ => {}
        }
        rec
    }
}
