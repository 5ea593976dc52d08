//! Failure classes and their exit codes.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use ifd_core::bernoulli::BernoulliError;
use ifd_core::dynamics::DynamicsError;
use ifd_core::floquet::FloquetError;
use ifd_core::mesh::MeshError;
use ifd_core::strategy::StrategyError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config at {pointer}: {message}")]
    Validation { pointer: String, message: String },
    #[error("{stage}: {message}")]
    Numerical {
        stage: String,
        message: String,
        diagnostics: Value,
    },
    #[error("{stage}: {message}")]
    Infeasible {
        stage: String,
        message: String,
        diagnostics: Value,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// The JSON error object written to stderr and `error.json`.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub stage: String,
    pub message: String,
    pub diagnostics: Value,
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        let mut pointer = pointer.into();
        if pointer.is_empty() {
            pointer.push('/');
        }
        CliError::Validation {
            pointer,
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => EXIT_VALIDATION,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Infeasible { .. } => EXIT_INFEASIBLE,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (stage, message, diagnostics) = match self {
            CliError::Validation { pointer, message } => {
                ("validate".to_string(), message.clone(), json!({ "pointer": pointer }))
            }
            CliError::Numerical {
                stage,
                message,
                diagnostics,
            }
            | CliError::Infeasible {
                stage,
                message,
                diagnostics,
            } => (stage.clone(), message.clone(), diagnostics.clone()),
            CliError::Io { context, source } => ("io".to_string(), format!("{context}: {source}"), Value::Null),
        };
        ErrorReport {
            stage,
            message,
            diagnostics,
            exit_code: self.exit_code(),
        }
    }
}

fn numerical(stage: &str, message: String, diagnostics: Value) -> CliError {
    CliError::Numerical {
        stage: stage.into(),
        message,
        diagnostics,
    }
}

fn infeasible(stage: &str, message: String, diagnostics: Value) -> CliError {
    CliError::Infeasible {
        stage: stage.into(),
        message,
        diagnostics,
    }
}

/// Maps library errors to a failure class for a named pipeline stage.
pub trait Staged<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> Staged<T> for Result<T, BernoulliError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| bernoulli_error(stage, e))
    }
}

fn bernoulli_error(stage: &str, e: BernoulliError) -> CliError {
    let message = e.to_string();
    match e {
        BernoulliError::Infeasible { min, i, j } => {
            infeasible(stage, message, json!({ "min_ktilde": min, "i": i, "j": j }))
        }
        BernoulliError::AmplitudeTooSmall {
            amplitude,
            min_margin,
            max_margin,
            ..
        } => numerical(
            stage,
            message,
            json!({ "amplitude": amplitude, "min_margin": min_margin, "max_margin": max_margin }),
        ),
        BernoulliError::NonPositive { field, i, j, value } => numerical(
            stage,
            message,
            json!({ "field": field, "i": i, "j": j, "value": value }),
        ),
        BernoulliError::Mesh(m) => mesh_error(stage, m),
        _ => numerical(stage, message, Value::Null),
    }
}

impl<T> Staged<T> for Result<T, StrategyError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| {
            let message = e.to_string();
            match e {
                StrategyError::Infeasible { margin, x, t } => {
                    infeasible(stage, message, json!({ "margin": margin, "x": x, "t": t }))
                }
                StrategyError::Compatibility { j, defect } => {
                    numerical(stage, message, json!({ "j": j, "defect": defect }))
                }
                StrategyError::PathNotImproving { raw, achieved, modes } => numerical(
                    stage,
                    message,
                    json!({ "raw": raw, "achieved": achieved, "modes": modes }),
                ),
                StrategyError::Bernoulli(b) => bernoulli_error(stage, b),
                StrategyError::Mesh(m) => mesh_error(stage, m),
                StrategyError::InvalidParameter(_) => numerical(stage, message, Value::Null),
            }
        })
    }
}

impl<T> Staged<T> for Result<T, DynamicsError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| dynamics_error(stage, e))
    }
}

fn dynamics_error(stage: &str, e: DynamicsError) -> CliError {
    let message = e.to_string();
    match e {
        DynamicsError::NonConvergence {
            periods,
            defect_history,
        } => {
            let tail: Vec<f64> = defect_history.iter().rev().take(10).rev().copied().collect();
            numerical(stage, message, json!({ "periods": periods, "last_defects": tail }))
        }
        DynamicsError::Negativity {
            species,
            i,
            value,
            period,
        } => numerical(
            stage,
            message,
            json!({ "species": species, "i": i, "value": value, "period": period }),
        ),
        DynamicsError::Mesh(m) => mesh_error(stage, m),
        _ => numerical(stage, message, Value::Null),
    }
}

impl<T> Staged<T> for Result<T, FloquetError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| {
            let message = e.to_string();
            match e {
                FloquetError::NonConvergence { iterations, last } => {
                    numerical(stage, message, json!({ "iterations": iterations, "last_ratios": last }))
                }
                FloquetError::Dynamics(d) => dynamics_error(stage, d),
                FloquetError::Mesh(m) => mesh_error(stage, m),
                _ => numerical(stage, message, Value::Null),
            }
        })
    }
}

impl<T> Staged<T> for Result<T, MeshError> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| mesh_error(stage, e))
    }
}

fn mesh_error(stage: &str, e: MeshError) -> CliError {
    match e {
        MeshError::Io(source) => CliError::io(stage, source),
        other => numerical(stage, other.to_string(), Value::Null),
    }
}
