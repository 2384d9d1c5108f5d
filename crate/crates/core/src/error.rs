use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IlbError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IlbError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("referential integrity: {0}")]
    ReferentialIntegrity(String),

    #[error("insufficient population: need at least {needed} households, got {got}")]
    InsufficientPopulation { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("load series covers {available} days but the cycle needs {required}")]
    Coverage { required: usize, available: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate population: {0}")]
    DegeneratePopulation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("infeasible shortfall on emergency day {day}: need {required:.3} kWh, at most {available:.3} kWh achievable")]
    Infeasible {
        day: usize,
        required: f64,
        available: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("node {0} has zero degree")]
    IsolatedNode(usize),

    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    #[error("degenerate supervision: {0}")]
    DegenerateSupervision(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<IlbError>,
    },

    #[error("i/o error on {path}: {source}")]
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

impl IlbError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IlbError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Tags an error with the pipeline stage that produced it.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| IlbError::Stage {
            stage,
            source: Box::new(source),
        })
    }
}
