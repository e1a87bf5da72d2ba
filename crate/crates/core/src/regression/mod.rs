//! Huber M-estimation by iteratively reweighted least squares, excess-crime
//! residuals and robust association tables.

mod excess;
mod huber;
mod linalg;

pub use excess::{
    association_report, count_crimes, excess_crime, write_association_csv, write_excess_csv, AssociationRow, CrimeCounts,
    ExcessCrime, ExcessCrimeResult, ModelSpec, Outcome, Predictor,
};
pub use huber::{huber_fit, wls, Design, HuberConfig, RegressionFit};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error("need more rows than columns, got {rows} rows for {cols} columns")]
    TooFewRows { rows: usize, cols: usize },
    #[error("design has {design} rows but response has {response}")]
    LengthMismatch { design: usize, response: usize },
    #[error("non-finite value in column {column}")]
    NonFinite { column: String },
    #[error("rank-deficient design, collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("invalid Huber configuration: {0}")]
    BadConfig(String),
}
