use thiserror::Error;

use crate::scalar::ScalarKind;

/// Which normalizer of a tensor operator vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    Trace { value: f64 },
    Diagonal { index: usize, value: f64 },
    RowSum { index: usize, value: f64 },
}

impl std::fmt::Display for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Normalizer::Trace { value } => write!(f, "trace = {value:e}"),
            Normalizer::Diagonal { index, value } => write!(f, "diagonal entry {index} = {value:e}"),
            Normalizer::RowSum { index, value } => write!(f, "row sum {index} = {value:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: expected a square matrix, got {rows}x{cols}")]
    NotSquare { op: &'static str, rows: usize, cols: usize },

    #[error("{op}: non-finite entry at ({row}, {col})")]
    NonFinite { op: &'static str, row: usize, col: usize },

    #[error("Pade denominator is singular (condition estimate {condition:e})")]
    SingularDenominator { condition: f64 },

    #[error("degenerate normalizer: {which} is below threshold {threshold:e}")]
    DegenerateNormalizer { which: Normalizer, threshold: f64 },

    #[error("kernel attention denominator of row {row} is {value:e}")]
    DegenerateDenominator { row: usize, value: f64 },

    #[error("{op} is not defined for {kind:?} scalars")]
    ComplexNotSupported { op: &'static str, kind: ScalarKind },

    #[error("tensor interaction requires d_v = d, got d = {d}, d_v = {d_v}")]
    DvMismatch { d: usize, d_v: usize },

    #[error("shape too large: {elements} elements exceeds limit {limit}")]
    ShapeTooLarge { elements: usize, limit: usize },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
