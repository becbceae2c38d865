use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient to working precision (condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no Sylvester/Paley Hadamard construction for order {0}; use DFT training instead")]
    HadamardOrder(usize),

    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),

    #[error("training block is not orthogonal (max deviation {deviation:e} from L_t*I)")]
    NonOrthogonalTraining { deviation: f64 },

    #[error("unknown constellation `{0}` (expected bpsk, qam16, qam64, psk8 or psk16)")]
    UnknownConstellation(String),

    #[error("invalid phase noise mask: {0}")]
    InvalidMask(String),

    #[error("mask offset {offset_hz} Hz is at or above Nyquist ({nyquist_hz} Hz)")]
    MaskAboveNyquist { offset_hz: f64, nyquist_hz: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("scenario line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error("unknown scenario key `{key}` on line {line}")]
    UnknownKey { line: usize, key: String },

    #[error("invalid model spec `{spec}`: {reason}")]
    ModelSpec { spec: String, reason: String },

    #[error("accumulator is empty")]
    EmptyAccumulator,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
