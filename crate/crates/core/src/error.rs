use std::io;

use thiserror::Error;

/// Errors produced anywhere in the segmentation and attribution pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported encoding: {0}")]
    Unsupported(String),

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncation { expected: usize, found: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("transcript has no characters present in the vocabulary")]
    EmptyTranscript,

    #[error("alignment infeasible: {frames} frames cannot hold {required} CTC emissions")]
    InfeasibleAlignment { frames: usize, required: usize },

    #[error("waveform of {samples} samples is shorter than one analysis window ({window} samples)")]
    TooShort { samples: usize, window: usize },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("too many players: {n} (limit {limit})")]
    TooManyPlayers { n: usize, limit: usize },

    #[error("evaluator error: {0}")]
    Evaluator(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("all attributions are zero")]
    DegenerateAttribution,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("paired test undefined: {0}")]
    UndefinedTest(String),
}

pub type Result<T> = std::result::Result<T, Error>;
