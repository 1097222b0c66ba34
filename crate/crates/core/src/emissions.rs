//! Frame-level log-probability grids and the EMM1 binary container.
//!
//! Layout: `b"EMM1"`, `T: u32 LE`, `V: u32 LE`, then `T*V` little-endian
//! `f32` values in row-major order. The vocabulary lives in a sidecar text
//! file, one token per line.

use std::fs;
use std::path::Path;

use tracing::warn;

use crate::error::{Error, Result};

pub const EMM1_MAGIC: &[u8; 4] = b"EMM1";
pub const BLANK_TOKEN: &str = "<blank>";
pub const WORD_DELIMITER: &str = "|";
const HEADER_LEN: usize = 12;
const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// A `T x V` grid of per-frame log-probabilities over a character vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    log_probs: Vec<f32>,
    frames: usize,
    vocab: Vec<String>,
    blank_index: usize,
    word_delim_index: Option<usize>,
    frame_stride_seconds: Option<f64>,
}

impl EmissionMatrix {
    /// Validates shape and locates the blank and delimiter tokens.
    ///
    /// The blank is the token spelled `<blank>` (or `<pad>`, the usual
    /// wav2vec2 spelling). Rows whose probabilities do not sum to one within
    /// 1e-3 are reported as a warning only.
    pub fn new(log_probs: Vec<f32>, frames: usize, vocab: Vec<String>) -> Result<Self> {
        let v = vocab.len();
        if frames < 1 || v < 2 {
            return Err(Error::Format(format!("need T >= 1 and V >= 2, got T={frames} V={v}")));
        }
        if log_probs.len() != frames * v {
            return Err(Error::Truncation {
                expected: frames * v * 4,
                found: log_probs.len() * 4,
            });
        }
        let blank_index = vocab
            .iter()
            .position(|t| t == BLANK_TOKEN)
            .or_else(|| vocab.iter().position(|t| t == "<pad>"))
            .ok_or_else(|| Error::VocabMismatch(format!("no {BLANK_TOKEN} token in vocabulary")))?;
        let word_delim_index = vocab.iter().position(|t| t == WORD_DELIMITER);
        let m = Self {
            log_probs,
            frames,
            vocab,
            blank_index,
            word_delim_index,
            frame_stride_seconds: None,
        };
        let drift = m.max_row_sum_deviation();
        if drift.is_nan() || drift > ROW_SUM_TOLERANCE {
            warn!(drift, "emission rows do not sum to one after exponentiation");
        }
        Ok(m)
    }

    pub fn with_frame_stride(mut self, seconds: f64) -> Result<Self> {
        if !(seconds.is_finite() && seconds > 0.0) {
            return Err(Error::Invalid(format!("frame stride {seconds} must be positive")));
        }
        self.frame_stride_seconds = Some(seconds);
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn blank_index(&self) -> usize {
        self.blank_index
    }

    pub fn word_delim_index(&self) -> Option<usize> {
        self.word_delim_index
    }

    pub fn frame_stride_seconds(&self) -> Option<f64> {
        self.frame_stride_seconds
    }

    pub fn row(&self, t: usize) -> &[f32] {
        let v = self.vocab.len();
        &self.log_probs[t * v..(t + 1) * v]
    }

    #[inline]
    pub fn get(&self, t: usize, token: usize) -> f32 {
        self.log_probs[t * self.vocab.len() + token]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.log_probs
    }

    /// Largest `|sum(exp(row)) - 1|` over all rows.
    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.frames)
            .map(|t| {
                let s: f64 = self.row(t).iter().map(|&x| (x as f64).exp()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Serializes the grid into EMM1 bytes.
    pub fn to_emm1_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.log_probs.len());
        out.extend_from_slice(EMM1_MAGIC);
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for x in &self.log_probs {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }
}

/// Parses an EMM1 payload into `(T, V, values)`.
pub fn parse_emm1(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < HEADER_LEN || &bytes[0..4] != EMM1_MAGIC {
        return Err(Error::Format("missing EMM1 magic".into()));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let v = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = frames
        .checked_mul(v)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("EMM1 dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Truncation {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((frames, v, values))
}

/// Reads a vocabulary sidecar: one token per line.
pub fn read_vocab(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

pub fn write_vocab(vocab: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut text = vocab.join("\n");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads an EMM1 matrix and its vocabulary sidecar.
pub fn load_emissions(matrix_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<EmissionMatrix> {
    let bytes = fs::read(matrix_path)?;
    let (frames, v, values) = parse_emm1(&bytes)?;
    let vocab = read_vocab(vocab_path)?;
    if vocab.len() != v {
        return Err(Error::VocabMismatch(format!(
            "matrix has V={v} columns but vocabulary has {} lines",
            vocab.len()
        )));
    }
    EmissionMatrix::new(values, frames, vocab)
}

/// Writes the matrix as EMM1 plus its vocabulary sidecar.
pub fn write_emissions(
    m: &EmissionMatrix,
    matrix_path: impl AsRef<Path>,
    vocab_path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(matrix_path, m.to_emm1_bytes())?;
    write_vocab(m.vocab(), vocab_path)
}
