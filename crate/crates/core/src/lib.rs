//! Word-level Shapley attribution for speech inputs.
//!
//! The pipeline turns a waveform and its transcript into word segments
//! (CTC forced alignment followed by spectral boundary refinement), plays a
//! cooperative game whose players are those segments, and estimates each
//! segment's Shapley value against an external model evaluator.

pub mod align;
pub mod audio;
pub mod diagnostics;
pub mod emissions;
pub mod error;
pub mod evaluator;
pub mod game;
pub mod protocol;
pub mod record;
pub mod refine;
pub mod segmentation;
pub mod shapley;
pub mod synth;

pub use audio::Waveform;
pub use emissions::EmissionMatrix;
pub use error::{Error, Result};
pub use evaluator::{EvalError, EvalRequest, ModelEvaluator};
pub use game::{Coalition, CoalitionGame};
pub use record::AttributionRecord;
pub use refine::RefineConfig;
pub use segmentation::{Segmentation, TimeSpan, WordSegment};
pub use shapley::{AttributionResult, Method};

/// Aligns `transcript` against `emissions`, refines every character
/// boundary on the waveform's spectral features and merges characters into
/// word segments.
pub fn segment_utterance(
    waveform: &Waveform,
    emissions: &EmissionMatrix,
    transcript: &str,
    cfg: &RefineConfig,
) -> Result<Segmentation> {
    let map = align::decompose(transcript, emissions.vocab())?;
    let alignment = align::force_align(emissions, &map)?;
    let duration = waveform.duration_seconds();
    let coarse = align::frames_to_seconds(&alignment, emissions, duration)?;
    let features = refine::compute_features(waveform, cfg)?;
    let refined = refine::refine_alignment(&coarse, &features, cfg)?;
    refine::aggregate_words(&refined, &map, duration)
}
