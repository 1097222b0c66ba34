//! The value-function side of the game: anything that maps a (masked)
//! waveform to a scalar.

use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::audio::Waveform;
use crate::game::Coalition;

/// One evaluation: the masked audio (absent for abstract games) and the
/// coalition that produced it.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub audio: Option<&'a Waveform>,
    pub coalition: Coalition,
    pub n: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    /// The channel to the evaluator broke; the request may be retried.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The evaluator answered with an error message.
    #[error("evaluator reported: {0}")]
    Remote(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

/// A model reachable for value queries. Implementations must be
/// deterministic: the game caches every answer.
pub trait ModelEvaluator: Send {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError>;

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl<E: ModelEvaluator + ?Sized> ModelEvaluator for Box<E> {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError> {
        (**self).evaluate(request)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}

/// Shares one evaluator between games, e.g. a resident model reused across
/// samples.
impl<E: ModelEvaluator + ?Sized> ModelEvaluator for Arc<Mutex<E>> {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError> {
        self.lock().unwrap_or_else(|p| p.into_inner()).evaluate(request)
    }

    fn is_deterministic(&self) -> bool {
        self.lock().unwrap_or_else(|p| p.into_inner()).is_deterministic()
    }
}

/// `v(S) = sum of weights of the players in S`.
#[derive(Debug, Clone)]
pub struct AdditiveEvaluator {
    pub weights: Vec<f64>,
}

impl AdditiveEvaluator {
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }
}

impl ModelEvaluator for AdditiveEvaluator {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError> {
        Ok(request.coalition.members().map(|i| self.weights[i]).sum())
    }
}

/// Wraps a closure over coalitions.
pub struct FnEvaluator<F>(pub F);

impl<F> ModelEvaluator for FnEvaluator<F>
where
    F: FnMut(Coalition) -> f64 + Send,
{
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError> {
        Ok((self.0)(request.coalition))
    }
}

/// RMS energy of the whole masked waveform; masking a word never raises it.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyEvaluator;

impl ModelEvaluator for EnergyEvaluator {
    fn evaluate(&mut self, request: &EvalRequest<'_>) -> Result<f64, EvalError> {
        let audio = request
            .audio
            .ok_or_else(|| EvalError::Protocol("energy evaluator needs audio".into()))?;
        if audio.is_empty() {
            return Ok(0.0);
        }
        let sum_sq: f64 = audio.samples().iter().map(|&s| (s as f64) * (s as f64)).sum();
        Ok((sum_sq / audio.len() as f64).sqrt())
    }
}
