//! The cooperative game over word segments.
//!
//! Players are segments; `v(S)` is whatever the evaluator returns for the
//! audio with every segment outside `S` replaced by silence. Values are
//! memoized per coalition with single-flight semantics, so concurrent misses
//! on one coalition reach the evaluator exactly once.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::evaluator::{EvalError, EvalRequest, ModelEvaluator};
use crate::segmentation::Segmentation;

/// Bitmask of present players; bit `i` set means player `i` is audible.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(u64);

impl Coalition {
    pub const MAX_PLAYERS: usize = 63;

    pub const fn empty() -> Self {
        Self(0)
    }

    pub fn full(n: usize) -> Self {
        assert!(n <= Self::MAX_PLAYERS);
        Self((1u64 << n) - 1)
    }

    /// Fails when bits at or above `n` are set.
    pub fn from_bits(bits: u64, n: usize) -> Result<Self> {
        if n > Self::MAX_PLAYERS || bits >> n != 0 {
            return Err(Error::Invalid(format!("coalition {bits:#x} invalid for {n} players")));
        }
        Ok(Self(bits))
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Self {
        Self(members.into_iter().fold(0, |acc, i| acc | (1u64 << i)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, player: usize) -> bool {
        self.0 >> player & 1 == 1
    }

    pub fn with(self, player: usize) -> Self {
        Self(self.0 | 1 << player)
    }

    pub fn without(self, player: usize) -> Self {
        Self(self.0 & !(1 << player))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self, n: usize) -> Self {
        Self(!self.0 & Self::full(n).0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..64).filter(move |i| bits >> i & 1 == 1)
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coalition({:#b})", self.0)
    }
}

fn span_indices(start_s: f64, end_s: f64, sample_rate: u32, len: usize) -> (usize, usize) {
    let sr = sample_rate as f64;
    let a = ((start_s * sr).floor().max(0.0) as usize).min(len);
    let b = ((end_s * sr).floor().max(0.0) as usize).min(len);
    (a, b)
}

/// Zeroes the samples of every player absent from `coalition`.
///
/// A span `[a, b)` seconds covers sample indices `[floor(a*sr), floor(b*sr))`.
pub fn mask_audio(w: &Waveform, seg: &Segmentation, coalition: Coalition) -> Waveform {
    let mut samples = w.samples().to_vec();
    for (i, word) in seg.words().iter().enumerate() {
        if coalition.contains(i) {
            continue;
        }
        let (a, b) = span_indices(word.span.start_s(), word.span.end_s(), w.sample_rate(), samples.len());
        samples[a..b].fill(0.0);
    }
    w.with_samples(samples).expect("masking keeps samples valid")
}

enum Slot {
    Pending,
    Ready(f64),
}

struct EvaluatorPool {
    idle: Mutex<Vec<Box<dyn ModelEvaluator>>>,
    available: Condvar,
    size: usize,
}

impl EvaluatorPool {
    fn checkout(&self) -> Box<dyn ModelEvaluator> {
        let mut idle = self.idle.lock().unwrap();
        loop {
            if let Some(ev) = idle.pop() {
                return ev;
            }
            idle = self.available.wait(idle).unwrap();
        }
    }

    fn checkin(&self, ev: Box<dyn ModelEvaluator>) {
        self.idle.lock().unwrap().push(ev);
        self.available.notify_one();
    }
}

/// Number of retries after a transport failure before giving up.
pub const TRANSPORT_RETRIES: usize = 2;

pub struct CoalitionGame {
    n: usize,
    masking: Option<(Segmentation, Waveform)>,
    pool: EvaluatorPool,
    cache: Mutex<HashMap<Coalition, Slot>>,
    settled: Condvar,
    calls: AtomicU64,
}

impl CoalitionGame {
    /// An abstract game: the evaluator sees only the coalition.
    pub fn new(n: usize, evaluator: impl ModelEvaluator + 'static) -> Result<Self> {
        Self::build(n, None, vec![Box::new(evaluator)])
    }

    /// Players are the words of `segmentation`; the evaluator receives
    /// `audio` silenced outside the coalition.
    pub fn with_audio(segmentation: Segmentation, audio: Waveform, evaluator: impl ModelEvaluator + 'static) -> Result<Self> {
        Self::with_evaluator_pool(segmentation, audio, vec![Box::new(evaluator)])
    }

    /// Like [`with_audio`](Self::with_audio) with several evaluator handles;
    /// the pool size is the in-flight limit.
    pub fn with_evaluator_pool(
        segmentation: Segmentation,
        audio: Waveform,
        evaluators: Vec<Box<dyn ModelEvaluator>>,
    ) -> Result<Self> {
        if segmentation.total_duration_s() > audio.duration_seconds() + 1e-6 {
            warn!(
                seg = segmentation.total_duration_s(),
                audio = audio.duration_seconds(),
                "segmentation is longer than the audio"
            );
        }
        Self::build(segmentation.len(), Some((segmentation, audio)), evaluators)
    }

    fn build(n: usize, masking: Option<(Segmentation, Waveform)>, evaluators: Vec<Box<dyn ModelEvaluator>>) -> Result<Self> {
        if n > Coalition::MAX_PLAYERS {
            return Err(Error::TooManyPlayers {
                n,
                limit: Coalition::MAX_PLAYERS,
            });
        }
        if n == 0 {
            return Err(Error::Invalid("a game needs at least one player".into()));
        }
        if evaluators.is_empty() {
            return Err(Error::Invalid("no evaluator".into()));
        }
        if evaluators.iter().any(|e| !e.is_deterministic()) {
            warn!("evaluator is not deterministic; cached values will bias estimates");
        }
        let size = evaluators.len();
        Ok(Self {
            n,
            masking,
            pool: EvaluatorPool {
                idle: Mutex::new(evaluators),
                available: Condvar::new(),
                size,
            },
            cache: Mutex::new(HashMap::new()),
            settled: Condvar::new(),
            calls: AtomicU64::new(0),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn in_flight_limit(&self) -> usize {
        self.pool.size
    }

    pub fn segmentation(&self) -> Option<&Segmentation> {
        self.masking.as_ref().map(|(s, _)| s)
    }

    pub fn grand_coalition(&self) -> Coalition {
        Coalition::full(self.n)
    }

    /// Distinct coalitions the evaluator has answered.
    pub fn distinct_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn is_cached(&self, c: Coalition) -> bool {
        matches!(self.lock_cache().get(&c), Some(Slot::Ready(_)))
    }

    fn lock_cache(&self) -> MutexGuard<'_, HashMap<Coalition, Slot>> {
        self.cache.lock().unwrap()
    }

    /// `v(S)`, served from the cache when possible.
    pub fn value(&self, c: Coalition) -> Result<f64> {
        if c.bits() >> self.n != 0 {
            return Err(Error::Invalid(format!("{c:?} has players beyond n={}", self.n)));
        }
        {
            let mut cache = self.lock_cache();
            loop {
                match cache.get(&c) {
                    Some(Slot::Ready(v)) => return Ok(*v),
                    Some(Slot::Pending) => cache = self.settled.wait(cache).unwrap(),
                    None => {
                        cache.insert(c, Slot::Pending);
                        break;
                    }
                }
            }
        }
        let outcome = self.evaluate_uncached(c);
        let mut cache = self.lock_cache();
        match outcome {
            Ok(v) => {
                cache.insert(c, Slot::Ready(v));
                self.calls.fetch_add(1, Ordering::SeqCst);
            }
            Err(_) => {
                cache.remove(&c);
            }
        }
        drop(cache);
        self.settled.notify_all();
        outcome
    }

    /// Evaluates several coalitions, up to the in-flight limit at once.
    /// Results are returned in input order.
    pub fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let workers = self.pool.size.min(coalitions.len());
        if workers <= 1 {
            return coalitions.iter().map(|&c| self.value(c)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<f64>>>> = coalitions.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= coalitions.len() {
                        break;
                    }
                    *results[i].lock().unwrap() = Some(self.value(coalitions[i]));
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every index visited"))
            .collect()
    }

    fn evaluate_uncached(&self, c: Coalition) -> Result<f64> {
        let masked = self.masking.as_ref().map(|(seg, w)| mask_audio(w, seg, c));
        let request = EvalRequest {
            audio: masked.as_ref(),
            coalition: c,
            n: self.n,
        };
        let mut ev = self.pool.checkout();
        let mut attempt = 0;
        let outcome = loop {
            match ev.evaluate(&request) {
                Err(EvalError::Transport(msg)) if attempt < TRANSPORT_RETRIES => {
                    attempt += 1;
                    debug!(attempt, %msg, "retrying evaluation after transport failure");
                }
                other => break other,
            }
        };
        self.pool.checkin(ev);
        match outcome {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::Protocol(format!("evaluator returned non-finite value {v}"))),
            Err(EvalError::Protocol(msg)) => Err(Error::Protocol(msg)),
            Err(e) => Err(Error::Evaluator(e.to_string())),
        }
    }
}

impl fmt::Debug for CoalitionGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoalitionGame")
            .field("n", &self.n)
            .field("distinct_calls", &self.distinct_calls())
            .field("in_flight_limit", &self.pool.size)
            .finish()
    }
}
