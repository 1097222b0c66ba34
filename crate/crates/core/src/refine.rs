//! Spectral boundary refinement and word-level aggregation.
//!
//! Each CTC boundary is moved to the frame of least combined activity
//! `alpha * E + beta * SF` inside a window of half-width `delta_s` around it,
//! where `E` is short-time RMS energy and `SF` is spectral flux. Refined
//! character spans are then merged into one segment per word.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::align::TranscriptMap;
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::segmentation::{Segmentation, TimeSpan, WordSegment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Weight on RMS energy.
    pub alpha: f64,
    /// Weight on spectral flux.
    pub beta: f64,
    /// Search half-width in seconds.
    pub delta_s: f64,
    pub win_s: f64,
    pub hop_s: f64,
    /// Min-max normalize both features before combining them.
    pub normalize: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.2,
            delta_s: 0.05,
            win_s: 0.025,
            hop_s: 0.010,
            normalize: true,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.beta, self.delta_s, self.win_s, self.hop_s]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::Invalid("alpha, beta must be >= 0 with a positive sum".into()));
        }
        if self.delta_s <= 0.0 || self.win_s <= 0.0 || self.hop_s <= 0.0 {
            return Err(Error::Invalid("delta_s, win_s and hop_s must be positive".into()));
        }
        Ok(())
    }
}

/// Per-frame energy and flux on a centered, zero-padded analysis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    pub rms_energy: Vec<f64>,
    pub spectral_flux: Vec<f64>,
    /// Frame centers; frame `n` is centered at `n * hop_s`.
    pub frame_times_s: Vec<f64>,
    pub hop_s: f64,
    pub win_s: f64,
    pub duration_s: f64,
}

impl SpectralFeatures {
    pub fn len(&self) -> usize {
        self.frame_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_times_s.is_empty()
    }

    #[inline]
    pub fn objective(&self, frame: usize, cfg: &RefineConfig) -> f64 {
        cfg.alpha * self.rms_energy[frame] + cfg.beta * self.spectral_flux[frame]
    }
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos())
        .collect()
}

fn min_max_normalize(xs: &mut [f64]) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        for x in xs.iter_mut() {
            *x = (*x - lo) / range;
        }
    } else {
        xs.fill(0.0);
    }
}

struct FrameAnalyzer {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl FrameAnalyzer {
    fn new(win: usize) -> Self {
        Self {
            window: periodic_hann(win),
            fft: FftPlanner::new().plan_fft_forward(win),
            buf: vec![Complex::default(); win],
        }
    }

    /// Fills `mags` with the one-sided magnitude spectrum and returns the RMS
    /// of the windowed frame starting at sample `origin` (may be negative).
    fn analyze(&mut self, samples: &[f32], origin: isize, mags: &mut Vec<f64>) -> f64 {
        let win = self.window.len();
        let mut energy = 0.0;
        for k in 0..win {
            let idx = origin + k as isize;
            let x = if idx >= 0 && (idx as usize) < samples.len() {
                samples[idx as usize] as f64
            } else {
                0.0
            };
            let y = x * self.window[k];
            energy += y * y;
            self.buf[k] = Complex::new(y, 0.0);
        }
        self.fft.process(&mut self.buf);
        mags.clear();
        mags.extend(self.buf[..win / 2 + 1].iter().map(|c| c.norm()));
        (energy / win as f64).sqrt()
    }
}

/// Computes RMS energy and spectral flux on Hann-windowed, centered frames.
///
/// Frames are zero padded at both ends, so frame `n` is centered on sample
/// `n * hop`. Flux of the first frame is zero.
pub fn compute_features(w: &Waveform, cfg: &RefineConfig) -> Result<SpectralFeatures> {
    cfg.validate()?;
    let sr = w.sample_rate() as f64;
    let win = ((cfg.win_s * sr).round() as usize).max(2);
    let hop = ((cfg.hop_s * sr).round() as usize).max(1);
    if w.len() < win {
        return Err(Error::TooShort {
            samples: w.len(),
            window: win,
        });
    }
    let n_frames = 1 + w.len() / hop;
    let half = (win / 2) as isize;

    let mut analyzer = FrameAnalyzer::new(win);
    let mut prev = Vec::with_capacity(win / 2 + 1);
    let mut cur = Vec::with_capacity(win / 2 + 1);
    let mut rms_energy = Vec::with_capacity(n_frames);
    let mut spectral_flux = Vec::with_capacity(n_frames);
    for n in 0..n_frames {
        let origin = (n * hop) as isize - half;
        rms_energy.push(analyzer.analyze(w.samples(), origin, &mut cur));
        let flux = if n == 0 {
            0.0
        } else {
            prev.iter().zip(&cur).map(|(a, b): (&f64, &f64)| (b - a).powi(2)).sum::<f64>().sqrt()
        };
        spectral_flux.push(flux);
        std::mem::swap(&mut prev, &mut cur);
    }
    if cfg.normalize {
        min_max_normalize(&mut rms_energy);
        min_max_normalize(&mut spectral_flux);
    }
    let hop_s = hop as f64 / sr;
    Ok(SpectralFeatures {
        rms_energy,
        spectral_flux,
        frame_times_s: (0..n_frames).map(|n| n as f64 * hop_s).collect(),
        hop_s,
        win_s: win as f64 / sr,
        duration_s: w.duration_seconds(),
    })
}

/// Moves one boundary to the minimum of `alpha * E + beta * SF` over frames
/// centered in `[t_est - delta, t_est + delta]` intersected with `clamp`.
///
/// Ties go to the frame nearest `t_est`, then to the earlier one. With no
/// frame in the window, `t_est` is returned unchanged.
pub fn refine_boundary(t_est: f64, feats: &SpectralFeatures, cfg: &RefineConfig, clamp: TimeSpan) -> f64 {
    let lo = (t_est - cfg.delta_s).max(clamp.start_s());
    let hi = (t_est + cfg.delta_s).min(clamp.end_s());
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return t_est;
    }
    let times = &feats.frame_times_s;
    let first = times.partition_point(|&t| t < lo);
    let last = times.partition_point(|&t| t <= hi);

    let mut best: Option<(usize, f64, f64)> = None;
    for (n, &t) in times.iter().enumerate().take(last).skip(first) {
        let score = feats.objective(n, cfg);
        let dist = (t - t_est).abs();
        let better = match best {
            None => true,
            Some((_, s, d)) => score < s || (score == s && dist < d),
        };
        if better {
            best = Some((n, score, dist));
        }
    }
    best.map_or(t_est, |(n, _, _)| times[n])
}

/// Refines every character boundary while keeping spans ordered.
///
/// An edge shared by abutting spans is refined once and stays shared, within
/// the midpoints of the two spans. Across a gap each edge is confined to its
/// own half of the gap. The outer edges are confined to `[0, mid]` and
/// `[mid, duration]` of the first and last span.
pub fn refine_alignment(char_spans: &[TimeSpan], feats: &SpectralFeatures, cfg: &RefineConfig) -> Result<Vec<TimeSpan>> {
    cfg.validate()?;
    if char_spans.is_empty() {
        return Ok(Vec::new());
    }
    for (k, pair) in char_spans.windows(2).enumerate() {
        if pair[1].start_s() < pair[0].end_s() {
            return Err(Error::Invalid(format!("character spans {k} and {} overlap", k + 1)));
        }
    }
    let duration = feats.duration_s.max(char_spans[char_spans.len() - 1].end_s());
    let clamp = |a: f64, b: f64| TimeSpan::new(a, b);
    let refine = |t: f64, c: TimeSpan| refine_boundary(t, feats, cfg, c);

    let k_last = char_spans.len() - 1;
    let mut starts = vec![0.0; char_spans.len()];
    let mut ends = vec![0.0; char_spans.len()];
    starts[0] = refine(char_spans[0].start_s(), clamp(0.0, char_spans[0].midpoint_s())?);
    ends[k_last] = refine(
        char_spans[k_last].end_s(),
        clamp(char_spans[k_last].midpoint_s(), duration)?,
    );
    for k in 0..k_last {
        let (a, b) = (char_spans[k], char_spans[k + 1]);
        if a.end_s() == b.start_s() {
            let t = refine(a.end_s(), clamp(a.midpoint_s(), b.midpoint_s())?);
            ends[k] = t;
            starts[k + 1] = t;
        } else {
            let gap_mid = 0.5 * (a.end_s() + b.start_s());
            ends[k] = refine(a.end_s(), clamp(a.midpoint_s(), gap_mid)?);
            starts[k + 1] = refine(b.start_s(), clamp(gap_mid, b.midpoint_s())?);
        }
    }

    // Both edges of a span can only meet exactly at its midpoint; fall back to
    // the unrefined end edge, which lies strictly past the midpoint.
    for k in 0..char_spans.len() {
        if ends[k] <= starts[k] {
            let shared = k < k_last && ends[k] == starts[k + 1];
            ends[k] = char_spans[k].end_s();
            if shared {
                starts[k + 1] = ends[k];
            }
        }
    }

    starts.into_iter().zip(ends).map(|(s, e)| TimeSpan::new(s, e)).collect()
}

/// Merges character spans into one hull span per word.
pub fn aggregate_words(char_spans: &[TimeSpan], tm: &TranscriptMap, total_duration_s: f64) -> Result<Segmentation> {
    if char_spans.len() != tm.chars().len() {
        return Err(Error::Internal(format!(
            "{} character spans for {} characters",
            char_spans.len(),
            tm.chars().len()
        )));
    }
    let mut grouped: Vec<Vec<TimeSpan>> = vec![Vec::new(); tm.words().len()];
    for (c, span) in tm.chars().iter().zip(char_spans) {
        grouped
            .get_mut(c.word_index)
            .ok_or_else(|| Error::Internal(format!("word index {} out of range", c.word_index)))?
            .push(*span);
    }
    let words = tm
        .words()
        .iter()
        .zip(grouped)
        .enumerate()
        .map(|(i, (text, chars))| {
            if chars.is_empty() {
                return Err(Error::Internal(format!("word {i} has no characters")));
            }
            let lo = chars.iter().map(|c| c.start_s()).fold(f64::INFINITY, f64::min);
            let hi = chars.iter().map(|c| c.end_s()).fold(f64::NEG_INFINITY, f64::max);
            Ok(WordSegment {
                text: text.clone(),
                span: TimeSpan::new(lo, hi)?,
                chars,
            })
        })
        .collect::<Result<_>>()?;
    Segmentation::new(words, total_duration_s)
}
