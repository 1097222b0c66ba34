//! Seeded synthetic data: speech-like utterances with matching emission
//! matrices, random games, planted-gap signals and attribution vectors.

use rand::Rng;

use crate::audio::Waveform;
use crate::emissions::{EmissionMatrix, BLANK_TOKEN, WORD_DELIMITER};
use crate::error::Result;
use crate::segmentation::TimeSpan;

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
pub const SYNTH_FRAME_STRIDE_S: f64 = 0.02;

const LEXICON: &[&str] = &[
    "the", "cat", "sat", "on", "a", "warm", "mat", "she", "sells", "sea", "shells", "by", "shore", "quick", "brown",
    "fox", "jumps", "over", "lazy", "dog", "rain", "in", "spain", "stays", "mainly", "plain", "we", "will", "meet",
    "at", "noon", "today", "it's", "green", "light", "river", "stone", "music", "plays", "softly",
];

/// `<blank>`, `|`, `a`..`z`, `'`.
pub fn synth_vocab() -> Vec<String> {
    let mut v = vec![BLANK_TOKEN.to_string(), WORD_DELIMITER.to_string()];
    v.extend(('a'..='z').map(String::from));
    v.push("'".into());
    v
}

pub fn random_transcript<R: Rng + ?Sized>(rng: &mut R, n_words: usize) -> String {
    (0..n_words)
        .map(|_| LEXICON[rng.gen_range(0..LEXICON.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A generated utterance with ground-truth word and character timing.
#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub transcript: String,
    pub waveform: Waveform,
    pub word_spans: Vec<TimeSpan>,
    /// Per word, the spans of its characters.
    pub char_spans: Vec<Vec<TimeSpan>>,
}

/// Renders each word as voiced tone bursts, one per character, separated by
/// silent gaps. Leading and trailing silence is 0.1 s.
pub fn speech_like<R: Rng + ?Sized>(rng: &mut R, transcript: &str) -> Result<SyntheticUtterance> {
    let sr = SYNTH_SAMPLE_RATE as f64;
    let words: Vec<&str> = transcript.split_whitespace().collect();
    let mut samples: Vec<f32> = Vec::new();
    let mut word_spans = Vec::with_capacity(words.len());
    let mut char_spans = Vec::with_capacity(words.len());
    let pad = |samples: &mut Vec<f32>, secs: f64| samples.extend(std::iter::repeat_n(0.0, (secs * sr) as usize));

    pad(&mut samples, 0.1);
    for (wi, word) in words.iter().enumerate() {
        if wi > 0 {
            pad(&mut samples, rng.gen_range(0.06..0.16));
        }
        let word_start = samples.len();
        let f0: f64 = rng.gen_range(100.0..220.0);
        let amplitude: f64 = rng.gen_range(0.3..0.7);
        let mut spans = Vec::new();
        for (ci, ch) in word.chars().enumerate() {
            let len = (rng.gen_range(0.07..0.11) * sr) as usize;
            let start = samples.len();
            // each character gets its own formant so the spectrum changes at character edges
            let formant = 300.0 + 90.0 * ((ch as u32 % 26) as f64) + 40.0 * ci as f64;
            for k in 0..len {
                let t = k as f64 / sr;
                let x = (2.0 * std::f64::consts::PI * f0 * t).sin()
                    + 0.5 * (2.0 * std::f64::consts::PI * formant * t).sin()
                    + 0.02 * rng.gen_range(-1.0..1.0);
                samples.push((amplitude * x / 1.52) as f32);
            }
            spans.push(TimeSpan::new(start as f64 / sr, samples.len() as f64 / sr)?);
        }
        // short fade at word edges
        let fade = ((0.005 * sr) as usize).min((samples.len() - word_start) / 2);
        for k in 0..fade {
            let g = k as f32 / fade as f32;
            samples[word_start + k] *= g;
            let end = samples.len() - 1 - k;
            samples[end] *= g;
        }
        word_spans.push(TimeSpan::new(word_start as f64 / sr, samples.len() as f64 / sr)?);
        char_spans.push(spans);
    }
    pad(&mut samples, 0.1);
    Ok(SyntheticUtterance {
        transcript: words.join(" "),
        waveform: Waveform::new(samples, SYNTH_SAMPLE_RATE)?,
        word_spans,
        char_spans,
    })
}

/// Emissions that peak on each character over its true span, on `|` in the
/// middle of inter-word gaps and on blank elsewhere, with some noise.
pub fn emissions_for<R: Rng + ?Sized>(rng: &mut R, utt: &SyntheticUtterance) -> Result<EmissionMatrix> {
    let vocab = synth_vocab();
    let v = vocab.len();
    let frames = (utt.waveform.duration_seconds() / SYNTH_FRAME_STRIDE_S).ceil().max(1.0) as usize;
    let index_of = |c: char| vocab.iter().position(|t| t.chars().eq(std::iter::once(c)));
    let mut log_probs = Vec::with_capacity(frames * v);
    for t in 0..frames {
        let mid = (t as f64 + 0.5) * SYNTH_FRAME_STRIDE_S;
        let mut target = 0;
        for (wi, chars) in utt.char_spans.iter().enumerate() {
            for (span, ch) in chars.iter().zip(utt.transcript.split_whitespace().nth(wi).unwrap_or("").chars()) {
                if span.contains(mid) {
                    target = index_of(ch).unwrap_or(0);
                }
            }
            if wi + 1 < utt.word_spans.len() {
                let gap_mid = 0.5 * (utt.word_spans[wi].end_s() + utt.word_spans[wi + 1].start_s());
                if (mid - gap_mid).abs() < 0.5 * SYNTH_FRAME_STRIDE_S {
                    target = 1;
                }
            }
        }
        let mut row: Vec<f64> = (0..v).map(|_| rng.gen_range(0.01..0.05)).collect();
        row[target] += rng.gen_range(2.0..4.0);
        row[0] += 0.3;
        let total: f64 = row.iter().sum();
        log_probs.extend(row.iter().map(|p| (p / total).ln() as f32));
    }
    EmissionMatrix::new(log_probs, frames, vocab)?.with_frame_stride(SYNTH_FRAME_STRIDE_S)
}

/// A random characteristic function over `n` players, indexed by coalition
/// bits. Entries are uniform in `[-1, 1]`.
pub fn random_value_table<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..1usize << n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// A signal that is loud on both sides of a planted silence, plus a coarse
/// boundary estimate near one of the gap edges.
#[derive(Debug, Clone)]
pub struct PlantedGap {
    pub waveform: Waveform,
    pub gap: TimeSpan,
    pub t_est: f64,
}

/// Total length is 0.6 s; the gap is 40 to 90 ms wide and starts between
/// 0.2 and 0.3 s. The estimate lies within 40 ms of a gap edge.
pub fn planted_gap<R: Rng + ?Sized>(rng: &mut R) -> Result<PlantedGap> {
    let sr = SYNTH_SAMPLE_RATE as f64;
    let len = (0.6 * sr) as usize;
    let gap_start = rng.gen_range(0.2..0.3);
    let gap_end = gap_start + rng.gen_range(0.04..0.09);
    let (a, b) = ((gap_start * sr) as usize, (gap_end * sr) as usize);
    let f1: f64 = rng.gen_range(150.0..400.0);
    let f2: f64 = rng.gen_range(600.0..1500.0);
    let samples = (0..len)
        .map(|k| {
            if (a..b).contains(&k) {
                return 0.0;
            }
            let t = k as f64 / sr;
            let f = if k < a { f1 } else { f2 };
            let x = 0.5 * (2.0 * std::f64::consts::PI * f * t).sin() + 0.05 * rng.gen_range(-1.0..1.0);
            // keep every loud sample strictly non-zero
            (if x.abs() < 1e-4 { 1e-4 } else { x }) as f32
        })
        .collect();
    let edge = if rng.gen_bool(0.5) { gap_start } else { gap_end };
    let t_est = edge + rng.gen_range(-0.04..0.04);
    Ok(PlantedGap {
        waveform: Waveform::new(samples, SYNTH_SAMPLE_RATE)?,
        gap: TimeSpan::new(a as f64 / sr, b as f64 / sr)?,
        t_est,
    })
}

/// Positive attributions whose mass decays along player order, normalized
/// to sum to one.
pub fn early_mass_attributions<R: Rng + ?Sized>(rng: &mut R, n: usize, decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| (-decay * i as f64 / n as f64).exp() * rng.gen_range(0.5..1.5))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}
