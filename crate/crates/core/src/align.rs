//! Transcript decomposition and CTC forced alignment.
//!
//! The transcript is normalized into words and characters, a membership map
//! records which word each character belongs to, and a Viterbi pass over the
//! CTC trellis pins every character to a contiguous run of frames.

use std::collections::HashMap;
use std::fmt::Write as _;

use tracing::warn;

use crate::emissions::{EmissionMatrix, WORD_DELIMITER};
use crate::error::{Error, Result};
use crate::segmentation::TimeSpan;

/// A retained transcript character and where it lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappedChar {
    pub ch: char,
    pub word_index: usize,
    pub vocab_index: usize,
}

/// Character-to-word membership map of a normalized transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptMap {
    words: Vec<String>,
    chars: Vec<MappedChar>,
}

impl TranscriptMap {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[MappedChar] {
        &self.chars
    }
}

fn char_lookup(vocab: &[String]) -> HashMap<char, usize> {
    let mut map = HashMap::new();
    for (i, tok) in vocab.iter().enumerate() {
        if tok == WORD_DELIMITER {
            continue;
        }
        let mut it = tok.chars();
        if let (Some(c), None) = (it.next(), it.next()) {
            map.entry(c).or_insert(i);
        }
    }
    map
}

/// Lowercases, splits on whitespace and keeps only characters the vocabulary
/// can emit. Words left empty by the filter are dropped.
pub fn decompose(transcript: &str, vocab: &[String]) -> Result<TranscriptMap> {
    let lookup = char_lookup(vocab);
    let resolve = |c: char| {
        lookup.get(&c).copied().or_else(|| {
            // upper-case-only vocabularies (common for wav2vec2 checkpoints)
            let mut up = c.to_uppercase();
            match (up.next(), up.next()) {
                (Some(u), None) => lookup.get(&u).copied(),
                _ => None,
            }
        })
    };

    let lowered = transcript.to_lowercase();
    let mut words = Vec::new();
    let mut chars = Vec::new();
    for raw in lowered.split_whitespace() {
        let kept: Vec<(char, usize)> = raw.chars().filter_map(|c| resolve(c).map(|i| (c, i))).collect();
        if kept.is_empty() {
            warn!(word = raw, "word has no characters in the vocabulary; dropped");
            continue;
        }
        let word_index = words.len();
        words.push(kept.iter().map(|(c, _)| *c).collect::<String>());
        chars.extend(kept.into_iter().map(|(ch, vocab_index)| MappedChar {
            ch,
            word_index,
            vocab_index,
        }));
    }
    if chars.is_empty() {
        return Err(Error::EmptyTranscript);
    }
    Ok(TranscriptMap { words, chars })
}

/// Frame run of one transcript character.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFrames {
    pub start_frame: usize,
    pub end_frame: usize,
    /// Mean emission log-probability over the character's frames.
    pub score: f64,
}

/// What the best path emits at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathState {
    Blank,
    Delimiter,
    /// Index into [`TranscriptMap::chars`].
    Char(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharAlignment {
    pub chars: Vec<CharFrames>,
    /// Log-probability of the best path; equal to the trellis optimum.
    pub path_log_prob: f64,
    /// Per-frame state of the best path, length `T`.
    pub path: Vec<PathState>,
}

#[derive(Clone, Copy)]
struct Label {
    token: usize,
    char_index: Option<usize>,
}

fn label_sequence(em: &EmissionMatrix, tm: &TranscriptMap) -> Result<Vec<Label>> {
    let v = em.vocab_size();
    let mut labels = Vec::with_capacity(tm.chars.len() + tm.words.len());
    for (k, c) in tm.chars.iter().enumerate() {
        if c.vocab_index >= v || c.vocab_index == em.blank_index() {
            return Err(Error::VocabMismatch(format!("character {:?} has no emission column", c.ch)));
        }
        if k > 0 && tm.chars[k - 1].word_index != c.word_index {
            if let Some(delim) = em.word_delim_index() {
                labels.push(Label {
                    token: delim,
                    char_index: None,
                });
            }
        }
        labels.push(Label {
            token: c.vocab_index,
            char_index: Some(k),
        });
    }
    Ok(labels)
}

/// Minimum frame count for a label sequence: one frame per label plus one
/// blank between each pair of identical neighbours.
fn min_frames(labels: &[Label]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0].token == w[1].token).count()
}

const STAY: u8 = 0;
const STEP: u8 = 1;
const SKIP: u8 = 2;

/// Viterbi forced alignment of `tm` against `em`.
///
/// States interleave blanks with labels (`2L + 1` of them). Backpointer ties
/// prefer staying, then a one-state advance, then skipping a blank; at the
/// last frame a tie between the final label and the trailing blank goes to
/// the label.
pub fn force_align(em: &EmissionMatrix, tm: &TranscriptMap) -> Result<CharAlignment> {
    let labels = label_sequence(em, tm)?;
    let frames = em.frames();
    let required = min_frames(&labels);
    if frames < required {
        return Err(Error::InfeasibleAlignment { frames, required });
    }

    let n_states = 2 * labels.len() + 1;
    let token_of = |s: usize| if s.is_multiple_of(2) { em.blank_index() } else { labels[s / 2].token };
    let can_skip = |s: usize| s % 2 == 1 && s >= 3 && labels[s / 2].token != labels[s / 2 - 1].token;

    let mut prev = vec![f64::NEG_INFINITY; n_states];
    let mut curr = vec![f64::NEG_INFINITY; n_states];
    let mut back = vec![STAY; frames * n_states];
    prev[0] = em.get(0, token_of(0)) as f64;
    prev[1] = em.get(0, token_of(1)) as f64;

    for t in 1..frames {
        let row = em.row(t);
        for s in 0..n_states {
            let mut best = prev[s];
            let mut step = STAY;
            if s >= 1 && prev[s - 1] > best {
                best = prev[s - 1];
                step = STEP;
            }
            if can_skip(s) && prev[s - 2] > best {
                best = prev[s - 2];
                step = SKIP;
            }
            curr[s] = best + row[token_of(s)] as f64;
            back[t * n_states + s] = step;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let (mut s, path_log_prob) = if prev[n_states - 2] >= prev[n_states - 1] {
        (n_states - 2, prev[n_states - 2])
    } else {
        (n_states - 1, prev[n_states - 1])
    };
    if path_log_prob == f64::NEG_INFINITY {
        return Err(Error::InfeasibleAlignment { frames, required });
    }

    let mut states = vec![0usize; frames];
    for t in (0..frames).rev() {
        states[t] = s;
        if t > 0 {
            s -= back[t * n_states + s] as usize;
        }
    }

    let mut spans: Vec<Option<(usize, usize, f64)>> = vec![None; tm.chars.len()];
    let path = states
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            if s.is_multiple_of(2) {
                return PathState::Blank;
            }
            let label = labels[s / 2];
            match label.char_index {
                None => PathState::Delimiter,
                Some(k) => {
                    let lp = em.get(t, label.token) as f64;
                    let e = spans[k].get_or_insert((t, t, 0.0));
                    e.1 = t;
                    e.2 += lp;
                    PathState::Char(k)
                }
            }
        })
        .collect();

    let chars = spans
        .into_iter()
        .map(|e| {
            let (start_frame, end_frame, sum) = e.ok_or_else(|| Error::Internal("label state never visited".into()))?;
            Ok(CharFrames {
                start_frame,
                end_frame,
                score: sum / (end_frame - start_frame + 1) as f64,
            })
        })
        .collect::<Result<_>>()?;

    Ok(CharAlignment {
        chars,
        path_log_prob,
        path,
    })
}

/// Converts frame runs to seconds using the model stride, or `duration / T`
/// when the matrix carries none. Spans are clamped to `[0, duration]`.
pub fn frames_to_seconds(ca: &CharAlignment, em: &EmissionMatrix, audio_duration_s: f64) -> Result<Vec<TimeSpan>> {
    if !(audio_duration_s.is_finite() && audio_duration_s > 0.0) {
        return Err(Error::Invalid(format!("audio duration {audio_duration_s}")));
    }
    let stride = em
        .frame_stride_seconds()
        .unwrap_or(audio_duration_s / em.frames() as f64);
    ca.chars
        .iter()
        .map(|c| {
            let start = (c.start_frame as f64 * stride).clamp(0.0, audio_duration_s);
            let end = ((c.end_frame + 1) as f64 * stride).clamp(0.0, audio_duration_s);
            TimeSpan::new(start, end)
        })
        .collect()
}

/// Inspection dump: `char word_index start_s end_s`, tab separated.
pub fn alignment_table(tm: &TranscriptMap, spans: &[TimeSpan]) -> String {
    let mut out = String::from("char\tword_index\tstart_s\tend_s\n");
    for (c, s) in tm.chars.iter().zip(spans) {
        writeln!(out, "{}\t{}\t{}\t{}", c.ch, c.word_index, s.start_s(), s.end_s()).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn letters_vocab() -> Vec<String> {
        let mut v: Vec<String> = vec!["<blank>".into(), "|".into()];
        v.extend(('a'..='z').map(|c| c.to_string()));
        v
    }

    fn matrix(probs: &[&[f32]], vocab: &[&str]) -> EmissionMatrix {
        let values = probs.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect();
        EmissionMatrix::new(values, probs.len(), vocab.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn decompose_two_words() {
        let tm = decompose("Hi  yo", &letters_vocab()).unwrap();
        assert_eq!(tm.words(), &["hi", "yo"]);
        let got: Vec<(char, usize)> = tm.chars().iter().map(|c| (c.ch, c.word_index)).collect();
        assert_eq!(got, vec![('h', 0), ('i', 0), ('y', 1), ('o', 1)]);
    }

    #[test]
    fn decompose_singleton() {
        let tm = decompose("A", &letters_vocab()).unwrap();
        assert_eq!(tm.words(), &["a"]);
        assert_eq!(tm.chars().len(), 1);
        assert_eq!(tm.chars()[0].word_index, 0);
    }

    #[test]
    fn decompose_drops_out_of_vocab_apostrophe() {
        let tm = decompose("don't stop", &letters_vocab()).unwrap();
        assert_eq!(tm.words(), &["dont", "stop"]);
        assert_eq!(tm.chars().len(), 8);
        let members: Vec<usize> = tm.chars().iter().map(|c| c.word_index).collect();
        assert_eq!(members, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn decompose_repacks_indices_after_dropping_a_word() {
        let tm = decompose("hi !!! yo", &letters_vocab()).unwrap();
        assert_eq!(tm.words(), &["hi", "yo"]);
        assert_eq!(tm.chars()[2].word_index, 1);
    }

    #[test]
    fn decompose_empty_is_error() {
        assert!(matches!(decompose("  ?! ", &letters_vocab()), Err(Error::EmptyTranscript)));
        assert!(matches!(decompose("", &letters_vocab()), Err(Error::EmptyTranscript)));
    }

    #[test]
    fn decompose_matches_uppercase_vocab() {
        let vocab: Vec<String> = ["<pad>", "|", "H", "I"].iter().map(|s| s.to_string()).collect();
        let tm = decompose("hi", &vocab).unwrap();
        assert_eq!(tm.chars()[0].vocab_index, 2);
    }

    #[test]
    fn single_label_fills_all_frames() {
        let em = matrix(&[&[0.9, 0.1], &[0.9, 0.1], &[0.9, 0.1]], &["a", "<blank>"]);
        let tm = decompose("a", em.vocab()).unwrap();
        let ca = force_align(&em, &tm).unwrap();
        assert_eq!((ca.chars[0].start_frame, ca.chars[0].end_frame), (0, 2));
        let expected = 3.0 * (0.9f32.ln() as f64);
        assert!((ca.path_log_prob - expected).abs() < 1e-12);
    }

    #[test]
    fn two_labels_split_at_peak_change() {
        let a = [0.97f32, 0.01, 0.01, 0.01];
        let b = [0.01f32, 0.97, 0.01, 0.01];
        let em = matrix(&[&a, &a, &b, &b], &["a", "b", "<blank>", "|"]);
        let tm = decompose("ab", em.vocab()).unwrap();
        let ca = force_align(&em, &tm).unwrap();
        let spans: Vec<(usize, usize)> = ca.chars.iter().map(|c| (c.start_frame, c.end_frame)).collect();
        assert_eq!(spans, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn too_few_frames_is_infeasible() {
        let em = matrix(&[&[0.5, 0.5], &[0.5, 0.5]], &["a", "<blank>"]);
        let tm = decompose("aa", em.vocab()).unwrap();
        assert_eq!(tm.chars().len(), 2);
        // "aa" needs a blank between the repeats: 3 frames
        assert!(matches!(
            force_align(&em, &tm),
            Err(Error::InfeasibleAlignment { frames: 2, required: 3 })
        ));
    }

    #[test]
    fn delimiter_frames_belong_to_no_character() {
        let p = |i: usize| {
            let mut r = [0.01f32; 4];
            r[i] = 0.97;
            r
        };
        // vocab: <blank>, |, a, b ; transcript "a b"
        let rows = [p(2), p(2), p(1), p(1), p(3), p(3)];
        let refs: Vec<&[f32]> = rows.iter().map(|r| &r[..]).collect();
        let em = matrix(&refs, &["<blank>", "|", "a", "b"]);
        let tm = decompose("a b", em.vocab()).unwrap();
        let ca = force_align(&em, &tm).unwrap();
        assert_eq!(
            ca.path,
            vec![
                PathState::Char(0),
                PathState::Char(0),
                PathState::Delimiter,
                PathState::Delimiter,
                PathState::Char(1),
                PathState::Char(1)
            ]
        );
    }

    #[test]
    fn stride_arithmetic_and_clamping() {
        let em = EmissionMatrix::new([0.0, -50.0].repeat(10), 10, vec!["<blank>".into(), "a".into()]).unwrap();
        let mk = |s, e| CharAlignment {
            chars: vec![CharFrames {
                start_frame: s,
                end_frame: e,
                score: 0.0,
            }],
            path_log_prob: 0.0,
            path: vec![],
        };
        let first = frames_to_seconds(&mk(0, 0), &em, 1.0).unwrap();
        assert!((first[0].start_s() - 0.0).abs() < 1e-12 && (first[0].end_s() - 0.1).abs() < 1e-12);
        let last = frames_to_seconds(&mk(9, 9), &em, 1.0).unwrap();
        assert!((last[0].start_s() - 0.9).abs() < 1e-12 && (last[0].end_s() - 1.0).abs() < 1e-12);
        let strided = em.with_frame_stride(0.02).unwrap();
        let s = frames_to_seconds(&mk(5, 7), &strided, 1.0).unwrap();
        assert!((s[0].start_s() - 0.10).abs() < 1e-12 && (s[0].end_s() - 0.16).abs() < 1e-12);
    }
}
