//! Time spans and word-level segmentations (the player set of the game).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open time interval in seconds with `0 <= start_s < end_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    start_s: f64,
    end_s: f64,
}

impl TimeSpan {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || end_s <= start_s {
            return Err(Error::Invalid(format!("bad time span [{start_s}, {end_s}]")));
        }
        Ok(Self { start_s, end_s })
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start_s <= t && t <= self.end_s
    }
}

/// One player: a word, its span, and the spans of its characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSegment {
    pub text: String,
    pub span: TimeSpan,
    /// Empty when the segmentation was loaded from a word-level table.
    pub chars: Vec<TimeSpan>,
}

/// Ordered, non-overlapping word segments inside `[0, total_duration_s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    words: Vec<WordSegment>,
    total_duration_s: f64,
}

impl Segmentation {
    /// Checked constructor; every construction path goes through here.
    pub fn new(words: Vec<WordSegment>, total_duration_s: f64) -> Result<Self> {
        if !(total_duration_s.is_finite() && total_duration_s > 0.0) {
            return Err(Error::Invalid(format!("total duration {total_duration_s}")));
        }
        for (i, w) in words.iter().enumerate() {
            if w.span.end_s > total_duration_s {
                return Err(Error::Invalid(format!(
                    "word {i} ends at {} past duration {total_duration_s}",
                    w.span.end_s
                )));
            }
            if !w.chars.is_empty() {
                let lo = w.chars.iter().map(|c| c.start_s).fold(f64::INFINITY, f64::min);
                let hi = w.chars.iter().map(|c| c.end_s).fold(f64::NEG_INFINITY, f64::max);
                if lo != w.span.start_s || hi != w.span.end_s {
                    return Err(Error::Invalid(format!("word {i} span is not the hull of its characters")));
                }
            }
            if i > 0 {
                let prev = &words[i - 1].span;
                if w.span.start_s < prev.start_s || w.span.start_s < prev.end_s {
                    return Err(Error::Invalid(format!("word {i} overlaps or precedes word {}", i - 1)));
                }
            }
        }
        Ok(Self {
            words,
            total_duration_s,
        })
    }

    /// Splits `[0, duration)` into `n` equal spans, one player each.
    pub fn uniform(n: usize, total_duration_s: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid("need at least one segment".into()));
        }
        let step = total_duration_s / n as f64;
        let words = (0..n)
            .map(|i| {
                let end = if i + 1 == n { total_duration_s } else { (i + 1) as f64 * step };
                Ok(WordSegment {
                    text: format!("seg{i}"),
                    span: TimeSpan::new(i as f64 * step, end)?,
                    chars: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(words, total_duration_s)
    }

    pub fn words(&self) -> &[WordSegment] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total_duration_s(&self) -> f64 {
        self.total_duration_s
    }

    /// Tab-separated table: a duration comment, a header, then `word start_s end_s` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# total_duration_s\t{}", self.total_duration_s).unwrap();
        out.push_str("word\tstart_s\tend_s\n");
        for w in &self.words {
            writeln!(out, "{}\t{}\t{}", w.text, w.span.start_s, w.span.end_s).unwrap();
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut duration = None;
        let mut words = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# total_duration_s\t") {
                duration = Some(parse_f64(rest, lineno)?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line == "word\tstart_s\tend_s" {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 columns", lineno + 1)));
            }
            words.push(WordSegment {
                text: cols[0].to_string(),
                span: TimeSpan::new(parse_f64(cols[1], lineno)?, parse_f64(cols[2], lineno)?)?,
                chars: Vec::new(),
            });
        }
        let duration = duration.ok_or_else(|| Error::Format("missing total_duration_s line".into()))?;
        Self::new(words, duration)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_table())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_table(&fs::read_to_string(path)?)
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {}: bad number {s:?}", lineno + 1)))
}
