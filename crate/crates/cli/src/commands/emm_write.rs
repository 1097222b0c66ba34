//! `emm-write`: tabular emission rows to an EMM1 file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use wordshap::emissions::read_vocab;
use wordshap::EmissionMatrix;

use super::Outcome;

#[derive(Debug, Args)]
pub struct EmmWriteArgs {
    /// One frame per line, `V` whitespace-separated numbers; `#` lines are comments.
    #[arg(long)]
    pub input: PathBuf,
    /// Vocabulary, one token per line; its length fixes `V`.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rows hold probabilities; their natural log is stored.
    #[arg(long)]
    pub probabilities: bool,
}

/// Parses the table into a row-major grid with `width` columns.
pub fn parse_rows(text: &str, width: usize, probabilities: bool) -> Result<(usize, Vec<f32>)> {
    let mut values = Vec::new();
    let mut frames = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().with_context(|| format!("line {}: bad number {tok:?}", i + 1)))
            .collect::<Result<_>>()?;
        if row.len() != width {
            bail!("line {}: {} values but the vocabulary has {width} tokens", i + 1, row.len());
        }
        for x in row {
            if probabilities && !(0.0..=1.0).contains(&x) {
                bail!("line {}: probability {x} outside [0, 1]", i + 1);
            }
            values.push(if probabilities { x.ln() } else { x } as f32);
        }
        frames += 1;
    }
    if frames == 0 {
        bail!("no rows");
    }
    Ok((frames, values))
}

fn write(input: &Path, vocab_path: &Path, out: &Path, probabilities: bool) -> Result<usize> {
    let vocab = read_vocab(vocab_path)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let (frames, values) = parse_rows(&text, vocab.len(), probabilities).with_context(|| input.display().to_string())?;
    let m = EmissionMatrix::new(values, frames, vocab)?;
    fs::write(out, m.to_emm1_bytes()).with_context(|| format!("writing {}", out.display()))?;
    Ok(frames)
}

pub fn run(args: EmmWriteArgs) -> Result<Outcome> {
    let frames = write(&args.input, &args.vocab, &args.out, args.probabilities)?;
    println!("wrote {} ({frames} frames)", args.out.display());
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_are_logged() {
        let (frames, v) = parse_rows("# header\n0.5 0.5\n1 0\n", 2, true).unwrap();
        assert_eq!(frames, 2);
        assert_eq!(v[0], 0.5f64.ln() as f32);
        assert_eq!(v[3], f32::NEG_INFINITY);
    }

    #[test]
    fn width_and_range_are_checked() {
        assert!(parse_rows("0.5 0.5 0\n", 2, false).is_err());
        assert!(parse_rows("1.5 -0.5\n", 2, true).is_err());
        assert!(parse_rows("# nothing\n", 2, false).is_err());
        assert!(parse_rows("x 1\n", 2, false).is_err());
    }
}
