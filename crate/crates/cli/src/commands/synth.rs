//! `synth`: a seeded synthetic corpus laid out for `segment`.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordshap::audio::save_wav;
use wordshap::emissions::write_vocab;
use wordshap::segmentation::WordSegment;
use wordshap::synth::{emissions_for, random_transcript, speech_like, synth_vocab};
use wordshap::Segmentation;

use super::{ensure_dir, Outcome};

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 3)]
    pub min_words: usize,
    #[arg(long, default_value_t = 9)]
    pub max_words: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Writes `audio/<id>.wav`, `transcripts.tsv`, `emissions/<id>.emm`,
/// `emissions/vocab.txt` and ground-truth `truth/<id>.tsv`.
pub fn run(args: SynthArgs) -> Result<Outcome> {
    if args.min_words == 0 || args.min_words > args.max_words {
        bail!("need 1 <= --min-words <= --max-words");
    }
    let audio = ensure_dir(&args.out.join("audio"))?;
    let emissions = ensure_dir(&args.out.join("emissions"))?;
    let truth = ensure_dir(&args.out.join("truth"))?;
    write_vocab(&synth_vocab(), emissions.join("vocab.txt"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut transcripts = String::new();
    for i in 0..args.samples {
        let id = format!("syn{i:04}");
        let words = rng.gen_range(args.min_words..=args.max_words);
        let transcript = random_transcript(&mut rng, words);
        let utt = speech_like(&mut rng, &transcript)?;
        let em = emissions_for(&mut rng, &utt)?;
        save_wav(&utt.waveform, audio.join(format!("{id}.wav")))?;
        fs::write(emissions.join(format!("{id}.emm")), em.to_emm1_bytes())?;
        let words = utt
            .transcript
            .split_whitespace()
            .zip(&utt.word_spans)
            .map(|(w, span)| WordSegment {
                text: w.to_string(),
                span: *span,
                chars: Vec::new(),
            })
            .collect();
        Segmentation::new(words, utt.waveform.duration_seconds())?.save(truth.join(format!("{id}.tsv")))?;
        transcripts.push_str(&format!("{id}\t{}\n", utt.transcript));
    }
    fs::write(args.out.join("transcripts.tsv"), transcripts)?;
    println!("wrote {} synthetic samples to {}", args.samples, args.out.display());
    Ok(Outcome::Success)
}
