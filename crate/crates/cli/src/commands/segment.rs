//! `segment`: one word segmentation per sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use tracing::{info, warn};
use wordshap::align;
use wordshap::audio::load_wav;
use wordshap::diagnostics::Summary;
use wordshap::emissions::{load_emissions, EmissionMatrix};
use wordshap::refine;
use wordshap::{RefineConfig, Segmentation, Waveform};

use super::{check_dir, ensure_dir, map_items, Outcome};
use crate::config::FileConfig;

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Directory holding `<id>.wav`.
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
    /// Tab-separated `id<TAB>transcript` lines.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    /// Directory holding `<id>.emm` and `vocab.txt`.
    #[arg(long)]
    pub emissions_dir: Option<PathBuf>,
    /// Output directory for `<id>.tsv` segmentations.
    #[arg(long, alias = "out-dir")]
    pub segments_dir: Option<PathBuf>,
    /// Split each sample into this many equal segments instead of aligning.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Keep raw alignment boundaries.
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Search half-width in seconds.
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long)]
    pub win_s: Option<f64>,
    #[arg(long)]
    pub hop_s: Option<f64>,
    /// Combine raw rather than min-max normalized features.
    #[arg(long)]
    pub no_normalize: bool,
    /// Process samples concurrently.
    #[arg(long)]
    pub parallel: bool,
}

struct Plan {
    audio_dir: PathBuf,
    emissions_dir: Option<PathBuf>,
    segments_dir: PathBuf,
    frames: Option<usize>,
    refine: bool,
    cfg: RefineConfig,
    vocab_path: Option<PathBuf>,
}

pub fn refine_config(args: &SegmentArgs, file: &FileConfig) -> Result<RefineConfig> {
    let d = RefineConfig::default();
    let cfg = RefineConfig {
        alpha: file.pick_or(args.alpha, "alpha", d.alpha)?,
        beta: file.pick_or(args.beta, "beta", d.beta)?,
        delta_s: file.pick_or(args.delta_s, "delta_s", d.delta_s)?,
        win_s: file.pick_or(args.win_s, "win_s", d.win_s)?,
        hop_s: file.pick_or(args.hop_s, "hop_s", d.hop_s)?,
        normalize: file.enabled(args.no_normalize, "normalize")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `id<TAB>transcript` lines; `#` lines and blank lines are skipped.
pub fn read_transcripts(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((id, transcript)) = line.split_once('\t') else {
            bail!("{}:{}: expected `id<TAB>transcript`", path.display(), i + 1);
        };
        let id = id.trim().to_string();
        if seen.insert(id.clone(), i + 1).is_some() {
            bail!("{}:{}: duplicate sample id {id:?}", path.display(), i + 1);
        }
        out.push((id, transcript.trim().to_string()));
    }
    Ok(out)
}

fn segment_one(plan: &Plan, id: &str, transcript: &str) -> Result<Segmentation> {
    let wav = load_wav(plan.audio_dir.join(format!("{id}.wav")))?;
    let seg = match plan.frames {
        Some(n) => Segmentation::uniform(n, wav.duration_seconds())?,
        None => {
            let dir = plan.emissions_dir.as_ref().expect("checked before the batch");
            let em = load_emissions(dir.join(format!("{id}.emm")), plan.vocab_path.as_ref().expect("checked"))?;
            segment_words(&wav, &em, transcript, plan)?
        }
    };
    seg.save(plan.segments_dir.join(format!("{id}.tsv")))?;
    Ok(seg)
}

fn segment_words(wav: &Waveform, em: &EmissionMatrix, transcript: &str, plan: &Plan) -> Result<Segmentation> {
    if plan.refine {
        return Ok(wordshap::segment_utterance(wav, em, transcript, &plan.cfg)?);
    }
    let map = align::decompose(transcript, em.vocab())?;
    let alignment = align::force_align(em, &map)?;
    let spans = align::frames_to_seconds(&alignment, em, wav.duration_seconds())?;
    Ok(refine::aggregate_words(&spans, &map, wav.duration_seconds())?)
}

pub fn run(args: SegmentArgs, file: &FileConfig) -> Result<Outcome> {
    let audio_dir: PathBuf = file.require(args.audio_dir.clone(), "audio_dir")?;
    let transcripts: PathBuf = file.require(args.transcripts.clone(), "transcripts")?;
    let segments_dir: PathBuf = file.require(args.segments_dir.clone(), "segments_dir")?;
    let frames: Option<usize> = file.pick(args.frames, "frames")?;
    if frames == Some(0) {
        bail!("--frames must be positive");
    }
    let emissions_dir: Option<PathBuf> = file.pick(args.emissions_dir.clone(), "emissions_dir")?;
    check_dir(&audio_dir, "audio directory")?;
    let vocab_path = match (&emissions_dir, frames) {
        (Some(dir), None) => {
            check_dir(dir, "emissions directory")?;
            let p = dir.join("vocab.txt");
            if !p.is_file() {
                bail!("{} is missing", p.display());
            }
            Some(p)
        }
        (None, None) => bail!("missing --emissions-dir (or pass --frames for uniform segments)"),
        (_, Some(_)) => None,
    };
    let plan = Plan {
        audio_dir,
        emissions_dir,
        segments_dir: ensure_dir(&segments_dir)?,
        frames,
        refine: file.enabled(args.no_refine, "refine")?,
        cfg: refine_config(&args, file)?,
        vocab_path,
    };
    let parallel = file.switch(args.parallel, "parallel")?;
    let samples = read_transcripts(&transcripts)?;
    info!(samples = samples.len(), parallel, refine = plan.refine, frames = ?plan.frames, "segmenting");

    let results = map_items(&samples, parallel, |(id, transcript)| segment_one(&plan, id, transcript));
    let mut counts = Vec::new();
    let mut failed = 0;
    for ((id, _), r) in samples.iter().zip(results) {
        match r {
            Ok(seg) => counts.push(seg.len() as f64),
            Err(e) => {
                failed += 1;
                warn!(sample = %id, "skipped: {e:#}");
            }
        }
    }
    println!("{}", summary_line(samples.len(), &counts));
    Ok(Outcome::of_batch(samples.len(), failed))
}

/// `segmented K/N samples; players min .. median .. IQR .. max ..`.
pub fn summary_line(total: usize, counts: &[f64]) -> String {
    match Summary::of(counts) {
        Some(s) => format!(
            "segmented {}/{total} samples; players min {} median {} IQR {} max {}",
            counts.len(),
            s.min,
            s.median,
            s.iqr(),
            s.max
        ),
        None => format!("segmented 0/{total} samples"),
    }
}
