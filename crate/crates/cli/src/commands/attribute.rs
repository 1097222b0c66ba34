//! `attribute`: Shapley values per segmented sample against one resident evaluator.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use tracing::{info, warn};
use wordshap::audio::load_wav;
use wordshap::evaluator::EnergyEvaluator;
use wordshap::protocol::StreamEvaluator;
use wordshap::shapley::{exact_shapley, neyman_shapley};
use wordshap::{AttributionRecord, CoalitionGame, Method, ModelEvaluator, Segmentation};

use super::{check_dir, ensure_dir, ids_with_extension, Outcome};
use crate::config::FileConfig;

#[derive(Debug, Args)]
pub struct AttributeArgs {
    /// Directory holding `<id>.tsv` segmentations.
    #[arg(long)]
    pub segments_dir: Option<PathBuf>,
    /// Directory holding `<id>.wav`.
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
    /// Output directory for `<id>.json` records.
    #[arg(long, alias = "out-dir")]
    pub results_dir: Option<PathBuf>,
    /// Shell command of an evaluator speaking the line protocol on stdio.
    #[arg(long, conflicts_with = "evaluator_tcp")]
    pub evaluator_cmd: Option<String>,
    /// `host:port` of an evaluator speaking the line protocol.
    #[arg(long)]
    pub evaluator_tcp: Option<String>,
    /// `exact` or `neyman`.
    #[arg(long)]
    pub method: Option<Method>,
    /// Budget is `ceil(multiplier * n^2)` value requests.
    #[arg(long)]
    pub budget_multiplier: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Free-text tag stored in every record.
    #[arg(long)]
    pub mode: Option<String>,
    /// Number of evaluator connections used concurrently.
    #[arg(long)]
    pub in_flight: Option<usize>,
    /// Recompute samples that already have a record.
    #[arg(long)]
    pub force: bool,
}

enum EvaluatorSpec {
    Command(String),
    Tcp(String),
    /// In-process RMS energy, for offline runs.
    Energy,
}

impl EvaluatorSpec {
    fn connect(&self) -> Result<Box<dyn ModelEvaluator>> {
        Ok(match self {
            EvaluatorSpec::Command(cmd) => Box::new(StreamEvaluator::spawn(cmd)?),
            EvaluatorSpec::Tcp(addr) => Box::new(StreamEvaluator::connect_tcp(addr)?),
            EvaluatorSpec::Energy => Box::new(EnergyEvaluator),
        })
    }
}

/// Evaluator handles opened once and lent to every sample's game.
struct Pool(Vec<Arc<Mutex<Box<dyn ModelEvaluator>>>>);

impl Pool {
    fn open(spec: &EvaluatorSpec, size: usize) -> Result<Self> {
        let handles = (0..size)
            .map(|_| spec.connect().map(|e| Arc::new(Mutex::new(e))))
            .collect::<Result<Vec<_>>>()
            .context("evaluator handshake failed")?;
        Ok(Pool(handles))
    }

    fn lend(&self) -> Vec<Box<dyn ModelEvaluator>> {
        self.0
            .iter()
            .map(|h| Box::new(Arc::clone(h)) as Box<dyn ModelEvaluator>)
            .collect()
    }
}

struct Settings {
    segments_dir: PathBuf,
    audio_dir: PathBuf,
    results_dir: PathBuf,
    method: Method,
    budget_multiplier: f64,
    seed: u64,
    mode: String,
}

fn evaluator_spec(args: &AttributeArgs, file: &FileConfig) -> Result<EvaluatorSpec> {
    let cmd: Option<String> = file.pick(args.evaluator_cmd.clone(), "evaluator_cmd")?;
    let tcp: Option<String> = file.pick(args.evaluator_tcp.clone(), "evaluator_tcp")?;
    match (cmd, tcp) {
        (Some(_), Some(_)) => bail!("give either an evaluator command or a TCP address, not both"),
        (Some(c), None) if c == "builtin:energy" => Ok(EvaluatorSpec::Energy),
        (Some(c), None) => Ok(EvaluatorSpec::Command(c)),
        (None, Some(a)) => Ok(EvaluatorSpec::Tcp(a)),
        (None, None) => bail!("missing --evaluator-cmd or --evaluator-tcp"),
    }
}

fn attribute_one(s: &Settings, pool: &Pool, id: &str, out: &Path) -> Result<AttributionRecord> {
    let seg = Segmentation::load(s.segments_dir.join(format!("{id}.tsv")))?;
    let wav = load_wav(s.audio_dir.join(format!("{id}.wav")))?;
    let started = Instant::now();
    let game = CoalitionGame::with_evaluator_pool(seg.clone(), wav, pool.lend())?;
    let result = match s.method {
        Method::Exact => exact_shapley(&game)?,
        Method::Neyman => neyman_shapley(&game, s.budget_multiplier, s.seed)?,
    };
    let wallclock_s = started.elapsed().as_secs_f64();
    if s.method == Method::Exact {
        info!(sample = %id, efficiency_gap = result.efficiency_gap(), "efficiency check");
    }
    let record = AttributionRecord::new(id, &s.mode, &seg, &result, s.budget_multiplier, wallclock_s)?;
    record.save(out)?;
    Ok(record)
}

pub fn run(args: AttributeArgs, file: &FileConfig) -> Result<Outcome> {
    let s = Settings {
        segments_dir: file.require(args.segments_dir.clone(), "segments_dir")?,
        audio_dir: file.require(args.audio_dir.clone(), "audio_dir")?,
        results_dir: file.require(args.results_dir.clone(), "results_dir")?,
        method: file.pick_or(args.method, "method", Method::Neyman)?,
        budget_multiplier: file.pick_or(args.budget_multiplier, "budget_multiplier", 3.0)?,
        seed: file.pick_or(args.seed, "seed", 0)?,
        mode: file.pick_or(args.mode.clone(), "mode", String::new())?,
    };
    if !(s.budget_multiplier.is_finite() && s.budget_multiplier > 0.0) {
        bail!("budget multiplier must be positive");
    }
    let in_flight: usize = file.pick_or(args.in_flight, "in_flight", 1)?;
    if in_flight == 0 {
        bail!("--in-flight must be at least 1");
    }
    let spec = evaluator_spec(&args, file)?;
    check_dir(&s.segments_dir, "segments directory")?;
    check_dir(&s.audio_dir, "audio directory")?;
    ensure_dir(&s.results_dir)?;

    let ids = ids_with_extension(&s.segments_dir, "tsv")?;
    let pending: Vec<&String> = ids
        .iter()
        .filter(|id| args.force || !s.results_dir.join(format!("{id}.json")).exists())
        .collect();
    info!(
        samples = ids.len(),
        pending = pending.len(),
        method = %s.method,
        budget_multiplier = s.budget_multiplier,
        seed = s.seed,
        "attributing"
    );
    if pending.is_empty() {
        println!("attributed 0 samples; {} already had results", ids.len());
        return Ok(Outcome::Success);
    }

    let pool = Pool::open(&spec, in_flight)?;
    let mut failed = 0;
    let mut calls = 0;
    for id in &pending {
        let out = s.results_dir.join(format!("{id}.json"));
        match attribute_one(&s, &pool, id, &out) {
            Ok(rec) => {
                calls += rec.distinct_calls;
                info!(sample = %id, n = rec.n, distinct_calls = rec.distinct_calls, wallclock_s = rec.wallclock_s, "done");
            }
            Err(e) => {
                failed += 1;
                warn!(sample = %id, "failed: {e:#}");
            }
        }
    }
    println!(
        "attributed {}/{} samples with {calls} evaluator calls; {} already had results",
        pending.len() - failed,
        pending.len(),
        ids.len() - pending.len()
    );
    Ok(Outcome::of_batch(pending.len(), failed))
}
