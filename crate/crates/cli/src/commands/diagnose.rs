//! `diagnose`: concentration metrics, paired tests and cumulative profiles
//! for two result directories paired by sample id.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use tracing::{info, warn};
use wordshap::diagnostics::{
    concentration, cumulative_profile, paired_test, profile_resample, ConcentrationMetrics, EntropyNorm, MeanProfile,
    Profile,
};
use wordshap::shapley::normalized_attributions;
use wordshap::AttributionRecord;

use super::{ensure_dir, ids_with_extension, map_items, Outcome};
use crate::config::FileConfig;

pub const METRICS: [&str; 3] = ["top20", "gini", "entropy_norm"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    SqrtN,
    LnN,
    Raw,
}

impl std::str::FromStr for NormArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <NormArg as ValueEnum>::from_str(s, true)
    }
}

impl From<NormArg> for EntropyNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::SqrtN => EntropyNorm::SqrtN,
            NormArg::LnN => EntropyNorm::LnN,
            NormArg::Raw => EntropyNorm::Raw,
        }
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Results of the first condition (refined word segments).
    #[arg(long)]
    pub a: PathBuf,
    /// Results of the second condition.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Family-wise significance level before Bonferroni correction.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of comparisons the level is divided by.
    #[arg(long)]
    pub comparisons: Option<usize>,
    #[arg(long, value_enum)]
    pub entropy_norm: Option<NormArg>,
    /// Points on the common profile grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Load and score records concurrently.
    #[arg(long)]
    pub parallel: bool,
}

struct Scored {
    record: AttributionRecord,
    metrics: ConcentrationMetrics,
    profile: Profile,
}

fn metric(m: &ConcentrationMetrics, name: &str) -> f64 {
    match name {
        "top20" => m.top20_mass,
        "gini" => m.gini,
        "entropy_norm" => m.entropy_norm,
        _ => unreachable!("unknown metric {name}"),
    }
}

fn score(path: &Path, norm: EntropyNorm) -> Result<Scored> {
    let record = AttributionRecord::load(path)?;
    let s = normalized_attributions(&record.shapley())?;
    Ok(Scored {
        metrics: concentration(&s, norm)?,
        profile: cumulative_profile(&s)?,
        record,
    })
}

fn load_dir(dir: &Path, norm: EntropyNorm, parallel: bool) -> Result<BTreeMap<String, Scored>> {
    let ids = ids_with_extension(dir, "json")?;
    let scored = map_items(&ids, parallel, |id| score(&dir.join(format!("{id}.json")), norm));
    let mut out = BTreeMap::new();
    for (id, r) in ids.iter().zip(scored) {
        match r {
            Ok(s) => {
                if out.insert(s.record.sample_id.clone(), s).is_some() {
                    bail!("{}: sample id of {id}.json appears twice", dir.display());
                }
            }
            Err(e) => warn!(dir = %dir.display(), file = %id, "skipped: {e:#}"),
        }
    }
    Ok(out)
}

fn write_metrics(path: &Path, pairs: &[(&Scored, &Scored)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_id", "mode", "sgpa_on", "n", "top20", "gini", "entropy_norm", "calls", "wallclock_s"])?;
    for (a, b) in pairs {
        for (s, on) in [(a, true), (b, false)] {
            let m = &s.metrics;
            w.write_record([
                s.record.sample_id.clone(),
                s.record.mode.clone(),
                on.to_string(),
                m.n.to_string(),
                m.top20_mass.to_string(),
                m.gini.to_string(),
                m.entropy_norm.to_string(),
                s.record.distinct_calls.to_string(),
                s.record.wallclock_s.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per (mode, metric); returns how many tests were defined.
fn write_tests(path: &Path, pairs: &[(&Scored, &Scored)], comparisons: usize, alpha: f64) -> Result<usize> {
    let mut by_mode: BTreeMap<&str, Vec<(&Scored, &Scored)>> = BTreeMap::new();
    for &(a, b) in pairs {
        by_mode.entry(a.record.mode.as_str()).or_default().push((a, b));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "mode", "metric", "n_pairs", "mean_a", "mean_b", "t", "p", "cohens_d", "alpha_corrected", "significant",
        "undefined", "note",
    ])?;
    let mut defined = 0;
    for (mode, group) in &by_mode {
        for name in METRICS {
            let a: Vec<f64> = group.iter().map(|(x, _)| metric(&x.metrics, name)).collect();
            let b: Vec<f64> = group.iter().map(|(_, y)| metric(&y.metrics, name)).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let head = [mode.to_string(), name.to_string(), a.len().to_string(), mean(&a).to_string(), mean(&b).to_string()];
            match paired_test(name, &a, &b, comparisons, alpha) {
                Ok(t) => {
                    defined += 1;
                    println!(
                        "{mode:>8} {name:<12} p={:.3e} d={:+.3} {}",
                        t.p_value,
                        t.cohens_d,
                        if t.significant { "significant" } else { "n.s." }
                    );
                    let note = if t.degenerate { "constant differences" } else { "" };
                    w.write_record(head.iter().cloned().chain([
                        t.t_statistic.to_string(),
                        t.p_value.to_string(),
                        t.cohens_d.to_string(),
                        t.alpha_corrected.to_string(),
                        t.significant.to_string(),
                        "false".into(),
                        note.into(),
                    ]))?;
                }
                Err(wordshap::Error::UndefinedTest(why)) => {
                    warn!(mode = %mode, metric = name, "test undefined: {why}");
                    println!("{mode:>8} {name:<12} undefined ({why})");
                    w.write_record(head.iter().cloned().chain([
                        String::new(),
                        String::new(),
                        String::new(),
                        (alpha / comparisons as f64).to_string(),
                        "false".into(),
                        "true".into(),
                        why,
                    ]))?;
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    w.flush()?;
    Ok(defined)
}

fn write_profile(path: &Path, p: &MeanProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["grid", "mean_cumulative", "mean_derivative"])?;
    for ((g, c), d) in p.grid.iter().zip(&p.cumulative).zip(&p.derivative) {
        w.write_record([g.to_string(), c.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: DiagnoseArgs, file: &FileConfig) -> Result<Outcome> {
    let alpha: f64 = file.pick_or(args.alpha, "test_alpha", 0.05)?;
    let comparisons: usize = file.pick_or(args.comparisons, "comparisons", METRICS.len())?;
    let norm: EntropyNorm = file.pick_or(args.entropy_norm, "entropy_norm", NormArg::SqrtN)?.into();
    let grid: usize = file.pick_or(args.grid, "grid", 101)?;
    let parallel = file.switch(args.parallel, "parallel")?;
    if !(alpha > 0.0 && alpha < 1.0) || comparisons == 0 {
        bail!("alpha must lie in (0, 1) and comparisons must be positive");
    }

    let a = load_dir(&args.a, norm, parallel).with_context(|| format!("loading {}", args.a.display()))?;
    let b = load_dir(&args.b, norm, parallel).with_context(|| format!("loading {}", args.b.display()))?;
    let mut pairs = Vec::new();
    for (id, sa) in &a {
        match b.get(id) {
            Some(sb) => pairs.push((sa, sb)),
            None => warn!(sample = %id, "present only in A; dropped"),
        }
    }
    for id in b.keys().filter(|id| !a.contains_key(*id)) {
        warn!(sample = %id, "present only in B; dropped");
    }
    if pairs.len() < 3 {
        return Err(wordshap::Error::UndefinedTest(format!("{} paired samples, need at least 3", pairs.len())).into());
    }
    info!(pairs = pairs.len(), alpha, comparisons, ?norm, "diagnosing");

    let out = ensure_dir(&args.out)?;
    write_metrics(&out.join("metrics.csv"), &pairs)?;
    let defined = write_tests(&out.join("tests.csv"), &pairs, comparisons, alpha)?;
    if defined == 0 {
        warn!("every paired test is undefined; are A and B the same results?");
    }
    let profiles_a: Vec<Profile> = pairs.iter().map(|(x, _)| x.profile.clone()).collect();
    let profiles_b: Vec<Profile> = pairs.iter().map(|(_, y)| y.profile.clone()).collect();
    write_profile(&out.join("profile_a.csv"), &profile_resample(&profiles_a, grid)?)?;
    write_profile(&out.join("profile_b.csv"), &profile_resample(&profiles_b, grid)?)?;
    Ok(Outcome::Success)
}
