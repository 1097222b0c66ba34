//! Attribution concentration metrics, paired significance tests and
//! position-normalized cumulative profiles.
//!
//! All metrics take normalized attributions `|s_i| / sum |s_j|`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

fn check_distribution(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Domain("empty attribution vector".into()));
    }
    if s.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Domain("normalized attributions must be finite and non-negative".into()));
    }
    let total: f64 = s.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Domain(format!("normalized attributions sum to {total}, not 1")));
    }
    Ok(())
}

/// Share held by the largest `ceil(fraction * n)` entries.
pub fn top_k_mass(s: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("fraction {fraction} outside (0, 1]")));
    }
    check_distribution(s)?;
    // the epsilon keeps products like 0.2 * 15 = 3.0000000000000004 from rounding up
    let k = ((fraction * s.len() as f64 - 1e-9).ceil() as usize).clamp(1, s.len());
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum())
}

/// `G = 1/(2n) * sum_i sum_j |s_i - s_j|`.
pub fn gini(s: &[f64]) -> Result<f64> {
    check_distribution(s)?;
    let n = s.len() as f64;
    let total: f64 = s
        .iter()
        .map(|a| s.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(total / (2.0 * n))
}

/// How raw entropy is scaled for comparison across player counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyNorm {
    /// Divide by `sqrt(n)`.
    #[default]
    SqrtN,
    /// Divide by `ln(n)`, mapping the uniform distribution to 1.
    LnN,
    /// No scaling.
    Raw,
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn entropy(s: &[f64]) -> f64 {
    -s.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

pub fn entropy_norm(s: &[f64], norm: EntropyNorm) -> Result<f64> {
    check_distribution(s)?;
    let h = entropy(s);
    let n = s.len() as f64;
    Ok(match norm {
        EntropyNorm::SqrtN => h / n.sqrt(),
        EntropyNorm::LnN if s.len() > 1 => h / n.ln(),
        EntropyNorm::LnN => 0.0,
        EntropyNorm::Raw => h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationMetrics {
    pub top20_mass: f64,
    pub gini: f64,
    pub entropy_norm: f64,
    pub n: usize,
}

pub fn concentration(s: &[f64], norm: EntropyNorm) -> Result<ConcentrationMetrics> {
    Ok(ConcentrationMetrics {
        top20_mass: top_k_mass(s, 0.2)?,
        gini: gini(s)?,
        entropy_norm: entropy_norm(s, norm)?,
        n: s.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub metric: String,
    pub n_pairs: usize,
    pub t_statistic: f64,
    pub p_value: f64,
    /// `mean(d) / sd(d)` of the paired differences `d = a - b`.
    pub cohens_d: f64,
    pub alpha_corrected: f64,
    pub significant: bool,
    /// Set when every difference is identical and non-zero: `p = 0`,
    /// `d = +-inf`.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a` against `b` with Bonferroni correction
/// over `num_comparisons` tests.
pub fn paired_test(metric: &str, a: &[f64], b: &[f64], num_comparisons: usize, alpha: f64) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::UndefinedTest(format!("{} vs {} observations", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::UndefinedTest(format!("{} pairs, need at least 3", a.len())));
    }
    if num_comparisons == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain("need alpha in (0, 1) and at least one comparison".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Domain("non-finite observation".into()));
    }
    if diffs.iter().all(|&d| d == 0.0) {
        return Err(Error::UndefinedTest("all paired differences are zero".into()));
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let alpha_corrected = alpha / num_comparisons as f64;
    // a spread at rounding-error scale counts as no spread at all
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));

    let (t_statistic, p_value, cohens_d, degenerate) = if sd <= 64.0 * f64::EPSILON * scale {
        (mean.signum() * f64::INFINITY, 0.0, mean.signum() * f64::INFINITY, true)
    } else {
        let t = mean / (sd / n.sqrt());
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Domain(e.to_string()))?;
        let p = (2.0 * dist.sf(t.abs())).min(1.0);
        (t, p, mean / sd, false)
    };
    Ok(PairedTestResult {
        metric: metric.to_string(),
        n_pairs: diffs.len(),
        t_statistic,
        p_value,
        cohens_d,
        alpha_corrected,
        significant: p_value < alpha_corrected,
        degenerate,
    })
}

/// Cumulative attribution along the original player order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// `k / n` for `k = 1..n`.
    pub positions: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// Slope of each segment, `n * s_k`.
    pub derivative: Vec<f64>,
}

pub fn cumulative_profile(s: &[f64]) -> Result<Profile> {
    if s.is_empty() {
        return Err(Error::Domain("empty attribution vector".into()));
    }
    let n = s.len();
    let mut acc = 0.0;
    let mut cumulative: Vec<f64> = s
        .iter()
        .map(|x| {
            acc += x;
            acc.min(1.0)
        })
        .collect();
    cumulative[n - 1] = 1.0;
    Ok(Profile {
        positions: (1..=n).map(|k| k as f64 / n as f64).collect(),
        cumulative,
        derivative: s.iter().map(|x| n as f64 * x).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanProfile {
    pub grid: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub derivative: Vec<f64>,
}

fn interpolate(p: &Profile, g: f64) -> (f64, f64) {
    let k = p.positions.partition_point(|&x| x < g).min(p.positions.len() - 1);
    let (x0, y0) = if k == 0 { (0.0, 0.0) } else { (p.positions[k - 1], p.cumulative[k - 1]) };
    let (x1, y1) = (p.positions[k], p.cumulative[k]);
    let c = if g <= x0 { y0 } else { y0 + (g - x0) / (x1 - x0) * (y1 - y0) };
    (c, p.derivative[k])
}

/// Interpolates every profile onto `grid_points` uniform positions in
/// `[0, 1]` (with `c(0) = 0`) and averages pointwise. The derivative on the
/// grid is the slope of the segment each grid point falls in.
pub fn profile_resample(profiles: &[Profile], grid_points: usize) -> Result<MeanProfile> {
    if profiles.is_empty() || profiles.iter().any(|p| p.positions.is_empty()) {
        return Err(Error::Domain("profiles must be non-empty".into()));
    }
    if grid_points < 2 {
        return Err(Error::Domain("need at least two grid points".into()));
    }
    let grid: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
    let m = profiles.len() as f64;
    let mut cumulative = vec![0.0; grid_points];
    let mut derivative = vec![0.0; grid_points];
    for p in profiles {
        for (i, &g) in grid.iter().enumerate() {
            let (c, d) = interpolate(p, g);
            cumulative[i] += c / m;
            derivative[i] += d / m;
        }
    }
    Ok(MeanProfile {
        grid,
        cumulative,
        derivative,
    })
}

/// Sums contiguous runs of players into `groups` near-equal groups (earlier
/// groups take the remainder). Models coarsening a player partition.
pub fn repartition(s: &[f64], groups: usize) -> Vec<f64> {
    let groups = groups.clamp(1, s.len().max(1));
    let base = s.len() / groups;
    let extra = s.len() % groups;
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        out.push(s[start..start + len].iter().sum());
        start += len;
    }
    out
}

/// Five-number style summary used for player-count distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    /// Quantiles use linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}
