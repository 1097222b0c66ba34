//! Shapley values: exact enumeration and the Neyman-allocated
//! complementary-contribution estimator.
//!
//! The estimator rests on the identity
//!
//! ```text
//! s_i = 1/n * sum_{j=1..n} E[ v(S) - v(N \ S) | i in S, |S| = j ]
//! ```
//!
//! One sampled coalition `S` of size `j` yields the complementary
//! contribution `CC(S) = v(S) - v(N \ S)`, which is a sample for stratum
//! `(i, j)` of every `i` in `S` and, negated, for stratum `(i, n - j)` of
//! every `i` outside it. Stratum `(i, n)` is always `v(N) - v(empty)`.
//!
//! The budget counts value requests, two per sampling step. Coalitions are
//! drawn without replacement within each size, so on a fresh game every
//! request reaches the evaluator exactly once, and a budget large enough to
//! cover every complementary pair reproduces the exact values.

use std::collections::HashSet;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::error::{Error, Result};
use crate::game::{Coalition, CoalitionGame};

/// Player count above which exact enumeration is refused.
pub const EXACT_MAX_PLAYERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Neyman,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exact => "exact",
            Method::Neyman => "neyman",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "neyman" => Ok(Method::Neyman),
            other => Err(Error::Invalid(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub shapley: Vec<f64>,
    pub n: usize,
    pub method: Method,
    /// Value requests allowed.
    pub budget_total: u64,
    /// Value requests issued in each phase (cache hits included).
    pub phase1_calls: u64,
    pub phase2_calls: u64,
    /// Sampling steps per phase; zero for exact enumeration.
    pub phase1_steps: u64,
    pub phase2_steps: u64,
    /// Evaluator invocations, i.e. distinct coalitions evaluated.
    pub distinct_calls: u64,
    pub seed: u64,
    pub value_empty: f64,
    pub value_full: f64,
}

impl AttributionResult {
    /// `|sum(s) - (v(N) - v(empty))|`.
    pub fn efficiency_gap(&self) -> f64 {
        (self.shapley.iter().sum::<f64>() - (self.value_full - self.value_empty)).abs()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact Shapley values from all `2^n` coalition values.
///
/// `values[bits]` must hold `v` of the coalition with bitmask `bits`.
pub fn shapley_from_values(n: usize, values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), 1usize << n);
    // weight of a coalition of size s not containing i: s!(n-s-1)!/n!
    let weights: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    (0..n)
        .map(|i| {
            let bit = 1usize << i;
            (0..values.len())
                .filter(|s| s & bit == 0)
                .map(|s| weights[s.count_ones() as usize] * (values[s | bit] - values[s]))
                .sum()
        })
        .collect()
}

/// Evaluates every coalition through the game's cache and returns the exact
/// Shapley values.
pub fn exact_shapley(game: &CoalitionGame) -> Result<AttributionResult> {
    let n = game.n();
    if n > EXACT_MAX_PLAYERS {
        return Err(Error::TooManyPlayers {
            n,
            limit: EXACT_MAX_PLAYERS,
        });
    }
    let all: Vec<Coalition> = (0..1u64 << n).map(|b| Coalition::from_bits(b, n)).collect::<Result<_>>()?;
    let values = game.values(&all)?;
    let shapley = shapley_from_values(n, &values);
    let total = all.len() as u64;
    Ok(AttributionResult {
        shapley,
        n,
        method: Method::Exact,
        budget_total: total,
        phase1_calls: total,
        phase2_calls: 0,
        phase1_steps: 0,
        phase2_steps: 0,
        distinct_calls: game.distinct_calls(),
        seed: 0,
        value_empty: values[0],
        value_full: values[values.len() - 1],
    })
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Sample variance; defined only with at least two samples.
    pub fn variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }
}

/// Statistics per (player, coalition size) stratum, sizes `0..=n`.
#[derive(Debug, Clone)]
pub struct StratumStats {
    n: usize,
    cells: Vec<RunningStats>,
}

impl StratumStats {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            cells: vec![RunningStats::default(); n * (n + 1)],
        }
    }

    pub fn get(&self, player: usize, size: usize) -> &RunningStats {
        &self.cells[player * (self.n + 1) + size]
    }

    fn get_mut(&mut self, player: usize, size: usize) -> &mut RunningStats {
        &mut self.cells[player * (self.n + 1) + size]
    }

    /// Credits one complementary contribution to all `n` players.
    pub fn record(&mut self, coalition: Coalition, cc: f64) {
        let j = coalition.len();
        for i in 0..self.n {
            if coalition.contains(i) {
                self.get_mut(i, j).push(cc);
            } else {
                self.get_mut(i, self.n - j).push(-cc);
            }
        }
    }

    /// Pooled standard deviation of size `j`: `sqrt(mean_i var(i, j))` over
    /// players whose variance is defined.
    pub fn pooled_std(&self, size: usize) -> Option<f64> {
        let vars: Vec<f64> = (0..self.n).filter_map(|i| self.get(i, size).variance()).collect();
        (!vars.is_empty()).then(|| (vars.iter().sum::<f64>() / vars.len() as f64).sqrt())
    }

    pub fn total_samples(&self) -> u64 {
        self.cells.iter().map(|c| c.count).sum()
    }
}

/// Splits `total` into integer parts proportional to `weights`, assigning
/// leftover units by largest fractional remainder (ties to the lower index).
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || total == 0 {
        return vec![0; weights.len()];
    }
    let shares: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut alloc: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    let assigned: u64 = alloc.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned) as usize) {
        alloc[k] += 1;
    }
    alloc
}

/// Phase-1 samples per size stratum: `max(2, floor(m / (2 n^2)))`.
pub fn initial_samples_per_stratum(budget: u64, n: usize) -> u64 {
    (budget / (2 * (n * n) as u64)).max(2)
}

/// Total value requests for a multiplier: `ceil(multiplier * n^2)`.
pub fn budget_for(n: usize, multiplier: f64) -> u64 {
    (multiplier * (n * n) as f64).ceil() as u64
}

/// Number of complementary pairs `{S, N \\ S}` with `|S| = size`.
fn pair_pool_size(n: usize, size: usize) -> u128 {
    let k = size.min(n - size) as u128;
    let c = (0..k).fold(1u128, |acc, i| acc * (n as u128 - i) / (i + 1));
    if 2 * size == n {
        c / 2
    } else {
        c
    }
}

struct Sampler<'g> {
    game: &'g CoalitionGame,
    rng: ChaCha8Rng,
    strata: StratumStats,
    budget: u64,
    requests: u64,
    /// Credited pairs, keyed by the smaller of the two masks.
    seen: HashSet<u64>,
    /// Credited pairs per pool, indexed by `min(size, n - size)`.
    seen_per_pool: Vec<u128>,
}

impl Sampler<'_> {
    fn exhausted(&self, size: usize) -> bool {
        let n = self.game.n();
        self.seen_per_pool[size.min(n - size)] >= pair_pool_size(n, size)
    }

    fn can_afford_step(&self) -> bool {
        self.requests + 2 <= self.budget
    }

    /// Draws a uniformly random pair not credited yet, with `|S| = size`.
    /// Returns `false` without spending anything when none is left.
    fn step(&mut self, size: usize) -> Result<bool> {
        let n = self.game.n();
        if self.exhausted(size) {
            return Ok(false);
        }
        let s = loop {
            let s = Coalition::from_members(sample_indices(&mut self.rng, n, size).iter());
            if self.seen.insert(s.bits().min(s.complement(n).bits())) {
                break s;
            }
        };
        self.seen_per_pool[size.min(n - size)] += 1;
        let v = self.game.values(&[s, s.complement(n)])?;
        self.requests += 2;
        self.strata.record(s, v[0] - v[1]);
        Ok(true)
    }
}

/// Neyman-allocated complementary-contribution estimate with a budget of
/// `ceil(budget_multiplier * n^2)` value requests.
///
/// Phase 1 takes `max(2, floor(m / 2n^2))` sampling steps per coalition size
/// `1..n-1`, round-robin, stopping early if the budget runs out. Phase 2
/// spends what is left across sizes in proportion to the pooled standard
/// deviation of each size, rounded by largest remainder. Steps that find
/// their size exhausted are handed to the sizes still open.
pub fn neyman_shapley(game: &CoalitionGame, budget_multiplier: f64, seed: u64) -> Result<AttributionResult> {
    let n = game.n();
    if n < 2 {
        return Err(Error::Invalid("the sampling estimator needs at least two players".into()));
    }
    if !(budget_multiplier.is_finite() && budget_multiplier > 0.0) {
        return Err(Error::Invalid(format!("budget multiplier {budget_multiplier}")));
    }
    let budget = budget_for(n, budget_multiplier);
    let full = game.grand_coalition();
    let ends = game.values(&[full, Coalition::empty()])?;
    let (value_full, value_empty) = (ends[0], ends[1]);

    let mut sampler = Sampler {
        game,
        rng: ChaCha8Rng::seed_from_u64(seed),
        strata: StratumStats::new(n),
        budget,
        requests: 2,
        seen: HashSet::new(),
        seen_per_pool: vec![0; n / 2 + 1],
    };

    let per_stratum = initial_samples_per_stratum(budget, n);
    let mut phase1_steps = 0u64;
    'phase1: for _ in 0..per_stratum {
        for size in 1..n {
            if !sampler.can_afford_step() {
                warn!(n, budget, phase1_steps, "budget too small to complete phase 1");
                break 'phase1;
            }
            if sampler.step(size)? {
                phase1_steps += 1;
            }
        }
    }
    let phase1_calls = sampler.requests;

    let stds: Vec<Option<f64>> = (1..n).map(|size| sampler.strata.pooled_std(size)).collect();
    let known: Vec<f64> = stds.iter().flatten().copied().collect();
    let fallback = if known.is_empty() {
        1.0
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    let weights: Vec<f64> = stds.iter().map(|s| s.unwrap_or(fallback)).collect();
    debug!(?weights, "phase 2 weights");

    let mut phase2_steps = 0u64;
    loop {
        let open: Vec<usize> = (1..n).filter(|&size| !sampler.exhausted(size)).collect();
        let steps_left = budget.saturating_sub(sampler.requests) / 2;
        if open.is_empty() || steps_left == 0 {
            break;
        }
        let open_weights: Vec<f64> = open.iter().map(|&size| weights[size - 1]).collect();
        let allocation = largest_remainder(steps_left, &open_weights);
        debug!(?open, ?allocation, "phase 2 allocation");
        let before = phase2_steps;
        for (&size, &steps) in open.iter().zip(&allocation) {
            for _ in 0..steps {
                if !sampler.step(size)? {
                    break;
                }
                phase2_steps += 1;
            }
        }
        if phase2_steps == before {
            break;
        }
    }
    let phase2_calls = sampler.requests - phase1_calls;
    if (1..n).all(|size| sampler.exhausted(size)) {
        debug!(n, "every complementary pair evaluated; the estimate is exact");
    }

    let cc_full = value_full - value_empty;
    let mut empty_strata = 0usize;
    let shapley = (0..n)
        .map(|i| {
            let partial: f64 = (1..n)
                .map(|size| {
                    let cell = sampler.strata.get(i, size);
                    if cell.count == 0 {
                        empty_strata += 1;
                    }
                    cell.mean
                })
                .sum();
            (partial + cc_full) / n as f64
        })
        .collect();
    if empty_strata > 0 {
        warn!(empty_strata, "strata without samples contribute zero");
    }

    Ok(AttributionResult {
        shapley,
        n,
        method: Method::Neyman,
        budget_total: budget,
        phase1_calls,
        phase2_calls,
        phase1_steps,
        phase2_steps,
        distinct_calls: game.distinct_calls(),
        seed,
        value_empty,
        value_full,
    })
}

/// `|s_i| / sum_j |s_j|`.
pub fn normalized_attributions(shapley: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = shapley.iter().map(|s| s.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::DegenerateAttribution);
    }
    Ok(shapley.iter().map(|s| s.abs() / total).collect())
}
