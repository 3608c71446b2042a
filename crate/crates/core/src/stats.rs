//! One-sided Mann-Whitney U tests and the label-shuffle null used to judge
//! them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{exec, seed, Error, Result};

/// Above this many cross-sample pairs, U is computed from midranks instead
/// of by direct pair counting.
pub const PAIR_COUNT_LIMIT: usize = 10_000;

/// Default number of shuffled datasets in a null ensemble.
pub const DEFAULT_SHUFFLES: usize = 1000;

/// Alternative hypothesis about the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "greater")]
    FirstGreater,
    #[serde(rename = "less")]
    FirstLess,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::FirstGreater => "greater",
            Direction::FirstLess => "less",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "greater" | "first_greater" => Ok(Direction::FirstGreater),
            "less" | "first_less" => Ok(Direction::FirstLess),
            other => Err(Error::Config(format!("direction must be greater or less (got `{other}`)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U of the first sample: wins over the second plus half the ties.
    pub u_statistic: f64,
    pub n1: usize,
    pub n2: usize,
    /// Standardised U with tie-corrected variance, no continuity correction.
    pub z: f64,
    pub analytic_p_one_sided: f64,
    pub direction: Direction,
}

impl MwuResult {
    /// U of the second sample.
    pub fn u_complement(&self) -> f64 {
        (self.n1 * self.n2) as f64 - self.u_statistic
    }
}

fn check_sample(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("sample contains NaN".into()));
    }
    Ok(())
}

/// `Φ(x)` for the standard normal.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut twice = 0u64;
    for x in a {
        for y in b {
            twice += match x.total_cmp(y) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice as f64 / 2.0
}

/// Midrank U of `a` together with the tie term `Σ (t³ - t)` over tie groups
/// in the pooled sample.
pub fn u_midrank(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0.total_cmp(&pooled[i].0).is_eq() {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let in_a = pooled[i..j].iter().filter(|p| p.1).count();
        rank_sum_a += midrank * in_a as f64;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let n1 = a.len() as f64;
    (rank_sum_a - n1 * (n1 + 1.0) / 2.0, tie_term)
}

/// U statistic of `a` versus `b`, without the normal approximation.
pub fn u_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.len() * b.len() <= PAIR_COUNT_LIMIT {
        u_by_pairs(a, b)
    } else {
        u_midrank(a, b).0
    }
}

pub fn mwu(a: &[f64], b: &[f64], direction: Direction) -> Result<MwuResult> {
    check_sample(a)?;
    check_sample(b)?;
    let (midrank_u, tie_term) = u_midrank(a, b);
    let u = if a.len() * b.len() <= PAIR_COUNT_LIMIT {
        u_by_pairs(a, b)
    } else {
        midrank_u
    };
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let (z, p) = if variance <= 0.0 {
        (0.0, 0.5)
    } else {
        let z = (u - n1 * n2 / 2.0) / variance.sqrt();
        let p = match direction {
            Direction::FirstGreater => normal_cdf(-z),
            Direction::FirstLess => normal_cdf(z),
        };
        (z, p)
    };
    Ok(MwuResult {
        u_statistic: u,
        n1: a.len(),
        n2: b.len(),
        z,
        analytic_p_one_sided: p,
        direction,
    })
}

/// Scores permuted by a seeded Fisher-Yates shuffle.
pub fn permuted<S: Clone>(scores: &[S], seed: u64) -> Vec<S> {
    let mut out = scores.to_vec();
    out.shuffle(&mut seed::rng(seed));
    out
}

/// Reassigns scores across rows uniformly at random; feature rows keep
/// their order.
pub fn shuffle_factuality<F: Clone, S: Clone>(dataset: &[(F, S)], seed: u64) -> Vec<(F, S)> {
    let scores: Vec<S> = dataset.iter().map(|(_, s)| s.clone()).collect();
    dataset
        .iter()
        .map(|(f, _)| f.clone())
        .zip(permuted(&scores, seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleEnsemble {
    pub master_seed: u64,
    pub count: usize,
    pub statistics: Vec<f64>,
}

/// Evaluates `statistic` on `count` shuffled copies of `dataset`. Shuffle `i`
/// is seeded with `seed::derive(master_seed, i)`.
pub fn shuffle_ensemble<F, S, T>(
    dataset: &[(F, S)],
    count: usize,
    master_seed: u64,
    statistic: T,
) -> Result<ShuffleEnsemble>
where
    F: Clone + Sync,
    S: Clone + Sync,
    T: Fn(&[(F, S)]) -> f64 + Sync + Send,
{
    if count == 0 {
        return Err(Error::Config("shuffle count must be at least 1".into()));
    }
    if dataset.is_empty() {
        return Err(Error::EmptySample);
    }
    let statistics = exec::map_indexed(count, |i| {
        let shuffled = shuffle_factuality(dataset, seed::derive(master_seed, i as u64));
        statistic(&shuffled)
    });
    Ok(ShuffleEnsemble {
        master_seed,
        count,
        statistics,
    })
}

/// Add-one permutation p-value: `(#{at least as extreme} + 1) / (count + 1)`.
pub fn empirical_p(observed: f64, ensemble: &ShuffleEnsemble, direction: Direction) -> f64 {
    let extreme = ensemble
        .statistics
        .iter()
        .filter(|&&s| match direction {
            Direction::FirstGreater => s >= observed,
            Direction::FirstLess => s <= observed,
        })
        .count();
    (extreme + 1) as f64 / (ensemble.statistics.len() + 1) as f64
}

/// Equal-width histogram for plotting an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    if values.is_empty() {
        return Histogram { edges: vec![], counts: vec![] };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}
