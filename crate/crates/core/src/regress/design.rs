use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{AccountMetrics, UserRecord};
use crate::{Error, Result};

/// The four account metrics used as predictors, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    FollowerCount,
    FollowedCount,
    TweetsPerDay,
    DaysSinceRegistration,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::FollowerCount,
        Variable::FollowedCount,
        Variable::TweetsPerDay,
        Variable::DaysSinceRegistration,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::FollowerCount => "follower_count",
            Variable::FollowedCount => "followed_count",
            Variable::TweetsPerDay => "tweets_per_day",
            Variable::DaysSinceRegistration => "days_since_registration",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Variable::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .or(match s {
                "followers" => Some(Variable::FollowerCount),
                "followed" => Some(Variable::FollowedCount),
                "tweets" => Some(Variable::TweetsPerDay),
                "days" => Some(Variable::DaysSinceRegistration),
                _ => None,
            })
            .ok_or_else(|| Error::UnknownVariable(s.to_string()))
    }
}

pub const N_MAINS: usize = 4;

/// Pairwise interaction columns, in column order after the mains.
pub const INTERACTION_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Raw predictor values for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub user_id: String,
    /// Indexed by [`Variable::index`].
    pub values: [f64; N_MAINS],
}

impl MetricRow {
    pub fn from_account(user: &UserRecord, metrics: &AccountMetrics) -> Self {
        MetricRow {
            user_id: user.user_id.clone(),
            values: [
                user.follower_count as f64,
                user.followed_count as f64,
                metrics.tweets_per_day,
                f64::from(metrics.days_since_registration),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    /// Sample (n - 1) standard deviation.
    pub sd: f64,
}

/// Standardised predictors, optionally with the six pairwise products. The
/// intercept is added by the model, not stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    pub column_names: Vec<String>,
    pub standardization: Vec<Standardization>,
    pub row_ids: Vec<String>,
    pub interactions: bool,
}

/// Main columns followed by the interaction products when requested.
pub fn expand_row(mains: &[f64; N_MAINS], interactions: bool, out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(mains);
    if interactions {
        out.extend(INTERACTION_PAIRS.iter().map(|&(a, b)| mains[a] * mains[b]));
    }
}

pub fn column_names(interactions: bool) -> Vec<String> {
    let mut names: Vec<String> = Variable::ALL.iter().map(|v| v.as_str().to_string()).collect();
    if interactions {
        names.extend(
            INTERACTION_PAIRS
                .iter()
                .map(|&(a, b)| format!("{}:{}", Variable::ALL[a], Variable::ALL[b])),
        );
    }
    names
}

pub fn build_design(data: &[MetricRow], with_interactions: bool) -> Result<DesignMatrix> {
    let n = data.len();
    let p = if with_interactions { 10 } else { N_MAINS };
    if n < p + 2 {
        return Err(Error::Design(format!("{n} rows is too few for {p} columns")));
    }
    if data.iter().any(|r| r.values.iter().any(|v| !v.is_finite())) {
        return Err(Error::Design("non-finite predictor value".into()));
    }
    let mut standardization = Vec::with_capacity(N_MAINS);
    for var in Variable::ALL {
        let k = var.index();
        let mean = data.iter().map(|r| r.values[k]).sum::<f64>() / n as f64;
        let ss: f64 = data.iter().map(|r| (r.values[k] - mean).powi(2)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVariance(var.as_str().to_string()));
        }
        standardization.push(Standardization { mean, sd });
    }
    let mut flat = Vec::with_capacity(n * p);
    let mut row = Vec::with_capacity(p);
    for r in data {
        let mut z = [0.0; N_MAINS];
        for (k, s) in standardization.iter().enumerate() {
            z[k] = (r.values[k] - s.mean) / s.sd;
        }
        expand_row(&z, with_interactions, &mut row);
        flat.extend_from_slice(&row);
    }
    Ok(DesignMatrix {
        data: flat,
        n_rows: n,
        n_cols: p,
        column_names: column_names(with_interactions),
        standardization,
        row_ids: data.iter().map(|r| r.user_id.clone()).collect(),
        interactions: with_interactions,
    })
}

impl DesignMatrix {
    /// Design from already-prepared rows. The first four columns are taken as
    /// the mains; with `interactions` the remaining six must be their products.
    pub fn from_rows(rows: Vec<Vec<f64>>, interactions: bool) -> Result<Self> {
        let p = if interactions { 10 } else { N_MAINS };
        let mut data = Vec::with_capacity(rows.len() * p);
        for r in &rows {
            if r.len() != p {
                return Err(Error::Dimension { expected: p, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix {
            data,
            n_rows: rows.len(),
            n_cols: p,
            column_names: column_names(interactions),
            standardization: vec![Standardization { mean: 0.0, sd: 1.0 }; N_MAINS],
            row_ids: (0..rows.len()).map(|i| format!("{i:08}")).collect(),
            interactions,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn mains(&self, i: usize) -> [f64; N_MAINS] {
        let r = self.row(i);
        [r[0], r[1], r[2], r[3]]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New design holding the given rows (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
            column_names: self.column_names.clone(),
            standardization: self.standardization.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            interactions: self.interactions,
        }
    }

    /// Standardised value of `raw` for main column `k`.
    pub fn standardize(&self, k: usize, raw: f64) -> f64 {
        let s = self.standardization[k];
        (raw - s.mean) / s.sd
    }
}
