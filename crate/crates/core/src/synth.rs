//! Synthetic user populations with planted metric-to-factuality structure.
//!
//! Each user gets four sampled metrics. The metrics are standardised over the
//! population and combined into a misinformation propensity
//!
//! ```text
//! propensity = Σ effects[k]·z_k + Σ γ_ab·z_a·z_b + scale(z)·ε,   ε ~ N(0, 1)
//! scale(z)   = noise_sd · exp(Σ dispersion[k]·clamp(z_k, -3, 3))
//! ```
//!
//! and the latent factuality score is `logistic(-propensity)`, so a positive
//! effect makes a user more likely to land in the low group. Dispersion
//! effects widen or narrow the spread of the propensity, which moves users
//! into (or out of) both extreme groups at once.

use std::io::Write;

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::credibility::UserFactuality;
use crate::ingest::{derive_account_metrics, write_jsonl, AccountMetrics, UserRecord};
use crate::regress::{MetricRow, Variable, N_MAINS};
use crate::{seed, Error, Result};

pub const MIN_USERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovariateSpec {
    /// `exp(N(ln median, sigma²))`, rounded for integer counts.
    LogNormal { median: f64, sigma: f64 },
    /// Uniform over `low..=high` days.
    UniformInt { low: u32, high: u32 },
}

impl CovariateSpec {
    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            CovariateSpec::LogNormal { median, sigma } => {
                if !(median > 0.0 && median.is_finite() && sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::Config(format!(
                        "{name}: log-normal needs median > 0 and sigma >= 0"
                    )));
                }
            }
            CovariateSpec::UniformInt { low, high } => {
                if low > high {
                    return Err(Error::Config(format!("{name}: uniform needs low <= high")));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateSpec::LogNormal { median, sigma } => LogNormal::new(median.ln(), sigma)
                .expect("validated")
                .sample(rng),
            CovariateSpec::UniformInt { low, high } => f64::from(rng.random_range(low..=high)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpecs {
    pub follower_count: CovariateSpec,
    pub followed_count: CovariateSpec,
    pub tweets_per_day: CovariateSpec,
    pub days_since_registration: CovariateSpec,
}

impl CovariateSpecs {
    fn by_variable(&self, v: Variable) -> &CovariateSpec {
        match v {
            Variable::FollowerCount => &self.follower_count,
            Variable::FollowedCount => &self.followed_count,
            Variable::TweetsPerDay => &self.tweets_per_day,
            Variable::DaysSinceRegistration => &self.days_since_registration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedInteraction {
    pub first: Variable,
    pub second: Variable,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub master_seed: u64,
    pub reference_date: NaiveDate,
    pub covariates: CovariateSpecs,
    /// Location effects on low-factuality propensity, by [`Variable::index`].
    pub effects: [f64; N_MAINS],
    #[serde(default)]
    pub interaction_effects: Vec<PlantedInteraction>,
    /// Log-scale effects on the propensity spread.
    #[serde(default)]
    pub dispersion_effects: [f64; N_MAINS],
    pub noise_sd: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < MIN_USERS {
            return Err(Error::Config(format!(
                "n_users must be at least {MIN_USERS} (got {})",
                self.n_users
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise_sd must be positive".into()));
        }
        for v in Variable::ALL {
            self.covariates.by_variable(v).validate(v.as_str())?;
        }
        if !matches!(
            self.covariates.days_since_registration,
            CovariateSpec::UniformInt { .. }
        ) {
            return Err(Error::Config(
                "days_since_registration must use a uniform integer distribution".into(),
            ));
        }
        for i in &self.interaction_effects {
            if i.first == i.second {
                return Err(Error::Config("interaction needs two distinct variables".into()));
            }
        }
        let all = self
            .effects
            .iter()
            .chain(&self.dispersion_effects)
            .chain(self.interaction_effects.iter().map(|i| &i.coefficient));
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("effects must be finite".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn with_users(mut self, n_users: usize) -> Self {
        self.n_users = n_users;
        self
    }
}

fn default_covariates() -> CovariateSpecs {
    CovariateSpecs {
        follower_count: CovariateSpec::LogNormal { median: 900.0, sigma: 0.4 },
        followed_count: CovariateSpec::LogNormal { median: 800.0, sigma: 0.4 },
        tweets_per_day: CovariateSpec::LogNormal { median: 2.0, sigma: 0.6 },
        days_since_registration: CovariateSpec::UniformInt { low: 60, high: 5000 },
    }
}

fn reference_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 12, 31).expect("valid date")
}

/// Planted structure matching the reported directions:
///
/// - follower count: more likely low *and* high than middle, low slightly more;
/// - followed count: less likely low and high, high more strongly;
/// - tweets per day: more likely low, less likely high;
/// - days since registration: less likely low, more likely high;
/// - follower x followed interaction: among users with few followers the
///   followed-count effect on high membership is negative, among users with
///   many followers it turns positive.
pub fn paper_sign_preset() -> SynthConfig {
    SynthConfig {
        n_users: 20_000,
        master_seed: 1,
        reference_date: reference_date(),
        covariates: default_covariates(),
        effects: [0.3, -0.15, 0.8, -0.8],
        interaction_effects: vec![PlantedInteraction {
            first: Variable::FollowerCount,
            second: Variable::FollowedCount,
            coefficient: -1.2,
        }],
        dispersion_effects: [0.35, -1.0, 0.0, 0.0],
        noise_sd: 1.0,
    }
}

/// AME signs `(Low, High)` planted by [`paper_sign_preset`], by variable.
pub const PAPER_SIGN_PATTERN: [(Variable, [f64; 2]); 4] = [
    (Variable::FollowerCount, [1.0, 1.0]),
    (Variable::FollowedCount, [-1.0, -1.0]),
    (Variable::TweetsPerDay, [1.0, -1.0]),
    (Variable::DaysSinceRegistration, [-1.0, 1.0]),
];

/// Same covariates, no planted structure.
pub fn null_preset() -> SynthConfig {
    SynthConfig {
        effects: [0.0; N_MAINS],
        interaction_effects: Vec::new(),
        dispersion_effects: [0.0; N_MAINS],
        ..paper_sign_preset()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthUser {
    pub user: UserRecord,
    pub metrics: AccountMetrics,
    /// Rate before back-filling the integer tweet count.
    pub sampled_tweets_per_day: f64,
    pub latent_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub users: Vec<SynthUser>,
    pub config: SynthConfig,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let reference = config.reference_date;
    let mut users = Vec::with_capacity(config.n_users);
    let mut noise = Vec::with_capacity(config.n_users);
    for i in 0..config.n_users {
        let mut rng = seed::rng(seed::derive(config.master_seed, i as u64));
        let c = &config.covariates;
        let followers = c.follower_count.sample(&mut rng).round() as u64;
        let followed = c.followed_count.sample(&mut rng).round() as u64;
        let tweets_per_day = c.tweets_per_day.sample(&mut rng);
        let days = c.days_since_registration.sample(&mut rng) as u32;
        let eps: f64 = StandardNormal.sample(&mut rng);
        let user = UserRecord {
            user_id: format!("s{i:06}"),
            follower_count: followers,
            followed_count: followed,
            total_tweet_count: (tweets_per_day * f64::from(days.max(1))).round() as u64,
            registered_at: reference - chrono::Duration::days(i64::from(days)),
            verified: false,
        };
        let metrics = derive_account_metrics(&user, reference)?;
        users.push(SynthUser {
            user,
            metrics,
            sampled_tweets_per_day: tweets_per_day,
            latent_score: f64::NAN,
        });
        noise.push(eps);
    }

    let rows: Vec<[f64; N_MAINS]> = users
        .iter()
        .map(|u| MetricRow::from_account(&u.user, &u.metrics).values)
        .collect();
    let n = rows.len() as f64;
    let mut z = rows.clone();
    for k in 0..N_MAINS {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for zr in &mut z {
            zr[k] = (zr[k] - mean) / sd;
        }
    }
    for ((u, zr), eps) in users.iter_mut().zip(&z).zip(&noise) {
        let mut location: f64 = config.effects.iter().zip(zr).map(|(b, x)| b * x).sum();
        for i in &config.interaction_effects {
            location += i.coefficient * zr[i.first.index()] * zr[i.second.index()];
        }
        let log_scale: f64 = config
            .dispersion_effects
            .iter()
            .zip(zr)
            .map(|(d, x)| d * x.clamp(-3.0, 3.0))
            .sum();
        let propensity = location + config.noise_sd * log_scale.exp() * eps;
        u.latent_score = logistic(-propensity);
    }
    Ok(SynthDataset {
        users,
        config: config.clone(),
    })
}

impl SynthDataset {
    pub fn records(&self) -> Vec<UserRecord> {
        self.users.iter().map(|u| u.user.clone()).collect()
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.users
            .iter()
            .map(|u| MetricRow::from_account(&u.user, &u.metrics))
            .collect()
    }

    pub fn scores(&self) -> Vec<UserFactuality> {
        self.users
            .iter()
            .map(|u| UserFactuality {
                user_id: u.user.user_id.clone(),
                score: u.latent_score,
                matched_link_count: 1,
            })
            .collect()
    }

    pub fn write_users<W: Write>(&self, w: W) -> Result<()> {
        write_jsonl(w, &self.records())
    }

    /// The planted configuration, for recovery checks.
    pub fn write_sidecar<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.config)?;
        Ok(())
    }
}
