//! Organic-user selection under the relaxed, middle and strict threshold
//! policies.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{AccountMetrics, UserRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Relaxed,
    Middle,
    Strict,
}

impl PolicyName {
    pub const ALL: [PolicyName; 3] = [PolicyName::Relaxed, PolicyName::Middle, PolicyName::Strict];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Relaxed => "relaxed",
            PolicyName::Middle => "middle",
            PolicyName::Strict => "strict",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relaxed" => Ok(PolicyName::Relaxed),
            "middle" => Ok(PolicyName::Middle),
            "strict" => Ok(PolicyName::Strict),
            _ => Err(Error::UnknownPolicy(s.to_string())),
        }
    }
}

/// Upper bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub name: PolicyName,
    pub require_unverified: bool,
    pub max_tweets_per_day: f64,
    pub max_followers: u64,
    pub max_follower_followed_ratio: f64,
    pub max_followed: u64,
    pub max_followed_follower_ratio: f64,
}

pub fn preset(name: &str) -> Result<FilterPolicy> {
    Ok(FilterPolicy::preset(name.parse()?))
}

impl FilterPolicy {
    pub fn preset(name: PolicyName) -> Self {
        match name {
            PolicyName::Relaxed => FilterPolicy {
                name,
                require_unverified: false,
                max_tweets_per_day: 56.0,
                max_followers: 10_000,
                max_follower_followed_ratio: 10.0,
                max_followed: 10_000,
                max_followed_follower_ratio: 10.0,
            },
            PolicyName::Middle => FilterPolicy {
                name,
                require_unverified: true,
                max_tweets_per_day: 32.0,
                max_followers: 10_000,
                max_follower_followed_ratio: 5.0,
                max_followed: 10_000,
                max_followed_follower_ratio: 10.0,
            },
            PolicyName::Strict => FilterPolicy {
                name,
                require_unverified: true,
                max_tweets_per_day: 16.0,
                max_followers: 5_000,
                max_follower_followed_ratio: 3.0,
                max_followed: 5_000,
                max_followed_follower_ratio: 5.0,
            },
        }
    }

    /// Every criterion the user fails, in table order.
    pub fn failures(&self, user: &UserRecord, metrics: &AccountMetrics) -> Vec<Criterion> {
        let mut failed = Vec::new();
        if self.require_unverified && user.verified {
            failed.push(Criterion::RequireUnverified);
        }
        // NaN never passes a `<=` check, which is what we want here.
        if !(metrics.tweets_per_day <= self.max_tweets_per_day) {
            failed.push(Criterion::MaxTweetsPerDay);
        }
        if user.follower_count > self.max_followers {
            failed.push(Criterion::MaxFollowers);
        }
        if !(metrics.follower_followed_ratio <= self.max_follower_followed_ratio) {
            failed.push(Criterion::MaxFollowerFollowedRatio);
        }
        if user.followed_count > self.max_followed {
            failed.push(Criterion::MaxFollowed);
        }
        if !(metrics.followed_follower_ratio <= self.max_followed_follower_ratio) {
            failed.push(Criterion::MaxFollowedFollowerRatio);
        }
        failed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    RequireUnverified,
    MaxTweetsPerDay,
    MaxFollowers,
    MaxFollowerFollowedRatio,
    MaxFollowed,
    MaxFollowedFollowerRatio,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::RequireUnverified => "require_unverified",
            Criterion::MaxTweetsPerDay => "max_tweets_per_day",
            Criterion::MaxFollowers => "max_followers",
            Criterion::MaxFollowerFollowedRatio => "max_follower_followed_ratio",
            Criterion::MaxFollowed => "max_followed",
            Criterion::MaxFollowedFollowerRatio => "max_followed_follower_ratio",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    /// In input order.
    pub retained: Vec<String>,
    pub rejected: BTreeMap<String, Vec<Criterion>>,
}

impl FilterReport {
    pub fn is_retained(&self, user_id: &str) -> bool {
        !self.rejected.contains_key(user_id)
    }

    /// Rejection count per criterion.
    pub fn criterion_counts(&self) -> BTreeMap<Criterion, usize> {
        let mut counts = BTreeMap::new();
        for failed in self.rejected.values() {
            for c in failed {
                *counts.entry(*c).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, w: W, input_order: &[&str]) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user_id", "retained", "failed_criteria"])?;
        for id in input_order {
            let failed = self.rejected.get(*id);
            let names = failed
                .map(|f| f.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            out.write_record([*id, if failed.is_none() { "true" } else { "false" }, names.as_str()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn apply_filter<'a, I>(users: I, policy: &FilterPolicy) -> FilterReport
where
    I: IntoIterator<Item = (&'a UserRecord, &'a AccountMetrics)>,
{
    let mut report = FilterReport::default();
    for (user, metrics) in users {
        let failed = policy.failures(user, metrics);
        if failed.is_empty() {
            report.retained.push(user.user_id.clone());
        } else {
            report.rejected.insert(user.user_id.clone(), failed);
        }
    }
    report
}
