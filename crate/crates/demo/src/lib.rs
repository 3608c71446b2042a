//! Browser demo: three small views over synthetic populations.
//!
//! Every view is a plain function returning a serialisable struct so the
//! logic runs and is tested natively; the `#[wasm_bindgen]` wrappers only
//! turn the result into JSON for the page.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use factscope::credibility::{Fraction, Group};
use factscope::filtering::PolicyName;
use factscope::pipeline::{self, GroupSizes, MetricTest};
use factscope::regress::{BootstrapConfig, FitConfig, Variable};
use factscope::synth::{self, CovariateSpec, SynthConfig};
use factscope::{Error, Result};

/// Kept small so a view recomputes within a frame or two.
pub const MAX_USERS: usize = 5_000;
pub const MAX_SHUFFLES: usize = 2_000;

fn population(config: SynthConfig) -> Result<Vec<pipeline::ScoredUser>> {
    if config.n_users > MAX_USERS {
        return Err(Error::Config(format!("at most {MAX_USERS} users in the demo")));
    }
    Ok(pipeline::synth_scored(&synth::generate(&config)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullView {
    pub sizes: GroupSizes,
    pub test: MetricTest,
}

/// Observed Low-versus-High U for one metric against its score-shuffle null.
pub fn null_view(metric: &str, n_users: usize, shuffles: usize, seed: u64) -> Result<NullView> {
    let variable: Variable = metric.parse()?;
    if shuffles == 0 || shuffles > MAX_SHUFFLES {
        return Err(Error::Config(format!("shuffles must be in 1..={MAX_SHUFFLES}")));
    }
    let scored = population(synth::paper_sign_preset().with_users(n_users).with_seed(seed))?;
    let prepared = pipeline::prepare(&scored, PolicyName::Middle, Fraction::P30)?;
    let direction = pipeline::default_direction(variable);
    let test = pipeline::metric_test(&prepared, variable, direction, shuffles, seed)?;
    Ok(NullView {
        sizes: prepared.sizes(),
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub variable: Variable,
    pub low: f64,
    pub middle: f64,
    pub high: f64,
}

/// Point AMEs of the main-effect model when the tweet-rate and account-age
/// location effects are set by hand and everything else is null.
pub fn effect_view(tweet_rate: f64, account_age: f64, n_users: usize, seed: u64) -> Result<Vec<EffectRow>> {
    let mut config = synth::null_preset().with_users(n_users).with_seed(seed);
    config.effects[Variable::TweetsPerDay.index()] = tweet_rate;
    config.effects[Variable::DaysSinceRegistration.index()] = account_age;
    let scored = population(config)?;
    let prepared = pipeline::prepare(&scored, PolicyName::Middle, Fraction::P30)?;
    let point = BootstrapConfig {
        replicates: 0,
        ..BootstrapConfig::default()
    };
    let report = pipeline::regression(&prepared, false, &FitConfig::default(), &point)?;
    Ok(Variable::ALL
        .iter()
        .map(|&v| EffectRow {
            variable: v,
            low: report.ame.estimate(v, Group::Low),
            middle: report.ame.estimate(v, Group::Middle),
            high: report.ame.estimate(v, Group::High),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRow {
    pub policy: PolicyName,
    pub retained: usize,
    pub rejected: usize,
    pub rejected_by_criterion: std::collections::BTreeMap<String, usize>,
    pub sizes: GroupSizes,
}

/// Scales the log-normal spread of every count covariate by `spread`, then
/// reports what each organic-user policy keeps.
pub fn filter_view(spread: f64, n_users: usize, seed: u64) -> Result<Vec<PolicyRow>> {
    if !(spread > 0.0 && spread <= 5.0) {
        return Err(Error::Config("spread must be in (0, 5]".into()));
    }
    let mut config = synth::paper_sign_preset().with_users(n_users).with_seed(seed);
    let c = &mut config.covariates;
    for spec in [&mut c.follower_count, &mut c.followed_count, &mut c.tweets_per_day] {
        if let CovariateSpec::LogNormal { sigma, .. } = spec {
            *sigma *= spread;
        }
    }
    let scored = population(config)?;
    PolicyName::ALL
        .iter()
        .map(|&policy| {
            let p = pipeline::prepare(&scored, policy, Fraction::P30)?;
            Ok(PolicyRow {
                policy,
                retained: p.counts.retained,
                rejected: p.counts.rejected,
                rejected_by_criterion: p.counts.rejected_by_criterion.clone(),
                sizes: p.sizes(),
            })
        })
        .collect()
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn null_test(metric: &str, n_users: u32, shuffles: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_js(null_view(metric, n_users as usize, shuffles as usize, u64::from(seed)))
}

#[wasm_bindgen]
pub fn marginal_effects(tweet_rate: f64, account_age: f64, n_users: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_js(effect_view(tweet_rate, account_age, n_users as usize, u64::from(seed)))
}

#[wasm_bindgen]
pub fn filter_policies(spread: f64, n_users: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_js(filter_view(spread, n_users as usize, u64::from(seed)))
}
