//! End-to-end analysis: scored-user tables, the filter/group/test/regress
//! chain, and the JSON report plus CSV plot data it produces.
//!
//! Every random stage draws its seed from [`seed::stream`] on the single
//! master seed, so an identical [`RunManifest`] reproduces an identical
//! report regardless of thread count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::credibility::{
    factuality_vector, group_by_rank, load_registry, user_score, CredibilityRegistry, Fraction,
    Group,
};
use crate::filtering::{apply_filter, FilterPolicy, FilterReport, PolicyName};
use crate::ingest::{
    derive_account_metrics, parse_date, parse_tweets, parse_users, ratio, tweets_by_user,
    AccountMetrics, TweetRecord, UserRecord,
};
use crate::regress::{
    accuracy_vs_shuffled, ame, bootstrap_ame, build_design, fit, median_split_effects, AmeReport,
    BootstrapConfig, DesignMatrix, FitConfig, MedianSplitReport, MetricRow, MultinomialModel,
    Variable, N_MAINS,
};
use crate::stats::{self, histogram, mwu, Direction, Histogram, MwuResult};
use crate::synth::SynthDataset;
use crate::{seed, Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bins in every emitted null-distribution histogram.
pub const HISTOGRAM_BINS: usize = 30;

/// One row of the scored-user table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUser {
    pub user: UserRecord,
    pub metrics: AccountMetrics,
    /// `None` when none of the user's links hit a rated domain.
    pub score: Option<f64>,
    pub matched_link_count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoredRow {
    user_id: String,
    follower_count: u64,
    followed_count: u64,
    total_tweet_count: u64,
    registered_at: String,
    verified: bool,
    tweets_per_day: f64,
    days_since_registration: u32,
    score: Option<f64>,
    matched_link_count: u64,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

/// Scores every user by the reliability of the links in their tweets.
pub fn score_users(
    users: &[UserRecord],
    tweets: &[TweetRecord],
    registry: &CredibilityRegistry,
    reference_date: NaiveDate,
) -> Result<Vec<ScoredUser>> {
    let by_user = tweets_by_user(users, tweets)?;
    users
        .iter()
        .map(|u| {
            let metrics = derive_account_metrics(u, reference_date)
                .map_err(|e| e.context(format!("user `{}`", u.user_id)))?;
            let v = factuality_vector(
                by_user.get(&u.user_id).into_iter().flatten().copied(),
                registry,
            );
            Ok(ScoredUser {
                user: u.clone(),
                metrics,
                score: user_score(&v).ok(),
                matched_link_count: v.matched_link_count,
            })
        })
        .collect()
}

/// Reads the three input files and scores the users.
pub fn ingest_files(
    users_path: &Path,
    tweets_path: &Path,
    registry_path: &Path,
    reference_date: NaiveDate,
) -> Result<Vec<ScoredUser>> {
    fn ctx(p: &Path) -> impl Fn(Error) -> Error + '_ {
        move |e| e.context(p.display().to_string())
    }
    let registry = load_registry(open(registry_path)?).map_err(ctx(registry_path))?;
    let users = parse_users(open(users_path)?).map_err(ctx(users_path))?;
    let tweets = parse_tweets(open(tweets_path)?).map_err(ctx(tweets_path))?;
    score_users(&users, &tweets, &registry, reference_date)
}

/// Scored table of a synthetic population; the latent score stands in for
/// the link-based score and every user counts as having one matched link.
pub fn synth_scored(data: &SynthDataset) -> Vec<ScoredUser> {
    data.users
        .iter()
        .map(|u| ScoredUser {
            user: u.user.clone(),
            metrics: u.metrics,
            score: Some(u.latent_score),
            matched_link_count: 1,
        })
        .collect()
}

pub fn write_scored_csv<W: Write>(w: W, rows: &[ScoredUser]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(ScoredRow {
            user_id: r.user.user_id.clone(),
            follower_count: r.user.follower_count,
            followed_count: r.user.followed_count,
            total_tweet_count: r.user.total_tweet_count,
            registered_at: r.user.registered_at.format("%Y-%m-%d").to_string(),
            verified: r.user.verified,
            tweets_per_day: r.metrics.tweets_per_day,
            days_since_registration: r.metrics.days_since_registration,
            score: r.score,
            matched_link_count: r.matched_link_count,
        })?;
    }
    if rows.is_empty() {
        out.write_record([
            "user_id",
            "follower_count",
            "followed_count",
            "total_tweet_count",
            "registered_at",
            "verified",
            "tweets_per_day",
            "days_since_registration",
            "score",
            "matched_link_count",
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_scored_csv<R: Read>(r: R) -> Result<Vec<ScoredUser>> {
    let mut input = csv::Reader::from_reader(r);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in input.deserialize::<ScoredRow>().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let row = row?;
        if !seen.insert(row.user_id.clone()) {
            return Err(Error::DuplicateId(row.user_id));
        }
        let registered_at =
            parse_date(&row.registered_at).map_err(|m| Error::parse(line, "registered_at", m))?;
        if !(row.tweets_per_day >= 0.0 && row.tweets_per_day.is_finite()) {
            return Err(Error::parse(line, "tweets_per_day", "must be finite and >= 0"));
        }
        if let Some(s) = row.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::parse(line, "score", "must lie in [0, 1]"));
            }
        }
        let user = UserRecord {
            user_id: row.user_id,
            follower_count: row.follower_count,
            followed_count: row.followed_count,
            total_tweet_count: row.total_tweet_count,
            registered_at,
            verified: row.verified,
        };
        let metrics = AccountMetrics {
            days_since_registration: row.days_since_registration,
            tweets_per_day: row.tweets_per_day,
            follower_followed_ratio: ratio(user.follower_count, user.followed_count),
            followed_follower_ratio: ratio(user.followed_count, user.follower_count),
        };
        out.push(ScoredUser {
            user,
            metrics,
            score: row.score,
            matched_link_count: row.matched_link_count,
        });
    }
    Ok(out)
}

pub fn read_scored_file(path: &Path) -> Result<Vec<ScoredUser>> {
    read_scored_csv(open(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn write_scored_file(path: &Path, rows: &[ScoredUser]) -> Result<()> {
    write_scored_csv(create(path)?, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub input: usize,
    /// Users without any rated link.
    pub unscored: usize,
    pub rejected: usize,
    pub retained: usize,
    pub rejected_by_criterion: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub low: usize,
    pub middle: usize,
    pub high: usize,
}

/// Scored users that pass the filter, ordered by user id, with their groups.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub users: Vec<&'a ScoredUser>,
    pub scores: Vec<f64>,
    pub labels: Vec<Group>,
    pub fraction: Fraction,
    pub filter: FilterReport,
    pub counts: SampleCounts,
}

impl Prepared<'_> {
    pub fn sizes(&self) -> GroupSizes {
        let count = |g| self.labels.iter().filter(|&&l| l == g).count();
        GroupSizes {
            low: count(Group::Low),
            middle: count(Group::Middle),
            high: count(Group::High),
        }
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.users
            .iter()
            .map(|u| MetricRow::from_account(&u.user, &u.metrics))
            .collect()
    }

    pub fn values(&self, v: Variable) -> Vec<f64> {
        self.metric_rows().iter().map(|r| r.values[v.index()]).collect()
    }
}

/// Drops unscored users, applies the policy and groups the remainder.
pub fn prepare(scored: &[ScoredUser], policy: PolicyName, fraction: Fraction) -> Result<Prepared<'_>> {
    let with_score: Vec<&ScoredUser> = scored.iter().filter(|u| u.score.is_some()).collect();
    let filter = apply_filter(
        with_score.iter().map(|u| (&u.user, &u.metrics)),
        &FilterPolicy::preset(policy),
    );
    let mut users: Vec<&ScoredUser> = with_score
        .iter()
        .copied()
        .filter(|u| filter.is_retained(&u.user.user_id))
        .collect();
    users.sort_by(|a, b| a.user.user_id.cmp(&b.user.user_id));
    let scores: Vec<f64> = users.iter().map(|u| u.score.expect("filtered")).collect();
    let labels = group_by_rank(&scores, fraction).map_err(|e| e.context("stage group"))?;
    let counts = SampleCounts {
        input: scored.len(),
        unscored: scored.len() - with_score.len(),
        rejected: filter.rejected.len(),
        retained: users.len(),
        rejected_by_criterion: filter
            .criterion_counts()
            .into_iter()
            .map(|(c, n)| (c.as_str().to_string(), n))
            .collect(),
    };
    Ok(Prepared {
        users,
        scores,
        labels,
        fraction,
        filter,
        counts,
    })
}

/// Direction in which the low group is expected to differ from the high
/// group.
pub fn default_direction(v: Variable) -> Direction {
    match v {
        Variable::DaysSinceRegistration => Direction::FirstLess,
        _ => Direction::FirstGreater,
    }
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn split_low_high(values: &[f64], labels: &[Group]) -> (Vec<f64>, Vec<f64>) {
    let mut low = Vec::new();
    let mut high = Vec::new();
    for (&x, &g) in values.iter().zip(labels) {
        match g {
            Group::Low => low.push(x),
            Group::High => high.push(x),
            Group::Middle => {}
        }
    }
    (low, high)
}

/// Low-versus-high rank test on one metric against a score-shuffle null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTest {
    pub variable: Variable,
    pub median_low: f64,
    pub median_high: f64,
    pub observed: MwuResult,
    pub shuffles: usize,
    pub shuffle_seed: u64,
    pub empirical_p: f64,
    pub null_histogram: Histogram,
}

pub fn metric_test(
    prepared: &Prepared<'_>,
    variable: Variable,
    direction: Direction,
    shuffles: usize,
    master_seed: u64,
) -> Result<MetricTest> {
    let values = prepared.values(variable);
    let (low, high) = split_low_high(&values, &prepared.labels);
    let observed = mwu(&low, &high, direction)?;
    let fraction = prepared.fraction;
    let dataset: Vec<(f64, f64)> = values.iter().copied().zip(prepared.scores.iter().copied()).collect();
    let ensemble = stats::shuffle_ensemble(&dataset, shuffles, master_seed, |rows| {
        let scores: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        match group_by_rank(&scores, fraction) {
            Ok(labels) => {
                let (a, b) = split_low_high(&xs, &labels);
                stats::u_statistic(&a, &b)
            }
            Err(_) => f64::NAN,
        }
    })?;
    Ok(MetricTest {
        variable,
        median_low: median(low),
        median_high: median(high),
        empirical_p: stats::empirical_p(observed.u_statistic, &ensemble, direction),
        null_histogram: histogram(&ensemble.statistics, HISTOGRAM_BINS),
        observed,
        shuffles,
        shuffle_seed: master_seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub interactions: bool,
    pub n_rows: usize,
    pub model: MultinomialModel,
    pub ame: AmeReport,
    pub median_splits: Vec<MedianSplitReport>,
}

fn design_for(prepared: &Prepared<'_>, interactions: bool) -> Result<DesignMatrix> {
    build_design(&prepared.metric_rows(), interactions)
}

/// Fits one specification. With `bootstrap_replicates == 0` the AMEs carry
/// no intervals. Median splits are reported for the interaction model only.
pub fn regression(
    prepared: &Prepared<'_>,
    interactions: bool,
    fit_config: &FitConfig,
    bootstrap: &BootstrapConfig,
) -> Result<RegressionReport> {
    let design = design_for(prepared, interactions).map_err(|e| e.context("stage regress"))?;
    let model = fit(&design, &prepared.labels, fit_config).map_err(|e| e.context("stage regress"))?;
    if !model.converged {
        return Err(Error::NotConverged.context("stage regress"));
    }
    let ame = if bootstrap.replicates == 0 {
        ame(&model, &design)
    } else {
        bootstrap_ame(&design, &prepared.labels, fit_config, bootstrap)
    }
    .map_err(|e| e.context("stage ame"))?;
    let median_splits = if interactions {
        Variable::ALL
            .iter()
            .map(|v| median_split_effects(&model, &design, v.as_str()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.context("stage median_split"))?
    } else {
        Vec::new()
    };
    Ok(RegressionReport {
        interactions,
        n_rows: design.n_rows(),
        model,
        ame,
        median_splits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub interactions: bool,
    pub observed: f64,
    pub shuffles: usize,
    pub shuffle_seed: u64,
    pub dropped: usize,
    pub empirical_p: f64,
    pub null_accuracies: Vec<f64>,
}

pub fn accuracy(
    prepared: &Prepared<'_>,
    interactions: bool,
    fit_config: &FitConfig,
    shuffles: usize,
    master_seed: u64,
) -> Result<AccuracySummary> {
    let design = design_for(prepared, interactions)?;
    let t = accuracy_vs_shuffled(&design, &prepared.labels, fit_config, shuffles, master_seed)?;
    Ok(AccuracySummary {
        interactions,
        observed: t.observed,
        shuffles,
        shuffle_seed: master_seed,
        dropped: t.dropped,
        empirical_p: t.empirical_p,
        null_accuracies: t.ensemble.statistics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub policy: PolicyName,
    pub fraction: Fraction,
    pub shuffles: usize,
    pub seed: u64,
    /// 0 skips the bootstrap.
    pub bootstrap_replicates: usize,
    pub level: f64,
    /// 0 skips the accuracy test.
    pub accuracy_shuffles: usize,
    pub fit: FitConfig,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            policy: PolicyName::Middle,
            fraction: Fraction::P30,
            shuffles: stats::DEFAULT_SHUFFLES,
            seed: 0,
            bootstrap_replicates: BootstrapConfig::default().replicates,
            level: BootstrapConfig::default().level,
            accuracy_shuffles: 100,
            fit: FitConfig::default(),
        }
    }
}

/// Sub-seeds handed to each random stage, keyed by stage label.
pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    let mut labels: Vec<String> = Variable::ALL.iter().map(|v| format!("mwu:{v}")).collect();
    labels.extend(["bootstrap:main", "bootstrap:interactions", "accuracy"].map(String::from));
    labels
        .into_iter()
        .map(|l| {
            let s = seed::stream(master, &l);
            (l, s)
        })
        .collect()
}

/// Everything needed to reproduce a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub inputs: Vec<String>,
    pub reference_date: Option<NaiveDate>,
    pub config: AnalyzeConfig,
    pub seeds: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(inputs: Vec<String>, reference_date: Option<NaiveDate>, config: AnalyzeConfig) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            inputs,
            reference_date,
            seeds: stage_seeds(config.seed),
            config,
        }
    }
}

/// Wall-clock seconds per stage. Kept out of the report so reports compare
/// byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| match e {
            e @ Error::Context { .. } => e,
            e => e.context(format!("stage {stage}")),
        })?;
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub manifest: RunManifest,
    pub sample: SampleCounts,
    pub groups: GroupSizes,
    pub mwu: Vec<MetricTest>,
    pub regression: Vec<RegressionReport>,
    pub accuracy: Option<AccuracySummary>,
}

/// Per-user values behind the group comparison plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedUser {
    pub user_id: String,
    pub group: Group,
    pub score: f64,
    pub values: [f64; N_MAINS],
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: AnalysisReport,
    pub timings: Timings,
    pub grouped: Vec<GroupedUser>,
}

pub fn analyze(scored: &[ScoredUser], manifest: RunManifest) -> Result<Analysis> {
    let cfg = manifest.config;
    let seeds = &manifest.seeds;
    let mut timings = Timings::default();
    let prepared = timings.run("filter", || prepare(scored, cfg.policy, cfg.fraction))?;

    let mut tests = Vec::new();
    for v in Variable::ALL {
        let s = seeds[&format!("mwu:{v}")];
        tests.push(timings.run("mwu", || {
            metric_test(&prepared, v, default_direction(v), cfg.shuffles, s)
        })?);
    }

    let mut fits = Vec::new();
    for (interactions, label) in [(false, "bootstrap:main"), (true, "bootstrap:interactions")] {
        let bootstrap = BootstrapConfig {
            replicates: cfg.bootstrap_replicates,
            level: cfg.level,
            master_seed: seeds[label],
        };
        fits.push(timings.run("regress", || {
            regression(&prepared, interactions, &cfg.fit, &bootstrap)
        })?);
    }

    let accuracy = if cfg.accuracy_shuffles == 0 {
        None
    } else {
        Some(timings.run("accuracy", || {
            accuracy(&prepared, false, &cfg.fit, cfg.accuracy_shuffles, seeds["accuracy"])
        })?)
    };

    let grouped = prepared
        .users
        .iter()
        .zip(prepared.metric_rows())
        .zip(&prepared.labels)
        .map(|((u, row), &group)| GroupedUser {
            user_id: u.user.user_id.clone(),
            group,
            score: u.score.expect("filtered"),
            values: row.values,
        })
        .collect();

    Ok(Analysis {
        report: AnalysisReport {
            manifest,
            sample: prepared.counts.clone(),
            groups: prepared.sizes(),
            mwu: tests,
            regression: fits,
            accuracy,
        },
        timings,
        grouped,
    })
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    write_json(&mut w, value)?;
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_group_metrics_csv<W: Write>(w: W, grouped: &[GroupedUser]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["user_id", "group", "score"];
    header.extend(Variable::ALL.iter().map(|v| v.as_str()));
    out.write_record(&header)?;
    for g in grouped {
        let mut rec = vec![g.user_id.clone(), g.group.to_string(), g.score.to_string()];
        rec.extend(g.values.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mwu_csv<W: Write>(w: W, tests: &[MetricTest]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variable", "bin_left", "bin_right", "count", "observed_u", "empirical_p"])?;
    for t in tests {
        let h = &t.null_histogram;
        for (i, c) in h.counts.iter().enumerate() {
            out.write_record([
                t.variable.as_str().to_string(),
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                c.to_string(),
                t.observed.u_statistic.to_string(),
                t.empirical_p.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn spec_name(interactions: bool) -> &'static str {
    if interactions {
        "interactions"
    } else {
        "main"
    }
}

pub fn write_ame_csv<W: Write>(w: W, regression: &[RegressionReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["specification", "variable", "class", "estimate", "ci_low", "ci_high"])?;
    for r in regression {
        for e in &r.ame.effects {
            let classes = [
                ("Low", &e.low),
                ("Middle", &e.middle),
                ("High", &e.high),
                ("Low-High", &e.low_minus_high),
            ];
            for (name, eff) in classes {
                out.write_record([
                    spec_name(r.interactions).to_string(),
                    e.variable.as_str().to_string(),
                    name.to_string(),
                    eff.estimate.to_string(),
                    opt(eff.ci.map(|c| c[0])),
                    opt(eff.ci.map(|c| c[1])),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_median_split_csv<W: Write>(w: W, regression: &[RegressionReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["split_variable", "half", "variable", "class", "effect"])?;
    for r in regression {
        for s in &r.median_splits {
            for (half, h) in [("below", &s.below), ("above", &s.above)] {
                for e in &h.effects {
                    for g in Group::ALL {
                        out.write_record([
                            s.split_variable.as_str(),
                            half,
                            e.variable.as_str(),
                            g.as_str(),
                            &e.effects[g.index()].to_string(),
                        ])?;
                    }
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_accuracy_csv<W: Write>(w: W, acc: &AccuracySummary) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["shuffle", "accuracy", "observed"])?;
    for (i, a) in acc.null_accuracies.iter().enumerate() {
        out.write_record([i.to_string(), a.to_string(), acc.observed.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `report.json`, `timings.json` and the plot CSVs into `dir`.
pub fn write_analysis(dir: &Path, analysis: &Analysis) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display().to_string()))?;
    let report = &analysis.report;
    write_json_file(&dir.join("report.json"), report)?;
    write_json_file(&dir.join("timings.json"), &analysis.timings)?;
    write_group_metrics_csv(create(&dir.join("group_metrics.csv"))?, &analysis.grouped)?;
    write_mwu_csv(create(&dir.join("mwu_null.csv"))?, &report.mwu)?;
    write_ame_csv(create(&dir.join("ame.csv"))?, &report.regression)?;
    write_median_split_csv(create(&dir.join("median_split.csv"))?, &report.regression)?;
    if let Some(acc) = &report.accuracy {
        write_accuracy_csv(create(&dir.join("accuracy_null.csv"))?, acc)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, null_preset, paper_sign_preset};

    fn scored(n: usize, seed: u64) -> Vec<ScoredUser> {
        synth_scored(&generate(&paper_sign_preset().with_users(n).with_seed(seed)).unwrap())
    }

    #[test]
    fn scored_csv_round_trip() {
        let rows = scored(150, 3);
        let mut buf = Vec::new();
        write_scored_csv(&mut buf, &rows).unwrap();
        let back = read_scored_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn unscored_rows_round_trip() {
        let mut rows = scored(100, 4);
        rows[0].score = None;
        rows[0].matched_link_count = 0;
        let mut buf = Vec::new();
        write_scored_csv(&mut buf, &rows).unwrap();
        let back = read_scored_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].score, None);
        let p = prepare(&back, PolicyName::Relaxed, Fraction::P30).unwrap();
        assert_eq!(p.counts.unscored, 1);
        assert!(p.users.iter().all(|u| u.user.user_id != rows[0].user.user_id));
    }

    #[test]
    fn score_out_of_range_is_rejected() {
        let text = "user_id,follower_count,followed_count,total_tweet_count,registered_at,verified,tweets_per_day,days_since_registration,score,matched_link_count\n\
                    a,1,1,1,2020-01-01,false,1.0,10,1.5,2\n";
        assert!(matches!(
            read_scored_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn group_sizes_follow_fraction() {
        let rows = scored(1000, 5);
        let p = prepare(&rows, PolicyName::Relaxed, Fraction::P30).unwrap();
        let s = p.sizes();
        let k = Fraction::P30.extreme_size(p.counts.retained);
        assert_eq!((s.low, s.high), (k, k));
        assert_eq!(s.low + s.middle + s.high, p.counts.retained);
    }

    #[test]
    fn analyze_recovers_planted_followers() {
        let rows = scored(3000, 6);
        let cfg = AnalyzeConfig {
            shuffles: 50,
            bootstrap_replicates: 0,
            accuracy_shuffles: 0,
            ..AnalyzeConfig::default()
        };
        let a = analyze(&rows, RunManifest::new(vec![], None, cfg)).unwrap();
        let t = &a.report.mwu[Variable::FollowerCount.index()];
        assert!(t.median_low > t.median_high);
        assert_eq!(a.report.regression.len(), 2);
        assert_eq!(a.report.regression[1].median_splits.len(), N_MAINS);
        assert!(a.report.accuracy.is_none());
    }

    #[test]
    fn null_data_gives_unremarkable_p_values() {
        let rows = synth_scored(&generate(&null_preset().with_users(2000).with_seed(8)).unwrap());
        let p = prepare(&rows, PolicyName::Middle, Fraction::P30).unwrap();
        for v in Variable::ALL {
            let t = metric_test(&p, v, default_direction(v), 200, 11).unwrap();
            assert!(t.empirical_p > 0.01, "{v}: {}", t.empirical_p);
        }
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let rows = scored(100, 7);
        let cfg = AnalyzeConfig {
            shuffles: 0,
            ..AnalyzeConfig::default()
        };
        let err = analyze(&rows, RunManifest::new(vec![], None, cfg)).unwrap_err();
        assert!(err.to_string().starts_with("stage mwu"), "{err}");
    }
}
