//! Reliability registry, per-user factuality vectors and scores, and the
//! low/middle/high percentile grouping.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{extract_domain, TweetRecord};
use crate::{Error, Result};

/// Six-level outlet reliability rating, ordered from least to most reliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReliabilityLabel {
    VeryLow,
    Low,
    Mixed,
    MostlyFactual,
    High,
    VeryHigh,
}

impl ReliabilityLabel {
    pub const ALL: [ReliabilityLabel; 6] = [
        ReliabilityLabel::VeryLow,
        ReliabilityLabel::Low,
        ReliabilityLabel::Mixed,
        ReliabilityLabel::MostlyFactual,
        ReliabilityLabel::High,
        ReliabilityLabel::VeryHigh,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReliabilityLabel::VeryLow => "VeryLow",
            ReliabilityLabel::Low => "Low",
            ReliabilityLabel::Mixed => "Mixed",
            ReliabilityLabel::MostlyFactual => "MostlyFactual",
            ReliabilityLabel::High => "High",
            ReliabilityLabel::VeryHigh => "VeryHigh",
        }
    }
}

impl fmt::Display for ReliabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReliabilityLabel {
    type Err = Error;

    /// Accepts the CamelCase spelling or the spaced form ("Mostly Factual").
    fn from_str(s: &str) -> Result<Self> {
        let squashed: String = s.split_whitespace().collect();
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == squashed)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CredibilityRegistry {
    domains: BTreeMap<String, ReliabilityLabel>,
}

impl CredibilityRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts after normalising `domain` the same way link domains are
    /// normalised.
    pub fn insert(&mut self, domain: &str, label: ReliabilityLabel) -> Result<()> {
        let key = normalize_domain(domain)?;
        if self.domains.contains_key(&key) {
            return Err(Error::DuplicateDomain(key));
        }
        self.domains.insert(key, label);
        Ok(())
    }

    pub fn get(&self, domain: &str) -> Option<ReliabilityLabel> {
        self.domains.get(domain).copied()
    }

    /// Label for a URL, or `None` when the URL is unparseable or its domain
    /// is not rated.
    pub fn label_for_url(&self, url: &str) -> Option<ReliabilityLabel> {
        extract_domain(url).ok().and_then(|d| self.get(&d))
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ReliabilityLabel)> {
        self.domains.iter().map(|(d, l)| (d.as_str(), *l))
    }
}

fn normalize_domain(domain: &str) -> Result<String> {
    let d = domain.trim();
    if d.contains("://") {
        extract_domain(d)
    } else {
        extract_domain(&format!("https://{d}"))
    }
}

/// Reads `domain,label` rows. A leading `domain,label` header row is skipped.
pub fn load_registry<R: Read>(reader: R) -> Result<CredibilityRegistry> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut registry = CredibilityRegistry::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() != 2 {
            return Err(Error::Registry {
                line,
                message: format!("expected 2 columns, found {}", row.len()),
            });
        }
        if line == 1 && row[0].eq_ignore_ascii_case("domain") && row[1].eq_ignore_ascii_case("label") {
            continue;
        }
        let label: ReliabilityLabel = row[1].parse()?;
        registry.insert(&row[0], label).map_err(|e| match e {
            Error::InvalidUrl { reason, .. } => Error::Registry {
                line,
                message: format!("bad domain `{}`: {reason}", &row[0]),
            },
            other => other,
        })?;
    }
    Ok(registry)
}

/// Share of a user's rated links falling in each reliability level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactualityVector {
    pub shares: [f64; 6],
    pub matched_link_count: u64,
}

impl FactualityVector {
    pub fn from_counts(counts: [u64; 6]) -> Self {
        let total: u64 = counts.iter().sum();
        let shares = if total == 0 {
            [0.0; 6]
        } else {
            counts.map(|c| c as f64 / total as f64)
        };
        FactualityVector {
            shares,
            matched_link_count: total,
        }
    }
}

/// Every URL occurrence with a rated domain counts once; unrated or
/// unparseable URLs are ignored.
pub fn factuality_vector<'a, I>(tweets: I, registry: &CredibilityRegistry) -> FactualityVector
where
    I: IntoIterator<Item = &'a TweetRecord>,
{
    let mut counts = [0u64; 6];
    for tweet in tweets {
        for url in &tweet.urls {
            if let Some(label) = registry.label_for_url(url) {
                counts[label.ordinal()] += 1;
            }
        }
    }
    FactualityVector::from_counts(counts)
}

/// Numeric value of each reliability level: the ordinal index spread evenly
/// over `[0, 1]`.
pub const LABEL_SCORES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

pub fn user_score(v: &FactualityVector) -> Result<f64> {
    user_score_with(v, &LABEL_SCORES)
}

pub fn user_score_with(v: &FactualityVector, label_scores: &[f64; 6]) -> Result<f64> {
    if v.matched_link_count == 0 {
        return Err(Error::UndefinedScore);
    }
    let s: f64 = v
        .shares
        .iter()
        .zip(label_scores)
        .map(|(share, value)| share * value)
        .sum();
    Ok(s.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserFactuality {
    pub user_id: String,
    pub score: f64,
    pub matched_link_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Low,
    Middle,
    High,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Low, Group::Middle, Group::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Low => "Low",
            Group::Middle => "Middle",
            Group::High => "High",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fraction of users placed in each extreme group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fraction {
    #[serde(rename = "0.25")]
    P25,
    #[serde(rename = "0.30")]
    P30,
    #[serde(rename = "0.35")]
    P35,
}

impl Fraction {
    pub const ALL: [Fraction; 3] = [Fraction::P25, Fraction::P30, Fraction::P35];

    pub fn percent(self) -> usize {
        match self {
            Fraction::P25 => 25,
            Fraction::P30 => 30,
            Fraction::P35 => 35,
        }
    }

    pub fn value(self) -> f64 {
        self.percent() as f64 / 100.0
    }

    /// `floor(f * n)`, computed in integers.
    pub fn extreme_size(self, n: usize) -> usize {
        self.percent() * n / 100
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0.25" | "25" | "25%" => Ok(Fraction::P25),
            "0.3" | "0.30" | "30" | "30%" => Ok(Fraction::P30),
            "0.35" | "35" | "35%" => Ok(Fraction::P35),
            other => Err(Error::Config(format!(
                "fraction must be one of 0.25, 0.30, 0.35 (got `{other}`)"
            ))),
        }
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.{}", self.percent())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualityGrouping {
    pub fraction: Fraction,
    pub assignment: BTreeMap<String, Group>,
}

impl FactualityGrouping {
    pub fn size(&self, group: Group) -> usize {
        self.assignment.values().filter(|g| **g == group).count()
    }

    pub fn group_of(&self, user_id: &str) -> Option<Group> {
        self.assignment.get(user_id).copied()
    }
}

/// Groups for scores given in some fixed order, ties broken by position.
/// Callers that need `(score, user_id)` order pass rows sorted by user id.
pub fn group_by_rank(scores: &[f64], fraction: Fraction) -> Result<Vec<Group>> {
    let n = scores.len();
    if n < 3 {
        return Err(Error::Grouping(format!("need at least 3 users, got {n}")));
    }
    let k = fraction.extreme_size(n);
    if k == 0 {
        return Err(Error::Grouping(format!(
            "{fraction} of {n} users leaves the extreme groups empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut groups = vec![Group::Middle; n];
    for &i in &order[..k] {
        groups[i] = Group::Low;
    }
    for &i in &order[n - k..] {
        groups[i] = Group::High;
    }
    Ok(groups)
}

pub fn assign_groups(scores: &[UserFactuality], fraction: Fraction) -> Result<FactualityGrouping> {
    let mut rows: Vec<&UserFactuality> = scores.iter().collect();
    rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let values: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let groups = group_by_rank(&values, fraction)?;
    let assignment = rows
        .iter()
        .zip(groups)
        .map(|(r, g)| (r.user_id.clone(), g))
        .collect();
    Ok(FactualityGrouping {
        fraction,
        assignment,
    })
}

pub fn write_grouping_csv<W: Write>(
    w: W,
    scores: &[UserFactuality],
    grouping: &FactualityGrouping,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["user_id", "score", "group"])?;
    let mut rows: Vec<&UserFactuality> = scores.iter().collect();
    rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    for r in rows {
        if let Some(g) = grouping.group_of(&r.user_id) {
            out.write_record([r.user_id.as_str(), &r.score.to_string(), g.as_str()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tweet(id: &str, urls: &[&str]) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            user_id: "u".into(),
            urls: urls.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn registry() -> CredibilityRegistry {
        load_registry(
            "domain,label\nmixed.com,Mixed\nhigh.com,High\nvh.org,VeryHigh\nvl.net,Very Low\n".as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn registry_loading() {
        let r = load_registry("example.com,High".as_bytes()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r.get("example.com"), Some(ReliabilityLabel::High));
        let r = load_registry("WWW.Example.com, MostlyFactual\n".as_bytes()).unwrap();
        assert_eq!(r.get("example.com"), Some(ReliabilityLabel::MostlyFactual));

        assert!(matches!(
            load_registry("example.com,VeryTrue".as_bytes()),
            Err(Error::UnknownLabel(l)) if l == "VeryTrue"
        ));
        assert!(matches!(
            load_registry("example.com,High\nwww.example.com,Low\n".as_bytes()),
            Err(Error::DuplicateDomain(d)) if d == "example.com"
        ));
        assert!(matches!(
            load_registry("example.com\n".as_bytes()),
            Err(Error::Registry { line: 1, .. })
        ));
    }

    #[test]
    fn vectors_count_links() {
        let reg = registry();
        let tweets = vec![
            tweet("1", &["https://vh.org/a", "https://www.vh.org/b"]),
            tweet("2", &["https://vh.org/c"]),
            tweet("3", &["http://vh.org/d", "https://unrated.com/x", "garbage"]),
        ];
        let v = factuality_vector(&tweets, &reg);
        assert_eq!(v.shares, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(v.matched_link_count, 4);

        // 2 Mixed + 2 High links over 4 matched: 0.5 each.
        let tweets = vec![
            tweet("1", &["https://mixed.com/1", "https://high.com/1"]),
            tweet("2", &["https://mixed.com/2"]),
            tweet("3", &["https://high.com/2"]),
        ];
        let v = factuality_vector(&tweets, &reg);
        assert_eq!(v.shares, [0.0, 0.0, 0.5, 0.0, 0.5, 0.0]);

        let tweets = vec![tweet("1", &["https://a.com", "https://b.com", "https://c.com"])];
        let v = factuality_vector(&tweets, &reg);
        assert_eq!(v.matched_link_count, 0);
        assert_eq!(v.shares, [0.0; 6]);
    }

    #[test]
    fn scores() {
        let top = FactualityVector::from_counts([0, 0, 0, 0, 0, 4]);
        assert_eq!(user_score(&top).unwrap(), 1.0);
        let bottom = FactualityVector::from_counts([3, 0, 0, 0, 0, 0]);
        assert_eq!(user_score(&bottom).unwrap(), 0.0);
        let mixed = FactualityVector::from_counts([0, 0, 2, 0, 2, 0]);
        assert!((user_score(&mixed).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            user_score(&FactualityVector::from_counts([0; 6])),
            Err(Error::UndefinedScore)
        ));
    }

    fn users(n: usize) -> Vec<UserFactuality> {
        (0..n)
            .map(|i| UserFactuality {
                user_id: format!("u{i:05}"),
                score: ((i * 7919) % n) as f64 / n as f64,
                matched_link_count: 1,
            })
            .collect()
    }

    #[test]
    fn group_sizes() {
        let g = assign_groups(&users(10), Fraction::P30).unwrap();
        assert_eq!((g.size(Group::Low), g.size(Group::Middle), g.size(Group::High)), (3, 4, 3));
        assert_eq!(Fraction::P30.extreme_size(18450), 5535);
        assert_eq!(Fraction::P25.extreme_size(18450), 4612);
        assert!(assign_groups(&users(2), Fraction::P35).is_err());
        // floor(0.25 * 3) = 0
        assert!(assign_groups(&users(3), Fraction::P25).is_err());
    }

    #[test]
    fn low_group_holds_lowest_scores_and_ties_break_by_id() {
        let scores: Vec<UserFactuality> = [("b", 0.5), ("a", 0.5), ("c", 0.1), ("d", 0.9), ("e", 0.5)]
            .iter()
            .map(|(id, s)| UserFactuality {
                user_id: id.to_string(),
                score: *s,
                matched_link_count: 1,
            })
            .collect();
        // n = 5, 35% -> 1 per extreme group.
        let g = assign_groups(&scores, Fraction::P35).unwrap();
        assert_eq!(g.group_of("c"), Some(Group::Low));
        assert_eq!(g.group_of("d"), Some(Group::High));
        let g = assign_groups(&scores[..3], Fraction::P35).unwrap();
        // sorted: c(0.1), a(0.5), b(0.5)
        assert_eq!(g.group_of("c"), Some(Group::Low));
        assert_eq!(g.group_of("a"), Some(Group::Middle));
        assert_eq!(g.group_of("b"), Some(Group::High));
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("0.3".parse::<Fraction>().unwrap(), Fraction::P30);
        assert_eq!("35".parse::<Fraction>().unwrap(), Fraction::P35);
        assert!("0.4".parse::<Fraction>().is_err());
    }

    #[test]
    fn grouping_csv() {
        let us = users(4);
        let g = assign_groups(&us, Fraction::P25).unwrap();
        let mut buf = Vec::new();
        write_grouping_csv(&mut buf, &us, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("user_id,score,group\n"));
        assert_eq!(text.lines().count(), 5);
    }

    fn arb_label() -> impl Strategy<Value = ReliabilityLabel> {
        (0usize..6).prop_map(|i| ReliabilityLabel::ALL[i])
    }

    proptest! {
        #[test]
        fn shares_sum_to_one_and_ignore_order(
            rated in proptest::collection::vec(arb_label(), 1..8),
            links in proptest::collection::vec(proptest::collection::vec(0usize..12, 0..5), 1..20),
            seed in any::<u64>(),
        ) {
            let mut reg = CredibilityRegistry::new();
            for (i, l) in rated.iter().enumerate() {
                reg.insert(&format!("d{i}.com"), *l).unwrap();
            }
            let tweets: Vec<TweetRecord> = links
                .iter()
                .enumerate()
                .map(|(t, ls)| TweetRecord {
                    tweet_id: t.to_string(),
                    user_id: "u".into(),
                    urls: ls.iter().map(|d| format!("https://d{d}.com/p")).collect(),
                })
                .collect();
            let v = factuality_vector(&tweets, &reg);
            if v.matched_link_count > 0 {
                prop_assert!((v.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(v.shares, [0.0; 6]);
            }
            let mut shuffled = tweets.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut crate::seed::rng(seed));
            prop_assert_eq!(factuality_vector(&shuffled, &reg), v);
        }

        #[test]
        fn moving_mass_upward_never_lowers_score(
            counts in proptest::array::uniform6(0u64..20),
            from in 0usize..6,
            to in 0usize..6,
        ) {
            prop_assume!(counts[from] > 0 && from < to);
            let before = user_score(&FactualityVector::from_counts(counts)).unwrap();
            let mut moved = counts;
            moved[from] -= 1;
            moved[to] += 1;
            let after = user_score(&FactualityVector::from_counts(moved)).unwrap();
            prop_assert!(after >= before - 1e-15);
        }

        #[test]
        fn sizes_follow_floor_formula(n in 3usize..5000, f in 0usize..3) {
            let fraction = Fraction::ALL[f];
            let k = (n * fraction.percent()) / 100;
            prop_assume!(k > 0);
            let scores: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64).collect();
            let g = group_by_rank(&scores, fraction).unwrap();
            let low = g.iter().filter(|x| **x == Group::Low).count();
            let high = g.iter().filter(|x| **x == Group::High).count();
            prop_assert_eq!(low, k);
            prop_assert_eq!(high, k);
            prop_assert_eq!(n - low - high, n - 2 * k);
            let max_low = scores.iter().zip(&g).filter(|(_, x)| **x == Group::Low).map(|(s, _)| *s).fold(f64::MIN, f64::max);
            let min_high = scores.iter().zip(&g).filter(|(_, x)| **x == Group::High).map(|(s, _)| *s).fold(f64::MAX, f64::min);
            prop_assert!(max_low <= min_high);
        }
    }
}
