//! JSON-lines user and tweet records and the per-user account metrics
//! derived from them.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub follower_count: u64,
    pub followed_count: u64,
    pub total_tweet_count: u64,
    #[serde(with = "iso_date")]
    pub registered_at: NaiveDate,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub urls: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountMetrics {
    pub days_since_registration: u32,
    pub tweets_per_day: f64,
    /// `+inf` when the user follows nobody but has followers.
    pub follower_followed_ratio: f64,
    pub followed_follower_ratio: f64,
}

mod iso_date {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&d.format("%Y-%m-%d").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_date(&s).map_err(serde::de::Error::custom)
    }
}

/// Accepts a plain `YYYY-MM-DD` date or a full RFC 3339 timestamp, which is
/// converted to its UTC calendar date.
pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.naive_utc().date())
        .map_err(|_| format!("`{s}` is not an ISO-8601 date"))
}

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

fn object(line_no: usize, text: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(Error::parse(line_no, "<record>", "expected a JSON object")),
        Err(e) => Err(Error::parse(line_no, "<record>", e.to_string())),
    }
}

fn field<'a>(map: &'a Map<String, Value>, line: usize, name: &str) -> Result<&'a Value> {
    map.get(name)
        .ok_or_else(|| Error::parse(line, name, "missing"))
}

fn string_field(map: &Map<String, Value>, line: usize, name: &str) -> Result<String> {
    match field(map, line, name)? {
        Value::String(s) if !s.is_empty() => Ok(s.clone()),
        Value::String(_) => Err(Error::parse(line, name, "must be non-empty")),
        _ => Err(Error::parse(line, name, "expected a string")),
    }
}

fn count_field(map: &Map<String, Value>, line: usize, name: &str) -> Result<u64> {
    field(map, line, name)?
        .as_u64()
        .ok_or_else(|| Error::parse(line, name, "expected a non-negative integer"))
}

/// Parses a JSON-lines user file. Blank lines are skipped.
pub fn parse_users<R: BufRead>(reader: R) -> Result<Vec<UserRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let map = object(line, &text)?;
        let registered = string_field(&map, line, "registered_at")?;
        let record = UserRecord {
            user_id: string_field(&map, line, "user_id")?,
            follower_count: count_field(&map, line, "follower_count")?,
            followed_count: count_field(&map, line, "followed_count")?,
            total_tweet_count: count_field(&map, line, "total_tweet_count")?,
            registered_at: parse_date(&registered)
                .map_err(|m| Error::parse(line, "registered_at", m))?,
            verified: field(&map, line, "verified")?
                .as_bool()
                .ok_or_else(|| Error::parse(line, "verified", "expected a boolean"))?,
        };
        if !seen.insert(record.user_id.clone()) {
            return Err(Error::DuplicateId(record.user_id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn parse_tweets<R: BufRead>(reader: R) -> Result<Vec<TweetRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in lines(reader) {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let map = object(line, &text)?;
        let urls = match field(&map, line, "urls")? {
            Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::parse(line, "urls", "expected an array of strings"))
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::parse(line, "urls", "expected an array of strings")),
        };
        let record = TweetRecord {
            tweet_id: string_field(&map, line, "tweet_id")?,
            user_id: string_field(&map, line, "user_id")?,
            urls,
        };
        if !seen.insert(record.tweet_id.clone()) {
            return Err(Error::DuplicateId(record.tweet_id));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Groups tweets by author, rejecting tweets whose author is not in `users`.
pub fn tweets_by_user<'a>(
    users: &[UserRecord],
    tweets: &'a [TweetRecord],
) -> Result<HashMap<String, Vec<&'a TweetRecord>>> {
    let known: HashSet<&str> = users.iter().map(|u| u.user_id.as_str()).collect();
    let mut by_user: HashMap<String, Vec<&TweetRecord>> = HashMap::new();
    for t in tweets {
        if !known.contains(t.user_id.as_str()) {
            return Err(Error::UnknownUser {
                tweet_id: t.tweet_id.clone(),
                user_id: t.user_id.clone(),
            });
        }
        by_user.entry(t.user_id.clone()).or_default().push(t);
    }
    Ok(by_user)
}

/// Lowercased hostname of an absolute http(s) URL with a single leading
/// `www.` label removed.
pub fn extract_domain(raw: &str) -> Result<String> {
    let invalid = |reason: &str| Error::InvalidUrl {
        url: raw.to_string(),
        reason: reason.to_string(),
    };
    let parsed = url::Url::parse(raw.trim()).map_err(|e| invalid(&e.to_string()))?;
    if !matches!(parsed.scheme(), "http" | "https") {
        return Err(invalid("scheme must be http or https"));
    }
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| invalid("missing host"))?
        .to_ascii_lowercase();
    let host = match host.strip_prefix("www.") {
        Some(rest) if !rest.is_empty() => rest.to_string(),
        _ => host,
    };
    Ok(host)
}

/// `num / den` with `x/0 = +inf` for `x > 0` and `0/0 = 0`.
pub fn ratio(num: u64, den: u64) -> f64 {
    match (num, den) {
        (0, 0) => 0.0,
        (_, 0) => f64::INFINITY,
        (n, d) => n as f64 / d as f64,
    }
}

pub fn derive_account_metrics(user: &UserRecord, reference_date: NaiveDate) -> Result<AccountMetrics> {
    if user.registered_at > reference_date {
        return Err(Error::RegisteredAfterReference {
            registered: user.registered_at,
            reference: reference_date,
        });
    }
    let days = (reference_date - user.registered_at).num_days() as u32;
    Ok(AccountMetrics {
        days_since_registration: days,
        tweets_per_day: user.total_tweet_count as f64 / f64::from(days.max(1)),
        follower_followed_ratio: ratio(user.follower_count, user.followed_count),
        followed_follower_ratio: ratio(user.followed_count, user.follower_count),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn user(followers: u64, followed: u64, tweets: u64, reg: &str) -> UserRecord {
        UserRecord {
            user_id: "u".into(),
            follower_count: followers,
            followed_count: followed,
            total_tweet_count: tweets,
            registered_at: date(reg),
            verified: false,
        }
    }

    #[test]
    fn empty_stream_parses_to_nothing() {
        assert!(parse_users("".as_bytes()).unwrap().is_empty());
        assert!(parse_tweets("\n\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parses_one_user() {
        let line = r#"{"user_id":"u1","follower_count":1635,"followed_count":20,"total_tweet_count":3,"registered_at":"2015-02-03","verified":false}"#;
        let users = parse_users(line.as_bytes()).unwrap();
        assert_eq!(users.len(), 1);
        assert_eq!(users[0].follower_count, 1635);
        assert_eq!(users[0].registered_at, date("2015-02-03"));
    }

    #[test]
    fn accepts_rfc3339_timestamps() {
        assert_eq!(parse_date("2012-06-01T23:30:00-02:00").unwrap(), date("2012-06-02"));
    }

    #[test]
    fn duplicate_user_is_rejected() {
        let text = concat!(
            r#"{"user_id":"u1","follower_count":1,"followed_count":1,"total_tweet_count":1,"registered_at":"2015-02-03","verified":false}"#,
            "\n",
            r#"{"user_id":"u1","follower_count":2,"followed_count":1,"total_tweet_count":1,"registered_at":"2015-02-03","verified":true}"#,
        );
        match parse_users(text.as_bytes()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "u1"),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let text = concat!(
            r#"{"user_id":"u1","follower_count":1,"followed_count":1,"total_tweet_count":1,"registered_at":"2015-02-03","verified":false}"#,
            "\n",
            r#"{"user_id":"u2","follower_count":-4,"followed_count":1,"total_tweet_count":1,"registered_at":"2015-02-03","verified":false}"#,
        );
        match parse_users(text.as_bytes()) {
            Err(Error::Parse { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "follower_count");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = parse_users(r#"{"user_id":"u"}"#.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("registered_at"), "{err}");
        let err = parse_users("nonsense".as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
    }

    #[test]
    fn tweets_parse_and_join() {
        let text = concat!(
            r#"{"tweet_id":"t1","user_id":"u","urls":["https://a.com/x"]}"#,
            "\n",
            r#"{"tweet_id":"t2","user_id":"ghost","urls":[]}"#,
        );
        let tweets = parse_tweets(text.as_bytes()).unwrap();
        assert_eq!(tweets[0].urls, vec!["https://a.com/x".to_string()]);
        let users = vec![user(1, 1, 1, "2020-01-01")];
        assert!(matches!(
            tweets_by_user(&users, &tweets),
            Err(Error::UnknownUser { .. })
        ));
        assert_eq!(tweets_by_user(&users, &tweets[..1]).unwrap()["u"].len(), 1);
    }

    #[test]
    fn duplicate_tweet_is_rejected() {
        let text = concat!(
            r#"{"tweet_id":"t1","user_id":"u","urls":[]}"#,
            "\n",
            r#"{"tweet_id":"t1","user_id":"u","urls":[]}"#,
        );
        assert!(matches!(parse_tweets(text.as_bytes()), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn domain_normalisation() {
        assert_eq!(extract_domain("https://www.Example.COM/a?b=1").unwrap(), "example.com");
        assert_eq!(extract_domain("http://news.site.co.uk/path").unwrap(), "news.site.co.uk");
        assert!(extract_domain("not a url").is_err());
        assert!(extract_domain("ftp://example.com/file").is_err());
        assert!(extract_domain("mailto:someone@example.com").is_err());
    }

    #[test]
    fn metric_conventions() {
        let m = derive_account_metrics(&user(0, 0, 300, "2020-01-01"), date("2020-04-10")).unwrap();
        assert_eq!(m.days_since_registration, 100);
        assert_eq!(m.tweets_per_day, 3.0);
        assert_eq!(m.follower_followed_ratio, 0.0);
        assert_eq!(m.followed_follower_ratio, 0.0);

        let m = derive_account_metrics(&user(5, 0, 7, "2020-01-01"), date("2020-01-01")).unwrap();
        assert_eq!(m.days_since_registration, 0);
        assert_eq!(m.tweets_per_day, 7.0);
        assert_eq!(m.follower_followed_ratio, f64::INFINITY);
        assert_eq!(m.followed_follower_ratio, 0.0);

        assert!(matches!(
            derive_account_metrics(&user(1, 1, 1, "2021-01-02"), date("2021-01-01")),
            Err(Error::RegisteredAfterReference { .. })
        ));
    }

    fn arb_user() -> impl Strategy<Value = UserRecord> {
        (
            "[a-z0-9_]{1,12}",
            any::<u32>(),
            any::<u32>(),
            any::<u32>(),
            0i64..20_000,
            any::<bool>(),
        )
            .prop_map(|(id, a, b, c, offset, verified)| UserRecord {
                user_id: id,
                follower_count: a.into(),
                followed_count: b.into(),
                total_tweet_count: c.into(),
                registered_at: date("1990-01-01") + chrono::Duration::days(offset),
                verified,
            })
    }

    proptest! {
        #[test]
        fn users_round_trip(users in proptest::collection::vec(arb_user(), 0..20)) {
            let mut users = users;
            let mut seen = HashSet::new();
            users.retain(|u| seen.insert(u.user_id.clone()));
            let mut buf = Vec::new();
            write_jsonl(&mut buf, &users).unwrap();
            prop_assert_eq!(parse_users(buf.as_slice()).unwrap(), users);
        }

        #[test]
        fn tweets_per_day_times_days_is_total(u in arb_user(), extra in 0i64..5000) {
            let reference = u.registered_at + chrono::Duration::days(extra);
            let m = derive_account_metrics(&u, reference).unwrap();
            let back = m.tweets_per_day * f64::from(m.days_since_registration.max(1));
            prop_assert!((back - u.total_tweet_count as f64).abs() <= 1e-6 * (1.0 + back));
        }

        #[test]
        fn domain_is_idempotent(labels in proptest::collection::vec("[a-z][a-z0-9]{0,7}", 1..4), www in any::<bool>()) {
            prop_assume!(labels[0] != "www");
            let host = labels.join(".");
            let url = if www { format!("https://www.{host}/p") } else { format!("http://{host}") };
            let d = extract_domain(&url).unwrap();
            prop_assert_eq!(&d, &host);
            prop_assert_eq!(extract_domain(&format!("https://{d}")).unwrap(), d);
        }
    }
}
