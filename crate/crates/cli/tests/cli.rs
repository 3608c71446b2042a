use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn factscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factscope"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const REGISTRY: &str = "domain,label\ngood.com,VeryHigh\nok.org,Mostly Factual\nbad.net,VeryLow\n";

const USERS: &str = r#"{"user_id":"u1","follower_count":120,"followed_count":80,"total_tweet_count":900,"registered_at":"2020-01-01","verified":false}
{"user_id":"u2","follower_count":40,"followed_count":400,"total_tweet_count":10,"registered_at":"2022-12-21","verified":true}
{"user_id":"u3","follower_count":0,"followed_count":0,"total_tweet_count":0,"registered_at":"2022-12-31","verified":false}
"#;

const TWEETS: &str = r#"{"tweet_id":"t1","user_id":"u1","urls":["https://www.good.com/a","https://bad.net/x"]}
{"tweet_id":"t2","user_id":"u1","urls":["http://OK.org/1"]}
{"tweet_id":"t3","user_id":"u2","urls":["https://good.com/b"]}
{"tweet_id":"t4","user_id":"u2","urls":["https://unrated.io/z"]}
{"tweet_id":"t5","user_id":"u3","urls":["https://unrated.io/q"]}
{"tweet_id":"t6","user_id":"u3","urls":[]}
"#;

fn fixture(tweets: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("registry.csv"), REGISTRY).unwrap();
    fs::write(dir.path().join("users.jsonl"), USERS).unwrap();
    fs::write(dir.path().join("tweets.jsonl"), tweets).unwrap();
    dir
}

fn ingest(dir: &Path) -> Output {
    factscope(
        dir,
        &[
            "ingest",
            "--users",
            "users.jsonl",
            "--tweets",
            "tweets.jsonl",
            "--registry",
            "registry.csv",
            "--reference-date",
            "2022-12-31",
        ],
    )
}

fn scored_rows(dir: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join("scored.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn ingest_scores_hand_fixture() {
    let dir = fixture(TWEETS);
    let out = ingest(dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let header = fs::read_to_string(dir.path().join("scored.csv")).unwrap();
    assert!(header.starts_with(
        "user_id,follower_count,followed_count,total_tweet_count,registered_at,verified,\
         tweets_per_day,days_since_registration,score,matched_link_count\n"
    ));
    let rows = scored_rows(dir.path());
    assert_eq!(rows.len(), 3);

    // u1: one VeryHigh (1.0), one VeryLow (0.0), one MostlyFactual (0.6).
    assert_eq!(rows[0][0], "u1");
    let s1: f64 = rows[0][8].parse().unwrap();
    assert!((s1 - 1.6 / 3.0).abs() < 1e-12);
    assert_eq!(rows[0][9], "3");
    // 2020-01-01 to 2022-12-31 is 1095 days.
    assert_eq!(rows[0][7], "1095");
    let tpd: f64 = rows[0][6].parse().unwrap();
    assert!((tpd - 900.0 / 1095.0).abs() < 1e-12);

    // u2: the unrated link is ignored.
    assert_eq!(rows[1][8], "1.0");
    assert_eq!(rows[1][9], "1");
    assert_eq!(rows[1][5], "true");

    // u3: nothing rated, so no score; registered on the reference date.
    assert_eq!(rows[2][8], "");
    assert_eq!(rows[2][9], "0");
    assert_eq!(rows[2][7], "0");
}

#[test]
fn empty_tweets_leave_every_user_unscored() {
    let dir = fixture("");
    let out = ingest(dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = scored_rows(dir.path());
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[8].is_empty() && r[9] == "0"));
}

#[test]
fn missing_registry_is_a_data_error() {
    let dir = fixture(TWEETS);
    fs::remove_file(dir.path().join("registry.csv")).unwrap();
    let out = ingest(dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("registry.csv"), "{}", stderr(&out));
}

#[test]
fn malformed_user_line_names_file_line_and_field() {
    let dir = fixture(TWEETS);
    fs::write(
        dir.path().join("users.jsonl"),
        "{\"user_id\":\"u1\",\"follower_count\":-3,\"followed_count\":1,\"total_tweet_count\":1,\"registered_at\":\"2020-01-01\",\"verified\":false}\n",
    )
    .unwrap();
    let out = ingest(dir.path());
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("users.jsonl") && err.contains("line 1") && err.contains("follower_count"), "{err}");
}

#[test]
fn ingest_without_reference_date_is_a_usage_error() {
    let dir = fixture(TWEETS);
    let out = factscope(
        dir.path(),
        &["ingest", "--users", "users.jsonl", "--tweets", "tweets.jsonl", "--registry", "registry.csv"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_flags_and_policies_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&factscope(dir.path(), &["analyze", "--bogus"])), 1);
    assert_eq!(code(&factscope(dir.path(), &["synth", "--policy", "lenient"])), 1);
    assert_eq!(code(&factscope(dir.path(), &["--help"])), 0);
}

#[test]
fn synth_rejects_tiny_populations() {
    let dir = TempDir::new().unwrap();
    let out = factscope(dir.path(), &["synth", "--users", "50"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least 100"), "{}", stderr(&out));
}

#[test]
fn synth_is_reproducible_and_reingestible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = factscope(dir.path(), &["synth", "--users", "300", "--seed", "9", "--out-dir", name]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    };
    run("a");
    run("b");
    for f in ["users.jsonl", "synth_config.json", "scored.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }

    // The emitted users go back through ingest.
    fs::write(dir.path().join("registry.csv"), REGISTRY).unwrap();
    fs::write(dir.path().join("tweets.jsonl"), "").unwrap();
    let out = factscope(
        dir.path(),
        &[
            "ingest",
            "--users",
            "a/users.jsonl",
            "--tweets",
            "tweets.jsonl",
            "--registry",
            "registry.csv",
            "--reference-date",
            "2022-12-31",
            "--out-dir",
            "re",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(scored_rows(&dir.path().join("re")).len(), 300);
}

#[test]
fn synth_accepts_a_config_file() {
    let dir = TempDir::new().unwrap();
    let out = factscope(dir.path(), &["synth", "--users", "200", "--out-dir", "a"]);
    assert_eq!(code(&out), 0);
    let out = factscope(dir.path(), &["synth", "--config", "a/synth_config.json", "--out-dir", "b"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("a/users.jsonl")).unwrap(),
        fs::read(dir.path().join("b/users.jsonl")).unwrap()
    );
    fs::write(dir.path().join("bad.json"), "{\"n_users\": 10}").unwrap();
    assert_eq!(code(&factscope(dir.path(), &["synth", "--config", "bad.json"])), 2);
}

fn synth_input(dir: &Path, users: &str) {
    let out = factscope(dir, &["synth", "--users", users, "--seed", "4", "--out-dir", "data"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

const ANALYZE: &[&str] = &[
    "analyze",
    "--input",
    "data/scored.csv",
    "--seed",
    "21",
    "--shuffles",
    "60",
    "--bootstrap",
    "100",
    "--accuracy-shuffles",
    "10",
];

#[test]
fn analyze_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    synth_input(dir.path(), "1200");
    let mut reports = Vec::new();
    for (out_dir, threads) in [("r1", "1"), ("r2", "1"), ("r8", "8")] {
        let mut args = ANALYZE.to_vec();
        args.extend(["--threads", threads, "--out-dir", out_dir]);
        let out = factscope(dir.path(), &args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        reports.push(fs::read(dir.path().join(out_dir).join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);

    let d = dir.path().join("r1");
    for f in ["group_metrics.csv", "mwu_null.csv", "ame.csv", "median_split.csv", "accuracy_null.csv", "timings.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["manifest"]["config"]["seed"], 21);
    assert_eq!(report["mwu"].as_array().unwrap().len(), 4);
    assert_eq!(report["regression"].as_array().unwrap().len(), 2);
    let ame = fs::read_to_string(d.join("ame.csv")).unwrap();
    assert!(ame.starts_with("specification,variable,class,estimate,ci_low,ci_high\n"));
}

#[test]
fn stage_subcommands_write_reports() {
    let dir = TempDir::new().unwrap();
    synth_input(dir.path(), "600");
    let p = dir.path();
    let ok = |args: &[&str]| {
        let out = factscope(p, args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        out
    };

    ok(&["filter", "--input", "data/scored.csv", "--policy", "strict", "--out-dir", "f"]);
    let filter = fs::read_to_string(p.join("f/filter.csv")).unwrap();
    assert!(filter.starts_with("user_id,retained,failed_criteria\n"));
    assert_eq!(filter.lines().count(), 601);

    ok(&["score", "--input", "data/scored.csv", "--policy", "relaxed", "--fraction", "0.25", "--out-dir", "s"]);
    let groups = fs::read_to_string(p.join("s/groups.csv")).unwrap();
    assert!(groups.starts_with("user_id,score,group\n"));
    let lows = groups.lines().filter(|l| l.ends_with(",Low")).count();
    let retained = groups.lines().count() - 1;
    assert_eq!(lows, retained * 25 / 100);

    ok(&["mwu", "--input", "data/scored.csv", "--metric", "days", "--shuffles", "50", "--out-dir", "m"]);
    let mwu: serde_json::Value = serde_json::from_slice(&fs::read(p.join("m/mwu.json")).unwrap()).unwrap();
    assert_eq!(mwu["observed"]["direction"], "less");
    assert_eq!(mwu["shuffles"], 50);
    assert!(mwu["null_histogram"]["counts"].is_array());

    ok(&["regress", "--input", "data/scored.csv", "--interactions", "on", "--bootstrap", "0", "--accuracy-shuffles", "0", "--out-dir", "g"]);
    let reg: serde_json::Value = serde_json::from_slice(&fs::read(p.join("g/regress.json")).unwrap()).unwrap();
    assert_eq!(reg["regression"]["model"]["converged"], true);
    assert_eq!(reg["regression"]["model"]["column_names"].as_array().unwrap().len(), 10);
    assert_eq!(reg["regression"]["median_splits"].as_array().unwrap().len(), 4);
    assert!(reg["accuracy"].is_null());

    ok(&["accuracy", "--input", "data/scored.csv", "--shuffles", "20", "--out-dir", "c"]);
    let acc: serde_json::Value = serde_json::from_slice(&fs::read(p.join("c/accuracy.json")).unwrap()).unwrap();
    assert_eq!(acc["null_accuracies"].as_array().unwrap().len(), 20);
}

#[test]
fn bad_bootstrap_size_names_the_stage() {
    let dir = TempDir::new().unwrap();
    synth_input(dir.path(), "200");
    let out = factscope(dir.path(), &["analyze", "--input", "data/scored.csv", "--bootstrap", "50", "--shuffles", "10"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("stage ame"), "{}", stderr(&out));
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    synth_input(dir.path(), "200");
    let out = factscope(
        dir.path(),
        &["regress", "--input", "data/scored.csv", "--max-iter", "1", "--bootstrap", "0", "--accuracy-shuffles", "0"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("did not converge"), "{}", stderr(&out));
}
