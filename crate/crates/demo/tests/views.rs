use factscope::filtering::PolicyName;
use factscope::regress::Variable;
use factscope_demo::{effect_view, filter_view, null_view, MAX_USERS};

#[test]
fn null_histogram_holds_every_shuffle() {
    let view = null_view("tweets_per_day", 1000, 200, 3).unwrap();
    assert_eq!(view.test.null_histogram.counts.iter().sum::<usize>(), 200);
    let grouped = view.sizes.low + view.sizes.middle + view.sizes.high;
    assert!(grouped <= 1000 && grouped > 900);
    assert_eq!(view.test.observed.n1, view.sizes.low);
    assert!(view.test.empirical_p > 0.0 && view.test.empirical_p <= 1.0);
    // Planted tweet-rate effect is strong enough to beat every shuffle.
    assert!((view.test.empirical_p - 1.0 / 201.0).abs() < 1e-12);
}

#[test]
fn null_view_rejects_bad_input() {
    assert!(null_view("likes", 1000, 100, 0).is_err());
    assert!(null_view("tweets_per_day", 1000, 0, 0).is_err());
    assert!(null_view("tweets_per_day", MAX_USERS + 1, 10, 0).is_err());
    assert!(null_view("tweets_per_day", 50, 10, 0).is_err());
}

#[test]
fn effect_sliders_drive_the_matching_signs() {
    let rows = effect_view(1.0, -1.0, 2000, 4).unwrap();
    let tpd = &rows[Variable::TweetsPerDay.index()];
    let age = &rows[Variable::DaysSinceRegistration.index()];
    assert!(tpd.low > 0.0 && tpd.high < 0.0);
    assert!(age.low < 0.0 && age.high > 0.0);
    for r in &rows {
        assert!((r.low + r.middle + r.high).abs() < 1e-9);
    }
    let flipped = effect_view(-1.0, 1.0, 2000, 4).unwrap();
    assert!(flipped[Variable::TweetsPerDay.index()].low < 0.0);
}

#[test]
fn stricter_policies_keep_fewer_users() {
    let rows = filter_view(2.5, 3000, 5).unwrap();
    let kept = |p| rows.iter().find(|r| r.policy == p).unwrap().retained;
    assert!(kept(PolicyName::Relaxed) >= kept(PolicyName::Middle));
    assert!(kept(PolicyName::Middle) >= kept(PolicyName::Strict));
    assert!(kept(PolicyName::Strict) < 3000);
    for r in &rows {
        assert_eq!(r.retained + r.rejected, 3000);
        assert_eq!(r.sizes.low + r.sizes.middle + r.sizes.high, r.retained);
    }
    assert!(filter_view(0.0, 3000, 5).is_err());
}

#[test]
fn json_wrappers_round_trip() {
    let s = factscope_demo::filter_policies(1.0, 500, 1).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
    assert_eq!(v[0]["policy"], "relaxed");
}
