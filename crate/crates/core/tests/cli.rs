use std::process::{Command, Output};

fn specpert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specpert")).args(args).output().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn json(out: &Output) -> serde_json::Value {
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(specpert(&["--help"]).status.code(), Some(0));
    assert_eq!(specpert(&["--version"]).status.code(), Some(0));
    assert_eq!(specpert(&["bounds-study", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_and_input_errors_exit_one() {
    let cases: &[&[&str]] = &[
        &[],
        &["no-such-command"],
        &["bounds-study"],
        &["bounds-study", "--synthetic", "census", "--bogus"],
        &["bounds-study", "--synthetic", "census", "--input", "x.csv"],
        &["bounds-study", "--synthetic", "nope"],
        &["rank-select", "--input", "/nonexistent/file.csv"],
        &["bounds-study", "--synthetic", "census", "--levels", "0"],
        &["bounds-study", "--synthetic", "census", "--p", "69"],
    ];
    for args in cases {
        let out = specpert(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn bounds_study_json_has_schema_and_metadata() {
    let v = json(&specpert(&[
        "bounds-study", "--synthetic", "decay:base=0.7,n=12", "--p", "3", "--levels", "3", "--trials", "2", "--include-zero",
    ]));
    assert_eq!(v["schema"], 1);
    assert_eq!(v["report"], "bounds-study");
    assert_eq!(v["metadata"]["zero_level_included"], true);
    assert_eq!(v["metadata"]["p"], 3);
    assert_eq!(v["metadata"]["n"], 12);
    let levels = v["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 4);
    assert_eq!(levels[0]["level"].as_f64(), Some(0.0));
    assert!(v["violations"].as_array().unwrap().is_empty());
}

#[test]
fn csv_output_has_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let out = specpert(&[
        "metric-study", "--synthetic", "steps:n=20", "--levels", "2", "--trials", "2", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,metric,mean,std"));
    assert!(lines.count() >= 2);
}

#[test]
fn bootstrap_suite_refuses_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = specpert(&["bootstrap-suite", "--instances", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rank_select_on_fixtures() {
    let v = json(&specpert(&["rank-select", "--input", &fixture("semicolon.csv"), "--header", "--delimiter", ";"]));
    assert_eq!(v["n"], 3);
    let p = v["p"].as_u64().unwrap();
    assert!((1..=3).contains(&p));

    let v = json(&specpert(&["rank-select", "--input", &fixture("adult_tiny.csv"), "--header", "--energy", "0.5"]));
    assert_eq!(v["n"], 8);
    assert!(v["achieved_fraction"].as_f64().unwrap() >= 0.5);
}

#[test]
fn dp_release_reports_certificate() {
    let v = json(&specpert(&[
        "dp-release", "--synthetic", "diag:100,90,1,0.5", "--p", "2", "--epsilon", "1", "--delta", "1e-5", "--seed", "3",
    ]));
    assert_eq!(v["report"], "dp-release");
    assert_eq!(v["p"], 2);
    let sigma = v["noise_sigma"].as_f64().unwrap();
    assert!(sigma > 0.0);
    let predicted = v["predicted_noise_norm"].as_f64().unwrap();
    assert!((predicted - 2.0 * sigma * 2.0).abs() < 1e-9 * predicted);
    assert!(v["certificate"].is_object());
    assert!(v["released"].is_object() || v["released"].is_array());
}

#[test]
fn same_seed_same_bytes() {
    let args = ["beyond-gap", "--synthetic", "colon", "--trials", "2", "--ratios", "0.1,0.3"];
    let a = specpert(&args);
    let b = specpert(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
