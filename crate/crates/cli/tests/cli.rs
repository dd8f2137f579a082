use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phishpanel"))
}

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut c = bin();
    c.args(args);
    if let Some(t) = threads {
        c.env("RAYON_NUM_THREADS", t.to_string());
    }
    c.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args, None);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn simulated(dir: &TempDir, n: usize, seed: u64) -> PathBuf {
    let path = dir.path().join(format!("panel_{n}_{seed}.csv"));
    ok(&["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", path.to_str().unwrap()]);
    path
}

fn read(path: &str) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_is_reproducible_from_seed() {
    let dir = TempDir::new().unwrap();
    let a = p(dir.path(), "a.csv");
    let b = p(dir.path(), "b.csv");
    let c = p(dir.path(), "c.csv");
    ok(&["simulate", "--n", "300", "--seed", "11", "--out", &a]);
    ok(&["simulate", "--n", "300", "--seed", "11", "--out", &b]);
    ok(&["simulate", "--n", "300", "--seed", "12", "--out", &c]);
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let panel = simulated(&dir, 600, 5);
    let panel = panel.to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["estimate", "--estimator", "msm-cre"],
        vec!["estimate", "--estimator", "fe-lpm", "--format", "json"],
        vec!["progression"],
        vec!["suite", "--suite", "similarity"],
        vec!["weights"],
    ];
    for (k, case) in cases.iter().enumerate() {
        let mut texts = Vec::new();
        for threads in [1, 4] {
            let out = p(dir.path(), &format!("out_{k}_{threads}"));
            let mut args = case.clone();
            args.extend(["--panel", panel, "--out", &out]);
            let o = run(&args, Some(threads));
            assert!(o.status.success(), "{case:?}: {}", String::from_utf8_lossy(&o.stderr));
            texts.push(read(&out));
        }
        assert_eq!(texts[0], texts[1], "{case:?} differs across thread counts");
    }
}

#[test]
fn header_hash_ignores_output_location_but_tracks_input_content() {
    let dir = TempDir::new().unwrap();
    let panel = simulated(&dir, 200, 1);
    let other = simulated(&dir, 200, 2);
    let hash = |panel: &Path, out: &str| {
        ok(&["weights", "--panel", panel.to_str().unwrap(), "--out", out]);
        read(out).lines().find(|l| l.starts_with("# config_hash")).unwrap().to_string()
    };
    let h1 = hash(&panel, &p(dir.path(), "w1.csv"));
    let h2 = hash(&panel, &p(dir.path(), "w2.csv"));
    let h3 = hash(&other, &p(dir.path(), "w3.csv"));
    assert_eq!(h1, h2);
    assert_ne!(h1, h3);
}

#[test]
fn json_envelope_carries_schema_and_header() {
    let dir = TempDir::new().unwrap();
    let panel = simulated(&dir, 300, 4);
    let out = p(dir.path(), "e.json");
    ok(&[
        "estimate",
        "--panel",
        panel.to_str().unwrap(),
        "--estimator",
        "cre-probit",
        "--format",
        "json",
        "--out",
        &out,
    ]);
    let v: serde_json::Value = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["header"]["subcommand"], "estimate");
    assert!(v["result"]["apes"][0]["value"].is_number());
    assert!(v["result"]["fit"]["log_pseudolikelihood"].is_number());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["estimate", "--estimator", "nope", "--panel", "x", "--out", "y"], None).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(run(&["weights", "--out", "y"], None).status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_one_and_structured_message() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "o.csv");

    let o = run(&["ingest", "--panel", &p(dir.path(), "missing.csv"), "--out", &out], None);
    assert_eq!(o.status.code(), Some(1));
    let msg: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(msg["error"], "path");
    assert!(!Path::new(&out).exists(), "nothing is written when a path check fails");

    let bad = p(dir.path(), "bad.csv");
    std::fs::write(&bad, "employee_id,campaign_id\nE1,1\n").unwrap();
    let o = run(&["ingest", "--panel", &bad, "--out", &out], None);
    assert_eq!(o.status.code(), Some(1));
    let msg: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(msg["error"], "parse");

    let panel = simulated(&dir, 100, 3);
    let o =
        run(&["weights", "--panel", panel.to_str().unwrap(), "--lower", "60", "--upper", "40", "--out", &out], None);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["weights", "--panel", panel.to_str().unwrap(), "--out", "/definitely/not/here/w.csv"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn similarity_writes_matrix_and_ranked_pairs() {
    let dir = TempDir::new().unwrap();
    let m = p(dir.path(), "m.csv");
    let t = p(dir.path(), "t.csv");
    ok(&["similarity", "--metric", "smc", "--layer", "education", "--top", "5", "--out", &m, "--out-top", &t]);
    let body: Vec<String> = read(&m).lines().filter(|l| !l.starts_with('#')).map(String::from).collect();
    assert_eq!(body.len(), 18);
    let ranked: Vec<String> = read(&t).lines().filter(|l| !l.starts_with('#')).map(String::from).collect();
    assert_eq!(ranked.len(), 6);
}

#[test]
fn ingest_round_trips_exposures() {
    let dir = TempDir::new().unwrap();
    let panel = simulated(&dir, 150, 8);
    let tr = p(dir.path(), "tr.csv");
    let ex = p(dir.path(), "ex.csv");
    let o = ok(&["ingest", "--panel", panel.to_str().unwrap(), "--out", &tr, "--out-exposures", &ex]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("safe-handling identity holds"));
    let strip = |s: String| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(read(panel.to_str().unwrap())), strip(read(&ex)));
}
