use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use humbr::records::{self, ResultRecord};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn humbr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_humbr"))
        .args(args)
        .env("HUMBR_STUB_KEY_A", "sk-test-do-not-leak-7f3a")
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout is JSON lines"))
        .collect()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn select_fixture_at_zero_threshold() {
    let out = humbr(&["select", path(&fixture("pool_aab.jsonl")), "--tau", "0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = lines(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["verdict"], "selected");
    assert_eq!(recs[0]["selected_index"], 0);
    assert_eq!(recs[0]["selected_text"], "paris is the capital of france");
    assert_eq!(recs[0]["scores"], serde_json::json!([0.5, 0.5, 0.0]));
    assert_eq!(recs[0]["tau"], 0.0);
    assert_eq!(recs[0]["alpha"], 0.6);
}

#[test]
fn select_fixture_abstains_at_default_threshold() {
    let out = humbr(&["select", path(&fixture("pool_aab.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    let recs = lines(&out);
    assert_eq!(recs[0]["verdict"], "abstain");
    assert!(recs[0]["selected_index"].is_null());
    assert_eq!(recs[0]["tau"], 0.8);
}

#[test]
fn select_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = humbr(&["select", path(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
}

#[test]
fn select_reports_malformed_line_and_skips_pool() {
    let out = humbr(&["select", path(&fixture("pools_malformed.jsonl")), "--tau", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let recs = lines(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["prompt_id"], "good");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
    assert!(stderr.contains("bad"), "{stderr}");
}

#[test]
fn select_single_candidate_pool_is_an_error() {
    let out = humbr(&["select", path(&fixture("pool_single.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn select_missing_file_and_bad_flags() {
    assert_eq!(humbr(&["select", "/nonexistent/pools.jsonl"]).status.code(), Some(1));
    let fx = fixture("pool_aab.jsonl");
    assert_eq!(humbr(&["select", path(&fx), "--alpha", "1.5"]).status.code(), Some(1));
    assert_eq!(humbr(&["select", path(&fx), "--tau", "-0.1"]).status.code(), Some(1));
}

#[test]
fn select_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("results.jsonl");
    let out = humbr(&["select", path(&fixture("pools.jsonl")), "--tau", "0", "--output", path(&dest)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let recs: Vec<ResultRecord> = records::read_lines(std::io::BufReader::new(std::fs::File::open(&dest).unwrap())).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].prompt_id, "q1");
    assert_eq!(recs[0].selected_index, Some(0));
    assert_eq!(recs[1].n, 3);
}

#[test]
fn production_preset_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("humbr.toml");
    std::fs::write(&cfg, "preset = \"production\"\ntau = 0.0\n").unwrap();
    let out = humbr(&["select", path(&fixture("pool_aab.jsonl")), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["alpha"], 0.65);
    let out = humbr(&["select", path(&fixture("pool_aab.jsonl")), "--config", path(&cfg), "--tau", "0.8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_identical_catalog_design_bound() {
    let cat = fixture("catalog_identical.jsonl");
    let out = humbr(&[
        "plan", "--catalog", path(&cat), "--tau", "0.7", "--epsilon", "1e-4", "--bound", "hoeffding", "--max-m", "4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rec = &lines(&out)[0];
    assert_eq!(rec["status"], "feasible");
    assert_eq!(rec["models"].as_array().unwrap().len(), 4);
    assert_eq!(rec["samples_per_model"], 4);
    assert_eq!(rec["total_cost"], 16.0);
    assert!(rec["p_fail"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn plan_identical_catalog_exact() {
    let cat = fixture("catalog_identical.jsonl");
    let out = humbr(&["plan", "--catalog", path(&cat), "--tau", "0.7", "--epsilon", "1e-4"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    assert_eq!(rec["total_samples"], 6);
    assert_eq!(rec["bound_source"], "exact");
}

#[test]
fn plan_loose_tolerance_single_call() {
    let cat = fixture("catalog_identical.jsonl");
    let out = humbr(&["plan", "--catalog", path(&cat), "--tau", "0.7", "--epsilon", "0.99"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    assert_eq!(rec["models"].as_array().unwrap().len(), 1);
    assert_eq!(rec["samples_per_model"], 1);
}

#[test]
fn plan_infeasible_coin_flip() {
    let cat = fixture("catalog_coinflip.jsonl");
    let out = humbr(&["plan", "--catalog", path(&cat), "--tau", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(lines(&out)[0]["status"], "infeasible");
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn plan_without_catalog_fails() {
    assert_eq!(humbr(&["plan", "--tau", "0.7"]).status.code(), Some(1));
}

#[test]
fn risk_exact_illustrative_example() {
    let base = ["risk-exact", "--models", "4", "--samples", "4", "--mu", "0.1", "--tau", "0.7"];
    let near_independent = humbr(&[&base[..], &["--rho", "1e-10"]].concat());
    assert_eq!(near_independent.status.code(), Some(0));
    let p = lines(&near_independent)[0]["exact"].as_f64().unwrap();
    assert!((1e-9..=1e-7).contains(&p), "{p}");

    let correlated = humbr(&[&base[..], &["--rho", "0.5"]].concat());
    let rec = &lines(&correlated)[0];
    let p = rec["exact"].as_f64().unwrap();
    assert!((1e-5..=1e-3).contains(&p), "{p}");
    assert!(rec["hoeffding"].as_f64().unwrap() >= p);
    assert!(rec["monte_carlo"].is_null());
}

#[test]
fn risk_exact_heterogeneous_profiles() {
    let out = humbr(&[
        "risk-exact", "--tau", "0.7", "--profile", "0.1,0.0,4", "--profile", "0.2,0.3,2",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    assert_eq!(rec["n"], 6);
    assert_eq!(rec["profiles"].as_array().unwrap().len(), 2);
    assert_eq!(humbr(&["risk-exact", "--profile", "0.1,0.0"]).status.code(), Some(1));
}

#[test]
fn simulate_is_seed_reproducible() {
    let args = [
        "simulate", "--models", "4", "--samples", "4", "--mu", "0.1", "--rho", "0.5", "--tau", "0.7", "--trials",
        "20000", "--seed", "42",
    ];
    let a = humbr(&args);
    let b = humbr(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let rec = &lines(&a)[0];
    assert_eq!(rec["monte_carlo"]["trials"], 20000);
    assert_eq!(rec["monte_carlo"]["seed"], 42);
    assert!(rec["exact"].as_f64().is_some());
    assert_eq!(humbr(&["simulate", "--trials", "10"]).status.code(), Some(1));
}

#[test]
fn generate_then_select_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pools = dir.path().join("pools.jsonl");
    let cfg = fixture("stub.toml");
    let prompts = fixture("prompts.jsonl");
    let gen = humbr(&["generate", path(&prompts), "--config", path(&cfg), "--output", path(&pools)]);
    assert_eq!(gen.status.code(), Some(0), "{}", String::from_utf8_lossy(&gen.stderr));
    let first = std::fs::read(&pools).unwrap();
    // 4 default rungs for det-a plus 2 configured rungs for det-b, per prompt
    assert_eq!(first.iter().filter(|b| **b == b'\n').count(), 12);

    let again = humbr(&["generate", path(&prompts), "--config", path(&cfg)]);
    assert!(again.stdout == first, "regenerated pools differ");

    let sel = humbr(&["select", path(&pools), "--config", path(&cfg)]);
    assert_eq!(sel.status.code(), Some(0));
    let recs = lines(&sel);
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["prompt_id"], "p1");
    assert_eq!(recs[0]["n"], 6);
    let sel_again = humbr(&["select", path(&pools), "--config", path(&cfg)]);
    assert_eq!(sel.stdout, sel_again.stdout);

    let first = String::from_utf8(first).unwrap();
    let differs = (12..20).any(|seed| {
        let s = seed.to_string();
        let out = humbr(&["generate", path(&prompts), "--config", path(&cfg), "--seed", &s]);
        String::from_utf8(out.stdout).unwrap() != first
    });
    assert!(differs, "seed has no effect on stub output");
}

#[test]
fn generate_reports_failed_providers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fail.toml");
    std::fs::write(
        &cfg,
        r#"
        [[providers]]
        id = "down"
        endpoint = "stub:fail"
        model = "x"
        api = "stub"
        max_retries = 0
        "#,
    )
    .unwrap();
    let out = humbr(&["generate", path(&fixture("prompts.jsonl")), "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed"));

    assert_eq!(humbr(&["generate", path(&fixture("prompts.jsonl"))]).status.code(), Some(1));
}

#[test]
fn pareto_frontier_is_monotone() {
    let out = humbr(&[
        "pareto", "--catalog", path(&fixture("catalog_mixed.jsonl")), "--tau", "0.7", "--budgets", "1,2,4,8,16,32",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let recs = lines(&out);
    assert_eq!(recs.len(), 6);
    let mut last = f64::INFINITY;
    for r in &recs {
        let p = r["p_fail"].as_f64().unwrap_or(1.0);
        assert!(p <= last, "{recs:?}");
        last = p;
    }
}

#[test]
fn monitor_fixture_results() {
    let out = humbr(&["monitor", path(&fixture("results.jsonl"))]);
    assert_eq!(out.status.code(), Some(0));
    let report = &lines(&out)[0];
    let a = &report["models"]["a"];
    assert_eq!(a["samples"], 4);
    assert_eq!(a["pools"], 2);
    assert!((a["mu_hat"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!((a["divergence"].as_f64().unwrap() - 0.45).abs() < 1e-12);
    assert_eq!(a["rho_hat"], 0.0);
    let b = &report["models"]["b"];
    assert!((b["mu_hat"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(b["rho_hat"].is_null());
    assert_eq!(report["insufficient_data"], serde_json::json!(["b"]));
}

#[test]
fn config_validate() {
    let ok = humbr(&["config", "validate", "--config", path(&fixture("stub.toml"))]);
    assert_eq!(ok.status.code(), Some(0));
    let rec = &lines(&ok)[0];
    assert_eq!(rec["status"], "ok");
    assert_eq!(rec["seed"], 11);
    assert_eq!(rec["providers"], serde_json::json!(["det-a", "det-b"]));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "tua = 0.5\n").unwrap();
    assert_eq!(humbr(&["config", "validate", "--config", path(&bad)]).status.code(), Some(1));
}

#[test]
fn fixtures_round_trip_byte_identical() {
    for name in ["pool_aab.jsonl", "pools.jsonl"] {
        let text = std::fs::read_to_string(fixture(name)).unwrap();
        let parsed = records::read_pools(text.as_bytes()).unwrap();
        assert!(parsed.errors.is_empty());
        let mut out = Vec::new();
        for pool in &parsed.pools {
            records::write_pool(&mut out, pool).unwrap();
        }
        assert_eq!(String::from_utf8(out).unwrap(), text, "{name}");
    }
    let text = std::fs::read_to_string(fixture("results.jsonl")).unwrap();
    let recs: Vec<ResultRecord> = records::read_lines(text.as_bytes()).unwrap();
    let out: String = recs.iter().map(|r| records::to_line(r) + "\n").collect();
    assert_eq!(out, text);
}

#[test]
fn select_output_round_trips() {
    let out = humbr(&["select", path(&fixture("pools.jsonl")), "--tau", "0"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let recs: Vec<ResultRecord> = records::read_lines(text.as_bytes()).unwrap();
    let again: String = recs.iter().map(|r| records::to_line(r) + "\n").collect();
    assert_eq!(again, text);
}
