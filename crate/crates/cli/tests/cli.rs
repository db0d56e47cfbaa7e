use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cmc_core::make_shard_plan;
use serde_json::Value;

fn cmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cmc(args);
    assert!(out.status.success(), "cmc {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn lines(p: &Path) -> Vec<Value> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn simulate(dir: &Path, scenario: &str, n: &str) {
    ok(&["simulate", "--scenario", scenario, "--n", n, "--seed", "3", "--out", path(dir)]);
}

#[test]
fn sim1_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = dir.path().join("run");
    simulate(&sim, "sim1", "400");
    ok(&[
        "run", "--model", "dpm", "--data", path(&sim.join("data.csv")), "--shards", "2", "--anchors", "80", "--iters",
        "800", "--burnin", "400", "--thin", "4", "--seed", "11", "--out", path(&out),
    ]);
    for f in ["shard_plan.json", "shard_1.jsonl", "shard_2.jsonl", "consensus.jsonl", "report.json", "k_histogram.csv", "estimate.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = json(&out.join("report.json"));
    let hash = report["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(report["master_seed"], 11);
    let mode = |h: &Value| -> usize {
        let h = h.as_object().unwrap();
        h.iter().max_by_key(|(_, c)| c.as_u64().unwrap()).unwrap().0.parse().unwrap()
    };
    let chains = report["chains"].as_array().unwrap();
    assert_eq!(chains.len(), 2);
    let shard_mode = chains.iter().map(|c| mode(&c["k_histogram"])).max().unwrap();
    assert!((3..=5).contains(&shard_mode));
    assert!(mode(&report["k_histogram"]) >= shard_mode);
    assert_eq!(report["k_hat"].as_u64().unwrap() as usize, mode(&report["k_histogram"]));

    let draws = lines(&out.join("consensus.jsonl"));
    assert_eq!(draws.len(), 100);
    for d in &draws {
        assert_eq!(d["config_hash"], hash.as_str());
        assert_eq!(d["master_seed"], 11);
        assert_eq!(d["K"].as_u64().unwrap() as usize, d["subsets"].as_array().unwrap().len());
        assert!(d["provenance"].is_array());
    }
    assert_eq!(json(&out.join("shard_plan.json"))["config_hash"], hash.as_str());
    assert_eq!(json(&out.join("estimate.json"))["config_hash"], hash.as_str());

    let scored = ok(&["score", "--estimate", path(&out.join("estimate.json")), "--truth", path(&sim.join("truth.json"))]);
    let scores: Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert!(scores["e_A"].as_f64().unwrap() < 0.2, "{scores}");
    assert!(scores["nmi"].as_f64().unwrap() > 0.6, "{scores}");
}

#[test]
fn rerun_from_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim2", "120");
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"model":"fa","data":"data.csv","shards":2,"anchor_frac":0.25,"iters":300,"burnin":150,"thin":3,"seed":4,
            "sampler":{"tempering":null}}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", "--config", path(&cfg), "--out", path(&a)]);
    ok(&["run", "--config", path(&cfg), "--out", path(&b), "--jobs", "1"]);
    for f in ["consensus.jsonl", "shard_1.jsonl", "shard_2.jsonl", "estimate.json", "shard_plan.json", "k_histogram.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let report = json(&a.join("report.json"));
    assert!(report["sampler"]["tempering"].is_null());
    assert_eq!(report["sampler"]["schedule"]["iterations"], 300);
    assert_eq!(report["anchors"], 30);

    // A flag overrides the file and changes the hash.
    let c = dir.path().join("c");
    ok(&["run", "--config", path(&cfg), "--out", path(&c), "--seed", "5"]);
    assert_ne!(json(&c.join("report.json"))["config_hash"], report["config_hash"]);
}

#[test]
fn single_shard_consensus_is_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim1", "80");
    let out = dir.path().join("run");
    ok(&[
        "run", "--model", "dpm", "--data", path(&dir.path().join("data.csv")), "--shards", "1", "--anchors", "20",
        "--iters", "200", "--burnin", "100", "--thin", "2", "--out", path(&out),
    ]);
    let chain = lines(&out.join("shard_1.jsonl"));
    let cons = lines(&out.join("consensus.jsonl"));
    assert_eq!(chain.len(), cons.len());
    for (a, b) in chain.iter().zip(&cons) {
        assert_eq!(a["subsets"], b["subsets"]);
        assert_eq!(a["params"], b["params"]);
    }
}

#[test]
fn scoring_examples() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim3", "60");
    let truth = dir.path().join("truth.json");
    let s: Value = serde_json::from_slice(&ok(&["score", "--estimate", path(&truth), "--truth", path(&truth)]).stdout).unwrap();
    assert_eq!(s["e_A"], 0.0);
    assert_eq!(s["e_theta"], 0.0);

    let mut shuffled = json(&truth);
    shuffled["subsets"].as_array_mut().unwrap().reverse();
    shuffled["params"].as_array_mut().unwrap().reverse();
    let est = dir.path().join("est.json");
    fs::write(&est, shuffled.to_string()).unwrap();
    let s: Value = serde_json::from_slice(&ok(&["score", "--estimate", path(&est), "--truth", path(&truth)]).stdout).unwrap();
    assert_eq!(s["e_A"], 0.0);
    assert_eq!(s["e_theta"], 0.0);

    let other = dir.path().join("other");
    simulate(&other, "sim3", "50");
    let out = cmc(&["score", "--estimate", path(&other.join("truth.json")), "--truth", path(&truth)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("observations"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmc(&["simulate", "--scenario", "sim1", "--n", "2", "--out", path(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(!cmc(&["simulate", "--scenario", "sim9", "--out", path(dir.path())]).status.success());

    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = cmc(&["simulate", "--scenario", "sim1", "--out", path(&blocker.join("sub"))]);
    assert!(!out.status.success());

    let out = cmc(&["run", "--model", "xyz", "--data", "d.csv"]);
    assert!(!out.status.success());
    let out = cmc(&["run", "--model", "dpm", "--data", path(&dir.path().join("missing.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn shard_failure_names_the_shard() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim3", "40");
    // Pin a row held only by worker shard 1; shard 2 cannot honour it.
    let plan = make_shard_plan(40, 2, 8, 7).unwrap();
    let row = plan.worker(0).iter().next().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"model":"dfa","data":"data.csv","shards":2,"anchors":8,"iters":20,"burnin":10,"thin":1,"seed":7,
                "sampler":{{"fixed":{{"a":[{{"row":{row},"feature":1,"value":1}}]}}}}}}"#
        ),
    )
    .unwrap();
    let out = cmc(&["run", "--config", path(&cfg), "--out", path(&dir.path().join("run"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("shard 2 failed"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn diagnose_sweeps_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "sim1", "120");
    let out = dir.path().join("diag");
    ok(&[
        "diagnose", "--model", "dpm", "--data", path(&dir.path().join("data.csv")), "--shards", "3", "--anchors", "30",
        "--iters", "300", "--burnin", "150", "--thin", "3", "--reps", "2", "--epsilon-sweep", "0.05,0.1,0.15", "--out",
        path(&out),
    ]);
    let report = json(&out.join("diagnostic.json"));
    let sweep = report["sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 3);
    assert_eq!(sweep[1]["epsilon"], 0.1);
    for s in sweep {
        assert_eq!(s["values"].as_array().unwrap().len(), 2);
        let m = s["mean"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&m));
    }
    assert_eq!(report["metric"], "nmi");
}
