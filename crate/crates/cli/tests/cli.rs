use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bngc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bngc")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn simulate(dir: &Path, n: usize, p: usize, k: usize, seed: u64) {
    ok(&bngc(&[
        "simulate", "--n", &n.to_string(), "--p", &p.to_string(), "--k", &k.to_string(), "--seed", &seed.to_string(), "--out-dir", s(dir),
    ]));
}

#[test]
fn pipeline_evaluate_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(d, 200, 50, 5, 1);
    let cfg = d.join("cfg.toml");
    fs::write(
        &cfg,
        format!(
            "input = \"{}\"\nseed = 11\n\n[output]\ndir = \"{}\"\n",
            s(&d.join("data.csv")),
            s(&d.join("run1"))
        ),
    )
    .unwrap();
    ok(&bngc(&["pipeline", "--config", s(&cfg), "--truth", s(&d.join("truth.csv"))]));
    let run1 = d.join("run1");
    for f in ["clusters.csv", "clusters.json", "graph.graphml", "manifest.json", "metrics.json", "spectrum.csv"] {
        assert!(run1.join(f).exists(), "{f}");
    }
    let report = ok(&bngc(&["evaluate", "--truth", s(&d.join("truth.csv")), "--clusters", s(&run1.join("clusters.csv"))]));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["nmi"].as_f64().unwrap() >= 0.9, "{report}");

    ok(&bngc(&["pipeline", "--rerun", s(&run1.join("manifest.json")), "--out-dir", s(&d.join("run2"))]));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(run1.join("manifest.json")).unwrap()).unwrap();
    for o in manifest["outputs"].as_array().unwrap() {
        let name = o["path"].as_str().unwrap();
        assert_eq!(fs::read(run1.join(name)).unwrap(), fs::read(d.join("run2").join(name)).unwrap(), "{name}");
    }
}

#[test]
fn staged_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(d, 120, 12, 2, 2);
    ok(&bngc(&["estimate-graph", "--data", s(&d.join("data.csv")), "--out", s(&d.join("r.csv")), "--n-iter", "300", "--burnin", "100"]));
    ok(&bngc(&["embed", "--graph", s(&d.join("r.csv")), "--out-dir", s(d)]));
    ok(&bngc(&["cluster", "--embedding", s(&d.join("embedding.csv")), "--out", s(&d.join("c.csv"))]));
    assert!(d.join("c.json").exists());
    let report = ok(&bngc(&[
        "evaluate", "--truth", s(&d.join("truth.csv")), "--clusters", s(&d.join("c.csv")), "--graph", s(&d.join("true_partial_correlations.csv")),
    ]));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["edge_density"].as_f64().is_some());
    ok(&bngc(&["cluster", "--embedding", s(&d.join("embedding.csv")), "--method", "dpmm", "--cluster-iter", "200", "--cluster-burnin", "50", "--out", s(&d.join("m.csv"))]));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = bngc(&["pipeline", "--input", s(&d.join("missing.csv")), "--out-dir", s(&d.join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("o").exists());

    fs::write(d.join("header.csv"), "a,b\n").unwrap();
    let out = bngc(&["estimate-graph", "--data", s(&d.join("header.csv")), "--out", s(&d.join("r.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no samples"));

    fs::write(d.join("bad.toml"), "input = \"x.csv\"\nunknown_key = 3\n").unwrap();
    assert_eq!(bngc(&["pipeline", "--config", s(&d.join("bad.toml"))]).status.code(), Some(3));
    fs::write(d.join("neg.toml"), "input = \"x.csv\"\n[clustering]\nmethod = \"dp-means\"\nlambda = -1.0\n").unwrap();
    assert_eq!(bngc(&["pipeline", "--config", s(&d.join("neg.toml"))]).status.code(), Some(3));
    assert_eq!(bngc(&["cluster", "--no-such-flag"]).status.code(), Some(3));
    assert_eq!(bngc(&["--help"]).status.code(), Some(0));
}

#[test]
fn print_config_roundtrips() {
    let tmp = tempfile::tempdir().unwrap();
    let text = ok(&bngc(&["pipeline", "--input", "data.csv", "--seed", "4", "--print-config"]));
    let path = tmp.path().join("c.toml");
    fs::write(&path, &text).unwrap();
    let again = ok(&bngc(&["pipeline", "--config", s(&path), "--print-config"]));
    assert_eq!(text, again);
}

#[test]
fn enrich_writes_heatmap() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut clusters = String::from("variable,label\n");
    for i in 0..12 {
        clusters.push_str(&format!("v{i},{}\n", i / 4 + 1));
    }
    fs::write(d.join("c.csv"), clusters).unwrap();
    fs::write(d.join("pw.csv"), "pathway,variable\nA,v0\nA,v1\nA,v2\nB,v5\nB,v9\nB,zz\n").unwrap();
    ok(&bngc(&["enrich", "--clusters", s(&d.join("c.csv")), "--pathways", s(&d.join("pw.csv")), "--out-dir", s(d)]));
    let heat = fs::read_to_string(d.join("enrichment_heatmap.csv")).unwrap();
    assert_eq!(heat.lines().next().unwrap(), "pathway,cluster_1,cluster_2,cluster_3");
    assert_eq!(heat.lines().count(), 3);
    let pairs: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("enriched_pairs.json")).unwrap()).unwrap();
    assert_eq!(pairs[0]["pathway"], "A");
    assert_eq!(pairs[0]["cluster"], 1);
}

#[test]
fn theorycheck_reports_pass() {
    let out = ok(&bngc(&["theorycheck", "--cases", "10"]));
    assert_eq!(out.matches("PASS").count(), 2, "{out}");
}

#[test]
fn consensus_two_sources() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    simulate(&d.join("a"), 150, 12, 2, 3);
    simulate(&d.join("b"), 150, 12, 2, 3);
    ok(&bngc(&[
        "consensus", "--data", s(&d.join("a/data.csv")), "--data", s(&d.join("b/data.csv")), "--k", "2", "--gibbs-iter", "200", "--gibbs-burnin", "50",
        "--n-iter", "300", "--burnin", "100", "--out-dir", s(&d.join("out")),
    ]));
    for f in ["global.csv", "source_1.csv", "source_2.csv", "alpha.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn bench_small_design() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = ok(&bngc(&["bench", "--n", "60", "--p", "8", "--k", "2", "--partitions", "1", "--datasets", "2", "--out-dir", s(d)]));
    assert!(out.contains("BNGC") && out.contains("k-means"));
    assert_eq!(fs::read_to_string(d.join("records.jsonl")).unwrap().lines().count(), 4);
    assert_eq!(fs::read_to_string(d.join("summary.csv")).unwrap().lines().count(), 3);
}
