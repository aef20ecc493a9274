//! Black-box tests of the `upfd` binary: container building with
//! hand-traced cascades, error reporting with line numbers, synthetic
//! generation determinism, and report emission.

use std::path::Path;
use std::process::{Command, Output};

use upfd_core::dataio::load_dataset;

fn upfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upfd"))
        .args(args)
        .output()
        .expect("spawning upfd")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "upfd failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const THREE_RECORDS: &str = r#"{"news_id":"n1","source_id":"src","source_followers":100,"publish_time":1,"label":1}
{"user_id":"u1","retweet_time":2,"follower_count":10,"followee_ids":["src"]}
{"user_id":"u2","retweet_time":3,"follower_count":20,"followee_ids":["u1"]}
{"user_id":"u3","retweet_time":4,"follower_count":30,"followee_ids":[]}
"#;

#[test]
fn build_graph_three_record_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    std::fs::write(&log, THREE_RECORDS).unwrap();
    let out_dir = dir.path().join("container");
    let out = upfd(&["build-graph", log.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_ok(&out);

    let corpus = load_dataset(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(corpus.graphs.len(), 1);
    assert_eq!(corpus.graphs[0].node_count(), 4);
    assert_eq!(corpus.graphs[0].edges.len(), 3);
    assert_eq!(corpus.graphs[0].label, 1);
}

#[test]
fn malformed_line_reports_line_number_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    std::fs::write(
        &log,
        "{\"news_id\":\"n1\",\"source_id\":\"src\",\"source_followers\":1,\"publish_time\":1}\nnot json at all\n",
    )
    .unwrap();
    let out_dir = dir.path().join("container");
    let out = upfd(&["build-graph", log.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":2"), "line number missing from: {stderr}");
}

/// Hand-traced R2 scenario: nobody follows anybody, so every retweeter
/// attaches to the earlier participant with the most followers.
#[test]
fn r2_follower_scenario_matches_hand_trace() {
    let fixture = r#"{"news_id":"n1","source_id":"src","source_followers":5,"publish_time":1}
{"user_id":"u1","retweet_time":2,"follower_count":50}
{"user_id":"u2","retweet_time":3,"follower_count":10}
{"user_id":"u3","retweet_time":4,"follower_count":60}
"#;
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    std::fs::write(&log, fixture).unwrap();
    let out_dir = dir.path().join("container");
    let out = upfd(&["build-graph", log.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_ok(&out);

    let corpus = load_dataset(&out_dir.join("manifest.json")).unwrap();
    // u1 has only the source before it; u2 and u3 both pick u1 (50
    // followers beats src's 5 and u2's 10).
    assert_eq!(corpus.graphs[0].edges, vec![(0, 1), (1, 2), (1, 3)]);
}

#[test]
fn gen_synthetic_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = upfd(&[
            "gen-synthetic",
            "--out",
            out_dir.to_str().unwrap(),
            "--num-graphs",
            "40",
            "--delta-feat",
            "1.5",
            "--seed",
            "9",
        ]);
        assert_ok(&out);
    }
    for name in ["graphs.ndjson", "manifest.json", "features_wordvec.bin", "features_profile.bin"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between identical runs");
    }
}

fn gen_planted(dir: &Path, num_graphs: u32, delta_feat: f64) -> std::path::PathBuf {
    let out_dir = dir.join("corpus");
    let out = upfd(&[
        "gen-synthetic",
        "--out",
        out_dir.to_str().unwrap(),
        "--num-graphs",
        &num_graphs.to_string(),
        "--node-count-mean",
        "15",
        "--delta-feat",
        &delta_feat.to_string(),
        "--seed",
        "5",
    ]);
    assert_ok(&out);
    out_dir.join("manifest.json")
}

#[test]
fn train_on_planted_corpus_writes_confident_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_planted(dir.path(), 400, 4.0);
    let report_dir = dir.path().join("reports");
    let out = upfd(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
        "--seeds",
        "0",
        "--epochs",
        "60",
        "--patience",
        "30",
        "--batch-size",
        "16",
        "--jobs",
        "2",
        "--quiet",
    ]);
    assert_ok(&out);

    let json = std::fs::read_to_string(report_dir.join("train_report.json")).unwrap();
    let reports: serde_json::Value = serde_json::from_str(&json).unwrap();
    let acc = reports[0]["mean_acc"].as_f64().unwrap();
    assert!(acc >= 0.95, "planted-corpus accuracy too low: {acc}");
    assert!(report_dir.join("train_report.txt").exists());
}

#[test]
fn ablate_emits_four_variant_rows_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_planted(dir.path(), 60, 2.0);
    let report_dir = dir.path().join("reports");
    let out = upfd(&[
        "ablate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
        "--seeds",
        "0",
        "--epochs",
        "3",
        "--batch-size",
        "16",
        "--quiet",
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let variant_rows = stdout.lines().filter(|l| l.starts_with("variant:")).count();
    assert_eq!(variant_rows, 4, "expected 4 variant rows in:\n{stdout}");

    // The stored JSON renders back to the identical table.
    let json_path = report_dir.join("ablation_report.json");
    let rendered = upfd(&["report", json_path.to_str().unwrap()]);
    assert_ok(&rendered);
    let table = std::fs::read_to_string(report_dir.join("ablation_report.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&rendered.stdout), table);
}

#[test]
fn stats_prints_corpus_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_planted(dir.path(), 25, 0.0);
    let out = upfd(&["stats", "--manifest", manifest.to_str().unwrap()]);
    assert_ok(&out);
    let stats: serde_json::Value =
        serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["graphs"].as_u64(), Some(25));
    let nodes = stats["total_nodes"].as_u64().unwrap();
    let edges = stats["total_edges"].as_u64().unwrap();
    assert_eq!(edges, nodes - 25);
}
