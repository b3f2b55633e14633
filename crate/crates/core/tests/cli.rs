use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn optchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = optchain(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    if out.stdout.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn code(args: &[&str]) -> i32 {
    optchain(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.tan");
    ok(&["--seed", "3", "--out", s(&stream), "synth", "--n", "3000"]);
    assert!(fs::read_to_string(&stream).unwrap().starts_with("TANv1 3000\n"));

    let stats_dir = dir.path().join("stats");
    let stats = ok(&["--out", s(&stats_dir), "stats", s(&stream), "--window", "500"]);
    assert_eq!(stats["nodes"], 3000);
    for f in ["in_degree.csv", "out_degree.csv", "avg_degree.csv", "stats.json"] {
        assert!(stats_dir.join(f).exists(), "{f}");
    }

    let place_dir = dir.path().join("place");
    let placed = ok(&["--out", s(&place_dir), "place", s(&stream), "--strategy", "t2s", "--k", "4"]);
    assert_eq!(placed["total"], 3000);
    let decisions = fs::read_to_string(place_dir.join("decisions.csv")).unwrap();
    assert_eq!(decisions.lines().count(), 3001);

    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        format!(
            "dataset = \"{}\"\nk = [2, 4]\nrates = [500.0]\nstrategies = [\"random\", \"optchain\"]\n[sim]\nsample_period = 0.5\n",
            s(&stream)
        ),
    )
    .unwrap();
    let grid = dir.path().join("grid");
    ok(&["--config", s(&cfg), "--out", s(&grid), "simulate"]);
    let cell = grid.join("cells").join("optchain_k4_r500");
    for f in ["report.json", "timeseries.csv", "latency_cdf.csv", "latency_hist.csv", "config.json"] {
        assert!(cell.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(cell.join("timeseries.csv")).unwrap();
    assert!(header.starts_with("time,committed_window,queue_max,queue_min,ratio,cross_frac\n"));

    // A rerun finds every cell finished.
    let again = optchain(&["--config", s(&cfg), "--out", s(&grid), "simulate"]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("ran 0 cells, skipped 4"));

    ok(&["--out", s(&grid), "report"]);
    let summary = fs::read_to_string(grid.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(grid.join("scalability.csv").exists());
}

#[test]
fn convert_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump.csv");
    fs::write(&dump, "tx_hash,inputs,output_count\naa,,2\nbb,aa;aa,1\ncc,bb;aa;ff,1\n").unwrap();
    let out = dir.path().join("out.tan");
    let summary = ok(&["--out", s(&out), "convert", s(&dump)]);
    assert_eq!(summary["transactions"], 3);
    assert_eq!(summary["dangling_inputs"], 1);
    assert_eq!(fs::read_to_string(&out).unwrap(), "TANv1 3\n2|\n1|0|2\n1|0,1|3\n");
    let ids = fs::read_to_string(dir.path().join("out.tan.ids.csv")).unwrap();
    assert!(ids.contains("cc,2"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "k = [4]\nno_such_key = 1\n").unwrap();
    assert_eq!(code(&["--config", s(&bad_toml), "--out", s(&out), "simulate"]), 2);

    let bad_sim = dir.path().join("bad_sim.toml");
    fs::write(&bad_sim, "[sim]\nbandwidth = -1.0\n").unwrap();
    assert_eq!(code(&["--config", s(&bad_sim), "--out", s(&out), "simulate"]), 2);

    assert_eq!(code(&["--out", s(&out), "synth", "--n", "0"]), 2);

    let broken = dir.path().join("broken.tan");
    fs::write(&broken, "TANv1 2\n1|1\n1|\n").unwrap();
    assert_eq!(code(&["--out", s(&out), "stats", s(&broken)]), 3);
    assert_eq!(code(&["--out", s(&out), "place", s(&broken)]), 3);

    let missing = dir.path().join("missing.tan");
    assert_eq!(code(&["--out", s(&out), "stats", s(&missing)]), 3);

    let ok_stream = dir.path().join("ok.tan");
    fs::write(&ok_stream, "TANv1 2\n1|\n1|0\n").unwrap();
    assert_eq!(code(&["--out", s(&out), "place", s(&ok_stream), "--alpha", "2"]), 2);
}
