use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketch-sfa")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn help_documents_every_flag() {
    let cases: &[(&[&str], &[&str])] = &[
        (&["gen-data"], &["--kind", "--n", "--d", "--classes", "--rank", "--noise", "--T", "--seed", "--out"]),
        (&["run", "exact"], &["--in", "--labels", "--J", "--seed", "--config", "--out"]),
        (&["run", "qi"], &["--in", "--J", "--eps-target", "--spectra", "--query", "--sample-row", "--draws", "--config"]),
        (&["run", "verify"], &["--suite", "--seed", "--out"]),
        (&["run", "bench"], &["--n-grid", "--d", "--J", "--eps-target", "--seed", "--out"]),
        (&["replay"], &["--manifest", "--out"]),
    ];
    for (cmd, flags) in cases {
        let mut args = cmd.to_vec();
        args.push("--help");
        let o = run(&args);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{cmd:?} --help lacks {f}");
        }
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    for args in [&["gen-data", "--kind", "blobs", "--out", "x", "--colour"][..], &["run", "verify", "--out", "x", "--fast"], &["frobnicate"]] {
        assert_eq!(code(&run(args)), 2, "{args:?}");
    }
    assert_eq!(code(&run(&["run", "verify", "--suite", "nonsense", "--out", "x"])), 2);
}

#[test]
fn generator_parameters_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    assert_eq!(code(&run(&["gen-data", "--kind", "blobs", "--classes", "1", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["gen-data", "--kind", "low-rank", "--rank", "9", "--d", "8", "--out", s(&out)])), 2);
}

#[test]
fn blobs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["gen-data", "--kind", "blobs", "--classes", "3", "--n", "3000", "--d", "8", "--seed", "7", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let data = std::fs::read(a.join("data.csv")).unwrap();
    assert_eq!(data, std::fs::read(b.join("data.csv")).unwrap());
    let rows = read_csv(&a.join("data.csv"));
    assert_eq!(rows.len(), 3001);
    assert_eq!(rows[0].len(), 9);
    assert_eq!(rows[0][8], "label");
    assert_eq!(json(&a.join("meta.json"))["class_means"].as_array().unwrap().len(), 3);
}

#[test]
fn low_rank_metadata_records_singular_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lr");
    let o = run(&["gen-data", "--kind", "low-rank", "--n", "200", "--d", "10", "--rank", "5", "--noise", "1e-3", "--scale", "10", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let sigma: Vec<f64> = json(&out.join("meta.json"))["singular_values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // σ_i² ∝ rank − i with σ₁ = scale.
    let want: Vec<f64> = (0..5).map(|i| 10.0 * ((5 - i) as f64 / 5.0).sqrt()).collect();
    assert_eq!(sigma.len(), 5);
    for (s, w) in sigma.iter().zip(&want) {
        assert!((s - w).abs() < 1e-12);
    }
}

#[test]
fn toy_signal_has_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    assert_eq!(code(&run(&["gen-data", "--kind", "wiskott-signal", "--T", "4000", "--out", s(&out)])), 0);
    let rows = read_csv(&out.join("data.csv"));
    assert_eq!(rows.len(), 4001);
    assert_eq!(rows[0], vec!["x0", "x1"]);
}

#[test]
fn exact_and_sampling_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g");
    assert_eq!(code(&run(&["gen-data", "--kind", "blobs", "--n", "4096", "--d", "16", "--seed", "1", "--out", s(&data)])), 0);
    let input = data.join("data.csv");

    let ex = dir.path().join("exact");
    let o = run(&["run", "exact", "--in", s(&input), "--labels", "--J", "2", "--out", s(&ex)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let result = json(&ex.join("result.json"));
    let delta = result["result"]["delta"].as_array().unwrap();
    assert_eq!(delta.len(), 2);
    assert!(delta[0].as_f64().unwrap() <= delta[1].as_f64().unwrap());
    assert_eq!(read_csv(&ex.join("features.csv"))[0], vec!["y0", "y1", "label"]);

    let qi = dir.path().join("qi");
    let o = run(&[
        "run", "qi", "--in", s(&input), "--labels", "--J", "2", "--eps-target", "0.2", "--query", "5", "1",
        "--sample-row", "5", "--draws", "100000", "--out", s(&qi),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let samples = read_csv(&qi.join("samples.csv"));
    assert_eq!(samples.len(), 3);
    let mut total = 0;
    for row in &samples[1..] {
        let (freq, prob): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
        assert!((freq - prob).abs() < 0.01, "{row:?}");
        total += row[1].parse::<u64>().unwrap();
    }
    assert_eq!(total, 100_000);
    let q = read_csv(&qi.join("queries.csv"));
    let (value, estimate): (f64, f64) = (q[1][2].parse().unwrap(), q[1][3].parse().unwrap());
    assert!(value.is_finite() && estimate.is_finite());
    let manifest = json(&qi.join("manifest.json"));
    assert!(manifest["ledger"]["x_entry_reads"].as_u64().unwrap() < 4096 * 16 / 4);

    // Out-of-range queries are rejected before any work is done.
    let o = run(&["run", "qi", "--in", s(&input), "--labels", "--query", "5", "7", "--out", s(&qi)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    assert_eq!(code(&run(&["run", "exact", "--in", s(&missing), "--out", s(dir.path())])), 1);
    let data = dir.path().join("w");
    assert_eq!(code(&run(&["gen-data", "--kind", "wiskott-signal", "--T", "500", "--out", s(&data)])), 0);
    // Two input columns cannot give three features.
    let o = run(&["run", "exact", "--in", s(&data.join("data.csv")), "--J", "3", "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_files_are_schema_checked() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g");
    assert_eq!(code(&run(&["gen-data", "--kind", "blobs", "--n", "4096", "--d", "16", "--out", s(&data)])), 0);
    let input = data.join("data.csv");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[step2]\nepsilon = 0.1\n").unwrap();
    let o = run(&["run", "qi", "--in", s(&input), "--labels", "--config", s(&bad), "--out", s(&dir.path().join("q"))]);
    assert_eq!(code(&o), 2);

    let good = dir.path().join("good.toml");
    std::fs::write(&good, "[run]\nseed = 4\nj = 2\n\n[step4]\ndelta = 0.05\n\n[sizing]\nrow_constant = 0.2\n").unwrap();
    let out = dir.path().join("q");
    let o = run(&["run", "qi", "--in", s(&input), "--labels", "--config", s(&good), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = json(&out.join("model.json"));
    assert_eq!(model["params"]["delta4"].as_f64(), Some(0.05));
    assert_eq!(model["params"]["sizing"]["row_constant"].as_f64(), Some(0.2));
    assert_eq!(json(&out.join("manifest.json"))["seed"].as_u64(), Some(4));
}

#[test]
fn verification_outcomes_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(&["run", "verify", "--suite", "exact,davis-kahan", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let lines = std::fs::read_to_string(out.join("reports.jsonl")).unwrap();
    assert!(lines.lines().count() >= 5);

    // A tampered manifest no longer matches its replay.
    let manifest = out.join("manifest.json");
    let mut m = json(&manifest);
    m["outputs"][0]["sha256"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&manifest, serde_json::to_string(&m).unwrap()).unwrap();
    let o = run(&["replay", "--manifest", s(&manifest), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("w");
    assert_eq!(code(&run(&["gen-data", "--kind", "wiskott-signal", "--T", "300", "--out", s(&data)])), 0);
    let out = dir.path().join("e");
    assert_eq!(code(&run(&["run", "exact", "--in", s(&data.join("data.csv")), "--expand", "--J", "1", "--out", s(&out)])), 0);
    std::fs::write(data.join("data.csv"), "x0,x1\n1,2\n3,4\n").unwrap();
    let o = run(&["replay", "--manifest", s(&out.join("manifest.json"))]);
    assert_eq!(code(&o), 1);
}
