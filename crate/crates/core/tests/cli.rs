use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fragsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragsim"))
        .args(args)
        .env_remove("FRAGSIM_OUTDIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dump(dir: &Path) -> String {
    let path = dir.join("presets.json");
    let o = fragsim(&["dump-presets", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    path.to_str().unwrap().to_owned()
}

#[test]
fn dumped_presets_validate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dump(dir.path());
    let o = fragsim(&["validate", &path]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok"));
}

#[test]
fn syntax_errors_report_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"engine\": {\"engine\": \"redis\"},\n  \"seed\": ,\n}\n").unwrap();
    let o = fragsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn protected_node_in_removal_order_is_anchored() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("resize.json");
    let doc = r#"{
  "topology": {"preset": "paper-table3"},
  "engine": {"engine": "cassandra"},
  "scenario": {
    "kind": "resize",
    "removal_order": ["Singapore", "Melbourne"]
  }
}
"#;
    fs::write(&path, doc).unwrap();
    let o = fragsim(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("Melbourne"), "{err}");
    assert!(err.contains(":6:"), "{err}");
}

#[test]
fn unknown_override_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dump(dir.path());
    let o = fragsim(&["validate", &path, "--set", "scenario.no_such_key=3"]);
    assert_eq!(code(&o), 1);
    let o = fragsim(&["validate", &path, "--set", "scenario.dwell_ms=30000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&fragsim(&["run", "--engine", "oracle", "--outdir", out])), 1);
    assert_eq!(code(&fragsim(&["run", "--scenario", "nope", "--outdir", out])), 1);
    assert_eq!(code(&fragsim(&["run", "--preset", "other", "--outdir", out])), 1);
    assert_eq!(code(&fragsim(&["frobnicate"])), 1);
    assert_eq!(code(&fragsim(&["validate", "/nonexistent/config.json"])), 1);
}

fn baseline_run(outdir: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--engine",
        "redis",
        "--scenario",
        "all_nodes_baseline",
        "--workloads",
        "C",
        "--set",
        "sim.gossip=false",
        "--outdir",
        outdir,
    ];
    args.extend_from_slice(extra);
    fragsim(&args)
}

#[test]
fn seeded_runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = baseline_run(d.path().to_str().unwrap(), &["--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let read = |d: &Path| fs::read(d.join("all_nodes_baseline/redis/C/summary.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    for f in ["timeline.csv", "traffic.dot"] {
        assert!(a.path().join("all_nodes_baseline/redis/C").join(f).exists(), "{f}");
    }
}

#[test]
fn outdir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fragsim"))
        .args(["run", "--engine", "mongodb", "--scenario", "all_nodes_baseline", "--workloads", "C"])
        .env("FRAGSIM_OUTDIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("all_nodes_baseline/mongodb/C/summary.json").exists());
}

#[test]
fn trace_replays_to_the_summary_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = baseline_run(out, &["--trace"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = fs::read_dir(dir.path().join("traces")).unwrap().next().unwrap().unwrap().path();
    let summary = dir.path().join("all_nodes_baseline/redis/C/summary.json");
    let o = fragsim(&["replay-trace", trace.to_str().unwrap(), "--summary", summary.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("match"));
    let o = fragsim(&["replay-trace", trace.to_str().unwrap(), "--expect", "00"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn workload_range_runs_every_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fragsim(&[
        "run",
        "--engine",
        "mysql",
        "--workloads",
        "A..F",
        "--set",
        "scenario.lsf=[0.2,1.0]",
        "--parallelism",
        "2",
        "--outdir",
        out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines = String::from_utf8_lossy(&o.stdout).lines().count();
    assert_eq!(lines, 12);
    for w in ["A", "B", "C", "D", "E", "F"] {
        let d = dir.path().join("lsf_sweep/mysql").join(w);
        assert!(d.join("sweep.json").exists(), "{w}");
        assert!(d.join("lsf-0.20/summary.json").exists(), "{w}");
    }
}
