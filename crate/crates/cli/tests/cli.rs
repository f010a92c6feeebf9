use std::path::Path;
use std::process::{Command, Output};

fn quadnmpc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadnmpc"))
        .args(args)
        .current_dir(dir)
        .env_remove("QUADNMPC_OUT")
        .output()
        .expect("spawn quadnmpc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_rows(path: &Path) -> (csv::StringRecord, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

#[test]
fn hover_simulation_holds_position() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = quadnmpc(
        &["simulate", "--set", "sim.scenario=hover", "--set", "sim.duration=0.5", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["trace.csv", "diagnostics.csv", "metrics.json", "metrics.txt", "config.toml", "plot_trace.py"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["completed"], true);
    assert!(m["metrics"]["rms_norm"].as_f64().unwrap() < 1e-6, "{m}");

    // The archived config reproduces the run.
    let again = dir.path().join("again");
    let o = quadnmpc(
        &["simulate", "-c", out.join("config.toml").to_str().unwrap(), "--out", again.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, a) = read_rows(&out.join("trace.csv"));
    let (_, b) = read_rows(&again.join("trace.csv"));
    assert_eq!(a.len(), b.len());
    assert_eq!(a.iter().map(|r| r[1..4].to_vec()).collect::<Vec<_>>(), b.iter().map(|r| r[1..4].to_vec()).collect::<Vec<_>>());
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[delay]\nlamda = 2\n").unwrap();
    let out = dir.path().join("run");
    let o = quadnmpc(&["simulate", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));
    assert!(!out.exists());

    let o = quadnmpc(&["simulate", "--set", "nmpc.N=0", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(quadnmpc(&["trajgen", "spiral"], dir.path()).status.code(), Some(2));
    assert_eq!(quadnmpc(&["study", "everything"], dir.path()).status.code(), Some(2));
    assert_eq!(quadnmpc(&["simulate", "--set", "nokey"], dir.path()).status.code(), Some(2));
    assert_eq!(quadnmpc(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn helix_trajectory_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("helix.csv");
    let o = quadnmpc(&["trajgen", "helix", "--out", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_rows(&path);
    assert_eq!(&header[0], "t");
    assert_eq!(rows.len(), 1001);
    let first = &rows[0];
    assert!((first[1] - 0.3).abs() < 1e-12 && first[2].abs() < 1e-12 && (first[3] - 0.38).abs() < 1e-12, "{first:?}");

    // Flying the generated file in closed loop.
    let out = dir.path().join("fly");
    let o = quadnmpc(
        &[
            "simulate",
            "--set",
            "sim.scenario=file",
            "--set",
            &format!("sim.reference_file={}", toml_string(&path)),
            "--set",
            "sim.duration=1.0",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(m["metrics"]["max_error"].as_f64().unwrap() < 0.1, "{m}");
}

fn toml_string(p: &Path) -> String {
    format!("\"{}\"", p.to_str().unwrap().replace('\\', "\\\\"))
}

#[test]
fn missing_reference_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadnmpc(
        &["simulate", "--set", "sim.scenario=file", "--set", "sim.reference_file=nope.csv", "--out", "x"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn benchmark_writes_one_summary_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = quadnmpc(
        &["benchmark", "--set", "benchmark.cycles=3", "--set", "benchmark.warmup=2", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(out.join("benchmark.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["N", "solver", "block_size", "ip_iters", "time_prep_us", "time_solve_us"]
    );
    assert_eq!(r.records().count(), 5 * 2 * 3);
    let mut s = csv::Reader::from_path(out.join("benchmark_summary.csv")).unwrap();
    assert_eq!(s.records().count(), 10);
}

#[test]
fn condensing_study_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let o = quadnmpc(&["study", "condensing", "--out", out.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let verdicts = std::fs::read_to_string(out.join("verdicts.txt")).unwrap();
    assert!(verdicts.starts_with("[PASS]"), "{verdicts}");
    let (_, rows) = read_rows(&out.join("study_condensing.csv"));
    assert_eq!(rows.len(), 6);
}

#[test]
fn config_command_prints_the_merged_document() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadnmpc(&["config", "--set", "delay.lambda=2"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let doc: toml::Table = toml::from_str(&text).unwrap();
    assert_eq!(doc["delay"]["lambda"].as_integer(), Some(2));
}
