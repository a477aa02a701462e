//! End-to-end runs of the `latentroute` binary on the smoke config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use latentroute::RobotModel;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_latentroute");

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.conf")
}

fn run_in(cwd: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(cwd)
        .arg("--config")
        .arg(smoke_config())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn pipeline(cwd: &Path) {
    for step in [
        &["generate"][..],
        &["train"],
        &["build-graph"],
        &["simulate", "--scenario", "open_reach"],
    ] {
        let mut args = vec!["--out", "out"];
        args.extend_from_slice(step);
        let o = run_in(cwd, &args);
        assert_eq!(code(&o), 0, "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// One pipeline run shared by the tests below.
fn shared() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let d = tempfile::tempdir().unwrap();
        pipeline(d.path());
        d
    })
    .path()
}

#[test]
fn smoke_pipeline_succeeds_and_verifies() {
    let cwd = shared();
    let files = snapshot(&cwd.join("out"));
    for f in ["dataset.csv", "dataset.meta", "model.bin", "roadmap.txt", "trace_open_reach_s0.jsonl"] {
        assert!(files.contains_key(f), "{f} missing");
    }
    let meta = String::from_utf8(files["dataset.meta"].clone()).unwrap();
    assert!(meta.contains("config_hash = ") && meta.contains("tool_version = latentroute "));
    let roadmap = String::from_utf8(files["roadmap.txt"].clone()).unwrap();
    assert!(roadmap.lines().nth(1).unwrap().starts_with("tool_version latentroute "));
    let trace = String::from_utf8(files["trace_open_reach_s0.jsonl"].clone()).unwrap();
    assert!(trace.lines().next().unwrap().contains("\"config_hash\""));
    assert!(trace.lines().last().unwrap().contains("\"status\":\"reached\""));

    let o = run_in(cwd, &["--out", "out", "verify", "--trace", "out/trace_open_reach_s0.jsonl", "--scenario", "open_reach"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pipeline_is_byte_identical_and_stays_in_the_output_directory() {
    let again = tempfile::tempdir().unwrap();
    pipeline(again.path());
    let top: Vec<String> = fs::read_dir(again.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(top, vec!["out".to_string()]);
    let a = snapshot(&shared().join("out"));
    let b = snapshot(&again.path().join("out"));
    let names: Vec<_> = b.keys().collect();
    assert_eq!(a.keys().filter(|k| !k.starts_with("verify_")).collect::<Vec<_>>(), names);
    for (name, bytes) in &b {
        assert!(a[name] == *bytes, "{name} differs between runs");
    }
}

#[test]
fn simulate_twice_gives_identical_traces() {
    let cwd = shared();
    let args = |out: &'static str| {
        vec!["--out", out, "simulate", "--scenario", "crossing_mover", "--roadmap", "out/roadmap.txt", "--model", "out/model.bin", "--seed", "3"]
    };
    let a = run_in(cwd, &args("sim_a"));
    let b = run_in(cwd, &args("sim_b"));
    assert_eq!(code(&a), code(&b));
    let name = "trace_crossing_mover_s3.jsonl";
    assert_eq!(fs::read(cwd.join("sim_a").join(name)).unwrap(), fs::read(cwd.join("sim_b").join(name)).unwrap());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn tampered_trace_fails_verification_at_its_tick() {
    let cwd = shared();
    let text = fs::read_to_string(cwd.join("out/trace_open_reach_s0.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let target = 5;
    let line = &lines[target + 1];
    let start = line.find("\"min_clearance\":").unwrap() + "\"min_clearance\":".len();
    let end = start + line[start..].find(',').unwrap();
    let value: f64 = line[start..end].parse().unwrap();
    lines[target + 1] = format!("{}{}{}", &line[..start], value + 0.01, &line[end..]);
    let tdir = tempfile::tempdir().unwrap();
    let tampered = tdir.path().join("tampered.jsonl");
    fs::write(&tampered, lines.join("\n") + "\n").unwrap();

    let o = run_in(
        cwd,
        &["--out", "verify_out", "verify", "--trace", tampered.to_str().unwrap(), "--scenario", "open_reach"],
    );
    assert_eq!(code(&o), 5);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("tick {target}: min_clearance")), "{err}");
}

#[test]
fn verify_refuses_a_different_robot() {
    let cwd = shared();
    let tdir = tempfile::tempdir().unwrap();
    let robot = tdir.path().join("robot.txt");
    let text = RobotModel::panda().to_text().replacen("name ", "name other-", 1);
    fs::write(&robot, text).unwrap();
    let o = run_in(
        cwd,
        &[
            "--out", "verify_robot", "verify", "--trace", "out/trace_open_reach_s0.jsonl",
            "--scenario", "open_reach", "--robot", robot.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("robot_hash"));
}

#[test]
fn error_categories_map_to_exit_codes() {
    let cwd = shared();
    let bad_value = run_in(cwd, &["--out", "x", "--set", "vae.epochs=many", "generate"]);
    assert_eq!(code(&bad_value), 2);
    let unknown_key = run_in(cwd, &["--out", "x", "--set", "vae.depth=3", "generate"]);
    assert_eq!(code(&unknown_key), 2);

    let missing = run_in(cwd, &["--out", "x", "simulate", "--scenario", "open_reach", "--roadmap", "nope.txt"]);
    assert_eq!(code(&missing), 3);
    let unknown_scenario = run_in(
        cwd,
        &["--out", "x", "simulate", "--scenario", "no_such_thing", "--roadmap", "out/roadmap.txt", "--model", "out/model.bin"],
    );
    assert_eq!(code(&unknown_scenario), 3);

    let trapped = run_in(
        cwd,
        &["--out", "x", "simulate", "--scenario", "trapped_goal", "--roadmap", "out/roadmap.txt", "--model", "out/model.bin"],
    );
    assert_eq!(code(&trapped), 4, "{}", String::from_utf8_lossy(&trapped.stderr));
}

#[test]
fn mismatched_artifacts_are_refused() {
    let cwd = shared();
    let o = run_in(cwd, &["--out", "other", "--set", "dataset.seed=9", "generate"]);
    assert_eq!(code(&o), 0);
    let o = run_in(cwd, &["--out", "other", "build-graph", "--model", "out/model.bin"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("different dataset"));
}
