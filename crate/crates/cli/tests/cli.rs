use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fmod(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmod")).args(args).current_dir(dir).output().expect("fmod runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json_file(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A temp dir holding a short default-geometry clip, its truth and a training corpus.
fn workspace(frames: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = fmod(&["synth", "--frames", frames, "--output", "clip.y4m", "--training", "shapes", "--per-class", "8"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

fn snapshot_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots").join(format!("{name}.txt"))
}

#[test]
fn help_matches_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [
        ("help", vec!["--help"]),
        ("detect", vec!["detect", "--help"]),
        ("bench", vec!["bench", "--help"]),
        ("synth", vec!["synth", "--help"]),
        ("info", vec!["info", "--help"]),
    ] {
        let out = fmod(&args, dir.path());
        assert_eq!(code(&out), 0);
        let text = stdout(&out);
        let path = snapshot_path(name);
        if std::env::var_os("UPDATE_SNAPSHOTS").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_default();
        assert_eq!(text, expected, "help for {name} drifted; rerun with UPDATE_SNAPSHOTS=1 to accept");
    }
}

#[test]
fn help_lists_every_run_flag_with_a_default() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&fmod(&["bench", "--help"], dir.path())) + &stdout(&fmod(&["detect", "--help"], dir.path()));
    for flag in [
        "--input", "--output", "--metrics", "--model", "--backend", "--ref-train", "--threshold", "--se-size",
        "--blur-size", "--min-area", "--repeat", "--truth", "--power-source", "--overlap", "--seed", "--config",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    assert!(text.contains("[default: 25]") && text.contains("[default: 3]") && text.contains("[default: stdout]"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = workspace("4");
    let d = dir.path();
    let no_input = fmod(&["detect"], d);
    assert_eq!(code(&no_input), 2);
    assert!(stderr(&no_input).contains("Usage: fmod detect"));
    for args in [
        vec!["detect", "--input", "clip.y4m", "--threshold", "300"],
        vec!["detect", "--input", "clip.y4m", "--se-size", "4"],
        vec!["detect", "--input", "clip.y4m", "--min-area", "0"],
        vec!["detect", "--input", "clip.y4m", "--backend", "gpu"],
        vec!["detect", "--input", "clip.y4m", "--backend", "external:ftp://x"],
        vec!["detect", "--input", "clip.y4m", "--power-source", "battery:3"],
        vec!["detect", "--input", "clip.y4m", "--bogus"],
        vec!["bench", "--input", "clip.y4m", "--repeat", "0"],
        vec!["synth", "--frames", "1"],
        vec!["synth", "--size", "20x20"],
        vec!["synth", "--size", "wide"],
        vec!["synth", "--shape", "hexagon"],
        vec!["frobnicate"],
    ] {
        let out = fmod(&args, d);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn runtime_failures_exit_1() {
    let dir = workspace("4");
    let d = dir.path();
    for args in [
        vec!["info", "--spec", "missing.spec"],
        vec!["detect", "--input", "nowhere.y4m"],
        vec!["detect", "--input", "clip.y4m", "--model", "alexnet"],
        vec!["detect", "--input", "clip.y4m", "--ref-train", "no-such-dir"],
        vec!["detect", "--input", "clip.y4m", "--power-source", "file:absent.csv"],
        vec!["detect", "--input", "clip.y4m", "--backend", "external:tcp://127.0.0.1:1"],
        vec!["detect", "--input", "clip.y4m", "--config", "absent.json"],
    ] {
        let out = fmod(&args, d);
        assert_eq!(code(&out), 1, "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).starts_with("error: "));
    }
}

#[test]
fn info_lists_shipped_specs() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&fmod(&["info"], dir.path()));
    for (name, size) in [("mobilenet", "224x224"), ("inception_v4", "299x299"), ("resnet50", "224x224"), ("vit_base", "224x224")] {
        assert!(out.lines().any(|l| l.starts_with(name) && l.contains(size)), "{name} {size} not in\n{out}");
    }
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs/inception_v4.spec");
    let one = stdout(&fmod(&["info", "--spec", spec.to_str().unwrap()], dir.path()));
    assert_eq!(one.lines().count(), 1);
    assert!(one.starts_with("inception_v4") && one.contains("299x299"));
}

#[test]
fn synth_is_deterministic_and_records_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["synth", "--size", "320x240", "--frames", "120", "--shape", "square", "--seed", "7"];
    let first = fmod(&[&args[..], &["--output", "a.y4m"]].concat(), d);
    assert_eq!(code(&first), 0);
    assert_eq!(code(&fmod(&[&args[..], &["--output", "b.y4m"]].concat(), d)), 0);
    let (a, b) = (std::fs::read(d.join("a.y4m")).unwrap(), std::fs::read(d.join("b.y4m")).unwrap());
    assert_eq!(a, b);
    let header = String::from_utf8_lossy(&a[..a.iter().position(|&c| c == b'\n').unwrap()]).to_string();
    assert!(header.contains("W320 H240") && header.contains("XFMOD_SEED=7"), "{header}");
    assert_eq!(a.windows(6).filter(|w| w == b"FRAME\n").count(), 120);
    let truth: Value = json_file(d.join("a.json"));
    assert_eq!(truth.as_array().unwrap().len(), 120);
    assert_eq!(truth[0]["label"], "train");
    let summary: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(summary["seed"], 7);
}

#[test]
fn detect_writes_metrics_and_annotated_output() {
    let dir = workspace("12");
    let d = dir.path();
    let out = fmod(&["detect", "--input", "clip.y4m", "--ref-train", "shapes", "--truth", "clip.json", "--output", "out.y4m"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["complete"], true);
    let frames = report["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 11);
    assert!(frames.iter().all(|f| f["movement"] == true && f["label"] == "train"));
    assert_eq!(report["summary"]["accuracy"], 100.0);
    let written = std::fs::read(d.join("out.y4m")).unwrap();
    assert_eq!(written.windows(6).filter(|w| w == b"FRAME\n").count(), 12);
}

#[test]
fn bench_repeats_with_identical_accuracy() {
    let dir = workspace("20");
    let out = fmod(
        &["bench", "--input", "clip.y4m", "--truth", "clip.json", "--ref-train", "shapes", "--repeat", "3", "--power-source", "const:15"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let acc = &runs[0]["summary"]["accuracy"];
    assert!(runs.iter().all(|r| &r["summary"]["accuracy"] == acc));
    assert!(runs.iter().all(|r| r["summary"]["efficiency"].as_f64().unwrap() > 0.0));
    assert_eq!(report["aggregate"]["repeats"], 3);
    assert!(report["wall_clock"]["movement_probe"]["median_ms"].as_f64().unwrap() > 0.0);
    assert!(stderr(&out).contains("movement stage at 3840x2160"));
}

#[test]
fn bench_energy_follows_a_replayed_ramp() {
    let dir = workspace("6");
    let d = dir.path();
    let ramp: String = (0..=10).map(|i| format!("{},{}\n", i * 100, i)).collect();
    std::fs::write(d.join("ramp.csv"), ramp).unwrap();
    let out = fmod(&["bench", "--input", "clip.y4m", "--repeat", "2", "--power-source", "file:ramp.csv", "--metrics", "b.json"], d);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json_file(d.join("b.json"));
    for run in report["runs"].as_array().unwrap() {
        assert!((run["summary"]["energy_j"].as_f64().unwrap() - 5.0).abs() < 1e-9);
        assert!(run["summary"]["accuracy"].is_null());
    }
}

#[test]
fn config_file_fills_in_unset_flags() {
    let dir = workspace("6");
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"input": "clip.y4m", "min_area": 1000000, "ref-train": "shapes"}"#).unwrap();
    let moved = |out: &Output| -> usize {
        assert_eq!(code(out), 0, "{}", stderr(out));
        let v: Value = serde_json::from_str(&stdout(out)).unwrap();
        v["summary"]["movement_frames"].as_u64().unwrap() as usize
    };
    assert_eq!(moved(&fmod(&["detect", "--config", "cfg.json"], d)), 0);
    assert_eq!(moved(&fmod(&["detect", "--config", "cfg.json", "--min-area", "50"], d)), 5);

    std::fs::write(d.join("bad.json"), r#"{"threshold": 300}"#).unwrap();
    assert_eq!(code(&fmod(&["detect", "--input", "clip.y4m", "--config", "bad.json"], d)), 2);
    std::fs::write(d.join("unknown.json"), r#"{"colour": "red"}"#).unwrap();
    assert_eq!(code(&fmod(&["detect", "--input", "clip.y4m", "--config", "unknown.json"], d)), 2);
}

#[test]
fn external_backend_over_exec() {
    let dir = workspace("6");
    let adapter = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/echo_adapter.py");
    let backend = format!("external:exec:python3 {} cab=0.6 hen=0.3 tabby=0.1", adapter.display());
    let out = fmod(&["detect", "--input", "clip.y4m", "--backend", &backend], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    for f in report["frames"].as_array().unwrap() {
        assert_eq!(f["label"], "car");
        assert!((f["score"].as_f64().unwrap() - 0.6).abs() < 1e-6);
    }
}

#[test]
fn overlap_flag_keeps_results() {
    let dir = workspace("10");
    let d = dir.path();
    let strip = |out: Output| {
        let mut v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        fmod_core::metrics::strip_wall_clock(&mut v);
        v
    };
    let base = ["detect", "--input", "clip.y4m", "--ref-train", "shapes"];
    assert_eq!(strip(fmod(&base, d)), strip(fmod(&[&base[..], &["--overlap"]].concat(), d)));
}
