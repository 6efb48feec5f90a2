//! End-to-end runs of the `streamcnn` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streamcnn"))
}

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().arg("--out-dir").arg(dir).args(args).output().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["gen-model", "--name", "h_unknown"])
            .status
            .code(),
        Some(2)
    );
    let out = run(dir.path(), &["speedup", "--repetitions", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let out = run(dir.path(), &["probe", missing.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_model_reproduces_shipped_models() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["h_ppg", "h_eeg", "h_acc"] {
        assert_ok(&run(dir.path(), &["gen-model", "--name", name]));
        assert_eq!(
            read(dir.path().join(format!("{name}.json"))),
            read(models_dir().join(format!("{name}.json")))
        );
        let ours = std::fs::read(dir.path().join(format!("{name}.bin"))).unwrap();
        let shipped = std::fs::read(models_dir().join(format!("{name}.bin"))).unwrap();
        assert_eq!(ours, shipped, "{name}.bin");
    }
}

#[test]
fn probe_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = models_dir().join("h_acc.json");
    let out = run(dir.path(), &["probe", model.to_str().unwrap()]);
    assert_ok(&out);
    let csv = read(dir.path().join("probe_h_acc.csv"));
    assert_eq!(csv.lines().next(), Some("layer,total,affected,fraction"));
    assert!(csv
        .lines()
        .any(|l| l.starts_with("conv") && l.contains(",960,12,")));
    let report: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("shiftability_h_acc.json"))).unwrap();
    assert_eq!(report["recommendation"], "ApproximateStreaming");
}

#[test]
fn pool_bounds_writes_four_sweeps_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "pool-bounds",
            "--kind",
            "avg",
            "--fs-list",
            "32,64,128",
            "--lp-list",
            "2,8,32",
        ],
    );
    assert_ok(&out);
    for sweep in ["fs", "lp"] {
        for label in ["mono", "multi"] {
            let csv = read(dir.path().join(format!("pool_bounds_{sweep}_{label}.csv")));
            let mut lines = csv.lines();
            assert_eq!(lines.next(), Some("param,mean_rel,max_rel,bound"));
            let rows: Vec<Vec<f64>> = lines
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect();
            assert_eq!(rows.len(), 3);
            assert!(
                rows.iter().all(|r| r[2] <= r[3] + 1e-9),
                "{sweep} {label}: {rows:?}"
            );
        }
    }
}

#[test]
fn non_timing_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 3] = [
        &[
            "--seed",
            "5",
            "stream-compare",
            "--window",
            "64",
            "--step",
            "16",
            "--pools",
            "1",
        ],
        &[
            "--seed",
            "5",
            "gen-signal",
            "--kind",
            "multi",
            "--duration",
            "2",
        ],
        &[
            "--seed",
            "5",
            "gen-model",
            "--name",
            "random",
            "--pools",
            "2",
        ],
    ];
    for args in cases {
        assert_ok(&run(a.path(), args));
        assert_ok(&run(b.path(), args));
    }
    for file in [
        "stream_compare.csv",
        "signal.csv",
        "random.json",
        "random.bin",
    ] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn stream_compare_reads_a_generated_signal() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run(
        dir.path(),
        &[
            "gen-signal",
            "--kind",
            "noise",
            "--duration",
            "40",
            "--fs",
            "32",
            "--raw",
        ],
    ));
    let signal = dir.path().join("signal.raw");
    let out = run(
        dir.path(),
        &[
            "stream-compare",
            "--window",
            "128",
            "--step",
            "32",
            "--signal",
            signal.to_str().unwrap(),
            "--format",
            "json",
        ],
    );
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("stream_compare.json"))).unwrap();
    assert_eq!(v["modes"].as_array().unwrap().len(), 2);
    assert_eq!(v["step"], 32);
}

#[test]
fn speedup_reports_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "speedup",
            "--window",
            "128",
            "--steps",
            "16,32,64",
            "--repetitions",
            "10",
            "--windows-per-rep",
            "2",
        ],
    );
    assert_ok(&out);
    let csv = read(dir.path().join("speedup.csv"));
    assert_eq!(
        csv.lines().next(),
        Some("step,window,mode,ns_per_window,mac_count,mac_ratio")
    );
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for mode in ["full", "exact", "approx"] {
        assert!(stdout.contains(mode), "{stdout}");
    }
}
