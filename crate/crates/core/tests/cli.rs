mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn alertlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alertlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn reference() -> String {
    common::reference_spec().to_str().unwrap().to_string()
}

#[test]
fn run_reference_and_assert() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let r = alertlab(&[
        "run",
        &reference(),
        "-o",
        path(&out),
        "--assert",
        "patterns_detected(Base90) >= 5",
        "--assert",
        "episodes(For60) < episodes(Base90)",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    for rule in ["Base90", "Window120", "For60"] {
        assert!(text.contains(rule), "{text}");
    }
    assert_eq!(text.matches("PASS").count(), 2);
    assert!(out.join("run.json").is_file());

    let r = alertlab(&[
        "run",
        &reference(),
        "-o",
        path(&out),
        "--assert",
        "recall(Base90) >= 1.01",
    ]);
    assert_eq!(code(&r), 3);
    assert!(stdout(&r).contains("recall(Base90) = 1"), "{}", stdout(&r));

    let r = alertlab(&[
        "run",
        &reference(),
        "-o",
        path(&out),
        "--assert",
        "recall(Nope) > 0",
    ]);
    assert_eq!(code(&r), 1);
    let r = alertlab(&[
        "run",
        &reference(),
        "-o",
        path(&out),
        "--assert",
        "speed(Base90) > 0",
    ]);
    assert_eq!(code(&r), 1);
}

#[test]
fn report_rechecks_an_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&alertlab(&["run", &reference(), "-o", path(&out)])), 0);
    let r = alertlab(&[
        "report",
        path(&out),
        "--assert",
        "patterns_detected(Window120) < patterns_detected(Base90)",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).contains("Window120"));
}

#[test]
fn replay_round_trip_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_eq!(
        code(&alertlab(&["run", &reference(), "-o", path(&first)])),
        0
    );
    let r = alertlab(&[
        "replay",
        "--series",
        path(&first.join("series/errorRate.csv")),
        "--series",
        path(&first.join("series/requestRate.csv")),
        "--schedule",
        path(&first.join("faults.csv")),
        "--rules",
        path(&first.join("rules.txt")),
        "-o",
        path(&second),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for rule in ["Base90", "Window120", "For60"] {
        for sub in ["episodes", "reports"] {
            let ext = if sub == "episodes" { "csv" } else { "json" };
            let rel = format!("{sub}/{rule}.{ext}");
            assert_eq!(
                fs::read(first.join(&rel)).unwrap(),
                fs::read(second.join(&rel)).unwrap(),
                "{rel} differs after replay"
            );
        }
    }
}

const LATE_SERIES: &str = "\
# series: errorRate interval=5 kind=ratio
timestamp,value
";

fn write_late_fixture(dir: &Path) {
    // condition true only in (200, 230]; fault window [100, 200)
    let mut series = String::from(LATE_SERIES);
    for t in (0..=300).step_by(5) {
        let v = if (205..=230).contains(&t) { 0.5 } else { 0.0 };
        series.push_str(&format!("{t},{v}\n"));
    }
    fs::write(dir.join("errorRate.csv"), series).unwrap();
    fs::write(
        dir.join("faults.csv"),
        "treatment,start,end,magnitude\npacket_loss,100,200,0.25\n",
    )
    .unwrap();
    fs::write(
        dir.join("rules.txt"),
        "alert: Late\nexpr: errorRate[5s] > 0.03\n",
    )
    .unwrap();
}

fn replay_late(dir: &Path, grace: &str) -> Output {
    alertlab(&[
        "replay",
        "--series",
        path(&dir.join("errorRate.csv")),
        "--schedule",
        path(&dir.join("faults.csv")),
        "--rules",
        path(&dir.join("rules.txt")),
        "-o",
        path(&dir.join(format!("out-{grace}"))),
        "--grace-after-end",
        grace,
        "--assert",
        "patterns_detected(Late) == 1",
    ])
}

#[test]
fn grace_flag_flips_late_detection() {
    let dir = tempfile::tempdir().unwrap();
    write_late_fixture(dir.path());
    // fires at 205: within 30 s of the end but not within 0
    assert_eq!(code(&replay_late(dir.path(), "30")), 0);
    assert_eq!(code(&replay_late(dir.path(), "0")), 3);
}

#[test]
fn lint_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.rules");
    fs::write(
        &good,
        "alert: Base90\nexpr: errorRate[90s] > 0.03\n---\nalert: For60\nexpr: errorRate[90s] > 0.03\nfor: 60s\n",
    )
    .unwrap();
    let r = alertlab(&["lint", path(&good)]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));

    let warn = dir.path().join("warn.rules");
    fs::write(&warn, "alert: A\nexpr: errorRate[90s] > 1.5\n").unwrap();
    let r = alertlab(&["lint", path(&warn)]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("ratio-threshold"), "{}", stdout(&r));

    let bad = dir.path().join("bad.rules");
    fs::write(
        &bad,
        "alert: A\nexpr: errorRate[0s] > 0.1\n---\nalert: A\nexpr: errorRate[90s] > 0.1\n",
    )
    .unwrap();
    let r = alertlab(&["lint", path(&bad)]);
    assert_eq!(code(&r), 1);
    assert_eq!(
        code(&alertlab(&["lint", path(&dir.path().join("missing"))])),
        1
    );
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        code(&alertlab(&[
            "run",
            path(&dir.path().join("nope.toml")),
            "-o",
            path(&out)
        ])),
        1
    );
    assert!(!out.exists());

    let bad_spec = dir.path().join("bad.toml");
    fs::write(
        &bad_spec,
        "name = \"x\"\nrules = []\n[workload]\nusers = 0\n",
    )
    .unwrap();
    let r = alertlab(&["run", path(&bad_spec), "-o", path(&out)]);
    assert_eq!(code(&r), 1);
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(
        err.contains("rules") && err.contains("workload.users"),
        "{err}"
    );

    write_late_fixture(dir.path());
    fs::write(
        dir.path().join("errorRate.csv"),
        "# series: errorRate interval=5\ntimestamp,value\n0,0.1\n10,0.1\n",
    )
    .unwrap();
    assert_eq!(code(&replay_late(dir.path(), "30")), 1);

    assert_eq!(code(&alertlab(&["frobnicate"])), 1);
}

#[test]
fn batch_seed_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("batch");
    let r = alertlab(&[
        "batch",
        &reference(),
        "-o",
        path(&out),
        "--seed-sweep",
        "3",
        "--parallelism",
        "2",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("batch.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    let dirs: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    assert_eq!(dirs.len(), 3);

    let variations = dir.path().join("vars.toml");
    fs::write(
        &variations,
        "[[variation]]\nname = \"wide\"\n[variation.set]\n\"rules.Base90.window\" = 150\n\n[[variation]]\nname = \"typo\"\n[variation.set]\n\"workload.userz\" = 3\n",
    )
    .unwrap();
    let r = alertlab(&[
        "batch",
        &reference(),
        "-o",
        path(&dir.path().join("v")),
        "--variations",
        path(&variations),
    ]);
    assert_eq!(code(&r), 2, "{}", stdout(&r));
    let csv = fs::read_to_string(dir.path().join("v/batch.csv")).unwrap();
    assert!(csv.contains("wide") && csv.contains("typo"), "{csv}");
}
