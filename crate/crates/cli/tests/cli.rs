//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dhprep(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dhprep"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generate a small planted network in `dir` and return the edge-list path.
fn generate_fixture(dir: &Path) -> String {
    let out = dhprep(
        &[
            "generate",
            "--vertices",
            "20",
            "--blocks",
            "10,10",
            "--snapshots",
            "4",
            "--p-in",
            "0.3",
            "--p-out",
            "0.05",
            "--seed",
            "9",
            "--out",
            "data",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.join("data/edges.tsv").is_file());
    assert!(dir.join("data/labels.tsv").is_file());
    // Relative to `dir`, which every invocation uses as its working dir.
    "data/edges.tsv".to_string()
}

#[test]
fn generate_train_eval_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = generate_fixture(tmp.path());

    let out = dhprep(
        &[
            "train", "--network", &edges, "--dim", "4", "--epochs", "10", "--seed", "3",
            "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("final losses"));
    let ckpt = tmp.path().join("run/checkpoint.dhp");
    assert!(ckpt.is_file());
    assert!(tmp.path().join("run/network_summary.tsv").is_file());
    let trace = fs::read_to_string(tmp.path().join("run/loss_trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 11, "header plus one row per epoch");
    assert!(trace.starts_with("epoch\tstructural\tdhp\tsmooth\ttotal"));

    let ckpt_str = ckpt.display().to_string();
    let out = dhprep(
        &[
            "eval", "--network", &edges, "--checkpoint", &ckpt_str, "--task", "link",
            "--folds", "2", "--repeats", "2", "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = fs::read_to_string(tmp.path().join("run/eval_link.tsv")).unwrap();
    assert!(report.contains("\tf1\t") && report.contains("\tauc\t"), "{report}");

    let out = dhprep(
        &[
            "eval", "--network", &edges, "--checkpoint", &ckpt_str, "--task", "recommend",
            "--k", "3,5", "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = fs::read_to_string(tmp.path().join("run/eval_recommend.tsv")).unwrap();
    for needle in ["precision\t3", "recall\t3", "precision\t5", "recall\t5"] {
        assert!(report.contains(needle), "missing {needle} in {report}");
    }
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    // Same config in two separate working directories.
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let tmp = tempfile::tempdir().unwrap();
            let edges = generate_fixture(tmp.path());
            let out = dhprep(
                &[
                    "train", "--network", &edges, "--dim", "4", "--epochs", "5", "--seed",
                    "11", "--out", "run",
                ],
                tmp.path(),
            );
            assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
            fs::read(tmp.path().join("run/checkpoint.dhp")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn flags_override_config_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = generate_fixture(tmp.path());
    fs::write(
        tmp.path().join("run.cfg"),
        format!("network = {edges}\ndim = 4\nepochs = 7\nseed = 2\n"),
    )
    .unwrap();

    let out = dhprep(
        &["train", "--config", "run.cfg", "--out", "file-run"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = fs::read_to_string(tmp.path().join("file-run/loss_trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 8, "config file epochs apply");

    let out = dhprep(
        &[
            "train", "--config", "run.cfg", "--epochs", "3", "--out", "flag-run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let trace = fs::read_to_string(tmp.path().join("flag-run/loss_trace.tsv")).unwrap();
    assert_eq!(trace.lines().count(), 4, "flag epochs win over the file");
}

#[test]
fn zero_epochs_checkpoints_initialized_state() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = generate_fixture(tmp.path());
    let out = dhprep(
        &[
            "train", "--network", &edges, "--dim", "4", "--epochs", "0", "--out", "zero",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("initialized state"));
    assert!(tmp.path().join("zero/checkpoint.dhp").is_file());
}

#[test]
fn missing_inputs_and_bad_values_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dhprep(&["train", "--network", "absent.tsv"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.tsv"), "{}", stderr(&out));

    let out = dhprep(&["train"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("network"), "{}", stderr(&out));

    let edges = generate_fixture(tmp.path());
    let out = dhprep(
        &["train", "--network", &edges, "--dim", "fast"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dim"), "{}", stderr(&out));

    fs::write(tmp.path().join("bad.cfg"), "mystery = 1\n").unwrap();
    let out = dhprep(&["train", "--config", "bad.cfg"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mystery"), "{}", stderr(&out));

    let out = dhprep(
        &["generate", "--vertices", "5", "--blocks", "3,3"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn gradcheck_reports_and_exits_by_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dhprep(&["gradcheck", "--dim", "4", "--coords", "60"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max relative error"), "{text}");
    assert!(text.contains("PASS"), "{text}");

    // A tolerance below the floating-point noise floor must fail.
    let out = dhprep(
        &[
            "gradcheck", "--dim", "4", "--coords", "60", "--tolerance", "1e-14",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stdout(&out).contains("FAIL"), "{}", stdout(&out));

    // Degenerate one-dimensional run still executes and reports.
    let out = dhprep(&["gradcheck", "--dim", "1", "--coords", "20"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn sweep_concatenates_reports_with_kernel_and_window() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = generate_fixture(tmp.path());
    let out = dhprep(
        &[
            "sweep", "--network", &edges, "--dim", "4", "--epochs", "5",
            "--kernels", "exponential,flat", "--windows", "1,2",
            "--folds", "2", "--repeats", "2", "--out", "sweep",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = fs::read_to_string(tmp.path().join("sweep/sweep.tsv")).unwrap();
    assert!(report.starts_with("kernel\twindow\ttask\tmetric\tk\tmean\tstd"));
    // 2 kernels x 2 windows x 2 metric rows.
    assert_eq!(report.lines().count(), 9, "{report}");
    assert!(report.contains("flat\t2\tlink\tauc"), "{report}");
}

#[test]
fn inspect_prints_intensity_breakdown() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = generate_fixture(tmp.path());
    let out = dhprep(
        &[
            "train", "--network", &edges, "--dim", "4", "--epochs", "5", "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ckpt = tmp.path().join("run/checkpoint.dhp").display().to_string();

    let out = dhprep(
        &[
            "inspect", "--network", &edges, "--checkpoint", &ckpt, "--src", "0",
            "--dst", "7", "--snapshot", "3",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    for needle in [
        "base intensity",
        "excitation",
        "raw intensity",
        "transferred intensity",
        "edge probability",
    ] {
        assert!(text.contains(needle), "missing {needle} in {text}");
    }

    let out = dhprep(
        &[
            "inspect", "--network", &edges, "--checkpoint", &ckpt, "--src", "999",
            "--dst", "1", "--snapshot", "2",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("999"), "{}", stderr(&out));
}
