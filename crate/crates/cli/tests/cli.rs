//! End-to-end checks of the binary: subcommands, config/flag precedence,
//! and the exit-code contract (0 success, 1 validation, 2 data, 3 ranking
//! check not significant).

use std::path::Path;
use std::process::Command;

fn levstream() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levstream"))
}

fn stdout_of(output: &std::process::Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn help_lists_all_subcommands() {
    let out = levstream().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    for sub in ["simulate", "run", "bench", "power", "doptcheck"] {
        assert!(text.contains(sub), "missing subcommand {sub} in help");
    }
}

#[test]
fn simulate_run_and_bench_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let sim_dir = dir.path().join("sim");
    let out = levstream()
        .args(["simulate", "--k", "2", "--n", "600", "--seed", "5"])
        .arg("--out")
        .arg(&sim_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(sim_dir.join("stream.csv").exists());
    assert!(sim_dir.join("stream.meta").exists());
    assert!(sim_dir.join("manifest.txt").exists());

    let run_dir = dir.path().join("run");
    let out = levstream()
        .args([
            "run", "--mode", "relaxed", "--q", "0.2", "--q0", "0.1", "--pilot", "60", "--seed", "5",
        ])
        .arg("--stream")
        .arg(sim_dir.join("stream.csv"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "metrics.csv",
        "decisions.csv",
        "snapshot.json",
        "manifest.txt",
    ] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }

    let bench_dir = dir.path().join("bench");
    let out = levstream()
        .args([
            "bench",
            "--k",
            "2",
            "--n",
            "500",
            "--pilot",
            "40",
            "--q",
            "0.2",
            "--q0",
            "0.1",
            "--replicates",
            "2",
            "--parallelism",
            "2",
        ])
        .arg("--out")
        .arg(&bench_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(bench_dir.join("bench.csv")).unwrap();
    assert!(table
        .starts_with("tau,bernoulli_mean,bernoulli_sd,lss_mean,lss_sd,relaxed_mean,relaxed_sd"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "k = 2\nn = 400\nseed = 9\nq = 0.5\n").unwrap();
    let sim_dir = dir.path().join("sim");
    // Flag overrides the file's n.
    let out = levstream()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg_path)
        .args(["--n", "300"])
        .arg("--out")
        .arg(&sim_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("wrote 300 rows"));
    let manifest = std::fs::read_to_string(sim_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("n = 300"));
    assert!(manifest.contains("seed = 9"));
}

#[test]
fn validation_error_exits_one() {
    let out = levstream()
        .args(["simulate", "--k", "2", "--n", "0"])
        .arg("--out")
        .arg(tempfile::tempdir().unwrap().path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn data_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    std::fs::write(
        &data,
        "utc_timestamp,A\n2006-01-01T00:00:00Z,1\n2006-01-01T01:00:00Z,2\n2006-01-01T03:00:00Z,3\n",
    )
    .unwrap();
    let out = levstream()
        .args(["power", "--columns", "A"])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("irregular spacing"), "stderr: {err}");
}

#[test]
fn doptcheck_exit_codes_signal_significance() {
    let out = levstream()
        .args([
            "doptcheck",
            "--p",
            "2",
            "--q",
            "0.5",
            "--q0",
            "0",
            "--n-mc",
            "30000",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stdout_of(&out));
    assert!(stdout_of(&out).contains("upper_tail"));

    // Degenerate family: every rule collapses to the constant one.
    let out = levstream()
        .args([
            "doptcheck",
            "--p",
            "2",
            "--q",
            "0.3",
            "--q0",
            "0.3",
            "--n-mc",
            "20000",
            "--seed",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stdout_of(&out));

    // Invalid rate.
    let out = levstream()
        .args(["doptcheck", "--p", "2", "--q", "0", "--n-mc", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn power_runs_on_a_synthetic_table() {
    // Small seasonal table written by hand: period 3 keeps it short.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("load.csv");
    let mut text = String::from("utc_timestamp,A,B\n");
    for i in 0..220 {
        let h = i % 24;
        let d = i / 24;
        let a = (i as f64 * 0.7).sin() + 5.0;
        let b = (i as f64 * 0.3).cos() + 7.0;
        text.push_str(&format!("2006-01-{:02}T{h:02}:00:00Z,{a},{b}\n", d + 1));
    }
    std::fs::write(&data, text).unwrap();
    let out = levstream()
        .args([
            "power",
            "--columns",
            "A,B",
            "--p1",
            "2",
            "--p2-seasonal",
            "1",
            "--period",
            "24",
            "--pilot",
            "30",
            "--q",
            "0.5",
            "--q0",
            "0.25",
            "--u",
            "0.2",
        ])
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(Path::new(&dir.path().join("out").join("metrics.csv")).exists());
}

#[test]
fn rerun_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = levstream()
            .args(["simulate", "--k", "2", "--n", "400", "--seed", "77"])
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        paths.push(out_dir);
    }
    for file in ["stream.csv", "stream.meta", "manifest.txt"] {
        assert_eq!(
            std::fs::read(paths[0].join(file)).unwrap(),
            std::fs::read(paths[1].join(file)).unwrap(),
            "{file} differs between reruns"
        );
    }
}
