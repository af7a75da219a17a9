//! End-to-end runs of the `fdeh` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fdeh(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdeh")).arg("--quiet").arg("--out").arg(out).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_writes_csv_and_a_reusable_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = fdeh(&first, &["--seed", "5", "--trials", "20", "simulate", "--ps-dbm", "25,40", "--method", "time_switching,antenna_split_sca"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(first.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let sidecar = first.join("results.meta.toml");
    assert!(fs::read_to_string(&sidecar).unwrap().contains("seed = 5"));

    // The sidecar alone reproduces the run.
    let second = dir.path().join("second");
    let o = fdeh(&second, &["--config", sidecar.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(second.join("results.csv")).unwrap(), csv);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[system]\nantennas = 3\n").unwrap();
    assert_eq!(code(&fdeh(dir.path(), &["--config", bad.to_str().unwrap(), "simulate"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["--config", "/nonexistent.toml", "simulate"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["simulate", "--method", "magic"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["--trials", "0", "simulate"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["simulate", "--m", "1"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["simulate", "--method", "drl_policy"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["precode", "--partition", "p1_eh=9;p2_eh=1"])), 2);
    assert_eq!(code(&fdeh(dir.path(), &["simulate", "--mixing", "log"])), 2);
}

#[test]
fn allocate_prints_a_parsable_partition_and_saves_the_channel() {
    let dir = tempfile::tempdir().unwrap();
    let chan = dir.path().join("chan.txt");
    let o = fdeh(dir.path(), &["--seed", "3", "allocate", "--ps-dbm", "30", "--save-channel", chan.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let printed = String::from_utf8(o.stdout).unwrap();
    let cfg = fdeh_core::SubsystemConfig::parse(printed.trim(), 4, 4).unwrap();
    let text = fs::read_to_string(&chan).unwrap();
    let realization = fdeh_core::ChannelRealization::from_text(&text).unwrap();
    assert_eq!(realization.seed, 3);

    // Feeding the saved channel back gives the same partition.
    let o = fdeh(dir.path(), &["allocate", "--ps-dbm", "30", "--channel", chan.to_str().unwrap()]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), cfg.to_string());
}

#[test]
fn precode_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdeh(dir.path(), &["--seed", "9", "precode", "--ps-dbm", "30", "--partition", "p1_eh=1,2;p2_eh=4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("sca_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,objective,surrogate,trace_q1,trace_q2,inner_iterations"));
    let objectives: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(objectives.len() >= 2);
    assert!(objectives.windows(2).all(|w| w[1] >= w[0] - 1e-7));
}

#[test]
fn train_then_evaluate_a_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, "[system]\nm = 2\nn = 2\n[drl]\nbatch = 2\neval_steps = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let o = fdeh(dir.path(), &["--config", cfg, "--seed", "4", "train", "--episodes", "2", "--steps", "4", "--ps-dbm", "30"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(dir.path().join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("episode,mean_reward,mean_harvested_w,epsilon"));
    assert_eq!(curve.lines().count(), 3);
    let policy = dir.path().join("policy.txt");
    assert!(fs::read_to_string(&policy).unwrap().starts_with("fdeh-policy v1"));

    let eval = dir.path().join("eval");
    let o = fdeh(&eval, &["--config", cfg, "--trials", "3", "eval-policy", "--policy", policy.to_str().unwrap(), "--ps-dbm", "30"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(eval.join("results.csv")).unwrap();
    assert!(results.lines().nth(1).unwrap().starts_with("drl_policy,30,"));

    // A policy for the wrong array size is a configuration error.
    let o = fdeh(&eval, &["--trials", "3", "eval-policy", "--policy", policy.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compare_writes_gain_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = fdeh(dir.path(), &["--trials", "10", "compare", "--ps-dbm", "30", "--methods", "antenna_split_sca,antenna_split_equal_power,time_switching"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gains = fs::read_to_string(dir.path().join("gains.csv")).unwrap();
    let lines: Vec<&str> = gains.lines().collect();
    assert_eq!(lines[0], "method_a,method_b,ps_dbm,mean_gain,stderr_gain,pairs");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("antenna_split_sca,antenna_split_equal_power,30,"));
    assert!(dir.path().join("gains.meta.toml").exists());
}
