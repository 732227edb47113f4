use std::path::Path;
use std::process::{Command, Output};

fn wavetrap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavetrap")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn rotation_check_passes_with_exit_zero() {
    let o = wavetrap(&["rotation-check", "m=5", "trials=1000", "seed=2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("config m=5"));
    assert!(text.contains("check orthogonality"));
    assert!(text.trim_end().ends_with("result pass"));
}

#[test]
fn stationary_check_example_passes() {
    let o = wavetrap(&["stationary-check", "p=3", "n=128", "d=0.7", "seed=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn failed_assertion_exits_one() {
    // n=64 is too coarse for p=2 at |d|=0.9.
    let o = wavetrap(&["stationary-check", "p=2", "n=64", "d=0.9", "trials=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("result fail"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(wavetrap(&["rotation-check", "bogus=1"]).status.code(), Some(2));
    assert_eq!(wavetrap(&["rotation-check", "m"]).status.code(), Some(2));
    assert_eq!(wavetrap(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(wavetrap(&["simulate-physical", "data=sideways"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    assert_eq!(wavetrap(&["stationary-check", "p=3", "d=1.5", "trials=1"]).status.code(), Some(3));
}

#[test]
fn config_file_merges_with_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "m = 3\ntrials = 10\nseed = 9\n").unwrap();
    let o = wavetrap(&["rotation-check", "m=4", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("config m=4"));
    assert!(text.contains("config trials=10"));
}

fn selfsim_csv(dir: &Path, name: &str) -> Vec<u8> {
    let out = dir.join(name);
    let o = wavetrap(&["simulate-selfsim", "n=32", "trials=1", "s_len=1", "seed=4", &format!("out={}", out.display())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    std::fs::read(out).unwrap()
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = selfsim_csv(dir.path(), "a.csv");
    let b = selfsim_csv(dir.path(), "b.csv");
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("s,E\n"));
}

#[test]
fn physical_run_writes_amplitude_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phys.csv");
    let o = wavetrap(&["simulate-physical", &format!("out={}", out.display())]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("t,amplitude_x0,linear_energy\n"));
    assert!(text.lines().count() > 10);
}
