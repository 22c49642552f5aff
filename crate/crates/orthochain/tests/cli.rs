use std::fs;
use std::process::{Command, Output};

fn orthochain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthochain"))
        .args(args)
        .env_remove("ORTHOCHAIN_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// The JSON line echoing the effective configuration.
fn echo_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .find(|l| l.starts_with('{'))
        .expect("effective configuration echoed")
        .to_string()
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(code(&orthochain(&[])), 2);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&orthochain(&["chain", "--bogus", "3"])), 2);
}

#[test]
fn invalid_configurations_are_usage_errors() {
    assert_eq!(code(&orthochain(&["cosine", "--n", "3"])), 2);
    assert_eq!(code(&orthochain(&["width-sweep", "--d-list", "64"])), 2);
    assert_eq!(code(&orthochain(&["chain", "--d", "2", "--n", "4"])), 2);
    assert_eq!(code(&orthochain(&["chain", "--activation", "swish"])), 2);
    assert_eq!(code(&orthochain(&["chain", "--d", "8", "--d-list", "8,16"])), 2);
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"depth": 10, "colour": "red"}"#).unwrap();
    assert_eq!(code(&orthochain(&["chain", "--config", bad.to_str().unwrap()])), 2);
    let missing = dir.path().join("absent.json");
    assert_eq!(code(&orthochain(&["chain", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn unwritable_output_is_a_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("no_such_dir").join("out.csv");
    let result = orthochain(&["chain", "--d", "16", "--depth", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&result), 1);
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let result = orthochain(&["chain", "--d", "16", "--depth", "5"]);
    assert_eq!(code(&result), 0);
    let stdout = String::from_utf8(result.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("kind,n,d,layer,seed,metric,value"));
    assert!(lines.any(|l| l.starts_with("chain,4,16,5,")));
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.csv"), dir.path().join("b.csv")];
    for (path, threads) in paths.iter().zip(["1", "3"]) {
        let args = ["width-sweep", "--d-list", "8,16,32", "--depth", "20", "--seeds", "3"];
        let result = orthochain(&[&args[..], &["--threads", threads, "--out", path.to_str().unwrap()]].concat());
        assert_eq!(code(&result), 0, "{}", String::from_utf8_lossy(&result.stderr));
    }
    let first = fs::read(&paths[0]).unwrap();
    assert!(!first.is_empty());
    assert_eq!(first, fs::read(&paths[1]).unwrap());
}

#[test]
fn config_file_and_flags_resolve_to_the_same_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{"d": 32, "depth": 400, "seeds": [5, 9], "activation": "tanh"}"#).unwrap();
    let from_config = orthochain(&["chain", "--config", config.to_str().unwrap(), "--depth", "6", "--threads", "1"]);
    assert_eq!(code(&from_config), 0);

    let flags = ["chain", "--d", "32", "--depth", "6", "--activation", "tanh", "--threads", "1"];
    let mut from_flags = orthochain(&flags);
    assert_eq!(code(&from_flags), 0);
    // Explicit seed lists have no flag form, so only the seed entry differs.
    let echoed = echo_line(&from_config).replace(r#""seeds":[5,9]"#, r#""seeds":1"#);
    assert_eq!(echoed, echo_line(&from_flags));

    from_flags =
        orthochain(&["chain", "--config", config.to_str().unwrap(), "--seeds", "1", "--depth", "6", "--threads", "1"]);
    assert_eq!(echo_line(&from_flags), echo_line(&orthochain(&flags)));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let result = Command::new(env!("CARGO_BIN_EXE_orthochain"))
        .args(["chain", "--d", "8", "--depth", "3"])
        .env("ORTHOCHAIN_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&result), 0);
    assert!(echo_line(&result).contains(r#""threads":3"#));
}

#[test]
fn battery_flags_the_unscaled_negative_control() {
    let small = ["theory-check", "--n", "2", "--d-list", "16", "--depth", "11", "--seeds", "2"];
    let healthy = orthochain(&small);
    assert_eq!(code(&healthy), 0, "{}", String::from_utf8_lossy(&healthy.stderr));
    let broken = orthochain(&[&small[..], &["--omit-bn-scaling"]].concat());
    assert_eq!(code(&broken), 1);
    let stdout = String::from_utf8(broken.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.contains(",check:unit_norm,0.")));
}

#[test]
fn negative_control_is_rejected_outside_the_battery() {
    assert_eq!(code(&orthochain(&["chain", "--omit-bn-scaling"])), 2);
}
