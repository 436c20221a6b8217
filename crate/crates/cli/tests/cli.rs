//! End-to-end checks of the installed binary: flag surface, exit-code
//! contract, and artifact writing. Heavy numerical verification lives
//! in the library's own test suites; these runs stay deliberately tiny.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nlwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlwave"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const TINY: &str = r#"
[model]
name = "pp2"

[kernel]
kind = "gaussian"
params = { s = 1.0 }

[grid]
half_width = 60.0
dx = 0.2

[wave]
tol = 1.0e-6
max_time = 200.0

[run]
t_end = 2.0
observe_every = 1.0
seed = 3
"#;

#[test]
fn help_lists_every_subcommand() {
    let out = nlwave(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in ["speed", "models", "wave", "simulate", "verify", "decay", "sweep"] {
        assert!(text.contains(sub), "missing subcommand {sub}:\n{text}");
    }
}

#[test]
fn models_list_names_the_catalog() {
    let out = nlwave(&["models", "list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in ["pp2", "epidemic", "competitors3", "preys3_tyj", "preys3_zyl"] {
        assert!(text.contains(name), "missing model {name}:\n{text}");
    }
}

#[test]
fn speed_prints_the_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", TINY);
    let out = nlwave(&["speed", "--config", &config, "--table", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("1.64872127"), "{text}");
    assert!(text.contains("G(lambda)"), "{text}");
}

#[test]
fn rejected_config_exits_one_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", &format!("{TINY}\nnot_a_key = 1\n"));
    let out = nlwave(&["speed", "--config", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not_a_key"), "{}", stderr(&out));
}

#[test]
fn subminimal_speed_exits_two_with_a_clean_abort() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "c.toml",
        &format!("{TINY}\n[speed]\nmultiplier = 0.5\n"),
    );
    let out_dir = dir.path().join("run");
    let out = nlwave(&[
        "verify",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stdout(&out).contains("aborted"), "{}", stdout(&out));
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn simulate_writes_artifacts_and_exits_by_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.toml", TINY);
    let out_dir = dir.path().join("run");
    let out = nlwave(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    // Two time units cannot reach the convergence tolerance; the run
    // completes and the verdict fails.
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("status: complete"), "{text}");
    assert!(text.contains("NOT_CONVERGED"), "{text}");
    for file in ["manifest.json", "profile.dat", "trace.ndjson", "state.dat"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
}
