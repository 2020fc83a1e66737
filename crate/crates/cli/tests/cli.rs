use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dicke_dpt::scenario::strip_stamp;

const SMALL: &str = r#"
name = "small"
task = "loschmidt"
seed = 3

[model]
kind = "reduced"
n_atoms = [4, 6]
lambda = 1.2

[time]
t_max = 2.0
n_out = 21
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke-dpt")).args(args).output().unwrap()
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn lists_the_builtin_scenarios() {
    let out = cli(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["fig1", "fig2", "fig3", "fig4", "fig5"]);
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL);
    assert!(cli(&["validate", &good]).status.success());

    let bad = write_config(dir.path(), &SMALL.replace("lambda = 1.2", "lambda = 1.2\ncolour = 1"));
    let out = cli(&["validate", &bad]);
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("colour"));

    let out = cli(&["scenario", "nope"]);
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["error"], "config");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let bodies = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = cli(&["run", &config, "--out", out_dir.to_str().unwrap(), "--threads", "1"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        ["rate_function_N4.csv", "rate_function_N6.csv"].map(|f| {
            let text = fs::read_to_string(out_dir.join(f)).unwrap();
            assert!(!text.contains('\r'));
            let (header, body) = strip_stamp(&text);
            assert_eq!(header, "t,L,r,resolved");
            assert_eq!(body.lines().count(), 21);
            body.to_string()
        })
    };
    assert_eq!(bodies("a"), bodies("b"));
}

#[test]
fn seed_flag_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("o");
    let out = cli(&["run", &config, "--out", out_dir.to_str().unwrap(), "--seed", "99"]);
    assert!(out.status.success());
    let summary: toml::Table = toml::from_str(&fs::read_to_string(out_dir.join("summary.toml")).unwrap()).unwrap();
    assert_eq!(summary["seed"].as_integer(), Some(99));
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("o");
    // a directory where the summary should go makes the last write fail
    fs::create_dir_all(out_dir.join("summary.toml")).unwrap();
    let out = cli(&["run", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["error"], "io");
    assert_eq!(err["scenario"], "small");
    let left: Vec<_> = fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left, ["summary.toml"]);
}
