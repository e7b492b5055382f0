use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use polgrad_cli::trace::Trace;

fn polgrad(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polgrad"));
    cmd.args(args).env_remove("POLGRAD_OUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("POLGRAD_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn bandit_preset_writes_two_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = polgrad(&["run", "--preset", "fig1-bandit", "--out-dir", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["fig1-bandit-pg.csv", "fig1-bandit-npg.csv"] {
        let trace = Trace::read(&dir.path().join(name)).unwrap();
        assert_eq!(trace.columns[0], "iter");
        assert!(trace.column_index("tv_opt").is_some());
        assert_eq!(trace.rows.len(), 201);
        assert_eq!(trace.meta("family"), Some("mdp"));
    }
}

#[test]
fn rps_preset_uses_the_output_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = polgrad(&["run", "--preset", "fig2-rps"], Some(dir.path()));
    assert!(out.status.success());
    let trace = Trace::read(&dir.path().join("fig2-rps-mwu.csv")).unwrap();
    assert_eq!(&trace.columns[1..4], ["mu_0", "mu_1", "mu_2"]);
    assert_eq!(trace.rows[0][1..4], [0.4, 0.4, 0.2]);
    assert_eq!(trace.rows.len(), 1001);
}

#[test]
fn zero_iterations_and_relative_problem_files() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "rps.json", r#"{"payoff": [[0, -1, 1], [1, 0, -1], [-1, 1, 0]]}"#);
    let config = write(
        dir.path(),
        "run.json",
        r#"{"family": "matrix_game", "problem": {"file": "rps.json"}, "method": "omwu",
            "learning_rate": 0.1, "max_iters": 0, "output": "zero.csv"}"#,
    );
    let work = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_polgrad"))
        .args(["run", "--config", &config])
        .current_dir(work.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = Trace::read(&work.path().join("zero.csv")).unwrap();
    assert_eq!(trace.rows.len(), 1);
    assert_eq!(trace.rows[0][0], 0.0);
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = |out: &str| {
        format!(
            r#"{{"family": "markov_game", "problem": {{"random": {{"seed": 3}}}}, "method": "reg_omwu",
                "tau": 0.1, "max_iters": 300, "record_every": 50, "output": "{out}"}}"#
        )
    };
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out_path = dir.path().join(format!("{name}.csv"));
        let config = write(dir.path(), &format!("{name}.json"), &text(out_path.to_str().unwrap()));
        assert!(polgrad(&["run", "--config", &config], None).status.success());
        files.push(fs::read(out_path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let head = String::from_utf8(files[0].clone()).unwrap();
    assert!(head.contains("# seed: 3\n"));
    assert!(head.contains("# config_sha256: "));
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"family": "mdp", "problem": {"preset": "bandit"}, "method": "mwu", "max_iters": 5}"#,
        r#"{"family": "mdp", "problem": {"preset": "bandit"}, "method": "entropy_npg", "tau": 0.1,
            "learning_rate": 50, "max_iters": 5}"#,
        r#"{"family": "lqr", "problem": {"preset": "scalar"}, "method": "pg", "initial_gain": [[0]], "max_iters": 5}"#,
        r#"{"family": "mdp", "problem": {"file": "missing.json"}, "method": "npg", "max_iters": 5}"#,
        r#"{"family": "mdp""#,
    ];
    for (i, text) in cases.iter().enumerate() {
        let config = write(dir.path(), &format!("c{i}.json"), text);
        let out = polgrad(&["run", "--config", &config], Some(dir.path()));
        let expected = if i == 3 { 1 } else { 2 };
        assert_eq!(out.status.code(), Some(expected), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(polgrad(&["run", "--preset", "fig9"], None).status.code(), Some(2));
}

#[test]
fn destabilizing_run_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write(
        dir.path(),
        "c.json",
        r#"{"family": "lqr", "problem": {"preset": "scalar"}, "method": "pg", "learning_rate": 1000,
            "initial_gain": [[0.6]], "max_iters": 5}"#,
    );
    let out = polgrad(&["run", "--config", &config], Some(dir.path()));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rate_fit_on_geometric_and_entropy_npg_traces() {
    let dir = tempfile::tempdir().unwrap();
    let mut geometric = String::from("iter,gap\n");
    for t in 0..40 {
        geometric.push_str(&format!("{t},{}\n", 0.9f64.powi(t)));
    }
    let path = write(dir.path(), "g.csv", &geometric);
    let out = polgrad(&["rate-fit", "--trace", &path, "--from", "0", "--to", "39"], None);
    assert!(out.status.success());
    let text = stdout(&out);
    let factor: f64 = text
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("factor="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((factor - 0.9).abs() <= 1e-9, "{text}");

    let (eta, tau) = (0.5, 0.1);
    let trace = dir.path().join("npg.csv");
    let trace = trace.to_str().unwrap();
    let config = write(
        dir.path(),
        "npg.json",
        &format!(
            r#"{{"family": "mdp", "problem": {{"random": {{"seed": 9, "gamma": 0.9}}}}, "method": "entropy_npg",
                "learning_rate": {eta}, "tau": {tau}, "max_iters": 100, "output": "{trace}"}}"#
        ),
    );
    assert!(polgrad(&["run", "--config", &config], None).status.success());
    let out = polgrad(&["rate-fit", "--trace", trace, "--from", "5", "--to", "60", "--column", "gap_sup"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let factor: f64 = stdout(&out)
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("factor="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(factor <= 1.0 - eta * tau + 0.02, "{factor}");
}

#[test]
fn rate_fit_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "z.csv", "iter,gap\n0,1\n1,0\n2,0.5\n");
    let fit = |from: &str, to: &str| polgrad(&["rate-fit", "--trace", &path, "--from", from, "--to", to], None);
    assert_eq!(fit("0", "2").status.code(), Some(3));
    assert_eq!(fit("2", "0").status.code(), Some(2));
    let missing = dir.path().join("none.csv");
    let out = polgrad(&["rate-fit", "--trace", missing.to_str().unwrap(), "--from", "0", "--to", "1"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_reports_per_criterion() {
    let out = polgrad(&["check", "--suite", "core_numeric"], None);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("criterion=core_numeric suite=core_numeric status=pass"), "{text}");
    assert!(text.contains("summary suite=core_numeric checks=1 failed=0 status=pass"));
    assert_eq!(polgrad(&["check", "--suite", "nope"], None).status.code(), Some(2));
}
