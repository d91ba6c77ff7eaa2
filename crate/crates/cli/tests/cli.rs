use std::fs;
use std::path::Path;
use std::process::{Command as Process, Output};

use clap::Parser;
use scatter_cli::{sidecar_path, Cli, ExperimentConfig, EXIT_ACCURACY, EXIT_OK, EXIT_VALIDATION};

fn scatter(args: &[&str], cwd: &Path) -> Output {
    Process::new(env!("CARGO_BIN_EXE_scatter"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SCATTER_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn config_round_trips_through_json() {
    for argv in [
        vec!["scatter", "coeffs", "--pmax", "4", "--format", "json"],
        vec!["scatter", "simulate", "--m", "logpow:2,0.5", "--tau", "1e4", "--pmax", "3", "--seed", "9"],
        vec!["scatter", "torus", "--alpha-sq", "2/3", "--cutoff", "50", "--tau", "3.5", "--phi", "-1.2"],
        vec!["scatter", "weyl", "--m", "pow:1,0.3", "--lambdas", "100,1000", "--replicas", "10"],
        vec!["scatter", "limit", "--p", "3", "--l", "inf", "--n", "5"],
        vec!["scatter", "limit", "psi", "--p", "2", "--points", "x.csv"],
        vec!["scatter", "na-check", "--variant", "square", "--trials", "3"],
        vec!["scatter", "report", "--only", "1,2"],
    ] {
        let cli = Cli::try_parse_from(&argv).unwrap();
        let cfg = ExperimentConfig { command: cli.command.unwrap() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg, "{argv:?}");
    }
}

#[test]
fn coefficients_are_exact_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let o = scatter(&["coeffs", "--pmax", "3"], dir.path());
    assert_eq!(code(&o), EXIT_OK);
    let out = String::from_utf8(o.stdout).unwrap();
    let a: Vec<&str> = out.lines().skip(1).take(3).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(a, ["1", "1/4", "1/9"]);
}

#[test]
fn same_seed_same_file_and_config_rerun_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["simulate", "--m", "const:1", "--tau", "2e3", "--pmax", "3", "--replicas", "20", "--seed", "5", "--out", out]
    };
    assert_eq!(code(&scatter(&args("a.csv"), dir.path())), EXIT_OK);
    assert_eq!(code(&scatter(&args("b.csv"), dir.path())), EXIT_OK);
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());

    let sidecar = sidecar_path(&dir.path().join("a.csv"));
    assert!(sidecar.exists());
    fs::rename(dir.path().join("a.csv"), dir.path().join("first.csv")).unwrap();
    let o = scatter(&["--config", sidecar.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), EXIT_OK);
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("first.csv")).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["weyl", "--m", "logpow:1,0.5", "--lambdas", "300,3000", "--replicas", "64", "--seed", "2"];
    let one = scatter(&[&["--threads", "1"], &base[..]].concat(), dir.path());
    let four = scatter(&[&["--threads", "4"], &base[..]].concat(), dir.path());
    assert_eq!(code(&one), EXIT_OK);
    assert_eq!(one.stdout, four.stdout);

    let na = ["na-check", "--trials", "40", "--seed", "3"];
    let one = scatter(&[&["--threads", "1"], &na[..]].concat(), dir.path());
    let three = scatter(&[&["--threads", "3"], &na[..]].concat(), dir.path());
    assert_eq!(code(&one), EXIT_OK);
    assert_eq!(one.stdout, three.stdout);
}

#[test]
fn invalid_input_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--m", "pow:1,1.0", "--tau", "100"],
        vec!["simulate", "--m", "logpow:1,-0.5", "--tau", "100"],
        vec!["frobnicate"],
        vec!["coeffs", "--pmax", "many"],
        vec!["limit", "psi", "--p", "1", "--points", "absent.csv"],
        vec!["limit", "--p", "2", "--proxy-tau", "10"],
        vec!["--threads", "0", "coeffs"],
        vec!["report", "--only", "99"],
        vec![],
    ] {
        let o = scatter(&args, dir.path());
        assert_eq!(code(&o), EXIT_VALIDATION, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_and_subcommand_together_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&scatter(&["coeffs", "--pmax", "2", "--out", "c.csv"], dir.path())), EXIT_OK);
    let o = scatter(&["--config", "c.csv.config.json", "coeffs"], dir.path());
    assert_eq!(code(&o), EXIT_VALIDATION);
}

#[test]
fn psi_reads_points_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pts.csv"), "x1,x2\n# comment\n0,0\n0.5,-1\n").unwrap();
    let o = scatter(&["limit", "psi", "--p", "2", "--points", "pts.csv", "--format", "json"], dir.path());
    assert_eq!(code(&o), EXIT_OK);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["re"], 1.0);
    assert_eq!(rows[0]["im"], 0.0);
    let abs = rows[1]["abs"].as_f64().unwrap();
    assert!(abs > 0.0 && abs <= 1.0);
}

#[test]
fn report_of_a_passing_subset_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = scatter(&["report", "--only", "1,5", "--out", "r.json"], dir.path());
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("\"passed\":true"));
    assert_ne!(EXIT_ACCURACY, EXIT_OK);
}
