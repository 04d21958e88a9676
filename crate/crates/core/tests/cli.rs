use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chemotaxis_core::snapshot::read_snapshot;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Copies a shipped config into `dir`, redirecting its output there.
fn stage(name: &str, dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(configs().join(name)).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for l in lines.iter_mut() {
        if l.starts_with("dir = ") {
            *l = format!("dir = {:?}", dir.join("out"));
        }
    }
    let path = dir.join(name);
    fs::write(&path, edit(lines.join("\n"))).unwrap();
    path
}

fn chemotaxis(args: &[&str], cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
        .args(args)
        .arg(cfg)
        .env_remove("CHEMOTAXIS_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bounds_without_growth_prints_mass_over_mu() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("no_growth.toml", dir.path(), |t| t);
    let out = chemotaxis(&["bounds"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let value = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_eq!(text.lines().next(), Some("name,value"));
    assert!((value("C2") - value("C1") / 0.5).abs() <= 1e-15 * value("C2"));
    for i in 1..=11 {
        assert!(value(&format!("C{i}")) > 0.0);
    }
}

#[test]
fn run_with_zero_mu_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("standard.toml", dir.path(), |t| t.replace("mu = 0.5", "mu = 0.0"));
    let out = chemotaxis(&["run"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("μ > 0 be arbitrary"));
    assert!(
        !dir.path().join("out/run").exists(),
        "nothing is written for a rejected config"
    );
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("standard.toml", dir.path(), |t| {
        t.replace("eps = 0.1", "eps = 0.1\ndelta = 1.0")
    });
    let out = chemotaxis(&["run"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delta") && err.contains("line"), "{err}");
}

#[test]
fn run_writes_ledger_checks_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("standard.toml", dir.path(), |t| {
        t.replace("cells = [256]", "cells = [64]")
    });
    let out = chemotaxis(&["run"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let run = dir.path().join("out/run");
    let ledger = fs::read_to_string(run.join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 1 + 101);
    let check = fs::read_to_string(run.join("check.csv")).unwrap();
    assert!(check.starts_with("lemma_id,value,bound,margin,pass"));
    assert!(check.lines().skip(1).all(|l| l.ends_with(",true")));
    let last = read_snapshot(&run.join("snapshots/snap_00100.chsn")).unwrap();
    assert_eq!(last.counts, vec![64]);
    assert_eq!(last.t, 1.0);
}

#[test]
fn reports_and_exit_codes_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("standard.toml", dir.path(), |t| {
        t.replace("cells = [256]", "cells = [32]")
    });
    let first = chemotaxis(&["audit"], &cfg);
    let a = fs::read(dir.path().join("out/audit/weakform.csv")).unwrap();
    let second = Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
        .args(["audit"])
        .arg(&cfg)
        .env("CHEMOTAXIS_WORKERS", "1")
        .output()
        .unwrap();
    let b = fs::read(dir.path().join("out/audit/weakform.csv")).unwrap();
    assert_eq!(first.status.code(), second.status.code());
    assert_eq!(a, b);
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn audit_on_standard_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("standard.toml", dir.path(), |t| t);
    let out = chemotaxis(&["audit"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report = fs::read_to_string(dir.path().join("out/audit/weakform.csv")).unwrap();
    assert!(report.starts_with("testfn_id,mode,S,V,L,tol,pass"));
    assert_eq!(report.lines().count(), 1 + 12);
}

#[test]
fn oracle_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("uniform.toml", dir.path(), |t| t);
    assert_eq!(chemotaxis(&["oracle"], &cfg).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/oracle/oracle.csv")).unwrap();
    assert!(csv.starts_with("quantity,solver,oracle,rel_error,pass"));

    // an unattainable tolerance fails the check but still writes the report
    let strict = stage("uniform.toml", dir.path(), |t| {
        t.replace("rel_tol = 1e-3", "rel_tol = 1e-9")
    });
    fs::remove_file(dir.path().join("out/oracle/oracle.csv")).unwrap();
    assert_eq!(chemotaxis(&["oracle"], &strict).status.code(), Some(2));
    assert!(dir.path().join("out/oracle/oracle.csv").is_file());

    let standard = stage("standard.toml", dir.path(), |t| t);
    assert_eq!(
        chemotaxis(&["oracle"], &standard).status.code(),
        Some(1),
        "needs uniform data"
    );
}

#[test]
fn refine_and_sweep_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let heat = stage("heat.toml", dir.path(), |t| t);
    let out = chemotaxis(&["refine"], &heat);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("out/refine/refine.csv")).unwrap();
    assert!(table.starts_with("axis_value,norm_name,difference,fitted_order"));
    assert_eq!(table.lines().count(), 1 + 4, "one row per level");

    let cfg = stage("standard.toml", dir.path(), |t| {
        t.replace("cells = [256]", "cells = [32]")
    });
    let out = chemotaxis(&["sweep-eps"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let table = fs::read_to_string(dir.path().join("out/sweep-eps/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 4);
}

#[test]
fn bad_worker_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stage("no_growth.toml", dir.path(), |t| t);
    let out = Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
        .arg("bounds")
        .arg(&cfg)
        .env("CHEMOTAXIS_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_subcommand_is_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_chemotaxis")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
