//! Command-line surface of the `chemotaxis` binary.
//!
//! Exit codes: 0 when every check passes, 2 when a check, audit or solver
//! invariant fails (reports are still written), 1 on usage or
//! configuration errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::convergence::{epsilon_sweep, ode_oracle, refinement_study, SweepResult};
use crate::error::{Error, Result};
use crate::estimates::{bounds_from_data, check, log_mass_identity_residual, write_ledger_csv};
use crate::fmt_num;
use crate::snapshot::write_snapshot;
use crate::stepper::Trajectory;
use crate::weakform::audit;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CHECK_FAILED: u8 = 2;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "CHEMOTAXIS_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "chemotaxis",
    version,
    about = "Singular-sensitivity chemotaxis solver and verification harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate and write the estimate ledger, the check report and snapshots.
    Run { config: PathBuf },
    /// Integrate and audit the weak formulations on the configured suite.
    Audit { config: PathBuf },
    /// Cauchy differences over the configured ε list.
    SweepEps { config: PathBuf },
    /// Grid/step refinement study with fitted orders.
    Refine { config: PathBuf },
    /// Compare a spatially uniform run with the ODE oracle.
    Oracle { config: PathBuf },
    /// Print the bound constants only.
    Bounds { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Run { config }
            | Command::Audit { config }
            | Command::SweepEps { config }
            | Command::Refine { config }
            | Command::Oracle { config }
            | Command::Bounds { config } => config,
        }
    }

    fn dir_name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Audit { .. } => "audit",
            Command::SweepEps { .. } => "sweep-eps",
            Command::Refine { .. } => "refine",
            Command::Oracle { .. } => "oracle",
            Command::Bounds { .. } => "bounds",
        }
    }
}

/// Sizes the global rayon pool from [`WORKERS_ENV`]; unset means machine
/// parallelism.
pub fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::ConfigInvalid(format!("{WORKERS_ENV}={raw:?} must be a positive integer")))?;
    // a pool built earlier in the same process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Solver aborts count as failed checks; everything else is a usage or
/// configuration problem.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NonPositiveSignal { .. } | Error::InvariantBreach { .. } | Error::StepCollapse { .. } => {
            EXIT_CHECK_FAILED
        }
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code. Summaries go to `out`, diagnostics to `err`.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = init_workers().and_then(|_| execute(&cli.command, out));
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code_for(&e)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn output_dir(cfg: &RunConfig, cmd: &Command) -> Result<PathBuf> {
    let dir = cfg.output.dir.join(cmd.dir_name());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs one subcommand; `Ok(false)` means a check failed.
pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<bool> {
    let cfg = load_config(cmd.config())?;
    match cmd {
        Command::Bounds { .. } => bounds(&cfg, out),
        Command::Run { .. } => {
            let dir = output_dir(&cfg, cmd)?;
            let traj = cfg.scenario().run()?;
            write_snapshots(&traj, &dir.join("snapshots"))?;
            run_checks(&cfg, &traj, &dir, out)
        }
        Command::Audit { .. } => {
            let dir = output_dir(&cfg, cmd)?;
            let traj = cfg.scenario().run()?;
            let checks = run_checks(&cfg, &traj, &dir, out)?;
            let suite = cfg.suite(&traj.grid)?;
            let report = audit(&traj, &suite, cfg.audit.tol_factor)?;
            report.write_csv(create(&dir.join("weakform.csv"))?)?;
            let failed = report.entries.iter().filter(|e| !e.pass).count();
            writeln!(
                out,
                "weak-form audit: {} entries, {failed} failed",
                report.entries.len()
            )?;
            for gap in &report.gaps {
                writeln!(
                    out,
                    "regularization gap {}: S {} V {} L {}",
                    gap.testfn_id,
                    fmt_num(gap.s),
                    fmt_num(gap.v),
                    fmt_num(gap.l)
                )?;
            }
            Ok(checks && report.pass())
        }
        Command::SweepEps { .. } => {
            let dir = output_dir(&cfg, cmd)?;
            let res = epsilon_sweep(&cfg.scenario(), &cfg.sweep.eps)?;
            if let Some(dt) = res.fixed_dt {
                writeln!(out, "shared step cap {}", fmt_num(dt))?;
            }
            let du = res.differences("u_l1");
            let decreasing = du.windows(2).all(|w| w[1] < w[0]);
            writeln!(out, "u differences strictly decreasing: {decreasing}")?;
            finish_sweep(&res, &dir.join("sweep.csv"), out)
        }
        Command::Refine { .. } => {
            let dir = output_dir(&cfg, cmd)?;
            let res = refinement_study(
                &cfg.scenario(),
                cfg.refine.levels,
                cfg.refine.dt_scaling,
                cfg.refine.reference,
            )?;
            finish_sweep(&res, &dir.join("refine.csv"), out)
        }
        Command::Oracle { .. } => {
            let dir = output_dir(&cfg, cmd)?;
            oracle(&cfg, &dir, out)
        }
    }
}

fn bounds(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let (g, u0, v0) = cfg.scenario().build()?;
    let b = bounds_from_data(&u0, &v0, &cfg.model, &g, cfg.model.t_end)?;
    writeln!(out, "name,value")?;
    for (name, value) in b.table() {
        writeln!(out, "{name},{}", fmt_num(value))?;
    }
    Ok(true)
}

fn write_snapshots(traj: &Trajectory, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, s) in traj.snapshots.iter().enumerate() {
        write_snapshot(s, &traj.grid, &dir.join(format!("snap_{i:05}.chsn")))?;
    }
    Ok(())
}

/// Writes `ledger.csv` and `check.csv` into `dir` and prints a summary.
fn run_checks(cfg: &RunConfig, traj: &Trajectory, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    write_ledger_csv(&traj.ledger_rows, create(&dir.join("ledger.csv"))?)?;
    let (u0, v0) = (&traj.initial().u, &traj.initial().v);
    let b = bounds_from_data(u0, v0, &cfg.model, &traj.grid, cfg.model.t_end)?;
    let report = check(&traj.ledger.row(), &b, traj.grid.max_spacing())?;
    report.write_csv(create(&dir.join("check.csv"))?)?;

    let d = &traj.diagnostics;
    writeln!(
        out,
        "steps {}  dt in [{}, {}]",
        d.steps,
        fmt_num(d.min_dt),
        fmt_num(d.max_dt)
    )?;
    writeln!(out, "min u {}", fmt_num(d.min_u))?;
    writeln!(out, "signal floor ratio {}", fmt_num(d.lower_bound_ratio))?;
    writeln!(out, "largest sup-norm increase {}", fmt_num(d.max_sup_increase))?;
    writeln!(out, "log-mass residual {}", fmt_num(log_mass_identity_residual(traj)))?;
    for e in report.entries.iter().filter(|e| !e.pass) {
        writeln!(
            out,
            "FAILED {}: {} > {}",
            e.lemma_id,
            fmt_num(e.value),
            fmt_num(e.bound)
        )?;
    }
    let invariants = d.invariants_hold();
    if !invariants {
        writeln!(out, "FAILED solver invariants")?;
    }
    writeln!(
        out,
        "estimate checks: {}",
        if report.all_pass() { "pass" } else { "fail" }
    )?;
    Ok(invariants && report.all_pass())
}

fn finish_sweep(res: &SweepResult, path: &Path, out: &mut dyn Write) -> Result<bool> {
    res.write_csv(create(path)?)?;
    for (norm, order) in &res.orders {
        match order {
            Some(o) => writeln!(out, "{norm}: fitted order {}", fmt_num(*o))?,
            None => writeln!(out, "{norm}: no order (fewer than two positive differences)")?,
        }
    }
    for f in &res.failures {
        writeln!(
            out,
            "run {} at {} failed: {}",
            f.index,
            fmt_num(f.axis_value),
            f.message
        )?;
    }
    Ok(res.failures.is_empty())
}

fn oracle(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let (Some(u0), Some(v0)) = (cfg.initial.u0.uniform_value(), cfg.initial.v0.uniform_value()) else {
        return Err(Error::ConfigInvalid(
            "[initial] oracle needs spatially uniform u0 and v0".into(),
        ));
    };
    let traj = cfg.scenario().run()?;
    let (ue, ve) = ode_oracle(u0, v0, &cfg.model, cfg.model.t_end)?;
    let rel = |x: f64, exact: f64| {
        if exact != 0.0 {
            (x - exact).abs() / exact.abs()
        } else {
            x.abs()
        }
    };
    let mut w = csv::Writer::from_writer(create(&dir.join("oracle.csv"))?);
    w.write_record(["quantity", "solver", "oracle", "rel_error", "pass"])?;
    let mut all = true;
    for (name, field, exact) in [("u", &traj.last().u, ue), ("v", &traj.last().v, ve)] {
        // worst cell, so a spatially drifting solution is caught too
        let (worst, err) = field
            .values()
            .iter()
            .map(|&x| (x, rel(x, exact)))
            .fold((exact, 0.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        let pass = err <= cfg.oracle.rel_tol;
        all &= pass;
        w.write_record([
            name.to_string(),
            fmt_num(worst),
            fmt_num(exact),
            fmt_num(err),
            pass.to_string(),
        ])?;
        writeln!(
            out,
            "{name}(T): solver {} oracle {} relative error {}",
            fmt_num(worst),
            fmt_num(exact),
            fmt_num(err)
        )?;
    }
    w.flush()?;
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (u8, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with_args(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["chemotaxis"]).0, EXIT_USAGE);
        assert_eq!(call(&["chemotaxis", "frobnicate", "x.toml"]).0, EXIT_USAGE);
        let (code, _, err) = call(&["chemotaxis", "run", "/nonexistent/cfg.toml"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.starts_with("error:"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["chemotaxis", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("sweep-eps") && out.contains("bounds"));
    }

    #[test]
    fn solver_aborts_count_as_check_failures() {
        assert_eq!(
            exit_code_for(&Error::StepCollapse { t: 0.1, dt: 1e-20 }),
            EXIT_CHECK_FAILED
        );
        assert_eq!(exit_code_for(&Error::ConfigInvalid("x".into())), EXIT_USAGE);
    }
}
