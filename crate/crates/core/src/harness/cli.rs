//! Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 configuration error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::fluxes::FluxKind;
use crate::harness::bench::{measure_pid, microbench_flux, FluxForm};
use crate::harness::config::RunConfig;
use crate::harness::convergence::convergence_study;
use crate::harness::diagnostics::run;
use crate::harness::ic::InitialCondition;
use crate::harness::report::*;
use crate::harness::verify::run_verify;
use crate::timeint::StopCondition;

#[derive(Debug, Parser)]
#[command(name = "fluxdiff", version, about = "Flux-differencing DG solver: runs, convergence studies and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file with one `key = value` per line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Element-parallel RHS evaluation.
    #[arg(long)]
    parallel: bool,
    /// `key=value` overrides, applied after the config file.
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and monitor entropy.
    Run(ConfigArgs),
    /// Vortex convergence study over a mesh sequence.
    Convergence {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Elements per direction of each level.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        levels: Vec<usize>,
    },
    /// Runtime per RHS evaluation and degree of freedom.
    Pid {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        n_rhs: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Degrees to sweep; defaults to the configured degree.
        #[arg(long, value_delimiter = ',')]
        degrees: Vec<usize>,
        /// Volume fluxes to sweep; defaults to the configured flux.
        #[arg(long, value_delimiter = ',')]
        fluxes: Vec<String>,
    },
    /// Nanoseconds per numerical flux evaluation.
    Microbench {
        #[arg(long, value_delimiter = ',', default_value = "shima_etal,ranocha_ec")]
        fluxes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "cartesian,directional,rotated_pre,rotated_otf")]
        forms: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (the environment override still wins).
        #[arg(long, default_value = "fluxdiff_out")]
        output: PathBuf,
    },
    /// Run the property suite; fails on any violation.
    Verify,
}

fn load(args: &ConfigArgs, base: RunConfig) -> Result<RunConfig> {
    let mut cfg = base;
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&args.overrides)?;
    if args.parallel {
        cfg.rhs.parallel = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String], field: &str) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| {
            s.trim().parse().map_err(|e| match e {
                Error::Config { reason, .. } => Error::config(field, reason),
                e => e,
            })
        })
        .collect()
}

fn output_dir(path: &std::path::Path) -> PathBuf {
    std::env::var_os(crate::harness::config::OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| path.to_path_buf())
}

fn cmd_run(args: &ConfigArgs) -> Result<()> {
    let cfg = load(args, RunConfig::default())?;
    println!("# {cfg}");
    if cfg.ic == InitialCondition::Sinusoidal {
        println!("# note: the sinusoidal initial condition uses v = 0");
    }
    if cfg.stop == StopCondition::Steps(90) {
        println!("# note: fixed-step mode, 90 steps of the five-stage scheme");
    }
    let s = run(&cfg)?;
    let path = write_csv(&cfg.output_dir(), "entropy.csv", &ENTROPY_HEADER, &entropy_rows(&s.entropy))?;
    println!("steps={} t={:.6} rhs_evals={} dofs={}", s.steps, s.t, s.rhs_evals, s.dofs);
    println!("max |dS/dt| normalized = {:.3e}", s.max_abs_entropy_rate());
    println!("conservation drift = {:.3e}", s.conservation_drift);
    if let Some((r, e)) = s.l2_rho_rhoe {
        println!("L2 error rho = {r:.6e}, rhoe = {e:.6e}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_convergence(args: &ConfigArgs, levels: &[usize]) -> Result<()> {
    let cfg = load(args, RunConfig::convergence_default())?;
    println!("# {cfg}");
    let rows = convergence_study(&cfg, levels)?;
    let path = write_csv(&cfg.output_dir(), "convergence.csv", &CONVERGENCE_HEADER, &convergence_rows(&rows))?;
    for r in &rows {
        let o = r.order_rho.map(|o| format!("{o:.2}")).unwrap_or_else(|| "-".into());
        println!("{:>3} elements  h={:<8} L2(rho)={:.4e}  order={o}", r.elements, r.h, r.l2_rho);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_pid(args: &ConfigArgs, n_rhs: usize, repeats: usize, degrees: &[usize], fluxes: &[String]) -> Result<()> {
    let base = load(args, RunConfig::default())?;
    let degrees = if degrees.is_empty() { vec![base.p] } else { degrees.to_vec() };
    let fluxes: Vec<FluxKind> = if fluxes.is_empty() { vec![base.rhs.volume_flux] } else { parse_list(fluxes, "fluxes")? };
    println!("# pid runs single-threaded; {repeats} repeats of {n_rhs} RHS evaluations after one warm-up");
    let mut results = vec![];
    for &p in &degrees {
        for &f in &fluxes {
            let mut cfg = base.clone();
            cfg.p = p;
            cfg.rhs.volume_flux = f;
            cfg.validate()?;
            let r = measure_pid(&cfg, n_rhs, repeats)?;
            println!("d={} p={} {} {}: PID {:.4e} s (std {:.1e})", r.d, r.p, r.scheme, r.flux, r.pid_mean, r.pid_std);
            results.push(r);
        }
    }
    let path = write_csv(&base.output_dir(), "pid.csv", &PID_HEADER, &pid_rows(&results))?;
    println!("wrote {}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_microbench(fluxes: &[String], forms: &[String], dims: &[usize], samples: usize, repeats: usize, seed: u64, output: &std::path::Path) -> Result<()> {
    let kinds: Vec<FluxKind> = parse_list(fluxes, "fluxes")?;
    let forms: Vec<FluxForm> = parse_list(forms, "forms")?;
    if let Some(d) = dims.iter().find(|d| !(2..=3).contains(*d)) {
        return Err(Error::config("dims", format!("must be 2 or 3, got {d}")));
    }
    let mut results = vec![];
    for &d in dims {
        for &k in &kinds {
            let mut row = vec![];
            for &form in &forms {
                let r = microbench_flux(k, form, d, samples, repeats, seed)?;
                println!("d={d} {k:<10} {form:<12} {:.2} ns (std {:.2})", r.ns_mean, r.ns_std);
                row.push(r);
            }
            // soft check of the expected ordering
            for w in row.windows(2) {
                if w[0].ns_mean > w[1].ns_mean {
                    println!("warn: d={d} {k}: {} ({:.2} ns) slower than {} ({:.2} ns)", w[0].form, w[0].ns_mean, w[1].form, w[1].ns_mean);
                }
            }
            results.extend(row);
        }
    }
    let path = write_csv(&output_dir(output), "microbench.csv", &MICROBENCH_HEADER, &microbench_rows(&results))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_verify() -> Result<bool> {
    let checks = run_verify()?;
    for c in &checks {
        println!("{c}");
    }
    Ok(checks.iter().all(|c| c.passed))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Convergence { cfg, levels } => cmd_convergence(cfg, levels).map(|_| true),
        Command::Pid { cfg, n_rhs, repeats, degrees, fluxes } => cmd_pid(cfg, *n_rhs, *repeats, degrees, fluxes).map(|_| true),
        Command::Microbench { fluxes, forms, dims, samples, repeats, seed, output } => {
            cmd_microbench(fluxes, forms, dims, *samples, *repeats, *seed, output).map(|_| true)
        }
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("error: property violations found");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        std::env::temp_dir().join(format!("fluxdiff_cli_{name}_{}", std::process::id()))
    }

    #[test]
    fn exit_codes() {
        assert_eq!(cli_main(["fluxdiff", "run", "--config", "/nonexistent/run.cfg"]), 2);
        assert_eq!(cli_main(["fluxdiff", "run", "p=99"]), 2);
        assert_eq!(cli_main(["fluxdiff", "run", "colour=red"]), 2);
        assert_eq!(cli_main(["fluxdiff", "frobnicate"]), 2);
        assert_eq!(cli_main(["fluxdiff", "microbench", "--fluxes", "roe"]), 2);
        // random states are too rough for a stable step on this mesh
        let out = tmp("diverge");
        let code = cli_main(["fluxdiff", "run", "ic=random", "elements=2", "cfl=50", "n_steps=200", &format!("output={}", out.display())]);
        assert_eq!(code, 1);
        let _ = std::fs::remove_dir_all(out);
    }

    #[test]
    fn run_writes_entropy_csv() {
        let out = tmp("run");
        let code = cli_main(["fluxdiff", "run", "elements=2", "n_steps=3", &format!("output={}", out.display())]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(out.join("entropy.csv")).unwrap();
        assert!(text.starts_with("step,t,dt,dSdt_normalized\n"));
        assert_eq!(text.lines().count(), 5);
        std::fs::remove_dir_all(out).unwrap();
    }

    #[test]
    fn pid_and_microbench_write_csv() {
        let out = tmp("bench");
        let o = format!("output={}", out.display());
        assert_eq!(cli_main(["fluxdiff", "pid", "elements=2", &o, "--n-rhs", "10", "--repeats", "2", "--degrees", "2,3"]), 0);
        let text = std::fs::read_to_string(out.join("pid.csv")).unwrap();
        assert!(text.starts_with("d,p,mesh,scheme,flux,n_rhs,dofs,pid_mean,pid_std\n"));
        assert_eq!(text.lines().count(), 3);
        let od = out.display().to_string();
        assert_eq!(cli_main(["fluxdiff", "microbench", "--dims", "2", "--samples", "20000", "--repeats", "2", "--output", &od]), 0);
        let text = std::fs::read_to_string(out.join("microbench.csv")).unwrap();
        assert!(text.starts_with("flux,form,d,ns_mean,ns_std,n_samples\n"));
        assert_eq!(text.lines().count(), 9);
        std::fs::remove_dir_all(out).unwrap();
    }

    #[test]
    fn verify_passes() {
        assert_eq!(cli_main(["fluxdiff", "verify"]), 0);
    }
}
