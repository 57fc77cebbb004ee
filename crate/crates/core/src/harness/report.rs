//! CSV tables.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::bench::{MicrobenchResult, PidResult};
use crate::harness::convergence::ConvergenceRow;
use crate::harness::diagnostics::EntropySample;

pub const PID_HEADER: [&str; 9] = ["d", "p", "mesh", "scheme", "flux", "n_rhs", "dofs", "pid_mean", "pid_std"];
pub const MICROBENCH_HEADER: [&str; 6] = ["flux", "form", "d", "ns_mean", "ns_std", "n_samples"];
pub const CONVERGENCE_HEADER: [&str; 6] = ["level", "h", "l2_rho", "l2_rhoe", "order_rho", "order_rhoe"];
pub const ENTROPY_HEADER: [&str; 4] = ["step", "t", "dt", "dSdt_normalized"];

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes `header` and `rows` to `dir/name`, creating `dir` if needed.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(path)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn pid_rows(results: &[PidResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            vec![
                r.d.to_string(),
                r.p.to_string(),
                r.mesh.clone(),
                r.scheme.clone(),
                r.flux.clone(),
                r.n_rhs.to_string(),
                r.dofs.to_string(),
                format!("{:e}", r.pid_mean),
                format!("{:e}", r.pid_std),
            ]
        })
        .collect()
}

pub fn microbench_rows(results: &[MicrobenchResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            vec![
                r.flux.to_string(),
                r.form.to_string(),
                r.d.to_string(),
                format!("{:.3}", r.ns_mean),
                format!("{:.3}", r.ns_std),
                r.n_samples.to_string(),
            ]
        })
        .collect()
}

pub fn convergence_rows(rows: &[ConvergenceRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.level.to_string(),
                format!("{}", r.h),
                format!("{:e}", r.l2_rho),
                format!("{:e}", r.l2_rhoe),
                opt(r.order_rho),
                opt(r.order_rhoe),
            ]
        })
        .collect()
}

pub fn entropy_rows(samples: &[EntropySample]) -> Vec<Vec<String>> {
    samples
        .iter()
        .map(|s| vec![s.step.to_string(), format!("{:e}", s.t), format!("{:e}", s.dt), format!("{:e}", s.ds_dt_normalized)])
        .collect()
}
