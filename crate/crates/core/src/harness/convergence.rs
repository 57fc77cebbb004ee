//! Grid convergence against the advected vortex.

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::diagnostics::{build_discretization, initial_field, l2_errors};
use crate::harness::ic::HALF_WIDTH;
use crate::timeint::{integrate, IntegrateConfig, StepSize};
use crate::with_dim;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub elements: usize,
    pub h: f64,
    pub l2_rho: f64,
    pub l2_rhoe: f64,
    /// `log2(e_{h} / e_{h/2})` against the previous level; `None` on the first.
    pub order_rho: Option<f64>,
    pub order_rhoe: Option<f64>,
}

fn order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

/// Runs `cfg` on `elements[i]^d` meshes and reports the errors at the final time.
pub fn convergence_study(cfg: &RunConfig, elements: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if !cfg.ic.has_exact() {
        return Err(Error::config("ic", format!("{} has no exact solution", cfg.ic)));
    }
    if elements.is_empty() {
        return Err(Error::config("levels", "need at least one mesh level"));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (level, &k) in elements.iter().enumerate() {
        let mut c = cfg.clone();
        c.elements = k;
        let (l2_rho, l2_rhoe) = with_dim!(c.d, D => level_errors::<D>(&c))
            .map_err(|e| Error::Benchmark(format!("level {level} ({k} elements): {e}")))?;
        let h = 2.0 * HALF_WIDTH / k as f64;
        let (order_rho, order_rhoe) = match rows.last() {
            Some(prev) => {
                let r = prev.h / h;
                (Some(order(prev.l2_rho, l2_rho, r)), Some(order(prev.l2_rhoe, l2_rhoe, r)))
            }
            None => (None, None),
        };
        rows.push(ConvergenceRow { level, elements: k, h, l2_rho, l2_rhoe, order_rho, order_rhoe });
    }
    Ok(rows)
}

fn level_errors<const D: usize>(cfg: &RunConfig) -> Result<(f64, f64)> {
    let disc = build_discretization::<D>(cfg)?;
    let u0 = initial_field(&disc, &cfg.ic);
    let icfg = IntegrateConfig::new(cfg.stop, StepSize::Cfl(cfg.controller()?));
    let out = integrate(&disc, u0, 0.0, &icfg, |_, _| Ok(())).map_err(Error::from)?;
    let gas = disc.gas;
    let e = l2_errors(&disc, &out.u, |x| cfg.ic.exact(x, out.t, &gas).unwrap());
    Ok((e.rho, e.rho_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_stream_errors_are_roundoff() {
        let mut cfg = RunConfig::convergence_default();
        cfg.apply_overrides(&["ic=free_stream", "t_end=0.5", "mesh=curved"]).unwrap();
        let rows = convergence_study(&cfg, &[2, 4]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].order_rho.is_none() && rows[1].order_rho.is_some());
        assert!(rows.iter().all(|r| r.l2_rho < 1e-12 && r.l2_rhoe < 1e-11), "{rows:?}");
        assert_eq!(rows[1].h, 2.5);
    }

    #[test]
    fn short_vortex_study_converges() {
        let mut cfg = RunConfig::convergence_default();
        cfg.apply_overrides(&["t_end=0.5"]).unwrap();
        let rows = convergence_study(&cfg, &[4, 8]).unwrap();
        assert!(rows[1].l2_rho < rows[0].l2_rho);
        assert!(rows[1].order_rho.unwrap() > 2.0, "{rows:?}");
    }

    #[test]
    fn needs_an_exact_solution() {
        let mut cfg = RunConfig::convergence_default();
        cfg.apply_overrides(&["ic=sinusoidal"]).unwrap();
        assert!(matches!(convergence_study(&cfg, &[2]), Err(Error::Config { .. })));
        assert!(convergence_study(&RunConfig::convergence_default(), &[]).is_err());
    }
}
