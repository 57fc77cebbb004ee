//! Error norms, entropy and conservation monitors, and the `run` driver.

use crate::discretization::{Discretization, Layout, SolutionField};
use crate::error::{Error, Result};
use crate::euler::{ConservedState, GasParams};
use crate::geometry::StructuredMesh;
use crate::harness::config::RunConfig;
use crate::harness::ic::InitialCondition;
use crate::timeint::{integrate, IntegrateConfig, StepSize};

/// Calls `$body` with `D` bound to the run dimension.
#[macro_export]
macro_rules! with_dim {
    ($d:expr, $D:ident => $body:expr) => {
        match $d {
            2 => {
                const $D: usize = 2;
                $body
            }
            3 => {
                const $D: usize = 3;
                $body
            }
            d => Err($crate::error::Error::config("d", format!("must be 2 or 3, got {d}"))),
        }
    };
}

pub fn build_discretization<const D: usize>(cfg: &RunConfig) -> Result<Discretization<D>> {
    cfg.validate()?;
    let mesh = StructuredMesh::<D>::new([cfg.elements; D], cfg.mesh)?;
    Discretization::new(mesh, cfg.p, cfg.rhs, cfg.gas()?)
}

pub fn initial_field<const D: usize>(disc: &Discretization<D>, ic: &InitialCondition) -> SolutionField<D> {
    disc.interpolate(Layout::NodeMajor, |x| ic.state(x, &disc.gas))
}

/// Discrete `L²` error `sqrt(Σ M J (u - u_exact)²)` per variable.
pub fn l2_errors<const D: usize>(
    disc: &Discretization<D>,
    u: &SolutionField<D>,
    exact: impl Fn(&[f64; D]) -> ConservedState<D>,
) -> ConservedState<D> {
    let mut acc = ConservedState::ZERO;
    for e in 0..disc.n_elements() {
        for l in 0..disc.nodes_per_element() {
            let d = u.state(e, l) - exact(&disc.geometry.elements[e].coords[l]);
            let mj = disc.mass_jacobian(e, l);
            for v in 0..D + 2 {
                acc[v] += mj * d[v] * d[v];
            }
        }
    }
    for v in 0..D + 2 {
        acc[v] = acc[v].sqrt();
    }
    acc
}

/// `Σ M J w·du` divided by `Σ M J Σ_v |w_v du_v|` for `du = rhs(u)`.
pub fn normalized_entropy_rate<const D: usize>(disc: &Discretization<D>, u: &SolutionField<D>) -> Result<f64> {
    let mut du = disc.zeros(u.layout());
    disc.rhs(u, &mut du)?;
    let (rate, scale) = disc.entropy_rate(u, &du)?;
    Ok(if scale > 0.0 { rate / scale } else { 0.0 })
}

/// Componentwise `|d/dt Σ M J u|` and the scale `Σ M J |du|` it is measured against.
pub fn conservation_rate<const D: usize>(disc: &Discretization<D>, du: &SolutionField<D>) -> (ConservedState<D>, f64) {
    let total = disc.integrate_conserved(du);
    let mut scale = 0.0;
    for e in 0..disc.n_elements() {
        for l in 0..disc.nodes_per_element() {
            scale += disc.mass_jacobian(e, l) * du.state(e, l).max_abs();
        }
    }
    let mut abs = total;
    for v in 0..D + 2 {
        abs[v] = abs[v].abs();
    }
    (abs, scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropySample {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub ds_dt_normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t: f64,
    pub rhs_evals: usize,
    pub dofs: usize,
    pub entropy: Vec<EntropySample>,
    /// Largest `|Σ M J u(t) - Σ M J u(0)|` over the variables, relative to `max(1, |Σ M J u(0)|)`.
    pub conservation_drift: f64,
    /// `(ρ, ρe)` errors against the exact solution when one is known.
    pub l2_rho_rhoe: Option<(f64, f64)>,
}

impl RunSummary {
    pub fn max_abs_entropy_rate(&self) -> f64 {
        self.entropy.iter().map(|s| s.ds_dt_normalized.abs()).fold(0.0, f64::max)
    }
}

/// Integrates the configured problem, monitoring entropy every step.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    with_dim!(cfg.d, D => run_dim::<D>(cfg))
}

fn run_dim<const D: usize>(cfg: &RunConfig) -> Result<RunSummary> {
    let disc = build_discretization::<D>(cfg)?;
    let u0 = initial_field(&disc, &cfg.ic);
    let mass0 = disc.integrate_conserved(&u0);
    let mut entropy = vec![EntropySample { step: 0, t: 0.0, dt: 0.0, ds_dt_normalized: normalized_entropy_rate(&disc, &u0)? }];
    let icfg = IntegrateConfig::new(cfg.stop, StepSize::Cfl(cfg.controller()?));
    let out = integrate(&disc, u0, 0.0, &icfg, |info, u| {
        entropy.push(EntropySample { step: info.step, t: info.t, dt: info.dt, ds_dt_normalized: normalized_entropy_rate(&disc, u)? });
        Ok(())
    })
    .map_err(Error::from)?;
    let mass = disc.integrate_conserved(&out.u);
    let drift = (0..D + 2).map(|v| (mass[v] - mass0[v]).abs() / mass0[v].abs().max(1.0)).fold(0.0, f64::max);
    let gas: GasParams = disc.gas;
    let l2 = cfg.ic.has_exact().then(|| {
        let e = l2_errors(&disc, &out.u, |x| cfg.ic.exact(x, out.t, &gas).unwrap());
        (e.rho, e.rho_e)
    });
    Ok(RunSummary {
        steps: out.steps,
        t: out.t,
        rhs_evals: out.rhs_evals,
        dofs: disc.dofs(),
        entropy,
        conservation_drift: drift,
        l2_rho_rhoe: l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::VolumeScheme;
    use crate::fluxes::FluxKind;
    use crate::timeint::StopCondition;

    fn cfg(overrides: &[&str]) -> RunConfig {
        let mut c = RunConfig::default();
        c.apply_overrides(overrides).unwrap();
        c
    }

    #[test]
    fn l2_error_of_exact_field_is_zero_and_scales() {
        let c = cfg(&["elements=3"]);
        let disc = build_discretization::<2>(&c).unwrap();
        let u = initial_field(&disc, &c.ic);
        let e = l2_errors(&disc, &u, |x| c.ic.exact(x, 0.0, &disc.gas).unwrap());
        assert_eq!(e.max_abs(), 0.0);
        // constant offset δ in ρ gives δ sqrt(|Ω|)
        let e = l2_errors(&disc, &u, |x| {
            let mut s = c.ic.exact(x, 0.0, &disc.gas).unwrap();
            s.rho += 1e-3;
            s
        });
        assert!((e.rho - 1e-3 * 10.0).abs() < 1e-14);
    }

    #[test]
    fn ec_run_conserves_entropy_and_llf_dissipates() {
        let c = cfg(&["elements=4", "n_steps=5"]);
        let s = run(&c).unwrap();
        assert_eq!((s.steps, s.rhs_evals, s.entropy.len()), (5, 25, 6));
        assert!(s.max_abs_entropy_rate() < 1e-11, "{}", s.max_abs_entropy_rate());
        assert!(s.conservation_drift < 1e-12);
        let c = cfg(&["elements=4", "n_steps=3", "surface_flux=llf"]);
        let s = run(&c).unwrap();
        assert!(s.entropy.iter().all(|e| e.ds_dt_normalized <= 1e-12));
        let c = cfg(&["elements=4", "n_steps=0", "volume_flux=central", "surface_flux=central"]);
        let s = run(&c).unwrap();
        // uniform entropy keeps the rate small on the vortex, but above the EC tolerance
        assert!(s.entropy[0].ds_dt_normalized.abs() > 1e-11, "central flux rate {:e}", s.entropy[0].ds_dt_normalized);
        let c = cfg(&["elements=3", "n_steps=0", "volume_flux=central", "surface_flux=central", "ic=random"]);
        assert!(run(&c).unwrap().entropy[0].ds_dt_normalized.abs() > 1e-6);
    }

    #[test]
    fn free_stream_run_stays_exact() {
        let c = cfg(&["ic=free_stream", "mesh=curved", "elements=3", "n_steps=4", "d=3"]);
        let s = run(&c).unwrap();
        let (r, e) = s.l2_rho_rhoe.unwrap();
        assert!(r < 1e-12 && e < 1e-11, "{r:e} {e:e}");
        assert_eq!(s.dofs, 27 * 64);
    }

    #[test]
    fn conservation_rate_is_small() {
        let mut c = cfg(&["elements=3", "mesh=curved"]);
        c.rhs = crate::discretization::RhsConfig::new(VolumeScheme::GaussFluxDiff, FluxKind::RanochaEc, FluxKind::Llf);
        c.stop = StopCondition::Steps(1);
        let disc = build_discretization::<2>(&c).unwrap();
        let u = initial_field(&disc, &c.ic);
        let mut du = disc.zeros(Layout::NodeMajor);
        disc.rhs(&u, &mut du).unwrap();
        let (rate, scale) = conservation_rate(&disc, &du);
        assert!(rate.max_abs() < 1e-12 * scale);
    }

    #[test]
    fn bad_dimension_is_a_config_error() {
        let c = cfg(&["d=4"]);
        assert!(matches!(run(&c), Err(Error::Config { .. })));
    }
}
