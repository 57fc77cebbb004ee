//! Fast property suite behind the `verify` subcommand.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discretization::{volume_fluxdiff, Discretization, Layout, RhsConfig, VolumeScheme};
use crate::error::Result;
use crate::euler::{entropy_and_potential, entropy_vars, prim2cons_unchecked, ConservedState, GasParams, PrimitiveState};
use crate::fluxes::{count_guard, flux_ranocha_directional, FluxKind};
use crate::geometry::{MeshGeometry, MeshMapping, StructuredMesh};
use crate::harness::diagnostics::normalized_entropy_rate;
use crate::harness::ic::{free_stream_state, ic_isentropic_vortex, VortexParams};
use crate::kernels_batched::{transpose_to_soa, volume_fluxdiff_batched, BatchWidth};
use crate::means::{logmean, LOGMEAN_EPSILON};
use crate::operators::{build_dsplit, gauss_operator, lgl_operator, transfer_matrices, NodeFamily, MAX_DEGREE};
use crate::timeint::{integrate, IntegrateConfig, LinearOde, RkMethod, StepSize, StopCondition};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < tol`.
    fn below(name: &'static str, value: f64, tol: f64) -> Self {
        Self { name, value, tol, passed: value < tol }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<28} {:.3e} (tol {:.0e})", self.name, self.value, self.tol)
    }
}

fn random_state<const D: usize>(rng: &mut ChaCha8Rng, gas: &GasParams) -> ConservedState<D> {
    let q = PrimitiveState {
        rho: rng.gen_range(0.5..2.0),
        v: std::array::from_fn(|_| rng.gen_range(-1.0..1.0)),
        p: rng.gen_range(0.5..2.0),
    };
    prim2cons_unchecked(&q, gas)
}

fn sbp_identity() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in 1..=MAX_DEGREE {
        worst = worst.max(lgl_operator(p)?.sbp_residual()).max(gauss_operator(p)?.sbp_residual());
    }
    Ok(worst)
}

fn skew_symmetry() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in 1..=MAX_DEGREE {
        let ds = build_dsplit(&lgl_operator(p)?)?;
        worst = worst.max(ds.skew_residual());
        worst = worst.max((0..=p).map(|i| ds.entry(i, i).abs()).fold(0.0, f64::max));
    }
    Ok(worst)
}

fn ec_pairs<const D: usize>(n: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let gas = GasParams::default();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let ul = random_state::<D>(rng, &gas);
        let ur = if k % 10 == 0 {
            let mut u = ul;
            let eps = 10f64.powf(-rng.gen_range(4.0..10.0));
            u.rho *= 1.0 + eps;
            u.rho_e *= 1.0 - eps;
            u
        } else {
            random_state::<D>(rng, &gas)
        };
        let nv: [f64; D] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let f = flux_ranocha_directional(&ul, &ur, &nv, &gas)?;
        let dw = entropy_vars(&ur, &gas)?.w - entropy_vars(&ul, &gas)?.w;
        let (_, pl) = entropy_and_potential(&ul, &gas)?;
        let (_, pr) = entropy_and_potential(&ur, &gas)?;
        let r = dw.dot(&f) - (0..D).map(|j| nv[j] * (pr[j] - pl[j])).sum::<f64>();
        worst = worst.max(r.abs() / (dw.max_abs() * f.max_abs() + 1.0));
    }
    Ok(worst)
}

/// Relative jump of the log-mean across the series threshold.
fn logmean_continuity() -> f64 {
    // u = ((b - a)/(b + a))² = ε at b/a = (1 + √ε)/(1 - √ε)
    let s = LOGMEAN_EPSILON.sqrt();
    let ratio = (1.0 + s) / (1.0 - s);
    let mut worst: f64 = 0.0;
    for a in [0.3, 1.0, 7.5] {
        let b = a * ratio;
        let below = logmean(a, b * (1.0 - 1e-12));
        let above = logmean(a, b * (1.0 + 1e-12));
        // the function itself changes by about 1e-12 relative across this interval
        worst = worst.max(((above - below) / below).abs() - 1e-12);
    }
    worst.max(0.0)
}

/// The tolerance is absolute, so the state is O(1); roundoff grows with the flux magnitude.
fn free_stream<const D: usize>() -> Result<f64> {
    let gas = GasParams::default();
    let constant = prim2cons_unchecked(&PrimitiveState { rho: 1.3, v: std::array::from_fn(|j| 0.4 - 0.3 * j as f64), p: 2.1 }, &gas);
    let mut worst: f64 = 0.0;
    for p in [3, 4] {
        for vf in [FluxKind::ShimaEtal, FluxKind::RanochaEc] {
            let mesh = StructuredMesh::<D>::new([4; D], MeshMapping::Curved { amplitude: 0.3 })?;
            let disc = Discretization::new(mesh, p, RhsConfig::new(VolumeScheme::FluxDiff, vf, vf), gas)?;
            let u = disc.interpolate(Layout::NodeMajor, |_| constant);
            let mut du = disc.zeros(Layout::NodeMajor);
            disc.rhs(&u, &mut du)?;
            worst = worst.max(du.max_abs());
        }
    }
    Ok(worst)
}

fn entropy_conservation() -> Result<f64> {
    let gas = GasParams::default();
    let vortex = VortexParams::default();
    let mut worst: f64 = 0.0;
    for scheme in [VolumeScheme::FluxDiff, VolumeScheme::GaussFluxDiff, VolumeScheme::GaussSurfaceCorrection] {
        for mapping in [MeshMapping::Cartesian, MeshMapping::Curved { amplitude: 0.3 }] {
            let mesh = StructuredMesh::<2>::new([8; 2], mapping)?;
            let cfg = RhsConfig::new(scheme, FluxKind::RanochaEc, FluxKind::RanochaEc);
            let disc = Discretization::new(mesh, 3, cfg, gas)?;
            let u = disc.interpolate(Layout::NodeMajor, |x| ic_isentropic_vortex(x, 0.0, &vortex, &gas));
            worst = worst.max(normalized_entropy_rate(&disc, &u)?.abs());
        }
    }
    Ok(worst)
}

/// Largest deviation of the per-element counts from `d p (p+1)^d / 2`.
fn flux_counts() -> Result<f64> {
    let gas = GasParams::default();
    let mut worst = 0.0_f64;
    for p in 3..=7 {
        let ds = build_dsplit(&lgl_operator(p)?)?;
        for d in [2usize, 3] {
            let n = (p + 1).pow(d as u32);
            let expected = (d * p * n / 2) as f64;
            let evals = if d == 2 {
                let m = MeshGeometry::new(&StructuredMesh::<2>::new([1; 2], MeshMapping::Cartesian)?, &lgl_operator(p)?)?;
                let g = count_guard();
                volume_fluxdiff(&vec![free_stream_state::<2>(&gas); n], &ds, &m.elements[0].metrics, FluxKind::RanochaEc, &gas, None)?;
                g.counts().two_point_evals
            } else {
                let m = MeshGeometry::new(&StructuredMesh::<3>::new([1; 3], MeshMapping::Cartesian)?, &lgl_operator(p)?)?;
                let g = count_guard();
                volume_fluxdiff(&vec![free_stream_state::<3>(&gas); n], &ds, &m.elements[0].metrics, FluxKind::RanochaEc, &gas, None)?;
                g.counts().two_point_evals
            };
            worst = worst.max((evals as f64 - expected).abs());
        }
    }
    Ok(worst)
}

fn overintegration_round_trip() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in 1..=7 {
        for q in p..=2 * p {
            let t = transfer_matrices(p, q, NodeFamily::Lgl)?;
            let id = &t.project * &t.interp - DMatrix::<f64>::identity(p + 1, p + 1);
            worst = worst.max(id.amax());
        }
    }
    Ok(worst)
}

fn batched_equivalence(rng: &mut ChaCha8Rng) -> Result<f64> {
    let gas = GasParams::default();
    let mut worst: f64 = 0.0;
    for p in 3..=7 {
        let op = lgl_operator(p)?;
        let ds = build_dsplit(&op)?;
        let geo = MeshGeometry::new(&StructuredMesh::<3>::new([2; 3], MeshMapping::Curved { amplitude: 0.3 })?, &op)?;
        let m = &geo.elements[3].metrics;
        let u: Vec<ConservedState<3>> = (0..(p + 1).pow(3)).map(|_| random_state(rng, &gas)).collect();
        for kind in [FluxKind::ShimaEtal, FluxKind::RanochaEc] {
            let a = volume_fluxdiff(&u, &ds, m, kind, &gas, None)?;
            let soa = transpose_to_soa(&u, &gas, crate::discretization::Precompute::PrimitivesAndLogs, BatchWidth::default())?;
            let b = volume_fluxdiff_batched(&soa, &ds, m, kind, &gas)?;
            let scale = a.iter().map(|x| x.max_abs()).fold(0.0, f64::max);
            let d = a.iter().zip(&b).map(|(x, y)| (*x - *y).max_abs()).fold(0.0, f64::max);
            worst = worst.max(d / scale);
        }
    }
    Ok(worst)
}

/// `|slope - 4|` of the global error over `dt ∈ {0.1, 0.05, 0.025}`.
fn rk_order() -> Result<f64> {
    let sys = LinearOde { a: vec![-0.5, 1.0, -1.0, -0.5], n: 2 };
    let t_end = 2.0;
    let mut errs = vec![];
    for dt in [0.1, 0.05, 0.025] {
        let cfg = IntegrateConfig::new(StopCondition::Steps((t_end / dt) as usize), StepSize::Fixed(dt));
        let run = integrate(&sys, vec![1.0, 0.0], 0.0, &cfg, |_, _| Ok(()))?;
        let d = (-0.5 * t_end).exp();
        errs.push((run.u[0] - d * t_end.cos()).hypot(run.u[1] + d * t_end.sin()));
    }
    Ok(errs.windows(2).map(|w| ((w[0] / w[1]).log2() - 4.0).abs()).fold(0.0, f64::max))
}

/// Runs every check.
pub fn run_verify() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ec = ec_pairs::<2>(2000, &mut rng)?.max(ec_pairs::<3>(2000, &mut rng)?);
    Ok(vec![
        Check::below("sbp_identity", sbp_identity()?, 1e-13),
        Check::below("skew_symmetry", skew_symmetry()?, 1e-14),
        Check::below("entropy_conservative_flux", ec, 1e-12),
        Check::below("logmean_continuity", logmean_continuity(), 1e-12),
        Check::below("free_stream_2d", free_stream::<2>()?, 1e-12),
        Check::below("free_stream_3d", free_stream::<3>()?, 1e-12),
        Check::below("semidiscrete_entropy", entropy_conservation()?, 1e-11),
        Check::below("flux_counts", flux_counts()?, 0.5),
        Check::below("overintegration_round_trip", overintegration_round_trip()?, 1e-13),
        Check::below("batched_kernel", batched_equivalence(&mut rng)?, 1e-13),
        Check::below("rk_order_conditions", RkMethod::default().order_condition_residual(), 1e-14),
        Check::below("rk_global_slope", rk_order()?, 0.2),
    ])
}
