//! Two-point numerical fluxes for the compressible Euler equations.
//!
//! Volume fluxes (`shima_etal`, `ranocha_ec`, `central`) are symmetric and
//! implemented on primitive states through [`TwoPointFlux`], so element
//! kernels are monomorphized per flux. Surface fluxes (`llf`, `hll`) also need
//! the conserved states for their dissipation terms.
//!
//! All directional forms accept non-unit normals and are linear in `n`.
//! The public `flux_*` functions count one evaluation each; kernels built on
//! the trait report their counts in bulk.

pub mod counter;
mod rotated;

pub use counter::{count_guard, CountGuard, FluxCounter};
pub use rotated::{rotated_flux, Rotation, RotationFrame};

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::euler::{
    cons2prim, cons2prim_unchecked, directional_physical_flux_prim, dot, max_wave_speed_prim,
    norm, sound_speed, ConservedState, Flux, GasParams, PrimitiveState,
};
use crate::means::{
    arithmetic_mean, inv_logmean, inv_logmean_with_logs, logmean, logmean_with_logs,
    product_mean,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FluxKind {
    ShimaEtal,
    RanochaEc,
    Central,
    Llf,
    Hll,
}

impl FluxKind {
    pub const ALL: [FluxKind; 5] = [
        FluxKind::ShimaEtal,
        FluxKind::RanochaEc,
        FluxKind::Central,
        FluxKind::Llf,
        FluxKind::Hll,
    ];

    /// Symmetric fluxes can be used for flux differencing.
    pub fn is_symmetric(self) -> bool {
        matches!(self, FluxKind::ShimaEtal | FluxKind::RanochaEc | FluxKind::Central)
    }

    pub fn name(self) -> &'static str {
        match self {
            FluxKind::ShimaEtal => "shima_etal",
            FluxKind::RanochaEc => "ranocha_ec",
            FluxKind::Central => "central",
            FluxKind::Llf => "llf",
            FluxKind::Hll => "hll",
        }
    }

    /// Log-mean evaluations per flux call.
    pub fn logmeans_per_eval(self) -> u64 {
        match self {
            FluxKind::RanochaEc => 2,
            _ => 0,
        }
    }
}

impl std::fmt::Display for FluxKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FluxKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FluxKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("flux", format!("unknown flux '{s}'")))
    }
}

/// Logarithms of density and pressure, precomputed per node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogVars {
    pub log_rho: f64,
    pub log_p: f64,
}

impl LogVars {
    #[inline(always)]
    pub fn of<const D: usize>(q: &PrimitiveState<D>) -> Self {
        LogVars {
            log_rho: q.rho.ln(),
            log_p: q.p.ln(),
        }
    }
}

/// A symmetric two-point volume flux evaluated on primitive states.
///
/// Implementations do not touch the evaluation counters.
pub trait TwoPointFlux<const D: usize>: Copy + Send + Sync + 'static {
    const KIND: FluxKind;
    /// Whether [`TwoPointFlux::directional_logs`] makes use of the logarithms.
    const USES_LOGS: bool = false;

    fn directional(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D>;

    /// Flux in coordinate direction `j` (0-based).
    fn cartesian(ql: &PrimitiveState<D>, qr: &PrimitiveState<D>, j: usize, gas: &GasParams)
        -> Flux<D>;

    #[inline(always)]
    fn directional_logs(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        _ll: &LogVars,
        _lr: &LogVars,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D> {
        Self::directional(ql, qr, n, gas)
    }

    #[inline(always)]
    fn cartesian_logs(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        _ll: &LogVars,
        _lr: &LogVars,
        j: usize,
        gas: &GasParams,
    ) -> Flux<D> {
        Self::cartesian(ql, qr, j, gas)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ShimaEtal;
#[derive(Debug, Clone, Copy, Default)]
pub struct RanochaEc;
#[derive(Debug, Clone, Copy, Default)]
pub struct Central;

#[inline(always)]
fn avg_velocity<const D: usize>(ql: &PrimitiveState<D>, qr: &PrimitiveState<D>) -> [f64; D] {
    let mut v = [0.0; D];
    for i in 0..D {
        v[i] = arithmetic_mean(ql.v[i], qr.v[i]);
    }
    v
}

/// Common tail of both fluxes once the mass flux and the energy coefficient
/// of the mass flux are known.
#[inline(always)]
fn assemble_directional<const D: usize>(
    ql: &PrimitiveState<D>,
    qr: &PrimitiveState<D>,
    f_rho: f64,
    energy_extra: f64,
    vnl: f64,
    vnr: f64,
    n: &[f64; D],
) -> Flux<D> {
    let p_avg = arithmetic_mean(ql.p, qr.p);
    let v_avg = avg_velocity(ql, qr);
    let mut rho_v = [0.0; D];
    for i in 0..D {
        rho_v[i] = f_rho * v_avg[i] + p_avg * n[i];
    }
    let rho_e = f_rho * 0.5 * dot(&ql.v, &qr.v) + energy_extra + product_mean(ql.p, qr.p, vnl, vnr);
    Flux { rho: f_rho, rho_v, rho_e }
}

#[inline(always)]
fn assemble_cartesian<const D: usize>(
    ql: &PrimitiveState<D>,
    qr: &PrimitiveState<D>,
    f_rho: f64,
    energy_extra: f64,
    j: usize,
) -> Flux<D> {
    let p_avg = arithmetic_mean(ql.p, qr.p);
    let v_avg = avg_velocity(ql, qr);
    let mut rho_v = [0.0; D];
    for i in 0..D {
        rho_v[i] = f_rho * v_avg[i];
    }
    rho_v[j] += p_avg;
    let rho_e =
        f_rho * 0.5 * dot(&ql.v, &qr.v) + energy_extra + product_mean(ql.p, qr.p, ql.v[j], qr.v[j]);
    Flux { rho: f_rho, rho_v, rho_e }
}

impl<const D: usize> TwoPointFlux<D> for ShimaEtal {
    const KIND: FluxKind = FluxKind::ShimaEtal;

    #[inline(always)]
    fn directional(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D> {
        let vnl = dot(&ql.v, n);
        let vnr = dot(&qr.v, n);
        let vn_avg = arithmetic_mean(vnl, vnr);
        let f_rho = arithmetic_mean(ql.rho, qr.rho) * vn_avg;
        let extra = arithmetic_mean(ql.p, qr.p) * vn_avg * gas.inv_gamma_minus_one();
        assemble_directional(ql, qr, f_rho, extra, vnl, vnr, n)
    }

    #[inline(always)]
    fn cartesian(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        j: usize,
        gas: &GasParams,
    ) -> Flux<D> {
        let vn_avg = arithmetic_mean(ql.v[j], qr.v[j]);
        let f_rho = arithmetic_mean(ql.rho, qr.rho) * vn_avg;
        let extra = arithmetic_mean(ql.p, qr.p) * vn_avg * gas.inv_gamma_minus_one();
        assemble_cartesian(ql, qr, f_rho, extra, j)
    }
}

/// `1/⟨ρ/p⟩_log = p₊p₋ / ⟨ρ₊p₋, ρ₋p₊⟩_log`.
#[inline(always)]
fn inv_logmean_rho_over_p<const D: usize>(ql: &PrimitiveState<D>, qr: &PrimitiveState<D>) -> f64 {
    ql.p * qr.p * inv_logmean(ql.rho * qr.p, qr.rho * ql.p)
}

#[inline(always)]
fn inv_logmean_rho_over_p_logs<const D: usize>(
    ql: &PrimitiveState<D>,
    qr: &PrimitiveState<D>,
    ll: &LogVars,
    lr: &LogVars,
) -> f64 {
    ql.p * qr.p
        * inv_logmean_with_logs(
            ql.rho * qr.p,
            qr.rho * ql.p,
            ll.log_rho + lr.log_p,
            lr.log_rho + ll.log_p,
        )
}

impl<const D: usize> TwoPointFlux<D> for RanochaEc {
    const KIND: FluxKind = FluxKind::RanochaEc;
    const USES_LOGS: bool = true;

    #[inline(always)]
    fn directional(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D> {
        let vnl = dot(&ql.v, n);
        let vnr = dot(&qr.v, n);
        let f_rho = logmean(ql.rho, qr.rho) * arithmetic_mean(vnl, vnr);
        let extra = f_rho * inv_logmean_rho_over_p(ql, qr) * gas.inv_gamma_minus_one();
        assemble_directional(ql, qr, f_rho, extra, vnl, vnr, n)
    }

    #[inline(always)]
    fn cartesian(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        j: usize,
        gas: &GasParams,
    ) -> Flux<D> {
        let f_rho = logmean(ql.rho, qr.rho) * arithmetic_mean(ql.v[j], qr.v[j]);
        let extra = f_rho * inv_logmean_rho_over_p(ql, qr) * gas.inv_gamma_minus_one();
        assemble_cartesian(ql, qr, f_rho, extra, j)
    }

    #[inline(always)]
    fn directional_logs(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        ll: &LogVars,
        lr: &LogVars,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D> {
        let vnl = dot(&ql.v, n);
        let vnr = dot(&qr.v, n);
        let f_rho =
            logmean_with_logs(ql.rho, qr.rho, ll.log_rho, lr.log_rho) * arithmetic_mean(vnl, vnr);
        let extra = f_rho * inv_logmean_rho_over_p_logs(ql, qr, ll, lr) * gas.inv_gamma_minus_one();
        assemble_directional(ql, qr, f_rho, extra, vnl, vnr, n)
    }

    #[inline(always)]
    fn cartesian_logs(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        ll: &LogVars,
        lr: &LogVars,
        j: usize,
        gas: &GasParams,
    ) -> Flux<D> {
        let f_rho = logmean_with_logs(ql.rho, qr.rho, ll.log_rho, lr.log_rho)
            * arithmetic_mean(ql.v[j], qr.v[j]);
        let extra = f_rho * inv_logmean_rho_over_p_logs(ql, qr, ll, lr) * gas.inv_gamma_minus_one();
        assemble_cartesian(ql, qr, f_rho, extra, j)
    }
}

#[inline(always)]
fn total_energy<const D: usize>(q: &PrimitiveState<D>, gas: &GasParams) -> f64 {
    q.p * gas.inv_gamma_minus_one() + 0.5 * q.rho * dot(&q.v, &q.v)
}

impl<const D: usize> TwoPointFlux<D> for Central {
    const KIND: FluxKind = FluxKind::Central;

    #[inline(always)]
    fn directional(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        n: &[f64; D],
        gas: &GasParams,
    ) -> Flux<D> {
        let fl = directional_physical_flux_prim(ql, total_energy(ql, gas), n);
        let fr = directional_physical_flux_prim(qr, total_energy(qr, gas), n);
        (fl + fr) * 0.5
    }

    #[inline(always)]
    fn cartesian(
        ql: &PrimitiveState<D>,
        qr: &PrimitiveState<D>,
        j: usize,
        gas: &GasParams,
    ) -> Flux<D> {
        let mut n = [0.0; D];
        n[j] = 1.0;
        Self::directional(ql, qr, &n, gas)
    }
}

/// Local Lax-Friedrichs flux on states given in both variable sets.
#[inline(always)]
pub(crate) fn llf_prim<const D: usize>(
    ul: &ConservedState<D>,
    ql: &PrimitiveState<D>,
    ur: &ConservedState<D>,
    qr: &PrimitiveState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Flux<D> {
    let norm_n = norm(n);
    let inv = 1.0 / norm_n;
    let mut n_hat = [0.0; D];
    for i in 0..D {
        n_hat[i] = n[i] * inv;
    }
    let lambda = max_wave_speed_prim(ql, qr, &n_hat, gas);
    let fl = directional_physical_flux_prim(ql, ul.rho_e, n);
    let fr = directional_physical_flux_prim(qr, ur.rho_e, n);
    (fl + fr) * 0.5 - (*ur - *ul) * (0.5 * lambda * norm_n)
}

/// HLL flux with Davis wave-speed estimates.
#[inline(always)]
pub(crate) fn hll_prim<const D: usize>(
    ul: &ConservedState<D>,
    ql: &PrimitiveState<D>,
    ur: &ConservedState<D>,
    qr: &PrimitiveState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Flux<D> {
    let norm_n = norm(n);
    let inv = 1.0 / norm_n;
    let vnl = dot(&ql.v, n) * inv;
    let vnr = dot(&qr.v, n) * inv;
    let cl = sound_speed(ql.rho, ql.p, gas);
    let cr = sound_speed(qr.rho, qr.p, gas);
    let s_min = (vnl - cl).min(vnr - cr);
    let s_max = (vnl + cl).max(vnr + cr);
    let fl = directional_physical_flux_prim(ql, ul.rho_e, n);
    let fr = directional_physical_flux_prim(qr, ur.rho_e, n);
    if s_min >= 0.0 {
        fl
    } else if s_max <= 0.0 {
        fr
    } else {
        let inv_ds = 1.0 / (s_max - s_min);
        (fl * s_max - fr * s_min + (*ur - *ul) * (s_min * s_max * norm_n)) * inv_ds
    }
}

/// Any flux kind evaluated on both variable sets, without counting.
#[inline(always)]
pub(crate) fn surface_flux_prim<const D: usize>(
    kind: FluxKind,
    ul: &ConservedState<D>,
    ql: &PrimitiveState<D>,
    ur: &ConservedState<D>,
    qr: &PrimitiveState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Flux<D> {
    match kind {
        FluxKind::ShimaEtal => ShimaEtal::directional(ql, qr, n, gas),
        FluxKind::RanochaEc => RanochaEc::directional(ql, qr, n, gas),
        FluxKind::Central => Central::directional(ql, qr, n, gas),
        FluxKind::Llf => llf_prim(ul, ql, ur, qr, n, gas),
        FluxKind::Hll => hll_prim(ul, ql, ur, qr, n, gas),
    }
}

fn prims<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    gas: &GasParams,
) -> Result<(PrimitiveState<D>, PrimitiveState<D>)> {
    if cfg!(debug_assertions) {
        Ok((cons2prim(ul, gas)?, cons2prim(ur, gas)?))
    } else {
        Ok((cons2prim_unchecked(ul, gas), cons2prim_unchecked(ur, gas)))
    }
}

#[inline]
pub(crate) fn record(kind: FluxKind) {
    counter::record_two_point(1);
    let lm = kind.logmeans_per_eval();
    if lm > 0 {
        counter::record_logmean(lm);
    }
}

fn unit<const D: usize>(j: usize) -> Result<[f64; D]> {
    if j >= D {
        return Err(Error::Parameter {
            name: "direction",
            reason: format!("direction {j} out of range for dimension {D}"),
        });
    }
    let mut n = [0.0; D];
    n[j] = 1.0;
    Ok(n)
}

/// Directional flux of any kind. Admissibility is checked in debug builds.
pub fn flux_directional<const D: usize>(
    kind: FluxKind,
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    let (ql, qr) = prims(ul, ur, gas)?;
    record(kind);
    Ok(surface_flux_prim(kind, ul, &ql, ur, &qr, n, gas))
}

/// Flux of any kind in coordinate direction `j` (0-based).
pub fn flux_cartesian<const D: usize>(
    kind: FluxKind,
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    j: usize,
    gas: &GasParams,
) -> Result<Flux<D>> {
    unit::<D>(j)?;
    let (ql, qr) = prims(ul, ur, gas)?;
    record(kind);
    Ok(flux_cartesian_uncounted(kind, ul, &ql, ur, &qr, j, gas))
}

#[inline(always)]
pub(crate) fn flux_cartesian_uncounted<const D: usize>(
    kind: FluxKind,
    ul: &ConservedState<D>,
    ql: &PrimitiveState<D>,
    ur: &ConservedState<D>,
    qr: &PrimitiveState<D>,
    j: usize,
    gas: &GasParams,
) -> Flux<D> {
    match kind {
        FluxKind::ShimaEtal => ShimaEtal::cartesian(ql, qr, j, gas),
        FluxKind::RanochaEc => RanochaEc::cartesian(ql, qr, j, gas),
        FluxKind::Central => Central::cartesian(ql, qr, j, gas),
        FluxKind::Llf | FluxKind::Hll => {
            let mut n = [0.0; D];
            n[j] = 1.0;
            surface_flux_prim(kind, ul, ql, ur, qr, &n, gas)
        }
    }
}

pub fn flux_shima_directional<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_directional(FluxKind::ShimaEtal, ul, ur, n, gas)
}

pub fn flux_shima_cartesian<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    j: usize,
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_cartesian(FluxKind::ShimaEtal, ul, ur, j, gas)
}

pub fn flux_ranocha_directional<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_directional(FluxKind::RanochaEc, ul, ur, n, gas)
}

pub fn flux_ranocha_cartesian<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    j: usize,
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_cartesian(FluxKind::RanochaEc, ul, ur, j, gas)
}

pub fn flux_central<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_directional(FluxKind::Central, ul, ur, n, gas)
}

pub fn flux_llf<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_directional(FluxKind::Llf, ul, ur, n, gas)
}

pub fn flux_hll<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<Flux<D>> {
    flux_directional(FluxKind::Hll, ul, ur, n, gas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::{
        directional_physical_flux, entropy_vars, prim2cons, entropy_and_potential,
    };
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gas() -> GasParams {
        GasParams::default()
    }

    fn state<const D: usize>(rho: f64, v: [f64; D], p: f64) -> ConservedState<D> {
        prim2cons(&PrimitiveState { rho, v, p }, &gas()).unwrap()
    }

    fn random_state<const D: usize>(rng: &mut impl Rng) -> ConservedState<D> {
        let mut v = [0.0; D];
        for x in v.iter_mut() {
            *x = rng.gen_range(-2.0..2.0);
        }
        state(rng.gen_range(0.2..5.0), v, rng.gen_range(0.2..5.0))
    }

    fn random_normal<const D: usize>(rng: &mut impl Rng) -> [f64; D] {
        let mut n = [0.0; D];
        loop {
            for x in n.iter_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
            if norm(&n) > 0.1 {
                return n;
            }
        }
    }

    fn max_diff<const D: usize>(a: &Flux<D>, b: &Flux<D>) -> f64 {
        (*a - *b).max_abs()
    }

    fn scale<const D: usize>(a: &Flux<D>) -> f64 {
        a.max_abs().max(1.0)
    }

    #[test]
    fn parse_kinds() {
        for k in FluxKind::ALL {
            assert_eq!(k.name().parse::<FluxKind>().unwrap(), k);
        }
        assert!("roe".parse::<FluxKind>().is_err());
    }

    #[test]
    fn shima_hand_example() {
        let ul = state(1.0, [1.0, 0.0], 1.0);
        let ur = state(1.0, [-1.0, 0.0], 1.0);
        let f = flux_shima_directional(&ul, &ur, &[1.0, 0.0], &gas()).unwrap();
        let expected = Flux::new(0.0, [1.0, 0.0], 0.0);
        assert!(max_diff(&f, &expected) < 1e-15, "{f:?}");
    }

    fn check_consistency<const D: usize>(seed: u64) {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..500 {
            let u = random_state::<D>(&mut rng);
            let n = random_normal::<D>(&mut rng);
            let exact = directional_physical_flux(&u, &n, &g).unwrap();
            for kind in FluxKind::ALL {
                let f = flux_directional(kind, &u, &u, &n, &g).unwrap();
                assert!(max_diff(&f, &exact) <= 1e-14 * scale(&exact), "{kind}");
            }
            for j in 0..D {
                let mut e = [0.0; D];
                e[j] = 1.0;
                let exact = directional_physical_flux(&u, &e, &g).unwrap();
                for kind in FluxKind::ALL {
                    let f = flux_cartesian(kind, &u, &u, j, &g).unwrap();
                    assert!(max_diff(&f, &exact) <= 1e-14 * scale(&exact), "{kind}");
                }
            }
        }
    }

    #[test]
    fn consistency_2d() {
        check_consistency::<2>(11);
    }

    #[test]
    fn consistency_3d() {
        check_consistency::<3>(12);
    }

    fn check_cartesian_matches_directional<const D: usize>(seed: u64) {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..500 {
            let ul = random_state::<D>(&mut rng);
            let ur = random_state::<D>(&mut rng);
            for j in 0..D {
                let mut e = [0.0; D];
                e[j] = 1.0;
                for kind in FluxKind::ALL {
                    let a = flux_cartesian(kind, &ul, &ur, j, &g).unwrap();
                    let b = flux_directional(kind, &ul, &ur, &e, &g).unwrap();
                    assert!(max_diff(&a, &b) <= 1e-16 * scale(&b) * 4.0, "{kind}");
                }
            }
        }
    }

    #[test]
    fn cartesian_equals_directional_on_unit_normals() {
        check_cartesian_matches_directional::<2>(13);
        check_cartesian_matches_directional::<3>(14);
    }

    #[test]
    fn symmetric_fluxes_are_bitwise_symmetric() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..2000 {
            let ul = random_state::<3>(&mut rng);
            let ur = random_state::<3>(&mut rng);
            let n = random_normal::<3>(&mut rng);
            for kind in [FluxKind::ShimaEtal, FluxKind::RanochaEc, FluxKind::Central] {
                let a = flux_directional(kind, &ul, &ur, &n, &g).unwrap();
                let b = flux_directional(kind, &ur, &ul, &n, &g).unwrap();
                assert_eq!(a, b, "{kind}");
                for j in 0..3 {
                    let a = flux_cartesian(kind, &ul, &ur, j, &g).unwrap();
                    let b = flux_cartesian(kind, &ur, &ul, j, &g).unwrap();
                    assert_eq!(a, b, "{kind}");
                }
            }
        }
    }

    #[test]
    fn surface_fluxes_antisymmetric() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..2000 {
            let ul = random_state::<3>(&mut rng);
            let ur = random_state::<3>(&mut rng);
            let n = random_normal::<3>(&mut rng);
            let m = n.map(|x| -x);
            for kind in FluxKind::ALL {
                let a = flux_directional(kind, &ul, &ur, &n, &g).unwrap();
                let b = flux_directional(kind, &ur, &ul, &m, &g).unwrap();
                assert!(max_diff(&a, &-b) <= 1e-15 * scale(&a), "{kind}");
            }
        }
    }

    /// `(w_r - w_l)·f - (ψ_r - ψ_l)·n`, normalized by `|w_r - w_l| |f|`.
    fn ec_residual<const D: usize>(
        ul: &ConservedState<D>,
        ur: &ConservedState<D>,
        n: &[f64; D],
    ) -> f64 {
        let g = gas();
        let f = flux_ranocha_directional(ul, ur, n, &g).unwrap();
        let wl = entropy_vars(ul, &g).unwrap().w;
        let wr = entropy_vars(ur, &g).unwrap().w;
        let (_, psil) = entropy_and_potential(ul, &g).unwrap();
        let (_, psir) = entropy_and_potential(ur, &g).unwrap();
        let dw = wr - wl;
        let r = dw.dot(&f) - (0..D).map(|j| n[j] * (psir[j] - psil[j])).sum::<f64>();
        let s = dw.max_abs() * f.max_abs() + 1.0;
        r.abs() / s
    }

    #[test]
    fn ranocha_is_entropy_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 0..10_000 {
            let ul = random_state::<3>(&mut rng);
            let ur = if k % 2 == 0 {
                random_state::<3>(&mut rng)
            } else {
                // nearly identical pairs take the series branch
                let q = cons2prim(&ul, &gas()).unwrap();
                let eps = 10f64.powf(-rng.gen_range(3.0..10.0));
                state(q.rho * (1.0 + eps), q.v.map(|v| v + eps), q.p * (1.0 - eps))
            };
            let n = random_normal::<3>(&mut rng);
            let r = ec_residual(&ul, &ur, &n);
            assert!(r < 1e-12, "residual {r:e}");
            let r2 = ec_residual::<2>(
                &state(ul.rho, [ul.rho_v[0] / ul.rho, ul.rho_v[1] / ul.rho], 1.0 + k as f64 * 1e-4),
                &state(ur.rho, [ur.rho_v[0] / ur.rho, ur.rho_v[1] / ur.rho], 1.5),
                &[n[0], n[1]],
            );
            assert!(r2 < 1e-12, "residual {r2:e}");
        }
    }

    #[test]
    fn ranocha_energy_rewrite_matches_naive_form() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..2000 {
            let ul = random_state::<2>(&mut rng);
            let ur = random_state::<2>(&mut rng);
            let ql = cons2prim(&ul, &g).unwrap();
            let qr = cons2prim(&ur, &g).unwrap();
            let rewritten = inv_logmean_rho_over_p(&ql, &qr);
            let naive = inv_logmean(ql.rho / ql.p, qr.rho / qr.p);
            assert!((rewritten - naive).abs() <= 1e-13 * naive.abs());
        }
    }

    #[test]
    fn precomputed_logs_match() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..2000 {
            let ql = cons2prim(&random_state::<3>(&mut rng), &g).unwrap();
            let qr = cons2prim(&random_state::<3>(&mut rng), &g).unwrap();
            let n = random_normal::<3>(&mut rng);
            let (ll, lr) = (LogVars::of(&ql), LogVars::of(&qr));
            let a = RanochaEc::directional(&ql, &qr, &n, &g);
            let b = RanochaEc::directional_logs(&ql, &qr, &ll, &lr, &n, &g);
            assert!(max_diff(&a, &b) <= 1e-12 * scale(&a));
            let a = RanochaEc::cartesian(&ql, &qr, 1, &g);
            let b = RanochaEc::cartesian_logs(&ql, &qr, &ll, &lr, 1, &g);
            assert!(max_diff(&a, &b) <= 1e-12 * scale(&a));
        }
    }

    #[test]
    fn central_is_mean_of_physical_fluxes() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..500 {
            let ul = random_state::<3>(&mut rng);
            let ur = random_state::<3>(&mut rng);
            let n = random_normal::<3>(&mut rng);
            let expected = (directional_physical_flux(&ul, &n, &g).unwrap()
                + directional_physical_flux(&ur, &n, &g).unwrap())
                * 0.5;
            let f = flux_central(&ul, &ur, &n, &g).unwrap();
            assert!(max_diff(&f, &expected) <= 1e-14 * scale(&f));
        }
    }

    /// Independent component-wise implementations working on raw arrays.
    fn oracle_phys(u: &[f64], n: &[f64], gamma: f64) -> (Vec<f64>, f64, f64) {
        let d = n.len();
        let rho = u[0];
        let v: Vec<f64> = (0..d).map(|i| u[1 + i] / rho).collect();
        let ke: f64 = v.iter().map(|x| x * x).sum::<f64>() * 0.5 * rho;
        let p = (gamma - 1.0) * (u[d + 1] - ke);
        let vn: f64 = (0..d).map(|i| v[i] * n[i]).sum();
        let mut f = vec![rho * vn];
        for i in 0..d {
            f.push(rho * v[i] * vn + p * n[i]);
        }
        f.push((u[d + 1] + p) * vn);
        let c = (gamma * p / rho).sqrt();
        (f, vn, c)
    }

    #[test]
    fn llf_and_hll_match_independent_implementations() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let ul = random_state::<3>(&mut rng);
            let ur = random_state::<3>(&mut rng);
            let n = random_normal::<3>(&mut rng);
            let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            let nh: Vec<f64> = n.iter().map(|x| x / nn).collect();
            let (a, b) = (ul.to_vec(), ur.to_vec());
            let (fl, vl, cl) = oracle_phys(&a, &nh, 1.4);
            let (fr, vr, cr) = oracle_phys(&b, &nh, 1.4);
            let lambda = (vl.abs() + cl).max(vr.abs() + cr);
            let llf: Vec<f64> = (0..5)
                .map(|k| nn * (0.5 * (fl[k] + fr[k]) - 0.5 * lambda * (b[k] - a[k])))
                .collect();
            let sl = (vl - cl).min(vr - cr);
            let sr = (vl + cl).max(vr + cr);
            let hll: Vec<f64> = (0..5)
                .map(|k| {
                    let v = if sl >= 0.0 {
                        fl[k]
                    } else if sr <= 0.0 {
                        fr[k]
                    } else {
                        (sr * fl[k] - sl * fr[k] + sl * sr * (b[k] - a[k])) / (sr - sl)
                    };
                    nn * v
                })
                .collect();
            let f = flux_llf(&ul, &ur, &n, &g).unwrap().to_vec();
            let h = flux_hll(&ul, &ur, &n, &g).unwrap().to_vec();
            let s = llf.iter().chain(&hll).fold(1.0_f64, |m, x| m.max(x.abs()));
            for k in 0..5 {
                assert!((f[k] - llf[k]).abs() <= 1e-14 * s);
                assert!((h[k] - hll[k]).abs() <= 1e-14 * s);
            }
        }
    }

    #[test]
    fn llf_dissipation_term() {
        let g = gas();
        let ul = state(1.0, [0.5, 0.0], 1.0);
        let ur = state(2.0, [0.1, 0.3], 1.5);
        let n = [0.0, 2.0];
        let f = flux_llf(&ul, &ur, &n, &g).unwrap();
        let c = flux_central(&ul, &ur, &n, &g).unwrap();
        let ql = cons2prim(&ul, &g).unwrap();
        let qr = cons2prim(&ur, &g).unwrap();
        let lambda = max_wave_speed_prim(&ql, &qr, &[0.0, 1.0], &g);
        let expected = c - (ur - ul) * (0.5 * lambda * 2.0);
        assert!(max_diff(&f, &expected) < 1e-14);
    }

    #[test]
    fn hll_upwinds_supersonic_flow() {
        let g = gas();
        // v·n - c > 0 on both sides
        let ul = state(1.0, [5.0, 0.0], 1.0);
        let ur = state(0.5, [4.0, 0.1], 0.8);
        let n = [1.0, 0.0];
        let f = flux_hll(&ul, &ur, &n, &g).unwrap();
        let expected = directional_physical_flux(&ul, &n, &g).unwrap();
        assert_eq!(f, expected);
        let f = flux_hll(&ur, &ul, &[-1.0, 0.0], &g).unwrap();
        let expected = directional_physical_flux(&ul, &[-1.0, 0.0], &g).unwrap();
        assert_eq!(f, expected);
    }

    #[test]
    fn fluxes_scale_linearly_in_normal() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let ul = random_state::<2>(&mut rng);
            let ur = random_state::<2>(&mut rng);
            let n = random_normal::<2>(&mut rng);
            let n2 = n.map(|x| 2.0 * x);
            for kind in FluxKind::ALL {
                let a = flux_directional(kind, &ul, &ur, &n, &g).unwrap() * 2.0;
                let b = flux_directional(kind, &ul, &ur, &n2, &g).unwrap();
                assert!(max_diff(&a, &b) <= 1e-14 * scale(&a), "{kind}");
            }
        }
    }

    #[test]
    fn counting() {
        let g = gas();
        let u = state(1.0, [0.1, 0.2], 1.0);
        let guard = count_guard();
        flux_shima_directional(&u, &u, &[1.0, 0.0], &g).unwrap();
        assert_eq!(guard.counts().two_point_evals, 1);
        assert_eq!(guard.counts().logmean_evals, 0);
        flux_ranocha_cartesian(&u, &u, 1, &g).unwrap();
        let c = guard.counts();
        assert_eq!((c.two_point_evals, c.logmean_evals, c.one_point_evals), (2, 2, 0));
    }

    #[cfg(debug_assertions)]
    #[test]
    fn inadmissible_states_rejected_in_debug_builds() {
        let g = gas();
        let bad = ConservedState::new(1.0, [0.0, 0.0], -1.0);
        let good = state(1.0, [0.0, 0.0], 1.0);
        assert!(matches!(
            flux_llf(&bad, &good, &[1.0, 0.0], &g),
            Err(Error::Admissibility { .. })
        ));
    }

    proptest! {
        #[test]
        fn directional_flux_symmetry(
            rl in 0.1..10.0f64, rr in 0.1..10.0f64, pl in 0.1..10.0f64, pr in 0.1..10.0f64,
            vl in prop::array::uniform2(-3.0..3.0f64), vr in prop::array::uniform2(-3.0..3.0f64),
            n in prop::array::uniform2(-1.0..1.0f64),
        ) {
            let g = gas();
            let ul = state(rl, vl, pl);
            let ur = state(rr, vr, pr);
            for kind in [FluxKind::ShimaEtal, FluxKind::RanochaEc, FluxKind::Central] {
                prop_assert_eq!(
                    flux_directional(kind, &ul, &ur, &n, &g).unwrap(),
                    flux_directional(kind, &ur, &ul, &n, &g).unwrap()
                );
            }
        }
    }
}
