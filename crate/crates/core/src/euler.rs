//! Compressible Euler physics for a perfect gas.
//!
//! State conversions (conserved, primitive, entropy variables), physical fluxes,
//! the entropy/flux-potential pair and wave-speed estimates. The checked
//! conversions validate admissibility; the `*_unchecked` helpers are used inside
//! hot flux kernels which assume admissible input.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Ratio of specific heats with the reciprocal `1/(γ-1)` stored precomputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    gamma: f64,
    inv_gamma_minus_one: f64,
}

impl GasParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Parameter {
                name: "gamma",
                reason: format!("must be a finite value > 1, got {gamma}"),
            });
        }
        Ok(Self {
            gamma,
            inv_gamma_minus_one: 1.0 / (gamma - 1.0),
        })
    }

    #[inline(always)]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline(always)]
    pub fn inv_gamma_minus_one(&self) -> f64 {
        self.inv_gamma_minus_one
    }
}

impl Default for GasParams {
    fn default() -> Self {
        Self::new(1.4).unwrap()
    }
}

/// Conserved variables `(ρ, ρv, ρe)` at one node.
///
/// The same layout is used for flux vectors and residuals, see [`Flux`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedState<const D: usize> {
    pub rho: f64,
    pub rho_v: [f64; D],
    pub rho_e: f64,
}

/// Flux vectors and time derivatives share the shape of the conserved state.
pub type Flux<const D: usize> = ConservedState<D>;

impl<const D: usize> ConservedState<D> {
    /// Number of variables, `D + 2`.
    pub const NVARS: usize = D + 2;

    pub const ZERO: Self = Self {
        rho: 0.0,
        rho_v: [0.0; D],
        rho_e: 0.0,
    };

    pub fn new(rho: f64, rho_v: [f64; D], rho_e: f64) -> Self {
        Self { rho, rho_v, rho_e }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        assert_eq!(s.len(), D + 2);
        let mut out = Self::ZERO;
        for v in 0..D + 2 {
            out[v] = s[v];
        }
        out
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..D + 2).map(|v| self[v]).collect()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let mut acc = self.rho * other.rho + self.rho_e * other.rho_e;
        for m in 0..D {
            acc += self.rho_v[m] * other.rho_v[m];
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        (0..D + 2).fold(0.0_f64, |acc, v| acc.max(self[v].abs()))
    }

    pub fn is_finite(&self) -> bool {
        (0..D + 2).all(|v| self[v].is_finite())
    }

    /// `self + a * x`, written out so the compiler can fuse it.
    #[inline(always)]
    pub fn axpy(&mut self, a: f64, x: &Self) {
        self.rho += a * x.rho;
        for m in 0..D {
            self.rho_v[m] += a * x.rho_v[m];
        }
        self.rho_e += a * x.rho_e;
    }
}

impl<const D: usize> Index<usize> for ConservedState<D> {
    type Output = f64;
    #[inline(always)]
    fn index(&self, v: usize) -> &f64 {
        if v == 0 {
            &self.rho
        } else if v <= D {
            &self.rho_v[v - 1]
        } else if v == D + 1 {
            &self.rho_e
        } else {
            panic!("variable index {v} out of range for dimension {D}")
        }
    }
}

impl<const D: usize> IndexMut<usize> for ConservedState<D> {
    #[inline(always)]
    fn index_mut(&mut self, v: usize) -> &mut f64 {
        if v == 0 {
            &mut self.rho
        } else if v <= D {
            &mut self.rho_v[v - 1]
        } else if v == D + 1 {
            &mut self.rho_e
        } else {
            panic!("variable index {v} out of range for dimension {D}")
        }
    }
}

impl<const D: usize> Add for ConservedState<D> {
    type Output = Self;
    #[inline(always)]
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const D: usize> AddAssign for ConservedState<D> {
    #[inline(always)]
    fn add_assign(&mut self, rhs: Self) {
        self.rho += rhs.rho;
        for m in 0..D {
            self.rho_v[m] += rhs.rho_v[m];
        }
        self.rho_e += rhs.rho_e;
    }
}

impl<const D: usize> Sub for ConservedState<D> {
    type Output = Self;
    #[inline(always)]
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const D: usize> SubAssign for ConservedState<D> {
    #[inline(always)]
    fn sub_assign(&mut self, rhs: Self) {
        self.rho -= rhs.rho;
        for m in 0..D {
            self.rho_v[m] -= rhs.rho_v[m];
        }
        self.rho_e -= rhs.rho_e;
    }
}

impl<const D: usize> Mul<f64> for ConservedState<D> {
    type Output = Self;
    #[inline(always)]
    fn mul(mut self, a: f64) -> Self {
        self.rho *= a;
        for m in 0..D {
            self.rho_v[m] *= a;
        }
        self.rho_e *= a;
        self
    }
}

impl<const D: usize> Neg for ConservedState<D> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Primitive variables `(ρ, v, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveState<const D: usize> {
    pub rho: f64,
    pub v: [f64; D],
    pub p: f64,
}

/// Entropy variables `w = ∂U/∂u`, stored as `(w_0, w_v, w_last)` so that
/// `w_last = -ρ/p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyVars<const D: usize> {
    pub w: ConservedState<D>,
}

impl<const D: usize> EntropyVars<D> {
    #[inline(always)]
    pub fn last(&self) -> f64 {
        self.w.rho_e
    }
}

#[inline(always)]
pub(crate) fn dot<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut acc = 0.0;
    for m in 0..D {
        acc += a[m] * b[m];
    }
    acc
}

#[inline(always)]
pub(crate) fn norm<const D: usize>(a: &[f64; D]) -> f64 {
    dot(a, a).sqrt()
}

/// Pressure from conserved variables without admissibility checks.
#[inline(always)]
pub fn pressure<const D: usize>(u: &ConservedState<D>, gas: &GasParams) -> f64 {
    let kin = 0.5 * dot(&u.rho_v, &u.rho_v) / u.rho;
    (gas.gamma - 1.0) * (u.rho_e - kin)
}

/// Primitive variables without admissibility checks, for use in kernels.
#[inline(always)]
pub fn cons2prim_unchecked<const D: usize>(
    u: &ConservedState<D>,
    gas: &GasParams,
) -> PrimitiveState<D> {
    let inv_rho = 1.0 / u.rho;
    let mut v = [0.0; D];
    for m in 0..D {
        v[m] = u.rho_v[m] * inv_rho;
    }
    let p = (gas.gamma - 1.0) * (u.rho_e - 0.5 * dot(&u.rho_v, &v));
    PrimitiveState { rho: u.rho, v, p }
}

#[inline]
fn check_admissible(rho: f64, p: f64) -> Result<()> {
    if rho > 0.0 && p > 0.0 && rho.is_finite() && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Admissibility { rho, p })
    }
}

pub fn cons2prim<const D: usize>(
    u: &ConservedState<D>,
    gas: &GasParams,
) -> Result<PrimitiveState<D>> {
    if !(u.rho > 0.0) {
        return Err(Error::Admissibility {
            rho: u.rho,
            p: f64::NAN,
        });
    }
    let q = cons2prim_unchecked(u, gas);
    check_admissible(q.rho, q.p)?;
    Ok(q)
}

#[inline(always)]
pub fn prim2cons_unchecked<const D: usize>(
    q: &PrimitiveState<D>,
    gas: &GasParams,
) -> ConservedState<D> {
    let mut rho_v = [0.0; D];
    for m in 0..D {
        rho_v[m] = q.rho * q.v[m];
    }
    let rho_e = q.p * gas.inv_gamma_minus_one + 0.5 * q.rho * dot(&q.v, &q.v);
    ConservedState {
        rho: q.rho,
        rho_v,
        rho_e,
    }
}

pub fn prim2cons<const D: usize>(
    q: &PrimitiveState<D>,
    gas: &GasParams,
) -> Result<ConservedState<D>> {
    check_admissible(q.rho, q.p)?;
    Ok(prim2cons_unchecked(q, gas))
}

/// Checks that a conserved state has positive density and pressure.
pub fn check_state<const D: usize>(u: &ConservedState<D>, gas: &GasParams) -> Result<()> {
    cons2prim(u, gas).map(|_| ())
}

/// Physical flux `f^j(u)` in coordinate direction `j` (zero based).
pub fn physical_flux<const D: usize>(
    u: &ConservedState<D>,
    j: usize,
    gas: &GasParams,
) -> Result<ConservedState<D>> {
    if j >= D {
        return Err(Error::Parameter {
            name: "direction",
            reason: format!("direction {j} out of range for dimension {D}"),
        });
    }
    let q = cons2prim(u, gas)?;
    Ok(physical_flux_prim(&q, u.rho_e, j))
}

#[inline(always)]
pub(crate) fn physical_flux_prim<const D: usize>(
    q: &PrimitiveState<D>,
    rho_e: f64,
    j: usize,
) -> ConservedState<D> {
    let vj = q.v[j];
    let rho_vj = q.rho * vj;
    let mut rho_v = [0.0; D];
    for i in 0..D {
        rho_v[i] = rho_vj * q.v[i];
    }
    rho_v[j] += q.p;
    ConservedState {
        rho: rho_vj,
        rho_v,
        rho_e: (rho_e + q.p) * vj,
    }
}

/// Physical flux in an arbitrary (not necessarily unit) direction,
/// `Σ_j n_j f^j(u)`, without admissibility checks.
#[inline(always)]
pub fn directional_physical_flux_unchecked<const D: usize>(
    u: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> ConservedState<D> {
    let q = cons2prim_unchecked(u, gas);
    directional_physical_flux_prim(&q, u.rho_e, n)
}

#[inline(always)]
pub(crate) fn directional_physical_flux_prim<const D: usize>(
    q: &PrimitiveState<D>,
    rho_e: f64,
    n: &[f64; D],
) -> ConservedState<D> {
    let vn = dot(&q.v, n);
    let rho_vn = q.rho * vn;
    let mut rho_v = [0.0; D];
    for i in 0..D {
        rho_v[i] = rho_vn * q.v[i] + q.p * n[i];
    }
    ConservedState {
        rho: rho_vn,
        rho_v,
        rho_e: (rho_e + q.p) * vn,
    }
}

pub fn directional_physical_flux<const D: usize>(
    u: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<ConservedState<D>> {
    let q = cons2prim(u, gas)?;
    Ok(directional_physical_flux_prim(&q, u.rho_e, n))
}

/// Entropy variables for the entropy `U = -ρ s/(γ-1)`, `s = log p - γ log ρ`.
pub fn entropy_vars<const D: usize>(
    u: &ConservedState<D>,
    gas: &GasParams,
) -> Result<EntropyVars<D>> {
    let q = cons2prim(u, gas)?;
    Ok(entropy_vars_prim(&q, gas))
}

#[inline]
pub(crate) fn entropy_vars_prim<const D: usize>(
    q: &PrimitiveState<D>,
    gas: &GasParams,
) -> EntropyVars<D> {
    let gamma = gas.gamma;
    let s = q.p.ln() - gamma * q.rho.ln();
    let rho_p = q.rho / q.p;
    let v2 = dot(&q.v, &q.v);
    let mut w_v = [0.0; D];
    for m in 0..D {
        w_v[m] = rho_p * q.v[m];
    }
    EntropyVars {
        w: ConservedState {
            rho: (gamma - s) * gas.inv_gamma_minus_one - 0.5 * rho_p * v2,
            rho_v: w_v,
            rho_e: -rho_p,
        },
    }
}

/// Inverse of [`entropy_vars`].
pub fn entropy2cons<const D: usize>(
    w: &EntropyVars<D>,
    gas: &GasParams,
) -> Result<ConservedState<D>> {
    let w_last = w.last();
    if !(w_last < 0.0) || !w.w.is_finite() {
        return Err(Error::InvalidEntropyState { w_last });
    }
    let gamma = gas.gamma;
    let gm1 = gamma - 1.0;
    // scaled variables V = (γ-1) w
    let v1 = gm1 * w.w.rho;
    let v5 = gm1 * w_last;
    let mut vv = [0.0; D];
    for m in 0..D {
        vv[m] = gm1 * w.w.rho_v[m];
    }
    let vsq_over = dot(&vv, &vv) / (2.0 * v5);
    let s = gamma - v1 + vsq_over;
    let rho_iota = (gm1 / (-v5).powf(gamma)).powf(gas.inv_gamma_minus_one)
        * (-s * gas.inv_gamma_minus_one).exp();
    let mut rho_v = [0.0; D];
    for m in 0..D {
        rho_v[m] = rho_iota * vv[m];
    }
    let u = ConservedState {
        rho: -rho_iota * v5,
        rho_v,
        rho_e: rho_iota * (1.0 - vsq_over),
    };
    check_state(&u, gas)?;
    Ok(u)
}

/// Mathematical entropy `U = -ρ s/(γ-1)` and flux potentials `ψ^j = ρ v_j`.
pub fn entropy_and_potential<const D: usize>(
    u: &ConservedState<D>,
    gas: &GasParams,
) -> Result<(f64, [f64; D])> {
    let q = cons2prim(u, gas)?;
    let s = q.p.ln() - gas.gamma * q.rho.ln();
    Ok((-q.rho * s * gas.inv_gamma_minus_one, u.rho_v))
}

/// Entropy flux `F^j = U v_j`.
pub fn entropy_flux<const D: usize>(
    u: &ConservedState<D>,
    j: usize,
    gas: &GasParams,
) -> Result<f64> {
    let (entropy, _) = entropy_and_potential(u, gas)?;
    Ok(entropy * u.rho_v[j] / u.rho)
}

#[inline(always)]
pub fn sound_speed(rho: f64, p: f64, gas: &GasParams) -> f64 {
    (gas.gamma * p / rho).sqrt()
}

/// Largest signal speed `max(|v_l·n| + c_l, |v_r·n| + c_r)` for a unit normal.
pub fn max_wave_speed<const D: usize>(
    u_l: &ConservedState<D>,
    u_r: &ConservedState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> Result<f64> {
    let ql = cons2prim(u_l, gas)?;
    let qr = cons2prim(u_r, gas)?;
    Ok(max_wave_speed_prim(&ql, &qr, n, gas))
}

#[inline(always)]
pub(crate) fn max_wave_speed_prim<const D: usize>(
    ql: &PrimitiveState<D>,
    qr: &PrimitiveState<D>,
    n: &[f64; D],
    gas: &GasParams,
) -> f64 {
    let l = dot(&ql.v, n).abs() + sound_speed(ql.rho, ql.p, gas);
    let r = dot(&qr.v, n).abs() + sound_speed(qr.rho, qr.p, gas);
    l.max(r)
}

/// Largest signal speed of one state over all coordinate directions,
/// `|v| + c`, used by the CFL condition.
pub fn max_signal_speed<const D: usize>(u: &ConservedState<D>, gas: &GasParams) -> Result<f64> {
    let q = cons2prim(u, gas)?;
    Ok(norm(&q.v) + sound_speed(q.rho, q.p, gas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gas() -> GasParams {
        GasParams::new(1.4).unwrap()
    }

    fn random_prim<const D: usize>(rng: &mut impl Rng) -> PrimitiveState<D> {
        let mut v = [0.0; D];
        loop {
            for m in 0..D {
                v[m] = rng.gen_range(-5.0..5.0);
            }
            if norm(&v) <= 5.0 {
                break;
            }
        }
        PrimitiveState {
            rho: rng.gen_range(0.1..10.0),
            v,
            p: rng.gen_range(0.1..10.0),
        }
    }

    fn rel_err<const D: usize>(a: &ConservedState<D>, b: &ConservedState<D>) -> f64 {
        let scale = b.max_abs().max(1e-300);
        (*a - *b).max_abs() / scale
    }

    #[test]
    fn gas_params_validation() {
        assert!(GasParams::new(1.0).is_err());
        assert!(GasParams::new(0.5).is_err());
        assert!(GasParams::new(f64::NAN).is_err());
        let g = GasParams::new(1.4).unwrap();
        assert_eq!(g.inv_gamma_minus_one(), 1.0 / (1.4 - 1.0));
    }

    #[test]
    fn cons2prim_examples() {
        let g = gas();
        let q = cons2prim(&ConservedState::new(1.0, [0.0, 0.0], 2.5), &g).unwrap();
        assert_eq!(q.rho, 1.0);
        assert_eq!(q.v, [0.0, 0.0]);
        assert!((q.p - 1.0).abs() < 1e-15);

        let q = cons2prim(&ConservedState::new(2.0, [2.0, 0.0], 3.0), &g).unwrap();
        assert_eq!(q.v, [1.0, 0.0]);
        assert!((q.p - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cons2prim_rejects_inadmissible() {
        let g = gas();
        let err = cons2prim(&ConservedState::new(-1.0, [0.0, 0.0], 2.5), &g).unwrap_err();
        assert!(matches!(err, Error::Admissibility { rho, .. } if rho == -1.0));
        // kinetic energy exceeds total energy
        let err = cons2prim(&ConservedState::new(1.0, [3.0, 0.0], 2.0), &g).unwrap_err();
        assert!(matches!(err, Error::Admissibility { p, .. } if p < 0.0));
    }

    #[test]
    fn prim2cons_examples() {
        let g = gas();
        let u = prim2cons(
            &PrimitiveState {
                rho: 1.0,
                v: [0.0, 0.0],
                p: 1.0,
            },
            &g,
        )
        .unwrap();
        assert!(rel_err(&u, &ConservedState::new(1.0, [0.0, 0.0], 2.5)) <= 1e-15);
        let u = prim2cons(
            &PrimitiveState {
                rho: 1.0,
                v: [1.0, 1.0],
                p: 10.0,
            },
            &g,
        )
        .unwrap();
        assert!((u.rho_e - 26.0).abs() < 1e-14);
        assert!(prim2cons(
            &PrimitiveState {
                rho: 1.0,
                v: [0.0, 0.0],
                p: 0.0
            },
            &g
        )
        .is_err());
    }

    #[test]
    fn round_trips_on_random_states() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let q = random_prim::<3>(&mut rng);
            let u = prim2cons(&q, &g).unwrap();
            let q2 = cons2prim(&u, &g).unwrap();
            let u2 = prim2cons(&q2, &g).unwrap();
            assert!(rel_err(&u2, &u) <= 1e-15, "cons/prim round trip");
        }
    }

    // Recovering s from w loses about ρ|v|²/(2p) ulps, so the entropy round
    // trip is sampled on moderate Mach numbers.
    #[test]
    fn entropy_round_trip_on_random_states() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0_f64;
        for _ in 0..10_000 {
            let mut v = [0.0; 3];
            for m in 0..3 {
                v[m] = rng.gen_range(-1.0..1.0);
            }
            let q = PrimitiveState {
                rho: rng.gen_range(0.5..5.0),
                v,
                p: rng.gen_range(0.5..5.0),
            };
            let u = prim2cons(&q, &g).unwrap();
            let w = entropy_vars(&u, &g).unwrap();
            let u3 = entropy2cons(&w, &g).unwrap();
            worst = worst.max(rel_err(&u3, &u));
        }
        assert!(worst <= 1e-13, "entropy round trip error {worst:e}");
    }

    #[test]
    fn physical_flux_examples() {
        let g = gas();
        let u = ConservedState::new(1.0, [0.0, 0.0], 2.5);
        let f = physical_flux(&u, 0, &g).unwrap();
        assert!(rel_err(&f, &ConservedState::new(0.0, [1.0, 0.0], 0.0)) <= 1e-15);

        let u = prim2cons(
            &PrimitiveState {
                rho: 1.0,
                v: [2.0, 0.0],
                p: 1.0,
            },
            &g,
        )
        .unwrap();
        assert!((u.rho_e - 4.5).abs() < 1e-15);
        let f = physical_flux(&u, 0, &g).unwrap();
        let expected = [2.0, 5.0, 0.0, 11.0];
        for v in 0..4 {
            assert!((f[v] - expected[v]).abs() < 1e-14);
        }
        assert!(physical_flux(&u, 2, &g).is_err());
    }

    #[test]
    fn entropy_vars_example() {
        let g = gas();
        let w = entropy_vars(&ConservedState::new(1.0, [0.0, 0.0], 2.5), &g).unwrap();
        let expected = [3.5, 0.0, 0.0, -1.0];
        for v in 0..4 {
            assert!((w.w[v] - expected[v]).abs() < 1e-14, "{:?}", w);
        }
        let u = entropy2cons(&w, &g).unwrap();
        assert!((u.rho - 1.0).abs() < 1e-14);
        assert!(u.rho_v.iter().all(|x| x.abs() < 1e-14));
        assert!((u.rho_e - 2.5).abs() < 1e-14);
    }

    #[test]
    fn entropy2cons_rejects_nonnegative_last() {
        let g = gas();
        let w = EntropyVars {
            w: ConservedState::new(3.5, [0.0, 0.0], 0.0),
        };
        assert!(matches!(
            entropy2cons(&w, &g),
            Err(Error::InvalidEntropyState { .. })
        ));
    }

    #[test]
    fn last_entropy_variable_is_minus_rho_over_p() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = random_prim::<2>(&mut rng);
            let u = prim2cons(&q, &g).unwrap();
            let w = entropy_vars(&u, &g).unwrap();
            let q = cons2prim(&u, &g).unwrap();
            let expected = -q.rho / q.p;
            assert!((w.last() - expected).abs() <= 1e-15 * expected.abs());
        }
    }

    #[test]
    fn potentials_examples_and_identity() {
        let g = gas();
        let (_, psi) = entropy_and_potential(&ConservedState::new(1.0, [0.0, 0.0], 2.5), &g).unwrap();
        assert_eq!(psi, [0.0, 0.0]);
        let u = prim2cons(
            &PrimitiveState {
                rho: 2.0,
                v: [3.0, 0.0],
                p: 1.0,
            },
            &g,
        )
        .unwrap();
        let (_, psi) = entropy_and_potential(&u, &g).unwrap();
        assert!((psi[0] - 6.0).abs() < 1e-15 && psi[1] == 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let u = prim2cons(&random_prim::<3>(&mut rng), &g).unwrap();
            let w = entropy_vars(&u, &g).unwrap();
            let (_, psi) = entropy_and_potential(&u, &g).unwrap();
            for j in 0..3 {
                let f = physical_flux(&u, j, &g).unwrap();
                let from_def = w.w.dot(&f) - entropy_flux(&u, j, &g).unwrap();
                let scale = w.w.max_abs() * f.max_abs();
                assert!((from_def - psi[j]).abs() <= 1e-13 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let g = gas();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let u = prim2cons(&random_prim::<2>(&mut rng), &g).unwrap();
            let w = entropy_vars(&u, &g).unwrap();
            for v in 0..4 {
                let h = 1e-6 * u[v].abs().max(1.0);
                let mut up = u;
                let mut um = u;
                up[v] += h;
                um[v] -= h;
                let fd = (entropy_and_potential(&up, &g).unwrap().0
                    - entropy_and_potential(&um, &g).unwrap().0)
                    / (2.0 * h);
                let rel = (fd - w.w[v]).abs() / w.w[v].abs().max(1e-2);
                assert!(rel < 1e-6, "var {v}: fd {fd} vs w {}", w.w[v]);
            }
        }
    }

    #[test]
    fn wave_speed_examples() {
        let g = gas();
        let u = ConservedState::new(1.0, [0.0, 0.0], 2.5);
        let s = max_wave_speed(&u, &u, &[1.0, 0.0], &g).unwrap();
        assert!((s - 1.4_f64.sqrt()).abs() < 1e-15);
        let um = prim2cons(
            &PrimitiveState {
                rho: 1.0,
                v: [2.0, 0.0],
                p: 1.0,
            },
            &g,
        )
        .unwrap();
        let s = max_wave_speed(&um, &u, &[1.0, 0.0], &g).unwrap();
        assert!((s - (2.0 + 1.4_f64.sqrt())).abs() < 1e-15);
        assert_eq!(s, max_wave_speed(&u, &um, &[1.0, 0.0], &g).unwrap());
    }
}
