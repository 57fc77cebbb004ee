//! Initial conditions on the periodic box `[-5, 5]^d`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::euler::{prim2cons_unchecked, ConservedState, GasParams, PrimitiveState};

/// Half the edge length of the computational box.
pub const HALF_WIDTH: f64 = 5.0;

/// Isentropic vortex parameters. The vortex lives in the `x₁x₂` plane and is
/// extruded in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexParams {
    pub epsilon: f64,
    pub rho0: f64,
    pub v0: [f64; 3],
    pub p0: f64,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self { epsilon: 20.0, rho0: 1.0, v0: [1.0, 1.0, 0.0], p0: 10.0 }
    }
}

impl VortexParams {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    /// Time for the vortex to cross the box once along the diagonal.
    pub fn period(&self) -> f64 {
        2.0 * HALF_WIDTH / self.v0[0].abs().max(self.v0[1].abs())
    }

    /// Temperature `p/ρ` at squared radius `r2`.
    pub fn temperature(&self, r2: f64, gas: &GasParams) -> f64 {
        let g = gas.gamma();
        let t0 = self.p0 / self.rho0;
        t0 - (g - 1.0) * self.epsilon * self.epsilon / (8.0 * g * PI * PI) * (1.0 - r2).exp()
    }
}

/// Shift into `[-L, L)` for the periodic box.
fn wrap(y: f64) -> f64 {
    let w = 2.0 * HALF_WIDTH;
    y - w * ((y + HALF_WIDTH) / w).floor()
}

/// The vortex at time `t`: the initial profile advected with `v0`.
pub fn ic_isentropic_vortex<const D: usize>(x: &[f64; D], t: f64, params: &VortexParams, gas: &GasParams) -> ConservedState<D> {
    let x1 = wrap(x[0] - params.v0[0] * t);
    let x2 = wrap(x[1] - params.v0[1] * t);
    let r2 = x1 * x1 + x2 * x2;
    let temp = params.temperature(r2, gas);
    let rho = params.rho0 * (temp * params.rho0 / params.p0).powf(gas.inv_gamma_minus_one());
    let du = params.epsilon / (2.0 * PI) * (0.5 * (1.0 - r2)).exp();
    let mut v: [f64; D] = std::array::from_fn(|j| params.v0[j]);
    v[0] -= du * x2;
    v[1] += du * x1;
    prim2cons_unchecked(&PrimitiveState { rho, v, p: rho * temp }, gas)
}

/// `ρ = 2 + sin(πx/5) sin(πy/5)`, `v = 0`, `p = ρ^γ`.
pub fn ic_sinusoidal<const D: usize>(x: &[f64; D], gas: &GasParams) -> ConservedState<D> {
    let rho = 2.0 + (PI * x[0] / HALF_WIDTH).sin() * (PI * x[1] / HALF_WIDTH).sin();
    prim2cons_unchecked(&PrimitiveState { rho, v: [0.0; D], p: rho.powf(gas.gamma()) }, gas)
}

/// Uniform random state with `ρ, p ∈ [1, 2]` and `v ∈ [-1, 1]^d`, a pure
/// function of the seed and the coordinates.
pub fn ic_random<const D: usize>(x: &[f64; D], seed: u64, gas: &GasParams) -> ConservedState<D> {
    let mut key = seed ^ 0x9e37_79b9_7f4a_7c15;
    for xi in x {
        key = (key ^ xi.to_bits()).wrapping_mul(0x100_0000_01b3).rotate_left(17);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let rho = rng.gen_range(1.0..=2.0);
    let v = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
    let p = rng.gen_range(1.0..=2.0);
    prim2cons_unchecked(&PrimitiveState { rho, v, p }, gas)
}

/// The vortex far field.
pub fn free_stream_state<const D: usize>(gas: &GasParams) -> ConservedState<D> {
    let p = VortexParams::default();
    prim2cons_unchecked(&PrimitiveState { rho: p.rho0, v: std::array::from_fn(|j| p.v0[j]), p: p.p0 }, gas)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    IsentropicVortex { epsilon: f64 },
    Sinusoidal,
    Random { seed: u64 },
    FreeStream,
}

impl InitialCondition {
    pub fn state<const D: usize>(&self, x: &[f64; D], gas: &GasParams) -> ConservedState<D> {
        match *self {
            InitialCondition::IsentropicVortex { epsilon } => ic_isentropic_vortex(x, 0.0, &VortexParams::with_epsilon(epsilon), gas),
            InitialCondition::Sinusoidal => ic_sinusoidal(x, gas),
            InitialCondition::Random { seed } => ic_random(x, seed, gas),
            InitialCondition::FreeStream => free_stream_state(gas),
        }
    }

    /// Exact solution at time `t` where one is known.
    pub fn exact<const D: usize>(&self, x: &[f64; D], t: f64, gas: &GasParams) -> Option<ConservedState<D>> {
        match *self {
            InitialCondition::IsentropicVortex { epsilon } => Some(ic_isentropic_vortex(x, t, &VortexParams::with_epsilon(epsilon), gas)),
            InitialCondition::FreeStream => Some(free_stream_state(gas)),
            _ => None,
        }
    }

    pub fn has_exact(&self) -> bool {
        matches!(self, InitialCondition::IsentropicVortex { .. } | InitialCondition::FreeStream)
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::IsentropicVortex { .. } => "isentropic_vortex",
            InitialCondition::Sinusoidal => "sinusoidal",
            InitialCondition::Random { .. } => "random",
            InitialCondition::FreeStream => "free_stream",
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialCondition {
    type Err = Error;

    /// Parses the name only; parameters take their defaults.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isentropic_vortex" | "vortex" => Ok(InitialCondition::IsentropicVortex { epsilon: VortexParams::default().epsilon }),
            "sinusoidal" => Ok(InitialCondition::Sinusoidal),
            "random" => Ok(InitialCondition::Random { seed: 0 }),
            "free_stream" => Ok(InitialCondition::FreeStream),
            _ => Err(Error::config("ic", format!("unknown initial condition '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::cons2prim;

    fn gas() -> GasParams {
        GasParams::default()
    }

    fn prim<const D: usize>(u: &ConservedState<D>) -> PrimitiveState<D> {
        cons2prim(u, &gas()).unwrap()
    }

    #[test]
    fn vortex_center_and_far_field() {
        let p = VortexParams::default();
        // 10 - 0.4*400/(8*1.4*pi^2)*e
        let expected = 10.0 - 0.4 * 400.0 / (8.0 * 1.4 * PI * PI) * 1f64.exp();
        assert!((p.temperature(0.0, &gas()) - expected).abs() < 1e-14);
        assert!((expected - 6.0655).abs() < 1e-4);
        let q = prim(&ic_isentropic_vortex(&[0.0, 0.0], 0.0, &p, &gas()));
        assert!((q.p / q.rho - expected).abs() < 1e-13);
        assert!(q.p / q.rho < 10.0);
        let far = prim(&ic_isentropic_vortex(&[4.9, -4.9, 1.0], 0.0, &p, &gas()));
        assert!((far.rho - 1.0).abs() < 1e-9 && (far.p - 10.0).abs() < 1e-8);
        assert!((far.v[0] - 1.0).abs() < 1e-9 && (far.v[1] - 1.0).abs() < 1e-9 && far.v[2] == 0.0);
    }

    #[test]
    fn vortex_is_advected_periodically() {
        let p = VortexParams::default();
        let x = [0.7, -1.3];
        let u0 = ic_isentropic_vortex(&x, 0.0, &p, &gas());
        let ut = ic_isentropic_vortex(&[x[0] + 2.5, x[1] + 2.5], 2.5, &p, &gas());
        assert!((u0 - ut).max_abs() < 1e-13);
        let period = ic_isentropic_vortex(&x, p.period(), &p, &gas());
        assert!((u0 - period).max_abs() < 1e-12);
        assert_eq!(p.period(), 10.0);
    }

    #[test]
    fn sinusoidal_values() {
        let q = prim(&ic_sinusoidal(&[0.0, 0.0], &gas()));
        assert!((q.rho - 2.0).abs() < 1e-15);
        assert!((q.p - 2f64.powf(1.4)).abs() < 1e-13 && (q.p - 2.6390).abs() < 1e-4);
        let a = ic_sinusoidal(&[-5.0, 1.0], &gas());
        let b = ic_sinusoidal(&[5.0, 1.0], &gas());
        assert!((a - b).max_abs() < 1e-13);
        for i in 0..50 {
            let x = [i as f64 * 0.37 - 5.0, 2.0 - i as f64 * 0.21];
            let r = prim(&ic_sinusoidal(&x, &gas())).rho;
            assert!((1.0..=3.0).contains(&r));
        }
    }

    #[test]
    fn random_is_reproducible_and_bounded() {
        let x = [0.25, -3.0, 1.0];
        assert_eq!(ic_random(&x, 7, &gas()), ic_random(&x, 7, &gas()));
        assert_ne!(ic_random(&x, 7, &gas()), ic_random(&x, 8, &gas()));
        for i in 0..200 {
            let q = prim(&ic_random(&[i as f64 * 0.1, 0.0, -0.5], 3, &gas()));
            assert!((1.0..=2.0).contains(&q.rho) && (1.0..=2.0).contains(&q.p));
            assert!(q.v.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn parsing() {
        assert_eq!("free_stream".parse::<InitialCondition>().unwrap(), InitialCondition::FreeStream);
        assert!("sod".parse::<InitialCondition>().is_err());
        assert!(InitialCondition::IsentropicVortex { epsilon: 5.0 }.has_exact());
        assert!(InitialCondition::Sinusoidal.exact::<2>(&[0.0, 0.0], 0.0, &gas()).is_none());
    }
}
