//! Numerical fluxes in arbitrary directions by rotating into the first
//! coordinate direction and back.

use super::{flux_cartesian_uncounted, record, FluxKind};
use crate::error::{Error, Result};
use crate::euler::{cons2prim_unchecked, norm, ConservedState, Flux, GasParams};

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Orthonormal frame `(n, t_1[, t_2])` stored as matrix rows, plus `‖ñ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationFrame<const D: usize> {
    pub rows: [[f64; D]; D],
    pub scale: f64,
}

impl<const D: usize> RotationFrame<D> {
    /// Frame for the normal direction `ñ` with deterministic tangents: in 2D
    /// `t = (-n_2, n_1)`; in 3D `t_1 = n × e_k` for the smallest component
    /// `k` of `n` (the last one on ties), normalized, and `t_2 = n × t_1`.
    pub fn new(n_tilde: &[f64; D]) -> Result<Self> {
        let scale = norm(n_tilde);
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!(
                "rotated flux needs a nonzero normal, got {n_tilde:?}"
            )));
        }
        let inv = 1.0 / scale;
        let mut rows = [[0.0; D]; D];
        for i in 0..D {
            rows[0][i] = n_tilde[i] * inv;
        }
        match D {
            1 => {}
            2 => {
                rows[1][0] = -rows[0][1];
                rows[1][1] = rows[0][0];
            }
            3 => {
                let n = [rows[0][0], rows[0][1], rows[0][2]];
                // ties go to the last index so that e_1 maps to a pure sign flip
                let k = (0..3)
                    .rev()
                    .min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
                    .unwrap();
                let mut e = [0.0; 3];
                e[k] = 1.0;
                let t1 = cross(&n, &e);
                let t1n = 1.0 / (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
                let t1 = [t1[0] * t1n, t1[1] * t1n, t1[2] * t1n];
                let t2 = cross(&n, &t1);
                for i in 0..3 {
                    rows[1][i] = t1[i];
                    rows[2][i] = t2[i];
                }
            }
            _ => {
                return Err(Error::Parameter {
                    name: "dimension",
                    reason: format!("rotations are implemented for 2D and 3D, got {D}"),
                })
            }
        }
        Ok(RotationFrame { rows, scale })
    }

    /// Frame from explicit rows, checked for orthonormality.
    pub fn from_rows(rows: [[f64; D]; D], scale: f64) -> Result<Self> {
        let f = RotationFrame { rows, scale };
        f.check()?;
        Ok(f)
    }

    pub fn check(&self) -> Result<()> {
        for a in 0..D {
            for b in 0..D {
                let dot: f64 = (0..D).map(|i| self.rows[a][i] * self.rows[b][i]).sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                if (dot - expected).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Geometry(format!(
                        "rotation frame is not orthonormal: rows {a},{b} give {dot}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline(always)]
    fn rotate(&self, u: &ConservedState<D>) -> ConservedState<D> {
        let mut m = [0.0; D];
        for r in 0..D {
            let mut s = 0.0;
            for i in 0..D {
                s += self.rows[r][i] * u.rho_v[i];
            }
            m[r] = s;
        }
        ConservedState {
            rho: u.rho,
            rho_v: m,
            rho_e: u.rho_e,
        }
    }

    #[inline(always)]
    fn rotate_back(&self, f: &Flux<D>) -> Flux<D> {
        let mut m = [0.0; D];
        for i in 0..D {
            let mut s = 0.0;
            for r in 0..D {
                s += self.rows[r][i] * f.rho_v[r];
            }
            m[i] = s;
        }
        Flux {
            rho: f.rho,
            rho_v: m,
            rho_e: f.rho_e,
        }
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[derive(Debug, Clone, Copy)]
pub enum Rotation<'a, const D: usize> {
    /// Tangents are computed from the normal on every call.
    OnTheFly(&'a [f64; D]),
    Precomputed(&'a RotationFrame<D>),
}

/// Numerical flux of `base` in direction `ñ` by rotation.
pub fn rotated_flux<const D: usize>(
    ul: &ConservedState<D>,
    ur: &ConservedState<D>,
    rotation: Rotation<'_, D>,
    base: FluxKind,
    gas: &GasParams,
) -> Result<Flux<D>> {
    let frame_storage;
    let frame = match rotation {
        Rotation::OnTheFly(n) => {
            frame_storage = RotationFrame::new(n)?;
            &frame_storage
        }
        Rotation::Precomputed(f) => {
            if cfg!(debug_assertions) {
                f.check()?;
            }
            f
        }
    };
    let a = frame.rotate(ul);
    let b = frame.rotate(ur);
    if cfg!(debug_assertions) {
        crate::euler::check_state(&a, gas)?;
        crate::euler::check_state(&b, gas)?;
    }
    let qa = cons2prim_unchecked(&a, gas);
    let qb = cons2prim_unchecked(&b, gas);
    record(base);
    let f = flux_cartesian_uncounted(base, &a, &qa, &b, &qb, 0, gas);
    Ok(frame.rotate_back(&f) * frame.scale)
}
