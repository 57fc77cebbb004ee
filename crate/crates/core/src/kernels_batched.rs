//! Batched flux differencing on structure-of-arrays element data.
//!
//! For every direction the element is rearranged so that the lines in that
//! direction are the fastest index. The triangular pair loop `i < k` along
//! a line is then the outer loop and the inner loops run stride-1 over
//! fixed-width lane blocks of lines. Log-means evaluate both branches in
//! every lane and blend, so there is no data-dependent branching.

use std::any::Any;

use crate::discretization::kernels::{Lines, NodeRec};
use crate::discretization::{is_cartesian_metrics, Precompute};
use crate::error::{Error, Result};
use crate::euler::{cons2prim, ConservedState, Flux, GasParams, PrimitiveState};
use crate::fluxes::counter::{record_logmean, record_two_point};
use crate::fluxes::FluxKind;
use crate::geometry::MetricTerms;
use crate::means::{series_denominator, LOGMEAN_EPSILON};
use crate::operators::FluxDiffOperator1D;
use crate::tensor::stride;

/// Number of lanes processed together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatchWidth(usize);

impl BatchWidth {
    pub const SUPPORTED: [usize; 5] = [1, 2, 4, 8, 16];

    pub fn new(lanes: usize) -> Result<Self> {
        if Self::SUPPORTED.contains(&lanes) {
            Ok(Self(lanes))
        } else {
            Err(Error::config("batch_width", format!("must be one of {:?}, got {lanes}", Self::SUPPORTED)))
        }
    }

    pub fn lanes(self) -> usize {
        self.0
    }

    /// `len` rounded up to a multiple of the width.
    pub fn padded(self, len: usize) -> usize {
        len.div_ceil(self.0) * self.0
    }
}

impl Default for BatchWidth {
    fn default() -> Self {
        Self(4)
    }
}

/// Neutral admissible state stored in padding lanes.
pub fn padding_state<const D: usize>() -> PrimitiveState<D> {
    PrimitiveState { rho: 1.0, v: [0.0; D], p: 1.0 }
}

/// One element in variable-major form, padded to the batch width.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementSoA<const D: usize> {
    pub n_nodes: usize,
    pub width: BatchWidth,
    pub rho: Vec<f64>,
    pub rho_v: [Vec<f64>; D],
    pub rho_e: Vec<f64>,
    pub v: [Vec<f64>; D],
    pub p: Vec<f64>,
    pub log_rho: Option<Vec<f64>>,
    pub log_p: Option<Vec<f64>>,
}

impl<const D: usize> ElementSoA<D> {
    pub fn padded_len(&self) -> usize {
        self.rho.len()
    }

    pub fn primitive(&self, l: usize) -> PrimitiveState<D> {
        PrimitiveState { rho: self.rho[l], v: std::array::from_fn(|j| self.v[j][l]), p: self.p[l] }
    }

    pub fn has_logs(&self) -> bool {
        self.log_rho.is_some()
    }
}

impl<const D: usize> ElementSoA<D> {
    /// `n_nodes` nodes, all holding the padding state.
    pub fn neutral(n_nodes: usize, width: BatchWidth, logs: bool, gas: &GasParams) -> Self {
        let len = width.padded(n_nodes);
        let e = padding_state::<D>().p * gas.inv_gamma_minus_one();
        Self {
            n_nodes,
            width,
            rho: vec![1.0; len],
            rho_v: std::array::from_fn(|_| vec![0.0; len]),
            rho_e: vec![e; len],
            v: std::array::from_fn(|_| vec![0.0; len]),
            p: vec![1.0; len],
            log_rho: logs.then(|| vec![0.0; len]),
            log_p: logs.then(|| vec![0.0; len]),
        }
    }

    #[inline]
    fn set(&mut self, l: usize, u: &ConservedState<D>, q: &PrimitiveState<D>) {
        self.rho[l] = u.rho;
        self.rho_e[l] = u.rho_e;
        for j in 0..D {
            self.rho_v[j][l] = u.rho_v[j];
            self.v[j][l] = q.v[j];
        }
        self.p[l] = q.p;
    }
}

/// Rearranges node-major states into an [`ElementSoA`]. Logarithms are
/// stored for [`Precompute::PrimitivesAndLogs`] only.
pub fn transpose_to_soa<const D: usize>(
    u: &[ConservedState<D>],
    gas: &GasParams,
    mode: Precompute,
    width: BatchWidth,
) -> Result<ElementSoA<D>> {
    let logs = mode == Precompute::PrimitivesAndLogs;
    let mut soa = ElementSoA::neutral(u.len(), width, logs, gas);
    for (l, s) in u.iter().enumerate() {
        let q = cons2prim(s, gas).map_err(|e| e.at_node(0, l))?;
        soa.set(l, s, &q);
        if let (Some(lr), Some(lp)) = (&mut soa.log_rho, &mut soa.log_p) {
            lr[l] = q.rho.ln();
            lp[l] = q.p.ln();
        }
    }
    Ok(soa)
}

/// Refills `soa` from converted node records, reusing its buffers.
pub(crate) fn fill_from_recs<const D: usize>(
    soa: &mut Option<ElementSoA<D>>,
    recs: &[NodeRec<D>],
    width: BatchWidth,
    logs: bool,
    gas: &GasParams,
) {
    let fits = soa.as_ref().is_some_and(|s| s.n_nodes == recs.len() && s.width == width && s.has_logs() == logs);
    if !fits {
        *soa = Some(ElementSoA::neutral(recs.len(), width, logs, gas));
    }
    let soa = soa.as_mut().unwrap();
    for (l, r) in recs.iter().enumerate() {
        soa.set(l, &r.u, &r.q);
        if let (Some(lr), Some(lp)) = (&mut soa.log_rho, &mut soa.log_p) {
            lr[l] = r.l.log_rho;
            lp[l] = r.l.log_p;
        }
    }
}

/// Inverse of [`transpose_to_soa`]; restores the conserved states bitwise.
pub fn transpose_to_aos<const D: usize>(soa: &ElementSoA<D>) -> Vec<ConservedState<D>> {
    (0..soa.n_nodes)
        .map(|l| ConservedState::new(soa.rho[l], std::array::from_fn(|j| soa.rho_v[j][l]), soa.rho_e[l]))
        .collect()
}

/// `(lo, hi, u)` per lane with `u = ((hi - lo)/(hi + lo))²`.
#[inline(always)]
fn lanes_u<const W: usize>(a: &[f64; W], b: &[f64; W]) -> ([f64; W], [f64; W], [f64; W]) {
    let mut lo = [0.0; W];
    let mut hi = [0.0; W];
    let mut u = [0.0; W];
    for i in 0..W {
        lo[i] = a[i].min(b[i]);
        hi[i] = a[i].max(b[i]);
        u[i] = (lo[i] * (lo[i] - 2.0 * hi[i]) + hi[i] * hi[i]) / (lo[i] * (lo[i] + 2.0 * hi[i]) + hi[i] * hi[i]);
    }
    (lo, hi, u)
}

/// Lane-wise log-mean, or its inverse when `INV`, with both branches evaluated in every lane.
#[inline(always)]
fn logmean_lanes<const W: usize, const INV: bool>(a: &[f64; W], b: &[f64; W]) -> [f64; W] {
    let (lo, hi, u) = lanes_u(a, b);
    let mut m = [0.0; W];
    for i in 0..W {
        let s = series_denominator(u[i]);
        let diff = hi[i] - lo[i];
        let lg = (diff / lo[i]).ln_1p();
        let series = u[i] < LOGMEAN_EPSILON;
        let num = if series { lo[i] + hi[i] } else { diff };
        let den = if series { s } else { lg };
        m[i] = if INV { den / num } else { num / den };
    }
    m
}

/// As [`logmean_lanes`] with precomputed logarithms.
#[inline(always)]
fn logmean_lanes_logs<const W: usize, const INV: bool>(a: &[f64; W], b: &[f64; W], la: &[f64; W], lb: &[f64; W]) -> [f64; W] {
    let (lo, hi, u) = lanes_u(a, b);
    let mut m = [0.0; W];
    for i in 0..W {
        let s = series_denominator(u[i]);
        // log difference in the same orientation as `hi - lo`
        let dl = if a[i] <= b[i] { lb[i] - la[i] } else { la[i] - lb[i] };
        let series = u[i] < LOGMEAN_EPSILON;
        let num = if series { lo[i] + hi[i] } else { hi[i] - lo[i] };
        let den = if series { s } else { dl };
        m[i] = if INV { den / num } else { num / den };
    }
    m
}

fn check_lanes(a: &[f64], b: &[f64], out: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.len() != out.len() {
        return Err(Error::Parameter {
            name: "lanes",
            reason: format!("lengths {}, {}, {} differ", a.len(), b.len(), out.len()),
        });
    }
    Ok(())
}

fn lane_map(a: &[f64], b: &[f64], out: &mut [f64], f: impl Fn(&[f64; 4], &[f64; 4]) -> [f64; 4]) -> Result<()> {
    check_lanes(a, b, out)?;
    let mut ca = [1.0; 4];
    let mut cb = [1.0; 4];
    for start in (0..a.len()).step_by(4) {
        let len = (a.len() - start).min(4);
        ca[..len].copy_from_slice(&a[start..start + len]);
        cb[..len].copy_from_slice(&b[start..start + len]);
        // keep the tail lanes neutral
        ca[len..].fill(1.0);
        cb[len..].fill(1.0);
        out[start..start + len].copy_from_slice(&f(&ca, &cb)[..len]);
    }
    Ok(())
}

/// Branchless lane-wise logarithmic mean. Arguments must be positive.
pub fn logmean_batched(a_minus: &[f64], a_plus: &[f64], out: &mut [f64]) -> Result<()> {
    lane_map(a_minus, a_plus, out, |a, b| logmean_lanes::<4, false>(a, b))
}

/// Branchless lane-wise inverse logarithmic mean. Arguments must be positive.
pub fn inv_logmean_batched(a_minus: &[f64], a_plus: &[f64], out: &mut [f64]) -> Result<()> {
    lane_map(a_minus, a_plus, out, |a, b| logmean_lanes::<4, true>(a, b))
}

/// State of `W` lanes at one line position.
#[derive(Debug, Clone, Copy)]
struct Lane<const W: usize, const D: usize> {
    rho: [f64; W],
    v: [[f64; W]; D],
    p: [f64; W],
    lr: [f64; W],
    lp: [f64; W],
}

/// One line position of `W` lines: state and contravariant vector of the sweep direction.
#[derive(Debug, Clone, Copy)]
struct Block<const W: usize, const D: usize> {
    s: Lane<W, D>,
    ja: [[f64; W]; D],
}

impl<const W: usize, const D: usize> Block<W, D> {
    /// Padding lanes hold ρ = p = 1 (logs 0) at rest.
    const NEUTRAL: Self = Self {
        s: Lane { rho: [1.0; W], v: [[0.0; W]; D], p: [1.0; W], lr: [0.0; W], lp: [0.0; W] },
        ja: [[0.0; W]; D],
    };
}

#[derive(Debug, Clone, Copy)]
struct AccBlock<const W: usize, const D: usize> {
    rho: [f64; W],
    mom: [[f64; W]; D],
    e: [f64; W],
}

impl<const W: usize, const D: usize> AccBlock<W, D> {
    const ZERO: Self = Self { rho: [0.0; W], mom: [[0.0; W]; D], e: [0.0; W] };

    #[inline(always)]
    fn add(&mut self, w: f64, f: &[[f64; W]; 3], mom: &[[f64; W]; D]) {
        for q in 0..W {
            self.rho[q] += w * f[0][q];
            self.e[q] += w * f[2][q];
        }
        for j in 0..D {
            for q in 0..W {
                self.mom[j][q] += w * mom[j][q];
            }
        }
    }
}

/// Symmetric two-point flux of `W` lane pairs with normal velocities `vna`, `vnb`.
#[inline(always)]
fn lane_flux<const W: usize, const D: usize>(
    kind: FluxKind,
    a: &Lane<W, D>,
    b: &Lane<W, D>,
    vna: &[f64; W],
    vnb: &[f64; W],
    logs: bool,
    gas: &GasParams,
) -> [[f64; W]; 3] {
    let igm1 = gas.inv_gamma_minus_one();
    let mut vv = [0.0; W];
    for j in 0..D {
        for i in 0..W {
            vv[i] += a.v[j][i] * b.v[j][i];
        }
    }
    // (mass flux, pressure term of the momentum flux, energy flux)
    let mut out = [[0.0; W]; 3];
    match kind {
        FluxKind::ShimaEtal => {
            for i in 0..W {
                let vn = 0.5 * (vna[i] + vnb[i]);
                let f_rho = 0.5 * (a.rho[i] + b.rho[i]) * vn;
                let p_avg = 0.5 * (a.p[i] + b.p[i]);
                out[0][i] = f_rho;
                out[1][i] = p_avg;
                out[2][i] = f_rho * 0.5 * vv[i] + p_avg * vn * igm1 + 0.5 * (b.p[i] * vna[i] + a.p[i] * vnb[i]);
            }
        }
        FluxKind::RanochaEc => {
            let mut x = [0.0; W];
            let mut y = [0.0; W];
            for i in 0..W {
                x[i] = a.rho[i] * b.p[i];
                y[i] = b.rho[i] * a.p[i];
            }
            let (rho_m, inv_rp) = if logs {
                let mut lx = [0.0; W];
                let mut ly = [0.0; W];
                for i in 0..W {
                    lx[i] = a.lr[i] + b.lp[i];
                    ly[i] = b.lr[i] + a.lp[i];
                }
                (logmean_lanes_logs::<W, false>(&a.rho, &b.rho, &a.lr, &b.lr), logmean_lanes_logs::<W, true>(&x, &y, &lx, &ly))
            } else {
                (logmean_lanes::<W, false>(&a.rho, &b.rho), logmean_lanes::<W, true>(&x, &y))
            };
            for i in 0..W {
                let f_rho = rho_m[i] * 0.5 * (vna[i] + vnb[i]);
                let extra = f_rho * (a.p[i] * b.p[i] * inv_rp[i]) * igm1;
                out[0][i] = f_rho;
                out[1][i] = 0.5 * (a.p[i] + b.p[i]);
                out[2][i] = f_rho * 0.5 * vv[i] + extra + 0.5 * (b.p[i] * vna[i] + a.p[i] * vnb[i]);
            }
        }
        FluxKind::Central => {
            for i in 0..W {
                let mut ka = 0.0;
                let mut kb = 0.0;
                for j in 0..D {
                    ka += a.v[j][i] * a.v[j][i];
                    kb += b.v[j][i] * b.v[j][i];
                }
                let ea = a.p[i] * igm1 + 0.5 * a.rho[i] * ka;
                let eb = b.p[i] * igm1 + 0.5 * b.rho[i] * kb;
                out[0][i] = 0.5 * (a.rho[i] * vna[i] + b.rho[i] * vnb[i]);
                out[1][i] = 0.5 * (a.p[i] + b.p[i]);
                out[2][i] = 0.5 * ((ea + a.p[i]) * vna[i] + (eb + b.p[i]) * vnb[i]);
            }
        }
        FluxKind::Llf | FluxKind::Hll => unreachable!("checked by the caller"),
    }
    out
}

/// Reusable buffers of the batched kernel, kept for the last width and dimension used.
#[derive(Default)]
pub struct BatchedScratch {
    buffers: Option<Box<dyn Any + Send>>,
}

impl std::fmt::Debug for BatchedScratch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BatchedScratch").field("allocated", &self.buffers.is_some()).finish()
    }
}

type Buffers<const W: usize, const D: usize> = (Vec<Block<W, D>>, Vec<AccBlock<W, D>>);

impl BatchedScratch {
    fn take<const W: usize, const D: usize>(&mut self) -> Buffers<W, D> {
        self.buffers
            .take()
            .and_then(|b| b.downcast::<Buffers<W, D>>().ok())
            .map(|b| *b)
            .unwrap_or_default()
    }

    fn put<const W: usize, const D: usize>(&mut self, b: Buffers<W, D>) {
        self.buffers = Some(Box::new(b));
    }
}

/// Accumulates the undivided flux-differencing volume term of one element into `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn acc_fluxdiff_batched<const D: usize>(
    soa: &ElementSoA<D>,
    s: &[f64],
    lines: &Lines,
    metrics: &MetricTerms<D>,
    kind: FluxKind,
    gas: &GasParams,
    scratch: &mut BatchedScratch,
    out: &mut [Flux<D>],
) -> Result<()> {
    if !kind.is_symmetric() {
        return Err(Error::config("volume_flux", format!("{kind} is not a symmetric two-point flux")));
    }
    match soa.width.lanes() {
        1 => acc_width::<1, D>(soa, s, lines, metrics, kind, gas, scratch, out),
        2 => acc_width::<2, D>(soa, s, lines, metrics, kind, gas, scratch, out),
        4 => acc_width::<4, D>(soa, s, lines, metrics, kind, gas, scratch, out),
        8 => acc_width::<8, D>(soa, s, lines, metrics, kind, gas, scratch, out),
        _ => acc_width::<16, D>(soa, s, lines, metrics, kind, gas, scratch, out),
    }
    let pairs = (D * lines.n_face * lines.n * (lines.n - 1) / 2) as u64;
    record_two_point(pairs);
    if kind.logmeans_per_eval() > 0 {
        record_logmean(pairs * kind.logmeans_per_eval());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn acc_width<const W: usize, const D: usize>(
    soa: &ElementSoA<D>,
    s: &[f64],
    lines: &Lines,
    metrics: &MetricTerms<D>,
    kind: FluxKind,
    gas: &GasParams,
    scratch: &mut BatchedScratch,
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let logs = soa.has_logs();
    let chunks = soa.width.padded(lines.n_face) / W;
    let cartesian = is_cartesian_metrics(metrics);
    let (mut blocks, mut acc) = scratch.take::<W, D>();
    for dir in 0..D {
        let st = stride(dir, n);
        // column-major blocks: line position i of chunk c at c * n + i
        blocks.clear();
        blocks.resize(chunks * n, Block::NEUTRAL);
        acc.clear();
        acc.resize(chunks * n, AccBlock::ZERO);
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            let (c, q) = (t / W, t % W);
            for i in 0..n {
                let l = s0 + i * st;
                let b = &mut blocks[c * n + i];
                b.s.rho[q] = soa.rho[l];
                b.s.p[q] = soa.p[l];
                for j in 0..D {
                    b.s.v[j][q] = soa.v[j][l];
                    b.ja[j][q] = metrics.ja[l][dir][j];
                }
                if let (Some(lr), Some(lp)) = (&soa.log_rho, &soa.log_p) {
                    b.s.lr[q] = lr[l];
                    b.s.lp[q] = lp[l];
                }
            }
        }
        for (col, acol) in blocks.chunks_exact(n).zip(acc.chunks_exact_mut(n)) {
            if cartesian {
                column::<W, D, true>(col, acol, s, dir, metrics.ja[0][dir], kind, logs, gas);
            } else {
                column::<W, D, false>(col, acol, s, dir, [0.0; D], kind, logs, gas);
            }
        }
        // scatter back, dropping padding lanes
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            let (c, q) = (t / W, t % W);
            for i in 0..n {
                let a = &acc[c * n + i];
                let o = &mut out[s0 + i * st];
                o.rho += a.rho[q];
                for j in 0..D {
                    o.rho_v[j] += a.mom[j][q];
                }
                o.rho_e += a.e[q];
            }
        }
    }
    scratch.put((blocks, acc));
}

/// Triangular pair loop over the `n` positions of one chunk of lines. On
/// Cartesian elements the normal is the constant `cart` and only its `dir`
/// component is used.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn column<const W: usize, const D: usize, const CART: bool>(
    col: &[Block<W, D>],
    acc: &mut [AccBlock<W, D>],
    s: &[f64],
    dir: usize,
    cart: [f64; D],
    kind: FluxKind,
    logs: bool,
    gas: &GasParams,
) {
    let n = col.len();
    let central = kind == FluxKind::Central;
    for i in 0..n {
        let a = &col[i];
        for k in i + 1..n {
            let b = &col[k];
            let nrm: [[f64; W]; D] = if CART {
                [[0.0; W]; D]
            } else {
                std::array::from_fn(|j| std::array::from_fn(|q| 0.5 * (a.ja[j][q] + b.ja[j][q])))
            };
            let (mut vna, mut vnb) = ([0.0; W], [0.0; W]);
            if CART {
                for q in 0..W {
                    vna[q] = a.s.v[dir][q] * cart[dir];
                    vnb[q] = b.s.v[dir][q] * cart[dir];
                }
            } else {
                for j in 0..D {
                    for q in 0..W {
                        vna[q] += a.s.v[j][q] * nrm[j][q];
                        vnb[q] += b.s.v[j][q] * nrm[j][q];
                    }
                }
            }
            let f = lane_flux(kind, &a.s, &b.s, &vna, &vnb, logs, gas);
            let mut mom = [[0.0; W]; D];
            for j in 0..D {
                for q in 0..W {
                    mom[j][q] = if central {
                        // one-sided products ρ v v_n
                        0.5 * (a.s.rho[q] * a.s.v[j][q] * vna[q] + b.s.rho[q] * b.s.v[j][q] * vnb[q])
                    } else {
                        f[0][q] * 0.5 * (a.s.v[j][q] + b.s.v[j][q])
                    };
                }
            }
            if CART {
                for q in 0..W {
                    mom[dir][q] += f[1][q] * cart[dir];
                }
            } else {
                for j in 0..D {
                    for q in 0..W {
                        mom[j][q] += f[1][q] * nrm[j][q];
                    }
                }
            }
            acc[i].add(s[i * n + k], &f, &mom);
            acc[k].add(s[k * n + i], &f, &mom);
        }
    }
}

/// Batched counterpart of [`crate::discretization::volume_fluxdiff`], divided by `J`.
pub fn volume_fluxdiff_batched<const D: usize>(
    soa: &ElementSoA<D>,
    op: &FluxDiffOperator1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = Lines::new::<D>(op.degree + 1);
    if soa.n_nodes != lines.n_vol || metrics.jac.len() != lines.n_vol {
        return Err(Error::Parameter {
            name: "element",
            reason: format!("expected {} nodes, got {}", lines.n_vol, soa.n_nodes),
        });
    }
    let mut out = vec![Flux::ZERO; lines.n_vol];
    acc_fluxdiff_batched(soa, &op.dsplit_flat, &lines, metrics, volume_flux, gas, &mut BatchedScratch::default(), &mut out)?;
    for (o, &j) in out.iter_mut().zip(&metrics.jac) {
        *o = *o * (1.0 / j);
    }
    Ok(out)
}
