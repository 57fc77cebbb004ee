//! Element-local volume kernels.
//!
//! Every kernel accumulates its undivided contribution into `out`; the
//! public wrappers in the parent module divide by `J`. Nodes are addressed
//! through [`NodeRec`] slices so the three precomputation modes share one
//! loop nest, and the Gauss kernels address the element's projected face
//! states at indices past the volume nodes.

use std::marker::PhantomData;

use crate::error::Result;
use crate::euler::{
    cons2prim_unchecked, directional_physical_flux_prim, entropy2cons, entropy_vars_prim, ConservedState, EntropyVars,
    Flux, GasParams, PrimitiveState,
};
use crate::fluxes::counter::{record_logmean, record_one_point, record_two_point};
use crate::fluxes::{FluxKind, LogVars, TwoPointFlux};
use crate::geometry::{average, MetricTerms};
use crate::tensor::{self, stride};

/// Conserved state with its primitive variables and (optionally filled) logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NodeRec<const D: usize> {
    pub u: ConservedState<D>,
    pub q: PrimitiveState<D>,
    pub l: LogVars,
}

impl<const D: usize> NodeRec<D> {
    pub(crate) const EMPTY: Self = Self {
        u: ConservedState::ZERO,
        q: PrimitiveState { rho: 0.0, v: [0.0; D], p: 0.0 },
        l: LogVars { log_rho: 0.0, log_p: 0.0 },
    };

    #[inline]
    pub(crate) fn new(u: ConservedState<D>, q: PrimitiveState<D>, with_logs: bool) -> Self {
        let l = if with_logs { LogVars::of(&q) } else { LogVars { log_rho: 0.0, log_p: 0.0 } };
        Self { u, q, l }
    }
}

/// How kernels obtain primitive variables for a pair of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precompute {
    /// Convert both conserved states inside every flux evaluation.
    None,
    Primitives,
    PrimitivesAndLogs,
}

pub(crate) trait PairEval<const D: usize> {
    fn kind(&self) -> FluxKind;
    fn dir(&self, i: usize, k: usize, n: &[f64; D]) -> Flux<D>;
    fn cart(&self, i: usize, k: usize, j: usize) -> Flux<D>;
}

pub(crate) struct OnTheFly<'a, F, const D: usize> {
    recs: &'a [NodeRec<D>],
    gas: &'a GasParams,
    _f: PhantomData<F>,
}

pub(crate) struct Prims<'a, F, const D: usize> {
    recs: &'a [NodeRec<D>],
    gas: &'a GasParams,
    _f: PhantomData<F>,
}

pub(crate) struct PrimsLogs<'a, F, const D: usize> {
    recs: &'a [NodeRec<D>],
    gas: &'a GasParams,
    _f: PhantomData<F>,
}

macro_rules! pair_eval_ctor {
    ($($t:ident),*) => {$(
        impl<'a, F, const D: usize> $t<'a, F, D> {
            #[inline(always)]
            pub(crate) fn new(recs: &'a [NodeRec<D>], gas: &'a GasParams) -> Self {
                Self { recs, gas, _f: PhantomData }
            }
        }
    )*};
}
pair_eval_ctor!(OnTheFly, Prims, PrimsLogs);

impl<F: TwoPointFlux<D>, const D: usize> PairEval<D> for OnTheFly<'_, F, D> {
    #[inline(always)]
    fn kind(&self) -> FluxKind {
        F::KIND
    }
    #[inline(always)]
    fn dir(&self, i: usize, k: usize, n: &[f64; D]) -> Flux<D> {
        let qi = cons2prim_unchecked(&self.recs[i].u, self.gas);
        let qk = cons2prim_unchecked(&self.recs[k].u, self.gas);
        F::directional(&qi, &qk, n, self.gas)
    }
    #[inline(always)]
    fn cart(&self, i: usize, k: usize, j: usize) -> Flux<D> {
        let qi = cons2prim_unchecked(&self.recs[i].u, self.gas);
        let qk = cons2prim_unchecked(&self.recs[k].u, self.gas);
        F::cartesian(&qi, &qk, j, self.gas)
    }
}

impl<F: TwoPointFlux<D>, const D: usize> PairEval<D> for Prims<'_, F, D> {
    #[inline(always)]
    fn kind(&self) -> FluxKind {
        F::KIND
    }
    #[inline(always)]
    fn dir(&self, i: usize, k: usize, n: &[f64; D]) -> Flux<D> {
        F::directional(&self.recs[i].q, &self.recs[k].q, n, self.gas)
    }
    #[inline(always)]
    fn cart(&self, i: usize, k: usize, j: usize) -> Flux<D> {
        F::cartesian(&self.recs[i].q, &self.recs[k].q, j, self.gas)
    }
}

impl<F: TwoPointFlux<D>, const D: usize> PairEval<D> for PrimsLogs<'_, F, D> {
    #[inline(always)]
    fn kind(&self) -> FluxKind {
        F::KIND
    }
    #[inline(always)]
    fn dir(&self, i: usize, k: usize, n: &[f64; D]) -> Flux<D> {
        let (a, b) = (&self.recs[i], &self.recs[k]);
        F::directional_logs(&a.q, &b.q, &a.l, &b.l, n, self.gas)
    }
    #[inline(always)]
    fn cart(&self, i: usize, k: usize, j: usize) -> Flux<D> {
        let (a, b) = (&self.recs[i], &self.recs[k]);
        F::cartesian_logs(&a.q, &b.q, &a.l, &b.l, j, self.gas)
    }
}

/// Runs `$body` with `$ev` bound to the monomorphized pair evaluator for
/// the flux kind and precomputation mode. `$body` must return a `Result`.
macro_rules! with_pairs {
    ($kind:expr, $mode:expr, $recs:expr, $gas:expr, |$ev:ident| $body:expr) => {{
        use $crate::discretization::kernels::{OnTheFly, Prims, PrimsLogs};
        use $crate::discretization::Precompute;
        use $crate::fluxes::{Central, FluxKind, RanochaEc, ShimaEtal};
        match $kind {
            FluxKind::ShimaEtal => with_pairs!(@mode ShimaEtal, $mode, $recs, $gas, $ev, $body),
            FluxKind::RanochaEc => with_pairs!(@mode RanochaEc, $mode, $recs, $gas, $ev, $body),
            FluxKind::Central => with_pairs!(@mode Central, $mode, $recs, $gas, $ev, $body),
            k => Err($crate::error::Error::config(
                "volume_flux",
                format!("{k} is not a symmetric two-point flux"),
            )),
        }
    }};
    (@mode $f:ty, $mode:expr, $recs:expr, $gas:expr, $ev:ident, $body:expr) => {
        match $mode {
            Precompute::None => {
                let $ev = OnTheFly::<$f, D>::new($recs, $gas);
                $body
            }
            Precompute::Primitives => {
                let $ev = Prims::<$f, D>::new($recs, $gas);
                $body
            }
            Precompute::PrimitivesAndLogs => {
                let $ev = PrimsLogs::<$f, D>::new($recs, $gas);
                $body
            }
        }
    };
}
pub(crate) use with_pairs;

fn record_pairs(kind: FluxKind, n: u64) {
    record_two_point(n);
    let lm = kind.logmeans_per_eval();
    if lm > 0 {
        record_logmean(n * lm);
    }
}

/// Geometry seen by an element kernel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ElementMetrics<'a, const D: usize> {
    pub metrics: &'a MetricTerms<D>,
    /// `Ja^n = c_n e_n` everywhere; Cartesian fluxes are used.
    pub cartesian: bool,
}

impl<const D: usize> ElementMetrics<'_, D> {
    #[inline(always)]
    fn scale(&self, dir: usize) -> f64 {
        self.metrics.ja[0][dir][dir]
    }
}

/// Tensor-line bookkeeping for one degree.
#[derive(Debug, Clone)]
pub(crate) struct Lines {
    pub n: usize,
    /// First node of each line, per direction; also the face node order.
    pub starts: Vec<Vec<usize>>,
    pub n_vol: usize,
    pub n_face: usize,
}

impl Lines {
    pub(crate) fn new<const D: usize>(n: usize) -> Self {
        Self {
            n,
            starts: (0..D).map(|dir| tensor::line_starts::<D>(dir, n)).collect(),
            n_vol: n.pow(D as u32),
            n_face: n.pow(D as u32 - 1),
        }
    }

    /// Index of face state `t` on `side` of direction `dir` in the stacked node set.
    #[inline(always)]
    pub(crate) fn face_index(&self, dir: usize, side: usize, t: usize) -> usize {
        self.n_vol + (dir * 2 + side) * self.n_face + t
    }

    #[inline(always)]
    pub(crate) fn face_slot(&self, dir: usize, side: usize, t: usize) -> usize {
        (dir * 2 + side) * self.n_face + t
    }
}

/// Symmetric flux differencing `Σ_n Σ_k S^n_{ik} f(u_i, u_k, α^n_{ik})` with
/// pairs `i < k` on every line, scattered with the stored `S_{ik}` and `S_{ki}`.
pub(crate) fn acc_fluxdiff<P: PairEval<D>, const D: usize>(
    ev: &P,
    s: &[f64],
    lines: &Lines,
    geo: ElementMetrics<'_, D>,
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let ja = &geo.metrics.ja;
    for dir in 0..D {
        let st = stride(dir, n);
        let c = geo.scale(dir);
        for &s0 in &lines.starts[dir] {
            for i in 0..n {
                let a = s0 + i * st;
                for k in i + 1..n {
                    let b = s0 + k * st;
                    if geo.cartesian {
                        let f = ev.cart(a, b, dir);
                        out[a].axpy(c * s[i * n + k], &f);
                        out[b].axpy(c * s[k * n + i], &f);
                    } else {
                        let f = ev.dir(a, b, &average(&ja[a][dir], &ja[b][dir]));
                        out[a].axpy(s[i * n + k], &f);
                        out[b].axpy(s[k * n + i], &f);
                    }
                }
            }
        }
    }
    record_pairs(ev.kind(), (D * lines.n_face * n * (n - 1) / 2) as u64);
}

/// Flux differencing with all pairs and the plain `2D`, followed by the
/// explicit subtraction of the boundary consistency term `M⁻¹ Rᵀ B N R f`.
pub(crate) fn acc_fluxdiff_two_sided<P: PairEval<D>, const D: usize>(
    ev: &P,
    d: &[f64],
    weights: &[f64],
    lines: &Lines,
    geo: ElementMetrics<'_, D>,
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let ja = &geo.metrics.ja;
    for dir in 0..D {
        let st = stride(dir, n);
        for &s0 in &lines.starts[dir] {
            for i in 0..n {
                let a = s0 + i * st;
                for k in 0..n {
                    let b = s0 + k * st;
                    let f = ev.dir(a, b, &average(&ja[a][dir], &ja[b][dir]));
                    out[a].axpy(2.0 * d[i * n + k], &f);
                }
            }
            for (i, sign) in [(0, -1.0), (n - 1, 1.0)] {
                let a = s0 + i * st;
                let f = ev.dir(a, a, &ja[a][dir]);
                out[a].axpy(-sign / weights[i], &f);
            }
        }
    }
    record_pairs(ev.kind(), (D * lines.n_face * (n * n + 2)) as u64);
}

/// Flux differencing where every pair evaluates all Cartesian fluxes and
/// combines them with the averaged metric terms.
pub(crate) fn acc_fluxdiff_cartesian_combination<P: PairEval<D>, const D: usize>(
    ev: &P,
    s: &[f64],
    lines: &Lines,
    geo: ElementMetrics<'_, D>,
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let ja = &geo.metrics.ja;
    for dir in 0..D {
        let st = stride(dir, n);
        for &s0 in &lines.starts[dir] {
            for i in 0..n {
                let a = s0 + i * st;
                for k in i + 1..n {
                    let b = s0 + k * st;
                    let alpha = average(&ja[a][dir], &ja[b][dir]);
                    let mut f = Flux::ZERO;
                    for (j, &aj) in alpha.iter().enumerate() {
                        f.axpy(aj, &ev.cart(a, b, j));
                    }
                    out[a].axpy(s[i * n + k], &f);
                    out[b].axpy(s[k * n + i], &f);
                }
            }
        }
    }
    record_pairs(ev.kind(), (D * D * lines.n_face * n * (n - 1) / 2) as u64);
}

/// Contravariant physical fluxes `f̃^n = Σ_j Ja^n_j f^j(u)` at every node, direction-major.
pub(crate) fn contravariant_fluxes<const D: usize>(recs: &[NodeRec<D>], geo: ElementMetrics<'_, D>, n_vol: usize, ft: &mut Vec<Flux<D>>) {
    ft.clear();
    for dir in 0..D {
        for (l, r) in recs.iter().enumerate().take(n_vol) {
            ft.push(directional_physical_flux_prim(&r.q, r.u.rho_e, &geo.metrics.ja[l][dir]));
        }
    }
    record_one_point((D * n_vol) as u64);
}

/// Strong form `Σ_n D_n f̃^n`.
pub(crate) fn acc_strong<const D: usize>(ft: &[Flux<D>], d: &[f64], lines: &Lines, out: &mut [Flux<D>]) {
    let n = lines.n;
    for dir in 0..D {
        let st = stride(dir, n);
        let f = &ft[dir * lines.n_vol..(dir + 1) * lines.n_vol];
        for &s0 in &lines.starts[dir] {
            for i in 0..n {
                let mut acc = Flux::ZERO;
                for k in 0..n {
                    acc.axpy(d[i * n + k], &f[s0 + k * st]);
                }
                out[s0 + i * st] += acc;
            }
        }
    }
}

/// Weak form `-Σ_n M⁻¹ D_nᵀ M f̃^n`.
pub(crate) fn acc_weak<const D: usize>(ft: &[Flux<D>], d: &[f64], weights: &[f64], lines: &Lines, out: &mut [Flux<D>]) {
    let n = lines.n;
    let n_vol = ft.len() / D;
    for dir in 0..D {
        let st = stride(dir, n);
        let f = &ft[dir * n_vol..(dir + 1) * n_vol];
        for &s0 in &lines.starts[dir] {
            for i in 0..n {
                let mut acc = Flux::ZERO;
                for k in 0..n {
                    acc.axpy(d[k * n + i] * weights[k], &f[s0 + k * st]);
                }
                out[s0 + i * st].axpy(-1.0 / weights[i], &acc);
            }
        }
    }
}

/// Degree-`q` data used by overintegration.
#[derive(Debug, Clone)]
pub(crate) struct OverintData {
    pub q: usize,
    pub interp: Vec<f64>,
    pub project: Vec<f64>,
    pub correction: Vec<f64>,
    pub d_q: Vec<f64>,
    pub weights_q: Vec<f64>,
    pub lines_q: Lines,
}

/// `project(weak volume term at degree q of interp(u))` on a Cartesian element.
pub(crate) fn acc_overintegration<const D: usize>(
    u: &[ConservedState<D>],
    p: usize,
    data: &OverintData,
    scales: [f64; D],
    gas: &GasParams,
    out: &mut [Flux<D>],
) -> Result<()> {
    let nq = data.q + 1;
    let uq = tensor::apply_all(u, D, p + 1, &data.interp, nq);
    let mut ft = Vec::with_capacity(D * uq.len());
    let mut prims = Vec::with_capacity(uq.len());
    for s in &uq {
        prims.push(crate::euler::cons2prim(s, gas)?);
    }
    for (dir, &c) in scales.iter().enumerate() {
        let mut n = [0.0; D];
        n[dir] = c;
        for (s, q) in uq.iter().zip(&prims) {
            ft.push(directional_physical_flux_prim(q, s.rho_e, &n));
        }
    }
    record_one_point((D * uq.len()) as u64);
    let mut vq = vec![Flux::ZERO; uq.len()];
    acc_weak(&ft, &data.d_q, &data.weights_q, &data.lines_q, &mut vq);
    let vp = tensor::apply_all(&vq, D, nq, &data.project, p + 1);
    for (o, v) in out.iter_mut().zip(vp) {
        *o += v;
    }
    Ok(())
}

/// Gauss-node operators in the flat form used by the kernels.
#[derive(Debug, Clone)]
pub(crate) struct GaussData {
    /// `2 Q_h` volume block, `MD - (MD)ᵀ`, row-major.
    pub s_vv: Vec<f64>,
    /// `M⁻¹ (MD - (MD)ᵀ)`, row-major.
    pub s_lifted: Vec<f64>,
    /// `2 × n` boundary interpolation, row-major.
    pub r: Vec<f64>,
    pub weights: Vec<f64>,
}

const BN: [f64; 2] = [-1.0, 1.0];

/// Entropy-projected face states `u(R w(u))` on every line, written to the
/// face slots of `recs` (which must hold the volume nodes first).
pub(crate) fn project_faces<const D: usize>(
    recs: &mut [NodeRec<D>],
    r: &[f64],
    lines: &Lines,
    with_logs: bool,
    gas: &GasParams,
) -> Result<()> {
    let n = lines.n;
    let w: Vec<EntropyVars<D>> = recs[..lines.n_vol].iter().map(|x| entropy_vars_prim(&x.q, gas)).collect();
    for dir in 0..D {
        let st = stride(dir, n);
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            for side in 0..2 {
                let mut wf = ConservedState::ZERO;
                for i in 0..n {
                    wf.axpy(r[side * n + i], &w[s0 + i * st].w);
                }
                let uf = entropy2cons(&EntropyVars { w: wf }, gas)?;
                let q = crate::euler::cons2prim(&uf, gas)?;
                recs[lines.face_index(dir, side, t)] = NodeRec::new(uf, q, with_logs);
            }
        }
    }
    Ok(())
}

/// Largest supported line length, for stack buffers.
const MAX_LINE: usize = crate::operators::MAX_DEGREE + 1;

/// Hybridized form: `f_hybrid = Σ_k 2 (Q_h)_{ik} f(ũ_i, ũ_k)` per line, lifted
/// by `M⁻¹ [I; R]ᵀ`. `face_ja` holds the boundary-interpolated metric terms
/// in face-slot order.
pub(crate) fn acc_gauss_hybridized<P: PairEval<D>, const D: usize>(
    ev: &P,
    g: &GaussData,
    lines: &Lines,
    geo: ElementMetrics<'_, D>,
    face_ja: &[[f64; D]],
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let ja = &geo.metrics.ja;
    let mut fh = [Flux::<D>::ZERO; MAX_LINE + 2];
    for dir in 0..D {
        let st = stride(dir, n);
        let c = if geo.cartesian { geo.scale(dir) } else { 1.0 };
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            fh[..n + 2].fill(Flux::ZERO);
            for i in 0..n {
                let a = s0 + i * st;
                for k in i + 1..n {
                    let b = s0 + k * st;
                    let f = if geo.cartesian {
                        ev.cart(a, b, dir)
                    } else {
                        ev.dir(a, b, &average(&ja[a][dir], &ja[b][dir]))
                    };
                    fh[i].axpy(c * g.s_vv[i * n + k], &f);
                    fh[k].axpy(c * g.s_vv[k * n + i], &f);
                }
            }
            for side in 0..2 {
                let fi = lines.face_index(dir, side, t);
                let af = &face_ja[lines.face_slot(dir, side, t)];
                for i in 0..n {
                    let a = s0 + i * st;
                    let f = if geo.cartesian { ev.cart(a, fi, dir) } else { ev.dir(a, fi, &average(&ja[a][dir], af)) };
                    let coef = c * g.r[side * n + i] * BN[side];
                    fh[i].axpy(coef, &f);
                    fh[n + side].axpy(-coef, &f);
                }
            }
            for i in 0..n {
                let mut v = fh[i];
                v.axpy(g.r[i], &fh[n]);
                v.axpy(g.r[n + i], &fh[n + 1]);
                out[s0 + i * st].axpy(1.0 / g.weights[i], &v);
            }
        }
    }
    let lines_total = (D * lines.n_face) as u64;
    record_pairs(ev.kind(), lines_total * (n * (n - 1) / 2 + 2 * n) as u64);
}

/// Correction terms `M⁻¹ [I; R]ᵀ (B_h ∘ F) 1`; every volume/face crossing is
/// evaluated once and used for both of its entries.
pub(crate) fn acc_gauss_correction<P: PairEval<D>, const D: usize>(
    ev: &P,
    g: &GaussData,
    lines: &Lines,
    geo: ElementMetrics<'_, D>,
    face_ja: &[[f64; D]],
    out: &mut [Flux<D>],
) {
    let n = lines.n;
    let ja = &geo.metrics.ja;
    let mut fv = [Flux::<D>::ZERO; MAX_LINE];
    for dir in 0..D {
        let st = stride(dir, n);
        let c = if geo.cartesian { geo.scale(dir) } else { 1.0 };
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            fv[..n].fill(Flux::ZERO);
            let mut ff = [Flux::<D>::ZERO; 2];
            for side in 0..2 {
                let fi = lines.face_index(dir, side, t);
                let af = &face_ja[lines.face_slot(dir, side, t)];
                for i in 0..n {
                    let a = s0 + i * st;
                    let f = if geo.cartesian { ev.cart(a, fi, dir) } else { ev.dir(a, fi, &average(&ja[a][dir], af)) };
                    let b = c * g.r[side * n + i] * BN[side];
                    fv[i].axpy(b, &f);
                    ff[side].axpy(-b, &f);
                }
            }
            for i in 0..n {
                let mut v = fv[i];
                v.axpy(g.r[i], &ff[0]);
                v.axpy(g.r[n + i], &ff[1]);
                out[s0 + i * st].axpy(1.0 / g.weights[i], &v);
            }
        }
    }
    record_pairs(ev.kind(), (D * lines.n_face * 2 * n) as u64);
}
