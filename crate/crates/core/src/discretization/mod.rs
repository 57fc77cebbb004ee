//! Semidiscretization on periodic structured meshes.
//!
//! `du/dt = -(VOL + SURF) / J` with the volume term selected by
//! [`VolumeScheme`]. LGL schemes compute each interface flux once; the Gauss
//! schemes evaluate their face fluxes on both sides from entropy-projected
//! face states. Every pass writes disjoint per-element chunks, so the
//! optional rayon mode is bitwise identical to the sequential one.

pub(crate) mod kernels;

mod field;

pub use field::{Layout, SolutionField};
pub use kernels::Precompute;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::euler::{cons2prim, entropy_vars_prim, ConservedState, Flux, GasParams, PrimitiveState};
use crate::fluxes::counter::{merge, record_logmean, record_two_point};
use crate::fluxes::{count_guard, surface_flux_prim, FluxCounter, FluxKind, LogVars};
use crate::geometry::{MeshGeometry, MetricTerms, StructuredMesh};
use crate::kernels_batched::{acc_fluxdiff_batched, fill_from_recs, BatchWidth, BatchedScratch, ElementSoA};
use crate::operators::{
    build_dsplit, build_hybridized, row_major, sbp_operator, transfer_matrices, FluxDiffOperator1D, HybridizedOperators1D,
    NodeFamily, SbpOperator1D, TransferMatrices, MAX_DEGREE,
};
use crate::tensor::{self, stride};
use kernels::{
    acc_fluxdiff, acc_fluxdiff_cartesian_combination, acc_fluxdiff_two_sided, acc_gauss_correction,
    acc_gauss_hybridized, acc_overintegration, acc_strong, acc_weak, contravariant_fluxes, project_faces,
    with_pairs, ElementMetrics, GaussData, Lines, NodeRec, OverintData,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VolumeScheme {
    Strong,
    Weak,
    FluxDiff,
    /// Weak form evaluated at degree `q` and projected back.
    Overintegration { q: usize },
    GaussFluxDiff,
    GaussSurfaceCorrection,
}

impl VolumeScheme {
    pub fn family(self) -> NodeFamily {
        match self {
            VolumeScheme::GaussFluxDiff | VolumeScheme::GaussSurfaceCorrection => NodeFamily::Gauss,
            _ => NodeFamily::Lgl,
        }
    }

    pub fn uses_volume_flux(self) -> bool {
        matches!(
            self,
            VolumeScheme::FluxDiff | VolumeScheme::GaussFluxDiff | VolumeScheme::GaussSurfaceCorrection
        )
    }
}

impl fmt::Display for VolumeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolumeScheme::Strong => write!(f, "strong"),
            VolumeScheme::Weak => write!(f, "weak"),
            VolumeScheme::FluxDiff => write!(f, "fluxdiff"),
            VolumeScheme::Overintegration { q } => write!(f, "overintegration({q})"),
            VolumeScheme::GaussFluxDiff => write!(f, "gauss_fluxdiff"),
            VolumeScheme::GaussSurfaceCorrection => write!(f, "gauss_surface_correction"),
        }
    }
}

impl FromStr for VolumeScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config("scheme", format!("unknown volume scheme `{s}`"));
        Ok(match s {
            "strong" => VolumeScheme::Strong,
            "weak" => VolumeScheme::Weak,
            "fluxdiff" => VolumeScheme::FluxDiff,
            "gauss_fluxdiff" => VolumeScheme::GaussFluxDiff,
            "gauss_surface_correction" => VolumeScheme::GaussSurfaceCorrection,
            _ => {
                let q = s
                    .strip_prefix("overintegration(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| s.strip_prefix("overintegration:"))
                    .ok_or_else(bad)?;
                VolumeScheme::Overintegration {
                    q: q.trim().parse().map_err(|_| bad())?,
                }
            }
        })
    }
}

impl fmt::Display for Precompute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precompute::None => "none",
            Precompute::Primitives => "primitives",
            Precompute::PrimitivesAndLogs => "primitives_and_logs",
        })
    }
}

impl FromStr for Precompute {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Precompute::None),
            "primitives" => Ok(Precompute::Primitives),
            "primitives_and_logs" | "logs" => Ok(Precompute::PrimitivesAndLogs),
            other => Err(Error::config("precompute", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsConfig {
    pub volume_scheme: VolumeScheme,
    pub volume_flux: FluxKind,
    pub surface_flux: FluxKind,
    pub precompute: Precompute,
    /// Element-parallel evaluation with rayon.
    pub parallel: bool,
    /// Lane width of the batched flux-differencing kernel; `None` uses the scalar kernel.
    pub batch: Option<BatchWidth>,
}

impl Default for RhsConfig {
    fn default() -> Self {
        Self {
            volume_scheme: VolumeScheme::FluxDiff,
            volume_flux: FluxKind::RanochaEc,
            surface_flux: FluxKind::RanochaEc,
            precompute: Precompute::Primitives,
            parallel: false,
            batch: None,
        }
    }
}

impl RhsConfig {
    pub fn new(volume_scheme: VolumeScheme, volume_flux: FluxKind, surface_flux: FluxKind) -> Self {
        Self {
            volume_scheme,
            volume_flux,
            surface_flux,
            ..Self::default()
        }
    }

    pub fn with_precompute(mut self, precompute: Precompute) -> Self {
        self.precompute = precompute;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn with_batch(mut self, batch: Option<BatchWidth>) -> Self {
        self.batch = batch;
        self
    }

    /// Checks the combination against the degree and the mesh type.
    pub fn validate(&self, degree: usize, cartesian: bool) -> Result<()> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::config("p", format!("degree must be in 1..={MAX_DEGREE}, got {degree}")));
        }
        if self.volume_scheme.uses_volume_flux() && !self.volume_flux.is_symmetric() {
            return Err(Error::config(
                "volume_flux",
                format!("{} needs a symmetric two-point flux, got {}", self.volume_scheme, self.volume_flux),
            ));
        }
        if self.batch.is_some() && self.volume_scheme != VolumeScheme::FluxDiff {
            return Err(Error::config("batch_width", format!("the batched kernel implements fluxdiff only, not {}", self.volume_scheme)));
        }
        if let VolumeScheme::Overintegration { q } = self.volume_scheme {
            if q < degree || q > MAX_DEGREE {
                return Err(Error::config("scheme", format!("overintegration degree {q} must be in {degree}..={MAX_DEGREE}")));
            }
            if !cartesian {
                return Err(Error::config("mesh", "overintegration is only supported on Cartesian meshes"));
            }
        }
        Ok(())
    }
}

/// Primitive variables (and optionally their logarithms) of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedElementData<const D: usize> {
    pub prims: Vec<PrimitiveState<D>>,
    pub logs: Option<Vec<LogVars>>,
}

impl<const D: usize> PrecomputedElementData<D> {
    pub fn mode(&self) -> Precompute {
        if self.logs.is_some() {
            Precompute::PrimitivesAndLogs
        } else {
            Precompute::Primitives
        }
    }
}

pub fn precompute_element_data<const D: usize>(
    u: &[ConservedState<D>],
    gas: &GasParams,
    mode: Precompute,
) -> Result<PrecomputedElementData<D>> {
    let prims = u
        .iter()
        .map(|s| cons2prim(s, gas))
        .collect::<Result<Vec<_>>>()?;
    let logs = (mode == Precompute::PrimitivesAndLogs).then(|| prims.iter().map(LogVars::of).collect());
    Ok(PrecomputedElementData { prims, logs })
}

/// Volume-node records for the element-level entry points.
fn element_recs<const D: usize>(
    u: &[ConservedState<D>],
    gas: &GasParams,
    pre: Option<&PrecomputedElementData<D>>,
    extra: usize,
) -> Result<(Vec<NodeRec<D>>, Precompute)> {
    let mut recs = Vec::with_capacity(u.len() + extra);
    let mode = match pre {
        Some(data) => {
            if data.prims.len() != u.len() {
                return Err(Error::Parameter {
                    name: "precomputed data",
                    reason: format!("{} entries for {} nodes", data.prims.len(), u.len()),
                });
            }
            for (l, s) in u.iter().enumerate() {
                let lv = data.logs.as_ref().map(|v| v[l]).unwrap_or(LogVars { log_rho: 0.0, log_p: 0.0 });
                recs.push(NodeRec { u: *s, q: data.prims[l], l: lv });
            }
            data.mode()
        }
        None => {
            for s in u {
                recs.push(NodeRec::new(*s, cons2prim(s, gas)?, false));
            }
            Precompute::None
        }
    };
    recs.resize(u.len() + extra, NodeRec::EMPTY);
    Ok((recs, mode))
}

fn node_count<const D: usize>(u: &[ConservedState<D>], degree: usize) -> Result<Lines> {
    let lines = Lines::new::<D>(degree + 1);
    if u.len() != lines.n_vol {
        return Err(Error::Parameter {
            name: "element",
            reason: format!("expected {} nodes, got {}", lines.n_vol, u.len()),
        });
    }
    Ok(lines)
}

fn divide_by_jacobian<const D: usize>(mut out: Vec<Flux<D>>, metrics: &MetricTerms<D>) -> Vec<Flux<D>> {
    for (o, &j) in out.iter_mut().zip(&metrics.jac) {
        *o = *o * (1.0 / j);
    }
    out
}

/// Whether all contravariant vectors equal the same scaled unit vectors.
pub fn is_cartesian_metrics<const D: usize>(metrics: &MetricTerms<D>) -> bool {
    let m0 = metrics.ja[0];
    (0..D).all(|n| (0..D).all(|j| n == j || m0[n][j] == 0.0)) && metrics.ja.iter().all(|m| *m == m0)
}

fn element_metrics<const D: usize>(metrics: &MetricTerms<D>) -> ElementMetrics<'_, D> {
    ElementMetrics { metrics, cartesian: is_cartesian_metrics(metrics) }
}

/// Strong-form volume term `Σ_n D_n f̃^n / J`.
pub fn volume_strong<const D: usize>(
    u: &[ConservedState<D>],
    op: &SbpOperator1D,
    metrics: &MetricTerms<D>,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    let (recs, _) = element_recs(u, gas, None, 0)?;
    let mut ft = Vec::new();
    contravariant_fluxes(&recs, element_metrics(metrics), lines.n_vol, &mut ft);
    let mut out = vec![Flux::ZERO; lines.n_vol];
    acc_strong(&ft, &op.derivative_row_major(), &lines, &mut out);
    Ok(divide_by_jacobian(out, metrics))
}

/// Weak-form volume term `-Σ_n M⁻¹ D_nᵀ M f̃^n / J`.
pub fn volume_weak<const D: usize>(
    u: &[ConservedState<D>],
    op: &SbpOperator1D,
    metrics: &MetricTerms<D>,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    let (recs, _) = element_recs(u, gas, None, 0)?;
    let mut ft = Vec::new();
    contravariant_fluxes(&recs, element_metrics(metrics), lines.n_vol, &mut ft);
    let mut out = vec![Flux::ZERO; lines.n_vol];
    acc_weak(&ft, &op.derivative_row_major(), &op.weights, &lines, &mut out);
    Ok(divide_by_jacobian(out, metrics))
}

/// Flux-differencing volume term with the split operator, divided by `J`.
/// Cartesian elements use Cartesian fluxes, curved ones directional fluxes
/// in the averaged metric directions.
pub fn volume_fluxdiff<const D: usize>(
    u: &[ConservedState<D>],
    op: &FluxDiffOperator1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
    pre: Option<&PrecomputedElementData<D>>,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    let (recs, mode) = element_recs(u, gas, pre, 0)?;
    let mut out = vec![Flux::ZERO; lines.n_vol];
    let geo = element_metrics(metrics);
    with_pairs!(volume_flux, mode, &recs, gas, |ev| {
        acc_fluxdiff(&ev, &op.dsplit_flat, &lines, geo, &mut out);
        Ok(())
    })?;
    Ok(divide_by_jacobian(out, metrics))
}

/// Flux differencing summed over all pairs with `2D`, minus the boundary
/// consistency term; algebraically equal to [`volume_fluxdiff`].
pub fn volume_fluxdiff_two_sided<const D: usize>(
    u: &[ConservedState<D>],
    op: &SbpOperator1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    let (recs, _) = element_recs(u, gas, None, 0)?;
    let mut out = vec![Flux::ZERO; lines.n_vol];
    let geo = ElementMetrics { metrics, cartesian: false };
    let d = op.derivative_row_major();
    with_pairs!(volume_flux, Precompute::Primitives, &recs, gas, |ev| {
        acc_fluxdiff_two_sided(&ev, &d, &op.weights, &lines, geo, &mut out);
        Ok(())
    })?;
    Ok(divide_by_jacobian(out, metrics))
}

/// Flux differencing that evaluates Cartesian fluxes and combines them
/// with the averaged metric terms.
pub fn volume_fluxdiff_cartesian_combination<const D: usize>(
    u: &[ConservedState<D>],
    op: &FluxDiffOperator1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    let (recs, _) = element_recs(u, gas, None, 0)?;
    let mut out = vec![Flux::ZERO; lines.n_vol];
    let geo = ElementMetrics { metrics, cartesian: false };
    with_pairs!(volume_flux, Precompute::Primitives, &recs, gas, |ev| {
        acc_fluxdiff_cartesian_combination(&ev, &op.dsplit_flat, &lines, geo, &mut out);
        Ok(())
    })?;
    Ok(divide_by_jacobian(out, metrics))
}

fn overint_data(transfer: &TransferMatrices, family: NodeFamily, dims: usize) -> Result<OverintData> {
    let op_q = sbp_operator(family, transfer.q)?;
    let lines_q = match dims {
        2 => Lines::new::<2>(transfer.q + 1),
        _ => Lines::new::<3>(transfer.q + 1),
    };
    Ok(OverintData {
        q: transfer.q,
        interp: row_major(&transfer.interp),
        project: row_major(&transfer.project),
        correction: row_major(&transfer.mass_correction),
        d_q: op_q.derivative_row_major(),
        weights_q: op_q.weights.clone(),
        lines_q,
    })
}

fn cartesian_scales<const D: usize>(metrics: &MetricTerms<D>) -> Result<[f64; D]> {
    if !is_cartesian_metrics(metrics) {
        return Err(Error::config("mesh", "overintegration is only supported on Cartesian meshes"));
    }
    Ok(std::array::from_fn(|n| metrics.ja[0][n][n]))
}

/// Weak-form volume term at degree `q` projected back to degree `p`, divided by `J`.
pub fn volume_overintegration<const D: usize>(
    u: &[ConservedState<D>],
    op: &SbpOperator1D,
    transfer: &TransferMatrices,
    metrics: &MetricTerms<D>,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, op.degree)?;
    if transfer.p != op.degree {
        return Err(Error::Parameter {
            name: "transfer",
            reason: format!("built for degree {}, operator has degree {}", transfer.p, op.degree),
        });
    }
    let scales = cartesian_scales(metrics)?;
    let data = overint_data(transfer, op.family, D)?;
    let mut out = vec![Flux::ZERO; lines.n_vol];
    acc_overintegration(u, op.degree, &data, scales, gas, &mut out)?;
    Ok(divide_by_jacobian(out, metrics))
}

fn gauss_data(hyb: &HybridizedOperators1D) -> GaussData {
    let n = hyb.degree + 1;
    let mut s_vv = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            s_vv[i * n + k] = 2.0 * hyb.q_h[(i, k)];
        }
    }
    GaussData {
        s_vv,
        s_lifted: hyb.volume_skew.dsplit_flat.clone(),
        r: hyb.boundary_interp.clone(),
        weights: hyb.weights.clone(),
    }
}

/// Boundary-interpolated contravariant vectors `R Ja^n` in face-slot order.
fn gauss_face_metrics<const D: usize>(metrics: &MetricTerms<D>, r: &[f64], lines: &Lines, cartesian: bool) -> Vec<[f64; D]> {
    let n = lines.n;
    let mut out = vec![[0.0; D]; 2 * D * lines.n_face];
    for dir in 0..D {
        let st = stride(dir, n);
        for (t, &s0) in lines.starts[dir].iter().enumerate() {
            for side in 0..2 {
                out[lines.face_slot(dir, side, t)] = if cartesian {
                    metrics.ja[0][dir]
                } else {
                    let mut a = [0.0; D];
                    for i in 0..n {
                        for (j, aj) in a.iter_mut().enumerate() {
                            *aj += r[side * n + i] * metrics.ja[s0 + i * st][dir][j];
                        }
                    }
                    a
                };
            }
        }
    }
    out
}

/// Entropy projection `ũ = [u; u(R w(u))]` on Gauss nodes. The face states
/// follow the volume states, ordered by direction, then side (-1 before +1),
/// then face node.
pub fn entropy_projection<const D: usize>(
    u: &[ConservedState<D>],
    op: &SbpOperator1D,
    gas: &GasParams,
) -> Result<Vec<ConservedState<D>>> {
    if op.family != NodeFamily::Gauss {
        return Err(Error::UnsupportedOperator("entropy projection needs Gauss operators".into()));
    }
    let lines = node_count(u, op.degree)?;
    let (mut recs, _) = element_recs(u, gas, None, 2 * D * lines.n_face)?;
    project_faces(&mut recs, &row_major(&op.boundary_interp), &lines, false, gas)?;
    Ok(recs.into_iter().map(|r| r.u).collect())
}

fn gauss_volume<const D: usize>(
    u: &[ConservedState<D>],
    hyb: &HybridizedOperators1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
    correction_form: bool,
) -> Result<Vec<Flux<D>>> {
    let lines = node_count(u, hyb.degree)?;
    let (mut recs, _) = element_recs(u, gas, None, 2 * D * lines.n_face)?;
    project_faces(&mut recs, &hyb.boundary_interp, &lines, false, gas)?;
    let geo = element_metrics(metrics);
    let face_ja = gauss_face_metrics(metrics, &hyb.boundary_interp, &lines, geo.cartesian);
    let g = gauss_data(hyb);
    let mut out = vec![Flux::ZERO; lines.n_vol];
    with_pairs!(volume_flux, Precompute::Primitives, &recs, gas, |ev| {
        if correction_form {
            acc_fluxdiff(&ev, &g.s_lifted, &lines, geo, &mut out);
            acc_gauss_correction(&ev, &g, &lines, geo, &face_ja, &mut out);
        } else {
            acc_gauss_hybridized(&ev, &g, &lines, geo, &face_ja, &mut out);
        }
        Ok(())
    })?;
    Ok(divide_by_jacobian(out, metrics))
}

/// Hybridized Gauss flux differencing `M⁻¹ [I; R]ᵀ f_hybrid / J`.
pub fn volume_gauss_fluxdiff<const D: usize>(
    u: &[ConservedState<D>],
    hyb: &HybridizedOperators1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    gauss_volume(u, hyb, metrics, volume_flux, gas, false)
}

/// Skew volume term plus surface corrections `M⁻¹ [I; R]ᵀ f_corr`, divided by `J`.
pub fn volume_gauss_surface_correction<const D: usize>(
    u: &[ConservedState<D>],
    hyb: &HybridizedOperators1D,
    metrics: &MetricTerms<D>,
    volume_flux: FluxKind,
    gas: &GasParams,
) -> Result<Vec<Flux<D>>> {
    gauss_volume(u, hyb, metrics, volume_flux, gas, true)
}

/// Operators needed by one configuration.
#[derive(Debug, Clone)]
pub struct Operators {
    pub sbp: SbpOperator1D,
    pub dsplit: Option<FluxDiffOperator1D>,
    pub hybridized: Option<HybridizedOperators1D>,
    pub transfer: Option<TransferMatrices>,
    d_flat: Vec<f64>,
    gauss: Option<GaussData>,
    overint: Option<OverintData>,
}

impl Operators {
    pub fn new(degree: usize, scheme: VolumeScheme, dims: usize) -> Result<Self> {
        let sbp = sbp_operator(scheme.family(), degree)?;
        let dsplit = (scheme.family() == NodeFamily::Lgl).then(|| build_dsplit(&sbp)).transpose()?;
        let hybridized = (scheme.family() == NodeFamily::Gauss).then(|| build_hybridized(&sbp));
        let transfer = match scheme {
            VolumeScheme::Overintegration { q } => Some(transfer_matrices(degree, q, NodeFamily::Lgl)?),
            _ => None,
        };
        let overint = transfer.as_ref().map(|t| overint_data(t, NodeFamily::Lgl, dims)).transpose()?;
        Ok(Self {
            d_flat: sbp.derivative_row_major(),
            gauss: hybridized.as_ref().map(gauss_data),
            sbp,
            dsplit,
            hybridized,
            transfer,
            overint,
        })
    }
}

/// Which parts of the residual an evaluation includes.
#[derive(Debug, Clone, Copy)]
struct Parts {
    volume: bool,
    surface: bool,
}

#[derive(Default)]
struct Scratch<const D: usize> {
    out: Vec<Flux<D>>,
    surf: Vec<Flux<D>>,
    ft: Vec<Flux<D>>,
    u: Vec<ConservedState<D>>,
    soa: Option<ElementSoA<D>>,
    batched: BatchedScratch,
}

/// A configured semidiscretization: mesh, geometry, operators and gas.
#[derive(Debug, Clone)]
pub struct Discretization<const D: usize> {
    pub mesh: StructuredMesh<D>,
    pub geometry: MeshGeometry<D>,
    pub ops: Operators,
    pub config: RhsConfig,
    pub gas: GasParams,
    lines: Lines,
    /// Tensor-product quadrature weights per node.
    node_weights: Vec<f64>,
    /// Volume node of each face slot.
    face_nodes: Vec<usize>,
    /// Per element, the contravariant vector `Ja^n` on each face slot.
    face_ja: Vec<Vec<[f64; D]>>,
}

impl<const D: usize> Discretization<D> {
    pub fn new(mesh: StructuredMesh<D>, degree: usize, config: RhsConfig, gas: GasParams) -> Result<Self> {
        config.validate(degree, mesh.is_cartesian())?;
        let ops = Operators::new(degree, config.volume_scheme, D)?;
        let geometry = MeshGeometry::new(&mesh, &ops.sbp)?;
        let n = degree + 1;
        let lines = Lines::new::<D>(n);
        let node_weights = (0..lines.n_vol)
            .map(|l| tensor::multi::<D>(l, n).iter().map(|&i| ops.sbp.weights[i]).product())
            .collect();
        let mut face_nodes = vec![0; 2 * D * lines.n_face];
        for dir in 0..D {
            for side in 0..2 {
                for (t, l) in tensor::face_nodes::<D>(dir, side, n).into_iter().enumerate() {
                    face_nodes[lines.face_slot(dir, side, t)] = l;
                }
            }
        }
        let face_ja = geometry
            .elements
            .iter()
            .map(|g| match ops.sbp.family {
                NodeFamily::Lgl => {
                    let mut a = vec![[0.0; D]; face_nodes.len()];
                    for dir in 0..D {
                        for side in 0..2 {
                            for t in 0..lines.n_face {
                                let s = lines.face_slot(dir, side, t);
                                a[s] = g.metrics.ja[face_nodes[s]][dir];
                            }
                        }
                    }
                    a
                }
                NodeFamily::Gauss => gauss_face_metrics(&g.metrics, &ops.hybridized.as_ref().unwrap().boundary_interp, &lines, geometry.cartesian),
            })
            .collect();
        Ok(Self {
            mesh,
            geometry,
            ops,
            config,
            gas,
            lines,
            node_weights,
            face_nodes,
            face_ja,
        })
    }

    pub fn degree(&self) -> usize {
        self.ops.sbp.degree
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.lines.n_vol
    }

    /// Degrees of freedom, one per volume node.
    pub fn dofs(&self) -> usize {
        self.n_elements() * self.nodes_per_element()
    }

    pub fn node_weight(&self, l: usize) -> f64 {
        self.node_weights[l]
    }

    /// `M_l J_l` for node `l` of element `e`.
    pub fn mass_jacobian(&self, e: usize, l: usize) -> f64 {
        self.node_weights[l] * self.geometry.elements[e].metrics.jac[l]
    }

    pub fn zeros(&self, layout: Layout) -> SolutionField<D> {
        SolutionField::zeros(self.n_elements(), self.nodes_per_element(), layout)
    }

    /// Nodal interpolation of a function of the physical coordinates.
    pub fn interpolate(&self, layout: Layout, f: impl Fn(&[f64; D]) -> ConservedState<D>) -> SolutionField<D> {
        SolutionField::from_fn(self.n_elements(), self.nodes_per_element(), layout, |e, l| {
            f(&self.geometry.elements[e].coords[l])
        })
    }

    /// `du = -(VOL + SURF) / J`.
    pub fn rhs(&self, u: &SolutionField<D>, du: &mut SolutionField<D>) -> Result<()> {
        u.check_shape(du)?;
        let res = self.evaluate(u, Parts { volume: true, surface: true })?;
        write_field(du, &res, -1.0);
        Ok(())
    }

    /// `VOL / J` alone.
    pub fn volume_terms(&self, u: &SolutionField<D>) -> Result<SolutionField<D>> {
        let res = self.evaluate(u, Parts { volume: true, surface: false })?;
        let mut out = self.zeros(u.layout());
        write_field(&mut out, &res, 1.0);
        Ok(out)
    }

    /// `SURF / J` alone.
    pub fn surface_terms(&self, u: &SolutionField<D>) -> Result<SolutionField<D>> {
        let res = self.evaluate(u, Parts { volume: false, surface: true })?;
        let mut out = self.zeros(u.layout());
        write_field(&mut out, &res, 1.0);
        Ok(out)
    }

    fn check_field(&self, u: &SolutionField<D>) -> Result<()> {
        if u.n_elements() != self.n_elements() || u.nodes_per_element() != self.nodes_per_element() {
            return Err(Error::Parameter {
                name: "field",
                reason: format!(
                    "field has {}×{} nodes, discretization {}×{}",
                    u.n_elements(),
                    u.nodes_per_element(),
                    self.n_elements(),
                    self.nodes_per_element()
                ),
            });
        }
        Ok(())
    }

    /// Runs `f` on consecutive chunks of `buf`, in parallel if configured,
    /// carrying flux counts back to the calling thread.
    fn run_chunks<T: Send, S>(
        &self,
        buf: &mut [T],
        chunk: usize,
        init: impl Fn() -> S + Sync + Send,
        f: impl Fn(usize, &mut [T], &mut S) -> Result<()> + Sync + Send,
    ) -> Result<()> {
        if self.config.parallel {
            let total = buf
                .par_chunks_mut(chunk)
                .enumerate()
                .map_init(&init, |s, (i, c)| {
                    let g = count_guard();
                    f(i, c, s).map(|_| g.take())
                })
                .try_reduce(FluxCounter::default, |a, b| Ok(a + b))?;
            merge(total);
            Ok(())
        } else {
            let mut s = init();
            for (i, c) in buf.chunks_mut(chunk).enumerate() {
                f(i, c, &mut s)?;
            }
            Ok(())
        }
    }

    fn evaluate(&self, u: &SolutionField<D>, parts: Parts) -> Result<Vec<Flux<D>>> {
        self.check_field(u)?;
        let k = self.n_elements();
        let npe = self.lines.n_vol;
        let npf = self.lines.n_face;
        let chunk = npe + 2 * D * npf;
        let logs = self.config.precompute == Precompute::PrimitivesAndLogs;
        let gauss = self.ops.sbp.family == NodeFamily::Gauss;
        let gas = &self.gas;

        // nodal primitives and face states
        let mut recs = vec![NodeRec::<D>::EMPTY; k * chunk];
        self.run_chunks(&mut recs, chunk, || (), |e, c, _| {
            for l in 0..npe {
                let s = u.state(e, l);
                let q = cons2prim(&s, gas).map_err(|err| err.at_node(e, l))?;
                c[l] = NodeRec::new(s, q, logs);
            }
            if gauss {
                let r = &self.ops.hybridized.as_ref().unwrap().boundary_interp;
                project_faces(c, r, &self.lines, logs, gas).map_err(|err| err.at_node(e, 0))?;
            } else {
                for (slot, &l) in self.face_nodes.iter().enumerate() {
                    c[npe + slot] = c[l];
                }
            }
            Ok(())
        })?;

        // LGL interface fluxes, once per face
        let mut iflux = Vec::new();
        if parts.surface && !gauss {
            iflux = vec![Flux::<D>::ZERO; D * k * npf];
            let kind = self.config.surface_flux;
            self.run_chunks(&mut iflux, npf, || (), |idx, c, _| {
                let (dir, e) = (idx / k, idx % k);
                let nb = self.mesh.neighbor(e, dir, 1);
                let ja = &self.face_ja[e];
                for (t, f) in c.iter_mut().enumerate() {
                    let l = &recs[e * chunk + self.lines.face_index(dir, 1, t)];
                    let r = &recs[nb * chunk + self.lines.face_index(dir, 0, t)];
                    *f = surface_flux_prim(kind, &l.u, &l.q, &r.u, &r.q, &ja[self.lines.face_slot(dir, 1, t)], gas);
                }
                record_flux_evals(kind, npf as u64);
                Ok(())
            })?;
        }

        let mut res = vec![Flux::<D>::ZERO; k * npe];
        self.run_chunks(&mut res, npe, Scratch::<D>::default, |e, c, scr| {
            self.element_pass(e, &recs, chunk, &iflux, parts, c, scr)
        })?;
        Ok(res)
    }

    #[allow(clippy::too_many_arguments)]
    fn element_pass(
        &self,
        e: usize,
        recs: &[NodeRec<D>],
        chunk: usize,
        iflux: &[Flux<D>],
        parts: Parts,
        dst: &mut [Flux<D>],
        scr: &mut Scratch<D>,
    ) -> Result<()> {
        let npe = self.lines.n_vol;
        let n = self.lines.n;
        let rec = &recs[e * chunk..(e + 1) * chunk];
        let metrics = &self.geometry.elements[e].metrics;
        let geo = ElementMetrics { metrics, cartesian: self.geometry.cartesian };
        let gas = &self.gas;
        let scheme = self.config.volume_scheme;
        scr.out.clear();
        scr.out.resize(npe, Flux::ZERO);
        if scheme == VolumeScheme::Strong || scheme == VolumeScheme::Weak {
            contravariant_fluxes(rec, geo, npe, &mut scr.ft);
        }

        if parts.volume {
            let out = &mut scr.out;
            let mode = self.config.precompute;
            let vf = self.config.volume_flux;
            match scheme {
                VolumeScheme::Strong => acc_strong(&scr.ft, &self.ops.d_flat, &self.lines, out),
                VolumeScheme::Weak => acc_weak(&scr.ft, &self.ops.d_flat, &self.ops.sbp.weights, &self.lines, out),
                VolumeScheme::FluxDiff if self.config.batch.is_some() => {
                    let ds = &self.ops.dsplit.as_ref().unwrap().dsplit_flat;
                    let logs = mode == Precompute::PrimitivesAndLogs;
                    fill_from_recs(&mut scr.soa, &rec[..npe], self.config.batch.unwrap(), logs, gas);
                    let soa = scr.soa.as_ref().unwrap();
                    acc_fluxdiff_batched(soa, ds, &self.lines, metrics, vf, gas, &mut scr.batched, out)?
                }
                VolumeScheme::FluxDiff => {
                    let ds = &self.ops.dsplit.as_ref().unwrap().dsplit_flat;
                    with_pairs!(vf, mode, rec, gas, |ev| {
                        acc_fluxdiff(&ev, ds, &self.lines, geo, out);
                        Ok(())
                    })?
                }
                VolumeScheme::Overintegration { .. } => {
                    scr.u.clear();
                    scr.u.extend(rec[..npe].iter().map(|r| r.u));
                    let scales = std::array::from_fn(|d| metrics.ja[0][d][d]);
                    acc_overintegration(&scr.u, self.degree(), self.ops.overint.as_ref().unwrap(), scales, gas, out)
                        .map_err(|err| err.at_node(e, 0))?
                }
                VolumeScheme::GaussFluxDiff => {
                    let g = self.ops.gauss.as_ref().unwrap();
                    with_pairs!(vf, mode, rec, gas, |ev| {
                        acc_gauss_hybridized(&ev, g, &self.lines, geo, &self.face_ja[e], out);
                        Ok(())
                    })?
                }
                VolumeScheme::GaussSurfaceCorrection => {
                    let g = self.ops.gauss.as_ref().unwrap();
                    with_pairs!(vf, mode, rec, gas, |ev| {
                        acc_fluxdiff(&ev, &g.s_lifted, &self.lines, geo, out);
                        acc_gauss_correction(&ev, g, &self.lines, geo, &self.face_ja[e], out);
                        Ok(())
                    })?
                }
            }
        }

        if parts.surface {
            let overint = matches!(scheme, VolumeScheme::Overintegration { .. });
            let target = if overint {
                scr.surf.clear();
                scr.surf.resize(npe, Flux::ZERO);
                &mut scr.surf
            } else {
                &mut scr.out
            };
            if self.ops.sbp.family == NodeFamily::Lgl {
                let k = self.n_elements();
                let npf = self.lines.n_face;
                let (w0, wp) = (self.ops.sbp.weights[0], self.ops.sbp.weights[n - 1]);
                let strong = scheme == VolumeScheme::Strong;
                for dir in 0..D {
                    let left = self.mesh.neighbor(e, dir, 0);
                    for t in 0..npf {
                        let a = self.face_nodes[self.lines.face_slot(dir, 1, t)];
                        let b = self.face_nodes[self.lines.face_slot(dir, 0, t)];
                        target[a].axpy(1.0 / wp, &iflux[(dir * k + e) * npf + t]);
                        target[b].axpy(-1.0 / w0, &iflux[(dir * k + left) * npf + t]);
                        if strong {
                            target[a].axpy(-1.0 / wp, &scr.ft[dir * npe + a]);
                            target[b].axpy(1.0 / w0, &scr.ft[dir * npe + b]);
                        }
                    }
                }
            } else {
                self.gauss_surface(e, recs, chunk, target);
            }
            if overint {
                let data = self.ops.overint.as_ref().unwrap();
                let corrected = tensor::apply_all(&scr.surf, D, n, &data.correction, n);
                for (o, s) in scr.out.iter_mut().zip(corrected) {
                    *o += s;
                }
            }
        }

        for ((d, o), &j) in dst.iter_mut().zip(&scr.out).zip(&metrics.jac) {
            *d = *o * (1.0 / j);
        }
        Ok(())
    }

    /// Face fluxes of one Gauss element, both sides evaluated here, lifted with `M⁻¹ Rᵀ B`.
    fn gauss_surface(&self, e: usize, recs: &[NodeRec<D>], chunk: usize, out: &mut [Flux<D>]) {
        let n = self.lines.n;
        let g = self.ops.gauss.as_ref().unwrap();
        let kind = self.config.surface_flux;
        let gas = &self.gas;
        for dir in 0..D {
            let st = stride(dir, n);
            let right = self.mesh.neighbor(e, dir, 1);
            let left = self.mesh.neighbor(e, dir, 0);
            for (t, &s0) in self.lines.starts[dir].iter().enumerate() {
                let plus = self.lines.face_index(dir, 1, t);
                let minus = self.lines.face_index(dir, 0, t);
                let slot = self.lines.face_slot(dir, 1, t);
                let (a, b) = (&recs[e * chunk + plus], &recs[right * chunk + minus]);
                let fp = surface_flux_prim(kind, &a.u, &a.q, &b.u, &b.q, &self.face_ja[e][slot], gas);
                let (a, b) = (&recs[left * chunk + plus], &recs[e * chunk + minus]);
                let fm = surface_flux_prim(kind, &a.u, &a.q, &b.u, &b.q, &self.face_ja[left][slot], gas);
                for i in 0..n {
                    let o = &mut out[s0 + i * st];
                    o.axpy(g.r[n + i] / g.weights[i], &fp);
                    o.axpy(-g.r[i] / g.weights[i], &fm);
                }
            }
        }
        record_flux_evals(kind, (2 * D * self.lines.n_face) as u64);
    }

    /// `Σ M J u` per conserved variable.
    pub fn integrate_conserved(&self, u: &SolutionField<D>) -> ConservedState<D> {
        let mut acc = ConservedState::ZERO;
        for e in 0..self.n_elements() {
            for l in 0..self.nodes_per_element() {
                acc.axpy(self.mass_jacobian(e, l), &u.state(e, l));
            }
        }
        acc
    }

    /// `Σ M J w(u)·du` and its normalization `Σ M J Σ_v |w_v du_v|`.
    pub fn entropy_rate(&self, u: &SolutionField<D>, du: &SolutionField<D>) -> Result<(f64, f64)> {
        let mut rate = 0.0;
        let mut scale = 0.0;
        for e in 0..self.n_elements() {
            for l in 0..self.nodes_per_element() {
                let q = cons2prim(&u.state(e, l), &self.gas).map_err(|err| err.at_node(e, l))?;
                let w = entropy_vars_prim(&q, &self.gas).w;
                let d = du.state(e, l);
                let mj = self.mass_jacobian(e, l);
                rate += mj * w.dot(&d);
                scale += mj * (0..D + 2).map(|v| (w[v] * d[v]).abs()).sum::<f64>();
            }
        }
        Ok((rate, scale))
    }

    /// Largest admissible time step scale `min J^{1/d} / λ_max` over all nodes.
    pub fn min_length_over_speed(&self, u: &SolutionField<D>) -> Result<f64> {
        let mut m = f64::INFINITY;
        for e in 0..self.n_elements() {
            for l in 0..self.nodes_per_element() {
                let lam = crate::euler::max_signal_speed(&u.state(e, l), &self.gas).map_err(|err| err.at_node(e, l))?;
                let h = self.geometry.elements[e].metrics.jac[l].powf(1.0 / D as f64);
                m = m.min(h / lam);
            }
        }
        Ok(m)
    }
}

fn record_flux_evals(kind: FluxKind, n: u64) {
    record_two_point(n);
    let lm = kind.logmeans_per_eval();
    if lm > 0 {
        record_logmean(n * lm);
    }
}

fn write_field<const D: usize>(dst: &mut SolutionField<D>, res: &[Flux<D>], factor: f64) {
    let npe = dst.nodes_per_element();
    for (idx, r) in res.iter().enumerate() {
        dst.set_state(idx / npe, idx % npe, &(*r * factor));
    }
}
